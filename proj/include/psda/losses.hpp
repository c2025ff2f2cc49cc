#pragma once

#include <cstddef>
#include <span>

#include "psda/autodiff.hpp"

// Scalar objectives of the pseudo-source adaptation method. All return
// (1 x 1) tensors except prediction_entropy, which is per sample.
namespace psda::losses {

// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before any log.
inline constexpr double kProbClamp = 1e-12;

// Rows of the smoothed one-hot target: (1 - gamma) + gamma / K on the true
// class and gamma / K elsewhere. Throws ConfigError unless gamma in [0, 1).
Matrix smoothed_targets(std::span<const std::size_t> labels, std::size_t num_classes,
                        double gamma);

// Batch mean of -sum_k q_k log softmax(logits)_k for soft target rows q.
ad::Tensor soft_cross_entropy(ad::Tape& tape, const ad::Tensor& logits, const Matrix& targets);

// Plain cross-entropy against hard labels.
ad::Tensor cross_entropy(ad::Tape& tape, const ad::Tensor& logits,
                         std::span<const std::size_t> labels);

// Source training objective with label smoothing.
ad::Tensor label_smoothed_ce(ad::Tape& tape, const ad::Tensor& logits,
                             std::span<const std::size_t> labels, double gamma);

// H_i = -sum_k p_ik log p_ik, (B x 1), each entry in [0, ln K].
ad::Tensor prediction_entropy(ad::Tape& tape, const ad::Tensor& logits);

// sum_k m1_k log m1_k + sum_k m2_k log m2_k where m1, m2 are the batch-mean
// softmax outputs of the frozen head and the target head on the same target
// features. Minimum -2 ln K at uniform means.
ad::Tensor diversity_loss(ad::Tape& tape, const ad::Tensor& frozen_head_logits,
                          const ad::Tensor& target_head_logits);

// Batch mean of CE(p_s, p_t) + CE(p_t, p_s), CE(p, q) = -sum p log q, where
// p_s and p_t are the softmax outputs of the two heads.
ad::Tensor constrain_loss(ad::Tape& tape, const ad::Tensor& frozen_head_logits,
                          const ad::Tensor& target_head_logits);

// Discriminator binary cross-entropy: -mean log D(pseudo-source)
// - mean log(1 - D(remaining)). D minimizes it; the feature extractor sees
// it through a gradient reversal layer.
ad::Tensor adversarial_loss(ad::Tape& tape, const ad::Tensor& d_pseudo_source,
                            const ad::Tensor& d_remaining);

// CE of the target model on the augmented pseudo-source batch against soft
// labels plus CE on the remaining batch against regenerated hard labels.
ad::Tensor classification_loss(ad::Tape& tape, const ad::Tensor& pseudo_source_logits,
                               const Matrix& soft_labels, const ad::Tensor& remaining_logits,
                               std::span<const std::size_t> remaining_labels);

}  // namespace psda::losses
