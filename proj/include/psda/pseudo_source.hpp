#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "psda/matrix.hpp"
#include "psda/nets.hpp"
#include "psda/rng.hpp"

// Pseudo-source domain generation: per-class entropy ranking of a target
// minibatch through the frozen source model, plus mixup enlargement.
namespace psda {

// Frozen-source view of one minibatch.
struct SourceScores {
    std::vector<std::size_t> labels;  // argmax, ties to the lowest class
    std::vector<double> entropy;      // prediction entropy per row
};

// Partition of a minibatch. Indices refer to rows of the originating batch.
struct DomainSplit {
    std::vector<std::size_t> pseudo_source;
    std::vector<std::size_t> pseudo_labels;  // parallel to pseudo_source
    std::vector<std::size_t> remaining;
    std::size_t batch_size = 0;
};

struct AugmentedBatch {
    Matrix samples;                 // originals first, then mixed rows
    Matrix soft_labels;             // (rows x K), each row sums to 1
    std::vector<bool> mixed;        // false for original pseudo-source rows
};

enum class SelectionRule { kEntropy, kRandom };

std::vector<std::size_t> assign_pseudo_labels(const Model& frozen_source, const Matrix& batch);

SourceScores score_batch(const Model& frozen_source, const Matrix& batch);

// Per-class selection size: max(1, round(alpha * n_k)) for n_k > 0.
std::size_t selection_count(std::size_t class_size, double alpha);

// Groups rows by label, sorts each group by ascending entropy (ties by row
// index) and moves the first selection_count rows of each group into the
// pseudo-source part. Throws ConfigError unless alpha in (0, 1).
DomainSplit split_from_scores(const SourceScores& scores, double alpha);

// Same per-class counts as the entropy rule, rows drawn uniformly within
// each class. Used by the selection ablation.
DomainSplit split_random(const SourceScores& scores, double alpha, Rng& rng);

DomainSplit split_by_entropy(const Model& frozen_source, const Matrix& batch, double alpha);

// Draws the mixing coefficient for one mixed row.
using LambdaSampler = std::function<double(Rng&)>;

LambdaSampler beta_sampler(double beta);

// Emits the pseudo-source rows with one-hot labels followed by n_aug mixed
// rows. Each mixed row draws lambda, then an ordered pair (i, j) uniformly
// with replacement, and emits lambda x_i + (1 - lambda) x_j with label
// lambda onehot(y_i) + (1 - lambda) onehot(y_j). Throws ConfigError when
// beta <= 0 and when the pseudo-source part is empty.
AugmentedBatch mixup_augment(const DomainSplit& split, const Matrix& batch,
                             std::size_t num_classes, double beta, std::size_t n_aug, Rng& rng);

AugmentedBatch mixup_augment(const DomainSplit& split, const Matrix& batch,
                             std::size_t num_classes, std::size_t n_aug, Rng& rng,
                             const LambdaSampler& sample_lambda);

}  // namespace psda
