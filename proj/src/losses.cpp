#include "psda/losses.hpp"

#include <cmath>
#include <string>

#include "psda/error.hpp"

namespace psda::losses {

namespace {

void check_labels(std::span<const std::size_t> labels, std::size_t rows, std::size_t k,
                  const char* where) {
    if (labels.size() != rows) {
        throw ConfigError(std::string(where) + ": " + std::to_string(labels.size()) +
                          " labels for " + std::to_string(rows) + " rows");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= k) {
            throw ConfigError(std::string(where) + ": label " + std::to_string(labels[i]) +
                              " at row " + std::to_string(i) + " outside [0, " +
                              std::to_string(k) + ")");
        }
    }
}

ad::Tensor clamped_log(ad::Tape& tape, const ad::Tensor& p) {
    return ad::log(tape, ad::clamp(tape, p, kProbClamp, 1.0 - kProbClamp));
}

// Per-row -sum_k p_k log q_k with q given by logits, (B x 1).
ad::Tensor row_cross_entropy(ad::Tape& tape, const ad::Tensor& p, const ad::Tensor& q_logits) {
    return ad::neg(tape, ad::sum_rows(tape, ad::mul(tape, p, ad::log_softmax_rows(tape, q_logits))));
}

}  // namespace

Matrix smoothed_targets(std::span<const std::size_t> labels, std::size_t num_classes,
                        double gamma) {
    if (!(gamma >= 0.0 && gamma < 1.0))
        throw ConfigError("label smoothing gamma must lie in [0, 1), got " + std::to_string(gamma));
    const double off = gamma / static_cast<double>(num_classes);
    Matrix q(labels.size(), num_classes, off);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= num_classes)
            throw ConfigError("smoothed_targets: label " + std::to_string(labels[i]) +
                              " at row " + std::to_string(i) + " outside [0, " +
                              std::to_string(num_classes) + ")");
        q(i, labels[i]) = (1.0 - gamma) + off;
    }
    return q;
}

ad::Tensor soft_cross_entropy(ad::Tape& tape, const ad::Tensor& logits, const Matrix& targets) {
    if (!logits.value().same_shape(targets)) {
        throw ConfigError("soft_cross_entropy: logits " + logits.value().shape_string() +
                          " vs targets " + targets.shape_string());
    }
    if (logits.rows() == 0) throw ConfigError("soft_cross_entropy: empty batch");
    const ad::Tensor q = ad::Tensor::constant(targets);
    return ad::mean(tape, row_cross_entropy(tape, q, logits));
}

ad::Tensor cross_entropy(ad::Tape& tape, const ad::Tensor& logits,
                         std::span<const std::size_t> labels) {
    check_labels(labels, logits.rows(), logits.cols(), "cross_entropy");
    return soft_cross_entropy(tape, logits, smoothed_targets(labels, logits.cols(), 0.0));
}

ad::Tensor label_smoothed_ce(ad::Tape& tape, const ad::Tensor& logits,
                             std::span<const std::size_t> labels, double gamma) {
    check_labels(labels, logits.rows(), logits.cols(), "label_smoothed_ce");
    return soft_cross_entropy(tape, logits, smoothed_targets(labels, logits.cols(), gamma));
}

ad::Tensor prediction_entropy(ad::Tape& tape, const ad::Tensor& logits) {
    const ad::Tensor p = ad::softmax_rows(tape, logits);
    return row_cross_entropy(tape, p, logits);
}

ad::Tensor diversity_loss(ad::Tape& tape, const ad::Tensor& frozen_head_logits,
                          const ad::Tensor& target_head_logits) {
    if (frozen_head_logits.rows() == 0 || target_head_logits.rows() == 0)
        throw ConfigError("diversity_loss: empty batch");
    if (!frozen_head_logits.value().same_shape(target_head_logits.value()))
        throw ConfigError("diversity_loss: shape mismatch " +
                          frozen_head_logits.value().shape_string() + " vs " +
                          target_head_logits.value().shape_string());
    auto neg_entropy_of_mean = [&tape](const ad::Tensor& logits) {
        const ad::Tensor m = ad::mean_cols(tape, ad::softmax_rows(tape, logits));
        return ad::sum(tape, ad::mul(tape, m, clamped_log(tape, m)));
    };
    return ad::add(tape, neg_entropy_of_mean(frozen_head_logits),
                   neg_entropy_of_mean(target_head_logits));
}

ad::Tensor constrain_loss(ad::Tape& tape, const ad::Tensor& frozen_head_logits,
                          const ad::Tensor& target_head_logits) {
    if (!frozen_head_logits.value().same_shape(target_head_logits.value()))
        throw ConfigError("constrain_loss: shape mismatch " +
                          frozen_head_logits.value().shape_string() + " vs " +
                          target_head_logits.value().shape_string());
    if (frozen_head_logits.rows() == 0) throw ConfigError("constrain_loss: empty batch");
    const ad::Tensor ps = ad::softmax_rows(tape, frozen_head_logits);
    const ad::Tensor pt = ad::softmax_rows(tape, target_head_logits);
    const ad::Tensor both = ad::add(tape, row_cross_entropy(tape, ps, target_head_logits),
                                    row_cross_entropy(tape, pt, frozen_head_logits));
    return ad::mean(tape, both);
}

ad::Tensor adversarial_loss(ad::Tape& tape, const ad::Tensor& d_pseudo_source,
                            const ad::Tensor& d_remaining) {
    for (const ad::Tensor* t : {&d_pseudo_source, &d_remaining}) {
        if (t->cols() != 1 || t->rows() == 0)
            throw ConfigError("adversarial_loss: expected non-empty (B x 1) discriminator output, got " +
                              t->value().shape_string());
        for (double v : t->value().data()) {
            if (!(v >= 0.0 && v <= 1.0))
                throw NumericError("adversarial_loss: discriminator output " + std::to_string(v) +
                                   " outside (0, 1)");
        }
    }
    const ad::Tensor src = ad::mean(tape, clamped_log(tape, d_pseudo_source));
    const ad::Tensor tgt =
        ad::mean(tape, clamped_log(tape, ad::affine(tape, d_remaining, -1.0, 1.0)));
    return ad::neg(tape, ad::add(tape, src, tgt));
}

ad::Tensor classification_loss(ad::Tape& tape, const ad::Tensor& pseudo_source_logits,
                               const Matrix& soft_labels, const ad::Tensor& remaining_logits,
                               std::span<const std::size_t> remaining_labels) {
    if (pseudo_source_logits.rows() == 0)
        throw ConfigError("classification_loss: empty pseudo-source batch");
    ad::Tensor loss = soft_cross_entropy(tape, pseudo_source_logits, soft_labels);
    if (remaining_logits.defined() && remaining_logits.rows() > 0)
        loss = ad::add(tape, loss, cross_entropy(tape, remaining_logits, remaining_labels));
    return loss;
}

}  // namespace psda::losses
