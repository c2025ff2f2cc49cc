#include "psda/pseudo_source.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "psda/error.hpp"
#include "psda/losses.hpp"

namespace psda {

namespace {

void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ConfigError("pseudo-source proportion alpha must lie in (0, 1), got " +
                          std::to_string(alpha));
}

std::vector<std::vector<std::size_t>> group_by_label(const SourceScores& scores) {
    std::size_t k = 0;
    for (std::size_t l : scores.labels) k = std::max(k, l + 1);
    std::vector<std::vector<std::size_t>> groups(k);
    for (std::size_t i = 0; i < scores.labels.size(); ++i) groups[scores.labels[i]].push_back(i);
    return groups;
}

// Moves `chosen` rows of each group into the pseudo-source part; everything
// else becomes remaining. Output indices are sorted for a canonical layout.
DomainSplit assemble(const SourceScores& scores, const std::vector<std::size_t>& chosen) {
    DomainSplit split;
    split.batch_size = scores.labels.size();
    std::vector<bool> selected(split.batch_size, false);
    for (std::size_t i : chosen) selected[i] = true;
    for (std::size_t i = 0; i < split.batch_size; ++i) {
        if (selected[i]) {
            split.pseudo_source.push_back(i);
            split.pseudo_labels.push_back(scores.labels[i]);
        } else {
            split.remaining.push_back(i);
        }
    }
    return split;
}

}  // namespace

std::vector<std::size_t> assign_pseudo_labels(const Model& frozen_source, const Matrix& batch) {
    return frozen_source.predict(batch);
}

SourceScores score_batch(const Model& frozen_source, const Matrix& batch) {
    ad::Tape tape;
    const ad::Tensor logits = frozen_source.logits(tape, ad::Tensor::constant(batch));
    const ad::Tensor h = losses::prediction_entropy(tape, logits);
    SourceScores s;
    s.labels = ad::argmax_rows(logits.value());
    s.entropy = h.value().data();
    return s;
}

std::size_t selection_count(std::size_t class_size, double alpha) {
    if (class_size == 0) return 0;
    const auto n = static_cast<std::size_t>(std::llround(alpha * static_cast<double>(class_size)));
    return std::clamp<std::size_t>(n, 1, class_size);
}

DomainSplit split_from_scores(const SourceScores& scores, double alpha) {
    check_alpha(alpha);
    if (scores.labels.empty()) throw ConfigError("split_by_entropy: empty batch");
    std::vector<std::size_t> chosen;
    for (auto& group : group_by_label(scores)) {
        std::stable_sort(group.begin(), group.end(), [&](std::size_t a, std::size_t b) {
            return scores.entropy[a] < scores.entropy[b];
        });
        const std::size_t take = selection_count(group.size(), alpha);
        chosen.insert(chosen.end(), group.begin(), group.begin() + static_cast<std::ptrdiff_t>(take));
    }
    return assemble(scores, chosen);
}

DomainSplit split_random(const SourceScores& scores, double alpha, Rng& rng) {
    check_alpha(alpha);
    if (scores.labels.empty()) throw ConfigError("split_random: empty batch");
    std::vector<std::size_t> chosen;
    for (auto& group : group_by_label(scores)) {
        const std::size_t take = selection_count(group.size(), alpha);
        // Partial Fisher-Yates: the first `take` entries become a uniform sample.
        for (std::size_t i = 0; i < take; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, group.size() - 1);
            std::swap(group[i], group[pick(rng)]);
        }
        chosen.insert(chosen.end(), group.begin(), group.begin() + static_cast<std::ptrdiff_t>(take));
    }
    return assemble(scores, chosen);
}

DomainSplit split_by_entropy(const Model& frozen_source, const Matrix& batch, double alpha) {
    check_alpha(alpha);
    if (batch.rows() == 0) throw ConfigError("split_by_entropy: empty batch");
    return split_from_scores(score_batch(frozen_source, batch), alpha);
}

LambdaSampler beta_sampler(double beta) {
    if (!(beta > 0.0)) throw ConfigError("mixup beta must be positive, got " + std::to_string(beta));
    return [beta](Rng& rng) { return sample_beta(rng, beta, beta); };
}

AugmentedBatch mixup_augment(const DomainSplit& split, const Matrix& batch,
                             std::size_t num_classes, double beta, std::size_t n_aug, Rng& rng) {
    return mixup_augment(split, batch, num_classes, n_aug, rng, beta_sampler(beta));
}

AugmentedBatch mixup_augment(const DomainSplit& split, const Matrix& batch,
                             std::size_t num_classes, std::size_t n_aug, Rng& rng,
                             const LambdaSampler& sample_lambda) {
    const std::size_t n_src = split.pseudo_source.size();
    if (n_src == 0) throw ConfigError("mixup_augment: pseudo-source part is empty");
    const std::size_t d = batch.cols();

    AugmentedBatch out;
    out.samples = Matrix(n_src + n_aug, d);
    out.soft_labels = Matrix(n_src + n_aug, num_classes);
    out.mixed.assign(n_src + n_aug, false);

    for (std::size_t r = 0; r < n_src; ++r) {
        const auto src = batch.row(split.pseudo_source[r]);
        std::copy(src.begin(), src.end(), out.samples.row(r).begin());
        out.soft_labels(r, split.pseudo_labels[r]) = 1.0;
    }

    std::uniform_int_distribution<std::size_t> pick(0, n_src - 1);
    for (std::size_t m = 0; m < n_aug; ++m) {
        const std::size_t r = n_src + m;
        const double lambda = sample_lambda(rng);
        const std::size_t i = pick(rng);
        const std::size_t j = pick(rng);
        const auto xi = batch.row(split.pseudo_source[i]);
        const auto xj = batch.row(split.pseudo_source[j]);
        auto dst = out.samples.row(r);
        for (std::size_t c = 0; c < d; ++c) dst[c] = lambda * xi[c] + (1.0 - lambda) * xj[c];
        out.soft_labels(r, split.pseudo_labels[i]) += lambda;
        out.soft_labels(r, split.pseudo_labels[j]) += 1.0 - lambda;
        out.mixed[r] = true;
    }
    return out;
}

}  // namespace psda
