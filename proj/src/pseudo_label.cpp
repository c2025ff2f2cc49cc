#include "psda/pseudo_label.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "psda/error.hpp"

namespace psda {

ClassCentroids soft_centroids(const Matrix& features, const Matrix& probs) {
    if (features.rows() != probs.rows())
        throw ConfigError("soft_centroids: features " + features.shape_string() + " vs probs " +
                          probs.shape_string());
    const std::size_t k = probs.cols();
    const std::size_t d = features.cols();
    ClassCentroids out{Matrix(k, d), std::vector<bool>(k, false)};
    std::vector<double> mass(k, 0.0);
    for (std::size_t i = 0; i < features.rows(); ++i) {
        const auto z = features.row(i);
        for (std::size_t c = 0; c < k; ++c) {
            const double w = probs(i, c);
            mass[c] += w;
            auto dst = out.centroids.row(c);
            for (std::size_t j = 0; j < d; ++j) dst[j] += w * z[j];
        }
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (mass[c] > kCentroidMassFloor) {
            out.supported[c] = true;
            for (double& v : out.centroids.row(c)) v /= mass[c];
        }
    }
    return out;
}

ClassCentroids hard_centroids(const Matrix& features, std::span<const std::size_t> labels,
                              std::size_t num_classes) {
    if (features.rows() != labels.size())
        throw ConfigError("hard_centroids: label count does not match feature rows");
    const std::size_t d = features.cols();
    ClassCentroids out{Matrix(num_classes, d), std::vector<bool>(num_classes, false)};
    std::vector<std::size_t> count(num_classes, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        ++count[labels[i]];
        const auto z = features.row(i);
        auto dst = out.centroids.row(labels[i]);
        for (std::size_t j = 0; j < d; ++j) dst[j] += z[j];
    }
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (count[c] > 0) {
            out.supported[c] = true;
            for (double& v : out.centroids.row(c)) v /= static_cast<double>(count[c]);
        }
    }
    return out;
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return 1.0 - dot / (std::max(std::sqrt(na), 1e-12) * std::max(std::sqrt(nb), 1e-12));
}

std::vector<std::size_t> nearest_centroid(const Matrix& features, const ClassCentroids& c) {
    if (std::none_of(c.supported.begin(), c.supported.end(), [](bool s) { return s; }))
        throw NumericError("pseudo-label regeneration: every class is masked (degenerate batch)");
    std::vector<std::size_t> labels(features.rows(), 0);
    for (std::size_t i = 0; i < features.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < c.supported.size(); ++k) {
            if (!c.supported[k]) continue;
            const double dist = cosine_distance(features.row(i), c.centroids.row(k));
            if (dist < best) {
                best = dist;
                labels[i] = k;
            }
        }
    }
    return labels;
}

std::vector<std::size_t> regenerate_labels(const Matrix& features, const Matrix& probs) {
    if (features.rows() == 0) throw ConfigError("regenerate_labels: empty batch");
    auto labels = nearest_centroid(features, soft_centroids(features, probs));
    return nearest_centroid(features, hard_centroids(features, labels, probs.cols()));
}

std::vector<std::size_t> regenerate_labels(const Model& target, const Matrix& remaining) {
    if (remaining.rows() == 0) throw ConfigError("regenerate_labels: empty batch");
    ad::Tape tape;
    const ad::Tensor z = target.extractor().forward(tape, ad::Tensor::constant(remaining));
    const ad::Tensor logits = target.classifier().forward(tape, z);
    return regenerate_labels(z.value(), ad::softmax_rows(logits.value()));
}

}  // namespace psda
