#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "psda/matrix.hpp"
#include "psda/nets.hpp"

// Centroid-based pseudo-label regeneration for remaining target samples:
// soft-weighted class centroids, cosine nearest-centroid assignment, one
// round of hard-label centroid refinement, final reassignment.
namespace psda {

inline constexpr double kCentroidMassFloor = 1e-8;

struct ClassCentroids {
    Matrix centroids;              // (K x feature_dim)
    std::vector<bool> supported;   // false for classes masked out of assignment
};

// c_k = sum_i p_ik z_i / sum_i p_ik; classes with mass <= 1e-8 are masked.
ClassCentroids soft_centroids(const Matrix& features, const Matrix& probs);

// Means of the rows carrying each label; empty classes are masked.
ClassCentroids hard_centroids(const Matrix& features, std::span<const std::size_t> labels,
                              std::size_t num_classes);

// 1 - a.b / (|a| |b|) with norms floored at 1e-12.
double cosine_distance(std::span<const double> a, std::span<const double> b);

// Nearest supported centroid by cosine distance, ties to the lowest class.
// Throws NumericError when no class is supported.
std::vector<std::size_t> nearest_centroid(const Matrix& features, const ClassCentroids& c);

// Full procedure on precomputed features and class probabilities.
std::vector<std::size_t> regenerate_labels(const Matrix& features, const Matrix& probs);

// Runs the target model on `remaining` and regenerates its labels.
std::vector<std::size_t> regenerate_labels(const Model& target, const Matrix& remaining);

}  // namespace psda
