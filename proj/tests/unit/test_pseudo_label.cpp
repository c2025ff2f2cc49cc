#include <gtest/gtest.h>

#include <random>

#include "psda/error.hpp"
#include "psda/pseudo_label.hpp"

using namespace psda;

namespace {

struct Toy {
    Matrix features;
    Matrix probs;
    std::vector<std::size_t> truth;
};

// Two spherical clusters around (6, 1) and (1, 6); probabilities lean only
// weakly toward the true cluster.
Toy two_clusters(std::uint64_t seed, double lean = 0.6) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.4);
    Toy t{Matrix(80, 2), Matrix(80, 2), {}};
    for (std::size_t i = 0; i < 80; ++i) {
        const std::size_t c = i % 2;
        t.features(i, 0) = (c == 0 ? 6.0 : 1.0) + noise(rng);
        t.features(i, 1) = (c == 0 ? 1.0 : 6.0) + noise(rng);
        t.probs(i, c) = lean;
        t.probs(i, 1 - c) = 1.0 - lean;
        t.truth.push_back(c);
    }
    return t;
}

std::size_t nearest_true_center(std::span<const double> z) {
    const std::vector<double> a = {6, 1}, b = {1, 6};
    return cosine_distance(z, a) <= cosine_distance(z, b) ? 0 : 1;
}

}  // namespace

TEST(PseudoLabel, RecoversWellSeparatedClusters) {
    const Toy t = two_clusters(1);
    const auto labels = regenerate_labels(t.features, t.probs);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        EXPECT_EQ(labels[i], t.truth[i]);
        EXPECT_EQ(labels[i], nearest_true_center(t.features.row(i)));
    }
}

TEST(PseudoLabel, IdenticalSamplesShareALabel) {
    Matrix z(10, 3, 0.5);
    Matrix p(10, 3, 0.0);
    for (std::size_t i = 0; i < 10; ++i) p(i, i % 3) = 1.0;
    const auto labels = regenerate_labels(z, p);
    for (std::size_t l : labels) EXPECT_EQ(l, labels[0]);
}

TEST(PseudoLabel, ConfidentSeparableMatchesArgmax) {
    const Toy t = two_clusters(2, 0.999);
    const auto labels = regenerate_labels(t.features, t.probs);
    EXPECT_EQ(labels, ad::argmax_rows(t.probs));
}

TEST(PseudoLabel, ScaleInvariant) {
    Toy t = two_clusters(3);
    const auto before = regenerate_labels(t.features, t.probs);
    for (auto& v : t.features.data()) v *= 37.5;
    EXPECT_EQ(regenerate_labels(t.features, t.probs), before);
}

TEST(PseudoLabel, FixedPointAfterRefinement) {
    const Toy t = two_clusters(4);
    const auto labels = regenerate_labels(t.features, t.probs);
    const auto again = nearest_centroid(t.features, hard_centroids(t.features, labels, 2));
    EXPECT_EQ(again, labels);
}

TEST(PseudoLabel, MaskedClassesAreNeverAssigned) {
    const Toy t = two_clusters(5);
    Matrix p(80, 3, 0.0);
    for (std::size_t i = 0; i < 80; ++i) {
        p(i, 0) = t.probs(i, 0);
        p(i, 2) = t.probs(i, 1);
    }
    const ClassCentroids c = soft_centroids(t.features, p);
    EXPECT_FALSE(c.supported[1]);
    for (std::size_t l : regenerate_labels(t.features, p)) EXPECT_NE(l, 1u);

    ClassCentroids none{Matrix(2, 2), {false, false}};
    EXPECT_THROW(nearest_centroid(t.features, none), NumericError);
}

TEST(PseudoLabel, CosineDistance) {
    const std::vector<double> a = {1, 0}, b = {0, 2}, c = {-3, 0};
    EXPECT_NEAR(cosine_distance(a, a), 0.0, 1e-15);
    EXPECT_NEAR(cosine_distance(a, b), 1.0, 1e-15);
    EXPECT_NEAR(cosine_distance(a, c), 2.0, 1e-15);
    const std::vector<double> zero = {0, 0};
    EXPECT_NEAR(cosine_distance(a, zero), 1.0, 1e-15);
}

TEST(PseudoLabel, ModelOverload) {
    Architecture arch;
    arch.num_classes = 3;
    Rng rng(6);
    const Model m(arch, rng);
    std::mt19937_64 data_rng(7);
    std::uniform_real_distribution<double> u(-2, 2);
    Matrix x(25, 2);
    for (auto& v : x.data()) v = u(data_rng);
    const auto labels = regenerate_labels(m, x);
    EXPECT_EQ(labels, regenerate_labels(m.features(x), ad::softmax_rows(m.logits(x))));
    for (std::size_t l : labels) EXPECT_LT(l, 3u);
    EXPECT_THROW(regenerate_labels(m, Matrix(0, 2)), ConfigError);
}
