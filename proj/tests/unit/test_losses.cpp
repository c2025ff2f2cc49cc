#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "psda/error.hpp"
#include "psda/losses.hpp"
#include "support.hpp"

using namespace psda;
using psda::testing::check_gradients;
using psda::testing::random_matrix;

namespace {

ad::Tensor c(const Matrix& m) { return ad::Tensor::constant(m); }

Matrix log_probs(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m = Matrix::from_rows(rows);
    for (auto& v : m.data()) v = std::log(v);
    return m;
}

double entropy_of(const std::vector<double>& p) {
    double h = 0.0;
    for (double v : p)
        if (v > 0) h -= v * std::log(v);
    return h;
}

std::vector<double> column_mean_softmax(const Matrix& logits) {
    const Matrix p = ad::softmax_rows(logits);
    std::vector<double> m(p.cols(), 0.0);
    for (std::size_t r = 0; r < p.rows(); ++r)
        for (std::size_t k = 0; k < p.cols(); ++k) m[k] += p(r, k) / static_cast<double>(p.rows());
    return m;
}

}  // namespace

TEST(Losses, SmoothedTargets) {
    const std::vector<std::size_t> y = {3, 0};
    const Matrix q = losses::smoothed_targets(y, 10, 0.1);
    for (std::size_t r = 0; r < 2; ++r) {
        double s = 0.0;
        for (std::size_t k = 0; k < 10; ++k) {
            s += q(r, k);
            EXPECT_NEAR(q(r, k), k == y[r] ? 0.91 : 0.01, 1e-15);
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
    EXPECT_THROW(losses::smoothed_targets(y, 10, 1.0), ConfigError);
    EXPECT_THROW(losses::smoothed_targets(y, 10, -0.1), ConfigError);
}

TEST(Losses, LabelSmoothedCeUniformLogitsIsLnK) {
    ad::Tape tape;
    const std::vector<std::size_t> y = {1, 4, 9};
    for (double gamma : {0.0, 0.1, 0.5}) {
        const double v = losses::label_smoothed_ce(tape, c(Matrix(3, 10, 0.7)), y, gamma).item();
        EXPECT_NEAR(v, std::log(10.0), 1e-12);
    }
}

TEST(Losses, LabelSmoothedCeMatchesHandOracle) {
    std::mt19937_64 rng(7);
    const Matrix logits = random_matrix(1, 10, rng, -2, 2);
    ad::Tape tape;
    const Matrix ls = ad::log_softmax_rows(tape, c(logits)).value();
    double other = 0.0;
    for (std::size_t k = 0; k < 10; ++k)
        if (k != 6) other += ls[k];
    const double oracle = -0.91 * ls[6] - 0.01 * other;
    const std::vector<std::size_t> y = {6};
    EXPECT_NEAR(losses::label_smoothed_ce(tape, c(logits), y, 0.1).item(), oracle, 1e-12);
}

TEST(Losses, ZeroSmoothingIsPlainCrossEntropy) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix logits = random_matrix(6, 4, rng, -3, 3);
        std::vector<std::size_t> y(6);
        for (auto& v : y) v = rng() % 4;
        ad::Tape tape;
        const double ls = losses::label_smoothed_ce(tape, c(logits), y, 0.0).item();
        const Matrix p = ad::softmax_rows(logits);
        double ce = 0.0;
        for (std::size_t i = 0; i < 6; ++i) ce -= std::log(p(i, y[i])) / 6.0;
        EXPECT_NEAR(ls, ce, 1e-12);
        EXPECT_NEAR(ls, losses::cross_entropy(tape, c(logits), y).item(), 1e-12);
    }
}

TEST(Losses, PredictionEntropyLandmarks) {
    ad::Tape tape;
    EXPECT_NEAR(losses::prediction_entropy(tape, c(Matrix(1, 10, 0.0))).value()[0], std::log(10.0), 1e-12);
    Matrix spike(1, 5, 0.0);
    spike[2] = 1000.0;
    EXPECT_NEAR(losses::prediction_entropy(tape, c(spike)).value()[0], 0.0, 1e-12);
    EXPECT_NEAR(losses::prediction_entropy(tape, c(Matrix::from_rows({{1, 0}}))).value()[0],
                0.582203108888218, 1e-12);
}

TEST(Losses, PredictionEntropyBounds) {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t k = 2 + rng() % 9;
        const Matrix logits = random_matrix(8, k, rng, -30, 30);
        ad::Tape tape;
        const ad::Tensor h_all = losses::prediction_entropy(tape, c(logits));
        for (double h : h_all.value().data()) {
            EXPECT_GE(h, 0.0);
            EXPECT_LE(h, std::log(static_cast<double>(k)) + 1e-9);
        }
    }
}

TEST(Losses, DiversityLandmarks) {
    ad::Tape tape;
    EXPECT_NEAR(losses::diversity_loss(tape, c(Matrix(4, 10, 0.0)), c(Matrix(4, 10, 0.0))).item(),
                -2.0 * std::log(10.0), 1e-9);
    // Rows that cancel out to a uniform mean.
    const Matrix a = Matrix::from_rows({{5, -5}, {-5, 5}});
    EXPECT_NEAR(losses::diversity_loss(tape, c(a), c(a)).item(), -2.0 * std::log(2.0), 1e-9);
    Matrix onehot(3, 4, 0.0);
    for (std::size_t r = 0; r < 3; ++r) onehot(r, 1) = 1000.0;
    EXPECT_NEAR(losses::diversity_loss(tape, c(onehot), c(onehot)).item(), 0.0, 1e-9);
    EXPECT_THROW(losses::diversity_loss(tape, c(Matrix(0, 3)), c(Matrix(0, 3))), ConfigError);
}

TEST(Losses, DiversityEqualsKlToUniformMinusTwoLnK) {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t k = 2 + rng() % 6;
        const Matrix a = random_matrix(5, k, rng, -3, 3);
        const Matrix b = random_matrix(5, k, rng, -3, 3);
        double kl = 0.0;
        for (const Matrix* m : {&a, &b})
            for (double p : column_mean_softmax(*m)) kl += p * std::log(p * static_cast<double>(k));
        ad::Tape tape;
        const double v = losses::diversity_loss(tape, c(a), c(b)).item();
        const double floor = -2.0 * std::log(static_cast<double>(k));
        EXPECT_NEAR(v, kl + floor, 1e-9);
        EXPECT_GE(v, floor - 1e-9);
    }
}

TEST(Losses, ConstrainLandmarks) {
    ad::Tape tape;
    EXPECT_NEAR(losses::constrain_loss(tape, c(Matrix(2, 10, 0.0)), c(Matrix(2, 10, 0.0))).item(),
                2.0 * std::log(10.0), 1e-12);
    Matrix spike(2, 3, 0.0);
    spike(0, 0) = spike(1, 2) = 1000.0;
    EXPECT_NEAR(losses::constrain_loss(tape, c(spike), c(spike)).item(), 0.0, 1e-9);
    // CE(p, q) + CE(q, p) = ln 2 + (-0.5 ln 0.9 - 0.5 ln 0.1).
    const double v = losses::constrain_loss(tape, c(log_probs({{0.9, 0.1}})), c(log_probs({{0.5, 0.5}}))).item();
    EXPECT_NEAR(v, 1.897119984885881, 1e-12);
}

TEST(Losses, ConstrainIsSymmetricAndNonnegative) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const Matrix a = random_matrix(4, 3, rng, -5, 5);
        const Matrix b = random_matrix(4, 3, rng, -5, 5);
        ad::Tape tape;
        const double ab = losses::constrain_loss(tape, c(a), c(b)).item();
        EXPECT_GE(ab, 0.0);
        EXPECT_NEAR(ab, losses::constrain_loss(tape, c(b), c(a)).item(), 1e-12);
    }
}

TEST(Losses, AdversarialLandmarks) {
    ad::Tape tape;
    EXPECT_NEAR(losses::adversarial_loss(tape, c(Matrix(3, 1, 0.5)), c(Matrix(5, 1, 0.5))).item(),
                2.0 * std::numbers::ln2, 1e-12);
    EXPECT_NEAR(losses::adversarial_loss(tape, c(Matrix(3, 1, 1.0)), c(Matrix(5, 1, 0.0))).item(),
                0.0, 1e-11);
    EXPECT_NEAR(losses::adversarial_loss(tape, c(Matrix::from_rows({{0.8}})), c(Matrix::from_rows({{0.3}}))).item(),
                0.579818495252942, 1e-12);
    EXPECT_THROW(losses::adversarial_loss(tape, c(Matrix::from_rows({{1.5}})), c(Matrix(1, 1, 0.5))),
                 NumericError);
}

TEST(Losses, AdversarialDomainSwapSymmetry) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        const Matrix s = random_matrix(4, 1, rng, 0.01, 0.99);
        const Matrix r = random_matrix(6, 1, rng, 0.01, 0.99);
        Matrix s_flip = s, r_flip = r;
        for (auto& v : s_flip.data()) v = 1.0 - v;
        for (auto& v : r_flip.data()) v = 1.0 - v;
        ad::Tape tape;
        EXPECT_NEAR(losses::adversarial_loss(tape, c(s), c(r)).item(),
                    losses::adversarial_loss(tape, c(r_flip), c(s_flip)).item(), 1e-12);
    }
}

TEST(Losses, ClassificationLandmarks) {
    ad::Tape tape;
    const Matrix logits = Matrix::from_rows({{2.0, -1.0}, {0.3, 0.1}});
    const std::vector<std::size_t> y = {0, 1};
    Matrix onehot(2, 2);
    onehot(0, 0) = onehot(1, 1) = 1.0;
    const ad::Tensor none;
    EXPECT_NEAR(losses::classification_loss(tape, c(logits), onehot, none, {}).item(),
                losses::cross_entropy(tape, c(logits), y).item(), 1e-15);

    // Outputs equal to the soft labels: loss is their mean entropy.
    const Matrix soft = Matrix::from_rows({{0.7, 0.3}, {0.25, 0.75}});
    Matrix soft_logits = soft;
    for (auto& v : soft_logits.data()) v = std::log(v);
    const double h = (entropy_of({0.7, 0.3}) + entropy_of({0.25, 0.75})) / 2.0;
    EXPECT_NEAR(losses::classification_loss(tape, c(soft_logits), soft, none, {}).item(), h, 1e-12);

    // Two-sample batch: soft term on row 0 plus hard term on row 1.
    const Matrix ps_logits = Matrix::from_rows({{1.0, 0.0}});
    const Matrix rem_logits = Matrix::from_rows({{0.0, 2.0}});
    const Matrix ps_label = Matrix::from_rows({{0.6, 0.4}});
    const std::vector<std::size_t> rem_y = {0};
    const double lse1 = std::log(std::exp(1.0) + 1.0);
    const double lse2 = std::log(1.0 + std::exp(2.0));
    const double oracle = -(0.6 * (1.0 - lse1) + 0.4 * (0.0 - lse1)) - (0.0 - lse2);
    EXPECT_NEAR(losses::classification_loss(tape, c(ps_logits), ps_label, c(rem_logits), rem_y).item(),
                oracle, 1e-12);
    EXPECT_THROW(losses::classification_loss(tape, c(Matrix(0, 2)), Matrix(0, 2), c(rem_logits), rem_y),
                 ConfigError);
}

TEST(Losses, GradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(13);
    using V = std::vector<ad::Tensor>;
    const std::vector<std::size_t> y = {0, 2, 1, 1, 2};
    Matrix soft(5, 3);
    for (std::size_t r = 0; r < 5; ++r) {
        double s = 0.0;
        for (std::size_t k = 0; k < 3; ++k) s += soft(r, k) = 0.1 + static_cast<double>((r + k) % 3);
        for (std::size_t k = 0; k < 3; ++k) soft(r, k) /= s;
    }
    const std::vector<std::pair<const char*, psda::testing::ScalarFn>> cases = {
        {"smoothed_ce", [&](ad::Tape& t, const V& v) { return losses::label_smoothed_ce(t, v[0], y, 0.1); }},
        {"entropy", [&](ad::Tape& t, const V& v) { return ad::sum(t, losses::prediction_entropy(t, v[0])); }},
        {"classification", [&](ad::Tape& t, const V& v) { return losses::classification_loss(t, v[0], soft, v[1], y); }},
        {"diversity", [&](ad::Tape& t, const V& v) { return losses::diversity_loss(t, v[0], v[1]); }},
        {"constrain", [&](ad::Tape& t, const V& v) { return losses::constrain_loss(t, v[0], v[1]); }},
        {"adversarial", [&](ad::Tape& t, const V& v) {
             return losses::adversarial_loss(t, ad::sigmoid(t, ad::sum_rows(t, v[0])), ad::sigmoid(t, ad::sum_rows(t, v[1])));
         }},
    };
    for (const auto& [name, fn] : cases) {
        for (int trial = 0; trial < 5; ++trial) {
            const auto r = check_gradients(fn, {random_matrix(5, 3, rng, -2, 2), random_matrix(5, 3, rng, -2, 2)});
            EXPECT_LT(r.max_rel_error, 1e-4) << name;
        }
    }
}
