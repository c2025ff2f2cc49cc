#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "psda/autodiff.hpp"
#include "psda/matrix.hpp"

namespace psda::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                            double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(rows, cols);
    for (auto& v : m.data()) v = u(rng);
    return m;
}

// Builds a scalar loss on the tape from the given leaf tensors.
using ScalarFn = std::function<ad::Tensor(ad::Tape&, const std::vector<ad::Tensor>&)>;

struct GradCheck {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
};

// Compares tape gradients with central finite differences for every input
// entry. Relative error uses max(|analytic|, |numeric|, 1e-3) as the scale so
// that vanishing gradients are judged by absolute error.
inline GradCheck check_gradients(const ScalarFn& fn, const std::vector<Matrix>& inputs,
                                 double h = 1e-5) {
    std::vector<ad::Tensor> leaves;
    for (const auto& m : inputs) leaves.push_back(ad::Tensor::leaf(m, true));
    {
        ad::Tape tape;
        tape.backward(fn(tape, leaves));
    }
    auto eval = [&](const std::vector<Matrix>& xs) {
        std::vector<ad::Tensor> c;
        for (const auto& m : xs) c.push_back(ad::Tensor::constant(m));
        ad::Tape tape;
        return fn(tape, c).item();
    };
    GradCheck out;
    std::vector<Matrix> probe = inputs;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        for (std::size_t i = 0; i < inputs[t].size(); ++i) {
            const double x0 = inputs[t][i];
            probe[t][i] = x0 + h;
            const double up = eval(probe);
            probe[t][i] = x0 - h;
            const double down = eval(probe);
            probe[t][i] = x0;
            const double numeric = (up - down) / (2.0 * h);
            const double analytic = leaves[t].has_grad() ? leaves[t].grad()[i] : 0.0;
            const double abs_err = std::abs(numeric - analytic);
            const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-3});
            out.max_abs_error = std::max(out.max_abs_error, abs_err);
            out.max_rel_error = std::max(out.max_rel_error, abs_err / scale);
        }
    }
    return out;
}

}  // namespace psda::testing
