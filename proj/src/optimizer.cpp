#include "psda/optimizer.hpp"

#include <cmath>

#include "psda/error.hpp"

namespace psda {

void sgd_step(std::span<const NamedParameter> params, OptimizerState& state,
              const SgdOptions& options) {
    // Validate everything first so a bad gradient leaves all weights untouched.
    for (const auto& p : params) {
        if (!p.tensor.has_grad()) continue;
        for (double g : p.tensor.grad().data())
            if (!std::isfinite(g))
                throw NumericError("non-finite gradient for parameter '" + p.name + "'");
    }
    for (const auto& p : params) {
        if (!p.tensor.has_grad()) continue;
        ad::Tensor t = p.tensor;
        Matrix& w = t.mutable_value();
        const Matrix& g = t.grad();
        auto [it, inserted] = state.velocity.try_emplace(p.name, w.rows(), w.cols());
        Matrix& v = it->second;
        if (!v.same_shape(w))
            throw ConfigError("optimizer state for '" + p.name + "' has shape " + v.shape_string() +
                              ", parameter has " + w.shape_string());
        const double rate = options.rate_for(p.group);
        for (std::size_t i = 0; i < w.size(); ++i) {
            v[i] = options.momentum * v[i] + (g[i] + options.weight_decay * w[i]);
            w[i] -= rate * v[i];
        }
        t.clear_grad();
    }
}

void zero_grad(std::span<const NamedParameter> params) {
    for (const auto& p : params) {
        ad::Tensor t = p.tensor;
        t.clear_grad();
    }
}

}  // namespace psda
