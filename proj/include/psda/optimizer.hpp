#pragma once

#include <map>
#include <span>
#include <string>

#include "psda/matrix.hpp"
#include "psda/nets.hpp"

namespace psda {

struct SgdOptions {
    double learning_rate = 0.01;
    double lr_multiplier = 10.0;  // applied to classifier and discriminator groups
    double momentum = 0.9;
    double weight_decay = 5e-4;

    double rate_for(ParamGroup group) const {
        return group == ParamGroup::kFeatureExtractor ? learning_rate
                                                      : learning_rate * lr_multiplier;
    }
};

// Momentum buffers keyed by parameter name.
struct OptimizerState {
    std::map<std::string, Matrix> velocity;
};

// v <- momentum * v + (grad + weight_decay * w);  w <- w - rate * v.
// Parameters without a gradient are skipped. Consumed gradients are cleared.
// Throws NumericError naming the parameter on a non-finite gradient.
void sgd_step(std::span<const NamedParameter> params, OptimizerState& state,
              const SgdOptions& options);

// Drops any accumulated gradient.
void zero_grad(std::span<const NamedParameter> params);

}  // namespace psda
