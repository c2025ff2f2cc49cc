#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "psda/nets.hpp"
#include "psda/pseudo_source.hpp"

namespace psda {

// Which feature sets the before/after A-distance compares: the pseudo-source
// and remaining parts of the target, or true source and target samples
// (analysis only; needs source samples from the evaluator).
enum class ADistanceMode { kPseudoSourceVsRemaining, kSourceVsTarget };

// Every hyperparameter of a run. Defaults are the method's published
// settings where they exist; desk-scale choices (learning rates, batch,
// epochs) are tuned for the synthetic tasks.
struct TrainingConfig {
    double gamma = 0.1;       // label smoothing
    double alpha = 0.1;       // pseudo-source proportion per class
    double beta = 1.0;        // mixup Beta(beta, beta)
    double lambda_g = 0.5;    // adversarial weight
    double lambda_c = 1.0;    // classification weight
    double lambda_div = 1.0;  // diversity switch (ablations set 0)
    double lambda_cons = 1.0; // constrain switch (ablations set 0)
    std::size_t batch_size = 100;
    std::size_t epochs = 200;
    std::size_t source_epochs = 200;
    double learning_rate = 1e-5;
    double source_learning_rate = 0.01;
    double lr_multiplier = 10.0;  // classifier and discriminator groups
    double momentum = 0.9;
    double weight_decay = 5e-4;
    double grl_coefficient = 1.0;
    std::uint64_t seed = 0;
    SelectionRule selection = SelectionRule::kEntropy;
    bool mixup = true;
    std::size_t mixup_count = 0;  // 0: one mixed row per pseudo-source row
    std::size_t a_distance_every = 0;  // 0: only before and after adaptation
    ADistanceMode a_distance_mode = ADistanceMode::kPseudoSourceVsRemaining;
    Architecture architecture;

    // Throws ConfigError on out-of-range values.
    void validate() const;

    nlohmann::ordered_json to_json() const;
    // Fields absent from `j` keep their values from `base`; unknown keys are
    // rejected.
    static TrainingConfig from_json(const nlohmann::json& j, const TrainingConfig& base);
    static TrainingConfig from_json(const nlohmann::json& j);
};

std::string to_string(SelectionRule rule);
SelectionRule selection_from_string(const std::string& name);
std::string to_string(ADistanceMode mode);
ADistanceMode a_distance_mode_from_string(const std::string& name);

}  // namespace psda
