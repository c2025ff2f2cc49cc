#include "psda/config.hpp"

#include <set>

#include "psda/error.hpp"

namespace psda {

std::string to_string(SelectionRule rule) {
    return rule == SelectionRule::kEntropy ? "entropy" : "random";
}

SelectionRule selection_from_string(const std::string& name) {
    if (name == "entropy") return SelectionRule::kEntropy;
    if (name == "random") return SelectionRule::kRandom;
    throw ConfigError("unknown selection rule '" + name + "' (expected entropy or random)");
}

std::string to_string(ADistanceMode mode) {
    return mode == ADistanceMode::kPseudoSourceVsRemaining ? "pseudo_source_vs_remaining"
                                                           : "source_vs_target";
}

ADistanceMode a_distance_mode_from_string(const std::string& name) {
    if (name == "pseudo_source_vs_remaining") return ADistanceMode::kPseudoSourceVsRemaining;
    if (name == "source_vs_target") return ADistanceMode::kSourceVsTarget;
    throw ConfigError("unknown a_distance_mode '" + name +
                      "' (expected pseudo_source_vs_remaining or source_vs_target)");
}

void TrainingConfig::validate() const {
    auto nonneg = [](double v, const char* name) {
        if (!(v >= 0.0)) throw ConfigError(std::string(name) + " must be nonnegative");
    };
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (!(beta > 0.0)) throw ConfigError("beta must be positive");
    nonneg(lambda_g, "lambda_g");
    nonneg(lambda_c, "lambda_c");
    nonneg(lambda_div, "lambda_div");
    nonneg(lambda_cons, "lambda_cons");
    nonneg(learning_rate, "learning_rate");
    nonneg(source_learning_rate, "source_learning_rate");
    nonneg(lr_multiplier, "lr_multiplier");
    nonneg(momentum, "momentum");
    nonneg(weight_decay, "weight_decay");
    nonneg(grl_coefficient, "grl_coefficient");
    if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
}

nlohmann::ordered_json TrainingConfig::to_json() const {
    nlohmann::ordered_json j;
    j["gamma"] = gamma;
    j["alpha"] = alpha;
    j["beta"] = beta;
    j["lambda_g"] = lambda_g;
    j["lambda_c"] = lambda_c;
    j["lambda_div"] = lambda_div;
    j["lambda_cons"] = lambda_cons;
    j["batch_size"] = batch_size;
    j["epochs"] = epochs;
    j["source_epochs"] = source_epochs;
    j["learning_rate"] = learning_rate;
    j["source_learning_rate"] = source_learning_rate;
    j["lr_multiplier"] = lr_multiplier;
    j["momentum"] = momentum;
    j["weight_decay"] = weight_decay;
    j["grl_coefficient"] = grl_coefficient;
    j["seed"] = seed;
    j["selection"] = to_string(selection);
    j["mixup"] = mixup;
    j["mixup_count"] = mixup_count;
    j["a_distance_every"] = a_distance_every;
    j["a_distance_mode"] = to_string(a_distance_mode);
    j["architecture"] = architecture.to_json();
    return j;
}

TrainingConfig TrainingConfig::from_json(const nlohmann::json& j) {
    return from_json(j, TrainingConfig{});
}

TrainingConfig TrainingConfig::from_json(const nlohmann::json& j, const TrainingConfig& base) {
    if (!j.is_object()) throw ConfigError("training config must be a JSON object");
    static const std::set<std::string> known = {
        "gamma",         "alpha",          "beta",          "lambda_g",
        "lambda_c",      "lambda_div",     "lambda_cons",   "batch_size",
        "epochs",        "source_epochs",  "learning_rate", "source_learning_rate",
        "lr_multiplier", "momentum",       "weight_decay",  "grl_coefficient",
        "seed",          "selection",      "mixup",         "mixup_count",
        "a_distance_every", "a_distance_mode", "architecture"};
    for (const auto& [key, _] : j.items())
        if (!known.contains(key)) throw ConfigError("unknown training config key '" + key + "'");

    TrainingConfig c = base;
    try {
        c.gamma = j.value("gamma", c.gamma);
        c.alpha = j.value("alpha", c.alpha);
        c.beta = j.value("beta", c.beta);
        c.lambda_g = j.value("lambda_g", c.lambda_g);
        c.lambda_c = j.value("lambda_c", c.lambda_c);
        c.lambda_div = j.value("lambda_div", c.lambda_div);
        c.lambda_cons = j.value("lambda_cons", c.lambda_cons);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.epochs = j.value("epochs", c.epochs);
        c.source_epochs = j.value("source_epochs", c.source_epochs);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.source_learning_rate = j.value("source_learning_rate", c.source_learning_rate);
        c.lr_multiplier = j.value("lr_multiplier", c.lr_multiplier);
        c.momentum = j.value("momentum", c.momentum);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.grl_coefficient = j.value("grl_coefficient", c.grl_coefficient);
        c.seed = j.value("seed", c.seed);
        if (j.contains("selection")) c.selection = selection_from_string(j["selection"].get<std::string>());
        c.mixup = j.value("mixup", c.mixup);
        c.mixup_count = j.value("mixup_count", c.mixup_count);
        c.a_distance_every = j.value("a_distance_every", c.a_distance_every);
        if (j.contains("a_distance_mode"))
            c.a_distance_mode = a_distance_mode_from_string(j["a_distance_mode"].get<std::string>());
        if (j.contains("architecture")) {
            nlohmann::json merged = nlohmann::json::parse(c.architecture.to_json().dump());
            merged.update(j["architecture"]);
            c.architecture = Architecture::from_json(merged);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("training config: ") + e.what());
    }
    c.validate();
    return c;
}

}  // namespace psda
