#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "psda/autodiff.hpp"
#include "psda/rng.hpp"

namespace psda {

enum class Activation { kTanh, kRelu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

// Optimizer parameter groups. Classifier and discriminator groups train with
// a multiplied learning rate.
enum class ParamGroup { kFeatureExtractor, kClassifier, kDiscriminator };

struct NamedParameter {
    std::string name;
    ad::Tensor tensor;
    ParamGroup group;
};

// Layer sizes of the feature extractor / classifier pair.
struct Architecture {
    std::size_t input_dim = 2;
    std::vector<std::size_t> hidden = {64, 64};
    std::size_t feature_dim = 16;
    std::size_t num_classes = 2;
    Activation activation = Activation::kTanh;
    std::size_t discriminator_hidden = 32;

    nlohmann::ordered_json to_json() const;
    static Architecture from_json(const nlohmann::json& j);
};

// Fully connected stack; the activation follows every layer, including the
// last. Copies are deep.
class FeatureExtractor {
public:
    FeatureExtractor() = default;
    // widths = {input_dim, hidden..., feature_dim}
    FeatureExtractor(std::vector<std::size_t> widths, Activation activation, Rng& rng);

    FeatureExtractor(const FeatureExtractor& other);
    FeatureExtractor& operator=(const FeatureExtractor& other);
    FeatureExtractor(FeatureExtractor&&) noexcept = default;
    FeatureExtractor& operator=(FeatureExtractor&&) noexcept = default;

    ad::Tensor forward(ad::Tape& tape, const ad::Tensor& x) const;

    std::size_t input_dim() const { return widths_.front(); }
    std::size_t feature_dim() const { return widths_.back(); }
    const std::vector<std::size_t>& widths() const { return widths_; }
    Activation activation() const { return activation_; }

    // Stable order: layer by layer, weight before bias.
    std::vector<NamedParameter> parameters() const;

private:
    struct Layer {
        ad::Tensor weight;  // (in x out)
        ad::Tensor bias;    // (1 x out)
    };

    std::vector<std::size_t> widths_;
    Activation activation_ = Activation::kTanh;
    std::vector<Layer> layers_;
};

// Weight-normalized linear classifier without bias: row k of the effective
// weight is scale_k * V_k / |V_k|.
class Classifier {
public:
    Classifier() = default;
    Classifier(std::size_t feature_dim, std::size_t num_classes, Rng& rng);

    Classifier(const Classifier& other);
    Classifier& operator=(const Classifier& other);
    Classifier(Classifier&&) noexcept = default;
    Classifier& operator=(Classifier&&) noexcept = default;

    // Raw logits (batch x K). Throws NumericError when some |V_k| < 1e-12.
    ad::Tensor forward(ad::Tape& tape, const ad::Tensor& features) const;

    std::size_t feature_dim() const { return direction_.cols(); }
    std::size_t num_classes() const { return direction_.rows(); }

    ad::Tensor& direction() { return direction_; }  // (K x feature_dim)
    ad::Tensor& scale() { return scale_; }          // (1 x K)
    const ad::Tensor& direction() const { return direction_; }
    const ad::Tensor& scale() const { return scale_; }

    std::vector<NamedParameter> parameters() const;

private:
    ad::Tensor direction_;
    ad::Tensor scale_;
};

// feature_dim -> hidden (ReLU) -> 1 (sigmoid).
class Discriminator {
public:
    Discriminator() = default;
    Discriminator(std::size_t feature_dim, std::size_t hidden, Rng& rng);

    Discriminator(const Discriminator& other);
    Discriminator& operator=(const Discriminator& other);
    Discriminator(Discriminator&&) noexcept = default;
    Discriminator& operator=(Discriminator&&) noexcept = default;

    // Per-sample probability of the pseudo-source domain, (batch x 1).
    ad::Tensor forward(ad::Tape& tape, const ad::Tensor& features) const;

    std::vector<NamedParameter> parameters() const;

private:
    ad::Tensor w1_, b1_, w2_, b2_;
};

// Feature extractor g and classifier f; F(x) = f(g(x)).
class Model {
public:
    Model() = default;
    Model(const Architecture& arch, Rng& rng);
    Model(Architecture arch, FeatureExtractor extractor, Classifier classifier);

    const Architecture& architecture() const { return arch_; }
    FeatureExtractor& extractor() { return extractor_; }
    Classifier& classifier() { return classifier_; }
    const FeatureExtractor& extractor() const { return extractor_; }
    const Classifier& classifier() const { return classifier_; }

    ad::Tensor logits(ad::Tape& tape, const ad::Tensor& x) const;

    // Forward passes without recording anything.
    Matrix features(const Matrix& x) const;
    Matrix logits(const Matrix& x) const;
    std::vector<std::size_t> predict(const Matrix& x) const;

    // Extractor parameters followed by classifier parameters.
    std::vector<NamedParameter> parameters() const;

    // A frozen model never requires gradients, so no optimizer step can
    // reach it.
    void freeze();
    void unfreeze();
    bool frozen() const { return frozen_; }

private:
    Architecture arch_;
    FeatureExtractor extractor_;
    Classifier classifier_;
    bool frozen_ = false;
};

// Target model initialized as a deep copy of the source. The source itself
// is frozen in place.
Model init_target_from_source(Model& source);

// Forward identity; backward multiplies the gradient by -coefficient.
inline ad::Tensor gradient_reversal(ad::Tape& tape, const ad::Tensor& features,
                                    double coefficient) {
    return ad::grl(tape, features, coefficient);
}

// Checkpoint container: "PSMODEL1", u32 parameter count, then per parameter
// u32 name length, UTF-8 name, u32 rows, u32 cols, row-major f64 values;
// finally u32 config length and the config JSON. All integers and floats are
// little-endian.
void save_checkpoint(const std::string& path, const Model& model,
                     const nlohmann::ordered_json& config);

struct LoadedCheckpoint {
    Model model;
    nlohmann::json config;
};

// The config must carry an "architecture" object.
LoadedCheckpoint load_checkpoint(const std::string& path);

std::string encode_checkpoint(const Model& model, const nlohmann::ordered_json& config);
LoadedCheckpoint decode_checkpoint(const std::string& bytes);

}  // namespace psda
