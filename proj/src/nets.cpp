#include "psda/nets.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "psda/error.hpp"

namespace psda {

namespace {

// Glorot-uniform in [-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))].
Matrix glorot(std::size_t rows, std::size_t cols, std::size_t fan_in, std::size_t fan_out,
              Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix m(rows, cols);
    for (double& v : m.data()) v = dist(rng);
    return m;
}

ad::Tensor param(Matrix value) { return ad::Tensor::leaf(std::move(value), true); }

ad::Tensor clone_param(const ad::Tensor& t) { return t.defined() ? t.clone() : t; }

}  // namespace

std::string to_string(Activation a) { return a == Activation::kTanh ? "tanh" : "relu"; }

Activation activation_from_string(const std::string& name) {
    if (name == "tanh") return Activation::kTanh;
    if (name == "relu") return Activation::kRelu;
    throw ConfigError("unknown activation '" + name + "' (expected tanh or relu)");
}

nlohmann::ordered_json Architecture::to_json() const {
    nlohmann::ordered_json j;
    j["input_dim"] = input_dim;
    j["hidden"] = hidden;
    j["feature_dim"] = feature_dim;
    j["num_classes"] = num_classes;
    j["activation"] = to_string(activation);
    j["discriminator_hidden"] = discriminator_hidden;
    return j;
}

Architecture Architecture::from_json(const nlohmann::json& j) {
    Architecture a;
    try {
        a.input_dim = j.value("input_dim", a.input_dim);
        a.hidden = j.value("hidden", a.hidden);
        a.feature_dim = j.value("feature_dim", a.feature_dim);
        a.num_classes = j.value("num_classes", a.num_classes);
        a.activation = activation_from_string(j.value("activation", to_string(a.activation)));
        a.discriminator_hidden = j.value("discriminator_hidden", a.discriminator_hidden);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("architecture: ") + e.what());
    }
    if (a.input_dim == 0 || a.feature_dim == 0 || a.discriminator_hidden == 0)
        throw ConfigError("architecture: layer widths must be positive");
    if (a.num_classes < 2) throw ConfigError("architecture: num_classes must be >= 2");
    return a;
}

// --- FeatureExtractor -------------------------------------------------------

FeatureExtractor::FeatureExtractor(std::vector<std::size_t> widths, Activation activation,
                                   Rng& rng)
    : widths_(std::move(widths)), activation_(activation) {
    if (widths_.size() < 2) throw ConfigError("FeatureExtractor: need at least two widths");
    for (std::size_t i = 0; i + 1 < widths_.size(); ++i) {
        const std::size_t in = widths_[i];
        const std::size_t out = widths_[i + 1];
        layers_.push_back({param(glorot(in, out, in, out, rng)), param(Matrix(1, out))});
    }
}

FeatureExtractor::FeatureExtractor(const FeatureExtractor& other)
    : widths_(other.widths_), activation_(other.activation_) {
    for (const auto& l : other.layers_) layers_.push_back({clone_param(l.weight), clone_param(l.bias)});
}

FeatureExtractor& FeatureExtractor::operator=(const FeatureExtractor& other) {
    if (this != &other) *this = FeatureExtractor(other);
    return *this;
}

ad::Tensor FeatureExtractor::forward(ad::Tape& tape, const ad::Tensor& x) const {
    if (x.cols() != input_dim()) {
        throw ConfigError("FeatureExtractor: input has " + std::to_string(x.cols()) +
                          " columns, expected " + std::to_string(input_dim()));
    }
    ad::Tensor h = x;
    for (const auto& layer : layers_) {
        h = ad::add(tape, ad::matmul(tape, h, layer.weight), layer.bias);
        h = activation_ == Activation::kTanh ? ad::tanh(tape, h) : ad::relu(tape, h);
    }
    return h;
}

std::vector<NamedParameter> FeatureExtractor::parameters() const {
    std::vector<NamedParameter> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const std::string prefix = "g." + std::to_string(i);
        out.push_back({prefix + ".weight", layers_[i].weight, ParamGroup::kFeatureExtractor});
        out.push_back({prefix + ".bias", layers_[i].bias, ParamGroup::kFeatureExtractor});
    }
    return out;
}

// --- Classifier ------------------------------------------------------------

Classifier::Classifier(std::size_t feature_dim, std::size_t num_classes, Rng& rng) {
    Matrix v = glorot(num_classes, feature_dim, feature_dim, num_classes, rng);
    // Scales start at the row norms, so the effective weight equals V.
    Matrix g(1, num_classes);
    for (std::size_t k = 0; k < num_classes; ++k) {
        double s = 0.0;
        for (double x : v.row(k)) s += x * x;
        g[k] = std::sqrt(s);
    }
    direction_ = param(std::move(v));
    scale_ = param(std::move(g));
}

Classifier::Classifier(const Classifier& other)
    : direction_(clone_param(other.direction_)), scale_(clone_param(other.scale_)) {}

Classifier& Classifier::operator=(const Classifier& other) {
    if (this != &other) *this = Classifier(other);
    return *this;
}

ad::Tensor Classifier::forward(ad::Tape& tape, const ad::Tensor& features) const {
    if (features.cols() != feature_dim()) {
        throw ConfigError("Classifier: features have " + std::to_string(features.cols()) +
                          " columns, expected " + std::to_string(feature_dim()));
    }
    const Matrix& v = direction_.value();
    for (std::size_t k = 0; k < v.rows(); ++k) {
        double s = 0.0;
        for (double x : v.row(k)) s += x * x;
        if (std::sqrt(s) < 1e-12) {
            throw NumericError("Classifier: degenerate direction for class " + std::to_string(k) +
                               " (norm < 1e-12)");
        }
    }
    ad::Tensor unit = ad::l2_normalize_rows(tape, direction_);
    ad::Tensor weight = ad::mul(tape, unit, ad::transpose(tape, scale_));  // (K x d)
    return ad::matmul(tape, features, ad::transpose(tape, weight));
}

std::vector<NamedParameter> Classifier::parameters() const {
    return {{"f.direction", direction_, ParamGroup::kClassifier},
            {"f.scale", scale_, ParamGroup::kClassifier}};
}

// --- Discriminator ---------------------------------------------------------

Discriminator::Discriminator(std::size_t feature_dim, std::size_t hidden, Rng& rng)
    : w1_(param(glorot(feature_dim, hidden, feature_dim, hidden, rng))),
      b1_(param(Matrix(1, hidden))),
      w2_(param(glorot(hidden, 1, hidden, 1, rng))),
      b2_(param(Matrix(1, 1))) {}

Discriminator::Discriminator(const Discriminator& other)
    : w1_(clone_param(other.w1_)),
      b1_(clone_param(other.b1_)),
      w2_(clone_param(other.w2_)),
      b2_(clone_param(other.b2_)) {}

Discriminator& Discriminator::operator=(const Discriminator& other) {
    if (this != &other) *this = Discriminator(other);
    return *this;
}

ad::Tensor Discriminator::forward(ad::Tape& tape, const ad::Tensor& features) const {
    if (features.cols() != w1_.rows()) {
        throw ConfigError("Discriminator: features have " + std::to_string(features.cols()) +
                          " columns, expected " + std::to_string(w1_.rows()));
    }
    ad::Tensor h = ad::relu(tape, ad::add(tape, ad::matmul(tape, features, w1_), b1_));
    return ad::sigmoid(tape, ad::add(tape, ad::matmul(tape, h, w2_), b2_));
}

std::vector<NamedParameter> Discriminator::parameters() const {
    return {{"d.0.weight", w1_, ParamGroup::kDiscriminator},
            {"d.0.bias", b1_, ParamGroup::kDiscriminator},
            {"d.1.weight", w2_, ParamGroup::kDiscriminator},
            {"d.1.bias", b2_, ParamGroup::kDiscriminator}};
}

// --- Model -----------------------------------------------------------------

namespace {

std::vector<std::size_t> extractor_widths(const Architecture& arch) {
    std::vector<std::size_t> w{arch.input_dim};
    w.insert(w.end(), arch.hidden.begin(), arch.hidden.end());
    w.push_back(arch.feature_dim);
    return w;
}

}  // namespace

Model::Model(const Architecture& arch, Rng& rng)
    : arch_(arch),
      extractor_(extractor_widths(arch), arch.activation, rng),
      classifier_(arch.feature_dim, arch.num_classes, rng) {}

Model::Model(Architecture arch, FeatureExtractor extractor, Classifier classifier)
    : arch_(std::move(arch)), extractor_(std::move(extractor)), classifier_(std::move(classifier)) {}

ad::Tensor Model::logits(ad::Tape& tape, const ad::Tensor& x) const {
    return classifier_.forward(tape, extractor_.forward(tape, x));
}

Matrix Model::features(const Matrix& x) const {
    ad::Tape tape;
    return extractor_.forward(tape, ad::Tensor::constant(x)).value();
}

Matrix Model::logits(const Matrix& x) const {
    ad::Tape tape;
    return logits(tape, ad::Tensor::constant(x)).value();
}

std::vector<std::size_t> Model::predict(const Matrix& x) const {
    return ad::argmax_rows(logits(x));
}

std::vector<NamedParameter> Model::parameters() const {
    auto out = extractor_.parameters();
    for (auto& p : classifier_.parameters()) out.push_back(std::move(p));
    return out;
}

void Model::freeze() {
    for (auto& p : parameters()) {
        p.tensor.set_requires_grad(false);
        p.tensor.clear_grad();
    }
    frozen_ = true;
}

void Model::unfreeze() {
    for (auto& p : parameters()) p.tensor.set_requires_grad(true);
    frozen_ = false;
}

Model init_target_from_source(Model& source) {
    Model target = source;  // deep copy
    target.unfreeze();
    source.freeze();
    return target;
}

// --- Checkpoints -------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'P', 'S', 'M', 'O', 'D', 'E', 'L', '1'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void put_u32(std::string& out, std::uint32_t v) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    out.append(buf, 4);
}

void put_f64(std::string& out, double v) {
    char buf[8];
    std::memcpy(buf, &v, 8);
    out.append(buf, 8);
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    void need(std::size_t n, const char* what) const {
        if (pos_ + n > bytes_.size()) {
            throw DataError(std::string("checkpoint truncated while reading ") + what +
                            " at offset " + std::to_string(pos_));
        }
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v;
        std::memcpy(&v, bytes_.data() + pos_, 4);
        pos_ += 4;
        return v;
    }
    double f64(const char* what) {
        need(8, what);
        double v;
        std::memcpy(&v, bytes_.data() + pos_, 8);
        pos_ += 8;
        return v;
    }
    std::string str(std::size_t n, const char* what) {
        need(n, what);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ == bytes_.size(); }

private:
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Model& model, const nlohmann::ordered_json& config) {
    std::string out(kMagic, sizeof(kMagic));
    const auto params = model.parameters();
    put_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        put_u32(out, static_cast<std::uint32_t>(p.name.size()));
        out += p.name;
        const Matrix& v = p.tensor.value();
        put_u32(out, static_cast<std::uint32_t>(v.rows()));
        put_u32(out, static_cast<std::uint32_t>(v.cols()));
        for (double x : v.data()) put_f64(out, x);
    }
    nlohmann::ordered_json cfg = config;
    cfg["architecture"] = model.architecture().to_json();
    const std::string blob = cfg.dump();
    put_u32(out, static_cast<std::uint32_t>(blob.size()));
    out += blob;
    return out;
}

LoadedCheckpoint decode_checkpoint(const std::string& bytes) {
    Reader in(bytes);
    if (in.str(sizeof(kMagic), "magic") != std::string(kMagic, sizeof(kMagic)))
        throw DataError("checkpoint: bad magic (expected PSMODEL1)");
    const std::uint32_t count = in.u32("parameter count");
    std::vector<std::pair<std::string, Matrix>> values;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t len = in.u32("name length");
        std::string name = in.str(len, "name");
        const std::uint32_t rows = in.u32("rows");
        const std::uint32_t cols = in.u32("cols");
        in.need(static_cast<std::size_t>(rows) * cols * 8, "values");
        Matrix m(rows, cols);
        for (double& v : m.data()) v = in.f64("values");
        values.emplace_back(std::move(name), std::move(m));
    }
    const std::uint32_t cfg_len = in.u32("config length");
    const std::string blob = in.str(cfg_len, "config");
    if (!in.done()) throw DataError("checkpoint: trailing bytes at offset " + std::to_string(in.pos()));

    LoadedCheckpoint out;
    try {
        out.config = nlohmann::json::parse(blob);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint: config is not valid JSON: ") + e.what());
    }
    if (!out.config.contains("architecture"))
        throw DataError("checkpoint: config has no architecture block");
    Architecture arch;
    try {
        arch = Architecture::from_json(out.config["architecture"]);
    } catch (const ConfigError& e) {
        throw DataError(std::string("checkpoint: ") + e.what());
    }
    Rng rng(0);
    out.model = Model(arch, rng);
    auto params = out.model.parameters();
    if (params.size() != values.size()) {
        throw DataError("checkpoint: expected " + std::to_string(params.size()) +
                        " parameters, found " + std::to_string(values.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].name != values[i].first)
            throw DataError("checkpoint: expected parameter '" + params[i].name + "', found '" +
                            values[i].first + "'");
        if (!params[i].tensor.value().same_shape(values[i].second))
            throw DataError("checkpoint: parameter '" + params[i].name + "' has shape " +
                            values[i].second.shape_string() + ", expected " +
                            params[i].tensor.value().shape_string());
        params[i].tensor.mutable_value() = std::move(values[i].second);
    }
    return out;
}

void save_checkpoint(const std::string& path, const Model& model,
                     const nlohmann::ordered_json& config) {
    const std::string bytes = encode_checkpoint(model, config);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing '" + path + "'");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return decode_checkpoint(ss.str());
}

}  // namespace psda
