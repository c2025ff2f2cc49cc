#include "psda/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "psda/error.hpp"
#include "psda/rng.hpp"

namespace psda {

double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> truth) {
    if (truth.empty()) throw ConfigError("accuracy: empty evaluation set");
    if (predicted.size() != truth.size())
        throw ConfigError("accuracy: prediction and label counts differ");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double accuracy(const Model& model, const Dataset& labeled_eval) {
    if (!labeled_eval.labeled()) throw ConfigError("accuracy: evaluation set has no labels");
    if (labeled_eval.size() == 0) throw ConfigError("accuracy: empty evaluation set");
    return accuracy(model.predict(labeled_eval.samples), *labeled_eval.labels);
}

// --- A-distance --------------------------------------------------------------

namespace {

struct ProbeData {
    Matrix x;
    std::vector<double> y;
};

ProbeData stack(const Matrix& a, std::span<const std::size_t> ia, const Matrix& b,
                std::span<const std::size_t> ib) {
    ProbeData out{Matrix(ia.size() + ib.size(), a.cols()), {}};
    std::size_t r = 0;
    for (std::size_t i : ia) {
        std::copy(a.row(i).begin(), a.row(i).end(), out.x.row(r++).begin());
        out.y.push_back(1.0);
    }
    for (std::size_t i : ib) {
        std::copy(b.row(i).begin(), b.row(i).end(), out.x.row(r++).begin());
        out.y.push_back(0.0);
    }
    return out;
}

// Test error of one logistic probe on a fresh balanced subsample.
double probe_error(const Matrix& feats_a, const Matrix& feats_b, Rng& rng,
                   const ProbeOptions& options) {
    const std::size_t n = std::min(feats_a.rows(), feats_b.rows());
    auto draw = [&rng, n](std::size_t total) {
        std::vector<std::size_t> idx(total);
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(n);
        return idx;
    };
    const auto ia = draw(feats_a.rows());
    const auto ib = draw(feats_b.rows());
    const std::size_t half = n / 2;
    const std::span<const std::size_t> sa(ia), sb(ib);
    ProbeData train = stack(feats_a, sa.first(half), feats_b, sb.first(half));
    ProbeData test = stack(feats_a, sa.subspan(half), feats_b, sb.subspan(half));

    const std::size_t d = train.x.cols();
    std::vector<double> mu(d, 0.0), sd(d, 0.0);
    for (std::size_t i = 0; i < train.x.rows(); ++i)
        for (std::size_t c = 0; c < d; ++c) mu[c] += train.x(i, c);
    for (double& m : mu) m /= static_cast<double>(train.x.rows());
    for (std::size_t i = 0; i < train.x.rows(); ++i)
        for (std::size_t c = 0; c < d; ++c) sd[c] += std::pow(train.x(i, c) - mu[c], 2);
    for (double& s : sd) s = std::max(std::sqrt(s / static_cast<double>(train.x.rows())), 1e-8);
    for (Matrix* m : {&train.x, &test.x})
        for (std::size_t i = 0; i < m->rows(); ++i)
            for (std::size_t c = 0; c < d; ++c) (*m)(i, c) = ((*m)(i, c) - mu[c]) / sd[c];

    // Full-batch gradient descent on the mean logistic loss.
    std::vector<double> w(d, 0.0), gw(d);
    double b = 0.0;
    const double inv_n = 1.0 / static_cast<double>(train.x.rows());
    auto logit = [&](const Matrix& x, std::size_t i) {
        double s = b;
        for (std::size_t c = 0; c < d; ++c) s += w[c] * x(i, c);
        return s;
    };
    for (std::size_t step = 0; step < options.steps; ++step) {
        std::fill(gw.begin(), gw.end(), 0.0);
        double gb = 0.0;
        for (std::size_t i = 0; i < train.x.rows(); ++i) {
            const double z = logit(train.x, i);
            const double p = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
            const double r = p - train.y[i];
            for (std::size_t c = 0; c < d; ++c) gw[c] += r * train.x(i, c);
            gb += r;
        }
        for (std::size_t c = 0; c < d; ++c) w[c] -= options.learning_rate * gw[c] * inv_n;
        b -= options.learning_rate * gb * inv_n;
    }

    std::size_t errors = 0;
    for (std::size_t i = 0; i < test.x.rows(); ++i) {
        const double predicted = logit(test.x, i) >= 0.0 ? 1.0 : 0.0;
        errors += predicted != test.y[i] ? 1 : 0;
    }
    return static_cast<double>(errors) / static_cast<double>(test.x.rows());
}

}  // namespace

double a_distance(const Matrix& feats_a, const Matrix& feats_b, std::uint64_t seed,
                  const ProbeOptions& options) {
    if (feats_a.rows() < 4 || feats_b.rows() < 4)
        throw ConfigError("a_distance: need at least 4 samples per domain, got " +
                          std::to_string(feats_a.rows()) + " and " +
                          std::to_string(feats_b.rows()));
    if (feats_a.cols() != feats_b.cols())
        throw ConfigError("a_distance: feature dimensions differ " + feats_a.shape_string() +
                          " vs " + feats_b.shape_string());
    if (options.repeats == 0) throw ConfigError("a_distance: repeats must be positive");
    Rng rng(seed);
    double eps = 0.0;
    for (std::size_t r = 0; r < options.repeats; ++r) eps += probe_error(feats_a, feats_b, rng, options);
    eps /= static_cast<double>(options.repeats);
    return std::clamp(2.0 * (1.0 - 2.0 * eps), 0.0, 2.0);
}

// --- Embedding export --------------------------------------------------------

std::string format_embeddings(const Model& model, const Dataset& dataset) {
    const Matrix z = model.features(dataset.samples);
    const auto pseudo = model.predict(dataset.samples);
    std::string out;
    for (std::size_t c = 0; c < z.cols(); ++c) out += "f" + std::to_string(c) + ",";
    out += "domain,label,pseudo_label\n";
    for (std::size_t i = 0; i < z.rows(); ++i) {
        for (std::size_t c = 0; c < z.cols(); ++c) out += format_double(z(i, c)) + ",";
        out += to_string(dataset.domain) + ",";
        if (dataset.labeled()) out += std::to_string((*dataset.labels)[i]);
        out += "," + std::to_string(pseudo[i]) + "\n";
    }
    return out;
}

void export_embeddings(const Model& model, const Dataset& dataset, const std::string& path) {
    const std::string text = format_embeddings(model, dataset);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw DataError("failed writing '" + path + "'");
}

EmbeddingTable parse_embeddings(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw DataError("embeddings: missing header");
    const std::size_t d = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) - 2;
    EmbeddingTable t;
    std::vector<double> values;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::string field;
        std::istringstream ss(line);
        while (std::getline(ss, field, ',')) f.push_back(field);
        if (line.back() == ',') f.emplace_back();
        if (f.size() != d + 3)
            throw DataError("embeddings line " + std::to_string(line_no) + ": wrong field count");
        for (std::size_t c = 0; c < d; ++c) {
            double v = 0.0;
            std::from_chars(f[c].data(), f[c].data() + f[c].size(), v);
            values.push_back(v);
        }
        t.domain.push_back(f[d]);
        if (f[d + 1].empty()) {
            t.label.emplace_back();
        } else {
            t.label.emplace_back(std::stoul(f[d + 1]));
        }
        t.pseudo_label.push_back(std::stoul(f[d + 2]));
    }
    t.features = Matrix(t.pseudo_label.size(), d, std::move(values));
    return t;
}

// --- RunReport ---------------------------------------------------------------

void RunReport::set_summary(const std::string& key, double value) {
    for (auto& [k, v] : summary) {
        if (k == key) {
            v = value;
            return;
        }
    }
    summary.emplace_back(key, value);
}

std::optional<double> RunReport::summary_value(const std::string& key) const {
    for (const auto& [k, v] : summary)
        if (k == key) return v;
    return std::nullopt;
}

void RunReport::validate() const {
    for (const auto& e : epochs) {
        for (const auto& [name, v] : e.losses)
            if (!std::isfinite(v))
                throw NumericError("epoch " + std::to_string(e.epoch) + ": loss '" + name +
                                   "' is not finite");
        for (const auto& acc : {e.target_accuracy, e.pseudo_label_accuracy})
            if (acc && !(*acc >= 0.0 && *acc <= 1.0))
                throw NumericError("epoch " + std::to_string(e.epoch) + ": accuracy out of range");
        if (e.a_distance && !(*e.a_distance >= 0.0 && *e.a_distance <= 2.0))
            throw NumericError("epoch " + std::to_string(e.epoch) + ": A-distance out of range");
    }
}

nlohmann::ordered_json RunReport::to_json() const {
    nlohmann::ordered_json j;
    j["kind"] = kind;
    if (!variant.empty()) j["variant"] = variant;
    j["seed"] = seed;
    j["config"] = config;
    if (!loss_weights.is_null()) j["loss_weights"] = loss_weights;
    if (!a_distance_mode.empty()) j["a_distance_mode"] = a_distance_mode;
    nlohmann::ordered_json s = nlohmann::ordered_json::object();
    for (const auto& [k, v] : summary) s[k] = v;
    j["summary"] = s;
    nlohmann::ordered_json records = nlohmann::ordered_json::array();
    for (const auto& e : epochs) {
        nlohmann::ordered_json r;
        r["epoch"] = e.epoch;
        nlohmann::ordered_json l = nlohmann::ordered_json::object();
        for (const auto& [k, v] : e.losses) l[k] = v;
        r["losses"] = l;
        if (e.target_accuracy) r["target_accuracy"] = *e.target_accuracy;
        if (e.pseudo_label_accuracy) r["pseudo_label_accuracy"] = *e.pseudo_label_accuracy;
        if (e.a_distance) r["a_distance"] = *e.a_distance;
        records.push_back(std::move(r));
    }
    j["epochs"] = std::move(records);
    return j;
}

std::string RunReport::to_json_string() const { return to_json().dump(2) + "\n"; }

std::string RunReport::epochs_csv() const {
    std::vector<std::string> loss_names;
    for (const auto& e : epochs)
        for (const auto& [k, v] : e.losses)
            if (std::find(loss_names.begin(), loss_names.end(), k) == loss_names.end())
                loss_names.push_back(k);
    std::string out = "epoch";
    for (const auto& k : loss_names) out += "," + k;
    out += ",target_accuracy,pseudo_label_accuracy,a_distance\n";
    auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
    for (const auto& e : epochs) {
        out += std::to_string(e.epoch);
        for (const auto& k : loss_names) {
            out += ",";
            for (const auto& [name, v] : e.losses)
                if (name == k) out += format_double(v);
        }
        out += "," + opt(e.target_accuracy) + "," + opt(e.pseudo_label_accuracy) + "," +
               opt(e.a_distance) + "\n";
    }
    return out;
}

}  // namespace psda
