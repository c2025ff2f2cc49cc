#include "psda/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "psda/error.hpp"
#include "psda/rng.hpp"

namespace psda {

std::string to_string(DomainTag tag) { return tag == DomainTag::kSource ? "source" : "target"; }

void Dataset::validate() const {
    if (!labels) return;
    if (labels->size() != samples.rows())
        throw DataError("dataset has " + std::to_string(labels->size()) + " labels for " +
                        std::to_string(samples.rows()) + " samples");
    for (std::size_t i = 0; i < labels->size(); ++i) {
        if ((*labels)[i] >= num_classes)
            throw DataError("row " + std::to_string(i) + ": label " + std::to_string((*labels)[i]) +
                            " outside [0, " + std::to_string(num_classes) + ")");
    }
}

UnlabeledDataset strip_labels(const Dataset& d) { return UnlabeledDataset(d.samples); }

void ShiftSpec::validate() const {
    if (!(noise >= 0.0)) throw ConfigError("shift noise std must be nonnegative");
    if (num_classes < 2) throw ConfigError("shift spec needs at least 2 classes");
}

namespace {

// Rotates about (cx, cy), then translates.
void apply_shift(Matrix& pts, const ShiftSpec& spec, double cx, double cy) {
    if (pts.cols() != 2) throw ConfigError("synthetic shifts are defined for 2-D samples");
    if (spec.translation.size() != 2) throw ConfigError("translation must have 2 components");
    const double c = std::cos(spec.rotation);
    const double s = std::sin(spec.rotation);
    for (std::size_t i = 0; i < pts.rows(); ++i) {
        if (spec.rotation != 0.0) {
            const double x = pts(i, 0) - cx;
            const double y = pts(i, 1) - cy;
            pts(i, 0) = c * x - s * y + cx;
            pts(i, 1) = s * x + c * y + cy;
        }
        pts(i, 0) += spec.translation[0];
        pts(i, 1) += spec.translation[1];
    }
}

void shuffle_rows(Matrix& samples, std::vector<std::size_t>& labels, Rng& rng) {
    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    samples = samples.select_rows(order);
    std::vector<std::size_t> shuffled(labels.size());
    for (std::size_t i = 0; i < order.size(); ++i) shuffled[i] = labels[order[i]];
    labels = std::move(shuffled);
}

DomainPair make_pair(Matrix samples, std::vector<std::size_t> labels, std::size_t k,
                     const ShiftSpec& spec, double cx, double cy) {
    DomainPair out;
    out.source = Dataset{samples, labels, DomainTag::kSource, k};
    apply_shift(samples, spec, cx, cy);
    out.target = Dataset{std::move(samples), std::move(labels), DomainTag::kTarget, k};
    return out;
}

}  // namespace

DomainPair gen_two_moons(std::size_t n, const ShiftSpec& spec, std::uint64_t seed) {
    spec.validate();
    if (n < 4) throw ConfigError("gen_two_moons: n must be at least 4");
    Rng rng(seed);
    std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
    std::normal_distribution<double> noise(0.0, 1.0);
    Matrix samples(n, 2);
    std::vector<std::size_t> labels(n);
    const std::size_t n_outer = (n + 1) / 2;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = angle(rng);
        const bool outer = i < n_outer;
        double x = outer ? std::cos(t) : 1.0 - std::cos(t);
        double y = outer ? std::sin(t) : 0.5 - std::sin(t);
        x += spec.noise * noise(rng);
        y += spec.noise * noise(rng);
        samples(i, 0) = x;
        samples(i, 1) = y;
        labels[i] = outer ? 0 : 1;
    }
    shuffle_rows(samples, labels, rng);
    return make_pair(std::move(samples), std::move(labels), 2, spec, kMoonsCenterX, kMoonsCenterY);
}

DomainPair gen_gaussian_blobs(std::span<const std::size_t> per_class_n, const ShiftSpec& spec,
                              std::uint64_t seed, double radius) {
    spec.validate();
    const std::size_t k = per_class_n.size();
    if (k < 2) throw ConfigError("gen_gaussian_blobs: need at least 2 classes");
    for (std::size_t c = 0; c < k; ++c) {
        if (per_class_n[c] == 0)
            throw ConfigError("gen_gaussian_blobs: class " + std::to_string(c) + " has no samples");
    }
    Rng rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    const std::size_t n = std::accumulate(per_class_n.begin(), per_class_n.end(), std::size_t{0});
    Matrix samples(n, 2);
    std::vector<std::size_t> labels(n);
    std::size_t row = 0;
    for (std::size_t c = 0; c < k; ++c) {
        const double theta = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(k);
        for (std::size_t i = 0; i < per_class_n[c]; ++i, ++row) {
            samples(row, 0) = radius * std::cos(theta) + spec.noise * noise(rng);
            samples(row, 1) = radius * std::sin(theta) + spec.noise * noise(rng);
            labels[row] = c;
        }
    }
    shuffle_rows(samples, labels, rng);
    return make_pair(std::move(samples), std::move(labels), k, spec, 0.0, 0.0);
}

// --- CSV ---------------------------------------------------------------------

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string format_dataset(const Dataset& d) {
    d.validate();
    std::string out;
    for (std::size_t c = 0; c < d.dim(); ++c) {
        if (c) out += ',';
        out += "f" + std::to_string(c);
    }
    if (d.labeled()) out += ",label";
    out += '\n';
    for (std::size_t i = 0; i < d.size(); ++i) {
        for (std::size_t c = 0; c < d.dim(); ++c) {
            if (c) out += ',';
            out += format_double(d.samples(i, c));
        }
        if (d.labeled()) out += "," + std::to_string((*d.labels)[i]);
        out += '\n';
    }
    return out;
}

void save_dataset(const std::string& path, const Dataset& d) {
    const std::string text = format_dataset(d);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw DataError("failed writing '" + path + "'");
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

Dataset parse_dataset(const std::string& text, std::size_t num_classes, DomainTag domain) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw DataError("line 1: missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = split_fields(line);
    bool has_label = !header.empty() && header.back() == "label";
    if (has_label) header.pop_back();
    if (header.empty()) throw DataError("line 1: header has no feature columns");
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] != "f" + std::to_string(c))
            throw DataError("line 1: malformed header, expected column 'f" + std::to_string(c) +
                            "', found '" + header[c] + "'");
    }
    const std::size_t d = header.size();
    const std::size_t width = d + (has_label ? 1 : 0);

    std::vector<double> values;
    std::vector<std::size_t> labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_fields(line);
        if (fields.size() != width)
            throw DataError("line " + std::to_string(line_no) + ": expected " +
                            std::to_string(width) + " fields, found " +
                            std::to_string(fields.size()));
        for (std::size_t c = 0; c < d; ++c) {
            const std::string& f = fields[c];
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
            if (ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(v))
                throw DataError("line " + std::to_string(line_no) + ": column f" +
                                std::to_string(c) + " is not a finite number: '" + f + "'");
            values.push_back(v);
        }
        if (has_label) {
            const std::string& f = fields[d];
            std::size_t label = 0;
            auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), label);
            if (ec != std::errc() || ptr != f.data() + f.size())
                throw DataError("line " + std::to_string(line_no) + ": label is not an integer: '" +
                                f + "'");
            if (label >= num_classes)
                throw DataError("line " + std::to_string(line_no) + " (row " +
                                std::to_string(labels.size()) + "): label " +
                                std::to_string(label) + " outside [0, " +
                                std::to_string(num_classes) + ")");
            labels.push_back(label);
        }
    }
    Dataset out;
    const std::size_t rows = values.size() / d;
    out.samples = Matrix(rows, d, std::move(values));
    if (has_label) out.labels = std::move(labels);
    out.domain = domain;
    out.num_classes = num_classes;
    return out;
}

Dataset load_dataset(const std::string& path, std::size_t num_classes, DomainTag domain) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open dataset '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_dataset(ss.str(), num_classes, domain);
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

}  // namespace psda
