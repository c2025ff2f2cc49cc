#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "psda/data.hpp"
#include "psda/matrix.hpp"
#include "psda/nets.hpp"

namespace psda {

// Fraction of argmax predictions of `model` equal to the dataset labels.
// Throws ConfigError on an empty or unlabeled set.
double accuracy(const Model& model, const Dataset& labeled_eval);
double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> truth);

struct ProbeOptions {
    std::size_t steps = 500;
    double learning_rate = 0.1;
    std::size_t repeats = 10;  // probes averaged, each on a fresh subsample
};

// Proxy A-distance 2(1 - 2 eps) clamped to [0, 2], where eps is the mean
// test error of `repeats` logistic domain probes. For each probe the larger
// set is subsampled to the size of the smaller one, each domain is split
// 50/50 into train and test, and features are standardized with train
// statistics. Throws ConfigError
// when a domain has fewer than 4 samples.
double a_distance(const Matrix& feats_a, const Matrix& feats_b, std::uint64_t seed,
                  const ProbeOptions& options = {});

// One CSV row per sample: f0..f{d-1}, domain, label (empty when unknown),
// pseudo_label (argmax of `model`).
void export_embeddings(const Model& model, const Dataset& dataset, const std::string& path);
std::string format_embeddings(const Model& model, const Dataset& dataset);

struct EmbeddingTable {
    Matrix features;
    std::vector<std::string> domain;
    std::vector<std::optional<std::size_t>> label;
    std::vector<std::size_t> pseudo_label;
};

EmbeddingTable parse_embeddings(const std::string& text);

// Per-epoch metrics. Loss terms keep insertion order in the serialized form.
struct EpochRecord {
    std::size_t epoch = 0;
    std::vector<std::pair<std::string, double>> losses;
    std::optional<double> target_accuracy;
    std::optional<double> pseudo_label_accuracy;
    std::optional<double> a_distance;
};

struct RunReport {
    std::string kind;     // "train-source" or "adapt"
    std::string variant;  // ablation variant, empty otherwise
    std::uint64_t seed = 0;
    nlohmann::ordered_json config;
    nlohmann::ordered_json loss_weights;
    std::string a_distance_mode;
    std::vector<EpochRecord> epochs;
    std::vector<std::pair<std::string, double>> summary;
    // Kept out of to_json(), so reports of identical runs are byte-identical.
    double wall_clock_seconds = 0.0;

    void set_summary(const std::string& key, double value);
    std::optional<double> summary_value(const std::string& key) const;

    // Throws NumericError on a non-finite loss or an out-of-range metric.
    void validate() const;

    nlohmann::ordered_json to_json() const;
    std::string to_json_string() const;  // pretty-printed, trailing newline
    std::string epochs_csv() const;
};

}  // namespace psda
