#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "psda/config.hpp"
#include "psda/data.hpp"
#include "psda/metrics.hpp"
#include "psda/nets.hpp"

namespace psda {

struct SourceTrainingResult {
    Model model;
    RunReport report;
    double train_accuracy = 0.0;
};

// Minibatch SGD on the label-smoothed cross-entropy. Throws ConfigError on
// an empty or unlabeled dataset.
SourceTrainingResult train_source(const Dataset& labeled, const TrainingConfig& cfg);

// Read access to held-out target labels. The adaptation loop only ever sees
// scalar summaries through this interface.
class Evaluator {
public:
    virtual ~Evaluator() = default;
    virtual double accuracy(const Model& model) const = 0;
    // Agreement of `predicted` with the hidden labels at target rows `rows`.
    virtual double label_agreement(std::span<const std::size_t> rows,
                                   std::span<const std::size_t> predicted) const = 0;
    // Source samples for source-vs-target A-distance, when available.
    virtual const Matrix* source_samples() const { return nullptr; }
};

class DatasetEvaluator final : public Evaluator {
public:
    explicit DatasetEvaluator(Dataset labeled, std::optional<Matrix> source = std::nullopt);
    double accuracy(const Model& model) const override;
    double label_agreement(std::span<const std::size_t> rows,
                           std::span<const std::size_t> predicted) const override;
    const Matrix* source_samples() const override { return source_ ? &*source_ : nullptr; }

private:
    Dataset data_;
    std::optional<Matrix> source_;
};

// Per-step hooks, called after the adversarial/constrain step and after the
// diversity/classification step of every minibatch.
struct AdaptObserver {
    std::function<void(const Model& target, const Discriminator& d)> after_alignment_step;
    std::function<void(const Model& target, const Discriminator& d)> after_classification_step;
};

struct AdaptResult {
    Model target;
    Discriminator discriminator;
    RunReport report;
};

// The alternating pseudo-source adaptation loop. `source` is frozen in place
// and never updated. Per minibatch: entropy split through the frozen source,
// mixup of the pseudo-source part, one SGD step on
// lambda_cons * L_cons + lambda_g * L_adv (feature extractor and
// discriminator), then one SGD step on lambda_div * L_div + lambda_c * L_cls
// (feature extractor and target classifier).
// Throws ConfigError on an empty target or batch_size < 2.
AdaptResult adapt(Model& source, const UnlabeledDataset& target, const TrainingConfig& cfg,
                  const Evaluator* evaluator = nullptr, const AdaptObserver* observer = nullptr);

// d_A between pseudo-source and remaining features of `model`, with the
// split computed over the full target set through the frozen source.
double pseudo_source_a_distance(const Model& frozen_source, const Model& model,
                                const Matrix& target, double alpha, std::uint64_t seed);

enum class Variant {
    kEntropyMixup,
    kRandomMixup,
    kEntropyNoMixup,
    kClsOnly,
    kClsDiv,
    kClsDivCons,
    kFull,
};

std::string to_string(Variant v);
// Accepts the canonical names; "entropy-mixup" may also be written with a
// Unicode minus sign. Throws ConfigError listing the valid names.
Variant variant_from_string(const std::string& name);
const std::vector<std::string>& variant_names();

// Switches the config for one ablation variant.
TrainingConfig apply_variant(TrainingConfig cfg, Variant v);

// adapt() with the variant's switches; the report records the variant.
AdaptResult run_ablation(Variant v, Model& source, const UnlabeledDataset& target,
                         const TrainingConfig& cfg, const Evaluator* evaluator = nullptr);

}  // namespace psda
