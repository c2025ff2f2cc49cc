#include "psda/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <iostream>
#include <numeric>

#include "psda/error.hpp"
#include "psda/losses.hpp"
#include "psda/optimizer.hpp"
#include "psda/pseudo_label.hpp"
#include "psda/pseudo_source.hpp"

namespace psda {

namespace {

// Shuffled minibatches of row indices. A trailing batch of one row is folded
// into its predecessor.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                   Rng& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    if (batches.size() > 1 && batches.back().size() < 2) {
        auto tail = std::move(batches.back());
        batches.pop_back();
        batches.back().insert(batches.back().end(), tail.begin(), tail.end());
    }
    return batches;
}

SgdOptions sgd_options(const TrainingConfig& cfg, double learning_rate) {
    return {learning_rate, cfg.lr_multiplier, cfg.momentum, cfg.weight_decay};
}

// Copy of the classifier that records no parameter gradients.
Classifier detached(const Classifier& c) {
    Classifier out = c;
    for (auto& p : out.parameters()) p.tensor.set_requires_grad(false);
    return out;
}

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

struct LossAccumulator {
    std::vector<std::pair<std::string, double>> totals;
    std::size_t steps = 0;

    void add(const std::string& name, double v) {
        for (auto& [k, total] : totals) {
            if (k == name) {
                total += v;
                return;
            }
        }
        totals.emplace_back(name, v);
    }
    std::vector<std::pair<std::string, double>> means() const {
        auto out = totals;
        for (auto& [k, v] : out) v /= static_cast<double>(std::max<std::size_t>(steps, 1));
        return out;
    }
};

}  // namespace

// --- Source training -----------------------------------------------------------

SourceTrainingResult train_source(const Dataset& labeled, const TrainingConfig& cfg) {
    cfg.validate();
    if (labeled.size() == 0) throw ConfigError("train_source: empty dataset");
    if (!labeled.labeled()) throw ConfigError("train_source: dataset has no labels");
    labeled.validate();
    const auto start = std::chrono::steady_clock::now();

    Architecture arch = cfg.architecture;
    arch.input_dim = labeled.dim();
    arch.num_classes = labeled.num_classes;
    TrainingConfig resolved = cfg;
    resolved.architecture = arch;

    Rng rng(cfg.seed);
    SourceTrainingResult out{Model(arch, rng), {}, 0.0};
    Model& model = out.model;
    const auto params = model.parameters();
    OptimizerState state;
    const SgdOptions opts = sgd_options(cfg, cfg.source_learning_rate);
    const auto& labels = *labeled.labels;

    out.report.kind = "train-source";
    out.report.seed = cfg.seed;
    out.report.config = resolved.to_json();

    for (std::size_t epoch = 1; epoch <= cfg.source_epochs; ++epoch) {
        LossAccumulator acc;
        for (const auto& batch : make_batches(labeled.size(), cfg.batch_size, rng)) {
            std::vector<std::size_t> y(batch.size());
            for (std::size_t i = 0; i < batch.size(); ++i) y[i] = labels[batch[i]];
            ad::Tape tape;
            const ad::Tensor x = ad::Tensor::constant(labeled.samples.select_rows(batch));
            const ad::Tensor loss = losses::label_smoothed_ce(tape, model.logits(tape, x), y, cfg.gamma);
            tape.backward(loss);
            sgd_step(params, state, opts);
            acc.add("source_ce", loss.item());
            ++acc.steps;
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.losses = acc.means();
        rec.target_accuracy = accuracy(model, labeled);
        out.report.epochs.push_back(std::move(rec));
    }
    out.train_accuracy = accuracy(model, labeled);
    out.report.set_summary("train_accuracy", out.train_accuracy);
    out.report.validate();
    out.report.wall_clock_seconds = elapsed_seconds(start);
    return out;
}

// --- Evaluation ------------------------------------------------------------------

DatasetEvaluator::DatasetEvaluator(Dataset labeled, std::optional<Matrix> source)
    : data_(std::move(labeled)), source_(std::move(source)) {
    if (!data_.labeled()) throw ConfigError("evaluator needs a labeled dataset");
    data_.validate();
}

double DatasetEvaluator::accuracy(const Model& model) const { return psda::accuracy(model, data_); }

double DatasetEvaluator::label_agreement(std::span<const std::size_t> rows,
                                         std::span<const std::size_t> predicted) const {
    std::vector<std::size_t> truth(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) truth[i] = data_.labels->at(rows[i]);
    return psda::accuracy(predicted, truth);
}

// --- Adaptation ------------------------------------------------------------------

double pseudo_source_a_distance(const Model& frozen_source, const Model& model,
                                const Matrix& target, double alpha, std::uint64_t seed) {
    const DomainSplit split = split_by_entropy(frozen_source, target, alpha);
    const Matrix z = model.features(target);
    return a_distance(z.select_rows(split.pseudo_source), z.select_rows(split.remaining), seed);
}

AdaptResult adapt(Model& source, const UnlabeledDataset& target, const TrainingConfig& cfg,
                  const Evaluator* evaluator, const AdaptObserver* observer) {
    cfg.validate();
    if (target.size() == 0) throw ConfigError("adapt: target dataset is empty");
    const Architecture& arch = source.architecture();
    if (target.dim() != arch.input_dim)
        throw ConfigError("adapt: target samples have " + std::to_string(target.dim()) +
                          " features, source model expects " + std::to_string(arch.input_dim));
    const std::size_t k = arch.num_classes;
    if (cfg.batch_size < 2 * k)
        std::cerr << "warning: batch_size " << cfg.batch_size << " < 2K = " << 2 * k
                  << "; per-class selection degenerates\n";
    const auto start = std::chrono::steady_clock::now();

    Rng rng(cfg.seed);
    AdaptResult out{init_target_from_source(source),
                    Discriminator(arch.feature_dim, arch.discriminator_hidden, rng), {}};
    Model& tgt = out.target;
    Discriminator& disc = out.discriminator;

    TrainingConfig resolved = cfg;
    resolved.architecture = arch;
    RunReport& report = out.report;
    report.kind = "adapt";
    report.seed = cfg.seed;
    report.config = resolved.to_json();
    report.loss_weights = {{"classification", cfg.lambda_c},
                           {"diversity", cfg.lambda_div},
                           {"constrain", cfg.lambda_cons},
                           {"adversarial", cfg.lambda_g}};
    report.a_distance_mode = to_string(cfg.a_distance_mode);

    const Matrix& samples = target.samples();
    const Matrix* source_samples = evaluator ? evaluator->source_samples() : nullptr;
    const bool by_source = cfg.a_distance_mode == ADistanceMode::kSourceVsTarget;
    if (by_source && !source_samples)
        throw ConfigError("a_distance_mode source_vs_target needs source samples for analysis");
    // The frozen source fixes the pseudo-source split for the whole run.
    std::optional<DomainSplit> split;
    if (!by_source) split = split_by_entropy(source, samples, cfg.alpha);
    const bool track_a_distance =
        by_source ? samples.rows() >= 4 && source_samples->rows() >= 4
                  : split->pseudo_source.size() >= 4 && split->remaining.size() >= 4;
    auto a_dist = [&]() {
        if (by_source)
            return a_distance(tgt.features(*source_samples), tgt.features(samples), cfg.seed);
        const Matrix z = tgt.features(samples);
        return a_distance(z.select_rows(split->pseudo_source), z.select_rows(split->remaining), cfg.seed);
    };
    if (evaluator) report.set_summary("initial_accuracy", evaluator->accuracy(tgt));
    if (track_a_distance) report.set_summary("a_distance_before", a_dist());

    std::vector<NamedParameter> align_params = tgt.extractor().parameters();
    for (auto& p : disc.parameters()) align_params.push_back(p);
    const std::vector<NamedParameter> cls_params = tgt.parameters();

    const bool align_step = cfg.lambda_cons > 0.0 || cfg.lambda_g > 0.0;
    const bool cls_step = cfg.lambda_c > 0.0 || cfg.lambda_div > 0.0;
    OptimizerState state;
    const SgdOptions opts = sgd_options(cfg, cfg.learning_rate);

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        LossAccumulator acc;
        std::vector<std::size_t> regen_rows, regen_labels;
        for (const auto& batch : make_batches(samples.rows(), cfg.batch_size, rng)) {
            const Matrix x = samples.select_rows(batch);
            const SourceScores scores = score_batch(source, x);
            const DomainSplit split = cfg.selection == SelectionRule::kEntropy
                                          ? split_from_scores(scores, cfg.alpha)
                                          : split_random(scores, cfg.alpha, rng);
            if (split.remaining.empty()) continue;
            const std::size_t n_aug =
                cfg.mixup ? (cfg.mixup_count ? cfg.mixup_count : split.pseudo_source.size()) : 0;
            const AugmentedBatch aug = mixup_augment(split, x, k, cfg.beta, n_aug, rng);
            const Matrix xr = x.select_rows(split.remaining);
            const ad::Tensor aug_in = ad::Tensor::constant(aug.samples);
            const ad::Tensor rem_in = ad::Tensor::constant(xr);

            if (align_step) {
                zero_grad(align_params);
                ad::Tape tape;
                const ad::Tensor zr = tgt.extractor().forward(tape, rem_in);
                ad::Tensor loss;
                if (cfg.lambda_cons > 0.0) {
                    const ad::Tensor l = losses::constrain_loss(
                        tape, source.classifier().forward(tape, zr),
                        detached(tgt.classifier()).forward(tape, zr));
                    acc.add("constrain", l.item());
                    loss = ad::scale(tape, l, cfg.lambda_cons);
                }
                if (cfg.lambda_g > 0.0) {
                    const ad::Tensor za = tgt.extractor().forward(tape, aug_in);
                    const ad::Tensor l = losses::adversarial_loss(
                        tape, disc.forward(tape, ad::grl(tape, za, cfg.grl_coefficient)),
                        disc.forward(tape, ad::grl(tape, zr, cfg.grl_coefficient)));
                    acc.add("adversarial", l.item());
                    const ad::Tensor weighted = ad::scale(tape, l, cfg.lambda_g);
                    loss = loss.defined() ? ad::add(tape, loss, weighted) : weighted;
                }
                tape.backward(loss);
                sgd_step(align_params, state, opts);
                if (observer && observer->after_alignment_step)
                    observer->after_alignment_step(tgt, disc);
            }

            if (cls_step) {
                const auto labels = regenerate_labels(tgt, xr);
                for (std::size_t i = 0; i < labels.size(); ++i) {
                    regen_rows.push_back(batch[split.remaining[i]]);
                    regen_labels.push_back(labels[i]);
                }
                zero_grad(cls_params);
                ad::Tape tape;
                const ad::Tensor zr = tgt.extractor().forward(tape, rem_in);
                const ad::Tensor rem_logits = tgt.classifier().forward(tape, zr);
                ad::Tensor loss;
                if (cfg.lambda_c > 0.0) {
                    const ad::Tensor za = tgt.extractor().forward(tape, aug_in);
                    const ad::Tensor l = losses::classification_loss(
                        tape, tgt.classifier().forward(tape, za), aug.soft_labels, rem_logits, labels);
                    acc.add("classification", l.item());
                    loss = ad::scale(tape, l, cfg.lambda_c);
                }
                if (cfg.lambda_div > 0.0) {
                    const ad::Tensor l = losses::diversity_loss(
                        tape, source.classifier().forward(tape, zr), rem_logits);
                    acc.add("diversity", l.item());
                    const ad::Tensor weighted = ad::scale(tape, l, cfg.lambda_div);
                    loss = loss.defined() ? ad::add(tape, loss, weighted) : weighted;
                }
                tape.backward(loss);
                sgd_step(cls_params, state, opts);
                if (observer && observer->after_classification_step)
                    observer->after_classification_step(tgt, disc);
            }
            ++acc.steps;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.losses = acc.means();
        if (evaluator) {
            rec.target_accuracy = evaluator->accuracy(tgt);
            if (!regen_rows.empty())
                rec.pseudo_label_accuracy = evaluator->label_agreement(regen_rows, regen_labels);
        }
        if (track_a_distance && cfg.a_distance_every > 0 && epoch % cfg.a_distance_every == 0)
            rec.a_distance = a_dist();
        report.epochs.push_back(std::move(rec));
    }

    if (evaluator) report.set_summary("final_accuracy", evaluator->accuracy(tgt));
    if (track_a_distance) report.set_summary("a_distance_after", a_dist());
    report.validate();
    report.wall_clock_seconds = elapsed_seconds(start);
    return out;
}

// --- Ablations -------------------------------------------------------------------

const std::vector<std::string>& variant_names() {
    static const std::vector<std::string> names = {
        "entropy+mixup", "random+mixup", "entropy-mixup", "cls-only",
        "cls+div",       "cls+div+cons", "full"};
    return names;
}

std::string to_string(Variant v) { return variant_names()[static_cast<std::size_t>(v)]; }

Variant variant_from_string(const std::string& name) {
    std::string canonical = name;
    const std::string unicode_minus = "\xE2\x88\x92";
    if (auto pos = canonical.find(unicode_minus); pos != std::string::npos)
        canonical.replace(pos, unicode_minus.size(), "-");
    const auto& names = variant_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == canonical) return static_cast<Variant>(i);
    std::string valid;
    for (const auto& n : names) valid += (valid.empty() ? "" : ", ") + n;
    throw ConfigError("unknown variant '" + name + "'; valid variants: " + valid);
}

TrainingConfig apply_variant(TrainingConfig cfg, Variant v) {
    switch (v) {
        case Variant::kEntropyMixup:
        case Variant::kFull:
            break;
        case Variant::kRandomMixup:
            cfg.selection = SelectionRule::kRandom;
            break;
        case Variant::kEntropyNoMixup:
            cfg.mixup = false;
            break;
        case Variant::kClsOnly:
            cfg.lambda_div = 0.0;
            cfg.lambda_cons = 0.0;
            cfg.lambda_g = 0.0;
            break;
        case Variant::kClsDiv:
            cfg.lambda_cons = 0.0;
            cfg.lambda_g = 0.0;
            break;
        case Variant::kClsDivCons:
            cfg.lambda_g = 0.0;
            break;
    }
    return cfg;
}

AdaptResult run_ablation(Variant v, Model& source, const UnlabeledDataset& target,
                         const TrainingConfig& cfg, const Evaluator* evaluator) {
    AdaptResult out = adapt(source, target, apply_variant(cfg, v), evaluator);
    out.report.variant = to_string(v);
    return out;
}

}  // namespace psda
