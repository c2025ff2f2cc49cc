#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "psda/autodiff.hpp"
#include "psda/data.hpp"
#include "psda/error.hpp"
#include "psda/trainer.hpp"

using namespace psda;

namespace {

std::vector<Matrix> snapshot(const std::vector<NamedParameter>& params) {
    std::vector<Matrix> out;
    for (const auto& p : params) out.push_back(p.tensor.value());
    return out;
}

TrainingConfig small_config(std::uint64_t seed = 0) {
    TrainingConfig cfg;
    cfg.seed = seed;
    cfg.source_epochs = 40;
    cfg.epochs = 5;
    cfg.batch_size = 32;
    return cfg;
}

DomainPair blobs(std::uint64_t seed, double rotation_deg = 20.0, std::size_t per_class = 60) {
    ShiftSpec spec;
    spec.num_classes = 3;
    spec.noise = 0.6;
    spec.rotation = rotation_deg * std::numbers::pi / 180.0;
    const std::vector<std::size_t> sizes(3, per_class);
    return gen_gaussian_blobs(sizes, spec, seed);
}

DomainPair moons(std::uint64_t seed, std::size_t n = 200) {
    ShiftSpec spec;
    spec.rotation = 30.0 * std::numbers::pi / 180.0;
    return gen_two_moons(n, spec, seed);
}

// Smallest over classes of the mean max-softmax on that class's samples.
double min_class_confidence(const Model& model, const Dataset& d) {
    const Matrix p = ad::softmax_rows(model.logits(d.samples));
    std::vector<double> sum(d.num_classes, 0.0), count(d.num_classes, 0.0);
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto row = p.row(i);
        const std::size_t y = (*d.labels)[i];
        sum[y] += *std::max_element(row.begin(), row.end());
        count[y] += 1.0;
    }
    double lo = 1.0;
    for (std::size_t c = 0; c < d.num_classes; ++c) lo = std::min(lo, sum[c] / count[c]);
    return lo;
}

}  // namespace

TEST(TrainSource, SeparableBlobsReachHighTrainAccuracy) {
    TrainingConfig cfg = small_config();
    cfg.source_epochs = 200;
    const auto pair = blobs(1, 0.0, 50);
    const auto res = train_source(pair.source, cfg);
    EXPECT_GE(res.train_accuracy, 0.99);
    EXPECT_EQ(res.report.epochs.size(), 200u);
}

TEST(TrainSource, LabelSmoothingLowersMinimumClassConfidence) {
    double smoothed = 0.0, plain = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto pair = blobs(seed, 0.0, 40);
        TrainingConfig cfg = small_config(seed);
        cfg.source_epochs = 100;
        cfg.gamma = 0.0;
        const auto a = train_source(pair.source, cfg);
        cfg.gamma = 0.1;
        const auto b = train_source(pair.source, cfg);
        EXPECT_GE(a.train_accuracy, 0.95);
        EXPECT_GE(b.train_accuracy, 0.95);
        plain += min_class_confidence(a.model, pair.source);
        smoothed += min_class_confidence(b.model, pair.source);
    }
    EXPECT_LE(smoothed, plain);
}

TEST(TrainSource, SingleSampleLossDecreasesMonotonically) {
    Dataset d;
    d.samples = Matrix(1, 2);
    d.samples(0, 0) = 0.3;
    d.samples(0, 1) = -0.7;
    d.labels = std::vector<std::size_t>{1};
    d.num_classes = 2;
    TrainingConfig cfg = small_config();
    cfg.source_epochs = 10;
    cfg.source_learning_rate = 1e-3;
    const auto res = train_source(d, cfg);
    ASSERT_EQ(res.report.epochs.size(), 10u);
    for (std::size_t e = 1; e < 10; ++e)
        EXPECT_LT(res.report.epochs[e].losses.at(0).second, res.report.epochs[e - 1].losses.at(0).second);
}

TEST(TrainSource, RejectsEmptyOrUnlabeledData) {
    Dataset empty;
    empty.samples = Matrix(0, 2);
    empty.labels = std::vector<std::size_t>{};
    EXPECT_THROW(train_source(empty, small_config()), ConfigError);
    Dataset unlabeled = moons(0).target;
    unlabeled.labels.reset();
    EXPECT_THROW(train_source(unlabeled, small_config()), ConfigError);
}

TEST(Adapt, ZeroEpochsReturnsSourceInitializedModel) {
    const auto pair = moons(3);
    TrainingConfig cfg = small_config();
    auto src = train_source(pair.source, cfg).model;
    cfg.epochs = 0;
    const auto res = adapt(src, strip_labels(pair.target), cfg);
    Model copy = src;
    const Model expected = init_target_from_source(copy);
    EXPECT_EQ(snapshot(res.target.parameters()), snapshot(expected.parameters()));
    EXPECT_FALSE(res.target.frozen());
}

TEST(Adapt, SourceParametersAreUntouched) {
    const auto pair = moons(4);
    TrainingConfig cfg = small_config();
    auto src = train_source(pair.source, cfg).model;
    const auto before = snapshot(src.parameters());
    const auto res = adapt(src, strip_labels(pair.target), cfg);
    EXPECT_EQ(snapshot(src.parameters()), before);
    EXPECT_TRUE(src.frozen());
    EXPECT_NE(snapshot(res.target.parameters()), before);
}

TEST(Adapt, StepsUpdateOnlyTheirParameterGroups) {
    const auto pair = moons(5);
    TrainingConfig cfg = small_config();
    cfg.epochs = 2;
    auto src = train_source(pair.source, cfg).model;

    std::vector<Matrix> classifier = snapshot(src.classifier().parameters());
    std::vector<Matrix> extractor = snapshot(src.extractor().parameters());
    std::vector<Matrix> disc;
    std::size_t align_steps = 0, cls_steps = 0, extractor_moves = 0, disc_moves = 0;
    AdaptObserver obs;
    obs.after_alignment_step = [&](const Model& t, const Discriminator& d) {
        ++align_steps;
        EXPECT_EQ(snapshot(t.classifier().parameters()), classifier);
        auto now = snapshot(t.extractor().parameters());
        if (now != extractor) ++extractor_moves;
        extractor = std::move(now);
        auto dnow = snapshot(d.parameters());
        if (!disc.empty() && dnow != disc) ++disc_moves;
        disc = std::move(dnow);
    };
    obs.after_classification_step = [&](const Model& t, const Discriminator& d) {
        ++cls_steps;
        EXPECT_EQ(snapshot(d.parameters()), disc);
        classifier = snapshot(t.classifier().parameters());
        extractor = snapshot(t.extractor().parameters());
    };
    adapt(src, strip_labels(pair.target), cfg, nullptr, &obs);
    EXPECT_GT(align_steps, 0u);
    EXPECT_EQ(align_steps, cls_steps);
    EXPECT_EQ(extractor_moves, align_steps);
    EXPECT_GT(disc_moves, 0u);
}

TEST(Adapt, FixedSeedIsDeterministic) {
    const auto pair = moons(6);
    TrainingConfig cfg = small_config(11);
    auto src = train_source(pair.source, cfg).model;
    const DatasetEvaluator eval(pair.target);
    const auto a = adapt(src, strip_labels(pair.target), cfg, &eval);
    const auto b = adapt(src, strip_labels(pair.target), cfg, &eval);
    EXPECT_EQ(a.report.to_json_string(), b.report.to_json_string());
    EXPECT_EQ(snapshot(a.target.parameters()), snapshot(b.target.parameters()));
}

TEST(Adapt, LoggedLossesAreFinite) {
    const auto pair = moons(7);
    TrainingConfig cfg = small_config();
    auto src = train_source(pair.source, cfg).model;
    const auto res = adapt(src, strip_labels(pair.target), cfg);
    ASSERT_EQ(res.report.epochs.size(), cfg.epochs);
    for (const auto& rec : res.report.epochs) {
        EXPECT_EQ(rec.losses.size(), 4u);
        for (const auto& [name, v] : rec.losses) EXPECT_TRUE(std::isfinite(v)) << name;
    }
}

TEST(Adapt, SelfTrainingIsNoWorseThanSourceOnlyOnBlobs) {
    double initial = 0.0, final_acc = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto pair = blobs(seed, 25.0);
        TrainingConfig cfg = small_config(seed);
        cfg.epochs = 30;
        cfg.learning_rate = 1e-3;
        auto src = train_source(pair.source, cfg).model;
        const DatasetEvaluator eval(pair.target);
        const auto res = run_ablation(Variant::kClsOnly, src, strip_labels(pair.target), cfg, &eval);
        initial += *res.report.summary_value("initial_accuracy");
        final_acc += *res.report.summary_value("final_accuracy");
    }
    EXPECT_GE(final_acc, initial);
}

TEST(Adapt, SourceVsTargetModeNeedsSourceSamples) {
    const auto pair = moons(8);
    TrainingConfig cfg = small_config();
    cfg.epochs = 1;
    cfg.a_distance_mode = ADistanceMode::kSourceVsTarget;
    auto src = train_source(pair.source, cfg).model;
    const DatasetEvaluator no_source(pair.target);
    EXPECT_THROW(adapt(src, strip_labels(pair.target), cfg, &no_source), ConfigError);
    const DatasetEvaluator with_source(pair.target, pair.source.samples);
    const auto res = adapt(src, strip_labels(pair.target), cfg, &with_source);
    EXPECT_EQ(res.report.a_distance_mode, "source_vs_target");
    EXPECT_TRUE(res.report.summary_value("a_distance_before").has_value());
    EXPECT_TRUE(res.report.summary_value("a_distance_after").has_value());
}

TEST(Adapt, RejectsBadInputs) {
    const auto pair = moons(9);
    TrainingConfig cfg = small_config();
    auto src = train_source(pair.source, cfg).model;
    EXPECT_THROW(adapt(src, UnlabeledDataset(Matrix(0, 2)), cfg), ConfigError);
    EXPECT_THROW(adapt(src, UnlabeledDataset(Matrix(10, 3)), cfg), ConfigError);
    cfg.batch_size = 1;
    EXPECT_THROW(adapt(src, strip_labels(pair.target), cfg), ConfigError);
}

TEST(Ablation, VariantNamesRoundTrip) {
    for (const auto& name : variant_names()) EXPECT_EQ(to_string(variant_from_string(name)), name);
    EXPECT_EQ(variant_from_string("entropy\xE2\x88\x92mixup"), Variant::kEntropyNoMixup);
    try {
        variant_from_string("bogus");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("cls+div+cons"), std::string::npos);
    }
}

TEST(Ablation, SwitchesZeroExcludedTerms) {
    const TrainingConfig base;
    const auto cls = apply_variant(base, Variant::kClsOnly);
    EXPECT_EQ(cls.lambda_div, 0.0);
    EXPECT_EQ(cls.lambda_cons, 0.0);
    EXPECT_EQ(cls.lambda_g, 0.0);
    EXPECT_EQ(cls.lambda_c, base.lambda_c);
    EXPECT_EQ(apply_variant(base, Variant::kRandomMixup).selection, SelectionRule::kRandom);
    EXPECT_FALSE(apply_variant(base, Variant::kEntropyNoMixup).mixup);
    EXPECT_EQ(apply_variant(base, Variant::kFull).to_json(), base.to_json());

    const auto pair = moons(10);
    TrainingConfig cfg = small_config();
    cfg.epochs = 1;
    auto src = train_source(pair.source, cfg).model;
    const auto res = run_ablation(Variant::kClsOnly, src, strip_labels(pair.target), cfg);
    EXPECT_EQ(res.report.variant, "cls-only");
    EXPECT_EQ(res.report.loss_weights["adversarial"], 0.0);
    EXPECT_EQ(res.report.loss_weights["diversity"], 0.0);
    EXPECT_EQ(res.report.loss_weights["constrain"], 0.0);
}

TEST(Ablation, FullMatchesDefaultAdapt) {
    const auto pair = moons(12);
    TrainingConfig cfg = small_config(3);
    auto src = train_source(pair.source, cfg).model;
    auto a = run_ablation(Variant::kFull, src, strip_labels(pair.target), cfg);
    auto b = adapt(src, strip_labels(pair.target), cfg);
    a.report.variant.clear();
    EXPECT_EQ(a.report.to_json_string(), b.report.to_json_string());
}
