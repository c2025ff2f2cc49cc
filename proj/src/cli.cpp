#include "psda/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "psda/error.hpp"
#include "psda/metrics.hpp"
#include "psda/nets.hpp"

namespace psda::cli {

namespace fs = std::filesystem;

namespace {

// Files of one invocation, written together once everything has succeeded.
class OutputSet {
public:
    void add(std::string relative_path, std::string content) {
        files_.emplace_back(std::move(relative_path), std::move(content));
    }

    void commit(const std::string& out_dir) const {
        std::error_code ec;
        for (const auto& [rel, content] : files_) {
            const fs::path path = fs::path(out_dir) / rel;
            fs::create_directories(path.parent_path(), ec);
            if (ec) throw DataError("cannot create directory '" + path.parent_path().string() + "'");
            const fs::path tmp = path.string() + ".tmp";
            {
                std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
                if (!out) throw DataError("cannot open '" + tmp.string() + "' for writing");
                out.write(content.data(), static_cast<std::streamsize>(content.size()));
                if (!out) throw DataError("failed writing '" + tmp.string() + "'");
            }
            fs::rename(tmp, path, ec);
            if (ec) throw DataError("cannot move output into place at '" + path.string() + "'");
        }
    }

private:
    std::vector<std::pair<std::string, std::string>> files_;
};

int guarded(std::ostream& log, const std::function<void()>& body) {
    try {
        body();
        return kExitOk;
    } catch (const ConfigError& e) {
        log << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DataError& e) {
        log << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const NumericError& e) {
        log << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const nlohmann::json::exception& e) {
        log << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << "\n";
        return 1;
    }
}

std::string timing_json(double seconds) {
    nlohmann::ordered_json j;
    j["wall_clock_seconds"] = seconds;
    return j.dump(2) + "\n";
}

void add_report(OutputSet& out, const std::string& dir, const RunReport& report) {
    const std::string prefix = dir.empty() ? "" : dir + "/";
    out.add(prefix + "report.json", report.to_json_string());
    out.add(prefix + "epochs.csv", report.epochs_csv());
    out.add(prefix + "timing.json", timing_json(report.wall_clock_seconds));
}

std::string format_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

MeanStd mean_std(const std::vector<double>& xs) {
    MeanStd r;
    if (xs.empty()) return r;
    for (double x : xs) r.mean += x;
    r.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double s = 0.0;
        for (double x : xs) s += (x - r.mean) * (x - r.mean);
        r.std = std::sqrt(s / static_cast<double>(xs.size() - 1));
    }
    return r;
}

// Runs fn(i) for i in [0, n) on at most `jobs` threads; results keep index order.
template <typename T>
std::vector<T> run_pool(std::size_t n, std::size_t jobs, const std::function<T(std::size_t)>& fn) {
    std::vector<T> results;
    results.reserve(n);
    jobs = std::max<std::size_t>(jobs, 1);
    for (std::size_t start = 0; start < n; start += jobs) {
        std::vector<std::future<T>> wave;
        for (std::size_t i = start; i < std::min(n, start + jobs); ++i)
            wave.push_back(std::async(jobs == 1 ? std::launch::deferred : std::launch::async, fn, i));
        for (auto& f : wave) results.push_back(f.get());
    }
    return results;
}

nlohmann::ordered_json checkpoint_config(const ExperimentSpec& spec, const TrainingConfig& cfg,
                                         const std::string& kind) {
    nlohmann::ordered_json j;
    j["kind"] = kind;
    j["task"] = spec.task.to_json();
    j["training"] = cfg.to_json();
    return j;
}

std::uint64_t run_seed(const ExperimentSpec& spec) { return spec.training.seed; }

}  // namespace

// --- Task ----------------------------------------------------------------------

TaskSpec TaskSpec::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("task must be a JSON object");
    static const std::set<std::string> known = {
        "generator", "n",         "rotation_deg", "translation", "noise",
        "class_sizes", "seed", "source_csv",   "target_csv",  "num_classes"};
    for (const auto& [key, _] : j.items())
        if (!known.contains(key)) throw ConfigError("unknown task key '" + key + "'");
    TaskSpec t;
    try {
        t.generator = j.value("generator", t.generator);
        t.n = j.value("n", t.n);
        t.rotation_deg = j.value("rotation_deg", t.rotation_deg);
        t.translation = j.value("translation", t.translation);
        t.noise = j.value("noise", t.noise);
        t.class_sizes = j.value("class_sizes", t.class_sizes);
        if (j.contains("seed")) t.seed = j["seed"].get<std::uint64_t>();
        t.source_csv = j.value("source_csv", t.source_csv);
        t.target_csv = j.value("target_csv", t.target_csv);
        t.num_classes = j.value("num_classes", t.num_classes);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("task: ") + e.what());
    }
    if (!t.source_csv.empty() || !t.target_csv.empty()) t.generator = "files";
    if (t.generator != "two_moons" && t.generator != "blobs" && t.generator != "files")
        throw ConfigError("unknown generator '" + t.generator + "' (two_moons, blobs, files)");
    return t;
}

nlohmann::ordered_json TaskSpec::to_json() const {
    nlohmann::ordered_json j;
    j["generator"] = generator;
    if (generator == "files") {
        j["source_csv"] = source_csv;
        j["target_csv"] = target_csv;
        j["num_classes"] = num_classes;
    } else {
        if (generator == "two_moons") j["n"] = n;
        if (generator == "blobs") j["class_sizes"] = class_sizes;
        j["rotation_deg"] = rotation_deg;
        j["translation"] = translation;
        j["noise"] = noise;
    }
    if (seed) j["seed"] = *seed;
    return j;
}

DomainPair load_task(const TaskSpec& task, std::uint64_t run_seed) {
    if (task.generator == "files") {
        if (task.source_csv.empty() && task.target_csv.empty())
            throw ConfigError("task: source_csv / target_csv not set");
        DomainPair pair;
        if (!task.source_csv.empty())
            pair.source = load_dataset(task.source_csv, task.num_classes, DomainTag::kSource);
        if (!task.target_csv.empty())
            pair.target = load_dataset(task.target_csv, task.num_classes, DomainTag::kTarget);
        if (!task.source_csv.empty() && !task.target_csv.empty() &&
            pair.source.dim() != pair.target.dim())
            throw DataError("source and target feature dimensions differ (" +
                            std::to_string(pair.source.dim()) + " vs " +
                            std::to_string(pair.target.dim()) + ")");
        return pair;
    }
    ShiftSpec shift;
    shift.rotation = task.rotation_deg * std::numbers::pi / 180.0;
    shift.translation = task.translation;
    shift.noise = task.noise;
    const std::uint64_t seed = task.seed.value_or(run_seed);
    if (task.generator == "two_moons") return gen_two_moons(task.n, shift, seed);
    shift.num_classes = task.class_sizes.size();
    return gen_gaussian_blobs(task.class_sizes, shift, seed);
}

// --- Grid ----------------------------------------------------------------------

Grid parse_grid(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError("grid must look like KEY=V1,V2,...");
    Grid g;
    g.key = text.substr(0, eq);
    if (g.key == "batch_size") g.key = "batch";
    if (g.key == "lambda_g") g.key = "lambda-g";
    if (g.key == "lambda_c") g.key = "lambda-c";
    static const std::set<std::string> keys = {"alpha", "batch", "beta", "lambda-g", "lambda-c"};
    if (!keys.contains(g.key))
        throw ConfigError("unknown grid key '" + g.key + "' (alpha, batch, beta, lambda-g, lambda-c)");
    std::stringstream ss(text.substr(eq + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const double v = std::stod(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            if (std::find(g.values.begin(), g.values.end(), v) != g.values.end())
                throw ConfigError("duplicate grid value " + item);
            g.values.push_back(v);
        } catch (const std::logic_error&) {
            throw ConfigError("grid value '" + item + "' is not a number");
        }
    }
    if (g.values.empty()) throw ConfigError("grid is empty");
    return g;
}

TrainingConfig apply_grid_value(TrainingConfig cfg, const std::string& key, double value) {
    if (key == "alpha") {
        cfg.alpha = value;
    } else if (key == "batch") {
        if (value < 2 || value != std::floor(value))
            throw ConfigError("batch grid values must be integers >= 2");
        cfg.batch_size = static_cast<std::size_t>(value);
    } else if (key == "beta") {
        cfg.beta = value;
    } else if (key == "lambda-g") {
        cfg.lambda_g = value;
    } else if (key == "lambda-c") {
        cfg.lambda_c = value;
    } else {
        throw ConfigError("unknown grid key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

// --- Subcommands -----------------------------------------------------------------

int cmd_train_source(const ExperimentSpec& spec, std::ostream& log) {
    return guarded(log, [&] {
        const DomainPair pair = load_task(spec.task, run_seed(spec));
        if (!pair.source.labeled()) throw DataError("source dataset has no labels");
        const SourceTrainingResult result = train_source(pair.source, spec.training);
        OutputSet out;
        const TrainingConfig resolved =
            TrainingConfig::from_json(result.report.config, spec.training);
        out.add("source.ckpt",
                encode_checkpoint(result.model, checkpoint_config(spec, resolved, "source")));
        add_report(out, "", result.report);
        out.commit(spec.out_dir);
        log << "source train accuracy " << result.train_accuracy << "\n";
    });
}

int cmd_adapt(const ExperimentSpec& spec, std::ostream& log) {
    return guarded(log, [&] {
        if (spec.source_checkpoint.empty())
            throw ConfigError("adapt needs a source checkpoint (--source PATH)");
        LoadedCheckpoint ckpt = load_checkpoint(spec.source_checkpoint);
        const DomainPair pair = load_task(spec.task, run_seed(spec));
        const Dataset& target = pair.target;
        if (target.size() == 0) throw DataError("target dataset is empty");
        std::optional<DatasetEvaluator> evaluator;
        if (target.labeled())
            evaluator.emplace(target, pair.source.size() > 0 ? std::optional(pair.source.samples)
                                                             : std::nullopt);

        OutputSet out;
        out.add("embeddings_before.csv", format_embeddings(ckpt.model, target));
        AdaptResult result = adapt(ckpt.model, strip_labels(target), spec.training,
                                   evaluator ? &*evaluator : nullptr);
        out.add("embeddings_after.csv", format_embeddings(result.target, target));
        out.add("target.ckpt",
                encode_checkpoint(result.target, checkpoint_config(spec, spec.training, "target")));
        add_report(out, "", result.report);
        out.commit(spec.out_dir);
        if (auto v = result.report.summary_value("initial_accuracy"))
            log << "source-only target accuracy " << *v << "\n";
        if (auto v = result.report.summary_value("final_accuracy"))
            log << "adapted target accuracy " << *v << "\n";
    });
}

int cmd_evaluate(const ExperimentSpec& spec, std::ostream& log) {
    return guarded(log, [&] {
        if (spec.checkpoint.empty())
            throw ConfigError("evaluate needs a checkpoint (--checkpoint PATH)");
        const LoadedCheckpoint ckpt = load_checkpoint(spec.checkpoint);
        const DomainPair pair = load_task(spec.task, run_seed(spec));
        if (!pair.target.labeled()) throw DataError("target dataset has no labels to evaluate");
        nlohmann::ordered_json j;
        j["checkpoint"] = spec.checkpoint;
        j["target_accuracy"] = accuracy(ckpt.model, pair.target);
        if (pair.source.labeled() && pair.source.size() > 0)
            j["source_accuracy"] = accuracy(ckpt.model, pair.source);
        OutputSet out;
        out.add("evaluation.json", j.dump(2) + "\n");
        out.commit(spec.out_dir);
        log << "target accuracy " << j["target_accuracy"].get<double>() << "\n";
    });
}

namespace {

struct SeedRuns {
    std::uint64_t seed = 0;
    std::vector<RunReport> reports;  // one per variant or grid value
};

std::vector<std::uint64_t> resolve_seeds(const ExperimentSpec& spec) {
    if (!spec.seeds.empty()) return spec.seeds;
    std::vector<std::uint64_t> s;
    for (std::uint64_t i = 0; i < 5; ++i) s.push_back(spec.training.seed + i);
    return s;
}

// Trains one source model per seed and hands it to `body` together with the
// seed's target domain and evaluator.
std::vector<SeedRuns> per_seed(
    const ExperimentSpec& spec,
    const std::function<std::vector<RunReport>(Model&, const UnlabeledDataset&, const Evaluator&,
                                               const TrainingConfig&)>& body) {
    const auto seeds = resolve_seeds(spec);
    std::function<SeedRuns(std::size_t)> task = [&](std::size_t i) {
        TrainingConfig cfg = spec.training;
        cfg.seed = seeds[i];
        const DomainPair pair = load_task(spec.task, seeds[i]);
        if (!pair.source.labeled()) throw DataError("source dataset has no labels");
        if (!pair.target.labeled()) throw DataError("target dataset has no labels to evaluate");
        Model source = train_source(pair.source, cfg).model;
        const DatasetEvaluator evaluator(pair.target, pair.source.samples);
        return SeedRuns{seeds[i], body(source, strip_labels(pair.target), evaluator, cfg)};
    };
    return run_pool<SeedRuns>(seeds.size(), spec.jobs, task);
}

}  // namespace

int cmd_ablate(const ExperimentSpec& spec, std::ostream& log) {
    return guarded(log, [&] {
        if (spec.variants.empty()) throw ConfigError("ablate needs at least one --variant");
        const auto runs = per_seed(spec, [&](Model& source, const UnlabeledDataset& unlabeled,
                                             const Evaluator& evaluator, const TrainingConfig& cfg) {
            std::vector<RunReport> reports;
            for (Variant v : spec.variants)
                reports.push_back(run_ablation(v, source, unlabeled, cfg, &evaluator).report);
            return reports;
        });
        OutputSet out;
        std::string table = "variant,mean_accuracy,std_accuracy,mean_source_only_accuracy,seeds\n";
        for (std::size_t v = 0; v < spec.variants.size(); ++v) {
            std::vector<double> acc, base;
            for (const auto& r : runs) {
                const RunReport& rep = r.reports[v];
                add_report(out, to_string(spec.variants[v]) + "/seed_" + std::to_string(r.seed), rep);
                acc.push_back(rep.summary_value("final_accuracy").value_or(0.0));
                base.push_back(rep.summary_value("initial_accuracy").value_or(0.0));
            }
            const MeanStd a = mean_std(acc);
            table += to_string(spec.variants[v]) + "," + format_double(a.mean) + "," +
                     format_double(a.std) + "," + format_double(mean_std(base).mean) + "," +
                     std::to_string(runs.size()) + "\n";
            log << to_string(spec.variants[v]) << ": mean accuracy " << a.mean << " (std " << a.std
                << ")\n";
        }
        out.add("ablation.csv", table);
        out.commit(spec.out_dir);
    });
}

int cmd_sweep(const ExperimentSpec& spec, std::ostream& log) {
    return guarded(log, [&] {
        if (!spec.grid || spec.grid->values.empty()) throw ConfigError("sweep needs --grid KEY=V1,V2,...");
        const Grid& grid = *spec.grid;
        for (double v : grid.values) apply_grid_value(spec.training, grid.key, v);
        const auto runs = per_seed(spec, [&](Model& source, const UnlabeledDataset& unlabeled,
                                             const Evaluator& evaluator, const TrainingConfig& cfg) {
            std::vector<RunReport> reports;
            for (double v : grid.values)
                reports.push_back(
                    adapt(source, unlabeled, apply_grid_value(cfg, grid.key, v), &evaluator).report);
            return reports;
        });
        OutputSet out;
        std::string table = "key,value,mean_accuracy,std_accuracy,seeds\n";
        for (std::size_t g = 0; g < grid.values.size(); ++g) {
            std::vector<double> acc;
            const std::string dir = grid.key + "_" + format_value(grid.values[g]);
            for (const auto& r : runs) {
                const RunReport& rep = r.reports[g];
                add_report(out, dir + "/seed_" + std::to_string(r.seed), rep);
                acc.push_back(rep.summary_value("final_accuracy").value_or(0.0));
            }
            const MeanStd a = mean_std(acc);
            table += grid.key + "," + format_value(grid.values[g]) + "," + format_double(a.mean) +
                     "," + format_double(a.std) + "," + std::to_string(runs.size()) + "\n";
            log << grid.key << "=" << format_value(grid.values[g]) << ": mean accuracy " << a.mean
                << " (std " << a.std << ")\n";
        }
        out.add("sweep.csv", table);
        out.commit(spec.out_dir);
    });
}

// --- Command line ------------------------------------------------------------------

namespace {

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<double> alpha;
    std::optional<std::size_t> batch;
    std::optional<double> lambda_g;
    std::optional<double> lambda_c;
    std::optional<std::size_t> epochs;
    std::vector<std::string> variants;
    std::string grid;
    std::string source;
    std::string checkpoint;
    std::optional<std::size_t> num_seeds;
    std::optional<std::size_t> jobs;
};

void add_flags(CLI::App* app, Flags& f) {
    app->add_option("--config", f.config, "JSON experiment config");
    app->add_option("--seed", f.seed, "Run seed");
    app->add_option("--out", f.out, "Output directory");
    app->add_option("--alpha", f.alpha, "Pseudo-source proportion per class");
    app->add_option("--batch", f.batch, "Minibatch size");
    app->add_option("--lambda-g", f.lambda_g, "Adversarial loss weight");
    app->add_option("--lambda-c", f.lambda_c, "Classification loss weight");
    app->add_option("--epochs", f.epochs, "Epochs (adaptation; source training for train-source)");
    app->add_option("--variant", f.variants, "Ablation variant (repeatable)");
    app->add_option("--grid", f.grid, "Sweep grid KEY=V1,V2,...");
    app->add_option("--source", f.source, "Source checkpoint for adapt");
    app->add_option("--checkpoint", f.checkpoint, "Checkpoint for evaluate");
    app->add_option("--num-seeds", f.num_seeds, "Seeds for ablate/sweep (consecutive from --seed)");
    app->add_option("--jobs", f.jobs, "Parallel runs for ablate/sweep");
}

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
}

ExperimentSpec resolve(Mode mode, const Flags& f) {
    ExperimentSpec spec;
    spec.mode = mode;
    std::optional<std::size_t> num_seeds;
    if (!f.config.empty()) {
        const nlohmann::json j = read_json_file(f.config);
        if (!j.is_object()) throw ConfigError("config must be a JSON object");
        static const std::set<std::string> known = {"task",  "training", "seeds", "jobs",
                                                    "out",   "source_checkpoint", "checkpoint",
                                                    "num_seeds"};
        for (const auto& [key, _] : j.items())
            if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "'");
        try {
            if (j.contains("task")) spec.task = TaskSpec::from_json(j["task"]);
            if (j.contains("training")) spec.training = TrainingConfig::from_json(j["training"]);
            spec.seeds = j.value("seeds", spec.seeds);
            spec.jobs = j.value("jobs", spec.jobs);
            spec.out_dir = j.value("out", spec.out_dir);
            spec.source_checkpoint = j.value("source_checkpoint", spec.source_checkpoint);
            spec.checkpoint = j.value("checkpoint", spec.checkpoint);
            if (j.contains("num_seeds")) num_seeds = j["num_seeds"].get<std::size_t>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
    }
    TrainingConfig& t = spec.training;
    if (f.seed) t.seed = *f.seed;
    if (f.out) spec.out_dir = *f.out;
    if (f.alpha) t.alpha = *f.alpha;
    if (f.batch) t.batch_size = *f.batch;
    if (f.lambda_g) t.lambda_g = *f.lambda_g;
    if (f.lambda_c) t.lambda_c = *f.lambda_c;
    if (f.epochs) (mode == Mode::kTrainSource ? t.source_epochs : t.epochs) = *f.epochs;
    t.validate();
    if (!f.source.empty()) spec.source_checkpoint = f.source;
    if (!f.checkpoint.empty()) spec.checkpoint = f.checkpoint;
    if (f.jobs) spec.jobs = *f.jobs;
    if (f.num_seeds) num_seeds = *f.num_seeds;
    if (f.seed || num_seeds) {
        if (!num_seeds && !spec.seeds.empty()) num_seeds = spec.seeds.size();
        spec.seeds.clear();
        for (std::size_t i = 0; i < num_seeds.value_or(5); ++i) spec.seeds.push_back(t.seed + i);
    }
    for (const auto& v : f.variants) spec.variants.push_back(variant_from_string(v));
    if (!f.grid.empty()) spec.grid = parse_grid(f.grid);
    return spec;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Pseudo-source domain adaptation experiments"};
    app.require_subcommand(1);
    struct Sub {
        const char* name;
        const char* help;
        Mode mode;
    };
    const Sub subs[] = {
        {"train-source", "Train a source model on labeled source data", Mode::kTrainSource},
        {"adapt", "Adapt a trained source model to the unlabeled target", Mode::kAdapt},
        {"evaluate", "Evaluate a checkpoint on the labeled target", Mode::kEvaluate},
        {"ablate", "Run ablation variants over several seeds", Mode::kAblate},
        {"sweep", "Sweep one hyperparameter over several seeds", Mode::kSweep},
    };
    Flags flags;
    std::vector<std::pair<CLI::App*, Mode>> commands;
    for (const auto& s : subs) {
        CLI::App* sub = app.add_subcommand(s.name, s.help);
        add_flags(sub, flags);
        commands.emplace_back(sub, s.mode);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    }

    Mode mode = Mode::kTrainSource;
    for (const auto& [sub, m] : commands)
        if (sub->parsed()) mode = m;

    ExperimentSpec spec;
    const int rc = guarded(err, [&] { spec = resolve(mode, flags); });
    if (rc != kExitOk) return rc;
    switch (mode) {
        case Mode::kTrainSource:
            return cmd_train_source(spec, err);
        case Mode::kAdapt:
            return cmd_adapt(spec, err);
        case Mode::kEvaluate:
            return cmd_evaluate(spec, err);
        case Mode::kAblate:
            return cmd_ablate(spec, err);
        case Mode::kSweep:
            return cmd_sweep(spec, err);
    }
    return kExitConfig;
}

}  // namespace psda::cli
