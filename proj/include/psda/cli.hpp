#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "psda/config.hpp"
#include "psda/data.hpp"
#include "psda/trainer.hpp"

namespace psda::cli {

// Where the data comes from: a synthetic generator or a pair of CSV files.
struct TaskSpec {
    std::string generator = "two_moons";  // "two_moons", "blobs" or "files"
    std::size_t n = 600;
    double rotation_deg = 30.0;
    std::vector<double> translation = {0.0, 0.0};
    double noise = 0.12;
    std::vector<std::size_t> class_sizes = {200, 200, 200};
    std::optional<std::uint64_t> seed;  // defaults to the run seed
    std::string source_csv;
    std::string target_csv;
    std::size_t num_classes = 2;

    static TaskSpec from_json(const nlohmann::json& j);
    nlohmann::ordered_json to_json() const;
};

enum class Mode { kTrainSource, kAdapt, kEvaluate, kAblate, kSweep };

struct Grid {
    std::string key;  // alpha, batch, beta, lambda-g or lambda-c
    std::vector<double> values;
};

struct ExperimentSpec {
    Mode mode = Mode::kTrainSource;
    TaskSpec task;
    TrainingConfig training;
    std::string out_dir = "out";
    std::string source_checkpoint;  // adapt
    std::string checkpoint;         // evaluate
    std::vector<std::uint64_t> seeds;  // ablate / sweep
    std::size_t jobs = 1;
    std::vector<Variant> variants;  // ablate
    std::optional<Grid> grid;       // sweep
};

// Parses "key=v1,v2,..."; throws ConfigError on an unknown key, an empty
// grid, or duplicate values.
Grid parse_grid(const std::string& text);

// Applies one grid value to a config.
TrainingConfig apply_grid_value(TrainingConfig cfg, const std::string& key, double value);

// Builds the two domains of the task for one run seed.
DomainPair load_task(const TaskSpec& task, std::uint64_t run_seed);

// Subcommands. Each returns a process exit code: 0 success, 2 config error,
// 3 data error, 4 numeric failure. Outputs are written only after the whole
// computation succeeded.
int cmd_train_source(const ExperimentSpec& spec, std::ostream& log);
int cmd_adapt(const ExperimentSpec& spec, std::ostream& log);
int cmd_evaluate(const ExperimentSpec& spec, std::ostream& log);
int cmd_ablate(const ExperimentSpec& spec, std::ostream& log);
int cmd_sweep(const ExperimentSpec& spec, std::ostream& log);

// Full command line: psda <subcommand> [flags].
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace psda::cli
