#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "psda/cli.hpp"
#include "psda/error.hpp"
#include "psda/nets.hpp"

using namespace psda;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("psda_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    std::string write(const std::string& name, const std::string& text) const {
        std::ofstream(path(name)) << text;
        return path(name);
    }

    // Small, fast task used by most tests.
    std::string quick_config(const std::string& extra_training = "") const {
        return write("quick.json", R"({"task": {"n": 120},
            "training": {"source_epochs": 20, "epochs": 2, "batch_size": 32)" +
                                       extra_training + "}}");
    }

    int cli(std::vector<std::string> args) {
        args.insert(args.begin(), "psda");
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        out_.str("");
        err_.str("");
        return cli::run(static_cast<int>(argv.size()), argv.data(), out_, err_);
    }

    static std::string slurp(const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    static std::size_t count_lines(const std::string& p) {
        std::ifstream in(p);
        std::size_t n = 0;
        for (std::string line; std::getline(in, line);) ++n;
        return n;
    }

    fs::path dir_;
    std::ostringstream out_, err_;
};

}  // namespace

TEST(Grid, ParsesKeysAndAliases) {
    const auto g = cli::parse_grid("alpha=0.05,0.1,0.2,0.4");
    EXPECT_EQ(g.key, "alpha");
    EXPECT_EQ(g.values, (std::vector<double>{0.05, 0.1, 0.2, 0.4}));
    EXPECT_EQ(cli::parse_grid("batch_size=50,100").key, "batch");
    EXPECT_EQ(cli::parse_grid("lambda_g=0.1").key, "lambda-g");
}

TEST(Grid, RejectsBadGrids) {
    EXPECT_THROW(cli::parse_grid("alpha=0.1,0.1"), ConfigError);
    EXPECT_THROW(cli::parse_grid("alpha="), ConfigError);
    EXPECT_THROW(cli::parse_grid("alpha=x"), ConfigError);
    EXPECT_THROW(cli::parse_grid("gamma=0.1"), ConfigError);
    EXPECT_THROW(cli::parse_grid("alpha"), ConfigError);
    EXPECT_THROW(cli::apply_grid_value({}, "batch", 50.5), ConfigError);
    EXPECT_THROW(cli::apply_grid_value({}, "batch", 1), ConfigError);
    EXPECT_EQ(cli::apply_grid_value({}, "batch", 200).batch_size, 200u);
}

TEST_F(CliTest, TrainSourceWritesReloadableCheckpoint) {
    const auto cfg = quick_config();
    ASSERT_EQ(cli({"train-source", "--config", cfg, "--out", path("a")}), 0) << err_.str();
    for (const char* f : {"source.ckpt", "report.json", "epochs.csv", "timing.json"})
        EXPECT_TRUE(fs::exists(path("a") + "/" + f)) << f;
    const auto loaded = load_checkpoint(path("a/source.ckpt"));
    const auto again = load_checkpoint(path("a/source.ckpt"));
    const auto pair = cli::load_task(cli::TaskSpec{}, 0);
    EXPECT_EQ(loaded.model.logits(pair.target.samples), again.model.logits(pair.target.samples));
    EXPECT_EQ(count_lines(path("a/epochs.csv")), 21u);
}

TEST_F(CliTest, SameSeedGivesByteIdenticalArtifacts) {
    const auto cfg = quick_config();
    ASSERT_EQ(cli({"train-source", "--config", cfg, "--seed", "4", "--out", path("a")}), 0);
    ASSERT_EQ(cli({"train-source", "--config", cfg, "--seed", "4", "--out", path("b")}), 0);
    EXPECT_EQ(slurp(path("a/report.json")), slurp(path("b/report.json")));
    EXPECT_EQ(slurp(path("a/source.ckpt")), slurp(path("b/source.ckpt")));
    for (const char* d : {"a", "b"})
        ASSERT_EQ(cli({"adapt", "--config", cfg, "--seed", "4", "--source", path("a/source.ckpt"),
                       "--out", path(std::string(d) + "_adapt")}),
                  0)
            << err_.str();
    for (const char* f : {"report.json", "target.ckpt", "embeddings_before.csv", "embeddings_after.csv"})
        EXPECT_EQ(slurp(path("a_adapt/") + f), slurp(path("b_adapt/") + f)) << f;
}

TEST_F(CliTest, MissingDatasetIsDataErrorWithoutOutputs) {
    const auto cfg = write("files.json", R"({"task": {"source_csv": ")" + path("nope.csv") +
                                             R"(", "target_csv": ")" + path("nope2.csv") + R"("}})");
    EXPECT_EQ(cli({"train-source", "--config", cfg, "--out", path("out")}), 3);
    EXPECT_FALSE(fs::exists(path("out/source.ckpt")));
    EXPECT_FALSE(fs::exists(path("out/report.json")));
}

TEST_F(CliTest, OutOfRangeLabelIsDataError) {
    const auto src = write("src.csv", "f0,f1,label\n0.1,0.2,0\n0.3,0.4,2\n");
    const auto tgt = write("tgt.csv", "f0,f1,label\n0.1,0.2,0\n0.3,0.4,1\n");
    const auto cfg = write("files.json", R"({"task": {"source_csv": ")" + src + R"(", "target_csv": ")" +
                                             tgt + R"(", "num_classes": 2}})");
    EXPECT_EQ(cli({"train-source", "--config", cfg, "--out", path("out")}), 3);
    EXPECT_FALSE(fs::exists(path("out")) && !fs::is_empty(path("out")));
}

TEST_F(CliTest, ConfigErrorsExitWithTwo) {
    EXPECT_EQ(cli({"train-source", "--config", write("bad.json", R"({"bogus": 1})")}), 2);
    EXPECT_EQ(cli({"train-source", "--config", write("bad2.json", R"({"training": {"alpha": 2}})")}), 2);
    EXPECT_EQ(cli({"train-source", "--config", path("missing.json")}), 2);
    EXPECT_EQ(cli({"train-source", "--batch", "1"}), 2);
    EXPECT_EQ(cli({"train-source", "--no-such-flag"}), 2);
    EXPECT_EQ(cli({"adapt", "--out", path("x")}), 2);
    EXPECT_EQ(cli({"sweep", "--grid", "alpha=0.1,0.1", "--out", path("x")}), 2);
    EXPECT_EQ(cli({}), 2);
    EXPECT_FALSE(fs::exists(path("x")));
}

TEST_F(CliTest, UnknownVariantListsValidNames) {
    EXPECT_EQ(cli({"ablate", "--variant", "bogus", "--out", path("x")}), 2);
    EXPECT_NE(err_.str().find("cls+div+cons"), std::string::npos);
    EXPECT_NE(err_.str().find("entropy+mixup"), std::string::npos);
}

TEST_F(CliTest, ZeroEpochAdaptKeepsSourceParameters) {
    const auto cfg = quick_config();
    ASSERT_EQ(cli({"train-source", "--config", cfg, "--out", path("s")}), 0);
    ASSERT_EQ(cli({"adapt", "--config", cfg, "--epochs", "0", "--source", path("s/source.ckpt"),
                   "--out", path("t")}),
              0)
        << err_.str();
    const auto src = load_checkpoint(path("s/source.ckpt"));
    const auto tgt = load_checkpoint(path("t/target.ckpt"));
    const auto ps = src.model.parameters();
    const auto pt = tgt.model.parameters();
    ASSERT_EQ(ps.size(), pt.size());
    for (std::size_t i = 0; i < ps.size(); ++i) EXPECT_EQ(ps[i].tensor.value(), pt[i].tensor.value());
}

TEST_F(CliTest, EvaluateWritesAccuracies) {
    const auto cfg = quick_config();
    ASSERT_EQ(cli({"train-source", "--config", cfg, "--out", path("s")}), 0);
    ASSERT_EQ(cli({"evaluate", "--config", cfg, "--checkpoint", path("s/source.ckpt"), "--out", path("e")}),
              0)
        << err_.str();
    const auto j = nlohmann::json::parse(slurp(path("e/evaluation.json")));
    EXPECT_GE(j["target_accuracy"].get<double>(), 0.0);
    EXPECT_LE(j["source_accuracy"].get<double>(), 1.0);
}

TEST_F(CliTest, AlphaEndpointsRunToCompletion) {
    const auto cfg = quick_config();
    ASSERT_EQ(cli({"train-source", "--config", cfg, "--out", path("s")}), 0);
    for (const char* a : {"0.9", "0.01"})
        EXPECT_EQ(cli({"adapt", "--config", cfg, "--alpha", a, "--source", path("s/source.ckpt"), "--out",
                       path(std::string("t") + a)}),
                  0)
            << a << ": " << err_.str();
}

TEST_F(CliTest, AblateWritesOneRowPerVariant) {
    const auto cfg = quick_config();
    ASSERT_EQ(cli({"ablate", "--config", cfg, "--num-seeds", "2", "--variant", "entropy+mixup", "--variant",
                   "random+mixup", "--variant", "entropy\xE2\x88\x92mixup", "--out", path("ab")}),
              0)
        << err_.str();
    EXPECT_EQ(count_lines(path("ab/ablation.csv")), 4u);
    EXPECT_TRUE(fs::exists(path("ab/entropy-mixup/seed_1/report.json")));
}

TEST_F(CliTest, SweepWritesOneReportPerGridPoint) {
    const auto cfg = quick_config();
    ASSERT_EQ(cli({"sweep", "--config", cfg, "--num-seeds", "1", "--grid", "alpha=0.05,0.1,0.2,0.4", "--jobs",
                   "2", "--out", path("sw")}),
              0)
        << err_.str();
    EXPECT_EQ(count_lines(path("sw/sweep.csv")), 5u);
    for (const char* v : {"0.05", "0.1", "0.2", "0.4"})
        EXPECT_TRUE(fs::exists(path("sw/alpha_") + v + "/seed_0/report.json")) << v;
}

TEST_F(CliTest, BinaryReportsExitCodes) {
    const std::string bin = PSDA_CLI_PATH;
    EXPECT_EQ(WEXITSTATUS(std::system((bin + " --help > /dev/null").c_str())), 0);
    EXPECT_EQ(WEXITSTATUS(std::system((bin + " train-source --batch 1 2> /dev/null").c_str())), 2);
}
