// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "lime/checkpoint.hpp"
#include "lime/cli.hpp"
#include "lime/config.hpp"
#include "lime/json_writer.hpp"
#include "lime/selection_analysis.hpp"

namespace lime {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

CliResult run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv = {"lime"};
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    std::ostringstream out;
    std::ostringstream err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() /
               ("lime_cli_" + std::string(info->name()) + "_" +
                std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string write_config(const RunConfig& cfg, const std::string& name = "config.json") {
        const fs::path p = dir_ / name;
        std::ofstream(p) << dump_json(to_json(cfg), 2);
        return p.string();
    }

    static RunConfig small_config() {
        RunConfig cfg = default_run_config();
        cfg.data.generator.samples_per_task = 30;
        cfg.train.epochs = 1;
        cfg.train.log_every = 1;
        return cfg;
    }

    fs::path dir_;
};

TEST(Cli, HelpDocumentsEverySubcommand) {
    const CliResult r = run_cli({"--help"});
    EXPECT_EQ(r.code, 0);
    for (const char* sub : {"train", "eval", "check-grad", "compare-selection", "param-count", "mi-check", "cka",
                            "route-inspect"}) {
        EXPECT_NE(r.out.find(sub), std::string::npos) << sub;
    }
    const CliResult t = run_cli({"train", "--help"});
    EXPECT_EQ(t.code, 0);
    for (const char* flag : {"--config", "--output-dir", "--seed", "schema_version", "metrics.jsonl"}) {
        EXPECT_NE(t.out.find(flag), std::string::npos) << flag;
    }
}

TEST(Cli, UnknownFlagsAndMissingSubcommandFail) {
    EXPECT_EQ(run_cli({"param-count", "--bogus"}).code, 1);
    EXPECT_EQ(run_cli({}).code, 1);
    EXPECT_EQ(run_cli({"frobnicate"}).code, 1);
    EXPECT_EQ(run_cli({"train"}).code, 1);
}

TEST_F(CliTest, TrainWritesArtifacts) {
    const std::string cfg = write_config(small_config());
    const fs::path out = dir_ / "run";
    const CliResult r = run_cli({"train", "--config", cfg, "--output-dir", out.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* f : {"config.json", "metrics.jsonl", "checkpoint.bin", "routing_trace.csv", "eval.json"}) {
        EXPECT_TRUE(fs::exists(out / f)) << f;
    }
    // The persisted config alone reproduces the run.
    const CliResult again = run_cli({"train", "--config", (out / "config.json").string(), "--output-dir",
                                     (dir_ / "rerun").string()});
    ASSERT_EQ(again.code, 0) << again.err;
    EXPECT_EQ(slurp(out / "metrics.jsonl"), slurp(dir_ / "rerun" / "metrics.jsonl"));
    EXPECT_EQ(slurp(out / "checkpoint.bin"), slurp(dir_ / "rerun" / "checkpoint.bin"));
    const json summary = json::parse(r.out);
    EXPECT_TRUE(summary.contains("eval"));
    const json first = json::parse(slurp(out / "metrics.jsonl").substr(0, slurp(out / "metrics.jsonl").find('\n')));
    for (const char* key : {"step", "task", "total", "routing_entropy", "lr_factor", "grad_norm"}) {
        EXPECT_TRUE(first.contains(key)) << key;
    }
}

TEST_F(CliTest, SeedFlagChangesTheRun) {
    const std::string cfg = write_config(small_config());
    ASSERT_EQ(run_cli({"train", "--config", cfg, "--output-dir", (dir_ / "a").string(), "--seed", "1"}).code, 0);
    ASSERT_EQ(run_cli({"train", "--config", cfg, "--output-dir", (dir_ / "b").string(), "--seed", "2"}).code, 0);
    EXPECT_NE(slurp(dir_ / "a" / "metrics.jsonl"), slurp(dir_ / "b" / "metrics.jsonl"));
    EXPECT_EQ(json::parse(slurp(dir_ / "a" / "config.json"))["seed"], 1);
}

TEST_F(CliTest, ZeroLearningRateKeepsInitialCheckpoint) {
    RunConfig cfg = small_config();
    cfg.train.lr_peft = 0.0;
    cfg.train.lr_expert = 0.0;
    const std::string path = write_config(cfg);
    ASSERT_EQ(run_cli({"train", "--config", path, "--output-dir", (dir_ / "run").string()}).code, 0);
    EXPECT_EQ(load_checkpoint((dir_ / "run" / "checkpoint.bin").string()), model_tensors(build_model(cfg)));
}

TEST_F(CliTest, OutputRootEnvironmentVariable) {
    RunConfig cfg = small_config();
    cfg.output.dir = "relative_run";
    const std::string path = write_config(cfg);
    ::setenv("LIME_OUTPUT_ROOT", dir_.c_str(), 1);
    const CliResult r = run_cli({"train", "--config", path});
    ::unsetenv("LIME_OUTPUT_ROOT");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(dir_ / "relative_run" / "metrics.jsonl"));
}

TEST_F(CliTest, InvalidConfigExitsOne) {
    const fs::path p = dir_ / "bad.json";
    std::ofstream(p) << R"({"schema_version": 1, "model": {"experts": 0}})";
    const CliResult r = run_cli({"train", "--config", p.string(), "--output-dir", (dir_ / "x").string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("experts"), std::string::npos);
    std::ofstream(dir_ / "garbage.json") << "{not json";
    EXPECT_EQ(run_cli({"train", "--config", (dir_ / "garbage.json").string()}).code, 1);
    EXPECT_EQ(run_cli({"train", "--config", (dir_ / "missing.json").string()}).code, 1);
}

TEST_F(CliTest, DivergenceHasDistinctExitCode) {
    RunConfig cfg = small_config();
    cfg.train.lr_peft = 1e300;
    cfg.train.lr_expert = 1e300;
    cfg.train.warmup_ratio = 0.0;
    const std::string path = write_config(cfg);
    const CliResult r = run_cli({"train", "--config", path, "--output-dir", (dir_ / "run").string()});
    EXPECT_EQ(r.code, 2) << r.err;
}

TEST_F(CliTest, EvalReportsPerTaskMetrics) {
    const RunConfig cfg = small_config();
    const std::string path = write_config(cfg);
    ASSERT_EQ(run_cli({"train", "--config", path, "--output-dir", (dir_ / "run").string()}).code, 0);
    const CliResult r =
        run_cli({"eval", "--config", path, "--checkpoint", (dir_ / "run" / "checkpoint.bin").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const json j = json::parse(r.out);
    EXPECT_EQ(j["per_task"].size(), cfg.data.generator.n_tasks);
    EXPECT_EQ(j, json::parse(slurp(dir_ / "run" / "eval.json")));
}

TEST(Cli, CheckGradPassesAndReportsGroups) {
    const CliResult r = run_cli({"check-grad", "--configs", "24"});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out.rfind("param_group,checks,max_rel_error,pass\n", 0), 0u);
    for (const char* g : {"lora.A", "lora.B", "diag.s", "experts", "shared.p", "shared.gamma", "moe.router"}) {
        EXPECT_NE(r.out.find(std::string(g) + ","), std::string::npos) << g;
    }
    EXPECT_EQ(r.out.find(",false"), std::string::npos);
}

TEST(Cli, CheckGradDetectsInjectedFault) {
    const CliResult r = run_cli({"check-grad", "--inject-fault", "skip_renorm_jacobian"});
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("rel_err="), std::string::npos);
    EXPECT_EQ(run_cli({"check-grad", "--inject-fault", "nonsense"}).code, 1);
}

TEST_F(CliTest, CheckGradOnConfiguredModel) {
    const std::string path = write_config(small_config());
    const CliResult r = run_cli({"check-grad", "--config", path, "--configs", "0"});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("experts,"), std::string::npos);
}

TEST(Cli, ParamCountMatchesFormula) {
    const CliResult r = run_cli({"param-count", "--d-in", "64", "--d-out", "64", "--rank", "2", "--experts", "4"});
    ASSERT_EQ(r.code, 0) << r.err;
    const json j = json::parse(r.out);
    EXPECT_EQ(j["lime"]["formula"], 64 * 2 * 2 + 4 * 64 + 64 + 1);
    EXPECT_EQ(j["lime"]["enumerated"], j["lime"]["formula"]);
    EXPECT_EQ(j["moe"]["enumerated"], j["moe"]["formula"]);
    EXPECT_GT(j["moe_over_lime"].get<double>(), 2.2);
    const CliResult multi = run_cli({"param-count", "--layers", "3", "--adapter", "diag", "--no-shared"});
    ASSERT_EQ(multi.code, 0);
    EXPECT_EQ(json::parse(multi.out)["lime"]["formula"], 3 * (64 + 4 * 64));
}

TEST(Cli, MiCheckPrintsMonotoneChains) {
    const CliResult r = run_cli({"mi-check", "--constructions", "20", "--seed", "3"});
    ASSERT_EQ(r.code, 0) << r.err;
    const json j = json::parse(r.out);
    EXPECT_EQ(j["violations"], 0);
    for (const auto& c : j["chains"]) {
        const auto mi = c["mi"].get<std::vector<double>>();
        for (std::size_t k = 1; k < mi.size(); ++k) {
            EXPECT_GE(mi[k], mi[k - 1]);
        }
    }
    EXPECT_EQ(r.out, run_cli({"mi-check", "--constructions", "20", "--seed", "3"}).out);
}

TEST_F(CliTest, CompareSelectionWritesFile) {
    const fs::path out = dir_ / "table.csv";
    ASSERT_EQ(run_cli({"compare-selection", "--samples", "500", "--out", out.string()}).code, 0);
    const std::string text = slurp(out);
    EXPECT_EQ(text, run_cli({"compare-selection", "--samples", "500"}).out);
    EXPECT_NE(text.find("relative_threshold,\"theta=0.7\""), std::string::npos);
}

TEST_F(CliTest, CkaFromCsvFiles) {
    std::ofstream(dir_ / "x.csv") << "a,b\n1,0\n0,1\n2,2\n3,1\n";
    std::ofstream(dir_ / "y.csv") << "2,0\n0,2\n4,4\n6,2\n";
    const CliResult r =
        run_cli({"cka", "--x", (dir_ / "x.csv").string(), "--y", (dir_ / "y.csv").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NEAR(json::parse(r.out)["cka"].get<double>(), 1.0, 1e-12);
    EXPECT_EQ(run_cli({"cka", "--x", (dir_ / "x.csv").string()}).code, 1);
}

TEST_F(CliTest, CkaBetweenLimeAndMoeOutputs) {
    const std::string path = write_config(small_config());
    const CliResult r = run_cli({"cka", "--config", path});
    ASSERT_EQ(r.code, 0) << r.err;
    const double s = json::parse(r.out)["cka"].get<double>();
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
}

TEST_F(CliTest, RouteInspectSingleExpertHasUnitWeights) {
    RunConfig cfg = small_config();
    cfg.lime.experts = 1;
    const std::string path = write_config(cfg);
    const CliResult r = run_cli({"route-inspect", "--config", path, "--limit", "10"});
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream in(r.out);
    const auto records = read_trace(in);
    ASSERT_EQ(records.size(), 10u);
    for (const auto& rec : records) {
        EXPECT_EQ(rec.decision.weights, Vector{1.0});
    }
    const CliResult heat = run_cli({"route-inspect", "--config", path, "--heatmap"});
    ASSERT_EQ(heat.code, 0);
    EXPECT_EQ(heat.out, "layer,expert_0\n0,1\n");
}

} // namespace
} // namespace lime
