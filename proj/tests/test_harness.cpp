#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ebm/harness/config.hpp"
#include "ebm/harness/experiments.hpp"
#include "ebm/harness/output.hpp"

using namespace ebm;
using namespace ebm::harness;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / ("ebm_harness_" + name);
    fs::remove_all(dir);
    return dir;
}

template <class Fn>
ConfigError config_error(Fn&& fn)
{
    try {
        fn();
    } catch (const ConfigError& e) {
        return e;
    }
    ADD_FAILURE() << "no ConfigError thrown";
    return ValidationError("", "");
}

int run_cli(const std::string& args)
{
    const std::string cmd = std::string(EBM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kIsometry = R"({
  "seed": 11,
  "noise": {"type": "cylindrical", "truncation": 4},
  "experiment": {"times": [2.0], "paths": 10000}
})";

} // namespace

TEST(ParseConfig, MinimalConfigGetsDefaults)
{
    const RunConfig rc = parse_config(R"({"seed": 3, "noise": {"type": "off"}})");
    EXPECT_EQ(rc.model.modes, 32);
    EXPECT_EQ(rc.model.quad_order, 64);
    EXPECT_DOUBLE_EQ(rc.model.dt, 1e-3);
    EXPECT_TRUE(std::holds_alternative<NoiseOff>(rc.noise));
    EXPECT_TRUE(std::holds_alternative<Sellers>(rc.model.coalbedo));
    EXPECT_EQ(rc.experiment.kind, ExperimentKind::Simulate);
    EXPECT_EQ(rc.seed, 3u);
    EXPECT_EQ(rc.threads, 1);
}

TEST(ParseConfig, BudykoNeedsPositiveLambda)
{
    for (const char* lambda : {"0", "-1e-3"}) {
        const std::string text =
            std::string(R"({"seed": 1, "model": {"coalbedo": {"type": "budyko"}, "lambda": )") + lambda + "}}";
        const auto e = config_error([&] { parse_config(text); });
        EXPECT_EQ(e.field(), "model.lambda");
        EXPECT_EQ(e.kind(), "ValidationError");
    }
    EXPECT_NO_THROW(parse_config(R"({"seed": 1, "model": {"coalbedo": {"type": "budyko"}, "lambda": 1e-3}})"));
}

TEST(ParseConfig, PowerDecayNeedsTwoAlphaAboveOne)
{
    const auto e = config_error([] {
        parse_config(R"({"seed": 1, "noise": {"type": "cylindrical", "truncation": 4,
                         "psi": {"type": "power_decay", "a": 1, "alpha": 0.5}}})");
    });
    EXPECT_EQ(e.field(), "noise.psi.alpha");
    EXPECT_NE(std::string(e.what()).find("with 2α>1"), std::string::npos) << e.what();
}

TEST(ParseConfig, SeedRequiredUnlessOverridden)
{
    EXPECT_EQ(config_error([] { parse_config("{}"); }).field(), "seed");
    EXPECT_EQ(parse_config("{}", std::nullopt, 99u).seed, 99u);
    EXPECT_EQ(parse_config(R"({"seed": 5})", std::nullopt, 6u).seed, 6u);
    EXPECT_EQ(config_error([] { parse_config(R"({"seed": -1})"); }).field(), "seed");
}

TEST(ParseConfig, FieldPathsInErrors)
{
    EXPECT_EQ(config_error([] { parse_config(R"({"seed": 1, "model": {"dtt": 1}})"); }).field(), "model.dtt");
    EXPECT_EQ(config_error([] { parse_config(R"({"seed": 1, "model": {"modes": 8, "quad_order": 8}})"); }).field(),
              "model.quad_order");
    EXPECT_EQ(config_error([] { parse_config(R"({"seed": 1, "model": {"insolation": [0.2, 1.0]}})"); }).field(),
              "model.insolation");
    EXPECT_EQ(config_error([] {
                  parse_config(R"({"seed": 1, "noise": {"type": "cylindrical", "truncation": 40}})");
              }).field(),
              "noise.truncation");
    EXPECT_EQ(config_error([] {
                  parse_config(R"({"seed": 1, "model": {"forcing": [{"t": 1, "profile": -12}, {"t": 0, "profile": -11}]}})");
              }).field(),
              "model.forcing[1].t");
    EXPECT_EQ(config_error([] {
                  parse_config(R"({"seed": 1, "experiment": {"lambda_ladder": [0.1, 0.2]}})", ExperimentKind::Simulate);
              }).field(),
              "experiment.lambda_ladder[1]");
    EXPECT_EQ(config_error([] { parse_config(R"({"seed": 1, "model": {"emission": {"slope": 0}}})"); }).field(),
              "model.emission.slope");
}

TEST(ParseConfig, MalformedJsonIsParseError)
{
    const auto e = config_error([] { parse_config("{\"seed\": 1,"); });
    EXPECT_EQ(e.kind(), "ParseError");
}

TEST(ParseConfig, KindFromDocumentAndSubcommand)
{
    EXPECT_EQ(parse_config(kIsometry, ExperimentKind::Isometry).experiment.kind, ExperimentKind::Isometry);
    EXPECT_EQ(parse_config(R"({"seed": 1, "experiment": {"kind": "scan_q"}})").experiment.kind, ExperimentKind::ScanQ);
    EXPECT_EQ(config_error([] {
                  parse_config(R"({"seed": 1, "experiment": {"kind": "scan-q"}})", ExperimentKind::Longtime);
              }).field(),
              "experiment.kind");
    EXPECT_EQ(config_error([] { parse_config(R"({"seed": 1})", ExperimentKind::Isometry); }).field(), "noise.type");
    EXPECT_EQ(config_error([] { parse_config(R"({"seed": 1})", ExperimentKind::ConvergeLambda); }).field(),
              "model.coalbedo.type");
}

TEST(ParseConfig, ProfilesAndForcingKnots)
{
    const RunConfig rc = parse_config(R"({"seed": 1, "model": {
        "insolation": [1.0, 0.0, -0.482],
        "forcing": [{"t": 0, "profile": -10}, {"t": 2, "profile": [-14, 0.5]}]}})");
    EXPECT_NEAR(rc.model.forcing.insolation(0.0), 1.241, 1e-12);
    ASSERT_EQ(rc.model.forcing.forcing.size(), 2u);
    EXPECT_DOUBLE_EQ(rc.model.forcing.forcing[1].profile(1.0), -13.5);
}

TEST(ConfigHash, TracksResultsNotSeed)
{
    const RunConfig a = parse_config(R"({"seed": 1})");
    const RunConfig b = parse_config(R"({"seed": 2, "threads": 4, "output_dir": "elsewhere"})");
    const RunConfig c = parse_config(R"({"seed": 1, "model": {"Q": 4.0}})");
    EXPECT_EQ(config_hash(a), config_hash(b));
    EXPECT_NE(config_hash(a), config_hash(c));
    EXPECT_EQ(config_hash(a).size(), 16u);
    // Defaults spelled out give the same canonical config.
    EXPECT_EQ(config_hash(a), config_hash(parse_config(R"({"seed": 1, "model": {"modes": 32, "dt": 0.001}})")));
}

TEST(Csv, FormattingAndEscaping)
{
    EXPECT_EQ(format_double(0.1), "0.10000000000000001");
    EXPECT_EQ(format_double(1.0), "1");
    EXPECT_EQ(format_double(-75.0 / 7.0), "-10.714285714285714");
    const Table t{"x", {"a", "b,c", "d"}, {{1.5, std::string("say \"hi\""), Cell{}}, {static_cast<long long>(7), true, 0.25}}};
    EXPECT_EQ(to_csv(t), "a,\"b,c\",d\r\n1.5,\"say \"\"hi\"\"\",\r\n7,true,0.25\r\n");
    const Table bad{"y", {"a"}, {{1.0, 2.0}}};
    EXPECT_THROW(to_csv(bad), DimensionMismatch);
}

TEST(Output, AtomicWriteLeavesNoTemporary)
{
    const fs::path dir = scratch("atomic");
    fs::create_directories(dir);
    write_atomic(dir / "a.txt", "one");
    write_atomic(dir / "a.txt", "two");
    EXPECT_EQ(slurp(dir / "a.txt"), "two");
    int entries = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir))
        ++entries;
    EXPECT_EQ(entries, 1);
    EXPECT_THROW(write_atomic(dir / "missing" / "b.txt", "x"), IoError);
}

TEST(RunExperiment, IsometryAgainstClosedForm)
{
    const RunResult r = run_experiment(parse_config(kIsometry, ExperimentKind::Isometry));
    const auto target = r.summary.scalar("target_t=2");
    ASSERT_TRUE(target);
    EXPECT_NEAR(target->value, 1.6, 1e-14);
    const auto mean = r.summary.scalar("mc_mean_t=2");
    ASSERT_TRUE(mean && mean->std_error);
    EXPECT_LT(std::abs(mean->value - 1.6), 4.0 * *mean->std_error);
    EXPECT_TRUE(r.summary.passed());

    const fs::path dir = scratch("isometry");
    const auto files = emit_outputs(r, dir);
    EXPECT_EQ(files.back(), "summary.json");
    const std::string csv = slurp(dir / "isometry.csv");
    EXPECT_EQ(csv.substr(0, csv.find("\r\n")), "t,mc_mean,target,stderr,rel_err");
    const json summary = json::parse(slurp(dir / "summary.json"));
    EXPECT_EQ(summary["seed"].get<std::uint64_t>(), 11u);
    EXPECT_EQ(summary["config_hash"].get<std::string>(), r.summary.config_hash);
    EXPECT_TRUE(summary["scalars"]["mc_mean_t=2"].contains("stderr"));
    EXPECT_EQ(summary.begin().key(), "experiment");
}

TEST(RunExperiment, ScanCountsInReferenceRegimes)
{
    const RunResult r = run_experiment(parse_config(R"({"seed": 0, "experiment": {"q_grid": [1.0, 4.5, 16.0]}})",
                                                    ExperimentKind::ScanQ));
    const Table* t = r.table("bifurcation");
    ASSERT_NE(t, nullptr);
    const std::vector<std::string> header{"Q",          "count",      "u_at_0_1",   "u_at_0_2", "u_at_0_3",
                                          "residual_1", "residual_2", "residual_3", "J_1",      "J_2",
                                          "J_3"};
    EXPECT_EQ(t->header, header);
    ASSERT_EQ(t->rows.size(), 3u);
    EXPECT_EQ(std::get<long long>(t->rows[0][1]), 1);
    EXPECT_EQ(std::get<long long>(t->rows[1][1]), 3);
    EXPECT_EQ(std::get<long long>(t->rows[2][1]), 1);
    EXPECT_TRUE(std::holds_alternative<std::monostate>(t->rows[0][3]));
    EXPECT_TRUE(r.summary.passed());
    EXPECT_DOUBLE_EQ(r.summary.thresholds["Q3"].get<double>(), 5.0);
}

TEST(RunExperiment, ByteIdenticalAcrossRunsAndThreadCounts)
{
    const char* text = R"({"seed": 5, "model": {"horizon": 0.2},
        "noise": {"type": "cylindrical", "truncation": 8, "smoothing": 1.0},
        "experiment": {"random_trials": 6}})";
    RunConfig one = parse_config(text, ExperimentKind::Compare);
    RunConfig four = one;
    four.threads = 4;
    const fs::path a = scratch("det_a"), b = scratch("det_b"), c = scratch("det_c");
    emit_outputs(run_experiment(one), a);
    emit_outputs(run_experiment(one), b);
    emit_outputs(run_experiment(four), c);
    for (const char* f : {"comparison_trials.csv", "summary.json"}) {
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
        EXPECT_EQ(slurp(a / f), slurp(c / f)) << f;
    }
    RunConfig other = one;
    other.seed = 6;
    const fs::path d = scratch("det_d");
    emit_outputs(run_experiment(other), d);
    EXPECT_NE(slurp(a / "comparison_trials.csv"), slurp(d / "comparison_trials.csv"));
}

TEST(RunExperiment, SimulateExportsTrajectoriesAndIncrements)
{
    const RunResult r = run_experiment(parse_config(R"({"seed": 2, "model": {"modes": 8, "horizon": 0.01},
        "noise": {"type": "cylindrical", "truncation": 3},
        "experiment": {"initial": -8.4, "store_every": 2, "export_increments": true}})"));
    const Table* modal = r.table("trajectory");
    const Table* nodal = r.table("trajectory_nodal");
    const Table* diag = r.table("diagnostics");
    const Table* inc = r.table("increments");
    ASSERT_TRUE(modal && nodal && diag && inc);
    EXPECT_EQ(modal->header.size(), 9u);
    EXPECT_EQ(nodal->header.size(), 17u);
    EXPECT_EQ(modal->rows.size(), 6u);
    EXPECT_EQ(diag->header, (std::vector<std::string>{"t", "l2", "min", "max", "nondegeneracy_0.1", "nondegeneracy_0.5"}));
    EXPECT_EQ(inc->header, (std::vector<std::string>{"k", "t", "dB_1", "dB_2", "dB_3"}));
    EXPECT_EQ(inc->rows.size(), 10u);
    EXPECT_TRUE(r.summary.passed());
}

TEST(RunExperiment, StationaryNoiseOffEquilibrium)
{
    const RunResult r = run_experiment(parse_config(R"({"seed": 0, "experiment": {"initial": -8.0}})",
                                                    ExperimentKind::Stationary));
    EXPECT_TRUE(r.summary.passed());
    EXPECT_EQ(r.summary.scalar("count")->value, 3.0);
    EXPECT_NEAR(r.summary.scalar("u_max_at_0")->value, -8.4, 1e-9);
    EXPECT_NEAR(r.summary.scalar("u_min_at_0")->value, -11.1, 1e-9);
}

TEST(RunExperiment, LongtimeNoiseOffConverges)
{
    const RunResult r = run_experiment(parse_config(R"({"seed": 0, "model": {"horizon": 20},
        "experiment": {"initial": -8.0, "paths": 1, "distance_tol": 1e-6}})",
                                                    ExperimentKind::Longtime));
    EXPECT_TRUE(r.summary.passed());
    EXPECT_LT(r.summary.scalar("mean_terminal_distance")->value, 1e-6);
}

TEST(Cli, ExitCodes)
{
    const fs::path dir = scratch("cli");
    fs::create_directories(dir);
    const fs::path good = dir / "good.json";
    const fs::path strict = dir / "strict.json";
    const fs::path bad = dir / "bad.json";
    std::ofstream(good) << R"({"seed": 1, "noise": {"type": "cylindrical", "truncation": 2},
                              "experiment": {"paths": 200, "times": [0.5]}})";
    std::ofstream(strict) << R"({"seed": 1, "noise": {"type": "cylindrical", "truncation": 2},
                                "experiment": {"paths": 200, "times": [0.5], "z_max": 1e-9}})";
    std::ofstream(bad) << R"({"seed": 1, "model": {"coalbedo": {"type": "budyko"}, "lambda": 0}})";
    const std::string out = " --out " + (dir / "out").string();
    EXPECT_EQ(run_cli("isometry --config " + good.string() + out), 0);
    EXPECT_TRUE(fs::exists(dir / "out" / "isometry.csv"));
    EXPECT_EQ(run_cli("isometry --config " + strict.string() + out), 1);
    EXPECT_EQ(run_cli("simulate --config " + bad.string() + out), 2);
    EXPECT_EQ(run_cli("simulate --config " + (dir / "missing.json").string() + out), 2);
    EXPECT_EQ(run_cli("no-such-command"), 2);
    EXPECT_EQ(run_cli("isometry --config " + good.string() + " --threads 0" + out), 2);
    // Output directory below a regular file cannot be created.
    EXPECT_EQ(run_cli("isometry --config " + good.string() + " --out " + good.string() + "/sub"), 3);
    EXPECT_EQ(run_cli("isometry --config " + good.string() + " --seed 77 --threads 2" + out), 0);
    EXPECT_NE(slurp(dir / "out" / "summary.json").find("\"seed\": 77"), std::string::npos);
}
