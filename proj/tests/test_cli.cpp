#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vbodmr/io.hpp"

namespace fs = std::filesystem;
using vbodmr::Json;

namespace {

class CliTest : public ::testing::Test {
protected:
    fs::path dir;

    void SetUp() override {
        dir = fs::temp_directory_path() /
              ("vbodmr_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    fs::path config(const std::string& name, const Json& j) {
        const fs::path p = dir / name;
        std::ofstream(p) << j.dump(2);
        return p;
    }

    int run(const std::string& verb, const fs::path& cfg, const std::string& extra = "") {
        const std::string cmd = std::string("\"") + VBODMR_CLI_PATH + "\" " + verb + " --config \"" + cfg.string() +
                                "\" --quiet " + extra + " > \"" + (dir / "log.txt").string() + "\" 2>&1";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    std::string log() const { return slurp(dir / "log.txt"); }

    static std::string slurp(const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }
};

Json make_simulate(const std::string& out, double p15 = 0.6) {
    Json j = Json::parse(R"({
      "schema_version": "1",
      "seed": 7,
      "simulate": {
        "model": {"f_center_mhz": 2310.0, "contrast": 0.05, "linewidth_mhz": 50.0, "a14_mhz": 43.0, "a15_mhz": -64.0},
        "grid": {"start_mhz": 2060.0, "stop_mhz": 2560.0, "points": 801},
        "noise_sigma": 0.001
      }
    })");
    j["output_dir"] = out;
    j["isotopes"] = Json{{"p15", p15}};
    return j;
}

bool empty_or_absent(const fs::path& p) { return !fs::exists(p) || fs::is_empty(p); }

}  // namespace

TEST_F(CliTest, SimulateIsDeterministic) {
    ASSERT_EQ(run("simulate", config("a.json", make_simulate("out_a"))), 0) << log();
    ASSERT_EQ(run("simulate", config("b.json", make_simulate("out_b"))), 0) << log();
    const std::string a = slurp(dir / "out_a" / "spectrum.csv");
    EXPECT_EQ(a, slurp(dir / "out_b" / "spectrum.csv"));
    EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 802);
    EXPECT_TRUE(fs::exists(dir / "out_a" / "simulate.json"));
    ASSERT_EQ(run("simulate", config("c.json", make_simulate("out_c")), "--seed 8"), 0) << log();
    EXPECT_NE(a, slurp(dir / "out_c" / "spectrum.csv"));
}

TEST_F(CliTest, OutOfRangeP15WritesNothing) {
    EXPECT_EQ(run("simulate", config("c.json", make_simulate("out", 1.5))), 1);
    EXPECT_NE(log().find("p15"), std::string::npos) << log();
    EXPECT_TRUE(empty_or_absent(dir / "out"));
}

TEST_F(CliTest, UnknownKeysAreListed) {
    Json j = make_simulate("out");
    j["simulate"]["nosie_sigma"] = 0.1;
    j["colour"] = "blue";
    EXPECT_EQ(run("simulate", config("c.json", j)), 1);
    EXPECT_NE(log().find("nosie_sigma"), std::string::npos) << log();
    EXPECT_NE(log().find("colour"), std::string::npos) << log();
    EXPECT_TRUE(empty_or_absent(dir / "out"));
}

TEST_F(CliTest, MissingInputIsIngestionError) {
    const Json j = {{"schema_version", "1"}, {"output_dir", "out"}, {"fit", {{"input", "nope.csv"}}}};
    EXPECT_EQ(run("fit", config("c.json", j)), 2);
    EXPECT_TRUE(empty_or_absent(dir / "out"));
}

TEST_F(CliTest, HeaderOnlyInputIsIngestionError) {
    std::ofstream(dir / "h.csv") << "frequency_mhz,ratio\n";
    const Json j = {{"schema_version", "1"}, {"output_dir", "out"}, {"fit", {{"input", "h.csv"}}}};
    EXPECT_EQ(run("fit", config("c.json", j)), 2);
    EXPECT_NE(log().find("insufficient samples"), std::string::npos) << log();
    EXPECT_TRUE(empty_or_absent(dir / "out"));
}

TEST_F(CliTest, SimulateThenFitFifteenN) {
    Json sim = make_simulate("out", 1.0);
    sim["simulate"]["model"]["contrast"] = 0.11;
    ASSERT_EQ(run("simulate", config("s.json", sim)), 0) << log();
    const Json fit = {{"schema_version", "1"},
                      {"output_dir", "out"},
                      {"fit", {{"input", "out/spectrum.csv"}, {"p15", 1.0}, {"d_gs_mhz", 3466.0}}}};
    ASSERT_EQ(run("fit", config("f.json", fit)), 0) << log();
    const Json rep = Json::parse(slurp(dir / "out" / "fit.json"));
    EXPECT_NEAR(rep["fit"]["params"]["a15_mhz"]["value"].get<double>(), 64.0, 2.0);
    EXPECT_TRUE(rep["fit"]["converged"].get<bool>());
    EXPECT_NEAR(rep["derived"]["field_mt"].get<double>(), (3466.0 - 2310.0) / 28.0, 0.1);
}

TEST_F(CliTest, FreeFitReportsPolarizationAndField) {
    Json sim = make_simulate("out", 1.0);
    sim["simulate"]["model"]["populations"] = {{"3", {{"-3/2", 0.09}, {"-1/2", 0.21}, {"1/2", 0.33}, {"3/2", 0.37}}}};
    sim["simulate"]["model"]["contrast"] = 0.08;
    sim["simulate"]["noise_sigma"] = 0.0005;
    ASSERT_EQ(run("simulate", config("s.json", sim)), 0) << log();
    const Json fit = {{"schema_version", "1"},
                      {"output_dir", "out"},
                      {"fit",
                       {{"input", "out/spectrum.csv"},
                        {"mode", "free"},
                        {"n_lines", 4},
                        {"polarization", true},
                        {"d_gs_mhz", 3466.0}}}};
    ASSERT_EQ(run("fit", config("f.json", fit)), 0) << log();
    const Json rep = Json::parse(slurp(dir / "out" / "fit.json"));
    ASSERT_TRUE(rep["derived"].contains("polarization"));
    ASSERT_TRUE(rep["derived"].contains("field_mt"));
    // areas deg * w = (0.09, 0.63, 0.99, 0.37)
    const double p = (-1.5 * 0.09 - 0.5 * 0.63 + 0.5 * 0.99 + 1.5 * 0.37) / (1.5 * 2.08);
    EXPECT_NEAR(rep["derived"]["polarization"].get<double>(), p, 0.03);
    EXPECT_EQ(rep["fit"]["lines"].size(), 4u);
}

TEST_F(CliTest, NonConvergenceWritesPartialReport) {
    ASSERT_EQ(run("simulate", config("s.json", make_simulate("out"))), 0) << log();
    const Json fit = {{"schema_version", "1"},
                      {"output_dir", "out"},
                      {"fit", {{"input", "out/spectrum.csv"}, {"p15", "free"}, {"max_iterations", 1}}}};
    EXPECT_EQ(run("fit", config("f.json", fit)), 3) << log();
    const Json rep = Json::parse(slurp(dir / "out" / "fit.json"));
    EXPECT_FALSE(rep["fit"]["converged"].get<bool>());
    EXPECT_EQ(rep["fit"]["iterations"].get<int>(), 1);
}

TEST_F(CliTest, ValidateDefaultPasses) {
    const Json j = {{"schema_version", "1"}, {"output_dir", "out"}, {"validate", {{"draws", 20}}}};
    EXPECT_EQ(run("validate", config("v.json", j)), 0) << log();
    const Json rep = Json::parse(slurp(dir / "out" / "validate.json"));
    EXPECT_TRUE(rep.dump().find("\"passed\":false") == std::string::npos);
}

TEST_F(CliTest, ValidateCatchesWrongLadder) {
    const Json j = {{"schema_version", "1"},
                    {"output_dir", "out"},
                    {"validate", {{"draws", 20}, {"inject_wrong_ladder", true}}}};
    EXPECT_EQ(run("validate", config("v.json", j)), 1);
    const Json rep = Json::parse(slurp(dir / "out" / "validate.json"));
    bool ladder_failed = false;
    for (const auto& g : rep["groups"])
        if (g["name"] == "ladder") ladder_failed = !g["passed"].get<bool>();
    EXPECT_TRUE(ladder_failed) << rep.dump();
}

TEST_F(CliTest, ValidateTightToleranceReportsMeasuredValue) {
    const Json j = {{"schema_version", "1"},
                    {"output_dir", "out"},
                    {"validate", {{"draws", 20}, {"tolerances", {{"eigensolver", 1e-15}}}}}};
    EXPECT_EQ(run("validate", config("v.json", j)), 1);
    const Json rep = Json::parse(slurp(dir / "out" / "validate.json"));
    bool seen = false;
    for (const auto& g : rep["groups"])
        if (g["name"] == "eigensolver") {
            seen = true;
            EXPECT_FALSE(g["passed"].get<bool>());
            EXPECT_GT(g["measured"].get<double>(), 1e-15);
            EXPECT_LT(g["measured"].get<double>(), 1e-9);
        }
    EXPECT_TRUE(seen);
}

TEST_F(CliTest, PolarizationAndRamanVerbs) {
    const Json p = {{"schema_version", "1"},
                    {"output_dir", "out"},
                    {"polarization", {{"areas", {{"-3/2", 1.0}, {"-1/2", 3.0}, {"1/2", 3.8}, {"3/2", 1.6}}}}}};
    ASSERT_EQ(run("polarization", config("p.json", p)), 0) << log();
    EXPECT_NEAR(Json::parse(slurp(dir / "out" / "polarization.json"))["polarization"].get<double>(), 1.3 / 14.1,
                1e-12);
    const Json r = {{"schema_version", "1"}, {"output_dir", "out"}, {"isotopes", {{"p15", 0.6}}}};
    ASSERT_EQ(run("raman", config("r.json", r)), 0) << log();
    EXPECT_NE(slurp(dir / "out" / "raman.json").find("1352.6"), std::string::npos);
}

TEST_F(CliTest, BadCommandLine) {
    EXPECT_EQ(run("frobnicate", config("x.json", make_simulate("out"))), 1);
}
