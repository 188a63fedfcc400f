#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rmtlab/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "rmtlab");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = rmtlab::cli::parse_and_dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("rmtlab_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    void write(const std::string& name, const std::string& text) const { std::ofstream(dir_ / name) << text; }

    fs::path dir_;
};

nlohmann::json manifest_of(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "manifest.json");
    return nlohmann::json::parse(in);
}

const char* kTinyModel = R"({"model":{"enc_layers":1,"dec_layers":1,"dim":16,"heads":2,"ffn_mult":2},
 "train":{"lr_max":1e-3,"batch":8,"warmup_steps":2,"cosine_period":1000}})";

}  // namespace

TEST_F(CliTest, UsageErrorsExitTwo) {
    EXPECT_EQ(run({}).code, 2);
    EXPECT_EQ(run({"frobnicate"}).code, 2);
    EXPECT_EQ(run({"stats", "--kind", "semicircle", "--n", "5", "--count", "10", "--seed", "1", "--bogus"}).code, 2);
    EXPECT_EQ(run({"stats", "--kind", "nope", "--n", "5", "--count", "10", "--seed", "1"}).code, 2);
    EXPECT_EQ(run({"stats", "--kind", "semicircle", "--n", "5", "--count", "10"}).code, 2);
    EXPECT_EQ(run({"stats", "--kind", "semicircle", "--n", "5", "--count", "10", "--seed", "1", "--cond",
                   "--positive-fraction"})
                  .code,
              2);
    EXPECT_EQ(run({"eval", "--data", path("missing"), "--checkpoint", path("missing.ckpt")}).code, 2);
    EXPECT_EQ(run({"train", "--checkpoint", path("c"), "--max-steps", "1", "--seed", "1"}).code, 2);
    EXPECT_EQ(run({"gen", "--task", "eigenvalues", "--kind", "semicircle", "--n", "17", "--count", "1", "--seed",
                   "1", "--out", path("d")})
                  .code,
              2);
}

TEST_F(CliTest, HelpExitsZero) {
    const auto r = run({"--help"});
    EXPECT_EQ(r.code, 0);
    EXPECT_EQ(run({"gen", "--help"}).code, 0);
}

TEST_F(CliTest, IncompatibleTaskKindIsDomainError) {
    const auto r = run({"gen", "--task", "eigenvalues", "--kind", "wigner_uniform_general", "--n", "3", "--count",
                        "5", "--seed", "1", "--out", path("d")});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("error:"), std::string::npos);
}

TEST_F(CliTest, GenTwiceSameHash) {
    const std::vector<std::string> base{"gen",  "--task", "eigenvalues", "--kind",  "semicircle", "--n",
                                        "2",    "--count", "1000",       "--seed", "1",          "--out"};
    auto a = base, b = base;
    a.push_back(path("a"));
    b.push_back(path("b"));
    b.insert(b.end(), {"--workers", "4"});
    ASSERT_EQ(run(a).code, 0);
    ASSERT_EQ(run(b).code, 0);
    EXPECT_EQ(manifest_of(path("a")).at("sha256"), manifest_of(path("b")).at("sha256"));
    EXPECT_EQ(manifest_of(path("a")).at("count"), 1000);
}

TEST_F(CliTest, DecodeHandWrittenLine) {
    const auto r = run({"decode", "V2 F+100E-2 F0E0 F0E0 F+100E-2 | F+100E-2 F+100E-2"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("matrix (n=2):\n  1 0\n  0 1\n"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("eigenvalues: 1 1\n"), std::string::npos) << r.out;
}

TEST_F(CliTest, DecodeErrorsAreDomainErrors) {
    const auto r = run({"decode", "V2 F+100E-2 F0E0 F0E0 | F+100E-2"});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("decode error at token"), std::string::npos);
}

TEST_F(CliTest, EncodeDecodeRoundTrip) {
    const auto e = run({"encode", "--n", "2", "--task", "eigenvalues", "--", "2", "1", "1", "2"});
    ASSERT_EQ(e.code, 0) << e.err;
    const auto line = e.out.substr(e.out.rfind('\n', e.out.size() - 2) + 1);
    EXPECT_EQ(line, "V2 + M200 E-2 + M100 E-2 + M100 E-2 + M200 E-2 | + M300 E-2 + M100 E-2\n");
    const auto d = run({"decode", line.substr(0, line.size() - 1)});
    ASSERT_EQ(d.code, 0) << d.err;
    EXPECT_NE(d.out.find("eigenvalues: 3 1"), std::string::npos);
}

TEST_F(CliTest, StatsCondAndPositiveFraction) {
    auto r = run({"stats", "--kind", "marchenko_pastur", "--n", "5", "--count", "2000", "--seed", "1", "--cond",
                  "--format", "csv"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("kind,median,q3,p90\nmarchenko_pastur,"), std::string::npos) << r.out;
    r = run({"stats", "--kind", "abs_laplace", "--n", "4", "--count", "10000", "--seed", "1", "--positive-fraction",
             "--format", "csv"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("abs_laplace,4,10000,1,0.0625"), std::string::npos) << r.out;
    EXPECT_EQ(r.out.rfind("# run ", 0), 0u);
}

TEST_F(CliTest, TrainEvalVerifyPipeline) {
    ASSERT_EQ(run({"gen", "--task", "diagonalization", "--kind", "semicircle", "--n", "2", "--count", "40", "--seed",
                   "3", "--out", path("d")})
                  .code,
              0);
    write("cfg.json", kTinyModel);
    auto t = run({"train", "--data", path("d"), "--config", path("cfg.json"), "--checkpoint", path("m.ckpt"),
                  "--max-steps", "3", "--seed", "1", "--log", path("log.csv")});
    ASSERT_EQ(t.code, 0) << t.err;
    EXPECT_NE(t.out.find("\"steps\":3"), std::string::npos) << t.out;
    EXPECT_TRUE(fs::exists(path("log.csv")));

    auto e = run({"eval", "--data", path("d"), "--checkpoint", path("m.ckpt"), "--csv", path("e.csv")});
    ASSERT_EQ(e.code, 0) << e.err;
    EXPECT_NE(e.out.find("records: 40"), std::string::npos) << e.out;
    auto v = run({"verify", "--eval-csv", path("e.csv"), "--task", "diagonalization"});
    ASSERT_EQ(v.code, 0) << v.err;
    EXPECT_NE(v.out.find("verifier rule: cond < 1.045"), std::string::npos) << v.out;
    EXPECT_EQ(run({"verify", "--eval-csv", path("e.csv"), "--task", "inversion"}).code, 1);

    ASSERT_EQ(run({"gen", "--task", "diagonalization", "--kind", "semicircle", "--n", "3", "--count", "5", "--seed",
                   "3", "--out", path("d3")})
                  .code,
              0);
    EXPECT_EQ(run({"eval", "--data", path("d3"), "--checkpoint", path("m.ckpt")}).code, 1);
}

TEST_F(CliTest, TrainStreamingFromSpec) {
    write("spec.json", R"({"task":"eigenvalues","ensemble":{"kind":"laplace","n":2,"seed":4},
        "input_scheme":"P1000","target_scheme":"P1000","count":0})");
    write("cfg.json", kTinyModel);
    const auto t = run({"train", "--spec", path("spec.json"), "--config", path("cfg.json"), "--checkpoint",
                        path("m.ckpt"), "--max-steps", "2", "--seed", "1"});
    ASSERT_EQ(t.code, 0) << t.err;
    EXPECT_NE(t.out.find("\"samples\":16"), std::string::npos) << t.out;
}

TEST_F(CliTest, GridWritesReports) {
    nlohmann::json cfg = nlohmann::json::parse(kTinyModel);
    cfg["task"] = "eigenvalues";
    cfg["n"] = 2;
    cfg["seed"] = 9;
    cfg["test_count"] = 100;
    cfg["train_kinds"] = {"semicircle"};
    cfg["test_kinds"] = {"semicircle", "abs_laplace"};
    cfg["samples_per_cell"] = 32;
    write("grid.json", cfg.dump());
    const auto a = run({"grid", "--config", path("grid.json"), "--report", path("r.md"), "--csv", path("r.csv"),
                        "--manifest", path("m.json")});
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_TRUE(fs::exists(path("r.md")));
    EXPECT_TRUE(fs::exists(path("r.csv")));
    std::ifstream mf(path("m.json"));
    const auto manifest = nlohmann::json::parse(mf);
    EXPECT_TRUE(manifest.contains("derived_seeds"));
    const auto b = run({"grid", "--config", path("grid.json"), "--report", path("r2.md"), "--workers", "2"});
    ASSERT_EQ(b.code, 0) << b.err;
    const auto hash = [](const std::string& s) { return s.substr(s.find("report_sha256")); };
    EXPECT_EQ(hash(a.out), hash(b.out));
}
