// Copyright 2026 The qrep Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "qrep/cli.hpp"
#include "qrep/container.hpp"

namespace qrep {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code;
  std::string out, err;
};

CliRun run(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = cli_main(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<char> bytes_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("qrep_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // gen → calibrate → reparam → quantize inside `sub`.
  void chain(const std::string& sub) {
    fs::create_directories(dir_ / sub);
    auto p = [&](const char* f) { return path(sub + "/" + f); };
    ASSERT_EQ(run({"gen", "--out", p("fp.rvq"), "--calib-out", p("calib.rvq"), "--eval-out", p("eval.rvq")}).code, 0);
    ASSERT_EQ(run({"calibrate", "--model", p("fp.rvq"), "--data", p("calib.rvq"), "--out", p("cal.rvq")}).code, 0);
    CliRun r = run({"reparam", "--model", p("cal.rvq"), "--data", p("calib.rvq"), "--out", p("rep.rvq")});
    ASSERT_EQ(r.code, 0) << r.err;
    reparam_out_ = r.out;
    ASSERT_EQ(run({"quantize", "--model", p("rep.rvq"), "--out", p("q.rvq")}).code, 0);
  }

  fs::path dir_;
  std::string reparam_out_;
};

TEST_F(CliTest, InspectPrintsTensorTable) {
  ASSERT_EQ(run({"gen", "--out", path("m.rvq")}).code, 0);
  CliRun r = run({"inspect", path("m.rvq")});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("block0.w_qkv"), std::string::npos);
  EXPECT_NE(r.out.find("kind: model"), std::string::npos);
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"bogus"}).code, kExitUsage);
  EXPECT_EQ(run({"gen"}).code, kExitUsage);
  EXPECT_EQ(run({"calibrate", "--model", "a", "--data", "b", "--out", "c", "--bits-w", "1"}).code, kExitUsage);
}

TEST_F(CliTest, DataErrorsExitOne) {
  CliRun r = run({"inspect", path("missing.rvq")});
  EXPECT_EQ(r.code, kExitDataError);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
  std::ofstream(path("junk.rvq")) << "not a container";
  EXPECT_EQ(run({"inspect", path("junk.rvq")}).code, kExitDataError);
}

TEST_F(CliTest, EvalWithMismatchedConfigsNamesTheMismatch) {
  std::ofstream(path("small.json")) << R"({"model": {"dim": 32, "head_dim": 8, "mlp_dim": 128}})";
  ASSERT_EQ(run({"gen", "--config", path("small.json"), "--out", path("small.rvq")}).code, 0);
  chain("big");
  CliRun r = run({"eval", "--fp", path("small.rvq"), "--model", path("big/q.rvq"), "--data", path("big/eval.rvq")});
  EXPECT_EQ(r.code, kExitDataError);
  EXPECT_NE(r.err.find("config mismatch"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("dim 32 vs 64"), std::string::npos) << r.err;
}

TEST_F(CliTest, FullChainReportsExactCodeEquality) {
  chain("a");
  EXPECT_NE(reparam_out_.find("block0.ln1_out code-equality 1\n"), std::string::npos) << reparam_out_;
  CliRun r = run({"eval", "--fp", path("a/fp.rvq"), "--model", path("a/q.rvq"), "--data", path("a/eval.rvq"), "--calib",
               path("a/calib.rvq"), "--out", path("a/report.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  nlohmann::json report = nlohmann::json::parse(r.out);
  ASSERT_EQ(report["code_equality"].size(), 4u);
  for (const auto& [key, rate] : report["code_equality"].items()) EXPECT_EQ(rate.get<double>(), 1.0) << key;
  EXPECT_TRUE(report.contains("ablation_layernorm"));
  EXPECT_TRUE(fs::exists(path("a/report.json")));

  CliRun insp = run({"inspect", path("a/q.rvq")});
  EXPECT_NE(insp.out.find("stage: quantized"), std::string::npos);
  EXPECT_NE(insp.out.find("compensate_weights"), std::string::npos);
  EXPECT_NE(insp.out.find("base_changed"), std::string::npos);
}

TEST_F(CliTest, IdenticalRunsWriteIdenticalBytes) {
  chain("one");
  chain("two");
  for (const char* f : {"fp.rvq", "calib.rvq", "eval.rvq", "cal.rvq", "rep.rvq", "q.rvq"}) {
    EXPECT_EQ(bytes_of(path(std::string("one/") + f)), bytes_of(path(std::string("two/") + f))) << f;
  }
}

TEST_F(CliTest, ReadWriteReadIsStable) {
  chain("rt");
  Container c = read_container(path("rt/q.rvq"));
  write_container(path("rt/copy.rvq"), c);
  EXPECT_EQ(bytes_of(path("rt/copy.rvq")), bytes_of(path("rt/q.rvq")));
  EXPECT_EQ(read_container(path("rt/copy.rvq")), c);
}

TEST_F(CliTest, SeedChangesModel) {
  ASSERT_EQ(run({"gen", "--out", path("s0.rvq")}).code, 0);
  ASSERT_EQ(run({"gen", "--seed", "5", "--out", path("s5.rvq")}).code, 0);
  EXPECT_NE(bytes_of(path("s0.rvq")), bytes_of(path("s5.rvq")));
}

}  // namespace
}  // namespace qrep
