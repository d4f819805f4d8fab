#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "helpers.hpp"

namespace fs = std::filesystem;
using testing_support::data_path;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("vramc_test_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string p(const std::string& name) const { return (dir_ / name).string(); }

  // Runs vramc with stdout captured to a file; returns the exit status.
  int vramc(const std::string& args) {
    auto cmd = std::string(VRAMC_PATH) + " " + args + " > " + p("stdout.txt") + " 2> " + p("stderr.txt");
    int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  }
  std::string out() const {
    std::ifstream f(p("stdout.txt"));
    std::stringstream s;
    s << f.rdbuf();
    return s.str();
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, RunPrintsTheVerifiedOutput) {
  EXPECT_EQ(vramc("run " + data_path("branch_example.asm") + " --x 5,3,0,0"), 0);
  EXPECT_NE(out().find("6"), std::string::npos);
}

TEST_F(Cli, StepwisePipeline) {
  const auto prog = data_path("branch_example.asm");
  ASSERT_EQ(vramc("--seed 3 compile " + prog + " -o " + p("l.vramprog") + " --keys " + p("l.keys")), 0);
  ASSERT_EQ(vramc("encode --keys " + p("l.keys") + " --region x --values 5,0,0,0 -o " + p("x.xv")), 0);
  ASSERT_EQ(vramc("encode --keys " + p("l.keys") + " --region d --program " + prog + " -o " + p("d.dv")), 0);
  ASSERT_EQ(vramc("encode --keys " + p("l.keys") + " --region y -o " + p("y0.yv")), 0);
  ASSERT_EQ(vramc("execute " + p("l.vramprog") + " --x " + p("x.xv") + " --d " + p("d.dv") + " --y0 " + p("y0.yv") +
                  " -o " + p("y.yv") + " --report " + p("report.jsonl")),
            0);
  EXPECT_TRUE(fs::file_size(p("report.jsonl")) > 0);
  ASSERT_EQ(vramc("verify " + p("y.yv") + " --keys " + p("l.keys")), 0);
  EXPECT_NE(out().find("5"), std::string::npos);

  // A tampered evaluation is rejected by verify (exit 4) or fails on the spot (exit 3).
  int rc = vramc("--tamper flip-output --tamper-target 8 execute " + p("l.vramprog") + " --x " + p("x.xv") +
                 " --d " + p("d.dv") + " --y0 " + p("y0.yv") + " -o " + p("bad.yv"));
  if (rc == 0) EXPECT_EQ(vramc("verify " + p("bad.yv") + " --keys " + p("l.keys")), 4);
  else EXPECT_EQ(rc, 3);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(vramc("--help"), 0);
  EXPECT_EQ(vramc("frobnicate"), 1);
  EXPECT_EQ(vramc("--key-bits 100 run " + data_path("branch_example.asm")), 1);
  {
    std::ofstream f(p("bad.asm"));
    f << "LOAD\n";
  }
  EXPECT_EQ(vramc("run " + p("bad.asm")), 2);
  EXPECT_EQ(vramc("--max-cost 5 run " + data_path("branch_example.asm") + " --x 5,3,0,0"), 2);
  // With a simulated cheater the outsourcer's verdict decides the exit code.
  EXPECT_EQ(vramc("--tamper wrong-branch run " + data_path("branch_example.asm") + " --x 5,3,0,0"), 4);
  EXPECT_EQ(vramc("--max-cost 31 run " + data_path("while_loop.asm") + " --x 5,2,0,0"), 3);
  EXPECT_EQ(vramc("--tamper flip-output --tamper-target 9 run " + data_path("branch_example.asm") + " --x 5,3,0,0"), 4);
  EXPECT_EQ(vramc("run " + p("missing.asm")), 5);
  {
    std::ofstream f(p("junk.yv"));
    f << "junk";
  }
  EXPECT_EQ(vramc("--seed 1 compile " + data_path("branch_example.asm") + " -o " + p("a.vramprog") + " --keys " +
                  p("a.keys")),
            0);
  EXPECT_EQ(vramc("verify " + p("junk.yv") + " --keys " + p("a.keys")), 5);
}

TEST_F(Cli, ProtocolOverBothTransports) {
  for (std::string t : {"inproc", "socket"}) {
    EXPECT_EQ(vramc("protocol " + data_path("branch_example.asm") + " " + data_path("branch_example.asm") +
                    " --x 5,3,0,0 --x 5,0,0,0 --transport " + t),
              0)
        << t;
    EXPECT_NE(out().find("6"), std::string::npos);
  }
}

TEST_F(Cli, Difftest) {
  EXPECT_EQ(vramc("--seed 2 difftest --trials 10 --tamper-trials 2"), 0);
}

TEST_F(Cli, AssembleWritesJson) {
  ASSERT_EQ(vramc("assemble " + data_path("else_if_return.asm") + " -o " + p("e.json")), 0);
  ASSERT_EQ(vramc("run " + p("e.json") + " --x 0,1,4,0"), 0);
  EXPECT_NE(out().find("8"), std::string::npos);
}
