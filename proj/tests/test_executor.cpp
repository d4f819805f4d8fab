#include <gtest/gtest.h>

#include <algorithm>

#include "helpers.hpp"
#include "vram/executor.hpp"
#include "vram/generator.hpp"
#include "vram/protocol.hpp"

using namespace vram;
using namespace vram::executor;
using compiler::Params;
using protocol::run_local;
using testing_support::data_program;

namespace {

CircuitLabel label_of(const LogRecord& r) { return {r.t, r.kind, r.branch, r.ordinal}; }

std::vector<CircuitLabel> labels(const Report& rep) {
  std::vector<CircuitLabel> out;
  for (auto& r : rep.log) out.push_back(label_of(r));
  return out;
}

Params with_cost(std::uint64_t c) {
  Params p;
  p.max_cost = c;
  return p;
}

}  // namespace

TEST(PickOrder, SortsByTimeRankOrdinalBranch) {
  auto run = run_local(data_program("branch_example.asm"), {5, 3, 0, 0}, {}, 1);
  const auto& pv = run.compiled.program;
  auto order = pick_order(pv);
  ASSERT_EQ(order.size(), pv.elements.size());
  for (std::size_t i = 1; i < order.size(); ++i) {
    const auto& a = pv.elements[order[i - 1]].label;
    const auto& b = pv.elements[order[i]].label;
    auto key = [](const CircuitLabel& l) {
      return std::make_tuple(l.t, compiler::kind_rank(l.kind), l.ordinal, compiler::index_of(l.branch));
    };
    EXPECT_LT(key(a), key(b));
  }
}

TEST(PickNext, FollowsStateWindow) {
  auto run = run_local(data_program("branch_example.asm"), {5, 3, 0, 0}, {}, 1);
  const auto& pv = run.compiled.program;
  auto order = pick_order(pv);
  ExecState st;
  st.processed.assign(pv.elements.size(), false);
  auto first = pick_next(pv, order, st);
  ASSERT_TRUE(first);
  EXPECT_EQ(pv.elements[*first].label, (CircuitLabel{0, Kind::I, Branch::None, 0}));

  // On the lower branch inside [5, 7], the next pick is the lower I at 5.
  for (std::size_t i = 0; i < pv.elements.size(); ++i)
    if (pv.elements[i].label.t <= 4) st.processed[i] = true;
  st.br = 1;
  st.cursor = 5;
  st.window = {false, 5, 7, true};
  st.merge_t = 8;
  auto next = pick_next(pv, order, st);
  ASSERT_TRUE(next);
  EXPECT_EQ(pv.elements[*next].label, (CircuitLabel{5, Kind::I, Branch::Lower, 0}));

  std::fill(st.processed.begin(), st.processed.end(), true);
  EXPECT_FALSE(pick_next(pv, order, st));
}

// z != 0: the lower branch runs the increment, result 6.
TEST(Exec, BranchExampleConditionTrue) {
  auto run = run_local(data_program("branch_example.asm"), {5, 3, 0, 0}, {}, 1);
  ASSERT_TRUE(run.exec.ok()) << run.exec.detail;
  ASSERT_TRUE(run.verdict.accepted);
  EXPECT_EQ(run.verdict.y[0], 6u);
  std::vector<CircuitLabel> expected = {
      {0, Kind::I, Branch::None, 0}, {1, Kind::I, Branch::None, 0},  {2, Kind::I, Branch::None, 0},
      {3, Kind::I, Branch::None, 0}, {4, Kind::B, Branch::None, 0},  {5, Kind::I, Branch::Lower, 0},
      {6, Kind::I, Branch::Lower, 0}, {7, Kind::I, Branch::Lower, 0}, {8, Kind::I, Branch::None, 0},
      {9, Kind::I, Branch::None, 0}, {10, Kind::T, Branch::None, 0}, {10, Kind::T, Branch::None, 1},
      {10, Kind::Halt, Branch::None, 0}};
  EXPECT_EQ(labels(run.exec.report), expected);
  EXPECT_EQ(run.exec.report.skipped, 2u);  // the untaken branch's T elements
  EXPECT_EQ(run.exec.report.log[4].taken, 1);
}

// z == 0: the jump is taken and only the two translations run on the branch.
TEST(Exec, BranchExampleConditionFalse) {
  auto run = run_local(data_program("branch_example.asm"), {5, 0, 0, 0}, {}, 1);
  ASSERT_TRUE(run.verdict.accepted);
  EXPECT_EQ(run.verdict.y[0], 5u);
  std::vector<CircuitLabel> expected = {
      {0, Kind::I, Branch::None, 0}, {1, Kind::I, Branch::None, 0},  {2, Kind::I, Branch::None, 0},
      {3, Kind::I, Branch::None, 0}, {4, Kind::B, Branch::None, 0},  {5, Kind::T, Branch::Upper, 0},
      {5, Kind::T, Branch::Upper, 1}, {8, Kind::I, Branch::None, 0}, {9, Kind::I, Branch::None, 0},
      {10, Kind::T, Branch::None, 0}, {10, Kind::T, Branch::None, 1}, {10, Kind::Halt, Branch::None, 0}};
  EXPECT_EQ(labels(run.exec.report), expected);
  EXPECT_EQ(run.exec.report.skipped, 3u);
  EXPECT_EQ(run.exec.report.log[4].taken, 0);
}

TEST(Exec, StraightLineCounts) {
  auto prog = isa::parse_asm(".input a\n.output out\nLOAD a\nADD a\nSTORE out\nHALT\n");
  auto run = run_local(prog, {21, 0, 0, 0}, {}, 2);
  ASSERT_TRUE(run.verdict.accepted);
  EXPECT_EQ(run.verdict.y[0], 42u);
  const auto& rep = run.exec.report;
  EXPECT_EQ(rep.count(Kind::I), 3u);
  EXPECT_EQ(rep.count(Kind::B), 0u);
  EXPECT_EQ(rep.count(Kind::T), 2u);
  EXPECT_EQ(rep.t_bit_evaluations, 2u * 8u);  // |Y| * W
  EXPECT_EQ(rep.skipped, 0u);
}

TEST(Exec, TruncatedPathEndsInBottom) {
  // Budget 31 covers three iterations; five do not fit.
  auto ok = run_local(data_program("while_loop.asm"), {3, 2, 0, 0}, with_cost(31), 3);
  ASSERT_TRUE(ok.verdict.accepted);
  EXPECT_EQ(ok.verdict.y[0], 6u);
  auto cut = run_local(data_program("while_loop.asm"), {5, 2, 0, 0}, with_cost(31), 3);
  EXPECT_EQ(cut.exec.outcome, Outcome::Bottom);
  EXPECT_FALSE(cut.verdict.accepted);
}

// Soundness: a deviation may go unnoticed only when the output is still the
// true one (for example a flipped key on a dead store).
TEST(Tamper, FlippedKeyNeverYieldsWrongAccept) {
  auto prog = data_program("branch_example.asm");
  int rejected = 0;
  for (std::uint64_t target = 0; target < 12; ++target)
    for (unsigned bit : {0u, 77u}) {
      auto run = run_local(prog, {5, 3, 0, 0}, {}, 4, {Tamper::FlipOutput, target, bit});
      if (run.verdict.accepted) EXPECT_EQ(run.verdict.y[0], 6u) << "target " << target;
      else ++rejected;
    }
  // Only the first LOAD, whose result is overwritten unread, can be flipped harmlessly.
  EXPECT_EQ(rejected, 22);
}

TEST(Tamper, SkippedElementNeverYieldsWrongAccept) {
  auto prog = data_program("branch_example.asm");
  int rejected = 0;
  for (std::uint64_t target = 0; target < 13; ++target) {
    auto run = run_local(prog, {5, 3, 0, 0}, {}, 5, {Tamper::SkipElement, target});
    if (run.verdict.accepted) EXPECT_EQ(run.verdict.y[0], 6u) << "target " << target;
    else ++rejected;
  }
  // Skipping the dead first LOAD or the HALT marker leaves Y intact.
  EXPECT_EQ(rejected, 11);
}

TEST(Tamper, WrongBranchFailsToDecrypt) {
  for (isa::Word z : {0u, 3u}) {
    auto run = run_local(data_program("branch_example.asm"), {5, z, 0, 0}, {}, 6, {Tamper::WrongBranch, 0});
    EXPECT_EQ(run.exec.outcome, Outcome::DecryptFailed) << outcome_name(run.exec.outcome);
    EXPECT_FALSE(run.verdict.accepted);
  }
}

TEST(Report, JsonLinesWithSummary) {
  auto run = run_local(data_program("branch_example.asm"), {5, 3, 0, 0}, {}, 1);
  auto text = exec_report(run.exec.report, 10);
  auto lines = std::count(text.begin(), text.end(), '\n');
  EXPECT_EQ(lines, static_cast<long>(run.exec.report.log.size()) + 1);
  EXPECT_NE(text.find("\"kind\":\"B\""), std::string::npos);
  EXPECT_NE(text.find("oracle"), std::string::npos);
}

// The I/B sequence mirrors the memory and conditional instructions the
// reference interpreter executes, and T overhead stays bounded.
TEST(Properties, MimicsTheRamTrace) {
  auto rng = crypto::Drbg::from_u64(99);
  gen::GenConfig cfg;
  for (int i = 0; i < 60; ++i) {
    auto g = gen::generate(rng, cfg);
    auto x = gen::random_inputs(rng, g, cfg);
    auto oracle = isa::interpret(g.program, x, g.program.initial_d(), g.max_cost);
    Params p = with_cost(g.max_cost);
    auto run = run_local(g.program, x, p, rng.next_u64());
    ASSERT_TRUE(run.verdict.accepted) << g.source;
    EXPECT_EQ(run.verdict.y, oracle.y);

    std::vector<std::pair<isa::Opcode, std::uint32_t>> ram, vram_log;
    std::uint64_t conditionals = 0;
    for (auto& step : oracle.trace.steps) {
      auto inst = g.program.instructions[step.pc];
      if (isa::is_memory_op(inst.op)) ram.push_back({inst.op, inst.operand});
      if (isa::is_conditional(inst.op)) {
        ram.push_back({inst.op, 0});
        ++conditionals;
      }
    }
    for (auto& r : run.exec.report.log) {
      if (r.kind == Kind::I) vram_log.push_back({r.op, r.address});
      if (r.kind == Kind::B) vram_log.push_back({r.op, 0});
    }
    EXPECT_EQ(vram_log, ram) << g.source;
    const auto& rep = run.exec.report;
    EXPECT_LE(rep.count(Kind::T), (conditionals + 1) * p.layout.total());
    EXPECT_EQ(rep.count(Kind::Halt), 1u);
  }
}
