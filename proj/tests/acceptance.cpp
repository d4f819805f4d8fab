// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "helpers.hpp"
#include "vram/executor.hpp"
#include "vram/generator.hpp"
#include "vram/protocol.hpp"

using namespace vram;
using compiler::Branch;
using compiler::CircuitLabel;
using compiler::Kind;
using executor::Tamper;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Everything needed to evaluate one compiled program repeatedly.
struct Prepared {
  compiler::KeyMaterial km;
  compiler::CompileResult cr;
  codec::EncodedRegion x_v, d_v, y0_v;
  std::vector<isa::Word> expected;
};

Prepared prepare(const isa::RamProgram& prog, const std::vector<isa::Word>& x, std::uint64_t max_cost,
                 crypto::Drbg& rng) {
  Prepared p;
  compiler::Params params;
  params.max_cost = max_cost;
  p.km = compiler::KeyMaterial::fresh(params, rng);
  p.cr = compiler::a_prog(prog, 0, p.km, rng);
  const auto& L = params.layout;
  const auto t0 = p.cr.t_start;
  p.x_v = codec::a_input(x, p.km.s_k, t0, L, params.key_bits);
  p.d_v = codec::encode_region(prog.initial_d(), isa::Region::D, p.km.s_k, {}, L, params.key_bits);
  p.y0_v = codec::encode_region(std::vector<isa::Word>(L.y_size, 0), isa::Region::Y, p.km.s_k,
                                std::vector<crypto::Stamp>(L.y_size, crypto::init_at(t0)), L, params.key_bits);
  p.expected = isa::interpret(prog, x, prog.initial_d(), max_cost).y;
  return p;
}

std::pair<executor::ExecResult, codec::Verdict> evaluate(const Prepared& p, const executor::ExecOptions& o = {}) {
  auto r = executor::a_exec(p.cr.program, p.x_v, p.d_v, p.y0_v, o);
  auto v = codec::a_verify(r.y_v, p.km.s_k, p.cr.tau, p.km.params.layout, p.km.params.key_bits);
  return {std::move(r), std::move(v)};
}

// Decrypted body of the element with label `l`, trying every branch key.
compiler::ElementBody open_body(const Prepared& p, const CircuitLabel& l) {
  for (auto& e : p.cr.program.elements) {
    if (!(e.label == l)) continue;
    if (!e.encrypted()) return compiler::ElementBody::deserialize(e.body);
    for (auto& b : p.cr.program.elements)
      if (b.label.kind == Kind::B && b.label.t < l.t)
        if (auto plain = crypto::open(crypto::prf_branch(p.km.s_br, b.label.t, compiler::index_of(l.branch), 128), e.body))
          return compiler::ElementBody::deserialize(*plain);
  }
  throw Error("element not found or not decryptable");
}

// 1. Differential agreement with the reference interpreter.
Outcome differential() {
  auto rng = crypto::Drbg::from_u64(1001);
  gen::GenConfig cfg;
  int mismatches = 0, loops = 0, branches = 0;
  const int n = 500;
  for (int i = 0; i < n; ++i) {
    auto g = gen::generate(rng, cfg);
    auto x = gen::random_inputs(rng, g, cfg);
    compiler::Params params;
    params.max_cost = g.max_cost;
    auto run = protocol::run_local(g.program, x, params, rng.next_u64());
    auto oracle = isa::interpret(g.program, x, g.program.initial_d(), g.max_cost);
    if (!run.verdict.accepted || run.verdict.y != oracle.y) ++mismatches;
    loops += g.loops > 0;
    branches += g.branchings > 0;
  }
  return {mismatches == 0,
          fmt("%d programs (%d with loops, %d with branching), %d mismatches", n, loops, branches, mismatches)};
}

// 2. Circuit structure of the worked example.
Outcome worked_example() {
  auto rng = crypto::Drbg::from_u64(1002);
  auto prog = testing_support::data_program("branch_example.asm");
  auto p = prepare(prog, {5, 3, 0, 0}, 64, rng);
  std::vector<CircuitLabel> expected = {
      {0, Kind::I, Branch::None, 0},  {1, Kind::I, Branch::None, 0},  {2, Kind::I, Branch::None, 0},
      {3, Kind::I, Branch::None, 0},  {4, Kind::B, Branch::None, 0},  {5, Kind::T, Branch::Upper, 0},
      {5, Kind::T, Branch::Upper, 1}, {5, Kind::I, Branch::Lower, 0}, {6, Kind::I, Branch::Lower, 0},
      {7, Kind::I, Branch::Lower, 0}, {8, Kind::I, Branch::None, 0},  {9, Kind::I, Branch::None, 0},
      {10, Kind::T, Branch::None, 0}, {10, Kind::T, Branch::None, 1}, {10, Kind::Halt, Branch::None, 0}};
  bool labels_ok = p.cr.program.elements.size() == expected.size();
  for (std::size_t i = 0; labels_ok && i < expected.size(); ++i) labels_ok = p.cr.program.elements[i].label == expected[i];
  const auto& reg = p.cr.regions;
  bool times_ok = reg.size() == 1 && reg[0].t_split == 4 && reg[0].t_merge == std::optional<std::uint64_t>(8);
  auto [r1, v1] = evaluate(p);
  auto q = prepare(prog, {5, 0, 0, 0}, 64, rng);
  auto [r2, v2] = evaluate(q);
  bool results_ok = v1.accepted && v1.y[0] == 6 && v2.accepted && v2.y[0] == 5;
  return {labels_ok && times_ok && results_ok,
          fmt("%zu elements, split t=%llu, merge t=%llu, tau=%llu, results %llu/%llu", p.cr.program.elements.size(),
              (unsigned long long)(reg.empty() ? 0 : reg[0].t_split),
              (unsigned long long)(reg.empty() || !reg[0].t_merge ? 0 : *reg[0].t_merge),
              (unsigned long long)p.cr.tau, (unsigned long long)(v1.accepted ? v1.y[0] : 0),
              (unsigned long long)(v2.accepted ? v2.y[0] : 0))};
}

// 3. Skipping a long branch that writes three locations costs three words of
// translation.
Outcome untaken_branch_overhead() {
  std::string src = ".input c\n.input a\n.output o\n.data one = 1\nLOAD c\nJMPZ Skip\n";
  int body = 0;
  auto emit = [&](const std::string& line) {
    src += line + "\n";
    ++body;
  };
  while (body + 6 <= 96) {
    emit("LOAD p");
    emit("ADD one");
    emit("STORE p");
    emit("LOAD q");
    emit("ADD a");
    emit("STORE q");
  }
  emit("LOAD p");
  emit("ADD one");
  emit("STORE p");
  emit("LOAD q");
  src += "Skip:\nLOAD a\nSTORE o\nHALT\n";
  auto prog = isa::parse_asm(src);
  auto rng = crypto::Drbg::from_u64(1003);
  auto p = prepare(prog, {0, 9, 0, 0}, 256, rng);
  auto [r, v] = evaluate(p);
  const unsigned W = p.km.params.layout.word_width;
  std::uint64_t branch_t = 0, halt_t = 0, branch_i = 0;
  for (auto& rec : r.report.log) {
    if (rec.kind == Kind::T) (rec.branch == Branch::None ? halt_t : branch_t) += 1;
    if (rec.kind == Kind::I && rec.branch != Branch::None) ++branch_i;
  }
  const auto overhead = r.report.t_bit_evaluations - halt_t * W;
  bool ok = v.accepted && v.y[0] == 9 && body == 100 && branch_i == 0 && overhead == 3ull * W && branch_t == 3;
  return {ok, fmt("body of %d instructions skipped; %llu branch T elements, %llu t-bit evaluations (3*W = %u)", body,
                  (unsigned long long)branch_t, (unsigned long long)overhead, 3 * W)};
}

// 4. Cost follows the iterations actually run.
Outcome loop_cost_scales() {
  const char* src =
      ".input n\n.input step\n.output total\n.data one = 1\n"
      "LOAD n\nSTORE count\n"
      "Loop: LOAD count\nJMPZ Done\nSUB one\nSTORE count\n"
      "LOAD sum\nADD step\nSTORE sum\nLOAD acc\nADD sum\nMUL step\nSTORE acc\nLOAD acc\nSUB one\nSTORE acc\nJMP Loop\n"
      "Done: LOAD sum\nSTORE total\nHALT\n";
  auto prog = isa::parse_asm(src);
  auto rng = crypto::Drbg::from_u64(1004);
  std::uint64_t cost[11] = {};
  bool ok = true;
  for (unsigned k : {2u, 10u}) {
    auto p = prepare(prog, {k, 3, 0, 0}, 7 + 15 * 10, rng);
    auto [r, v] = evaluate(p);
    ok = ok && v.accepted && v.y[0] == 3 * k;
    cost[k] = r.report.total();
  }
  ok = ok && 3 * cost[2] < cost[10];
  return {ok, fmt("elements evaluated: k=2 %llu, k=10 %llu (ratio %.3f, bound 1/3)", (unsigned long long)cost[2],
                  (unsigned long long)cost[10], double(cost[2]) / double(cost[10]))};
}

// 5. Tampering never yields a wrong accepted output.
Outcome tamper_soundness() {
  auto rng = crypto::Drbg::from_u64(1005);
  gen::GenConfig cfg;
  std::uint64_t trials = 0, wrong_accepts = 0, caught = 0, harmless = 0;
  std::uint64_t wb_trials = 0, wb_decrypt_fail = 0, wb_empty_window = 0;
  std::uint64_t per_mode[4] = {};
  for (int prog_i = 0; prog_i < 100; ++prog_i) {
    auto g = gen::generate(rng, cfg);
    auto x = gen::random_inputs(rng, g, cfg);
    auto p = prepare(g.program, x, g.max_cost, rng);
    auto [honest, hv] = evaluate(p);
    if (!hv.accepted || hv.y != p.expected) return {false, "honest execution failed on a generated program"};
    const auto evaluated = honest.report.total();
    std::vector<const executor::LogRecord*> bs;
    for (auto& rec : honest.report.log)
      if (rec.kind == Kind::B) bs.push_back(&rec);

    for (int k = 0; k < 100; ++k) {
      executor::ExecOptions o;
      int mode = k % 3;
      if (mode == 2 && bs.empty()) mode = k % 2;
      o.tamper = mode == 0 ? Tamper::FlipOutput : mode == 1 ? Tamper::SkipElement : Tamper::WrongBranch;
      o.target = rng.uniform(mode == 2 ? bs.size() : evaluated);
      o.flip_bit = static_cast<unsigned>(rng.uniform(p.km.params.key_bits));
      auto [r, v] = evaluate(p, o);
      ++trials;
      ++per_mode[mode];
      if (v.accepted && v.y != p.expected) ++wrong_accepts;
      (v.accepted ? harmless : caught) += 1;
      if (mode == 2) {
        const auto& b = *bs[o.target];
        auto body = open_body(p, {b.t, b.kind, b.branch, b.ordinal});
        if (body.children[1 - b.taken].empty) {
          ++wb_empty_window;
        } else {
          ++wb_trials;
          wb_decrypt_fail += r.outcome == executor::Outcome::DecryptFailed;
        }
      }
    }
  }

  // Stale replay: answer a later computation of a chain with an earlier Y_v.
  gen::GenConfig small;
  small.max_instructions = 16;
  // Loop bounds may live in D, which a chain carries over, so keep these loop-free.
  small.allow_loops = false;
  for (int i = 0; i < 60; ++i) {
    crypto::Drbg crng = crypto::Drbg::from_u64(5000 + i);
    protocol::Constructor ctor(crng);
    protocol::Outsourcer out;
    protocol::Evaluator ev;
    auto g1 = gen::generate(rng, small), g2 = gen::generate(rng, small);
    compiler::Params params;
    params.max_cost = std::max(g1.max_cost, g2.max_cost);
    ctor.start_chain(params);
    std::vector<isa::Word> d = g1.program.initial_d(), expected;
    for (int step = 0; step < 2; ++step) {
      const auto& g = step == 0 ? g1 : g2;
      auto x = gen::random_inputs(rng, g, small);
      // Later programs of a chain run on the D left by earlier ones.
      auto oracle = isa::interpret(g.program, x, d, params.max_cost);
      d = oracle.d;
      expected = oracle.y;
      auto prep = ctor.prepare(g.program);
      out.receive(prep.to_outsourcer);
      ev.receive(prep.to_evaluator);
      protocol::EvaluatorFaults f;
      f.replay_previous_result = step == 1;
      protocol::Verification v;
      out.conclude(ev.execute(out.input(prep.computation, x), f), v);
      if (step == 0 && !v.accepted) return {false, "honest first computation of a chain was rejected"};
      if (step == 1) {
        ++trials;
        ++per_mode[3];
        if (v.accepted && v.y != expected) ++wrong_accepts;
        (v.accepted ? harmless : caught) += 1;
      }
    }
  }

  bool ok = trials >= 10000 && wrong_accepts == 0 && wb_trials > 0 && wb_decrypt_fail == wb_trials;
  return {ok, fmt("%llu trials (flip %llu, skip %llu, wrong-branch %llu, stale replay %llu): %llu wrong accepts, "
                  "%llu rejected, %llu harmless; wrong branch decrypt failure %llu/%llu (%llu with empty wrong window)",
                  (unsigned long long)trials, (unsigned long long)per_mode[0], (unsigned long long)per_mode[1],
                  (unsigned long long)per_mode[2], (unsigned long long)per_mode[3], (unsigned long long)wrong_accepts,
                  (unsigned long long)caught, (unsigned long long)harmless, (unsigned long long)wb_decrypt_fail,
                  (unsigned long long)wb_trials, (unsigned long long)wb_empty_window)};
}

// 6. Outsourcer PRF work does not depend on the program.
Outcome outsourcer_work() {
  auto make = [](int adds) {
    std::string s = ".input a\n.output o\nLOAD a\n";
    for (int i = 0; i < adds; ++i) s += "ADD a\n";
    return isa::parse_asm(s + "STORE o\nHALT\n");
  };
  isa::MemoryLayout L;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> calls;
  std::vector<std::uint64_t> lengths;
  bool ok = true;
  for (int adds : {4, 70}) {
    auto prog = make(adds);
    auto rng = crypto::Drbg::from_u64(1006 + adds);
    protocol::Constructor ctor(rng);
    protocol::Outsourcer out;
    protocol::Evaluator ev;
    ctor.start_chain(compiler::Params{});
    auto prep = ctor.prepare(prog);
    out.receive(prep.to_outsourcer);
    ev.receive(prep.to_evaluator);
    protocol::Verification v;
    out.conclude(ev.execute(out.input(prep.computation, {1, 0, 0, 0})), v);
    ok = ok && v.accepted && v.y[0] == static_cast<isa::Word>(adds + 1);
    calls.push_back({v.prf_input, v.prf_verify});
    lengths.push_back(isa::interpret(prog, {1, 0, 0, 0}, prog.initial_d(), 1000).trace.instruction_count);
  }
  const unsigned in_bound = L.x_size * L.word_width;
  const unsigned long long verify_bound = 2ull * L.y_size * L.word_width;
  ok = ok && lengths[1] >= 10 * lengths[0] && calls[0] == calls[1] && calls[0].first == in_bound &&
       calls[0].second <= verify_bound;
  return {ok, fmt("programs of %llu and %llu steps: input %llu/%llu PRF calls (|X|*W = %u), verify %llu/%llu "
                  "(2*|Y|*W = %llu)",
                  (unsigned long long)lengths[0], (unsigned long long)lengths[1], (unsigned long long)calls[0].first,
                  (unsigned long long)calls[1].first, in_bound, (unsigned long long)calls[0].second,
                  (unsigned long long)calls[1].second, (unsigned long long)verify_bound)};
}

// 7. A chained program reads the data its predecessor left in D.
Outcome chaining() {
  auto rng = crypto::Drbg::from_u64(1007);
  protocol::Constructor ctor(rng);
  protocol::Outsourcer out;
  protocol::Evaluator ev;
  ctor.start_chain(compiler::Params{});
  auto first_prog = isa::parse_asm(".input a\n.output o\nLOAD a\nMUL a\nSTORE saved\nSTORE o\nHALT\n");
  auto second_prog = isa::parse_asm(".input b\n.output o\nLOAD saved\nADD b\nSTORE o\nHALT\n");
  protocol::Verification v1, v2;
  auto p1 = ctor.prepare(first_prog);
  out.receive(p1.to_outsourcer);
  ev.receive(p1.to_evaluator);
  out.conclude(ev.execute(out.input(p1.computation, {7, 0, 0, 0})), v1);
  auto p2 = ctor.prepare(second_prog);
  out.receive(p2.to_outsourcer);
  ev.receive(p2.to_evaluator);
  out.conclude(ev.execute(out.input(p2.computation, {5, 0, 0, 0})), v2);
  bool resent = protocol::EvaluatorPrep::decode(p2.to_evaluator.payload).d_v.has_value();
  bool ok = v1.accepted && v2.accepted && v1.y[0] == 49 && v2.y[0] == 54 && p2.compiled.t_start == p1.compiled.tau &&
            !resent;
  return {ok, fmt("first result %llu, second result %llu (expected 49, 54), second starts at t=%llu = first tau, "
                  "D_v resent: %s",
                  (unsigned long long)(v1.accepted ? v1.y[0] : 0), (unsigned long long)(v2.accepted ? v2.y[0] : 0),
                  (unsigned long long)p2.compiled.t_start, resent ? "yes" : "no")};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"differential agreement on random programs", differential},
      {"worked example circuit structure", worked_example},
      {"untaken branch overhead", untaken_branch_overhead},
      {"loop cost follows iterations run", loop_cost_scales},
      {"tamper soundness", tamper_soundness},
      {"outsourcer work independent of program", outsourcer_work},
      {"chained programs share D", chaining},
  };
  int failed = 0, n = 0;
  for (auto& [name, fn] : criteria) {
    ++n;
    auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << " (" << name << "): " << o.detail
              << fmt(" [%.1fs]", secs) << std::endl;
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
