#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "vram/codec.hpp"
#include "vram/compiler.hpp"

namespace vram::executor {

using compiler::Branch;
using compiler::CircuitLabel;
using compiler::Kind;

/// Ways a dishonest evaluator can deviate; used by the tamper suites.
enum class Tamper : std::uint8_t {
  None,
  FlipOutput,   // flip one bit of one output key of the n-th evaluated element
  SkipElement,  // drop the n-th picked element without evaluating it
  WrongBranch,  // after the n-th B element, follow the other branch index
};

struct ExecOptions {
  Tamper tamper = Tamper::None;
  std::uint64_t target = 0;  // n for the tamper modes above
  unsigned flip_bit = 0;     // bit flipped by FlipOutput (taken modulo K)
};

struct ExecState {
  int br = -1;
  crypto::Key k_br;
  bool halt = false;
  std::uint64_t cursor = 0;  // unbranched elements before this time are spent
  compiler::ChildWindow window;
  std::optional<std::uint64_t> merge_t;
  std::vector<bool> processed;
};

enum class Outcome : std::uint8_t {
  Halted,          // reached a HALT marker
  Bottom,          // ran out of eligible elements without halting
  DecryptFailed,   // an on-branch element did not authenticate under k_br
  GateFailed,      // a garbled table had no opening row, or a key was missing
};
std::string_view outcome_name(Outcome o);

struct LogRecord {
  std::uint64_t t;
  Kind kind;
  Branch branch;
  std::uint32_t ordinal;
  isa::Opcode op;        // I and B elements: instruction sub-type
  std::uint32_t address; // I: instruction operand; T: translated word
  int taken = -1;         // B: branch index followed
};

struct Report {
  std::uint64_t evaluated[4] = {0, 0, 0, 0};  // by Kind
  std::uint64_t t_bit_evaluations = 0;        // single-bit gates inside T elements
  std::uint64_t gates_evaluated = 0;
  std::uint64_t skipped = 0;                  // elements never processed
  std::vector<LogRecord> log;

  std::uint64_t count(Kind k) const { return evaluated[static_cast<int>(k)]; }
  std::uint64_t total() const { return evaluated[0] + evaluated[1] + evaluated[2] + evaluated[3]; }
};

struct ExecResult {
  Outcome outcome = Outcome::Bottom;
  std::string detail;
  codec::EncodedRegion y_v;
  codec::EncodedRegion d_v;
  Report report;
  bool ok() const { return outcome == Outcome::Halted; }
};

/// Indices of `pv.elements` in pick order: (t, kind rank, ordinal, branch).
std::vector<std::size_t> pick_order(const compiler::VramProgram& pv);

/// Next eligible unprocessed element, or nullopt when none remains.
std::optional<std::size_t> pick_next(const compiler::VramProgram& pv, const std::vector<std::size_t>& order,
                                     const ExecState& st);

/// A_EXEC over X_v, D_v and the initial Y_v.
ExecResult a_exec(const compiler::VramProgram& pv, const codec::EncodedRegion& x_v, const codec::EncodedRegion& d_v,
                  const codec::EncodedRegion& y0_v, const ExecOptions& opts = {});

/// Machine-readable cost report: one line per evaluated element, then totals.
std::string exec_report(const Report& r, std::optional<std::uint64_t> oracle_instructions = std::nullopt);

}  // namespace vram::executor
