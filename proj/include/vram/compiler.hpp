#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "vram/circuit.hpp"
#include "vram/common.hpp"
#include "vram/crypto.hpp"
#include "vram/isa.hpp"

namespace vram::compiler {

using crypto::Stamp;

enum class Kind : std::uint8_t { I = 0, B = 1, T = 2, Halt = 3 };
std::string_view kind_name(Kind k);

/// Branch index of a circuit label: none, upper (condition true) or lower.
enum class Branch : std::int8_t { None = -1, Upper = 0, Lower = 1 };
inline int index_of(Branch b) { return static_cast<int>(b); }

/// Position of a circuit element: VRAM time, type, branch index and an
/// ordinal separating elements that share the other three.
struct CircuitLabel {
  std::uint64_t t = 0;
  Kind kind = Kind::I;
  Branch branch = Branch::None;
  std::uint32_t ordinal = 0;

  friend bool operator==(const CircuitLabel&, const CircuitLabel&) = default;
};

/// Pick priority at equal time: I and B before T, HALT last.
inline int kind_rank(Kind k) {
  switch (k) {
    case Kind::I:
    case Kind::B: return 0;
    case Kind::T: return 1;
    case Kind::Halt: return 2;
  }
  return 3;
}

/// Where the evaluator may look for the elements of one child of a B
/// element: times [first, last] on that child's branch index. `merges` says
/// whether the child rejoins the unbranched program at the region's merge
/// time once its window is exhausted.
struct ChildWindow {
  bool empty = true;
  std::uint64_t first = 0;
  std::uint64_t last = 0;
  bool merges = false;
  friend bool operator==(const ChildWindow&, const ChildWindow&) = default;
};

/// Decrypted contents of a circuit element.
struct ElementBody {
  Kind kind = Kind::I;
  isa::Opcode op = isa::Opcode::Halt;  // I elements: instruction sub-type
  std::uint32_t address = 0;           // T elements: translated word
  circuit::Gadget gadget;              // empty for HALT markers
  std::array<ChildWindow, 2> children; // B elements only
  std::optional<std::uint64_t> merge_t;  // B elements: region merge time

  Bytes serialize() const;
  static ElementBody deserialize(ByteView b);
};

/// A labelled element. `body` holds the serialized ElementBody, sealed under
/// the branch key when the label carries a branch index.
struct CircuitElement {
  CircuitLabel label;
  Bytes body;
  bool encrypted() const { return label.branch != Branch::None; }
};

/// Public scheme parameters carried in every program header.
struct Params {
  unsigned key_bits = 128;
  isa::MemoryLayout layout;
  std::uint64_t max_cost = 256;
  unsigned word_width() const { return layout.word_width; }
  void validate() const;
  friend bool operator==(const Params&, const Params&) = default;
};

struct KeyMaterial {
  crypto::Seed s_k{};
  crypto::Seed s_br{};
  Params params;

  static KeyMaterial fresh(const Params& p, crypto::Drbg& rng);
};

struct VramProgram {
  Params params;
  std::uint64_t t_start = 0;
  std::uint64_t tau = 0;
  std::vector<CircuitElement> elements;

  Bytes serialize() const;
  static VramProgram deserialize(ByteView b);
};

/// Compile-time bookkeeping threaded across chained programs.
struct CompilerState {
  std::uint64_t t = 0;
  std::uint64_t t_start = 0;
  std::uint64_t tau_prev = 0;
  std::vector<Stamp> t_w;  // last-write stamp per word address

  friend bool operator==(const CompilerState&, const CompilerState&) = default;
};

/// Prepares state for a new program. With tau_prev == 0 everything starts at
/// time zero; otherwise time and the D write-times carry over from `prev`,
/// the final state of the program that ended at tau_prev.
CompilerState a_init(std::uint64_t tau_prev, const isa::MemoryLayout& layout, const CompilerState* prev = nullptr);

struct RegionInfo {
  std::uint64_t t_split = 0;
  std::optional<std::uint64_t> t_merge;
  std::uint32_t split_pc = 0;
};

struct CompileOptions {
  bool verify_gates = false;            // open every garbled row at build time
  std::optional<std::uint64_t> fixed_tau;  // predetermined terminal time
};

struct CompileResult {
  VramProgram program;
  std::uint64_t t_start = 0;
  std::uint64_t tau = 0;
  CompilerState final_state;
  std::vector<RegionInfo> regions;
  std::size_t halt_sites = 0;
  std::size_t truncated_paths = 0;
};

/// Builds the VRAM program for `prog`: follows every execution path up to
/// MAX_cost, emits I/B/T elements and HALT markers, and fixes tau.
CompileResult a_prog(const isa::RamProgram& prog, std::uint64_t tau_prev, const KeyMaterial& km, crypto::Drbg& rng,
                     const CompilerState* prev = nullptr, const CompileOptions& opts = {});

// Individual gadget constructors. Input and output keys are derived from the
// stamps given; callers supply the compile-time schedule.

/// Keys of one word: per bit, the key pair (value 0, value 1).
std::vector<std::array<crypto::Key, 2>> word_keys(const KeyMaterial& km, isa::Address a, Stamp s);

circuit::Gadget build_i(isa::Instruction inst, const KeyMaterial& km, Stamp acc_in, Stamp operand_in, Stamp out,
                        crypto::Drbg& rng, bool verify = false);
circuit::Gadget build_b(isa::Opcode op, const KeyMaterial& km, Stamp acc_in, std::uint64_t t, crypto::Drbg& rng,
                        bool verify = false);
circuit::Gadget build_t(isa::Address a, Stamp from, Stamp to, const KeyMaterial& km, crypto::Drbg& rng,
                        bool verify = false);

/// Payload emitted by a B gadget: branch key followed by the branch index.
Bytes branch_payload(const crypto::Key& k, unsigned br);

struct Path {
  std::vector<std::uint32_t> pcs;        // every instruction visited, in order
  std::vector<bool> decisions;           // per conditional: true = jump taken
  bool halted = false;                   // false: truncated at MAX_cost
};

/// Depth-first enumeration of control-flow paths, each cut at HALT or when
/// MAX_cost instructions have been visited.
std::vector<Path> enumerate_paths(const isa::RamProgram& prog, std::uint64_t max_cost);

/// Program point where the two successors of the conditional at `pc`
/// reconverge (smallest index reachable from both), if any.
std::optional<std::uint32_t> merge_point(const isa::RamProgram& prog, std::uint32_t pc);

}  // namespace vram::compiler
