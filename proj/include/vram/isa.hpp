#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vram/common.hpp"

namespace vram::isa {

enum class Opcode : std::uint8_t { Load, Store, Add, Sub, Mul, Div, Jmp, Jmpz, Jmpn, Halt };

std::string_view opcode_name(Opcode op);
std::optional<Opcode> opcode_from_name(std::string_view name);

inline bool is_memory_op(Opcode op) {
  return op == Opcode::Load || op == Opcode::Store || op == Opcode::Add || op == Opcode::Sub ||
         op == Opcode::Mul || op == Opcode::Div;
}
inline bool is_conditional(Opcode op) { return op == Opcode::Jmpz || op == Opcode::Jmpn; }
inline bool is_jump(Opcode op) { return op == Opcode::Jmp || is_conditional(op); }

using Address = std::uint32_t;
using Word = std::uint64_t;

/// One machine instruction. `operand` is a memory address for memory ops and
/// an instruction index for jumps; HALT ignores it.
struct Instruction {
  Opcode op = Opcode::Halt;
  std::uint32_t operand = 0;

  friend bool operator==(const Instruction&, const Instruction&) = default;
};

enum class Region : std::uint8_t { R, X, Y, D };
std::string_view region_name(Region r);

/// M = R || X || Y || D, laid out contiguously from address 0. The
/// accumulator r is the first word of R.
struct MemoryLayout {
  unsigned word_width = 8;
  std::uint32_t r_size = 1;
  std::uint32_t x_size = 4;
  std::uint32_t y_size = 2;
  std::uint32_t d_size = 25;

  Address accumulator() const { return 0; }
  Address begin(Region r) const;
  std::uint32_t size(Region r) const;
  Address end(Region r) const { return begin(r) + size(r); }
  std::uint32_t total() const { return r_size + x_size + y_size + d_size; }
  Region region_of(Address a) const;  // throws for out-of-range addresses
  bool contains(Address a) const { return a < total(); }
  Word mask() const { return word_width >= 64 ? ~Word{0} : (Word{1} << word_width) - 1; }

  void validate() const;
  friend bool operator==(const MemoryLayout&, const MemoryLayout&) = default;
};

struct RamProgram {
  std::vector<Instruction> instructions;
  std::map<std::string, std::uint32_t> labels;   // label -> instruction index
  std::map<std::string, Address> symbols;        // symbol -> memory address
  std::map<Address, Word> data;                  // initial D contents from `.data`
  MemoryLayout layout;

  /// Initial D image: `.data` values, zero elsewhere.
  std::vector<Word> initial_d() const;
  std::string symbol_at(Address a) const;  // best-effort name for diagnostics
};

/// Assembles `source`. Undeclared symbols become zero-initialised D words in
/// order of first use.
RamProgram parse_asm(std::string_view source, const MemoryLayout& layout = {});

std::string to_json(const RamProgram& prog);
RamProgram program_from_json(std::string_view json);

enum class Access : std::uint8_t { Read, Write };

struct AccessRecord {
  Address address;
  Access kind;
  Word value;
  friend bool operator==(const AccessRecord&, const AccessRecord&) = default;
};

struct TraceStep {
  std::uint32_t pc;
  std::vector<AccessRecord> accesses;
  friend bool operator==(const TraceStep&, const TraceStep&) = default;
};

struct ExecutionTrace {
  std::vector<TraceStep> steps;
  std::uint64_t instruction_count = 0;
  friend bool operator==(const ExecutionTrace&, const ExecutionTrace&) = default;
};

struct InterpretResult {
  std::vector<Word> y;
  std::vector<Word> d;
  ExecutionTrace trace;
};

/// Reference execution in the clear. Arithmetic is unsigned modulo 2^W;
/// DIV by zero yields 2^W - 1; JMPN tests the most significant bit.
InterpretResult interpret(const RamProgram& prog, const std::vector<Word>& x_init,
                          const std::vector<Word>& d_init, std::uint64_t max_steps);

struct TraceCost {
  std::uint64_t instructions = 0;
  std::uint64_t writes = 0;
  friend bool operator==(const TraceCost&, const TraceCost&) = default;
};

TraceCost trace_cost(const ExecutionTrace& trace);

/// Pure ALU used by the interpreter (and as the oracle for garbled gadgets).
Word alu(Opcode op, Word acc, Word operand, unsigned width);

}  // namespace vram::isa
