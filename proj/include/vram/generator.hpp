#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vram/crypto.hpp"
#include "vram/isa.hpp"

namespace vram::gen {

struct GenConfig {
  unsigned max_instructions = 40;
  unsigned max_branchings = 2;   // if, if-else and while constructs, never nested
  unsigned max_loop_iterations = 8;
  bool allow_loops = true;
  isa::MemoryLayout layout;
};

struct Generated {
  std::string source;
  isa::RamProgram program;
  std::uint64_t max_cost = 0;  // covers every path for every admissible input
  std::vector<bool> loop_bound_input;  // per X word: value must stay <= max_loop_iterations
  unsigned loops = 0;
  unsigned branchings = 0;
};

/// A random well-formed program: straight-line arithmetic blocks and
/// sequential if, if-else and counted while constructs. Loop counters start
/// from an input or a constant no larger than max_loop_iterations.
Generated generate(crypto::Drbg& rng, const GenConfig& cfg = {});

/// Inputs admissible for `g`: loop-bound inputs in [0, max_loop_iterations],
/// all others uniform over W-bit words.
std::vector<isa::Word> random_inputs(crypto::Drbg& rng, const Generated& g, const GenConfig& cfg = {});

}  // namespace vram::gen
