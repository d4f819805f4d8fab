#pragma once

#include <string>

#include "vram/common.hpp"
#include "vram/isa.hpp"

namespace testing_support {

inline std::string data_path(const std::string& name) { return std::string(VRAM_TEST_DATA) + "/" + name; }

inline std::string data_text(const std::string& name) {
  auto b = vram::read_file(data_path(name));
  return std::string(b.begin(), b.end());
}

inline vram::isa::RamProgram data_program(const std::string& name, const vram::isa::MemoryLayout& layout = {}) {
  return vram::isa::parse_asm(data_text(name), layout);
}

inline vram::Bytes from_hex(const std::string& h) {
  vram::Bytes b;
  for (std::size_t i = 0; i + 1 < h.size(); i += 2) b.push_back(static_cast<std::uint8_t>(std::stoul(h.substr(i, 2), nullptr, 16)));
  return b;
}

}  // namespace testing_support
