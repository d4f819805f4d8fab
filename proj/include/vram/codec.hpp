#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "vram/compiler.hpp"
#include "vram/crypto.hpp"
#include "vram/isa.hpp"

namespace vram::codec {

using crypto::Key;
using crypto::Stamp;
using isa::Address;
using isa::Region;
using isa::Word;

/// Keys for a contiguous range of words, W keys per word, least significant
/// bit first. An absent key is an empty slot.
struct EncodedRegion {
  Region region = Region::X;
  Address begin = 0;
  std::uint32_t count = 0;
  unsigned word_width = 8;
  unsigned key_bits = 128;
  std::vector<std::optional<Key>> keys;

  const std::optional<Key>& at(Address a, unsigned bit) const { return keys[(a - begin) * word_width + bit]; }
  bool complete() const;

  // Header (magic, region id, begin, count, W, K) then K/8 bytes per bit.
  // Empty slots are written as zero bytes and read back as empty.
  Bytes serialize() const;
  static EncodedRegion deserialize(ByteView b);
};

/// Key storage for the whole memory M_v, one slot per bit.
class EncodedMemory {
 public:
  EncodedMemory(const isa::MemoryLayout& layout, unsigned key_bits);

  const std::optional<Key>& get(Address a, unsigned bit) const;
  void set(Address a, unsigned bit, Key k);
  void clear(Address a, unsigned bit);

  /// Copies an encoded region in; its layout parameters must match.
  void load(const EncodedRegion& r);
  EncodedRegion extract(Region region) const;

  const isa::MemoryLayout& layout() const { return layout_; }
  unsigned key_bits() const { return key_bits_; }

 private:
  std::size_t slot(Address a, unsigned bit) const;

  isa::MemoryLayout layout_;
  unsigned key_bits_;
  std::vector<std::optional<Key>> slots_;
};

/// A_INPUT: the key for bit b of every X word at time t_start.
EncodedRegion a_input(const std::vector<Word>& x, const crypto::Seed& s_k, std::uint64_t t_start,
                      const isa::MemoryLayout& layout, unsigned key_bits);

/// Encodes `words` into `region` using per-word stamps; `stamps` empty means
/// init_at(0) everywhere (a fresh region).
EncodedRegion encode_region(const std::vector<Word>& words, Region region, const crypto::Seed& s_k,
                            const std::vector<Stamp>& stamps, const isa::MemoryLayout& layout, unsigned key_bits);

/// Stamps of the words of `region` taken from a full-memory map.
std::vector<Stamp> region_stamps(const std::vector<Stamp>& t_w, Region region, const isa::MemoryLayout& layout);

struct Location {
  Address address = 0;
  unsigned bit = 0;
  friend bool operator==(const Location&, const Location&) = default;
};

struct Verdict {
  bool accepted = false;
  std::vector<Word> y;                 // valid only when accepted
  std::optional<Location> offending;   // first mismatching bit when rejected
};

/// A_VERIFY: every Y key must equal the key for 0 or for 1 at arrival time
/// tau. Always performs 2*|Y|*W PRF evaluations.
Verdict a_verify(const EncodedRegion& y_v, const crypto::Seed& s_k, std::uint64_t tau,
                 const isa::MemoryLayout& layout, unsigned key_bits);

/// Trusted debugging aid: decodes any region given the seed and stamps.
/// Throws FormatError when a key matches neither candidate.
std::vector<Word> decode_region(const EncodedRegion& r, const crypto::Seed& s_k, const std::vector<Stamp>& stamps);

}  // namespace vram::codec
