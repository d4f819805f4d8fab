#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "vram/common.hpp"

namespace vram::crypto {

/// A K-bit key. K is 128 or 256; keys double as AES-GCM keys.
class Key {
 public:
  Key() = default;
  explicit Key(Bytes bits);

  unsigned bits() const { return static_cast<unsigned>(bytes_.size() * 8); }
  const Bytes& bytes() const { return bytes_; }
  bool empty() const { return bytes_.empty(); }

  friend bool operator==(const Key&, const Key&) = default;
  friend auto operator<=>(const Key&, const Key&) = default;

 private:
  Bytes bytes_;
};

bool valid_key_bits(unsigned k);

using Seed = std::array<std::uint8_t, 32>;

/// Deterministic byte stream (HMAC-SHA256 in counter mode). Every source of
/// randomness in compilation and sealing goes through one of these so that
/// outputs are reproducible from a seed.
class Drbg {
 public:
  explicit Drbg(const Seed& seed);
  static Drbg from_u64(std::uint64_t seed);
  static Drbg from_os();

  void fill(std::span<std::uint8_t> out);
  Bytes bytes(std::size_t n);
  Key key(unsigned bits) { return Key(bytes(bits / 8)); }
  Seed seed();
  std::uint64_t next_u64();
  std::uint64_t uniform(std::uint64_t bound);  // in [0, bound)

 private:
  void refill();

  Seed key_;
  std::uint64_t counter_ = 0;
  std::array<std::uint8_t, 32> block_{};
  std::size_t used_ = 32;
};

/// Key time. A memory key is a function of (address bit, time, phase, value).
/// The phase separates keys created for the same VRAM time by different
/// mechanisms: fresh encodings (inputs, initial memory), fast-forward
/// arrivals (merge targets, terminal time) and ordinary instruction writes.
enum class Phase : std::uint8_t { Init = 1, Arrive = 2, Write = 3 };

struct Stamp {
  std::uint64_t t = 0;
  Phase phase = Phase::Init;

  friend bool operator==(const Stamp&, const Stamp&) = default;
  friend auto operator<=>(const Stamp&, const Stamp&) = default;
};

inline Stamp init_at(std::uint64_t t) { return {t, Phase::Init}; }
inline Stamp arrive_at(std::uint64_t t) { return {t, Phase::Arrive}; }
inline Stamp write_at(std::uint64_t t) { return {t, Phase::Write}; }

/// Memory-encoding PRF. `bit_address` identifies one bit of M
/// (word address * W + bit index).
Key prf_mem(const Seed& s_k, std::uint32_t bit_address, Stamp stamp, unsigned b, unsigned key_bits);

/// Branch-key PRF over (VRAM time, branch index).
Key prf_branch(const Seed& s_br, std::uint64_t t, unsigned br, unsigned key_bits);

/// Number of PRF evaluations made by the calling thread since the last reset.
std::uint64_t prf_calls();
void reset_prf_calls();

/// Authenticated encryption. Layout: u32 LE length of the remainder, then
/// 12-byte nonce, body, 16-byte tag.
Bytes seal(const Key& k, ByteView payload, Drbg& rng);
std::optional<Bytes> open(const Key& k, ByteView ciphertext);

/// Encryption under a key derived from both inputs (order-sensitive).
Key derive2(const Key& k1, const Key& k2);
Bytes seal2(const Key& k1, const Key& k2, ByteView payload, Drbg& rng);
std::optional<Bytes> open2(const Key& k1, const Key& k2, ByteView ciphertext);

/// Encrypted truth table of a one- or two-input gate. Rows are shuffled;
/// the evaluator selects the row by trial decryption.
struct Ett {
  std::vector<Bytes> rows;
  friend bool operator==(const Ett&, const Ett&) = default;
};

struct EttRow {
  std::vector<Key> keys;  // one or two input keys
  Bytes payload;
};

Ett ett_build(std::span<const EttRow> rows, Drbg& rng);
std::optional<Bytes> ett_open(const Ett& ett, std::span<const Key> keys);

}  // namespace vram::crypto
