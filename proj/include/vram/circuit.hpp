#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "vram/common.hpp"
#include "vram/crypto.hpp"

namespace vram::circuit {

constexpr std::uint32_t kNoWire = 0xffffffffu;

/// Memory position of one wire: word address and bit index within the word.
struct WireLabel {
  std::uint32_t address = 0;
  std::uint32_t bit = 0;
  friend bool operator==(const WireLabel&, const WireLabel&) = default;
  friend auto operator<=>(const WireLabel&, const WireLabel&) = default;
};

/// Output wires of I and T gadgets write memory; the single output wire of a
/// B gadget carries (branch key || branch index) instead.
enum class OutputRole : std::uint8_t { Memory = 0, Branch = 1 };

struct OutputWire {
  std::uint32_t wire = 0;
  OutputRole role = OutputRole::Memory;
  WireLabel target;
  friend bool operator==(const OutputWire&, const OutputWire&) = default;
};

struct Gate {
  std::uint32_t in0 = kNoWire;
  std::uint32_t in1 = kNoWire;  // kNoWire for one-input gates
  std::uint32_t out = kNoWire;
  crypto::Ett ett;
  friend bool operator==(const Gate&, const Gate&) = default;
};

/// A garbled gadget. Wires [0, inputs.size()) are the input wires; gates are
/// stored in evaluation order.
struct Gadget {
  std::vector<WireLabel> inputs;
  std::uint32_t wire_count = 0;
  std::vector<Gate> gates;
  std::vector<OutputWire> outputs;

  void serialize(ByteWriter& w) const;
  static Gadget deserialize(ByteReader& r);
  friend bool operator==(const Gadget&, const Gadget&) = default;
};

/// Evaluates the gadget on one label per input wire. Returns one label per
/// output wire, or nullopt when some gate has no row that authenticates.
std::optional<std::vector<Bytes>> evaluate(const Gadget& g, std::span<const Bytes> input_labels,
                                           std::uint64_t* gates_evaluated = nullptr);

/// Either a compile-time constant or a wire of the gadget under construction.
struct Signal {
  enum class Kind : std::uint8_t { Const, Wire } kind = Kind::Const;
  bool value = false;
  std::uint32_t wire = kNoWire;

  static Signal constant(bool v) { return {Kind::Const, v, kNoWire}; }
  static Signal of(std::uint32_t w) { return {Kind::Wire, false, w}; }
  bool is_const() const { return kind == Kind::Const; }
};

using Word = std::vector<Signal>;  // least significant bit first

/// Truth table of a two-input gate indexed by (a << 1) | b.
using Table2 = std::array<bool, 4>;
/// Truth table of a one-input gate indexed by a.
using Table1 = std::array<bool, 2>;

inline constexpr Table2 kXor{false, true, true, false};
inline constexpr Table2 kAnd{false, false, false, true};
inline constexpr Table2 kOr{false, true, true, true};
inline constexpr Table1 kIdentity{false, true};
inline constexpr Table1 kNot{true, false};

/// Builds a gadget over symbolic signals, folding constants as it goes. Gate
/// tables are kept in the clear until `finish`, which garbles every gate
/// with the final wire labels.
class Builder {
 public:
  Builder(unsigned key_bits, crypto::Drbg& rng) : key_bits_(key_bits), rng_(rng) {}

  /// Input wire for a memory bit with its two keys. Requesting the same
  /// memory bit twice returns the same wire.
  Signal input(WireLabel where, const crypto::Key& k0, const crypto::Key& k1);

  Signal gate(const Table1& t, Signal a);
  Signal gate(const Table2& t, Signal a, Signal b);

  Signal xor_(Signal a, Signal b) { return gate(kXor, a, b); }
  Signal and_(Signal a, Signal b) { return gate(kAnd, a, b); }
  Signal or_(Signal a, Signal b) { return gate(kOr, a, b); }
  Signal not_(Signal a) { return gate(kNot, a); }

  /// Makes `s` an output wire that emits `label0` / `label1` for value 0 / 1.
  void output(Signal s, OutputRole role, WireLabel target, Bytes label0, Bytes label1);

  std::size_t gate_count() const { return gates_.size(); }

  /// Garbles every gate. With `verify_rows`, each gate is additionally
  /// opened under every input combination to confirm that exactly one row
  /// authenticates (throws otherwise).
  Gadget finish(bool verify_rows = false);

 private:
  struct PendingGate {
    std::uint32_t in0, in1, out;
    Table2 table;  // one-input gates use entries 0 and 2 (b ignored)
  };

  std::uint32_t fresh_wire();
  std::uint32_t emit(std::uint32_t in0, std::uint32_t in1, const Table2& t);
  std::uint32_t emit1(std::uint32_t in0, const Table1& t);

  unsigned key_bits_;
  crypto::Drbg& rng_;
  std::vector<WireLabel> inputs_;
  std::map<WireLabel, std::uint32_t> input_index_;
  std::vector<std::array<Bytes, 2>> labels_;
  std::vector<bool> bound_;
  std::vector<PendingGate> gates_;
  std::vector<OutputWire> outputs_;
};

// Word-level arithmetic, all modulo 2^width.
Word add(Builder& b, const Word& x, const Word& y);
Word sub(Builder& b, const Word& x, const Word& y);
Word mul(Builder& b, const Word& x, const Word& y);
Word divu(Builder& b, const Word& x, const Word& y);
/// OR-reduction tree: 1 iff any bit is set.
Signal any_set(Builder& b, const Word& x);

}  // namespace vram::circuit
