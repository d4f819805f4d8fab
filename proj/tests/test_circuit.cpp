#include <gtest/gtest.h>

#include <functional>

#include "vram/circuit.hpp"
#include "vram/isa.hpp"

using namespace vram;
using namespace vram::circuit;
using crypto::Drbg;
using crypto::Key;

namespace {

// A garbled word-level function with its label tables kept for decoding.
struct Harness {
  Gadget g;
  std::vector<std::array<Key, 2>> in_keys;
  std::vector<std::array<Bytes, 2>> out_labels;

  std::optional<isa::Word> run(const std::vector<unsigned>& bits, std::uint64_t* gates = nullptr) const {
    std::vector<Bytes> labels;
    for (std::size_t i = 0; i < bits.size(); ++i) labels.push_back(in_keys[i][bits[i]].bytes());
    auto out = evaluate(g, labels, gates);
    if (!out) return std::nullopt;
    isa::Word v = 0;
    for (std::size_t i = 0; i < out->size(); ++i) {
      if ((*out)[i] == out_labels[i][1]) v |= isa::Word{1} << i;
      else if ((*out)[i] != out_labels[i][0]) return std::nullopt;
    }
    return v;
  }
};

using WordFn = std::function<Word(Builder&, const Word&, const Word&)>;

Harness garble(unsigned w, const WordFn& fn, Drbg& rng, bool same_operand = false) {
  Builder b(128, rng);
  Harness h;
  Word x, y;
  for (unsigned i = 0; i < w; ++i) {
    h.in_keys.push_back({rng.key(128), rng.key(128)});
    x.push_back(b.input({1, i}, h.in_keys.back()[0], h.in_keys.back()[1]));
  }
  if (same_operand) {
    y = x;
  } else {
    for (unsigned i = 0; i < w; ++i) {
      h.in_keys.push_back({rng.key(128), rng.key(128)});
      y.push_back(b.input({2, i}, h.in_keys.back()[0], h.in_keys.back()[1]));
    }
  }
  auto out = fn(b, x, y);
  for (unsigned i = 0; i < out.size(); ++i) {
    h.out_labels.push_back({rng.bytes(16), rng.bytes(16)});
    b.output(out[i], OutputRole::Memory, {0, i}, h.out_labels.back()[0], h.out_labels.back()[1]);
  }
  h.g = b.finish(true);
  return h;
}

std::vector<unsigned> bits_of(isa::Word a, isa::Word b, unsigned w) {
  std::vector<unsigned> v;
  for (unsigned i = 0; i < w; ++i) v.push_back((a >> i) & 1);
  for (unsigned i = 0; i < w; ++i) v.push_back((b >> i) & 1);
  return v;
}

struct OpCase {
  isa::Opcode op;
  WordFn fn;
};

const OpCase kCases[] = {{isa::Opcode::Add, add}, {isa::Opcode::Sub, sub}, {isa::Opcode::Mul, mul}, {isa::Opcode::Div, divu}};

}  // namespace

// Every input combination for W = 1..3, compared with the interpreter's ALU.
TEST(Gadgets, ExhaustiveSmallWidths) {
  auto rng = Drbg::from_u64(1);
  for (const auto& c : kCases)
    for (unsigned w = 1; w <= 3; ++w) {
      auto h = garble(w, c.fn, rng);
      for (isa::Word a = 0; a < (1u << w); ++a)
        for (isa::Word b = 0; b < (1u << w); ++b)
          EXPECT_EQ(h.run(bits_of(a, b, w)), isa::alu(c.op, a, b, w))
              << isa::opcode_name(c.op) << " w=" << w << " a=" << a << " b=" << b;
    }
}

TEST(Gadgets, RandomEightBit) {
  auto rng = Drbg::from_u64(2);
  for (const auto& c : kCases) {
    auto h = garble(8, c.fn, rng);
    for (int i = 0; i < 60; ++i) {
      auto a = rng.uniform(256), b = rng.uniform(256);
      EXPECT_EQ(h.run(bits_of(a, b, 8)), isa::alu(c.op, a, b, 8)) << isa::opcode_name(c.op) << " " << a << " " << b;
    }
  }
}

TEST(Gadgets, SameOperandOnBothSides) {
  auto rng = Drbg::from_u64(3);
  for (const auto& c : kCases) {
    auto h = garble(3, c.fn, rng, true);
    for (isa::Word a = 0; a < 8; ++a) {
      std::vector<unsigned> bits;
      for (unsigned i = 0; i < 3; ++i) bits.push_back((a >> i) & 1);
      EXPECT_EQ(h.run(bits), isa::alu(c.op, a, a, 3));
    }
  }
}

TEST(Gadgets, AnySetIsOrReduction) {
  auto rng = Drbg::from_u64(4);
  for (unsigned w = 1; w <= 5; ++w) {
    auto h = garble(w, [](Builder& b, const Word& x, const Word&) { return Word{any_set(b, x)}; }, rng);
    for (isa::Word a = 0; a < (1u << w); ++a) EXPECT_EQ(h.run(bits_of(a, 0, w)), a != 0 ? 1u : 0u);
  }
}

TEST(Gadgets, WrongKeyFailsClosed) {
  auto rng = Drbg::from_u64(5);
  auto h = garble(4, add, rng);
  std::vector<Bytes> labels;
  for (auto& k : h.in_keys) labels.push_back(k[0].bytes());
  labels[3] = rng.bytes(16);
  EXPECT_FALSE(evaluate(h.g, labels));
  labels.pop_back();
  EXPECT_FALSE(evaluate(h.g, labels));
}

TEST(Builder, ConstantFolding) {
  auto rng = Drbg::from_u64(6);
  Builder b(128, rng);
  auto k0 = rng.key(128), k1 = rng.key(128);
  auto a = b.input({0, 0}, k0, k1);
  EXPECT_EQ(b.input({0, 0}, k0, k1).wire, a.wire);
  EXPECT_TRUE(b.and_(a, Signal::constant(false)).is_const());
  EXPECT_EQ(b.or_(a, Signal::constant(false)).wire, a.wire);
  EXPECT_EQ(b.xor_(a, a).value, false);
  EXPECT_EQ(b.gate_count(), 0u);
  b.not_(a);
  EXPECT_EQ(b.gate_count(), 1u);
  EXPECT_THROW(b.input({0, 1}, k0, k1), Error);
}

// Identity outputs of input wires still get their own one-input gate, so
// each translated bit costs exactly one ETT.
TEST(Builder, PassThroughOutputGetsGate) {
  auto rng = Drbg::from_u64(7);
  Builder b(128, rng);
  auto k0 = rng.key(128), k1 = rng.key(128);
  auto a = b.input({0, 0}, k0, k1);
  b.output(a, OutputRole::Memory, {1, 0}, rng.bytes(16), rng.bytes(16));
  auto g = b.finish(true);
  ASSERT_EQ(g.gates.size(), 1u);
  EXPECT_EQ(g.gates[0].ett.rows.size(), 2u);
  EXPECT_EQ(g.gates[0].in1, kNoWire);
}

TEST(Gadget, SerializeRoundTrip) {
  auto rng = Drbg::from_u64(8);
  auto h = garble(3, mul, rng);
  ByteWriter w;
  h.g.serialize(w);
  auto bytes = w.take();
  ByteReader r(bytes);
  auto g2 = Gadget::deserialize(r);
  EXPECT_TRUE(r.done());
  EXPECT_EQ(g2, h.g);
  ByteReader cut(ByteView(bytes).first(bytes.size() / 2));
  EXPECT_THROW(Gadget::deserialize(cut), FormatError);
}

TEST(Gadget, CountsGatesEvaluated) {
  auto rng = Drbg::from_u64(9);
  auto h = garble(2, add, rng);
  std::uint64_t gates = 0;
  h.run(bits_of(1, 1, 2), &gates);
  EXPECT_EQ(gates, h.g.gates.size());
}
