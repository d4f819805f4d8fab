#include "vram/circuit.hpp"

namespace vram::circuit {

namespace {

// !a & b, indexed by (a << 1) | b.
constexpr Table2 kAndNotFirst{false, true, false, false};

std::optional<crypto::Key> as_key(const std::optional<Bytes>& label) {
  if (!label || !crypto::valid_key_bits(static_cast<unsigned>(label->size() * 8))) return std::nullopt;
  return crypto::Key(*label);
}

}  // namespace

void Gadget::serialize(ByteWriter& w) const {
  w.u32(static_cast<std::uint32_t>(inputs.size()));
  for (auto& in : inputs) {
    w.u32(in.address);
    w.u32(in.bit);
  }
  w.u32(wire_count);
  w.u32(static_cast<std::uint32_t>(gates.size()));
  for (auto& g : gates) {
    w.u32(g.in0);
    w.u32(g.in1);
    w.u32(g.out);
    w.u8(static_cast<std::uint8_t>(g.ett.rows.size()));
    for (auto& row : g.ett.rows) {
      w.u32(static_cast<std::uint32_t>(row.size()));
      w.raw(row);
    }
  }
  w.u32(static_cast<std::uint32_t>(outputs.size()));
  for (auto& o : outputs) {
    w.u32(o.wire);
    w.u8(static_cast<std::uint8_t>(o.role));
    w.u32(o.target.address);
    w.u32(o.target.bit);
  }
}

Gadget Gadget::deserialize(ByteReader& r) {
  Gadget g;
  auto n_in = r.u32();
  if (n_in > r.remaining() / 8) throw FormatError("gadget input count out of range");
  for (std::uint32_t i = 0; i < n_in; ++i) {
    WireLabel l;
    l.address = r.u32();
    l.bit = r.u32();
    g.inputs.push_back(l);
  }
  g.wire_count = r.u32();
  if (g.wire_count < n_in) throw FormatError("gadget wire count below input count");
  auto n_gates = r.u32();
  if (n_gates > r.remaining() / 13) throw FormatError("gadget gate count out of range");
  for (std::uint32_t i = 0; i < n_gates; ++i) {
    Gate gate;
    gate.in0 = r.u32();
    gate.in1 = r.u32();
    gate.out = r.u32();
    auto rows = r.u8();
    if (rows == 0 || rows > 4) throw FormatError("gate row count out of range");
    for (std::uint8_t k = 0; k < rows; ++k) {
      auto len = r.u32();
      auto v = r.raw(len);
      gate.ett.rows.emplace_back(v.begin(), v.end());
    }
    if (gate.in0 >= g.wire_count || gate.out >= g.wire_count || (gate.in1 != kNoWire && gate.in1 >= g.wire_count))
      throw FormatError("gate wire index out of range");
    g.gates.push_back(std::move(gate));
  }
  auto n_out = r.u32();
  if (n_out > r.remaining() / 13) throw FormatError("gadget output count out of range");
  for (std::uint32_t i = 0; i < n_out; ++i) {
    OutputWire o;
    o.wire = r.u32();
    auto role = r.u8();
    if (role > 1) throw FormatError("unknown output role");
    o.role = static_cast<OutputRole>(role);
    o.target.address = r.u32();
    o.target.bit = r.u32();
    if (o.wire >= g.wire_count) throw FormatError("output wire out of range");
    g.outputs.push_back(o);
  }
  return g;
}

std::optional<std::vector<Bytes>> evaluate(const Gadget& g, std::span<const Bytes> input_labels,
                                           std::uint64_t* gates_evaluated) {
  if (input_labels.size() != g.inputs.size()) return std::nullopt;
  std::vector<std::optional<Bytes>> labels(g.wire_count);
  for (std::size_t i = 0; i < input_labels.size(); ++i) labels[i] = input_labels[i];

  for (auto& gate : g.gates) {
    auto k0 = as_key(labels[gate.in0]);
    if (!k0) return std::nullopt;
    std::optional<Bytes> out;
    if (gate.in1 == kNoWire) {
      crypto::Key keys[1] = {*k0};
      out = crypto::ett_open(gate.ett, keys);
    } else {
      auto k1 = as_key(labels[gate.in1]);
      if (!k1) return std::nullopt;
      crypto::Key keys[2] = {*k0, *k1};
      out = crypto::ett_open(gate.ett, keys);
    }
    if (!out) return std::nullopt;
    labels[gate.out] = std::move(out);
    if (gates_evaluated) ++*gates_evaluated;
  }

  std::vector<Bytes> result;
  for (auto& o : g.outputs) {
    if (!labels[o.wire]) return std::nullopt;
    result.push_back(*labels[o.wire]);
  }
  return result;
}

Signal Builder::input(WireLabel where, const crypto::Key& k0, const crypto::Key& k1) {
  if (auto it = input_index_.find(where); it != input_index_.end()) return Signal::of(it->second);
  if (!gates_.empty()) throw Error("circuit builder: inputs must be declared before gates");
  auto w = static_cast<std::uint32_t>(labels_.size());
  labels_.push_back({k0.bytes(), k1.bytes()});
  bound_.push_back(false);
  inputs_.push_back(where);
  input_index_[where] = w;
  return Signal::of(w);
}

std::uint32_t Builder::fresh_wire() {
  auto w = static_cast<std::uint32_t>(labels_.size());
  labels_.push_back({rng_.bytes(key_bits_ / 8), rng_.bytes(key_bits_ / 8)});
  bound_.push_back(false);
  return w;
}

std::uint32_t Builder::emit(std::uint32_t in0, std::uint32_t in1, const Table2& t) {
  auto out = fresh_wire();
  gates_.push_back({in0, in1, out, t});
  return out;
}

std::uint32_t Builder::emit1(std::uint32_t in0, const Table1& t) {
  auto out = fresh_wire();
  gates_.push_back({in0, kNoWire, out, Table2{t[0], t[0], t[1], t[1]}});
  return out;
}

Signal Builder::gate(const Table1& t, Signal a) {
  if (a.is_const()) return Signal::constant(t[a.value]);
  if (t == kIdentity) return a;
  if (t[0] == t[1]) return Signal::constant(t[0]);
  return Signal::of(emit1(a.wire, t));
}

Signal Builder::gate(const Table2& t, Signal a, Signal b) {
  if (a.is_const() && b.is_const()) return Signal::constant(t[(a.value << 1) | b.value]);
  if (a.is_const()) return gate(Table1{t[a.value << 1], t[(a.value << 1) | 1]}, b);
  if (b.is_const()) return gate(Table1{t[b.value], t[2 | b.value]}, a);
  if (a.wire == b.wire) return gate(Table1{t[0], t[3]}, a);
  if (t[0] == t[1] && t[2] == t[3]) return gate(Table1{t[0], t[2]}, a);
  if (t[0] == t[2] && t[1] == t[3]) return gate(Table1{t[0], t[1]}, b);
  return Signal::of(emit(a.wire, b.wire, t));
}

void Builder::output(Signal s, OutputRole role, WireLabel target, Bytes label0, Bytes label1) {
  std::uint32_t w;
  if (s.is_const()) {
    if (inputs_.empty()) throw Error("circuit builder: constant output without any input wire");
    w = emit1(0, Table1{s.value, s.value});
  } else if (s.wire < inputs_.size() || bound_[s.wire]) {
    w = emit1(s.wire, kIdentity);
  } else {
    w = s.wire;
  }
  labels_[w] = {std::move(label0), std::move(label1)};
  bound_[w] = true;
  outputs_.push_back({w, role, target});
}

Gadget Builder::finish(bool verify_rows) {
  Gadget g;
  g.inputs = inputs_;
  g.wire_count = static_cast<std::uint32_t>(labels_.size());
  g.outputs = outputs_;
  for (auto& pg : gates_) {
    std::vector<crypto::EttRow> rows;
    if (pg.in1 == kNoWire) {
      for (int a = 0; a < 2; ++a)
        rows.push_back({{crypto::Key(labels_[pg.in0][a])}, labels_[pg.out][pg.table[a << 1]]});
    } else {
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
          rows.push_back({{crypto::Key(labels_[pg.in0][a]), crypto::Key(labels_[pg.in1][b])},
                          labels_[pg.out][pg.table[(a << 1) | b]]});
    }
    auto ett = crypto::ett_build(rows, rng_);
    if (verify_rows) {
      for (auto& row : rows) {
        int opened = 0;
        for (auto& ct : ett.rows) {
          auto p = row.keys.size() == 1 ? crypto::open(row.keys[0], ct) : crypto::open2(row.keys[0], row.keys[1], ct);
          if (p) {
            ++opened;
            if (*p != row.payload) throw Error("garbled gate row decrypts to the wrong payload");
          }
        }
        if (opened != 1) throw Error("garbled gate has " + std::to_string(opened) + " rows for one input combination");
      }
    }
    g.gates.push_back({pg.in0, pg.in1, pg.out, std::move(ett)});
  }
  return g;
}

Word add(Builder& b, const Word& x, const Word& y) {
  Word out(x.size());
  Signal carry = Signal::constant(false);
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto t = b.xor_(x[i], y[i]);
    out[i] = b.xor_(t, carry);
    if (i + 1 < x.size()) carry = b.or_(b.and_(x[i], y[i]), b.and_(t, carry));
  }
  return out;
}

namespace {

// x - y over equal widths; also returns the final borrow (1 iff x < y).
std::pair<Word, Signal> sub_borrow(Builder& b, const Word& x, const Word& y) {
  Word out(x.size());
  Signal borrow = Signal::constant(false);
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto t = b.xor_(x[i], y[i]);
    out[i] = b.xor_(t, borrow);
    borrow = b.or_(b.gate(kAndNotFirst, x[i], y[i]), b.gate(kAndNotFirst, t, borrow));
  }
  return {out, borrow};
}

}  // namespace

Word sub(Builder& b, const Word& x, const Word& y) { return sub_borrow(b, x, y).first; }

Word mul(Builder& b, const Word& x, const Word& y) {
  const auto w = x.size();
  Word acc(w);
  for (std::size_t i = 0; i < w; ++i) acc[i] = b.and_(x[i], y[0]);
  for (std::size_t j = 1; j < w; ++j) {
    Word hi(acc.begin() + j, acc.end());
    Word row(w - j);
    for (std::size_t i = j; i < w; ++i) row[i - j] = b.and_(x[i - j], y[j]);
    auto sum = add(b, hi, row);
    std::copy(sum.begin(), sum.end(), acc.begin() + j);
  }
  return acc;
}

Word divu(Builder& b, const Word& x, const Word& y) {
  const auto w = x.size();
  Word rem(w, Signal::constant(false));
  Word q(w);
  Word divisor(y);
  divisor.push_back(Signal::constant(false));
  for (std::size_t step = 0; step < w; ++step) {
    auto i = w - 1 - step;
    Word shifted;
    shifted.reserve(w + 1);
    shifted.push_back(x[i]);
    shifted.insert(shifted.end(), rem.begin(), rem.end());
    auto [diff, borrow] = sub_borrow(b, shifted, divisor);
    auto take = b.not_(borrow);
    q[i] = take;
    for (std::size_t k = 0; k < w; ++k) {
      auto delta = b.xor_(shifted[k], diff[k]);
      rem[k] = b.xor_(shifted[k], b.and_(take, delta));
    }
  }
  return q;
}

Signal any_set(Builder& b, const Word& x) {
  Word level(x);
  while (level.size() > 1) {
    Word next;
    for (std::size_t i = 0; i + 1 < level.size(); i += 2) next.push_back(b.or_(level[i], level[i + 1]));
    if (level.size() % 2) next.push_back(level.back());
    level = std::move(next);
  }
  return level.empty() ? Signal::constant(false) : level[0];
}

}  // namespace vram::circuit
