#include "vram/compiler.hpp"

#include <algorithm>
#include <functional>
#include <memory>
#include <set>

namespace vram::compiler {

using crypto::arrive_at;
using crypto::init_at;
using crypto::Key;
using crypto::write_at;
using isa::Address;
using isa::Opcode;
using isa::Region;

namespace {

constexpr std::uint64_t kProgramMagic = 0x314752504d415256ull;  // "VRAMPRG1"
constexpr std::uint64_t kFormatVersion = 1;

std::uint8_t encode_branch(Branch b) { return b == Branch::None ? 0xff : static_cast<std::uint8_t>(b); }

Branch decode_branch(std::uint8_t v) {
  switch (v) {
    case 0: return Branch::Upper;
    case 1: return Branch::Lower;
    case 0xff: return Branch::None;
    default: throw FormatError("bad branch index in circuit label");
  }
}

Kind decode_kind(std::uint8_t v) {
  if (v > 3) throw FormatError("bad element kind");
  return static_cast<Kind>(v);
}

// Word written by a memory instruction.
Address written_by(const isa::Instruction& inst, Address acc) {
  return inst.op == Opcode::Store ? inst.operand : acc;
}

// ---------------------------------------------------------------------------
// Pass 1: structural exploration of every execution path.
//
// The program becomes a spine of unbranched instructions interrupted by
// regions. A region starts at a conditional jump and ends at its merge
// point; inside it, paths may split again (loop iterations, else-if arms)
// as long as every split rejoins at the same merge point or never rejoins.

enum class End { Halt, Truncated, Merge, Split, Region };

struct Seg;
struct Spine;

struct SplitRegion {
  std::uint32_t split_pc = 0;
  std::optional<std::uint32_t> merge_pc;
  std::unique_ptr<Seg> side[2];  // [Upper, Lower]
  std::unique_ptr<Spine> after;  // continuation past the merge point
};

struct Seg {
  std::vector<std::uint32_t> pcs;  // memory instructions, one I element each
  End end = End::Truncated;
  std::uint32_t split_pc = 0;
  std::unique_ptr<Seg> child[2];

  // Filled in by the emitter.
  bool has_merge = false;
  std::set<Address> subtree_writes;
  std::uint64_t start = 0;
  ChildWindow window;
};

struct Spine {
  std::vector<std::uint32_t> pcs;
  End end = End::Truncated;
  std::unique_ptr<SplitRegion> region;
};

struct PathState {
  std::uint32_t pc = 0;
  std::uint64_t cost = 0;
  std::vector<bool> written;
  bool last_store_y = false;
};

class Explorer {
 public:
  Explorer(const isa::RamProgram& prog, std::uint64_t max_cost) : prog_(prog), max_cost_(max_cost) {
    merge_.resize(prog.instructions.size());
    for (std::uint32_t pc = 0; pc < prog.instructions.size(); ++pc)
      if (isa::is_conditional(prog.instructions[pc].op)) merge_[pc] = merge_point(prog, pc);
  }

  std::unique_ptr<Spine> spine(PathState st) {
    auto sp = std::make_unique<Spine>();
    while (true) {
      if (st.cost >= max_cost_) {
        sp->end = End::Truncated;
        return sp;
      }
      const auto& inst = fetch(st.pc);
      ++st.cost;
      if (isa::is_memory_op(inst.op)) {
        step_memory(st, inst);
        sp->pcs.push_back(st.pc++);
      } else if (inst.op == Opcode::Jmp) {
        st.pc = inst.operand;
      } else if (inst.op == Opcode::Halt) {
        check_halt(st);
        sp->end = End::Halt;
        return sp;
      } else {
        sp->end = End::Region;
        sp->region = region(st);
        return sp;
      }
    }
  }

 private:
  const isa::Instruction& fetch(std::uint32_t pc) const {
    if (pc >= prog_.instructions.size())
      throw CompileError("control falls off the end of the program after index " + std::to_string(pc - 1));
    return prog_.instructions[pc];
  }

  void require_written(const PathState& st, Address a) const {
    auto region = prog_.layout.region_of(a);
    if ((region == Region::R || region == Region::Y) && !st.written[a])
      throw CompileError("a path reads never-written " + std::string(isa::region_name(region)) + " location '" +
                         prog_.symbol_at(a) + "' at index " + std::to_string(st.pc));
  }

  void step_memory(PathState& st, const isa::Instruction& inst) const {
    const Address r = prog_.layout.accumulator();
    switch (inst.op) {
      case Opcode::Load: require_written(st, inst.operand); break;
      case Opcode::Store: require_written(st, r); break;
      default:
        require_written(st, r);
        require_written(st, inst.operand);
    }
    auto w = written_by(inst, r);
    st.written[w] = true;
    st.last_store_y = inst.op == Opcode::Store && prog_.layout.region_of(w) == Region::Y;
  }

  void check_halt(const PathState& st) const {
    if (!st.last_store_y)
      throw CompileError("HALT at index " + std::to_string(st.pc) +
                         " is not preceded by a write into Y on every path");
  }

  std::unique_ptr<SplitRegion> region(PathState st) {
    const auto pc = st.pc;
    require_written(st, prog_.layout.accumulator());
    auto reg = std::make_unique<SplitRegion>();
    reg->split_pc = pc;
    reg->merge_pc = merge_[pc];
    std::vector<PathState> merged;
    for (int side = 0; side < 2; ++side) {
      PathState s = st;
      s.pc = side == 0 ? prog_.instructions[pc].operand : pc + 1;
      reg->side[side] = seg(std::move(s), reg->merge_pc, merged);
    }
    if (!merged.empty()) {
      PathState m = merged.front();
      for (auto& o : merged) {
        m.cost = std::min(m.cost, o.cost);
        m.last_store_y = m.last_store_y && o.last_store_y;
        for (std::size_t a = 0; a < m.written.size(); ++a) m.written[a] = m.written[a] && o.written[a];
      }
      reg->after = spine(std::move(m));
    }
    return reg;
  }

  std::unique_ptr<Seg> seg(PathState st, std::optional<std::uint32_t> merge, std::vector<PathState>& merged) {
    auto s = std::make_unique<Seg>();
    while (true) {
      if (merge && st.pc == *merge) {
        s->end = End::Merge;
        merged.push_back(st);
        return s;
      }
      if (st.cost >= max_cost_) {
        s->end = End::Truncated;
        return s;
      }
      const auto& inst = fetch(st.pc);
      ++st.cost;
      if (isa::is_memory_op(inst.op)) {
        step_memory(st, inst);
        s->pcs.push_back(st.pc++);
      } else if (inst.op == Opcode::Jmp) {
        st.pc = inst.operand;
      } else if (inst.op == Opcode::Halt) {
        check_halt(st);
        s->end = End::Halt;
        return s;
      } else {
        auto inner = merge_[st.pc];
        if (inner && inner != merge)
          throw CompileError("nested conditional at index " + std::to_string(st.pc) +
                             " merges at index " + std::to_string(*inner) +
                             " inside a branch that merges elsewhere; restructure it as a sequence of "
                             "conditionals that each merge before the next split");
        require_written(st, prog_.layout.accumulator());
        s->end = End::Split;
        s->split_pc = st.pc;
        for (int side = 0; side < 2; ++side) {
          PathState c = st;
          c.pc = side == 0 ? inst.operand : st.pc + 1;
          s->child[side] = seg(std::move(c), merge, merged);
        }
        return s;
      }
    }
  }

  const isa::RamProgram& prog_;
  std::uint64_t max_cost_;
  std::vector<std::optional<std::uint32_t>> merge_;
};

// ---------------------------------------------------------------------------
// Pass 2: layout in VRAM time and emission of garbled elements.

struct PathCtx {
  std::vector<Stamp> t_w;
  std::set<std::pair<Address, Stamp>> outputs;  // one-time key check
  Branch branch = Branch::None;
  Key key;
};

struct HaltSite {
  std::uint64_t t;
  Branch branch;
  Key key;
  std::vector<Stamp> t_w;
};

class Emitter {
 public:
  Emitter(const isa::RamProgram& prog, const KeyMaterial& km, crypto::Drbg& rng, const CompileOptions& opts)
      : prog_(prog), km_(km), rng_(rng), opts_(opts), acc_(prog.layout.accumulator()) {}

  void spine(Spine& sp, PathCtx& ctx, std::uint64_t t) {
    for (auto pc : sp.pcs) t = emit_i(pc, ctx, t, std::nullopt) + 1;
    switch (sp.end) {
      case End::Halt: halts_.push_back({t, Branch::None, {}, ctx.t_w}); break;
      case End::Truncated:
        max_t_ = std::max(max_t_, t);
        ++truncated_;
        break;
      case End::Region: region(*sp.region, ctx, t); break;
      default: throw CompileError("internal: unexpected spine end");
    }
  }

  void finish(CompileResult& res, std::uint64_t t_start) {
    if (halts_.empty())
      throw CompileError("no execution path reaches HALT within MAX_cost = " + std::to_string(km_.params.max_cost));
    std::uint64_t tau = t_start;
    for (auto& h : halts_) tau = std::max(tau, h.t);
    tau = std::max(tau, max_t_);
    if (opts_.fixed_tau) {
      if (*opts_.fixed_tau < tau)
        throw CompileError("predetermined tau " + std::to_string(*opts_.fixed_tau) + " is below the required " +
                           std::to_string(tau));
      tau = *opts_.fixed_tau;
    }

    // D words whose final time depends on the halting path are fast-forwarded
    // to tau together with Y so that the next chained program sees one map.
    const auto& L = prog_.layout;
    std::vector<Address> d_ff;
    for (Address d = L.begin(Region::D); d < L.end(Region::D); ++d)
      for (auto& h : halts_)
        if (h.t_w[d] != halts_.front().t_w[d]) {
          d_ff.push_back(d);
          break;
        }

    const Stamp target = arrive_at(tau);
    for (auto& h : halts_) {
      std::uint32_t ord = 0;
      auto forward = [&](Address a) {
        if (h.t_w[a] == target) return;
        auto g = build_t(a, h.t_w[a], target, km_, rng_, opts_.verify_gates);
        ElementBody body;
        body.kind = Kind::T;
        body.address = a;
        body.gadget = std::move(g);
        push({h.t, Kind::T, h.branch, ord++}, body, h.key);
      };
      for (Address y = L.begin(Region::Y); y < L.end(Region::Y); ++y) forward(y);
      for (auto d : d_ff) forward(d);
      ElementBody marker;
      marker.kind = Kind::Halt;
      push({h.t, Kind::Halt, h.branch, 0}, marker, h.key);
    }

    auto& fs = res.final_state;
    fs.t = tau;
    fs.t_start = t_start;
    fs.tau_prev = tau;
    fs.t_w = halts_.front().t_w;
    for (Address y = L.begin(Region::Y); y < L.end(Region::Y); ++y) fs.t_w[y] = target;
    for (auto d : d_ff) fs.t_w[d] = target;

    res.tau = tau;
    res.program.tau = tau;
    res.program.elements = std::move(elements_);
    res.regions = std::move(regions_);
    res.halt_sites = halts_.size();
    res.truncated_paths = truncated_;
  }

 private:
  // Emits the I element for the instruction at `pc`; `ff` is the merge time
  // when this is the final write of its word before the merge.
  std::uint64_t emit_i(std::uint32_t pc, PathCtx& ctx, std::uint64_t t, std::optional<std::uint64_t> ff) {
    const auto inst = prog_.instructions[pc];
    const Address out = written_by(inst, acc_);
    const Stamp out_stamp = ff ? arrive_at(*ff) : write_at(t);
    const Stamp operand_in = inst.op == Opcode::Store ? ctx.t_w[acc_] : ctx.t_w[inst.operand];
    ElementBody body;
    body.kind = Kind::I;
    body.op = inst.op;
    body.address = inst.operand;
    body.gadget = build_i(inst, km_, ctx.t_w[acc_], operand_in, out_stamp, rng_, opts_.verify_gates);
    push({t, Kind::I, ctx.branch, 0}, body, ctx.key);
    note_output(ctx, out, out_stamp);
    ctx.t_w[out] = out_stamp;
    return t;
  }

  void note_output(PathCtx& ctx, Address a, Stamp s) {
    if (!ctx.outputs.insert({a, s}).second)
      throw CompileError("internal: key for word " + std::to_string(a) + " at time " + std::to_string(s.t) +
                         " produced twice on one path");
  }

  void push(CircuitLabel label, const ElementBody& body, const Key& key) {
    CircuitElement e;
    e.label = label;
    auto plain = body.serialize();
    e.body = label.branch == Branch::None ? std::move(plain) : crypto::seal(key, plain, rng_);
    elements_.push_back(std::move(e));
  }

  void derive(Seg& s) {
    for (auto pc : s.pcs) s.subtree_writes.insert(written_by(prog_.instructions[pc], acc_));
    switch (s.end) {
      case End::Merge: s.has_merge = true; break;
      case End::Split:
        for (auto& c : s.child) {
          derive(*c);
          s.has_merge = s.has_merge || c->has_merge;
          s.subtree_writes.insert(c->subtree_writes.begin(), c->subtree_writes.end());
        }
        break;
      default: break;
    }
  }

  void collect_merge_writes(const Seg& s, std::set<Address>& u) const {
    if (!s.has_merge) return;
    for (auto pc : s.pcs) u.insert(written_by(prog_.instructions[pc], acc_));
    if (s.end == End::Split)
      for (auto& c : s.child) collect_merge_writes(*c, u);
  }

  // Places `s` at the earliest start >= desired whose window is free on its
  // branch index; returns the latest time used in the subtree.
  std::uint64_t layout(Seg& s, std::uint64_t desired, int idx, std::set<std::pair<std::uint64_t, int>>& occupied) {
    const std::uint64_t n = s.pcs.size();
    std::uint64_t len = 0;
    switch (s.end) {
      case End::Merge: len = n > 0 ? n : 1; break;
      case End::Halt:
      case End::Split: len = n + 1; break;
      case End::Truncated: len = n; break;
      default: throw CompileError("internal: unexpected segment end");
    }
    std::uint64_t start = desired;
    auto clashes = [&](std::uint64_t s0) {
      for (std::uint64_t k = 0; k < len; ++k)
        if (occupied.count({s0 + k, idx})) return true;
      return false;
    };
    while (clashes(start)) ++start;
    for (std::uint64_t k = 0; k < len; ++k) occupied.insert({start + k, idx});
    s.start = start;
    s.window = {len == 0, start, len == 0 ? start : start + len - 1, s.has_merge};
    std::uint64_t latest = len == 0 ? 0 : start + len - 1;
    if (s.end == End::Split)
      for (int c = 0; c < 2; ++c) latest = std::max(latest, layout(*s.child[c], start + n + 1, c, occupied));
    return latest;
  }

  struct RegionCtx {
    std::optional<std::uint64_t> t_merge;
    std::set<Address> merge_writes;
    std::optional<std::vector<Stamp>> merged_t_w;
    std::set<std::pair<Address, Stamp>> merged_outputs;
  };

  ElementBody b_body(std::uint32_t pc, const PathCtx& ctx, std::uint64_t t, const Seg& upper, const Seg& lower,
                     const RegionCtx& rc) {
    ElementBody body;
    body.kind = Kind::B;
    body.op = prog_.instructions[pc].op;
    body.gadget = build_b(body.op, km_, ctx.t_w[acc_], t, rng_, opts_.verify_gates);
    body.children = {upper.window, lower.window};
    body.merge_t = rc.t_merge;
    return body;
  }

  void region(SplitRegion& reg, PathCtx& ctx, std::uint64_t t_s) {
    RegionCtx rc;
    std::set<std::pair<std::uint64_t, int>> occupied;
    std::uint64_t latest = t_s;
    for (int side = 1; side >= 0; --side) {
      derive(*reg.side[side]);
      collect_merge_writes(*reg.side[side], rc.merge_writes);
    }
    for (int side = 1; side >= 0; --side) latest = std::max(latest, layout(*reg.side[side], t_s + 1, side, occupied));
    const std::uint64_t t_m = latest + 1;
    if (reg.after) rc.t_merge = t_m;
    regions_.push_back({t_s, rc.t_merge, reg.split_pc});

    push({t_s, Kind::B, Branch::None, 0}, b_body(reg.split_pc, ctx, t_s, *reg.side[0], *reg.side[1], rc), Key{});
    for (int side = 0; side < 2; ++side) {
      PathCtx c = ctx;
      c.branch = static_cast<Branch>(side);
      c.key = crypto::prf_branch(km_.s_br, t_s, side, km_.params.key_bits);
      seg(*reg.side[side], c, rc);
    }

    if (reg.after) {
      if (!rc.merged_t_w) throw CompileError("internal: region continues but no path merged");
      ctx.t_w = *rc.merged_t_w;
      ctx.outputs = std::move(rc.merged_outputs);
      spine(*reg.after, ctx, t_m);
    }
  }

  void seg(Seg& s, PathCtx& ctx, RegionCtx& rc) {
    std::uint64_t t = s.start;
    for (std::size_t k = 0; k < s.pcs.size(); ++k, ++t) {
      std::optional<std::uint64_t> ff;
      if (s.has_merge && rc.t_merge) {
        auto w = written_by(prog_.instructions[s.pcs[k]], acc_);
        bool later = false;
        for (std::size_t j = k + 1; j < s.pcs.size() && !later; ++j)
          later = written_by(prog_.instructions[s.pcs[j]], acc_) == w;
        if (s.end == End::Split)
          for (auto& c : s.child) later = later || c->subtree_writes.count(w);
        if (!later) ff = rc.t_merge;
      }
      emit_i(s.pcs[k], ctx, t, ff);
    }

    switch (s.end) {
      case End::Merge: {
        const Stamp target = arrive_at(*rc.t_merge);
        const std::uint64_t t_t = s.pcs.empty() ? s.start : t - 1;
        std::uint32_t ord = 0;
        for (auto a : rc.merge_writes) {
          if (ctx.t_w[a] == target) continue;
          ElementBody body;
          body.kind = Kind::T;
          body.address = a;
          body.gadget = build_t(a, ctx.t_w[a], target, km_, rng_, opts_.verify_gates);
          push({t_t, Kind::T, ctx.branch, ord++}, body, ctx.key);
          note_output(ctx, a, target);
          ctx.t_w[a] = target;
        }
        if (!rc.merged_t_w)
          rc.merged_t_w = ctx.t_w;
        else if (*rc.merged_t_w != ctx.t_w)
          throw CompileError("internal: write times disagree at merge time " + std::to_string(*rc.t_merge));
        rc.merged_outputs.insert(ctx.outputs.begin(), ctx.outputs.end());
        break;
      }
      case End::Halt: halts_.push_back({t, ctx.branch, ctx.key, ctx.t_w}); break;
      case End::Truncated:
        max_t_ = std::max(max_t_, t);
        ++truncated_;
        break;
      case End::Split: {
        push({t, Kind::B, ctx.branch, 0}, b_body(s.split_pc, ctx, t, *s.child[0], *s.child[1], rc), ctx.key);
        for (int side = 0; side < 2; ++side) {
          PathCtx c = ctx;
          c.branch = static_cast<Branch>(side);
          c.key = crypto::prf_branch(km_.s_br, t, side, km_.params.key_bits);
          seg(*s.child[side], c, rc);
        }
        break;
      }
      default: throw CompileError("internal: unexpected segment end");
    }
  }

  const isa::RamProgram& prog_;
  const KeyMaterial& km_;
  crypto::Drbg& rng_;
  const CompileOptions& opts_;
  const Address acc_;
  std::vector<CircuitElement> elements_;
  std::vector<HaltSite> halts_;
  std::vector<RegionInfo> regions_;
  std::uint64_t max_t_ = 0;
  std::size_t truncated_ = 0;
};

}  // namespace

std::string_view kind_name(Kind k) {
  switch (k) {
    case Kind::I: return "I";
    case Kind::B: return "B";
    case Kind::T: return "T";
    case Kind::Halt: return "HALT";
  }
  return "?";
}

void Params::validate() const {
  layout.validate();
  if (!crypto::valid_key_bits(key_bits)) throw Error("key length must be 128 or 256 bits");
  if (max_cost < 1) throw Error("MAX_cost must be at least 1");
}

KeyMaterial KeyMaterial::fresh(const Params& p, crypto::Drbg& rng) {
  KeyMaterial km;
  km.s_k = rng.seed();
  km.s_br = rng.seed();
  km.params = p;
  return km;
}

Bytes ElementBody::serialize() const {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(kind));
  w.u8(static_cast<std::uint8_t>(op));
  w.u32(address);
  if (kind != Kind::Halt) gadget.serialize(w);
  if (kind == Kind::B) {
    for (auto& c : children) {
      w.u8(c.empty);
      w.u64(c.first);
      w.u64(c.last);
      w.u8(c.merges);
    }
    w.u8(merge_t.has_value());
    w.u64(merge_t.value_or(0));
  }
  return w.take();
}

ElementBody ElementBody::deserialize(ByteView b) {
  ByteReader r(b);
  ElementBody body;
  body.kind = decode_kind(r.u8());
  auto op = r.u8();
  if (op > static_cast<std::uint8_t>(Opcode::Halt)) throw FormatError("bad opcode in element body");
  body.op = static_cast<Opcode>(op);
  body.address = r.u32();
  if (body.kind != Kind::Halt) body.gadget = circuit::Gadget::deserialize(r);
  if (body.kind == Kind::B) {
    for (auto& c : body.children) {
      c.empty = r.u8() != 0;
      c.first = r.u64();
      c.last = r.u64();
      c.merges = r.u8() != 0;
    }
    bool has = r.u8() != 0;
    auto m = r.u64();
    if (has) body.merge_t = m;
  }
  if (!r.done()) throw FormatError("trailing bytes in element body");
  return body;
}

Bytes VramProgram::serialize() const {
  ByteWriter w;
  w.u64(kProgramMagic);
  w.u64(kFormatVersion);
  w.u64(params.layout.word_width);
  w.u64(params.key_bits);
  w.u64(params.layout.r_size);
  w.u64(params.layout.x_size);
  w.u64(params.layout.y_size);
  w.u64(params.layout.d_size);
  w.u64(t_start);
  w.u64(tau);
  w.u64(elements.size());
  for (auto& e : elements) {
    w.u64(e.label.t);
    w.u8(static_cast<std::uint8_t>(e.label.kind));
    w.u8(encode_branch(e.label.branch));
    w.u32(e.label.ordinal);
    w.blob(e.body);
  }
  return w.take();
}

VramProgram VramProgram::deserialize(ByteView b) {
  ByteReader r(b);
  if (r.u64() != kProgramMagic) throw FormatError("not a VRAM program (bad magic)");
  if (r.u64() != kFormatVersion) throw FormatError("unsupported VRAM program version");
  VramProgram p;
  auto narrow = [](std::uint64_t v) {
    if (v > 0xffffffffu) throw FormatError("header field out of range");
    return static_cast<std::uint32_t>(v);
  };
  p.params.layout.word_width = narrow(r.u64());
  p.params.key_bits = narrow(r.u64());
  p.params.layout.r_size = narrow(r.u64());
  p.params.layout.x_size = narrow(r.u64());
  p.params.layout.y_size = narrow(r.u64());
  p.params.layout.d_size = narrow(r.u64());
  p.params.max_cost = 0;  // not part of the public header
  try {
    p.params.layout.validate();
  } catch (const Error& e) {
    throw FormatError(e.what());
  }
  if (!crypto::valid_key_bits(p.params.key_bits)) throw FormatError("bad key length in header");
  p.t_start = r.u64();
  p.tau = r.u64();
  auto n = r.u64();
  if (n > r.remaining() / 22) throw FormatError("element count exceeds file size");
  p.elements.reserve(static_cast<std::size_t>(n));
  for (std::uint64_t i = 0; i < n; ++i) {
    CircuitElement e;
    e.label.t = r.u64();
    e.label.kind = decode_kind(r.u8());
    e.label.branch = decode_branch(r.u8());
    e.label.ordinal = r.u32();
    e.body = r.blob();
    p.elements.push_back(std::move(e));
  }
  if (!r.done()) throw FormatError("trailing bytes after last element");
  return p;
}

CompilerState a_init(std::uint64_t tau_prev, const isa::MemoryLayout& layout, const CompilerState* prev) {
  CompilerState st;
  st.t_start = tau_prev;
  st.tau_prev = tau_prev;
  st.t = tau_prev;
  if (tau_prev == 0) {
    st.t_w.assign(layout.total(), init_at(0));
    return st;
  }
  if (!prev || prev->t_w.size() != layout.total())
    throw CompileError("chaining at tau_prev = " + std::to_string(tau_prev) + " needs the previous compile state");
  st.t_w = prev->t_w;
  // R, X and Y are not persistent: they start afresh at t_start.
  for (auto region : {Region::R, Region::X, Region::Y})
    for (Address a = layout.begin(region); a < layout.end(region); ++a) st.t_w[a] = init_at(tau_prev);
  return st;
}

std::vector<std::array<Key, 2>> word_keys(const KeyMaterial& km, Address a, Stamp s) {
  const unsigned w = km.params.word_width();
  std::vector<std::array<Key, 2>> out;
  out.reserve(w);
  for (unsigned i = 0; i < w; ++i) {
    auto bit = a * w + i;
    out.push_back({crypto::prf_mem(km.s_k, bit, s, 0, km.params.key_bits),
                   crypto::prf_mem(km.s_k, bit, s, 1, km.params.key_bits)});
  }
  return out;
}

namespace {

circuit::Word input_word(circuit::Builder& b, const KeyMaterial& km, Address a, Stamp s) {
  auto keys = word_keys(km, a, s);
  circuit::Word w;
  for (std::uint32_t i = 0; i < keys.size(); ++i) w.push_back(b.input({a, i}, keys[i][0], keys[i][1]));
  return w;
}

void output_word(circuit::Builder& b, const KeyMaterial& km, Address a, Stamp s, const circuit::Word& value) {
  auto keys = word_keys(km, a, s);
  for (std::uint32_t i = 0; i < keys.size(); ++i)
    b.output(value[i], circuit::OutputRole::Memory, {a, i}, keys[i][0].bytes(), keys[i][1].bytes());
}

}  // namespace

circuit::Gadget build_i(isa::Instruction inst, const KeyMaterial& km, Stamp acc_in, Stamp operand_in, Stamp out,
                        crypto::Drbg& rng, bool verify) {
  circuit::Builder b(km.params.key_bits, rng);
  const Address r = km.params.layout.accumulator();
  switch (inst.op) {
    case Opcode::Load: output_word(b, km, r, out, input_word(b, km, inst.operand, operand_in)); break;
    case Opcode::Store: output_word(b, km, inst.operand, out, input_word(b, km, r, acc_in)); break;
    case Opcode::Add:
    case Opcode::Sub:
    case Opcode::Mul:
    case Opcode::Div: {
      auto acc = input_word(b, km, r, acc_in);
      auto operand = inst.operand == r ? acc : input_word(b, km, inst.operand, operand_in);
      circuit::Word result;
      switch (inst.op) {
        case Opcode::Add: result = circuit::add(b, acc, operand); break;
        case Opcode::Sub: result = circuit::sub(b, acc, operand); break;
        case Opcode::Mul: result = circuit::mul(b, acc, operand); break;
        default: result = circuit::divu(b, acc, operand); break;
      }
      output_word(b, km, r, out, result);
      break;
    }
    default: throw CompileError("build_i: " + std::string(isa::opcode_name(inst.op)) + " has no I circuit");
  }
  return b.finish(verify);
}

Bytes branch_payload(const Key& k, unsigned br) {
  Bytes p = k.bytes();
  p.push_back(static_cast<std::uint8_t>(br));
  return p;
}

circuit::Gadget build_b(isa::Opcode op, const KeyMaterial& km, Stamp acc_in, std::uint64_t t, crypto::Drbg& rng,
                        bool verify) {
  if (!isa::is_conditional(op)) throw CompileError("build_b: not a conditional jump");
  circuit::Builder b(km.params.key_bits, rng);
  const Address r = km.params.layout.accumulator();
  auto acc = input_word(b, km, r, acc_in);
  auto up = branch_payload(crypto::prf_branch(km.s_br, t, 0, km.params.key_bits), 0);
  auto down = branch_payload(crypto::prf_branch(km.s_br, t, 1, km.params.key_bits), 1);
  // The condition being true selects the upper branch.
  if (op == Opcode::Jmpz)
    b.output(circuit::any_set(b, acc), circuit::OutputRole::Branch, {0, 0}, std::move(up), std::move(down));
  else
    b.output(acc.back(), circuit::OutputRole::Branch, {0, 0}, std::move(down), std::move(up));
  return b.finish(verify);
}

circuit::Gadget build_t(Address a, Stamp from, Stamp to, const KeyMaterial& km, crypto::Drbg& rng, bool verify) {
  if (from == to) throw CompileError("build_t: translation to the same time is meaningless");
  circuit::Builder b(km.params.key_bits, rng);
  output_word(b, km, a, to, input_word(b, km, a, from));
  return b.finish(verify);
}

CompileResult a_prog(const isa::RamProgram& prog, std::uint64_t tau_prev, const KeyMaterial& km, crypto::Drbg& rng,
                     const CompilerState* prev, const CompileOptions& opts) {
  km.params.validate();
  if (!(prog.layout == km.params.layout)) throw CompileError("program layout does not match the key material");
  auto state = a_init(tau_prev, prog.layout, prev);

  PathState start;
  start.written.assign(prog.layout.total(), false);
  auto tree = Explorer(prog, km.params.max_cost).spine(start);

  CompileResult res;
  res.t_start = state.t_start;
  res.program.params = km.params;
  res.program.t_start = state.t_start;

  Emitter em(prog, km, rng, opts);
  PathCtx ctx;
  ctx.t_w = state.t_w;
  em.spine(*tree, ctx, state.t);
  em.finish(res, state.t_start);
  return res;
}

std::optional<std::uint32_t> merge_point(const isa::RamProgram& prog, std::uint32_t pc) {
  const auto& code = prog.instructions;
  if (pc >= code.size() || !isa::is_conditional(code[pc].op)) throw Error("merge_point: not a conditional jump");
  auto reach = [&](std::uint32_t from) {
    std::vector<bool> seen(code.size(), false);
    std::vector<std::uint32_t> stack{from};
    while (!stack.empty()) {
      auto n = stack.back();
      stack.pop_back();
      if (n >= code.size() || seen[n]) continue;
      seen[n] = true;
      const auto& i = code[n];
      if (i.op == Opcode::Halt) continue;
      if (i.op == Opcode::Jmp) {
        stack.push_back(i.operand);
        continue;
      }
      stack.push_back(n + 1);
      if (isa::is_conditional(i.op)) stack.push_back(i.operand);
    }
    return seen;
  };
  auto a = reach(code[pc].operand);
  auto b = reach(pc + 1);
  for (std::uint32_t n = 0; n < code.size(); ++n)
    if (a[n] && b[n]) return n;
  return std::nullopt;
}

std::vector<Path> enumerate_paths(const isa::RamProgram& prog, std::uint64_t max_cost) {
  std::vector<Path> out;
  std::vector<std::pair<std::uint32_t, Path>> stack{{0, Path{}}};
  while (!stack.empty()) {
    auto [pc, path] = std::move(stack.back());
    stack.pop_back();
    while (true) {
      if (path.pcs.size() >= max_cost) {
        out.push_back(std::move(path));
        break;
      }
      if (pc >= prog.instructions.size()) throw CompileError("control falls off the end of the program");
      const auto& inst = prog.instructions[pc];
      path.pcs.push_back(pc);
      if (inst.op == Opcode::Halt) {
        path.halted = true;
        out.push_back(std::move(path));
        break;
      }
      if (inst.op == Opcode::Jmp) {
        pc = inst.operand;
      } else if (isa::is_conditional(inst.op)) {
        // Explore the taken side first so paths come out upper-before-lower.
        Path fall = path;
        fall.decisions.push_back(false);
        stack.push_back({pc + 1, std::move(fall)});
        path.decisions.push_back(true);
        pc = inst.operand;
      } else {
        ++pc;
      }
    }
  }
  return out;
}

}  // namespace vram::compiler
