#include "vram/executor.hpp"

#include <algorithm>
#include <sstream>

#include "json.hpp"

namespace vram::executor {

namespace {

struct Abort {
  Outcome outcome;
  std::string detail;
};

std::string where(const CircuitLabel& l) {
  return std::string(compiler::kind_name(l.kind)) + " element at t=" + std::to_string(l.t) +
         " branch=" + std::to_string(compiler::index_of(l.branch));
}

bool eligible(const CircuitLabel& l, const ExecState& st) {
  if (st.br == -1) return l.branch == Branch::None && l.t >= st.cursor;
  return compiler::index_of(l.branch) == st.br && !st.window.empty && l.t >= st.window.first &&
         l.t <= st.window.last;
}

class Runner {
 public:
  Runner(const compiler::VramProgram& pv, const ExecOptions& opts)
      : pv_(pv), opts_(opts), mem_(pv.params.layout, pv.params.key_bits), order_(pick_order(pv)) {
    st_.cursor = pv.t_start;
    st_.processed.assign(pv.elements.size(), false);
  }

  codec::EncodedMemory& memory() { return mem_; }

  ExecResult run() {
    ExecResult res;
    try {
      loop();
      res.outcome = st_.halt ? Outcome::Halted : Outcome::Bottom;
      if (!st_.halt) res.detail = "halt never reached: MAX_cost was chosen too small for this input";
    } catch (const Abort& a) {
      res.outcome = a.outcome;
      res.detail = a.detail;
    }
    for (bool p : st_.processed) report_.skipped += !p;
    res.y_v = mem_.extract(isa::Region::Y);
    res.d_v = mem_.extract(isa::Region::D);
    res.report = std::move(report_);
    return res;
  }

 private:
  void loop() {
    while (!st_.halt) {
      auto next = pick_next(pv_, order_, st_);
      if (!next) {
        if (st_.br != -1 && st_.window.merges && st_.merge_t) {
          st_.br = -1;
          st_.k_br = {};
          st_.cursor = *st_.merge_t;
          st_.window = {};
          continue;
        }
        return;
      }
      st_.processed[*next] = true;
      const auto& e = pv_.elements[*next];
      if (opts_.tamper == Tamper::SkipElement && picked_++ == opts_.target) continue;
      process(e);
    }
  }

  void process(const compiler::CircuitElement& e) {
    Bytes plain;
    if (e.encrypted()) {
      auto p = crypto::open(st_.k_br, e.body);
      if (!p) throw Abort{Outcome::DecryptFailed, where(e.label) + " does not authenticate under the branch key"};
      plain = std::move(*p);
    } else {
      plain = e.body;
    }
    compiler::ElementBody body;
    try {
      body = compiler::ElementBody::deserialize(plain);
    } catch (const FormatError& err) {
      throw Abort{Outcome::GateFailed, where(e.label) + ": " + err.what()};
    }
    if (body.kind != e.label.kind) throw Abort{Outcome::GateFailed, where(e.label) + ": body kind differs from label"};

    ++report_.evaluated[static_cast<int>(body.kind)];
    report_.log.push_back({e.label.t, e.label.kind, e.label.branch, e.label.ordinal, body.op, body.address});
    if (body.kind == Kind::Halt) {
      st_.halt = true;
      return;
    }

    std::vector<Bytes> inputs;
    inputs.reserve(body.gadget.inputs.size());
    for (auto& in : body.gadget.inputs) {
      const auto& k = mem_.get(in.address, in.bit);
      if (!k) throw Abort{Outcome::GateFailed, where(e.label) + ": input slot is empty"};
      inputs.push_back(k->bytes());
    }
    std::uint64_t gates = 0;
    auto out = circuit::evaluate(body.gadget, inputs, &gates);
    report_.gates_evaluated += gates;
    if (body.kind == Kind::T) report_.t_bit_evaluations += gates;
    if (!out) throw Abort{Outcome::GateFailed, where(e.label) + ": no table row opens"};

    if (opts_.tamper == Tamper::FlipOutput && evaluated_ == opts_.target && !out->empty()) {
      auto& victim = (*out)[opts_.flip_bit % out->size()];
      victim[opts_.flip_bit / 8 % victim.size()] ^= static_cast<std::uint8_t>(1u << (opts_.flip_bit % 8));
    }
    ++evaluated_;

    if (body.kind == Kind::B) {
      take_branch(e, body, (*out).at(0));
      return;
    }
    for (std::size_t i = 0; i < out->size(); ++i) {
      const auto& o = body.gadget.outputs[i];
      if (o.role != circuit::OutputRole::Memory) throw Abort{Outcome::GateFailed, where(e.label) + ": bad output role"};
      try {
        mem_.set(o.target.address, o.target.bit, crypto::Key((*out)[i]));
      } catch (const Error&) {
        throw Abort{Outcome::GateFailed, where(e.label) + ": malformed output key"};
      }
    }
  }

  void take_branch(const compiler::CircuitElement& e, const compiler::ElementBody& body, const Bytes& payload) {
    const std::size_t kb = pv_.params.key_bits / 8;
    if (payload.size() != kb + 1 || payload[kb] > 1)
      throw Abort{Outcome::GateFailed, where(e.label) + ": malformed branch payload"};
    int br = payload[kb];
    if (opts_.tamper == Tamper::WrongBranch && branches_++ == opts_.target) br = 1 - br;
    st_.br = br;
    report_.log.back().taken = br;
    st_.k_br = crypto::Key(Bytes(payload.begin(), payload.begin() + static_cast<std::ptrdiff_t>(kb)));
    st_.window = body.children[br];
    st_.merge_t = body.merge_t;
  }

  const compiler::VramProgram& pv_;
  const ExecOptions& opts_;
  codec::EncodedMemory mem_;
  std::vector<std::size_t> order_;
  ExecState st_;
  Report report_;
  std::uint64_t picked_ = 0;
  std::uint64_t evaluated_ = 0;
  std::uint64_t branches_ = 0;
};

}  // namespace

std::string_view outcome_name(Outcome o) {
  switch (o) {
    case Outcome::Halted: return "halted";
    case Outcome::Bottom: return "bottom";
    case Outcome::DecryptFailed: return "decrypt-failed";
    case Outcome::GateFailed: return "gate-failed";
  }
  return "?";
}

std::vector<std::size_t> pick_order(const compiler::VramProgram& pv) {
  std::vector<std::size_t> order(pv.elements.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto key = [&](std::size_t i) {
    const auto& l = pv.elements[i].label;
    return std::make_tuple(l.t, compiler::kind_rank(l.kind), l.ordinal, compiler::index_of(l.branch));
  };
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return key(a) < key(b); });
  return order;
}

std::optional<std::size_t> pick_next(const compiler::VramProgram& pv, const std::vector<std::size_t>& order,
                                     const ExecState& st) {
  const std::uint64_t lo = st.br == -1 ? st.cursor : st.window.first;
  auto it = std::lower_bound(order.begin(), order.end(), lo,
                             [&](std::size_t i, std::uint64_t t) { return pv.elements[i].label.t < t; });
  for (; it != order.end(); ++it) {
    const auto& l = pv.elements[*it].label;
    if (st.br != -1 && l.t > st.window.last) break;
    if (!st.processed[*it] && eligible(l, st)) return *it;
  }
  return std::nullopt;
}

ExecResult a_exec(const compiler::VramProgram& pv, const codec::EncodedRegion& x_v, const codec::EncodedRegion& d_v,
                  const codec::EncodedRegion& y0_v, const ExecOptions& opts) {
  Runner r(pv, opts);
  for (auto* reg : {&x_v, &d_v, &y0_v}) r.memory().load(*reg);
  if (x_v.region != isa::Region::X || d_v.region != isa::Region::D || y0_v.region != isa::Region::Y)
    throw FormatError("a_exec: regions passed in the wrong order");
  return r.run();
}

std::string exec_report(const Report& r, std::optional<std::uint64_t> oracle_instructions) {
  std::ostringstream out;
  for (auto& rec : r.log) {
    nlohmann::json j = {{"t", rec.t},
                        {"kind", compiler::kind_name(rec.kind)},
                        {"branch", compiler::index_of(rec.branch)},
                        {"ordinal", rec.ordinal}};
    if (rec.kind == Kind::I || rec.kind == Kind::B) j["op"] = isa::opcode_name(rec.op);
    if (rec.kind == Kind::I || rec.kind == Kind::T) j["address"] = rec.address;
    if (rec.kind == Kind::B) j["taken"] = rec.taken;
    out << j.dump() << '\n';
  }
  nlohmann::json total = {{"I", r.count(Kind::I)},
                          {"B", r.count(Kind::B)},
                          {"T", r.count(Kind::T)},
                          {"HALT", r.count(Kind::Halt)},
                          {"t_bit_evaluations", r.t_bit_evaluations},
                          {"gates_evaluated", r.gates_evaluated},
                          {"skipped", r.skipped}};
  if (oracle_instructions && *oracle_instructions > 0) {
    total["oracle_instructions"] = *oracle_instructions;
    total["ratio"] = static_cast<double>(r.total()) / static_cast<double>(*oracle_instructions);
  }
  out << nlohmann::json{{"summary", total}}.dump() << '\n';
  return out.str();
}

}  // namespace vram::executor
