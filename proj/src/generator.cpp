#include "vram/generator.hpp"

#include <algorithm>
#include <sstream>

namespace vram::gen {

namespace {

constexpr const char* kArith[] = {"ADD", "SUB", "MUL", "DIV"};

class Writer {
 public:
  Writer(crypto::Drbg& rng, const GenConfig& cfg) : rng_(rng), cfg_(cfg) {}

  Generated run() {
    const auto& L = cfg_.layout;
    if (L.x_size < 1 || L.y_size < 1 || L.d_size < 12)
      throw Error("generator needs |X| >= 1, |Y| >= 1 and |D| >= 12");
    g_.loop_bound_input.assign(L.x_size, false);
    for (unsigned i = 0; i < L.x_size; ++i) inputs_.push_back("x" + std::to_string(i));
    for (unsigned i = 0; i < L.y_size; ++i) outputs_.push_back("y" + std::to_string(i));
    vars_ = {"a", "b", "c", "d"};

    // Body: constructs until the instruction budget is nearly spent.
    const unsigned closing = 3;  // LOAD v, STORE y, HALT
    while (count_ + closing < cfg_.max_instructions) {
      const unsigned room = cfg_.max_instructions - closing - count_;
      const bool can_branch = g_.branchings < cfg_.max_branchings && room >= 8;
      auto pick = rng_.uniform(can_branch ? 4 : 1);
      if (pick == 0 || !can_branch) {
        if (room < 2) break;
        block(std::min<unsigned>(room, 6), cost_);
      } else if (pick == 1) {
        if_then(room);
      } else if (pick == 2) {
        if_else(room);
      } else if (cfg_.allow_loops && room >= 10) {
        loop(room);
      } else {
        if_then(room);
      }
    }
    emit("LOAD " + any_value());
    emit("STORE " + outputs_[0]);
    emit("HALT");
    cost_ += 3;

    std::ostringstream src;
    for (unsigned i = 0; i < inputs_.size(); ++i) src << ".input " << inputs_[i] << "\n";
    for (auto& y : outputs_) src << ".output " << y << "\n";
    src << ".data one = 1\n";
    for (auto& [name, v] : consts_) src << ".data " << name << " = " << v << "\n";
    for (auto& line : lines_) src << line << "\n";
    g_.source = src.str();
    g_.program = isa::parse_asm(g_.source, cfg_.layout);
    g_.max_cost = cost_;
    return g_;
  }

 private:
  void emit(const std::string& s) {
    lines_.push_back("        " + s);
    ++count_;
  }
  void label(const std::string& name) { lines_.push_back(name + ":"); }
  std::string fresh_label() { return "L" + std::to_string(labels_++); }

  std::string any_value() {
    auto n = inputs_.size() + vars_.size() + 1;
    auto i = rng_.uniform(n);
    if (i < inputs_.size()) return inputs_[i];
    i -= inputs_.size();
    if (i < vars_.size()) return vars_[i];
    return constant(rng_.uniform(cfg_.layout.mask() + 1));
  }

  std::string constant(isa::Word v) {
    for (auto& [name, value] : consts_)
      if (value == v) return name;
    if (consts_.size() >= 4) return "one";
    std::string name = "k" + std::to_string(consts_.size());
    consts_.push_back({name, v});
    return name;
  }

  std::string target() {
    auto i = rng_.uniform(vars_.size() + outputs_.size());
    return i < vars_.size() ? vars_[i] : outputs_[i - vars_.size()];
  }

  // LOAD, a few arithmetic operations, STORE. Returns instructions emitted.
  unsigned block(unsigned max_len, std::uint64_t& cost) {
    unsigned len = 2 + static_cast<unsigned>(rng_.uniform(std::max(1u, max_len - 1)));
    len = std::min(len, max_len);
    emit("LOAD " + any_value());
    for (unsigned i = 2; i < len; ++i)
      emit(std::string(kArith[rng_.uniform(4)]) + " " + (rng_.uniform(6) == 0 ? "r" : any_value()));
    emit("STORE " + target());
    cost += len;
    return len;
  }

  // Leaves a value in r whose zero-ness or sign decides the branch; returns
  // the jump opcode.
  std::string condition() {
    emit("LOAD " + any_value());
    cost_ += 1;
    if (rng_.uniform(2)) {
      emit("SUB " + any_value());
      cost_ += 1;
    }
    cost_ += 1;  // the conditional jump
    return rng_.uniform(2) ? "JMPZ" : "JMPN";
  }

  void if_then(unsigned room) {
    ++g_.branchings;
    auto op = condition();
    auto end = fresh_label();
    emit(op + " " + end);
    std::uint64_t body_cost = 0;
    block(std::min<unsigned>(room - 4, 6), body_cost);
    label(end);
    cost_ += body_cost;
  }

  void if_else(unsigned room) {
    ++g_.branchings;
    auto op = condition();
    auto other = fresh_label(), end = fresh_label();
    emit(op + " " + other);
    const unsigned share = (room - 5) / 2;
    std::uint64_t a = 0, b = 0;
    block(std::max(2u, std::min(share, 5u)), a);
    emit("JMP " + end);
    ++a;
    label(other);
    block(std::max(2u, std::min(share, 5u)), b);
    label(end);
    cost_ += std::max(a, b);
  }

  void loop(unsigned room) {
    ++g_.branchings;
    ++g_.loops;
    const std::string counter = "n" + std::to_string(g_.loops);
    std::string bound;
    isa::Word bound_max = cfg_.max_loop_iterations;
    if (rng_.uniform(2)) {
      auto i = rng_.uniform(inputs_.size());
      g_.loop_bound_input[i] = true;
      bound = inputs_[i];
    } else {
      bound_max = rng_.uniform(cfg_.max_loop_iterations + 1);
      bound = constant(bound_max);
    }
    auto head = fresh_label(), done = fresh_label();
    emit("LOAD " + bound);
    emit("STORE " + counter);
    label(head);
    emit("LOAD " + counter);
    emit("JMPZ " + done);
    emit("SUB one");
    emit("STORE " + counter);
    std::uint64_t body = 0;
    block(std::min<unsigned>(room - 7, 5), body);
    emit("JMP " + head);
    label(done);
    cost_ += 2 + (bound_max + 1) * 2 + bound_max * (body + 3);
  }

  crypto::Drbg& rng_;
  const GenConfig& cfg_;
  Generated g_;
  std::vector<std::string> lines_;
  std::vector<std::string> inputs_, outputs_, vars_;
  std::vector<std::pair<std::string, isa::Word>> consts_;
  unsigned count_ = 0;
  unsigned labels_ = 0;
  std::uint64_t cost_ = 0;
};

}  // namespace

Generated generate(crypto::Drbg& rng, const GenConfig& cfg) { return Writer(rng, cfg).run(); }

std::vector<isa::Word> random_inputs(crypto::Drbg& rng, const Generated& g, const GenConfig& cfg) {
  std::vector<isa::Word> x(cfg.layout.x_size);
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = g.loop_bound_input[i] ? rng.uniform(cfg.max_loop_iterations + 1) : rng.uniform(cfg.layout.mask() + 1);
  return x;
}

}  // namespace vram::gen
