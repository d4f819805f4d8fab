#include "vram/isa.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>

#include "json.hpp"

namespace vram::isa {

namespace {

constexpr std::array<std::pair<Opcode, std::string_view>, 10> kOpcodeNames{{
    {Opcode::Load, "LOAD"},
    {Opcode::Store, "STORE"},
    {Opcode::Add, "ADD"},
    {Opcode::Sub, "SUB"},
    {Opcode::Mul, "MUL"},
    {Opcode::Div, "DIV"},
    {Opcode::Jmp, "JMP"},
    {Opcode::Jmpz, "JMPZ"},
    {Opcode::Jmpn, "JMPN"},
    {Opcode::Halt, "HALT"},
}};

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

bool is_identifier(std::string_view s) {
  return !s.empty() && is_ident_start(s.front()) && std::all_of(s.begin(), s.end(), is_ident);
}

struct Token {
  std::string_view text;
  std::size_t column;  // 1-based
};

std::vector<Token> tokenize(std::string_view line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    char c = line[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '=') {
      out.push_back({line.substr(i, 1), i + 1});
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j])) && line[j] != '=') ++j;
    out.push_back({line.substr(i, j - i), i + 1});
    i = j;
  }
  return out;
}

std::string upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::toupper(c); });
  return out;
}

std::optional<std::uint64_t> parse_decimal(std::string_view s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

struct PendingInstruction {
  Opcode op;
  std::optional<Token> operand;
  std::size_t line;
  std::size_t column;
};

}  // namespace

std::string_view opcode_name(Opcode op) {
  for (auto& [o, n] : kOpcodeNames)
    if (o == op) return n;
  return "?";
}

std::optional<Opcode> opcode_from_name(std::string_view name) {
  auto u = upper(name);
  for (auto& [o, n] : kOpcodeNames)
    if (n == u) return o;
  return std::nullopt;
}

std::string_view region_name(Region r) {
  switch (r) {
    case Region::R: return "R";
    case Region::X: return "X";
    case Region::Y: return "Y";
    case Region::D: return "D";
  }
  return "?";
}

Address MemoryLayout::begin(Region r) const {
  switch (r) {
    case Region::R: return 0;
    case Region::X: return r_size;
    case Region::Y: return r_size + x_size;
    case Region::D: return r_size + x_size + y_size;
  }
  return 0;
}

std::uint32_t MemoryLayout::size(Region r) const {
  switch (r) {
    case Region::R: return r_size;
    case Region::X: return x_size;
    case Region::Y: return y_size;
    case Region::D: return d_size;
  }
  return 0;
}

Region MemoryLayout::region_of(Address a) const {
  for (auto r : {Region::R, Region::X, Region::Y, Region::D})
    if (a >= begin(r) && a < end(r)) return r;
  throw Error("address " + std::to_string(a) + " outside memory of " + std::to_string(total()) + " words");
}

void MemoryLayout::validate() const {
  if (word_width < 1 || word_width > 32) throw Error("word width must be in [1, 32]");
  if (r_size < 1) throw Error("region R needs at least the accumulator");
  if (y_size < 1) throw Error("region Y must not be empty");
}

std::vector<Word> RamProgram::initial_d() const {
  std::vector<Word> d(layout.d_size, 0);
  auto base = layout.begin(Region::D);
  for (auto& [addr, v] : data) d[addr - base] = v;
  return d;
}

std::string RamProgram::symbol_at(Address a) const {
  if (a == layout.accumulator()) return "r";
  for (auto& [name, addr] : symbols)
    if (addr == a) return name;
  return "@" + std::to_string(a);
}

RamProgram parse_asm(std::string_view source, const MemoryLayout& layout) {
  layout.validate();
  RamProgram prog;
  prog.layout = layout;

  std::vector<PendingInstruction> pending;
  std::map<std::string, std::size_t> label_lines;
  std::uint32_t next_x = 0, next_y = 0, next_d = 0;
  std::size_t line_no = 0;

  auto alloc = [&](Region region, std::uint32_t& next, const Token& name, std::size_t ln) {
    std::string key(name.text);
    if (!is_identifier(name.text)) throw ParseError(ln, name.column, "invalid symbol name '" + key + "'");
    if (key == "r") throw ParseError(ln, name.column, "'r' names the accumulator");
    if (prog.symbols.count(key)) throw ParseError(ln, name.column, "duplicate symbol '" + key + "'");
    if (next >= layout.size(region))
      throw ParseError(ln, name.column,
                       "region " + std::string(region_name(region)) + " is full (" +
                           std::to_string(layout.size(region)) + " words)");
    Address a = layout.begin(region) + next++;
    prog.symbols[key] = a;
    return a;
  };

  std::size_t pos = 0;
  while (pos <= source.size()) {
    auto nl = source.find('\n', pos);
    if (nl == std::string_view::npos) nl = source.size();
    std::string_view line = source.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (auto semi = line.find(';'); semi != std::string_view::npos) line = line.substr(0, semi);
    auto toks = tokenize(line);
    if (toks.empty()) continue;

    std::size_t k = 0;
    if (toks[0].text.front() == '.') {
      auto dir = toks[0].text;
      if (dir == ".data") {
        if (toks.size() != 4 || toks[2].text != "=")
          throw ParseError(line_no, toks[0].column, "expected '.data name = value'");
        auto value = parse_decimal(toks[3].text);
        if (!value) throw ParseError(line_no, toks[3].column, "value must be a decimal integer");
        if (*value > layout.mask())
          throw ParseError(line_no, toks[3].column,
                           "value " + std::string(toks[3].text) + " does not fit a " +
                               std::to_string(layout.word_width) + "-bit word");
        auto a = alloc(Region::D, next_d, toks[1], line_no);
        prog.data[a] = *value;
      } else if (dir == ".input" || dir == ".output") {
        if (toks.size() != 2) throw ParseError(line_no, toks[0].column, "expected '" + std::string(dir) + " name'");
        if (dir == ".input")
          alloc(Region::X, next_x, toks[1], line_no);
        else
          alloc(Region::Y, next_y, toks[1], line_no);
      } else {
        throw ParseError(line_no, toks[0].column, "unknown directive '" + std::string(dir) + "'");
      }
      continue;
    }

    if (toks[0].text.back() == ':') {
      auto name = toks[0].text.substr(0, toks[0].text.size() - 1);
      if (!is_identifier(name)) throw ParseError(line_no, toks[0].column, "invalid label '" + std::string(name) + "'");
      std::string key(name);
      if (prog.labels.count(key)) throw ParseError(line_no, toks[0].column, "duplicate label '" + key + "'");
      prog.labels[key] = static_cast<std::uint32_t>(pending.size());
      label_lines[key] = line_no;
      k = 1;
      if (toks.size() == 1) continue;
    }

    auto op = opcode_from_name(toks[k].text);
    if (!op) throw ParseError(line_no, toks[k].column, "unknown opcode '" + std::string(toks[k].text) + "'");
    PendingInstruction pi{*op, std::nullopt, line_no, toks[k].column};
    std::size_t expected = (*op == Opcode::Halt) ? 0 : 1;
    if (toks.size() - k - 1 != expected)
      throw ParseError(line_no, toks[k].column,
                       std::string(opcode_name(*op)) + (expected ? " takes one operand" : " takes no operand"));
    if (expected) pi.operand = toks[k + 1];
    pending.push_back(pi);
  }

  // Second pass: resolve operands now that every label and directive is known.
  for (auto& pi : pending) {
    Instruction inst{pi.op, 0};
    if (is_jump(pi.op)) {
      std::string name(pi.operand->text);
      auto it = prog.labels.find(name);
      if (it == prog.labels.end()) throw ParseError(pi.line, pi.operand->column, "unresolved label '" + name + "'");
      if (it->second >= pending.size())
        throw ParseError(pi.line, pi.operand->column, "label '" + name + "' does not precede an instruction");
      inst.operand = it->second;
    } else if (is_memory_op(pi.op)) {
      auto text = pi.operand->text;
      Address a;
      if (auto num = parse_decimal(text)) {
        if (*num >= layout.total())
          throw ParseError(pi.line, pi.operand->column,
                           "address " + std::string(text) + " outside memory of " + std::to_string(layout.total()) +
                               " words");
        a = static_cast<Address>(*num);
      } else if (text == "r") {
        a = layout.accumulator();
      } else if (is_identifier(text)) {
        std::string key(text);
        auto it = prog.symbols.find(key);
        a = it != prog.symbols.end() ? it->second : alloc(Region::D, next_d, *pi.operand, pi.line);
      } else {
        throw ParseError(pi.line, pi.operand->column, "invalid operand '" + std::string(text) + "'");
      }
      if (pi.op == Opcode::Store && layout.region_of(a) == Region::X)
        throw ParseError(pi.line, pi.operand->column,
                         "region violation: STORE to read-only X location '" + std::string(text) + "'");
      inst.operand = a;
    }
    prog.instructions.push_back(inst);
  }

  if (std::none_of(prog.instructions.begin(), prog.instructions.end(),
                   [](const Instruction& i) { return i.op == Opcode::Halt; }))
    throw ParseError(line_no, 1, "no HALT");
  return prog;
}

std::string to_json(const RamProgram& prog) {
  nlohmann::json j;
  j["layout"] = {{"word_width", prog.layout.word_width},
                 {"r", prog.layout.r_size},
                 {"x", prog.layout.x_size},
                 {"y", prog.layout.y_size},
                 {"d", prog.layout.d_size}};
  auto& insts = j["instructions"] = nlohmann::json::array();
  for (auto& i : prog.instructions) insts.push_back({opcode_name(i.op), i.operand});
  j["labels"] = prog.labels;
  j["symbols"] = prog.symbols;
  auto& data = j["data"] = nlohmann::json::array();
  for (auto& [a, v] : prog.data) data.push_back({a, v});
  return j.dump(2);
}

RamProgram program_from_json(std::string_view text) {
  try {
    auto j = nlohmann::json::parse(text);
    RamProgram prog;
    auto& l = j.at("layout");
    prog.layout = {l.at("word_width").get<unsigned>(), l.at("r").get<std::uint32_t>(),
                   l.at("x").get<std::uint32_t>(), l.at("y").get<std::uint32_t>(), l.at("d").get<std::uint32_t>()};
    prog.layout.validate();
    for (auto& i : j.at("instructions")) {
      auto op = opcode_from_name(i.at(0).get<std::string>());
      if (!op) throw FormatError("unknown opcode in program file");
      prog.instructions.push_back({*op, i.at(1).get<std::uint32_t>()});
    }
    prog.labels = j.at("labels").get<std::map<std::string, std::uint32_t>>();
    prog.symbols = j.at("symbols").get<std::map<std::string, Address>>();
    for (auto& d : j.at("data")) prog.data[d.at(0).get<Address>()] = d.at(1).get<Word>();
    for (auto& i : prog.instructions) {
      if (is_jump(i.op) && i.operand >= prog.instructions.size()) throw FormatError("jump target out of range");
      if (is_memory_op(i.op) && !prog.layout.contains(i.operand)) throw FormatError("operand out of range");
    }
    return prog;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed program file: ") + e.what());
  }
}

Word alu(Opcode op, Word acc, Word operand, unsigned width) {
  Word mask = width >= 64 ? ~Word{0} : (Word{1} << width) - 1;
  acc &= mask;
  operand &= mask;
  switch (op) {
    case Opcode::Add: return (acc + operand) & mask;
    case Opcode::Sub: return (acc - operand) & mask;
    case Opcode::Mul: return (acc * operand) & mask;
    case Opcode::Div: return operand == 0 ? mask : acc / operand;
    default: throw Error("alu: not an arithmetic opcode");
  }
}

InterpretResult interpret(const RamProgram& prog, const std::vector<Word>& x_init, const std::vector<Word>& d_init,
                          std::uint64_t max_steps) {
  const auto& L = prog.layout;
  if (x_init.size() != L.x_size) throw Error("X image has " + std::to_string(x_init.size()) + " words, expected " + std::to_string(L.x_size));
  if (d_init.size() != L.d_size) throw Error("D image has " + std::to_string(d_init.size()) + " words, expected " + std::to_string(L.d_size));

  std::vector<Word> mem(L.total(), 0);
  std::vector<bool> written(L.total(), false);
  auto mask = L.mask();
  for (std::uint32_t i = 0; i < L.x_size; ++i) mem[L.begin(Region::X) + i] = x_init[i] & mask;
  for (std::uint32_t i = 0; i < L.d_size; ++i) mem[L.begin(Region::D) + i] = d_init[i] & mask;

  InterpretResult res;
  auto& trace = res.trace;
  std::uint32_t pc = 0;
  const Address r = L.accumulator();

  while (true) {
    if (pc >= prog.instructions.size()) throw ExecError("fell off the end of the program at index " + std::to_string(pc));
    if (trace.instruction_count >= max_steps)
      throw ExecError("step budget of " + std::to_string(max_steps) + " instructions exceeded");
    const auto inst = prog.instructions[pc];
    TraceStep step{pc, {}};

    auto read = [&](Address a) {
      auto region = L.region_of(a);
      if ((region == Region::R || region == Region::Y) && !written[a])
        throw ExecError("read of never-written " + std::string(region_name(region)) + " location '" +
                        prog.symbol_at(a) + "' at index " + std::to_string(pc));
      step.accesses.push_back({a, Access::Read, mem[a]});
      return mem[a];
    };
    auto write = [&](Address a, Word v) {
      mem[a] = v & mask;
      written[a] = true;
      step.accesses.push_back({a, Access::Write, mem[a]});
    };

    std::uint32_t next = pc + 1;
    bool halt = false;
    switch (inst.op) {
      case Opcode::Load: write(r, read(inst.operand)); break;
      case Opcode::Store: write(inst.operand, read(r)); break;
      case Opcode::Add:
      case Opcode::Sub:
      case Opcode::Mul:
      case Opcode::Div: {
        auto acc = read(r);
        auto v = read(inst.operand);
        write(r, alu(inst.op, acc, v, L.word_width));
        break;
      }
      case Opcode::Jmp: next = inst.operand; break;
      case Opcode::Jmpz:
        if (read(r) == 0) next = inst.operand;
        break;
      case Opcode::Jmpn:
        if ((read(r) >> (L.word_width - 1)) & 1) next = inst.operand;
        break;
      case Opcode::Halt: halt = true; break;
    }
    trace.steps.push_back(std::move(step));
    ++trace.instruction_count;
    if (halt) break;
    pc = next;
  }

  res.y.assign(mem.begin() + L.begin(Region::Y), mem.begin() + L.end(Region::Y));
  res.d.assign(mem.begin() + L.begin(Region::D), mem.begin() + L.end(Region::D));
  return res;
}

TraceCost trace_cost(const ExecutionTrace& trace) {
  TraceCost c;
  c.instructions = trace.instruction_count;
  for (auto& s : trace.steps)
    for (auto& a : s.accesses)
      if (a.kind == Access::Write) ++c.writes;
  return c;
}

}  // namespace vram::isa
