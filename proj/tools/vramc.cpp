// vramc: command-line front end for the VRAM toolkit.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "vram/codec.hpp"
#include "vram/compiler.hpp"
#include "vram/executor.hpp"
#include "vram/generator.hpp"
#include "vram/protocol.hpp"

using namespace vram;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kCompile = 2, kExec = 3, kReject = 4, kIo = 5 };

struct VerifyReject : Error {
  using Error::Error;
};

struct Config {
  unsigned word_width = 8;
  unsigned key_bits = 128;
  std::uint64_t max_cost = 256;
  std::string layout;  // "R,X,Y,D"
  std::optional<std::uint64_t> seed;

  compiler::Params params() const {
    compiler::Params p;
    p.key_bits = key_bits;
    p.max_cost = max_cost;
    p.layout.word_width = word_width;
    if (!layout.empty()) {
      std::vector<std::uint32_t> v;
      std::stringstream ss(layout);
      std::string part;
      while (std::getline(ss, part, ',')) v.push_back(static_cast<std::uint32_t>(std::stoul(part)));
      if (v.size() != 4) throw CLI::ValidationError("--layout", "expects four sizes R,X,Y,D");
      p.layout.r_size = v[0];
      p.layout.x_size = v[1];
      p.layout.y_size = v[2];
      p.layout.d_size = v[3];
    }
    p.validate();
    return p;
  }

  crypto::Drbg rng() const { return seed ? crypto::Drbg::from_u64(*seed) : crypto::Drbg::from_os(); }
};

std::string read_text(const std::string& path) {
  auto b = read_file(path);
  return std::string(b.begin(), b.end());
}

void write_text(const std::string& path, const std::string& s) {
  write_file(path, ByteView(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

isa::RamProgram load_program(const std::string& path, const isa::MemoryLayout& layout) {
  auto text = read_text(path);
  if (ends_with(path, ".json")) return isa::program_from_json(text);
  return isa::parse_asm(text, layout);
}

std::vector<isa::Word> parse_words(const std::string& s, std::size_t n) {
  std::vector<isa::Word> v;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ','))
    if (!part.empty()) v.push_back(std::stoull(part));
  if (v.size() > n) throw CLI::ValidationError("--x", "more values than X words");
  v.resize(n, 0);
  return v;
}

std::string join(const std::vector<isa::Word>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + std::to_string(v[i]);
  return s;
}

// ---- constructor secrets file ----------------------------------------------------

json stamps_json(const std::vector<crypto::Stamp>& t_w) {
  json a = json::array();
  for (auto s : t_w) a.push_back({s.t, static_cast<int>(s.phase)});
  return a;
}

std::vector<crypto::Stamp> stamps_from(const json& a) {
  std::vector<crypto::Stamp> v;
  for (auto& e : a) v.push_back({e.at(0).get<std::uint64_t>(), static_cast<crypto::Phase>(e.at(1).get<int>())});
  return v;
}

crypto::Seed seed_from_hex(const std::string& h) {
  crypto::Seed s{};
  if (h.size() != s.size() * 2) throw FormatError("seed must be 64 hex digits");
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<std::uint8_t>(std::stoul(h.substr(2 * i, 2), nullptr, 16));
  return s;
}

struct Secrets {
  compiler::KeyMaterial km;
  compiler::CompilerState state;
  std::uint64_t t_start = 0, tau = 0;
};

void save_secrets(const std::string& path, const Secrets& s) {
  const auto& p = s.km.params;
  json j = {{"s_k", to_hex(s.km.s_k)},
            {"s_br", to_hex(s.km.s_br)},
            {"key_bits", p.key_bits},
            {"max_cost", p.max_cost},
            {"layout", {p.layout.word_width, p.layout.r_size, p.layout.x_size, p.layout.y_size, p.layout.d_size}},
            {"t_start", s.t_start},
            {"tau", s.tau},
            {"t_w", stamps_json(s.state.t_w)}};
  write_text(path, j.dump(2) + "\n");
}

Secrets load_secrets(const std::string& path) {
  try {
    auto j = json::parse(read_text(path));
    Secrets s;
    s.km.s_k = seed_from_hex(j.at("s_k"));
    s.km.s_br = seed_from_hex(j.at("s_br"));
    auto& p = s.km.params;
    p.key_bits = j.at("key_bits");
    p.max_cost = j.at("max_cost");
    auto l = j.at("layout");
    p.layout = {l.at(0), l.at(1), l.at(2), l.at(3), l.at(4)};
    p.validate();
    s.t_start = j.at("t_start");
    s.tau = j.at("tau");
    s.state.t_w = stamps_from(j.at("t_w"));
    s.state.t = s.state.tau_prev = s.tau;
    s.state.t_start = s.t_start;
    return s;
  } catch (const json::exception& e) {
    throw FormatError("bad key file '" + path + "': " + e.what());
  }
}

// ---- subcommands -----------------------------------------------------------------

int cmd_assemble(const Config& cfg, const std::string& in, const std::string& out) {
  auto prog = isa::parse_asm(read_text(in), cfg.params().layout);
  write_text(out, isa::to_json(prog) + "\n");
  std::cout << "assembled " << prog.instructions.size() << " instructions\n";
  return kOk;
}

int cmd_compile(const Config& cfg, const std::string& in, const std::string& out, const std::string& keys,
                const std::string& chain) {
  auto rng = cfg.rng();
  Secrets s;
  std::optional<compiler::CompilerState> prev;
  std::uint64_t tau_prev = 0;
  if (!chain.empty()) {
    auto c = load_secrets(chain);
    s.km = c.km;
    prev = c.state;
    tau_prev = c.tau;
  } else {
    s.km = compiler::KeyMaterial::fresh(cfg.params(), rng);
  }
  auto prog = load_program(in, s.km.params.layout);
  auto cr = compiler::a_prog(prog, tau_prev, s.km, rng, prev ? &*prev : nullptr);
  write_file(out, cr.program.serialize());
  s.state = cr.final_state;
  s.t_start = cr.t_start;
  s.tau = cr.tau;
  save_secrets(keys, s);
  std::cout << "elements " << cr.program.elements.size() << ", t_start " << cr.t_start << ", tau " << cr.tau
            << ", HALT sites " << cr.halt_sites << ", truncated paths " << cr.truncated_paths << "\n";
  return kOk;
}

int cmd_encode(const std::string& keys, const std::string& region, const std::string& values,
               const std::string& program, const std::string& out) {
  auto s = load_secrets(keys);
  const auto& L = s.km.params.layout;
  const auto K = s.km.params.key_bits;
  codec::EncodedRegion r;
  if (region == "x") {
    r = codec::a_input(parse_words(values, L.x_size), s.km.s_k, s.t_start, L, K);
  } else if (region == "y") {
    r = codec::encode_region(std::vector<isa::Word>(L.y_size, 0), isa::Region::Y, s.km.s_k,
                             std::vector<crypto::Stamp>(L.y_size, crypto::init_at(s.t_start)), L, K);
  } else {
    if (program.empty()) throw CLI::ValidationError("--program", "required for the D region");
    auto prog = load_program(program, L);
    r = codec::encode_region(prog.initial_d(), isa::Region::D, s.km.s_k, {}, L, K);
  }
  write_file(out, r.serialize());
  return kOk;
}

int cmd_execute(const std::string& prog_path, const std::string& x, const std::string& d, const std::string& y0,
                const std::string& out, const std::string& d_out, const std::string& report,
                executor::Tamper tamper, std::uint64_t target) {
  auto pv = compiler::VramProgram::deserialize(read_file(prog_path));
  executor::ExecOptions opts{tamper, target, 0};
  auto res = executor::a_exec(pv, codec::EncodedRegion::deserialize(read_file(x)),
                              codec::EncodedRegion::deserialize(read_file(d)),
                              codec::EncodedRegion::deserialize(read_file(y0)), opts);
  if (!report.empty()) write_text(report, executor::exec_report(res.report));
  if (!d_out.empty()) write_file(d_out, res.d_v.serialize());
  write_file(out, res.y_v.serialize());
  std::cout << "evaluated " << res.report.total() << " elements (I " << res.report.count(compiler::Kind::I) << ", B "
            << res.report.count(compiler::Kind::B) << ", T " << res.report.count(compiler::Kind::T) << ")\n";
  if (!res.ok()) throw ExecError(std::string(executor::outcome_name(res.outcome)) + ": " + res.detail);
  return kOk;
}

int cmd_verify(const std::string& keys, const std::string& yv) {
  auto s = load_secrets(keys);
  auto v = codec::a_verify(codec::EncodedRegion::deserialize(read_file(yv)), s.km.s_k, s.tau, s.km.params.layout,
                           s.km.params.key_bits);
  if (!v.accepted)
    throw VerifyReject("rejected: key at word " + std::to_string(v.offending->address) + " bit " +
                       std::to_string(v.offending->bit) + " is not a valid output key");
  std::cout << join(v.y) << "\n";
  return kOk;
}

int cmd_run(const Config& cfg, const std::string& in, const std::string& x, executor::Tamper tamper,
            std::uint64_t target) {
  auto p = cfg.params();
  auto prog = load_program(in, p.layout);
  auto run = protocol::run_local(prog, parse_words(x, p.layout.x_size), p, cfg.seed.value_or(0), {tamper, target, 0});
  if (!run.exec.ok() && tamper == executor::Tamper::None)
    throw ExecError(std::string(executor::outcome_name(run.exec.outcome)) + ": " + run.exec.detail);
  if (!run.verdict.accepted)
    throw VerifyReject("rejected: key at word " + std::to_string(run.verdict.offending->address) + " bit " +
                       std::to_string(run.verdict.offending->bit) + " is not a valid output key");
  std::cout << join(run.verdict.y) << "\n";
  return kOk;
}

int cmd_protocol(const Config& cfg, const std::vector<std::string>& programs, const std::vector<std::string>& xs,
                 const std::string& transport, executor::Tamper tamper, std::uint64_t target) {
  auto p = cfg.params();
  auto rng = cfg.rng();
  std::vector<protocol::SessionStep> steps;
  for (std::size_t i = 0; i < programs.size(); ++i) {
    protocol::SessionStep s;
    s.program = load_program(programs[i], p.layout);
    s.x = parse_words(i < xs.size() ? xs[i] : "", p.layout.x_size);
    s.faults.exec = {tamper, target, 0};
    steps.push_back(std::move(s));
  }
  auto t = transport == "socket" ? protocol::Transport::Socket : protocol::Transport::InProcess;
  auto res = protocol::run_session(t, rng, p, steps);
  int rc = kOk;
  for (std::size_t i = 0; i < res.verdicts.size(); ++i) {
    const auto& v = res.verdicts[i];
    std::cout << "computation " << i << ": ";
    if (v.accepted) {
      std::cout << "accepted " << join(v.y);
    } else {
      std::cout << "cheat detected (" << v.reason << ")";
      rc = kReject;
    }
    std::cout << " [outsourcer PRF calls: input " << v.prf_input << ", verify " << v.prf_verify << "]\n";
  }
  return rc;
}

int cmd_difftest(const Config& cfg, unsigned trials, unsigned tamper_trials) {
  gen::GenConfig gc;
  gc.layout = cfg.params().layout;
  auto rng = crypto::Drbg::from_u64(cfg.seed.value_or(1));
  unsigned mismatches = 0, false_accepts = 0;
  std::uint64_t evaluated = 0, oracle = 0;
  for (unsigned i = 0; i < trials; ++i) {
    auto g = gen::generate(rng, gc);
    auto x = gen::random_inputs(rng, g, gc);
    auto p = cfg.params();
    p.max_cost = g.max_cost;
    auto ref = isa::interpret(g.program, x, g.program.initial_d(), g.max_cost);
    auto run = protocol::run_local(g.program, x, p, rng.next_u64());
    evaluated += run.exec.report.total();
    oracle += ref.trace.instruction_count;
    if (!run.verdict.accepted || run.verdict.y != ref.y) {
      ++mismatches;
      std::cout << "mismatch in trial " << i << "\n" << g.source;
    }
    for (unsigned k = 0; k < tamper_trials; ++k) {
      auto mode = static_cast<executor::Tamper>(1 + rng.uniform(3));
      executor::ExecOptions opts{mode, rng.uniform(std::max<std::uint64_t>(1, run.exec.report.total())),
                                 static_cast<unsigned>(rng.uniform(1024))};
      auto bad = protocol::run_local(g.program, x, p, rng.next_u64(), opts);
      if (bad.verdict.accepted && bad.verdict.y != ref.y) ++false_accepts;
    }
  }
  std::cout << "trials " << trials << ", mismatches " << mismatches << ", tamper acceptances " << false_accepts;
  if (oracle) std::cout << ", evaluated/oracle ratio " << static_cast<double>(evaluated) / static_cast<double>(oracle);
  std::cout << "\n";
  return mismatches || false_accepts ? kExec : kOk;
}

executor::Tamper parse_tamper(const std::string& s) {
  if (s.empty() || s == "none") return executor::Tamper::None;
  if (s == "flip-output") return executor::Tamper::FlipOutput;
  if (s == "skip-element") return executor::Tamper::SkipElement;
  return executor::Tamper::WrongBranch;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vramc: compile, run and verify verifiable RAM programs"};
  app.require_subcommand(1);
  Config cfg;
  app.add_option("--word-width", cfg.word_width, "bits per memory word (1-32)")->check(CLI::Range(1, 32));
  app.add_option("--key-bits", cfg.key_bits, "key length K")->check(CLI::IsMember({128, 256}));
  app.add_option("--max-cost", cfg.max_cost, "MAX_cost path budget")->check(CLI::PositiveNumber);
  app.add_option("--layout", cfg.layout, "region sizes R,X,Y,D");
  app.add_option("--seed", cfg.seed, "seed for reproducible randomness");
  std::string tamper_s;
  std::uint64_t tamper_target = 0;
  app.add_option("--tamper", tamper_s, "evaluator misbehaviour")
      ->check(CLI::IsMember({"none", "flip-output", "skip-element", "wrong-branch"}));
  app.add_option("--tamper-target", tamper_target, "index of the element or branch to tamper with");

  std::string in, out, keys, chain, region, values, program, x, d, y0, d_out, report, transport = "inproc";
  std::vector<std::string> programs, xs;
  unsigned trials = 100, tamper_trials = 0;

  auto* assemble = app.add_subcommand("assemble", "assemble a program to JSON");
  assemble->add_option("input", in)->required();
  assemble->add_option("-o,--output", out)->required();

  auto* compile = app.add_subcommand("compile", "build a VRAM program and its constructor key file");
  compile->add_option("input", in, ".asm or assembled .json")->required();
  compile->add_option("-o,--output", out, ".vramprog file")->required();
  compile->add_option("--keys", keys, "constructor key file to write")->required();
  compile->add_option("--chain", chain, "key file of the previous program in a chain");

  auto* encode = app.add_subcommand("encode", "encode a memory region (x: A_INPUT, d: initial D, y: initial Y)");
  encode->add_option("--keys", keys)->required();
  encode->add_option("--region", region)->required()->check(CLI::IsMember({"x", "y", "d"}));
  encode->add_option("--values", values, "comma-separated X words");
  encode->add_option("--program", program, "program whose .data initialises D");
  encode->add_option("-o,--output", out)->required();

  auto* execute = app.add_subcommand("execute", "evaluate a VRAM program (A_EXEC)");
  execute->add_option("program", in)->required();
  execute->add_option("--x", x)->required();
  execute->add_option("--d", d)->required();
  execute->add_option("--y0", y0)->required();
  execute->add_option("-o,--output", out, ".yv file")->required();
  execute->add_option("--d-out", d_out, "write the mutated D region here");
  execute->add_option("--report", report, "cost report (JSON lines)");

  auto* verify = app.add_subcommand("verify", "check an encoded result (A_VERIFY)");
  verify->add_option("result", in)->required();
  verify->add_option("--keys", keys)->required();

  auto* run = app.add_subcommand("run", "compile, encode, execute and verify in one step");
  run->add_option("input", in)->required();
  run->add_option("--x", x, "comma-separated X words");

  auto* proto = app.add_subcommand("protocol", "run the three-party protocol over a chain of programs");
  proto->add_option("programs", programs)->required();
  proto->add_option("--x", xs, "X words per program, comma-separated; repeat per program");
  proto->add_option("--transport", transport)->check(CLI::IsMember({"inproc", "socket"}));

  auto* diff = app.add_subcommand("difftest", "random programs against the reference interpreter");
  diff->add_option("--trials", trials);
  diff->add_option("--tamper-trials", tamper_trials, "tampered executions per program");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  auto tamper = parse_tamper(tamper_s);
  try {
    if (*assemble) return cmd_assemble(cfg, in, out);
    if (*compile) return cmd_compile(cfg, in, out, keys, chain);
    if (*encode) return cmd_encode(keys, region, values, program, out);
    if (*execute) return cmd_execute(in, x, d, y0, out, d_out, report, tamper, tamper_target);
    if (*verify) return cmd_verify(keys, in);
    if (*run) return cmd_run(cfg, in, x, tamper, tamper_target);
    if (*proto) return cmd_protocol(cfg, programs, xs, transport, tamper, tamper_target);
    if (*diff) return cmd_difftest(cfg, trials, tamper_trials);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ParseError& e) {
    std::cerr << "assembly error: " << e.what() << "\n";
    return kCompile;
  } catch (const CompileError& e) {
    std::cerr << "compile error: " << e.what() << "\n";
    return kCompile;
  } catch (const ExecError& e) {
    std::cerr << "execution failed: " << e.what() << "\n";
    return kExec;
  } catch (const VerifyReject& e) {
    std::cerr << e.what() << "\n";
    return kReject;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
