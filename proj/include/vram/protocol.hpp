#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vram/codec.hpp"
#include "vram/compiler.hpp"
#include "vram/executor.hpp"

namespace vram::protocol {

enum class MsgKind : std::uint8_t {
  PrepOutsourcer = 1,
  PrepEvaluator = 2,
  Input = 3,
  Result = 4,
  Accept = 5,
  Reject = 6,
};
std::string_view msg_kind_name(MsgKind k);

struct Message {
  MsgKind kind = MsgKind::Input;
  std::uint64_t computation = 0;
  std::uint64_t sequence = 0;
  Bytes payload;

  /// [magic "VRMP"][kind][computation id][sequence][u32 payload length][payload]
  Bytes encode() const;
  static Message decode(ByteView b);
  static constexpr std::size_t kHeaderSize = 25;
  friend bool operator==(const Message&, const Message&) = default;
};

/// Raised for transport problems, never for verification outcomes.
class TransportError : public IoError {
 public:
  using IoError::IoError;
};

class Channel {
 public:
  virtual ~Channel() = default;
  virtual void send(const Message& m) = 0;
  /// Blocks for the next message; nullopt once the peer has closed.
  virtual std::optional<Message> recv() = 0;
  virtual void close() = 0;
};

enum class Transport : std::uint8_t { InProcess, Socket };

/// Two connected endpoints.
std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_link(Transport t);

// ---- payloads ---------------------------------------------------------------

struct OutsourcerPrep {
  std::string prf_descriptor;
  compiler::Params params;
  crypto::Seed s_k{};
  std::uint64_t t_start = 0;
  std::uint64_t tau = 0;
  std::optional<std::vector<crypto::Stamp>> d_times;  // final write times of D

  Bytes encode() const;
  static OutsourcerPrep decode(ByteView b);
};

struct EvaluatorPrep {
  compiler::VramProgram program;
  std::optional<codec::EncodedRegion> d_v;  // absent: keep the stored D_v
  codec::EncodedRegion y0_v;

  Bytes encode() const;
  static EvaluatorPrep decode(ByteView b);
};

// ---- roles ------------------------------------------------------------------

/// Builds VRAM programs. One key pair per chain; a chain threads tau and the
/// write-time map from one program to the next.
class Constructor {
 public:
  explicit Constructor(crypto::Drbg& rng) : rng_(rng) {}

  /// Begins a new chain with fresh seeds.
  void start_chain(const compiler::Params& p);
  /// Begins a chain with given seeds; refuses seeds used by an earlier chain.
  void start_chain(const compiler::KeyMaterial& km);

  struct Prepared {
    std::uint64_t computation = 0;
    Message to_outsourcer;
    Message to_evaluator;
    compiler::CompileResult compiled;
  };

  Prepared prepare(const isa::RamProgram& prog, const compiler::CompileOptions& opts = {});

  const compiler::KeyMaterial& keys() const;
  std::uint64_t tau() const { return tau_; }
  const std::optional<compiler::CompilerState>& state() const { return state_; }

 private:
  crypto::Drbg& rng_;
  std::optional<compiler::KeyMaterial> km_;
  std::set<crypto::Seed> used_seeds_;
  std::optional<compiler::CompilerState> state_;
  std::uint64_t tau_ = 0;
  std::uint64_t seq_ = 0;
};

struct Verification {
  bool accepted = false;
  std::vector<isa::Word> y;
  std::string reason;        // rejection cause
  std::uint64_t prf_input = 0;
  std::uint64_t prf_verify = 0;
};

class Outsourcer {
 public:
  void receive(const Message& prep);
  Message input(std::uint64_t computation, const std::vector<isa::Word>& x);
  /// Checks a RESULT (or an evaluator refusal) and returns ACCEPT or REJECT.
  Message conclude(const Message& result, Verification& out);

  std::uint64_t last_input_prf_calls() const { return input_calls_; }

 private:
  std::map<std::uint64_t, OutsourcerPrep> preps_;
  std::uint64_t input_calls_ = 0;
  std::uint64_t seq_ = 0;
};

/// Evaluator behaviours used by the tamper suites.
struct EvaluatorFaults {
  executor::ExecOptions exec;
  bool replay_previous_result = false;  // answer with the Y_v of the previous computation
};

class Evaluator {
 public:
  void receive(const Message& prep);
  /// Executes on an INPUT message and returns RESULT, or REJECT when the
  /// computation is unknown or was already executed.
  Message execute(const Message& input, const EvaluatorFaults& faults = {});
  void notify(const Message& verdict);

  const std::optional<executor::ExecResult>& last_exec() const { return last_; }
  const std::vector<Message>& verdicts() const { return verdicts_; }

 private:
  std::map<std::uint64_t, EvaluatorPrep> programs_;
  std::optional<codec::EncodedRegion> d_v_;
  std::set<std::uint64_t> executed_;
  std::optional<codec::EncodedRegion> previous_y_;
  std::optional<executor::ExecResult> last_;
  std::vector<Message> verdicts_;
  std::uint64_t seq_ = 0;
};

/// One computation over real channels: preprocessing to both parties, then
/// INPUT, RESULT and the verdict. The evaluator runs on its own thread.
struct SessionStep {
  isa::RamProgram program;
  std::vector<isa::Word> x;
  EvaluatorFaults faults;
};

struct SessionResult {
  std::vector<Verification> verdicts;
  std::vector<compiler::CompileResult> compiled;
  std::vector<executor::Report> reports;
};

SessionResult run_session(Transport t, crypto::Drbg& rng, const compiler::Params& params,
                          const std::vector<SessionStep>& steps);

// ---- direct pipeline --------------------------------------------------------

/// Compile, encode, execute and verify in one call, without messaging.
struct LocalRun {
  compiler::CompileResult compiled;
  executor::ExecResult exec;
  codec::Verdict verdict;
};

LocalRun run_local(const isa::RamProgram& prog, const std::vector<isa::Word>& x, const compiler::Params& params,
                   std::uint64_t seed, const executor::ExecOptions& opts = {});

}  // namespace vram::protocol
