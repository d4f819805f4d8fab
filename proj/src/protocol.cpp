#include "vram/protocol.hpp"

#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <thread>

namespace vram::protocol {

namespace {

constexpr std::uint8_t kMagic[4] = {'V', 'R', 'M', 'P'};

void put_stamp(ByteWriter& w, crypto::Stamp s) {
  w.u64(s.t);
  w.u8(static_cast<std::uint8_t>(s.phase));
}

crypto::Stamp get_stamp(ByteReader& r) {
  crypto::Stamp s;
  s.t = r.u64();
  auto p = r.u8();
  if (p < 1 || p > 3) throw FormatError("bad stamp phase");
  s.phase = static_cast<crypto::Phase>(p);
  return s;
}

void put_params(ByteWriter& w, const compiler::Params& p) {
  w.u64(p.key_bits);
  w.u64(p.layout.word_width);
  w.u64(p.layout.r_size);
  w.u64(p.layout.x_size);
  w.u64(p.layout.y_size);
  w.u64(p.layout.d_size);
  w.u64(p.max_cost);
}

compiler::Params get_params(ByteReader& r) {
  compiler::Params p;
  auto u32 = [&] {
    auto v = r.u64();
    if (v > 0xffffffffu) throw FormatError("parameter out of range");
    return static_cast<std::uint32_t>(v);
  };
  p.key_bits = u32();
  p.layout.word_width = u32();
  p.layout.r_size = u32();
  p.layout.x_size = u32();
  p.layout.y_size = u32();
  p.layout.d_size = u32();
  p.max_cost = r.u64();
  try {
    p.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("bad parameters: ") + e.what());
  }
  return p;
}

Bytes string_bytes(const std::string& s) { return Bytes(s.begin(), s.end()); }

std::string bytes_string(const Bytes& b) { return std::string(b.begin(), b.end()); }

std::string descriptor(const compiler::Params& p) {
  return "HMAC-SHA256/truncate-" + std::to_string(p.key_bits) + "/bit-address=word*W+bit/stamp=(t,phase)";
}

// ---- transports -------------------------------------------------------------

struct Queues {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<Bytes> inbox[2];
  bool closed[2] = {false, false};  // closed[s]: side s will send no more
};

class InProcChannel : public Channel {
 public:
  InProcChannel(std::shared_ptr<Queues> q, int side) : q_(std::move(q)), side_(side) {}
  ~InProcChannel() override { close(); }

  void send(const Message& m) override {
    auto bytes = m.encode();
    std::lock_guard lock(q_->mu);
    if (q_->closed[side_]) throw TransportError("send on a closed channel");
    q_->inbox[1 - side_].push_back(std::move(bytes));
    q_->cv.notify_all();
  }

  std::optional<Message> recv() override {
    std::unique_lock lock(q_->mu);
    q_->cv.wait(lock, [&] { return !q_->inbox[side_].empty() || q_->closed[1 - side_]; });
    if (q_->inbox[side_].empty()) return std::nullopt;
    auto bytes = std::move(q_->inbox[side_].front());
    q_->inbox[side_].pop_front();
    return Message::decode(bytes);
  }

  void close() override {
    std::lock_guard lock(q_->mu);
    q_->closed[side_] = true;
    q_->cv.notify_all();
  }

 private:
  std::shared_ptr<Queues> q_;
  int side_;
};

class SocketChannel : public Channel {
 public:
  explicit SocketChannel(int fd) : fd_(fd) {}
  ~SocketChannel() override {
    if (fd_ >= 0) ::close(fd_);
  }

  void send(const Message& m) override {
    auto bytes = m.encode();
    std::size_t off = 0;
    while (off < bytes.size()) {
      auto n = ::send(fd_, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw TransportError(std::string("socket send failed: ") + std::strerror(errno));
      off += static_cast<std::size_t>(n);
    }
  }

  std::optional<Message> recv() override {
    Bytes buf(Message::kHeaderSize);
    if (!read_exact(buf.data(), buf.size(), true)) return std::nullopt;
    std::uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len |= std::uint32_t{buf[21 + i]} << (8 * i);
    buf.resize(Message::kHeaderSize + len);
    if (len > 0) read_exact(buf.data() + Message::kHeaderSize, len, false);
    return Message::decode(buf);
  }

  void close() override {
    if (!closed_) ::shutdown(fd_, SHUT_WR);
    closed_ = true;
  }

 private:
  // False on a clean end of stream before the first byte when allowed.
  bool read_exact(std::uint8_t* p, std::size_t n, bool eof_ok) {
    std::size_t got = 0;
    while (got < n) {
      auto r = ::recv(fd_, p + got, n - got, 0);
      if (r < 0 && errno == EINTR) continue;
      if (r < 0) throw TransportError(std::string("socket receive failed: ") + std::strerror(errno));
      if (r == 0) {
        if (got == 0 && eof_ok) return false;
        throw TransportError("connection closed in the middle of a message");
      }
      got += static_cast<std::size_t>(r);
    }
    return true;
  }

  int fd_;
  bool closed_ = false;
};

}  // namespace

std::string_view msg_kind_name(MsgKind k) {
  switch (k) {
    case MsgKind::PrepOutsourcer: return "PREP_OUTSOURCER";
    case MsgKind::PrepEvaluator: return "PREP_EVALUATOR";
    case MsgKind::Input: return "INPUT";
    case MsgKind::Result: return "RESULT";
    case MsgKind::Accept: return "ACCEPT";
    case MsgKind::Reject: return "REJECT";
  }
  return "?";
}

Bytes Message::encode() const {
  if (payload.size() > 0xffffffffu) throw FormatError("message payload too large");
  ByteWriter w;
  w.raw(kMagic);
  w.u8(static_cast<std::uint8_t>(kind));
  w.u64(computation);
  w.u64(sequence);
  w.u32(static_cast<std::uint32_t>(payload.size()));
  w.raw(payload);
  return w.take();
}

Message Message::decode(ByteView b) {
  ByteReader r(b);
  auto magic = r.raw(4);
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) throw FormatError("bad message magic");
  Message m;
  auto kind = r.u8();
  if (kind < 1 || kind > 6) throw FormatError("unknown message kind " + std::to_string(kind));
  m.kind = static_cast<MsgKind>(kind);
  m.computation = r.u64();
  m.sequence = r.u64();
  auto len = r.u32();
  if (r.remaining() != len) throw FormatError("message length field does not match its payload");
  auto p = r.raw(len);
  m.payload.assign(p.begin(), p.end());
  return m;
}

std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_link(Transport t) {
  if (t == Transport::InProcess) {
    auto q = std::make_shared<Queues>();
    return {std::make_unique<InProcChannel>(q, 0), std::make_unique<InProcChannel>(q, 1)};
  }
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0)
    throw TransportError(std::string("socketpair failed: ") + std::strerror(errno));
  return {std::make_unique<SocketChannel>(fds[0]), std::make_unique<SocketChannel>(fds[1])};
}

// ---- payloads ---------------------------------------------------------------

Bytes OutsourcerPrep::encode() const {
  ByteWriter w;
  w.blob(string_bytes(prf_descriptor));
  put_params(w, params);
  w.raw(s_k);
  w.u64(t_start);
  w.u64(tau);
  w.u8(d_times.has_value());
  if (d_times) {
    w.u64(d_times->size());
    for (auto s : *d_times) put_stamp(w, s);
  }
  return w.take();
}

OutsourcerPrep OutsourcerPrep::decode(ByteView b) {
  ByteReader r(b);
  OutsourcerPrep p;
  p.prf_descriptor = bytes_string(r.blob());
  p.params = get_params(r);
  auto seed = r.raw(p.s_k.size());
  std::copy(seed.begin(), seed.end(), p.s_k.begin());
  p.t_start = r.u64();
  p.tau = r.u64();
  if (r.u8()) {
    auto n = r.u64();
    if (n != p.params.layout.d_size) throw FormatError("D time map does not match the layout");
    std::vector<crypto::Stamp> times;
    for (std::uint64_t i = 0; i < n; ++i) times.push_back(get_stamp(r));
    p.d_times = std::move(times);
  }
  if (!r.done()) throw FormatError("trailing bytes in outsourcer preprocessing");
  return p;
}

Bytes EvaluatorPrep::encode() const {
  ByteWriter w;
  w.blob(program.serialize());
  w.u8(d_v.has_value());
  if (d_v) w.blob(d_v->serialize());
  w.blob(y0_v.serialize());
  return w.take();
}

EvaluatorPrep EvaluatorPrep::decode(ByteView b) {
  ByteReader r(b);
  EvaluatorPrep p;
  p.program = compiler::VramProgram::deserialize(r.blob());
  if (r.u8()) p.d_v = codec::EncodedRegion::deserialize(r.blob());
  p.y0_v = codec::EncodedRegion::deserialize(r.blob());
  if (!r.done()) throw FormatError("trailing bytes in evaluator preprocessing");
  return p;
}

// ---- constructor --------------------------------------------------------------

void Constructor::start_chain(const compiler::Params& p) { start_chain(compiler::KeyMaterial::fresh(p, rng_)); }

void Constructor::start_chain(const compiler::KeyMaterial& km) {
  km.params.validate();
  if (used_seeds_.count(km.s_k) || used_seeds_.count(km.s_br) || km.s_k == km.s_br)
    throw Error("refusing to reuse PRF seeds: every chain needs a fresh key pair");
  used_seeds_.insert(km.s_k);
  used_seeds_.insert(km.s_br);
  km_ = km;
  state_.reset();
  tau_ = 0;
}

const compiler::KeyMaterial& Constructor::keys() const {
  if (!km_) throw Error("no chain started");
  return *km_;
}

Constructor::Prepared Constructor::prepare(const isa::RamProgram& prog, const compiler::CompileOptions& opts) {
  const auto& km = keys();
  Prepared out;
  out.compiled = compiler::a_prog(prog, tau_, km, rng_, state_ ? &*state_ : nullptr, opts);
  out.computation = rng_.next_u64();
  const auto& L = km.params.layout;
  const auto& cr = out.compiled;

  EvaluatorPrep ep;
  ep.program = cr.program;
  if (!state_) {
    auto init = compiler::a_init(0, L);
    ep.d_v = codec::encode_region(prog.initial_d(), isa::Region::D, km.s_k,
                                  codec::region_stamps(init.t_w, isa::Region::D, L), L, km.params.key_bits);
  }
  ep.y0_v = codec::encode_region(std::vector<isa::Word>(L.y_size, 0), isa::Region::Y, km.s_k,
                                 std::vector<crypto::Stamp>(L.y_size, crypto::init_at(cr.t_start)), L,
                                 km.params.key_bits);

  OutsourcerPrep op;
  op.prf_descriptor = descriptor(km.params);
  op.params = km.params;
  op.s_k = km.s_k;
  op.t_start = cr.t_start;
  op.tau = cr.tau;
  op.d_times = codec::region_stamps(cr.final_state.t_w, isa::Region::D, L);

  out.to_outsourcer = {MsgKind::PrepOutsourcer, out.computation, seq_++, op.encode()};
  out.to_evaluator = {MsgKind::PrepEvaluator, out.computation, seq_++, ep.encode()};
  state_ = cr.final_state;
  tau_ = cr.tau;
  return out;
}

// ---- outsourcer ---------------------------------------------------------------

void Outsourcer::receive(const Message& prep) {
  if (prep.kind != MsgKind::PrepOutsourcer) throw FormatError("outsourcer expected PREP_OUTSOURCER");
  preps_[prep.computation] = OutsourcerPrep::decode(prep.payload);
}

Message Outsourcer::input(std::uint64_t computation, const std::vector<isa::Word>& x) {
  auto it = preps_.find(computation);
  if (it == preps_.end()) throw Error("unknown computation " + std::to_string(computation));
  const auto& p = it->second;
  auto before = crypto::prf_calls();
  auto x_v = codec::a_input(x, p.s_k, p.t_start, p.params.layout, p.params.key_bits);
  input_calls_ = crypto::prf_calls() - before;
  return {MsgKind::Input, computation, seq_++, x_v.serialize()};
}

Message Outsourcer::conclude(const Message& result, Verification& out) {
  out = {};
  out.prf_input = input_calls_;
  auto reject = [&](std::string reason) {
    out.reason = std::move(reason);
    ByteWriter w;
    w.blob(string_bytes(out.reason));
    return Message{MsgKind::Reject, result.computation, seq_++, w.take()};
  };
  auto it = preps_.find(result.computation);
  if (it == preps_.end()) return reject("result for an unknown computation");
  const auto p = it->second;
  preps_.erase(it);  // one verdict per computation

  if (result.kind == MsgKind::Reject) {
    ByteReader r(result.payload);
    return reject("evaluator refused: " + bytes_string(r.blob()));
  }
  if (result.kind != MsgKind::Result) return reject("unexpected message " + std::string(msg_kind_name(result.kind)));

  codec::EncodedRegion y_v;
  try {
    ByteReader r(result.payload);
    r.u8();  // evaluator-reported outcome; informative only
    y_v = codec::EncodedRegion::deserialize(r.blob());
  } catch (const FormatError& e) {
    return reject(std::string("malformed result: ") + e.what());
  }

  auto before = crypto::prf_calls();
  codec::Verdict v;
  try {
    v = codec::a_verify(y_v, p.s_k, p.tau, p.params.layout, p.params.key_bits);
  } catch (const FormatError& e) {
    return reject(std::string("malformed result: ") + e.what());
  }
  out.prf_verify = crypto::prf_calls() - before;
  if (!v.accepted)
    return reject("key at word " + std::to_string(v.offending->address) + " bit " +
                  std::to_string(v.offending->bit) + " is not a valid output key");
  out.accepted = true;
  out.y = v.y;
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(v.y.size()));
  for (auto y : v.y) w.u64(y);
  return {MsgKind::Accept, result.computation, seq_++, w.take()};
}

// ---- evaluator ----------------------------------------------------------------

void Evaluator::receive(const Message& prep) {
  if (prep.kind != MsgKind::PrepEvaluator) throw FormatError("evaluator expected PREP_EVALUATOR");
  programs_[prep.computation] = EvaluatorPrep::decode(prep.payload);
}

Message Evaluator::execute(const Message& input, const EvaluatorFaults& faults) {
  auto refuse = [&](const std::string& why) {
    ByteWriter w;
    w.blob(string_bytes(why));
    return Message{MsgKind::Reject, input.computation, seq_++, w.take()};
  };
  if (input.kind != MsgKind::Input) return refuse("expected INPUT");
  if (executed_.count(input.computation)) return refuse("computation id already executed");
  auto it = programs_.find(input.computation);
  if (it == programs_.end()) return refuse("unknown computation id");
  executed_.insert(input.computation);
  const auto prep = std::move(it->second);
  programs_.erase(it);

  if (prep.d_v) d_v_ = prep.d_v;
  if (!d_v_) return refuse("no persistent memory for this chain");
  auto x_v = codec::EncodedRegion::deserialize(input.payload);
  auto res = executor::a_exec(prep.program, x_v, *d_v_, prep.y0_v, faults.exec);
  d_v_ = res.d_v;

  const auto& y = faults.replay_previous_result && previous_y_ ? *previous_y_ : res.y_v;
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(res.outcome));
  w.blob(y.serialize());
  previous_y_ = res.y_v;
  last_ = std::move(res);
  return {MsgKind::Result, input.computation, seq_++, w.take()};
}

void Evaluator::notify(const Message& verdict) { verdicts_.push_back(verdict); }

// ---- session ------------------------------------------------------------------

SessionResult run_session(Transport t, crypto::Drbg& rng, const compiler::Params& params,
                          const std::vector<SessionStep>& steps) {
  Constructor constructor(rng);
  Outsourcer outsourcer;
  Evaluator evaluator;
  constructor.start_chain(params);

  auto [co_a, co_b] = make_link(t);
  auto [ev_a, ev_b] = make_link(t);

  std::mutex faults_mu;
  std::map<std::uint64_t, EvaluatorFaults> faults;
  std::vector<executor::Report> reports;
  std::exception_ptr evaluator_error;

  std::thread worker([&, ch = ev_b.get()] {
    try {
      while (auto m = ch->recv()) {
        switch (m->kind) {
          case MsgKind::PrepEvaluator: evaluator.receive(*m); break;
          case MsgKind::Input: {
            EvaluatorFaults f;
            {
              std::lock_guard lock(faults_mu);
              f = faults[m->computation];
            }
            auto reply = evaluator.execute(*m, f);
            if (evaluator.last_exec()) reports.push_back(evaluator.last_exec()->report);
            ch->send(reply);
            break;
          }
          default: evaluator.notify(*m);
        }
      }
    } catch (...) {
      evaluator_error = std::current_exception();
    }
    ch->close();
  });

  SessionResult out;
  try {
    for (auto& step : steps) {
      auto prep = constructor.prepare(step.program);
      {
        std::lock_guard lock(faults_mu);
        faults[prep.computation] = step.faults;
      }
      co_a->send(prep.to_outsourcer);
      auto to_o = co_b->recv();
      if (!to_o) throw TransportError("outsourcer link closed");
      outsourcer.receive(*to_o);
      ev_a->send(prep.to_evaluator);

      ev_a->send(outsourcer.input(prep.computation, step.x));
      auto result = ev_a->recv();
      if (!result) throw TransportError("evaluator closed the link before answering");
      Verification v;
      ev_a->send(outsourcer.conclude(*result, v));
      out.verdicts.push_back(std::move(v));
      out.compiled.push_back(std::move(prep.compiled));
    }
  } catch (...) {
    ev_a->close();
    worker.join();
    throw;
  }
  ev_a->close();
  worker.join();
  if (evaluator_error) std::rethrow_exception(evaluator_error);
  out.reports = std::move(reports);
  return out;
}

LocalRun run_local(const isa::RamProgram& prog, const std::vector<isa::Word>& x, const compiler::Params& params,
                   std::uint64_t seed, const executor::ExecOptions& opts) {
  auto rng = crypto::Drbg::from_u64(seed);
  auto km = compiler::KeyMaterial::fresh(params, rng);
  const auto& L = params.layout;
  LocalRun run;
  run.compiled = compiler::a_prog(prog, 0, km, rng);
  const auto t0 = run.compiled.t_start;
  auto x_v = codec::a_input(x, km.s_k, t0, L, params.key_bits);
  auto d_v = codec::encode_region(prog.initial_d(), isa::Region::D, km.s_k, {}, L, params.key_bits);
  auto y0 = codec::encode_region(std::vector<isa::Word>(L.y_size, 0), isa::Region::Y, km.s_k,
                                 std::vector<crypto::Stamp>(L.y_size, crypto::init_at(t0)), L, params.key_bits);
  run.exec = executor::a_exec(run.compiled.program, x_v, d_v, y0, opts);
  run.verdict = codec::a_verify(run.exec.y_v, km.s_k, run.compiled.tau, L, params.key_bits);
  return run;
}

}  // namespace vram::protocol
