#include "vram/crypto.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/rand.h>

#include <algorithm>
#include <cstring>
#include <memory>

namespace vram::crypto {

namespace {

constexpr std::size_t kNonce = 12;
constexpr std::size_t kTag = 16;

constexpr std::uint8_t kTagMemBase = 0x00;  // + Phase
constexpr std::uint8_t kTagBranch = 0x10;
constexpr std::uint8_t kTagSeal2 = 0x20;

thread_local std::uint64_t g_prf_calls = 0;

std::array<std::uint8_t, 32> hmac_sha256(ByteView key, ByteView msg) {
  std::array<std::uint8_t, 32> out{};
  unsigned len = 0;
  if (!HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), msg.data(), msg.size(), out.data(), &len))
    throw Error("HMAC-SHA256 failed");
  return out;
}

Key truncate(const std::array<std::uint8_t, 32>& h, unsigned bits) {
  return Key(Bytes(h.begin(), h.begin() + bits / 8));
}

struct CtxDeleter {
  void operator()(EVP_CIPHER_CTX* c) const { EVP_CIPHER_CTX_free(c); }
};

EVP_CIPHER_CTX* cipher_ctx() {
  thread_local std::unique_ptr<EVP_CIPHER_CTX, CtxDeleter> ctx(EVP_CIPHER_CTX_new());
  return ctx.get();
}

const EVP_CIPHER* gcm_for(const Key& k) {
  switch (k.bits()) {
    case 128: return EVP_aes_128_gcm();
    case 256: return EVP_aes_256_gcm();
    default: throw Error("unsupported key length " + std::to_string(k.bits()));
  }
}

}  // namespace

bool valid_key_bits(unsigned k) { return k == 128 || k == 256; }

Key::Key(Bytes bits) : bytes_(std::move(bits)) {
  if (!valid_key_bits(static_cast<unsigned>(bytes_.size() * 8)))
    throw Error("key must be 128 or 256 bits, got " + std::to_string(bytes_.size() * 8));
}

Drbg::Drbg(const Seed& seed) : key_(seed) {}

Drbg Drbg::from_u64(std::uint64_t seed) {
  Seed s{};
  for (int i = 0; i < 8; ++i) s[i] = static_cast<std::uint8_t>(seed >> (8 * i));
  return Drbg(s);
}

Drbg Drbg::from_os() {
  Seed s{};
  if (RAND_bytes(s.data(), static_cast<int>(s.size())) != 1) throw Error("OS randomness unavailable");
  return Drbg(s);
}

void Drbg::refill() {
  std::uint8_t ctr[8];
  for (int i = 0; i < 8; ++i) ctr[i] = static_cast<std::uint8_t>(counter_ >> (8 * i));
  ++counter_;
  block_ = hmac_sha256(key_, ByteView(ctr, 8));
  used_ = 0;
}

void Drbg::fill(std::span<std::uint8_t> out) {
  for (auto& b : out) {
    if (used_ == block_.size()) refill();
    b = block_[used_++];
  }
}

Bytes Drbg::bytes(std::size_t n) {
  Bytes b(n);
  fill(b);
  return b;
}

Seed Drbg::seed() {
  Seed s{};
  fill(s);
  return s;
}

std::uint64_t Drbg::next_u64() {
  std::uint8_t b[8];
  fill(b);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[i]} << (8 * i);
  return v;
}

std::uint64_t Drbg::uniform(std::uint64_t bound) {
  if (bound == 0) throw Error("uniform: empty range");
  // Rejection sampling keeps the distribution exact.
  std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t v;
  do v = next_u64();
  while (v >= limit);
  return v % bound;
}

Key prf_mem(const Seed& s_k, std::uint32_t bit_address, Stamp stamp, unsigned b, unsigned key_bits) {
  ++g_prf_calls;
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(kTagMemBase + static_cast<std::uint8_t>(stamp.phase)));
  w.u32(bit_address);
  w.u64(stamp.t);
  w.u8(static_cast<std::uint8_t>(b));
  return truncate(hmac_sha256(s_k, w.bytes()), key_bits);
}

Key prf_branch(const Seed& s_br, std::uint64_t t, unsigned br, unsigned key_bits) {
  ++g_prf_calls;
  ByteWriter w;
  w.u8(kTagBranch);
  w.u32(0);
  w.u64(t);
  w.u8(static_cast<std::uint8_t>(br));
  return truncate(hmac_sha256(s_br, w.bytes()), key_bits);
}

std::uint64_t prf_calls() { return g_prf_calls; }
void reset_prf_calls() { g_prf_calls = 0; }

Bytes seal(const Key& k, ByteView payload, Drbg& rng) {
  std::uint8_t nonce[kNonce];
  rng.fill(nonce);
  auto* ctx = cipher_ctx();
  Bytes out(4 + kNonce + payload.size() + kTag);
  auto body_len = static_cast<std::uint32_t>(kNonce + payload.size() + kTag);
  for (int i = 0; i < 4; ++i) out[i] = static_cast<std::uint8_t>(body_len >> (8 * i));
  std::memcpy(out.data() + 4, nonce, kNonce);
  int len = 0;
  bool ok = EVP_EncryptInit_ex(ctx, gcm_for(k), nullptr, k.bytes().data(), nonce) == 1 &&
            EVP_EncryptUpdate(ctx, out.data() + 4 + kNonce, &len, payload.data(), static_cast<int>(payload.size())) == 1 &&
            EVP_EncryptFinal_ex(ctx, out.data() + 4 + kNonce + len, &len) == 1 &&
            EVP_CIPHER_CTX_ctrl(ctx, EVP_CTRL_GCM_GET_TAG, kTag, out.data() + 4 + kNonce + payload.size()) == 1;
  if (!ok) throw Error("AES-GCM encryption failed");
  return out;
}

std::optional<Bytes> open(const Key& k, ByteView ct) {
  if (k.empty() || ct.size() < 4 + kNonce + kTag) return std::nullopt;
  std::uint32_t body_len = 0;
  for (int i = 0; i < 4; ++i) body_len |= std::uint32_t{ct[i]} << (8 * i);
  if (body_len != ct.size() - 4) return std::nullopt;
  const auto* nonce = ct.data() + 4;
  std::size_t n = ct.size() - 4 - kNonce - kTag;
  const auto* body = nonce + kNonce;
  Bytes tag(body + n, body + n + kTag);
  Bytes out(n);
  auto* ctx = cipher_ctx();
  int len = 0;
  if (EVP_DecryptInit_ex(ctx, gcm_for(k), nullptr, k.bytes().data(), nonce) != 1) return std::nullopt;
  if (EVP_DecryptUpdate(ctx, out.data(), &len, body, static_cast<int>(n)) != 1) return std::nullopt;
  if (EVP_CIPHER_CTX_ctrl(ctx, EVP_CTRL_GCM_SET_TAG, kTag, tag.data()) != 1) return std::nullopt;
  if (EVP_DecryptFinal_ex(ctx, out.data() + len, &len) != 1) return std::nullopt;
  return out;
}

Key derive2(const Key& k1, const Key& k2) {
  if (k1.bits() != k2.bits()) throw Error("derive2: key lengths differ");
  ByteWriter w;
  w.u8(kTagSeal2);
  w.raw(k2.bytes());
  return truncate(hmac_sha256(k1.bytes(), w.bytes()), k1.bits());
}

Bytes seal2(const Key& k1, const Key& k2, ByteView payload, Drbg& rng) { return seal(derive2(k1, k2), payload, rng); }

std::optional<Bytes> open2(const Key& k1, const Key& k2, ByteView ct) {
  if (k1.empty() || k2.empty() || k1.bits() != k2.bits()) return std::nullopt;
  return open(derive2(k1, k2), ct);
}

Ett ett_build(std::span<const EttRow> rows, Drbg& rng) {
  if (rows.empty() || rows.size() > 4) throw Error("ETT needs 1..4 rows");
  Ett ett;
  for (auto& row : rows) {
    switch (row.keys.size()) {
      case 1: ett.rows.push_back(seal(row.keys[0], row.payload, rng)); break;
      case 2: ett.rows.push_back(seal2(row.keys[0], row.keys[1], row.payload, rng)); break;
      default: throw Error("ETT rows take one or two keys");
    }
  }
  // Fisher-Yates with the injected generator.
  for (std::size_t i = ett.rows.size(); i > 1; --i) std::swap(ett.rows[i - 1], ett.rows[rng.uniform(i)]);
  return ett;
}

std::optional<Bytes> ett_open(const Ett& ett, std::span<const Key> keys) {
  std::optional<Key> derived;
  if (keys.size() == 2) {
    if (keys[0].empty() || keys[1].empty() || keys[0].bits() != keys[1].bits()) return std::nullopt;
    derived = derive2(keys[0], keys[1]);
  } else if (keys.size() != 1) {
    return std::nullopt;
  }
  const Key& k = derived ? *derived : keys[0];
  for (auto& row : ett.rows)
    if (auto p = open(k, row)) return p;
  return std::nullopt;
}

}  // namespace vram::crypto
