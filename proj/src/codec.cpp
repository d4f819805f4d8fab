#include "vram/codec.hpp"

namespace vram::codec {

namespace {

constexpr std::uint64_t kRegionMagic = 0x314745524d415256ull;  // "VRAMREG1"

Key key_for(const crypto::Seed& s_k, Address a, unsigned bit, unsigned w, Stamp s, unsigned b, unsigned k) {
  return crypto::prf_mem(s_k, a * w + bit, s, b, k);
}

}  // namespace

bool EncodedRegion::complete() const {
  for (auto& k : keys)
    if (!k) return false;
  return true;
}

Bytes EncodedRegion::serialize() const {
  ByteWriter w;
  w.u64(kRegionMagic);
  w.u64(static_cast<std::uint64_t>(region));
  w.u64(begin);
  w.u64(count);
  w.u64(word_width);
  w.u64(key_bits);
  const Bytes zero(key_bits / 8, 0);
  for (auto& k : keys) w.raw(k ? ByteView(k->bytes()) : ByteView(zero));
  return w.take();
}

EncodedRegion EncodedRegion::deserialize(ByteView b) {
  ByteReader r(b);
  if (r.u64() != kRegionMagic) throw FormatError("not an encoded region file (bad magic)");
  EncodedRegion e;
  auto id = r.u64();
  if (id > 3) throw FormatError("bad region id");
  e.region = static_cast<Region>(id);
  auto begin = r.u64(), count = r.u64(), w = r.u64(), k = r.u64();
  if (begin > 0xffffffffu || count > 0xffffffffu || w < 1 || w > 32 || !crypto::valid_key_bits(static_cast<unsigned>(k)))
    throw FormatError("encoded region header out of range");
  e.begin = static_cast<Address>(begin);
  e.count = static_cast<std::uint32_t>(count);
  e.word_width = static_cast<unsigned>(w);
  e.key_bits = static_cast<unsigned>(k);
  const std::size_t n = std::size_t{e.count} * e.word_width;
  if (r.remaining() != n * (e.key_bits / 8)) throw FormatError("encoded region size does not match its header");
  e.keys.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto v = r.raw(e.key_bits / 8);
    bool zero = true;
    for (auto c : v) zero = zero && c == 0;
    if (zero)
      e.keys.emplace_back();
    else
      e.keys.emplace_back(Key(Bytes(v.begin(), v.end())));
  }
  return e;
}

EncodedMemory::EncodedMemory(const isa::MemoryLayout& layout, unsigned key_bits)
    : layout_(layout), key_bits_(key_bits), slots_(std::size_t{layout.total()} * layout.word_width) {
  layout.validate();
  if (!crypto::valid_key_bits(key_bits)) throw Error("key length must be 128 or 256 bits");
}

std::size_t EncodedMemory::slot(Address a, unsigned bit) const {
  if (!layout_.contains(a) || bit >= layout_.word_width) throw ExecError("memory slot out of range");
  return std::size_t{a} * layout_.word_width + bit;
}

const std::optional<Key>& EncodedMemory::get(Address a, unsigned bit) const { return slots_[slot(a, bit)]; }
void EncodedMemory::set(Address a, unsigned bit, Key k) { slots_[slot(a, bit)] = std::move(k); }
void EncodedMemory::clear(Address a, unsigned bit) { slots_[slot(a, bit)].reset(); }

void EncodedMemory::load(const EncodedRegion& r) {
  if (r.word_width != layout_.word_width || r.key_bits != key_bits_ || r.begin != layout_.begin(r.region) ||
      r.count != layout_.size(r.region) || r.keys.size() != std::size_t{r.count} * r.word_width)
    throw FormatError("encoded " + std::string(isa::region_name(r.region)) + " region does not fit the memory layout");
  for (std::size_t i = 0; i < r.keys.size(); ++i) slots_[std::size_t{r.begin} * layout_.word_width + i] = r.keys[i];
}

EncodedRegion EncodedMemory::extract(Region region) const {
  EncodedRegion r;
  r.region = region;
  r.begin = layout_.begin(region);
  r.count = layout_.size(region);
  r.word_width = layout_.word_width;
  r.key_bits = key_bits_;
  auto first = slots_.begin() + std::size_t{r.begin} * layout_.word_width;
  r.keys.assign(first, first + std::size_t{r.count} * layout_.word_width);
  return r;
}

EncodedRegion encode_region(const std::vector<Word>& words, Region region, const crypto::Seed& s_k,
                            const std::vector<Stamp>& stamps, const isa::MemoryLayout& layout, unsigned key_bits) {
  const auto n = layout.size(region);
  if (words.size() != n)
    throw Error(std::string(isa::region_name(region)) + " expects " + std::to_string(n) + " words, got " +
                std::to_string(words.size()));
  if (!stamps.empty() && stamps.size() != n) throw Error("stamp map size does not match the region");
  EncodedRegion r;
  r.region = region;
  r.begin = layout.begin(region);
  r.count = n;
  r.word_width = layout.word_width;
  r.key_bits = key_bits;
  r.keys.reserve(std::size_t{n} * layout.word_width);
  for (std::uint32_t i = 0; i < n; ++i) {
    if (words[i] & ~layout.mask())
      throw Error("value " + std::to_string(words[i]) + " does not fit in " + std::to_string(layout.word_width) +
                  " bits");
    const Stamp s = stamps.empty() ? crypto::init_at(0) : stamps[i];
    for (unsigned bit = 0; bit < layout.word_width; ++bit)
      r.keys.emplace_back(key_for(s_k, r.begin + i, bit, layout.word_width, s, (words[i] >> bit) & 1, key_bits));
  }
  return r;
}

EncodedRegion a_input(const std::vector<Word>& x, const crypto::Seed& s_k, std::uint64_t t_start,
                      const isa::MemoryLayout& layout, unsigned key_bits) {
  return encode_region(x, Region::X, s_k, std::vector<Stamp>(layout.x_size, crypto::init_at(t_start)), layout,
                       key_bits);
}

std::vector<Stamp> region_stamps(const std::vector<Stamp>& t_w, Region region, const isa::MemoryLayout& layout) {
  if (t_w.size() != layout.total()) throw Error("write-time map does not cover the memory layout");
  return {t_w.begin() + layout.begin(region), t_w.begin() + layout.end(region)};
}

Verdict a_verify(const EncodedRegion& y_v, const crypto::Seed& s_k, std::uint64_t tau,
                 const isa::MemoryLayout& layout, unsigned key_bits) {
  if (y_v.region != Region::Y || y_v.begin != layout.begin(Region::Y) || y_v.count != layout.y_size ||
      y_v.word_width != layout.word_width || y_v.key_bits != key_bits ||
      y_v.keys.size() != std::size_t{y_v.count} * y_v.word_width)
    throw FormatError("encoded Y region does not match the parameters");
  Verdict v;
  v.y.assign(y_v.count, 0);
  const Stamp s = crypto::arrive_at(tau);
  for (std::uint32_t i = 0; i < y_v.count; ++i) {
    const Address a = y_v.begin + i;
    for (unsigned bit = 0; bit < y_v.word_width; ++bit) {
      auto k0 = key_for(s_k, a, bit, y_v.word_width, s, 0, key_bits);
      auto k1 = key_for(s_k, a, bit, y_v.word_width, s, 1, key_bits);
      const auto& got = y_v.at(a, bit);
      if (got && *got == k1) {
        v.y[i] |= Word{1} << bit;
      } else if (!got || *got != k0) {
        if (!v.offending) v.offending = Location{a, bit};
      }
    }
  }
  v.accepted = !v.offending;
  if (!v.accepted) v.y.clear();
  return v;
}

std::vector<Word> decode_region(const EncodedRegion& r, const crypto::Seed& s_k, const std::vector<Stamp>& stamps) {
  if (stamps.size() != r.count) throw Error("stamp map size does not match the region");
  std::vector<Word> out(r.count, 0);
  for (std::uint32_t i = 0; i < r.count; ++i)
    for (unsigned bit = 0; bit < r.word_width; ++bit) {
      const Address a = r.begin + i;
      const auto& got = r.at(a, bit);
      if (got && *got == key_for(s_k, a, bit, r.word_width, stamps[i], 1, r.key_bits))
        out[i] |= Word{1} << bit;
      else if (!got || *got != key_for(s_k, a, bit, r.word_width, stamps[i], 0, r.key_bits))
        throw FormatError("key at word " + std::to_string(a) + " bit " + std::to_string(bit) +
                          " matches neither value");
    }
  return out;
}

}  // namespace vram::codec
