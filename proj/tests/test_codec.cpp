#include <gtest/gtest.h>

#include <filesystem>

#include "vram/codec.hpp"

using namespace vram;
using namespace vram::codec;
using crypto::arrive_at;
using crypto::init_at;
using crypto::prf_mem;

namespace {

crypto::Seed seed_of(std::uint64_t v) {
  auto rng = crypto::Drbg::from_u64(v);
  return rng.seed();
}

// Y region keyed as the evaluator would leave it at the end: arrival at tau.
EncodedRegion y_at(const std::vector<Word>& y, const crypto::Seed& s, std::uint64_t tau, const isa::MemoryLayout& L) {
  std::vector<Stamp> st(L.size(Region::Y), arrive_at(tau));
  return encode_region(y, Region::Y, s, st, L, 128);
}

}  // namespace

TEST(Input, KeysAreTheMemoryPrfAtStartTime) {
  isa::MemoryLayout L;
  auto s = seed_of(1);
  std::vector<Word> x = {3, 0, 255, 128};
  auto xv = a_input(x, s, 12, L, 128);
  EXPECT_EQ(xv.region, Region::X);
  EXPECT_EQ(xv.begin, L.begin(Region::X));
  EXPECT_EQ(xv.count, 4u);
  ASSERT_TRUE(xv.complete());
  for (unsigned i = 0; i < x.size(); ++i)
    for (unsigned b = 0; b < L.word_width; ++b)
      EXPECT_EQ(*xv.at(xv.begin + i, b), prf_mem(s, (xv.begin + i) * L.word_width + b, init_at(12), (x[i] >> b) & 1, 128));
  EXPECT_EQ(decode_region(xv, s, std::vector<Stamp>(4, init_at(12))), x);
  // The input must fill X exactly.
  EXPECT_THROW(a_input({7}, s, 0, L, 128), Error);
  EXPECT_THROW(a_input({1, 2, 3, 4, 5}, s, 0, L, 128), Error);
}

TEST(Input, PrfCallCountIsXTimesW) {
  isa::MemoryLayout L;
  crypto::reset_prf_calls();
  a_input({1, 2, 3, 4}, seed_of(2), 0, L, 128);
  EXPECT_EQ(crypto::prf_calls(), L.size(Region::X) * L.word_width);
}

TEST(Region, EncodeDecodeRoundTrip) {
  isa::MemoryLayout L;
  auto s = seed_of(3);
  std::vector<Word> d(L.size(Region::D));
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<Word>(i * 37 % 256);
  std::vector<Stamp> st;
  for (std::size_t i = 0; i < d.size(); ++i) st.push_back(i % 2 ? crypto::write_at(i) : init_at(0));
  auto dv = encode_region(d, Region::D, s, st, L, 128);
  EXPECT_EQ(decode_region(dv, s, st), d);
  // The wrong stamps do not decode.
  auto wrong = st;
  wrong[1] = arrive_at(1);
  EXPECT_THROW(decode_region(dv, s, wrong), FormatError);
  // Fresh-region default.
  auto fresh = encode_region(d, Region::D, s, {}, L, 128);
  EXPECT_EQ(decode_region(fresh, s, std::vector<Stamp>(d.size(), init_at(0))), d);
}

TEST(Region, EmptyRegionIsValid) {
  isa::MemoryLayout L;
  L.d_size = 0;
  auto s = seed_of(4);
  auto dv = encode_region({}, Region::D, s, {}, L, 128);
  EXPECT_EQ(dv.count, 0u);
  EXPECT_TRUE(dv.complete());
  EXPECT_EQ(EncodedRegion::deserialize(dv.serialize()).count, 0u);
}

TEST(Region, SerializeRoundTripKeepsEmptySlots) {
  isa::MemoryLayout L;
  auto s = seed_of(5);
  auto yv = y_at({1, 2}, s, 9, L);
  yv.keys[3].reset();
  auto bytes = yv.serialize();
  auto back = EncodedRegion::deserialize(bytes);
  EXPECT_EQ(back.region, Region::Y);
  EXPECT_EQ(back.keys, yv.keys);
  EXPECT_FALSE(back.complete());
  EXPECT_EQ(bytes.size(), 6 * 8 + 2 * 8 * 16u);
  auto bad = bytes;
  bad[0] ^= 0xff;
  EXPECT_THROW(EncodedRegion::deserialize(bad), FormatError);
  EXPECT_THROW(EncodedRegion::deserialize(ByteView(bytes).first(bytes.size() - 3)), FormatError);

  auto path = std::filesystem::temp_directory_path() / "vram_codec_test.yv";
  write_file(path.string(), bytes);
  EXPECT_EQ(EncodedRegion::deserialize(read_file(path.string())).keys, yv.keys);
  std::filesystem::remove(path);
}

TEST(Memory, LoadExtractAndClear) {
  isa::MemoryLayout L;
  auto s = seed_of(6);
  EncodedMemory m(L, 128);
  auto xv = a_input({9, 8, 7, 6}, s, 0, L, 128);
  m.load(xv);
  EXPECT_EQ(m.extract(Region::X).keys, xv.keys);
  EXPECT_FALSE(m.get(0, 0).has_value());
  m.clear(L.begin(Region::X), 0);
  EXPECT_FALSE(m.extract(Region::X).complete());
  isa::MemoryLayout other;
  other.word_width = 4;
  EXPECT_THROW(m.load(a_input({1, 2, 3, 4}, s, 0, other, 128)), Error);
}

TEST(Verify, AcceptsHonestOutput) {
  isa::MemoryLayout L;
  auto s = seed_of(7);
  auto v = a_verify(y_at({6, 200}, s, 10, L), s, 10, L, 128);
  ASSERT_TRUE(v.accepted);
  EXPECT_EQ(v.y, (std::vector<Word>{6, 200}));
  EXPECT_FALSE(v.offending);
}

TEST(Verify, RejectsBitFlipAtTheFlippedBit) {
  isa::MemoryLayout L;
  auto s = seed_of(8);
  auto yv = y_at({6, 200}, s, 10, L);
  auto k = yv.keys[L.word_width + 3]->bytes();
  k[0] ^= 1;
  yv.keys[L.word_width + 3] = Key(k);
  auto v = a_verify(yv, s, 10, L, 128);
  EXPECT_FALSE(v.accepted);
  ASSERT_TRUE(v.offending);
  EXPECT_EQ(*v.offending, (Location{static_cast<Address>(yv.begin + 1), 3}));
}

TEST(Verify, RejectsKeysOfAnotherTime) {
  isa::MemoryLayout L;
  auto s = seed_of(9);
  EXPECT_FALSE(a_verify(y_at({6, 0}, s, 9, L), s, 10, L, 128).accepted);
  EXPECT_FALSE(a_verify(y_at({6, 0}, s, 11, L), s, 10, L, 128).accepted);
  // Keys under a different seed.
  EXPECT_FALSE(a_verify(y_at({6, 0}, seed_of(10), 10, L), s, 10, L, 128).accepted);
  // Missing key and wrong region.
  auto yv = y_at({6, 0}, s, 10, L);
  yv.keys[0].reset();
  EXPECT_FALSE(a_verify(yv, s, 10, L, 128).accepted);
  // A region of the wrong shape is a format error rather than a verdict.
  EXPECT_THROW(a_verify(a_input({1, 2, 3, 4}, s, 10, L, 128), s, 10, L, 128), FormatError);
}

// Constant work: the same count for accepting and rejecting inputs.
TEST(Verify, AlwaysTwoPrfCallsPerBit) {
  isa::MemoryLayout L;
  auto s = seed_of(11);
  const auto expected = 2u * L.size(Region::Y) * L.word_width;
  auto good = y_at({1, 2}, s, 5, L);
  auto bad = y_at({1, 2}, s, 4, L);
  crypto::reset_prf_calls();
  a_verify(good, s, 5, L, 128);
  EXPECT_EQ(crypto::prf_calls(), expected);
  crypto::reset_prf_calls();
  a_verify(bad, s, 5, L, 128);
  EXPECT_EQ(crypto::prf_calls(), expected);
}

TEST(Verify, RoundTripProperty) {
  isa::MemoryLayout L;
  L.word_width = 5;
  auto rng = crypto::Drbg::from_u64(12);
  auto s = rng.seed();
  for (int i = 0; i < 200; ++i) {
    std::vector<Word> y = {static_cast<Word>(rng.uniform(32)), static_cast<Word>(rng.uniform(32))};
    auto tau = rng.uniform(1000);
    auto v = a_verify(y_at(y, s, tau, L), s, tau, L, 128);
    ASSERT_TRUE(v.accepted);
    EXPECT_EQ(v.y, y);
  }
}
