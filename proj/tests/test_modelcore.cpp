#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "zksplit/modelcore.hpp"

namespace zksplit {
namespace {

ParamVector random_vector(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<std::int64_t> d(-(std::int64_t{1} << 39), std::int64_t{1} << 39);
  RawVector r(static_cast<Eigen::Index>(n));
  for (auto& x : r) x = d(rng);
  return {r, kDefaultFracBits};
}

TEST(Serialize, RoundTripsAndStartsWithHeader) {
  std::mt19937_64 rng(1);
  for (std::size_t n : {0u, 1u, 7u, 1000u}) {
    const auto pv = random_vector(rng, n);
    const auto bytes = serialize(pv);
    ASSERT_EQ(bytes.size(), kSerialHeaderSize + 8 * n);
    const auto hdr = serial_header(n, kDefaultFracBits);
    EXPECT_TRUE(std::equal(hdr.begin(), hdr.end(), bytes.begin()));
    EXPECT_EQ(deserialize(bytes), pv);
  }
}

TEST(Serialize, LittleEndianTwosComplement) {
  RawVector r(2);
  r << -2, 258;
  const auto b = serialize(ParamVector(r, 16));
  const std::vector<std::uint8_t> body(b.begin() + kSerialHeaderSize, b.end());
  const std::vector<std::uint8_t> want = {0xfe, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 2, 1, 0, 0, 0, 0, 0, 0};
  EXPECT_EQ(body, want);
}

TEST(Serialize, MalformedInputThrows) {
  std::mt19937_64 rng(2);
  auto bytes = serialize(random_vector(rng, 4));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize(bad_magic), ShapeError);
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(deserialize(truncated), ShapeError);
  auto bad_version = bytes;
  bad_version[4] = 99;
  EXPECT_THROW(deserialize(bad_version), ShapeError);
}

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(to_hex(sha256(std::string_view(""))), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(to_hex(sha256(std::string_view("abc"))), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Hashes, SensitiveToEveryEntry) {
  std::mt19937_64 rng(3);
  const auto pv = random_vector(rng, 50);
  const auto h = hash_model(pv);
  for (Eigen::Index i = 0; i < 50; ++i) {
    auto q = pv;
    q.raw[i] ^= 1;
    ASSERT_NE(hash_model(q), h);
  }
}

TEST(Update, IsEntrywiseDifference) {
  std::mt19937_64 rng(4);
  const auto a = random_vector(rng, 20), b = random_vector(rng, 20);
  const auto u = make_update(a, b);
  EXPECT_EQ(u.raw, a.raw - b.raw);
  EXPECT_THROW(make_update(a, random_vector(rng, 21)), ShapeError);
}

TEST(Update, SealedHashesCoverModelUpdateAndDct) {
  std::mt19937_64 rng(5);
  Checkpoint c;
  c.model = random_vector(rng, 30);
  c.update = random_vector(rng, 30);
  c.update.raw /= 1 << 20;
  seal_hashes(c);
  EXPECT_EQ(c.model_hash, hash_model(c.model));
  EXPECT_EQ(c.update_hash, hash_model(c.update));
  EXPECT_NE(c.dct_hash, Digest{});
}

TEST(Files, SaveLoad) {
  std::mt19937_64 rng(6);
  const auto pv = random_vector(rng, 100);
  const auto path = std::filesystem::temp_directory_path() / "zksplit_pv_test.bin";
  save_param_vector(pv, path);
  EXPECT_EQ(load_param_vector(path), pv);
  std::filesystem::remove(path);
  EXPECT_THROW(load_param_vector(path), IoError);
}

TEST(ChainBinding, BlindsAreDeterministicCanonicalAndDistinct) {
  ChainBinding a, b;
  a.seed[0] = 1;
  b.seed[0] = 2;
  EXPECT_EQ(a.blind(0, 3), a.blind(0, 3));
  EXPECT_NE(a.blind(0, 3), a.blind(0, 4));
  EXPECT_NE(a.blind(0, 3), a.blind(1, 3));
  EXPECT_NE(a.blind(0, 3), b.blind(0, 3));
  for (std::uint64_t s = 0; s < 200; ++s) ASSERT_LT(a.blind(2, s).value(), Fp::kModulus);
}

TEST(Queue, ValidateChecksPointerAndOrder) {
  QueueState q;
  for (int i = 0; i < 3; ++i) {
    Checkpoint c;
    c.round = i;
    q.checkpoints.push_back(c);
  }
  q.bm_index = 2;
  EXPECT_NO_THROW(q.validate());
  q.bm_index = 3;
  EXPECT_THROW(q.validate(), ProtocolStateError);
  q.bm_index = 0;
  std::swap(q.checkpoints[0], q.checkpoints[2]);
  EXPECT_THROW(q.validate(), ProtocolStateError);
}

}  // namespace
}  // namespace zksplit
