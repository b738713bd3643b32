#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "quamba/archive.hpp"
#include "quamba/error.hpp"
#include "quamba/int4.hpp"
#include "quamba/rng.hpp"
#include "quamba/tensor.hpp"

using namespace quamba;

namespace {

// Start of the blob section.
std::size_t blob_start(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= std::uint64_t{bytes[8 + i]} << (8 * i);
  return 16 + len;
}

nlohmann::json manifest_of(const std::vector<std::uint8_t>& bytes) {
  const std::size_t start = blob_start(bytes);
  return nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + static_cast<long>(start));
}

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("quamba_test_" + name)).string();
}

}  // namespace

TEST(Archive, ZerosRoundTripThroughFile) {
  Archive a;
  a.add("w", Tensor::zeros({2, 2}));
  const std::string path = tmp_path("zeros.qmb");
  archive_write(a, path);
  const Archive b = archive_read(path);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_TRUE(bit_equal(b.tensor("w"), a.tensor("w")));
  std::filesystem::remove(path);
}

TEST(Archive, F32IsLittleEndianIeee) {
  Archive a;
  a.add("x", Tensor({1}, {1.5f}));
  const auto bytes = archive_encode(a);
  const auto m = manifest_of(bytes);
  const std::size_t off = blob_start(bytes) + m["entries"][0]["offset"].get<std::size_t>();
  // 1.5 = 0x3FC00000
  EXPECT_EQ(bytes[off + 0], 0x00);
  EXPECT_EQ(bytes[off + 1], 0x00);
  EXPECT_EQ(bytes[off + 2], 0xC0);
  EXPECT_EQ(bytes[off + 3], 0x3F);
  EXPECT_EQ(m["entries"][0]["dtype"], "f32");
}

TEST(Archive, U4PackedNibbleOrder) {
  const std::vector<std::int8_t> vals{3, -2};
  Archive a;
  a.add("q", Int4Tensor{{2}, pack_int4(vals)});
  const auto bytes = archive_encode(a);
  const auto m = manifest_of(bytes);
  ASSERT_EQ(m["entries"][0]["length"], 1);
  EXPECT_EQ(bytes[blob_start(bytes)], 0xE3);
}

TEST(Archive, EmptyArchive) {
  const auto bytes = archive_encode(Archive{});
  EXPECT_TRUE(archive_decode(bytes).empty());
}

TEST(Archive, TruncatedBlob) {
  Archive a;
  a.add("x", Tensor({4}, {1, 2, 3, 4}));
  auto bytes = archive_encode(a);
  bytes.resize(bytes.size() - 3);
  try {
    archive_decode(bytes);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("blob shorter than manifest extent"), std::string::npos);
  }
}

TEST(Archive, ThreeTensorRoundTrip) {
  Archive a;
  a.add("a", oracle::random_tensor({3, 5}, 1));
  a.add("b", Int8Tensor{{2, 2}, {-128, 0, 5, 127}});
  a.add_meta("c", {{"k", 1}, {"s", "v"}});
  const Archive b = archive_decode(archive_encode(a));
  EXPECT_TRUE(bit_equal(b.tensor("a"), a.tensor("a")));
  EXPECT_EQ(b.int8("b").data, a.int8("b").data);
  EXPECT_EQ(b.meta("c"), a.meta("c"));
}

TEST(Archive, RandomManifestsRoundTripBitExact) {
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < 50; ++trial) {
    Archive a;
    const int n = 1 + static_cast<int>(gen() % 6);
    for (int i = 0; i < n; ++i) {
      const std::string name = "e" + std::to_string(gen() % 1000) + "_" + std::to_string(i);
      const std::size_t r = 1 + gen() % 4, c = 2 * (1 + gen() % 4);
      switch (gen() % 4) {
        case 0: {
          Tensor t({r, c});
          for (auto& v : t.data()) {
            std::uint32_t bits = static_cast<std::uint32_t>(gen());
            float f;
            std::memcpy(&f, &bits, 4);
            v = std::isfinite(f) ? f : -0.0f;
          }
          a.add(name, std::move(t));
          break;
        }
        case 1: {
          Int8Tensor q{{r, c}, std::vector<std::int8_t>(r * c)};
          for (auto& v : q.data) v = static_cast<std::int8_t>(gen());
          a.add(name, std::move(q));
          break;
        }
        case 2: {
          std::vector<std::int8_t> v(r * c);
          for (auto& x : v) x = static_cast<std::int8_t>(static_cast<int>(gen() % 16) - 8);
          a.add(name, Int4Tensor{{r, c}, pack_int4(v)});
          break;
        }
        default:
          a.add_meta(name, {{"x", static_cast<int>(gen() % 100)}});
      }
    }
    const auto bytes = archive_encode(a);
    const Archive b = archive_decode(bytes);
    EXPECT_EQ(archive_encode(b), bytes);
  }
}

TEST(Archive, RejectsCollisionsAndNonFinite) {
  Archive a;
  a.add("x", Tensor({1}, {1.0f}));
  EXPECT_THROW(a.add("x", Tensor({1}, {2.0f})), Error);
  EXPECT_THROW(a.add("y", Tensor({1}, {std::nanf("")})), Error);
  EXPECT_THROW(a.add("z", Int4Tensor{{3}, {0, 0}}), Error);
}

TEST(Archive, RejectsCorruptManifest) {
  Archive a;
  a.add("x", Tensor({2}, {1, 2}));
  auto bytes = archive_encode(a);
  bytes[0] = 'X';
  EXPECT_THROW(archive_decode(bytes), Error);
  EXPECT_THROW(archive_decode(std::vector<std::uint8_t>(4, 0)), Error);
}

TEST(Int4, PackUnpackIdentity) {
  std::vector<std::int8_t> all;
  for (int v = -8; v <= 7; ++v) all.push_back(static_cast<std::int8_t>(v));
  all.push_back(5);  // odd count
  const auto packed = pack_int4(all);
  EXPECT_EQ(packed.size(), int4_packed_size(all.size()));
  EXPECT_EQ(unpack_int4(packed, all.size()), all);
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(int4_at(packed, i), all[i]);
}

TEST(Matmul, Examples) {
  const Tensor eye = Tensor::from_rows({{1, 0}, {0, 1}});
  const Tensor m = Tensor::from_rows({{1, 2}, {3, 4}});
  EXPECT_TRUE(bit_equal(matmul(eye, m), m));
  const Tensor r = matmul(m, Tensor::from_rows({{5}, {6}}));
  EXPECT_EQ(r.shape(), (Shape{2, 1}));
  EXPECT_EQ(r[0], 17.0f);
  EXPECT_EQ(r[1], 39.0f);
  const Tensor e = matmul(Tensor({1, 0}), Tensor({0, 1}));
  EXPECT_EQ(e.shape(), (Shape{1, 1}));
  EXPECT_EQ(e[0], 0.0f);
  EXPECT_THROW(matmul(m, Tensor({3, 1})), Error);
}

TEST(Matmul, MatchesNaiveOracleExactly) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Tensor a = oracle::random_tensor({7, 13}, 2 * s);
    const Tensor b = oracle::random_tensor({13, 5}, 2 * s + 1);
    EXPECT_TRUE(bit_equal(matmul(a, b), oracle::naive_matmul(a, b)));
    EXPECT_TRUE(bit_equal(linear(a, b.transposed()), oracle::naive_matmul(a, b)));
  }
}

TEST(Rng, Deterministic) {
  // splitmix64 reference outputs for a state starting at 0.
  EXPECT_EQ(splitmix64(0), 0xE220A8397B1DCDAFULL);
  Rng r(0);
  EXPECT_EQ(r.next_u64(), 0xE220A8397B1DCDAFULL);
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  Rng c = Rng::derive(1, 2, 3), d = Rng::derive(1, 2, 3), e = Rng::derive(1, 3, 2);
  EXPECT_EQ(c.next_u64(), d.next_u64());
  EXPECT_NE(Rng::derive(1, 2, 3).next_u64(), e.next_u64());
  auto p = Rng(5).permutation(10);
  std::sort(p.begin(), p.end());
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(p[i], i);
}
