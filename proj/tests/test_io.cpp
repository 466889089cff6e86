#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ahue/io.hpp"
#include "ahue/rng.hpp"
#include "ahue/synth.hpp"

using namespace ahue;
namespace fs = std::filesystem;

namespace {

class IoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ahue_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path dir_;
};

ActivationImage random_image(int w, int h, int n, std::uint64_t seed, bool post_relu = true) {
  ActivationImage img = ActivationImage::zeros(w, h, n, post_relu);
  Rng rng(seed);
  for (float& v : img.data)
    v = static_cast<float>(post_relu ? std::abs(rng.normal()) : rng.normal());
  return img;
}

std::vector<std::uint8_t> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

MemoryStore sample_store(bool with_trees) {
  SynthSpec spec;
  spec.classes = 3;
  spec.per_class = 4;
  spec.width = 8;
  spec.height = 8;
  auto data = synth_generate(spec, 21);
  MemoryStore store(3);
  for (const auto& s : data) store.insert(s.image, s.class_id, s.image_id);
  if (with_trees) {
    TreeConfig cfg;
    cfg.trees = 6;
    cfg.leaf_size = 8;
    cfg.seed = 9;
    store.freeze(cfg);
  } else {
    store.freeze();
  }
  return store;
}

}  // namespace

TEST_F(IoTest, AhueRoundTripIsBitExact) {
  auto img = random_image(7, 7, 1920, 3);
  const auto path = dir_ / "big.ahue";
  write_ahue(img, path);
  auto again = read_ahue(path);
  EXPECT_EQ(again.width, img.width);
  EXPECT_EQ(again.height, img.height);
  EXPECT_EQ(again.channels, img.channels);
  EXPECT_EQ(again.post_relu, img.post_relu);
  EXPECT_EQ(again.data, img.data);

  const auto path2 = dir_ / "big2.ahue";
  write_ahue(again, path2);
  EXPECT_EQ(slurp(path), slurp(path2));  // canonical encoding
}

TEST_F(IoTest, AhueHeaderLayout) {
  auto img = random_image(3, 2, 4, 5);
  const auto path = dir_ / "img.ahue";
  write_ahue(img, path);
  auto bytes = slurp(path);
  ASSERT_EQ(bytes.size(), 21u + 4u * img.data.size());
  EXPECT_EQ(bytes[0], 'A');
  EXPECT_EQ(bytes[1], 'H');
  EXPECT_EQ(bytes[2], 'U');
  EXPECT_EQ(bytes[3], 'E');
  EXPECT_EQ(bytes[4], 1);  // version, little-endian
  EXPECT_EQ(bytes[8], 4);  // N
  EXPECT_EQ(bytes[12], 3); // W
  EXPECT_EQ(bytes[16], 2); // H
  EXPECT_EQ(bytes[20], 1); // post_relu
}

TEST_F(IoTest, AhueRejectsBadMagic) {
  auto img = random_image(3, 3, 2, 7);
  const auto path = dir_ / "img.ahue";
  write_ahue(img, path);
  auto bytes = slurp(path);
  bytes[0] = 'X';
  spit(path, bytes);
  try {
    read_ahue(path);
    FAIL() << "expected BadMagic";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::bad_magic);
    EXPECT_NE(std::string(e.what()).find("offset 0"), std::string::npos);
  }
}

TEST_F(IoTest, AhueRejectsBadVersion) {
  auto img = random_image(3, 3, 2, 7);
  const auto path = dir_ / "img.ahue";
  write_ahue(img, path);
  auto bytes = slurp(path);
  bytes[4] = 9;
  spit(path, bytes);
  try {
    read_ahue(path);
    FAIL() << "expected BadVersion";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::bad_version);
  }
}

TEST_F(IoTest, AhueRejectsTruncationWithOffset) {
  auto img = random_image(5, 5, 3, 9);
  const auto path = dir_ / "img.ahue";
  write_ahue(img, path);
  auto bytes = slurp(path);
  bytes.resize(bytes.size() - 7);  // cut mid-payload
  spit(path, bytes);
  try {
    read_ahue(path);
    FAIL() << "expected Truncated";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::truncated);
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos);
  }
}

TEST_F(IoTest, AhueRejectsZeroChannelImage) {
  ActivationImage img;
  img.width = 2;
  img.height = 2;
  img.channels = 0;
  try {
    write_ahue(img, dir_ / "bad.ahue");
    FAIL() << "expected InvalidDims";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_dims);
  }
}

TEST_F(IoTest, AhixRoundTripPreservesQueries) {
  MemoryStore store = sample_store(true);
  const auto path = dir_ / "index.ahix";
  write_ahix(store, path);
  MemoryStore loaded = read_ahix(path);
  EXPECT_EQ(loaded.size(), store.size());
  EXPECT_EQ(loaded.channels(), store.channels());
  EXPECT_TRUE(loaded.has_forest());

  Rng rng(31);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> v(3);
    double n2 = 0;
    for (auto& x : v) {
      x = std::abs(rng.normal());
      n2 += x * x;
    }
    std::vector<float> q(3);
    for (int i = 0; i < 3; ++i) q[i] = static_cast<float>(v[i] / std::sqrt(n2));
    for (auto mode : {SearchMode::exact, SearchMode::tree}) {
      auto a = store.query_knn(q, 5, {.mode = mode});
      auto b = loaded.query_knn(q, 5, {.mode = mode});
      ASSERT_EQ(a.neighbors.size(), b.neighbors.size());
      for (std::size_t i = 0; i < a.neighbors.size(); ++i) {
        EXPECT_EQ(a.neighbors[i].index, b.neighbors[i].index);
        EXPECT_EQ(a.neighbors[i].distance, b.neighbors[i].distance);
      }
    }
  }
}

TEST_F(IoTest, AhixRebuildsAreByteIdentical) {
  MemoryStore a = sample_store(true);
  MemoryStore b = sample_store(true);
  write_ahix(a, dir_ / "a.ahix");
  write_ahix(b, dir_ / "b.ahix");
  EXPECT_EQ(slurp(dir_ / "a.ahix"), slurp(dir_ / "b.ahix"));

  // Saving a loaded index is also canonical.
  MemoryStore loaded = read_ahix(dir_ / "a.ahix");
  write_ahix(loaded, dir_ / "c.ahix");
  EXPECT_EQ(slurp(dir_ / "a.ahix"), slurp(dir_ / "c.ahix"));
}

TEST_F(IoTest, AhixExactModeSkipsForestSection) {
  MemoryStore store = sample_store(false);
  const auto path = dir_ / "exact.ahix";
  write_ahix(store, path);
  MemoryStore loaded = read_ahix(path);
  EXPECT_FALSE(loaded.has_forest());
  EXPECT_EQ(loaded.size(), store.size());
}

TEST_F(IoTest, AhixRejectsCorruption) {
  MemoryStore store = sample_store(true);
  const auto path = dir_ / "index.ahix";
  write_ahix(store, path);
  auto bytes = slurp(path);

  auto bad_magic = bytes;
  bad_magic[2] = 'Z';
  spit(dir_ / "bad.ahix", bad_magic);
  try {
    read_ahix(dir_ / "bad.ahix");
    FAIL() << "expected BadMagic";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::bad_magic);
  }

  auto cut = bytes;
  cut.resize(cut.size() / 2);
  spit(dir_ / "cut.ahix", cut);
  try {
    read_ahix(dir_ / "cut.ahix");
    FAIL() << "expected Truncated";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::truncated);
  }
}

TEST_F(IoTest, ManifestRoundTripAndValidation) {
  auto img = random_image(4, 4, 2, 11);
  write_ahue(img, dir_ / "a.ahue");
  write_ahue(img, dir_ / "b.ahue");
  Manifest manifest;
  manifest.root = dir_;
  manifest.records.push_back({"a.ahue", 0, 0});
  manifest.records.push_back({"b.ahue", 1, 1});
  const auto path = dir_ / "manifest.jsonl";
  write_manifest(manifest, path);
  Manifest loaded = read_manifest(path);
  ASSERT_EQ(loaded.records.size(), 2u);
  EXPECT_EQ(loaded.records[1].class_id, 1u);
  EXPECT_EQ(loaded.records[1].image_id, 1u);
  EXPECT_TRUE(fs::exists(loaded.resolve(loaded.records[0])));
}

TEST_F(IoTest, ManifestRejectsDuplicateImageIds) {
  auto img = random_image(4, 4, 2, 13);
  write_ahue(img, dir_ / "a.ahue");
  std::ofstream out(dir_ / "manifest.jsonl");
  out << R"({"path":"a.ahue","class_id":0,"image_id":3})" << "\n";
  out << R"({"path":"a.ahue","class_id":1,"image_id":3})" << "\n";
  out.close();
  EXPECT_THROW(read_manifest(dir_ / "manifest.jsonl"), Error);
}

TEST_F(IoTest, ManifestRejectsMissingFilesAndNegativeIds) {
  {
    std::ofstream out(dir_ / "missing.jsonl");
    out << R"({"path":"nope.ahue","class_id":0,"image_id":0})" << "\n";
  }
  EXPECT_THROW(read_manifest(dir_ / "missing.jsonl"), Error);
  auto img = random_image(4, 4, 2, 15);
  write_ahue(img, dir_ / "a.ahue");
  {
    std::ofstream out(dir_ / "neg.jsonl");
    out << R"({"path":"a.ahue","class_id":-2,"image_id":0})" << "\n";
  }
  EXPECT_THROW(read_manifest(dir_ / "neg.jsonl"), Error);
}

TEST(FormatDouble, RoundTripsSixtyFourBitValues) {
  for (double v : {1.0 / 3.0, 0.1, 2.5e-300, 6.02214076e23, -0.0, 1.0000000000000002}) {
    const std::string s = format_double(v);
    double back = 0.0;
    std::sscanf(s.c_str(), "%lf", &back);
    EXPECT_EQ(std::bit_cast<std::uint64_t>(back), std::bit_cast<std::uint64_t>(v)) << s;
  }
}
