// Copyright 2026 The AHIQ Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include "ahiq/checkpoint.hpp"
#include "ahiq/data.hpp"
#include "support/oracles.hpp"

namespace ahiq {
namespace {

namespace fs = std::filesystem;

void write_lines(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

class ManifestTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = testing::scratch_dir("manifest");
    fs::create_directories(root_ / "ref");
    fs::create_directories(root_ / "dist");
    write_png(Image(8, 8, 10), root_ / "ref" / "A0001.png");
    write_bmp(Image(8, 8, 20), root_ / "ref" / "B0002.bmp");
    write_png(Image(8, 8, 30), root_ / "dist" / "A0001_00_00.png");
    write_png(Image(8, 8, 40), root_ / "dist" / "A0001_01_03.png");
    write_png(Image(8, 8, 50), root_ / "dist" / "B0002_00_01.png");
  }
  DatasetManifest load(const std::string& text, std::ostream* warn = nullptr) {
    write_lines(root_ / "labels.txt", text);
    return load_manifest(root_ / "labels.txt", root_ / "ref", root_ / "dist", warn);
  }
  fs::path root_;
};

TEST_F(ManifestTest, InfersReferenceFromPrefix) {
  const auto m = load("# header\nA0001_00_00.png,1520.0\n\nA0001_01_03.png, 1400.5\nB0002_00_01.png,1\n");
  ASSERT_EQ(m.samples.size(), 3u);
  EXPECT_EQ(m.samples[0].ref_id, "A0001");
  EXPECT_DOUBLE_EQ(m.samples[0].mos, 1520.0);
  EXPECT_EQ(m.samples[0].ref_path.filename(), "A0001.png");
  EXPECT_EQ(m.samples[2].ref_path.filename(), "B0002.bmp");
  EXPECT_EQ(m.ref_ids(), (std::set<std::string>{"A0001", "B0002"}));
}

TEST_F(ManifestTest, EmptyFileWarns) {
  std::ostringstream warn;
  const auto m = load("# nothing\n", &warn);
  EXPECT_TRUE(m.samples.empty());
  EXPECT_NE(warn.str().find("no samples"), std::string::npos);
}

TEST_F(ManifestTest, MalformedLineNamesLineNumber) {
  try {
    load("A0001_00_00.png,1\nA0001_01_03.png,1,2,3\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(load("A0001_00_00.png,abc\n"), ParseError);
  EXPECT_THROW(load("A0001_00_00.png,nan\n"), ParseError);
  EXPECT_THROW(load("A0001_00_00.png,inf\n"), ParseError);
  EXPECT_THROW(load("A0001_00_00.png,1\nA0001_00_00.png,2\n"), ParseError);
}

TEST_F(ManifestTest, MissingFilesAreReported) {
  try {
    load("A0001_09_09.png,1\n");
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("A0001_09_09.png"), std::string::npos);
  }
  write_png(Image(8, 8), root_ / "dist" / "C0003_00.png");
  EXPECT_THROW(load("C0003_00.png,1\n"), std::runtime_error);
  EXPECT_THROW(load_manifest(root_ / "missing.txt", root_, root_), std::runtime_error);
}

DatasetManifest fake_manifest(std::size_t refs, std::size_t per_ref) {
  DatasetManifest m;
  for (std::size_t r = 0; r < refs; ++r)
    for (std::size_t d = 0; d < per_ref; ++d) {
      ImagePairSample s;
      s.ref_id = "R" + std::to_string(r);
      s.ref_path = s.ref_id + ".png";
      s.dist_path = s.ref_id + "_" + std::to_string(d) + ".png";
      s.mos = double(d);
      m.samples.push_back(s);
    }
  return m;
}

TEST(Split, TenReferencesGiveSixTwoTwo) {
  const auto s = split_by_reference(fake_manifest(10, 3), 1);
  EXPECT_EQ(s.train_refs.size(), 6u);
  EXPECT_EQ(s.val_refs.size(), 2u);
  EXPECT_EQ(s.test_refs.size(), 2u);
  EXPECT_EQ(s.train.size(), 18u);
}

TEST(Split, RemainderGoesToTraining) {
  const auto s = split_by_reference(fake_manifest(13, 1), 1);
  EXPECT_EQ(s.val_refs.size(), 2u);
  EXPECT_EQ(s.test_refs.size(), 2u);
  EXPECT_EQ(s.train_refs.size(), 9u);
}

TEST(Split, PartitionsByReference) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto m = fake_manifest(5 + seed, 4);
    const auto s = split_by_reference(m, seed);
    EXPECT_EQ(s.train.size() + s.val.size() + s.test.size(), m.samples.size());
    std::map<std::string, int> where;
    auto mark = [&](const std::vector<ImagePairSample>& part, int tag) {
      for (const auto& x : part) {
        auto [it, fresh] = where.emplace(x.ref_id, tag);
        EXPECT_EQ(it->second, tag) << x.ref_id << " appears in two splits";
      }
    };
    mark(s.train, 0);
    mark(s.val, 1);
    mark(s.test, 2);
  }
}

TEST(Split, SeedDeterminesAssignment) {
  const auto m = fake_manifest(20, 2);
  const auto a = split_by_reference(m, 7), b = split_by_reference(m, 7);
  EXPECT_EQ(a.train_refs, b.train_refs);
  EXPECT_EQ(a.test_refs, b.test_refs);
  const auto c = split_by_reference(m, 8);
  EXPECT_NE(a.train_refs, c.train_refs);
}

TEST(Split, TooFewReferencesRaise) {
  EXPECT_THROW(split_by_reference(fake_manifest(4, 10), 0), std::invalid_argument);
}

TEST(Normalize, ZeroImageMapsToNegatedMeanOverStd) {
  const auto t = normalize<double>(Image(3, 2, 0));
  ASSERT_EQ(t.shape(), (Shape{3, 2, 3}));
  const double want[3] = {-0.485 / 0.229, -0.456 / 0.224, -0.406 / 0.225};
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(t.data()[c * 6 + i], want[c], 1e-12);
}

TEST(Normalize, MeanPixelIsNearZero) {
  Image img(1, 1);
  img.at(0, 0, 0) = 124;  // round(0.485 * 255)
  img.at(0, 0, 1) = 116;
  img.at(0, 0, 2) = 104;
  const auto t = normalize<double>(img);
  for (double v : t.data()) EXPECT_LT(std::abs(v), 0.5 / 255 / 0.224 + 1e-9);
}

TEST(Normalize, ChannelFirstLayoutAndRoundTrip) {
  testing::Rng rng(41);
  const Image img = testing::add_noise(testing::smooth_pattern(9, 5, rng), 30, rng);
  const auto t = normalize<float>(img);
  EXPECT_NEAR(t.data()[2 * 45 + 3 * 9 + 4], (img.at(3, 4, 2) / 255.0 - 0.406) / 0.225, 1e-5);
  EXPECT_EQ(denormalize(t), img);
  EXPECT_THROW(normalize<float>(Image(2, 2, 0, 1)), ImageError);
}

TEST(Crop, ExactSizeIsIdentity) {
  testing::Rng rng(42);
  const Image a = testing::smooth_pattern(224, 224, rng);
  Rng r(1);
  auto [ca, cb] = paired_random_crop(a, a, 224, r);
  EXPECT_EQ(ca, a);
  EXPECT_EQ(cb, a);
}

TEST(Crop, SameWindowOnBothImages) {
  testing::Rng rng(43);
  const Image a = testing::smooth_pattern(300, 260, rng);
  const Image b = testing::add_noise(a, 0, rng);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng r(seed);
    auto [ca, cb] = paired_random_crop(a, b, 224, r);
    EXPECT_EQ(ca, cb);
    EXPECT_EQ(ca.width, 224u);
    Rng again(seed);
    EXPECT_EQ(paired_random_crop(a, b, 224, again).first, ca);
  }
}

TEST(Crop, UndersizedOrMismatchedIsGeometryError) {
  Rng r(0);
  EXPECT_THROW(paired_random_crop(Image(223, 300), Image(223, 300), 224, r), GeometryError);
  EXPECT_THROW(paired_random_crop(Image(300, 300), Image(300, 301), 224, r), GeometryError);
}

TEST(Flip, InvolutionAndAlignment) {
  testing::Rng rng(44);
  const Image a = testing::smooth_pattern(7, 3, rng);
  EXPECT_EQ(hflip(hflip(a)), a);
  EXPECT_EQ(hflip(a).at(1, 0, 2), a.at(1, 6, 2));
  Rng r(0);
  auto [x0, y0] = paired_hflip(a, a, 0.0, r);
  EXPECT_EQ(x0, a);
  auto [x1, y1] = paired_hflip(a, a, 1.0, r);
  EXPECT_EQ(x1, hflip(a));
  EXPECT_EQ(x1, y1);
}

TEST(Augmentation, IdentityPairStaysIdentical) {
  testing::Rng rng(45);
  const Image a = testing::smooth_pattern(260, 240, rng);
  Rng r(3);
  for (int i = 0; i < 10; ++i) {
    auto [x, y] = paired_random_crop(a, a, 224, r);
    std::tie(x, y) = paired_hflip(x, y, 0.5, r);
    EXPECT_EQ(x, y);
  }
}

TEST(TwentyCrop, ConstantScorerReturnsConstant) {
  Rng r(0);
  auto constant = [](const Image&, const Image&) { return 2.5; };
  EXPECT_EQ(twenty_crop_score(constant, Image(250, 240), Image(250, 240), r), 2.5);
}

TEST(TwentyCrop, ExactSizeScoresOnce) {
  int calls = 0;
  auto counting = [&](const Image& a, const Image&) {
    ++calls;
    return double(a.at(0, 0, 0));
  };
  Rng r(0);
  EXPECT_EQ(twenty_crop_score(counting, Image(224, 224, 9), Image(224, 224, 9), r), 9.0);
  EXPECT_EQ(calls, 1);
}

TEST(TwentyCrop, AveragesTwentyWindowsDeterministically) {
  testing::Rng rng(46);
  const Image a = testing::smooth_pattern(256, 256, rng);
  std::vector<std::pair<std::size_t, std::size_t>> seen;
  auto probe = [&](const Image& c, const Image&) { return double(c.at(0, 0, 0)) + c.at(5, 7, 1); };
  Rng r1(9), r2(9);
  const double s1 = twenty_crop_score(probe, a, a, r1);
  const double s2 = twenty_crop_score(probe, a, a, r2);
  EXPECT_EQ(s1, s2);

  Rng r3(9);
  double manual = 0;
  for (int i = 0; i < 20; ++i) {
    const auto w = draw_crop_window(256, 256, 224, r3);
    manual += probe(crop(a, w.top, w.left, 224, 224), a);
  }
  EXPECT_DOUBLE_EQ(s1, manual / 20);
}

TEST(Images, PngAndBmpRoundTrip) {
  const auto dir = testing::scratch_dir("images");
  testing::Rng rng(47);
  const Image a = testing::add_noise(testing::smooth_pattern(13, 7, rng), 40, rng);
  write_png(a, dir / "a.png");
  write_bmp(a, dir / "a.bmp");
  EXPECT_EQ(read_image(dir / "a.png"), a);
  EXPECT_EQ(read_image(dir / "a.bmp"), a);
  std::ofstream(dir / "junk.png") << "not an image";
  EXPECT_THROW(read_image(dir / "junk.png"), ImageError);
}

TEST(Images, PpmHeaderAndGrayscaleReplication) {
  const auto dir = testing::scratch_dir("ppm");
  Image g(3, 2, 7, 1);
  write_ppm(g, dir / "g.ppm");
  const auto bytes = read_file_bytes(dir / "g.ppm");
  const std::string header = "P6\n3 2\n255\n";
  ASSERT_EQ(bytes.size(), header.size() + 18);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + long(header.size())), header);
  EXPECT_EQ(bytes.back(), 7);
}

}  // namespace
}  // namespace ahiq
