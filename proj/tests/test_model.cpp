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

#include "ahiq/model.hpp"
#include "support/oracles.hpp"

namespace ahiq {
namespace {

using F = Tensor<float>;

F random_image(std::uint64_t seed, std::size_t size = 224) {
  testing::Rng rng(seed);
  const auto v = testing::uniform(3 * size * size, rng, -2, 2);
  return F({3, size, size}, std::vector<float>(v.begin(), v.end()));
}

void perturb(Tensor<float> t, std::uint64_t seed) {
  testing::Rng rng(seed);
  std::normal_distribution<float> n(0.0f, 0.5f);
  for (auto& v : t.mutable_data()) v += n(rng);
}

bool bit_equal(const F& a, const F& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(float)) == 0;
}

TEST(ViT, TokenAndMapShapes) {
  Rng rng(1);
  ParamStore<float> store;
  ViTConfig cfg = ModelConfig::tiny().vit;
  VisionTransformer<float> vit(store, cfg, rng);
  auto tokens = vit.patch_embed(random_image(2));
  EXPECT_EQ(tokens.shape(), (Shape{197, 32}));
  EXPECT_EQ(vit.block(0, tokens).shape(), tokens.shape());
  EXPECT_EQ(vit.tokens_to_map(tokens).shape(), (Shape{1, 32, 14, 14}));
  EXPECT_EQ(vit.extract(random_image(2)).shape(), (Shape{1, 5 * 32, 14, 14}));
}

TEST(ViT, AttentionRowsAreDistributions) {
  Rng rng(1);
  ParamStore<float> store;
  VisionTransformer<float> vit(store, ModelConfig::tiny().vit, rng);
  auto tokens = vit.patch_embed(random_image(3));
  const auto heads = vit.attention_weights(0, tokens);
  ASSERT_EQ(heads.size(), 2u);
  for (const auto& a : heads) {
    ASSERT_EQ(a.shape(), (Shape{197, 197}));
    const auto rows = sum(a, -1);
    for (float v : rows.data()) EXPECT_NEAR(v, 1.0f, 1e-5f);
  }
}

TEST(ViT, ClassTokenIsDroppedFromMap) {
  Rng rng(1);
  ParamStore<float> store;
  ViTConfig cfg = ModelConfig::tiny().vit;
  VisionTransformer<float> vit(store, cfg, rng);
  std::vector<float> v(197 * 32);
  for (std::size_t t = 0; t < 197; ++t)
    for (std::size_t c = 0; c < 32; ++c) v[t * 32 + c] = float(t) + 0.001f * float(c);
  auto map = vit.tokens_to_map(F({197, 32}, v));
  // Channel c at (y, x) holds patch token 1 + y*14 + x.
  EXPECT_FLOAT_EQ(map.data()[0 * 196 + 0], 1.0f);
  EXPECT_FLOAT_EQ(map.data()[3 * 196 + 2 * 14 + 5], 1.0f + 2 * 14 + 5 + 0.003f);
}

TEST(ViT, RejectsWrongImageSize) {
  Rng rng(1);
  ParamStore<float> store;
  VisionTransformer<float> vit(store, ModelConfig::tiny().vit, rng);
  EXPECT_THROW(vit.extract(F::zeros({3, 200, 200})), GeometryError);
  EXPECT_THROW(vit.extract(F::zeros({2, 3, 224, 224})), GeometryError);
}

TEST(CNN, StemAndBlockShapes) {
  Rng rng(1);
  ParamStore<float> store;
  CNNConfig cfg = ModelConfig::tiny().cnn;
  ResidualCNN<float> cnn(store, cfg, rng);
  EXPECT_EQ(cnn.stem(random_image(4), 224).shape(), (Shape{1, 16, 56, 56}));
  EXPECT_EQ(cnn.extract(random_image(4)).shape(), (Shape{1, 3 * 16, 56, 56}));
}

TEST(CNN, OutputsAreNonNegative) {
  Rng rng(1);
  ParamStore<float> store;
  ResidualCNN<float> cnn(store, ModelConfig::tiny().cnn, rng);
  for (float v : cnn.extract(random_image(5)).data()) EXPECT_GE(v, 0.0f);
}

TEST(Config, RatioMustBeTwoOrFour) {
  auto c = ModelConfig::tiny();
  EXPECT_EQ(c.cnn_to_vit_ratio(), 4u);
  EXPECT_EQ(ModelConfig::tiny(8).cnn_to_vit_ratio(), 2u);
  c.vit.patch_size = 12;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, RejectsBadTappedLists) {
  auto c = ModelConfig::tiny();
  c.vit.tapped_blocks = {0, 7};
  EXPECT_THROW(c.validate(), ConfigError);
  c.vit.tapped_blocks = {2, 1};
  EXPECT_THROW(c.validate(), ConfigError);
  c.vit.tapped_blocks = {};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, StrategyNamesRoundTrip) {
  for (auto s : {FusionStrategy::deform_concat, FusionStrategy::concat, FusionStrategy::vit_only,
                 FusionStrategy::cnn_only}) {
    EXPECT_EQ(parse_fusion_strategy(to_string(s)), s);
  }
  EXPECT_EQ(parse_fusion_strategy("concat-only"), FusionStrategy::concat);
  EXPECT_THROW(parse_fusion_strategy("deform"), ConfigError);
}

struct ShapeCase {
  std::size_t patch, grid;
};

class ShapeContract : public ::testing::TestWithParam<ShapeCase> {};

TEST_P(ShapeContract, PairMapsToGridAndScalar) {
  const auto [patch, grid] = GetParam();
  AhiqModel<float> model(ModelConfig::tiny(patch), 7);
  auto p = model.forward(random_image(8), random_image(9));
  EXPECT_EQ(p.score.shape(), Shape{});
  EXPECT_EQ(p.score_map.shape(), (Shape{1, 1, grid, grid}));
  EXPECT_EQ(p.weight_map.shape(), (Shape{1, 1, grid, grid}));
  EXPECT_EQ(p.fused.shape(), (Shape{1, 32, grid, grid}));
  EXPECT_EQ(p.offsets_ref.shape(), (Shape{1, 18, 56, 56}));
  EXPECT_TRUE(std::isfinite(p.score.item()));
  for (float w : p.weight_map.data()) EXPECT_GT(w, 0.0f);
}

INSTANTIATE_TEST_SUITE_P(Geometries, ShapeContract,
                         ::testing::Values(ShapeCase{16, 14}, ShapeCase{8, 28}));

TEST(Fusion, MismatchedCnnMapIsGeometryError) {
  Rng rng(1);
  ParamStore<float> store;
  auto cfg = ModelConfig::tiny();
  FeatureFusion<float> fusion(store, cfg, rng);
  EXPECT_THROW(fusion.project_cnn(F::zeros({1, 48, 50, 50})), GeometryError);
  EXPECT_THROW(fusion.predict_offsets(F::zeros({1, 160, 13, 13})), GeometryError);
  EXPECT_EQ(fusion.project_cnn(F::zeros({1, 48, 56, 56})).shape(), (Shape{1, 16, 14, 14}));
}

TEST(Fusion, ZeroInitialisedOffsetsPredictZeroField) {
  AhiqModel<float> model(ModelConfig::tiny(), 3);
  auto off = model.offsets(random_image(10));
  EXPECT_EQ(off.shape(), (Shape{1, 18, 56, 56}));
  for (float v : off.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Fusion, OffsetWeightsSteerTheDeformablePath) {
  AhiqModel<float> model(ModelConfig::tiny(), 3);
  const auto ref = random_image(11), dist = random_image(12);
  const auto before = model.forward(ref, dist).fused;
  perturb(model.fusion().offset_weight(), 5);
  EXPECT_FALSE(bit_equal(before, model.forward(ref, dist).fused));
}

ModelConfig with_strategy(FusionStrategy s) {
  auto c = ModelConfig::tiny();
  c.fusion.strategy = s;
  return c;
}

TEST(Ablation, ConcatOnlyIgnoresOffsetWeights) {
  AhiqModel<float> model(with_strategy(FusionStrategy::concat), 3);
  const auto ref = random_image(13), dist = random_image(14);
  const auto before = model.forward(ref, dist);
  perturb(model.fusion().offset_weight(), 6);
  perturb(model.fusion().offset_bias(), 7);
  perturb(model.fusion().deform_weight(), 8);
  const auto after = model.forward(ref, dist);
  EXPECT_TRUE(bit_equal(before.fused, after.fused));
  EXPECT_TRUE(bit_equal(before.score, after.score));
  EXPECT_THROW(model.offsets(ref), ConfigError);
}

TEST(Ablation, VitOnlyIgnoresCnnBranch) {
  AhiqModel<float> model(with_strategy(FusionStrategy::vit_only), 3);
  const auto ref = random_image(15), dist = random_image(16);
  const auto before = model.forward(ref, dist);
  for (const auto& e : model.params().entries()) {
    if (e.name.starts_with("cnn.") || e.name.starts_with("fusion.proj")) perturb(e.tensor, 9);
  }
  EXPECT_TRUE(bit_equal(before.score, model.forward(ref, dist).score));

  testing::Rng rng(1);
  auto vit_r = model.vit().extract(ref), vit_d = model.vit().extract(dist);
  auto a = model.fusion().forward(vit_d, F::zeros({1, 48, 56, 56}), vit_r, F::ones({1, 48, 56, 56}));
  auto b = model.fusion().forward(vit_d, F(), vit_r, F());
  EXPECT_TRUE(bit_equal(a.fused, b.fused));
}

TEST(Ablation, CnnOnlyIgnoresVitBranch) {
  AhiqModel<float> model(with_strategy(FusionStrategy::cnn_only), 3);
  const auto ref = random_image(17), dist = random_image(18);
  const auto before = model.forward(ref, dist);
  for (const auto& e : model.params().entries()) {
    if (e.name.starts_with("vit.") || e.name.starts_with("fusion.offset")) perturb(e.tensor, 10);
  }
  EXPECT_TRUE(bit_equal(before.score, model.forward(ref, dist).score));

  auto cnn_r = model.cnn().extract(ref), cnn_d = model.cnn().extract(dist);
  auto a = model.fusion().forward(F::zeros({1, 160, 14, 14}), cnn_d, F::ones({1, 160, 14, 14}), cnn_r);
  auto b = model.fusion().forward(F(), cnn_d, F(), cnn_r);
  EXPECT_TRUE(bit_equal(a.fused, b.fused));
}

TEST(Ablation, StrategiesShareLayoutExceptFuse1) {
  AhiqModel<float> full(ModelConfig::tiny(), 1);
  AhiqModel<float> vit_only(with_strategy(FusionStrategy::vit_only), 1);
  const auto a = full.load_list(), b = vit_only.load_list();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].first, b[i].first);
    if (a[i].first != "fusion.fuse1.weight" && a[i].first != kConfigEchoName) {
      EXPECT_EQ(a[i].second, b[i].second) << a[i].first;
    }
  }
}

TEST(Head, UniformWeightsGiveMean) {
  testing::Rng rng(20);
  auto s = testing::random_tensor({1, 1, 5, 7}, rng, false);
  auto w = testing::TD::full({1, 1, 5, 7}, 0.3);
  EXPECT_NEAR(weighted_pool(s, w).item(), mean(s).item(), 1e-12);
  EXPECT_THROW(weighted_pool(s, testing::TD::ones({1, 1, 7, 5})), DimensionError);
}

TEST(Head, SpatialPoolingConcatenatesMaxAndMean) {
  Rng rng(1);
  ParamStore<double> store;
  HeadConfig cfg;
  cfg.pooling = Pooling::spatial;
  PredictionHead<double> head(store, 2, cfg, rng);
  testing::TD f({1, 2, 1, 3}, {1, 2, 6, -1, 0, 4});
  const auto w = head.spatial_weight().data();
  const double want = w[0] * 6 + w[1] * 4 + w[2] * 3 + w[3] * 1 + head.spatial_bias().item();
  EXPECT_NEAR(head.forward(f).score.item(), want, 1e-12);
  EXPECT_FALSE(head.forward(f).score_map.defined());
}

TEST(Head, PatchSpatialAveragesBothScores) {
  Rng rng(1);
  ParamStore<double> store;
  HeadConfig cfg;
  cfg.pooling = Pooling::patch_spatial;
  PredictionHead<double> head(store, 4, cfg, rng);
  testing::Rng r(2);
  auto f = testing::random_tensor({1, 4, 3, 3}, r, false);
  const auto out = head.forward(f);
  const double patch = weighted_pool(out.score_map, out.weight_map).item();
  const double spatial = head.spatial_pool(f).item();
  EXPECT_NEAR(out.score.item(), 0.5 * (patch + spatial), 1e-12);
}

TEST(Model, StateRoundTripsIntoFreshModel) {
  AhiqModel<float> a(ModelConfig::tiny(), 1), b(ModelConfig::tiny(), 2);
  const auto ref = random_image(21), dist = random_image(22);
  b.load_state(a.state());
  EXPECT_TRUE(bit_equal(a.forward(ref, dist).score, b.forward(ref, dist).score));
  EXPECT_EQ(a.state(), b.state());
}

TEST(Model, CrossGeometryLoadNamesTensors) {
  AhiqModel<float> b16(ModelConfig::tiny(16), 1), b8(ModelConfig::tiny(8), 1);
  const auto before = b8.state();
  try {
    b8.load_state(b16.state());
    FAIL() << "load succeeded";
  } catch (const StateMismatchError& e) {
    const auto& names = e.names();
    EXPECT_NE(std::find(names.begin(), names.end(), "vit.patch_embed.weight"), names.end());
    EXPECT_NE(std::find(names.begin(), names.end(), "vit.pos_embed"), names.end());
    EXPECT_NE(std::find(names.begin(), names.end(), "fusion.proj2.weight"), names.end());
    EXPECT_NE(std::string(e.what()).find("vit.pos_embed"), std::string::npos);
  }
  EXPECT_EQ(b8.state(), before);
}

TEST(Model, BackboneLoadTouchesOnlyBackbones) {
  AhiqModel<float> src(ModelConfig::tiny(), 1), dst(ModelConfig::tiny(), 2);
  TensorMap backbones;
  const auto src_state = src.state();
  for (const auto& t : src_state.items()) {
    if (t.name.starts_with("vit.") || t.name.starts_with("cnn.")) backbones.insert(t);
  }
  const auto head_before = dst.head().score1().weight.to_vector();
  dst.load_backbones(backbones);
  EXPECT_EQ(dst.vit().config().width, 32u);
  EXPECT_EQ(dst.params().get("vit.pos_embed").to_vector(),
            src.params().get("vit.pos_embed").to_vector());
  EXPECT_EQ(dst.head().score1().weight.to_vector(), head_before);
  EXPECT_EQ(backbones.size(), dst.backbone_load_list().size());
  EXPECT_THROW(dst.load_backbones(src.state()), StateMismatchError);
}

TEST(Model, FullSizeLoadListHasExpectedWidths) {
  AhiqModel<float> full(ModelConfig::full(16), 0);
  const auto list = full.backbone_load_list();
  std::map<std::string, Shape> m(list.begin(), list.end());
  EXPECT_EQ(m.at("vit.patch_embed.weight"), (Shape{768, 3, 16, 16}));
  EXPECT_EQ(m.at("vit.pos_embed"), (Shape{197, 768}));
  EXPECT_EQ(m.at("vit.blocks.11.mlp.fc1.weight"), (Shape{768, 3072}));
  EXPECT_EQ(m.at("cnn.stem.weight"), (Shape{64, 3, 7, 7}));
  EXPECT_EQ(m.at("cnn.layer1.0.downsample.weight"), (Shape{256, 64, 1, 1}));
  EXPECT_EQ(m.at("cnn.layer1.2.conv3.weight"), (Shape{256, 64, 1, 1}));
  for (const auto& [name, shape] : list) {
    EXPECT_TRUE(name.starts_with("vit.") || name.starts_with("cnn.")) << name;
  }
}

}  // namespace
}  // namespace ahiq
