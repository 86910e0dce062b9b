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

// Feature extractors: a ViT tapped at its early blocks and a shallow
// ResNet-style CNN whose stage-1 block outputs are concatenated.

#pragma once

#include "ahiq/config.hpp"
#include "ahiq/nn.hpp"

namespace ahiq {

namespace detail {

// Accepts [3,S,S] or [1,3,S,S] and returns the batched view.
template <Real T>
Tensor<T> as_image_batch(const Tensor<T>& image, std::size_t size,
                         std::string_view who) {
  const Shape& s = image.shape();
  const bool chw = s.size() == 3 && s[0] == 3 && s[1] == size && s[2] == size;
  const bool nchw =
      s.size() == 4 && s[0] == 1 && s[1] == 3 && s[2] == size && s[3] == size;
  if (!chw && !nchw) {
    throw GeometryError(std::string(who) + ": expected a [3," +
                        std::to_string(size) + "," + std::to_string(size) +
                        "] image, got " + shape_str(s));
  }
  return chw ? reshape(image, {1, 3, size, size}) : image;
}

}  // namespace detail

template <Real T>
class VisionTransformer {
 public:
  struct Block {
    LayerNorm<T> norm1;
    Linear<T> qkv;
    Linear<T> proj;
    LayerNorm<T> norm2;
    Linear<T> fc1;
    Linear<T> fc2;
  };

  VisionTransformer(ParamStore<T>& store, const ViTConfig& cfg, Rng& rng,
                    const std::string& prefix = "vit")
      : cfg_(cfg) {
    cfg_.validate();
    const std::size_t c = cfg_.width, ps = cfg_.patch_size;
    patch_ = Conv2d<T>(store, prefix + ".patch_embed", 3, c, ps,
                       {ps, 0, Rounding::exact}, rng, true, 1.0);
    cls_token_ = store.add(prefix + ".cls_token", {1, c}, Init::normal, rng, 0.02);
    pos_embed_ = store.add(prefix + ".pos_embed", {cfg_.tokens(), c},
                           Init::normal, rng, 0.02);
    for (std::size_t i = 0; i < cfg_.depth; ++i) {
      const std::string b = prefix + ".blocks." + std::to_string(i);
      Block blk;
      blk.norm1 = LayerNorm<T>(store, b + ".norm1", c, rng);
      blk.qkv = Linear<T>(store, b + ".attn.qkv", c, 3 * c, rng);
      blk.proj = Linear<T>(store, b + ".attn.proj", c, c, rng);
      blk.norm2 = LayerNorm<T>(store, b + ".norm2", c, rng);
      blk.fc1 = Linear<T>(store, b + ".mlp.fc1", c, cfg_.mlp_ratio * c, rng);
      blk.fc2 = Linear<T>(store, b + ".mlp.fc2", cfg_.mlp_ratio * c, c, rng);
      blocks_.push_back(std::move(blk));
    }
  }

  const ViTConfig& config() const { return cfg_; }
  const Block& block_params(std::size_t i) const { return blocks_.at(i); }

  // [3,S,S] -> [p*p + 1, c]: class token first, positional embedding added.
  Tensor<T> patch_embed(const Tensor<T>& image) const {
    auto x = detail::as_image_batch(image, cfg_.image_size, "patch_embed");
    const std::size_t p = cfg_.grid(), c = cfg_.width;
    auto maps = patch_(x);                                   // [1,c,p,p]
    auto tokens = transpose(reshape(maps, {c, p * p}));      // [p*p,c]
    return add(concat<T>({cls_token_, tokens}, 0), pos_embed_);
  }

  // Per-head attention probabilities of block i, each [L,L].
  std::vector<Tensor<T>> attention_weights(std::size_t i,
                                           const Tensor<T>& tokens) const {
    std::vector<Tensor<T>> probs;
    attend(blocks_.at(i), blocks_.at(i).norm1(tokens), &probs);
    return probs;
  }

  // Pre-norm attention and FFN, each with a residual connection.
  Tensor<T> block(std::size_t i, const Tensor<T>& tokens) const {
    const Block& b = blocks_.at(i);
    check_tokens(tokens);
    auto x = add(tokens, b.proj(attend(b, b.norm1(tokens), nullptr)));
    return add(x, b.fc2(gelu(b.fc1(b.norm2(x)))));
  }

  // Multi-head self-attention on pre-normalised tokens, before the output
  // projection.
  Tensor<T> attend(const Block& b, const Tensor<T>& normed,
                   std::vector<Tensor<T>>* probs_out) const {
    const std::size_t c = cfg_.width, d = c / cfg_.heads;
    auto qkv = b.qkv(normed);
    const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(d));
    std::vector<Tensor<T>> heads;
    for (std::size_t h = 0; h < cfg_.heads; ++h) {
      auto q = narrow(qkv, 1, h * d, d);
      auto k = narrow(qkv, 1, c + h * d, d);
      auto v = narrow(qkv, 1, 2 * c + h * d, d);
      auto probs = softmax(scale(matmul(q, transpose(k)), inv_sqrt_d), 1);
      if (probs_out) probs_out->push_back(probs);
      heads.push_back(matmul(probs, v));
    }
    return heads.size() == 1 ? heads.front() : concat(heads, 1);
  }

  // Drops the class token and folds the patch tokens into [1,c,p,p].
  Tensor<T> tokens_to_map(const Tensor<T>& tokens) const {
    const std::size_t p = cfg_.grid(), c = cfg_.width;
    auto patches = narrow(tokens, 0, 1, p * p);
    return reshape(transpose(patches), {1, c, p, p});
  }

  // [3,S,S] -> [1, |tapped|*c, p, p]
  Tensor<T> extract(const Tensor<T>& image) const {
    auto x = patch_embed(image);
    std::vector<Tensor<T>> taps;
    std::size_t next_tap = 0;
    for (std::size_t i = 0; i < cfg_.blocks_used(); ++i) {
      x = block(i, x);
      if (next_tap < cfg_.tapped_blocks.size() && cfg_.tapped_blocks[next_tap] == i) {
        taps.push_back(tokens_to_map(x));
        ++next_tap;
      }
    }
    return taps.size() == 1 ? taps.front() : concat(taps, 1);
  }

 private:
  void check_tokens(const Tensor<T>& tokens) const {
    if (tokens.rank() != 2 || tokens.dim(1) != cfg_.width) {
      throw DimensionError("transformer block expects [L," +
                           std::to_string(cfg_.width) + "] tokens, got " +
                           shape_str(tokens.shape()));
    }
  }

  ViTConfig cfg_;
  Conv2d<T> patch_;
  Tensor<T> cls_token_, pos_embed_;
  std::vector<Block> blocks_;
};

template <Real T>
class ResidualCNN {
 public:
  struct Bottleneck {
    Conv2d<T> conv1, conv2, conv3;
    std::optional<Conv2d<T>> downsample;

    Tensor<T> operator()(const Tensor<T>& x) const {
      auto y = conv3(relu(conv2(relu(conv1(x)))));
      return relu(add(y, downsample ? (*downsample)(x) : x));
    }
    Tensor<T> shortcut(const Tensor<T>& x) const {
      return downsample ? (*downsample)(x) : x;
    }
  };

  ResidualCNN(ParamStore<T>& store, const CNNConfig& cfg, Rng& rng,
              const std::string& prefix = "cnn")
      : cfg_(cfg) {
    cfg_.validate();
    stem_ = Conv2d<T>(store, prefix + ".stem", 3, cfg_.stem_channels, 7,
                      {2, 3, Rounding::floor}, rng);
    std::size_t in = cfg_.stem_channels;
    for (std::size_t i = 0; i < cfg_.blocks; ++i) {
      const std::string b = prefix + ".layer1." + std::to_string(i);
      Bottleneck blk;
      blk.conv1 = Conv2d<T>(store, b + ".conv1", in, cfg_.mid_channels, 1, {}, rng);
      blk.conv2 = Conv2d<T>(store, b + ".conv2", cfg_.mid_channels,
                            cfg_.mid_channels, 3, {1, 1}, rng);
      // Residual branch starts at half the He gain.
      blk.conv3 = Conv2d<T>(store, b + ".conv3", cfg_.mid_channels,
                            cfg_.block_channels, 1, {}, rng, true, 0.5);
      if (in != cfg_.block_channels) {
        blk.downsample = Conv2d<T>(store, b + ".downsample", in,
                                   cfg_.block_channels, 1, {}, rng, true, 1.0);
      }
      blocks_.push_back(std::move(blk));
      in = cfg_.block_channels;
    }
  }

  const CNNConfig& config() const { return cfg_; }
  const Bottleneck& block(std::size_t i) const { return blocks_.at(i); }

  // Stem conv + ReLU + 3x3/2 max-pool: [1,3,S,S] -> [1,stem,S/4,S/4].
  Tensor<T> stem(const Tensor<T>& image, std::size_t size) const {
    auto x = detail::as_image_batch(image, size, "cnn_extract");
    return max_pool2d(relu(stem_(x)), 3, 2, 1);
  }

  // [3,S,S] -> [1, blocks*block_channels, S/4, S/4]
  Tensor<T> extract(const Tensor<T>& image, std::size_t size = kCropSize) const {
    auto x = stem(image, size);
    std::vector<Tensor<T>> outs;
    for (const auto& blk : blocks_) {
      x = blk(x);
      outs.push_back(x);
    }
    return outs.size() == 1 ? outs.front() : concat(outs, 1);
  }

 private:
  CNNConfig cfg_;
  Conv2d<T> stem_;
  std::vector<Bottleneck> blocks_;
};

}  // namespace ahiq
