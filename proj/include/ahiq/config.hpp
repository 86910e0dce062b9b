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

// Network geometry. Shapes below are written [C,H,W]; the engine stores
// every feature map channel-first.

#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "ahiq/core.hpp"

namespace ahiq {

inline constexpr std::size_t kCropSize = 224;

struct ViTConfig {
  std::size_t image_size = kCropSize;
  std::size_t patch_size = 16;
  std::size_t width = 64;
  std::size_t depth = 5;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  std::vector<std::size_t> tapped_blocks{0, 1, 2, 3, 4};

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t tokens() const { return grid() * grid() + 1; }
  std::size_t output_channels() const { return tapped_blocks.size() * width; }
  // Blocks past the last tapped one never influence the output.
  std::size_t blocks_used() const {
    return tapped_blocks.empty() ? 0 : tapped_blocks.back() + 1;
  }

  void validate() const {
    if (patch_size != 8 && patch_size != 16) {
      throw ConfigError("vit.patch_size must be 8 or 16, got " +
                        std::to_string(patch_size));
    }
    if (image_size % patch_size != 0) {
      throw ConfigError("image size " + std::to_string(image_size) +
                        " is not a multiple of the patch size");
    }
    if (width == 0 || heads == 0 || width % heads != 0) {
      throw ConfigError("vit.width must be a positive multiple of vit.heads");
    }
    if (tapped_blocks.empty()) throw ConfigError("vit.tapped is empty");
    if (!std::is_sorted(tapped_blocks.begin(), tapped_blocks.end()) ||
        std::adjacent_find(tapped_blocks.begin(), tapped_blocks.end()) !=
            tapped_blocks.end()) {
      throw ConfigError("vit.tapped must be strictly increasing");
    }
    if (tapped_blocks.back() >= depth) {
      throw ConfigError("vit.tapped index " +
                        std::to_string(tapped_blocks.back()) +
                        " exceeds depth " + std::to_string(depth));
    }
    if (mlp_ratio == 0) throw ConfigError("vit.mlp_ratio must be positive");
  }
};

// 7x7/2 stem, 3x3/2 max-pool, then bottleneck blocks whose outputs are
// concatenated.
struct CNNConfig {
  std::size_t stem_channels = 32;
  std::size_t mid_channels = 16;
  std::size_t block_channels = 32;
  std::size_t blocks = 3;

  std::size_t output_channels() const { return blocks * block_channels; }
  std::size_t output_size(std::size_t image) const {
    const std::size_t stem = (image - 1) / 2 + 1;  // 7x7, stride 2, pad 3
    return (stem - 1) / 2 + 1;                     // 3x3, stride 2, pad 1
  }

  void validate() const {
    if (stem_channels == 0 || mid_channels == 0 || block_channels == 0 ||
        blocks == 0) {
      throw ConfigError("cnn channel widths and block count must be positive");
    }
  }
};

enum class FusionStrategy { deform_concat, concat, vit_only, cnn_only };
enum class Pooling { patch, spatial, patch_spatial };

inline std::string to_string(FusionStrategy s) {
  switch (s) {
    case FusionStrategy::deform_concat: return "deform+concat";
    case FusionStrategy::concat: return "concat";
    case FusionStrategy::vit_only: return "vit-only";
    case FusionStrategy::cnn_only: return "cnn-only";
  }
  return "?";
}

inline FusionStrategy parse_fusion_strategy(const std::string& s) {
  if (s == "deform+concat") return FusionStrategy::deform_concat;
  if (s == "concat" || s == "concat-only") return FusionStrategy::concat;
  if (s == "vit-only") return FusionStrategy::vit_only;
  if (s == "cnn-only") return FusionStrategy::cnn_only;
  throw ConfigError("unknown fusion strategy '" + s +
                    "' (deform+concat, concat-only, vit-only, cnn-only)");
}

inline std::string to_string(Pooling p) {
  switch (p) {
    case Pooling::patch: return "patch";
    case Pooling::spatial: return "spatial";
    case Pooling::patch_spatial: return "patch+spatial";
  }
  return "?";
}

inline Pooling parse_pooling(const std::string& s) {
  if (s == "patch") return Pooling::patch;
  if (s == "spatial") return Pooling::spatial;
  if (s == "patch+spatial") return Pooling::patch_spatial;
  throw ConfigError("unknown pooling '" + s + "' (patch, spatial, patch+spatial)");
}

struct FusionConfig {
  std::size_t kernel = 3;
  FusionStrategy strategy = FusionStrategy::deform_concat;
  std::size_t proj_channels = 64;  // C' after the stride-2 projection
  std::size_t out_channels = 64;   // f_out
  bool per_image_offsets = false;

  std::size_t offset_channels() const { return 2 * kernel * kernel; }
  bool uses_vit() const { return strategy != FusionStrategy::cnn_only; }
  bool uses_cnn() const { return strategy != FusionStrategy::vit_only; }
  bool uses_deform() const { return strategy == FusionStrategy::deform_concat; }

  void validate() const {
    if (kernel == 0 || kernel % 2 == 0) {
      throw ConfigError("fusion.kernel must be odd, got " + std::to_string(kernel));
    }
    if (proj_channels == 0 || out_channels == 0) {
      throw ConfigError("fusion channel widths must be positive");
    }
  }
};

struct HeadConfig {
  std::size_t hidden = 32;
  Pooling pooling = Pooling::patch;
  double weight_eps = 1e-6;

  void validate() const {
    if (hidden == 0) throw ConfigError("head.hidden must be positive");
  }
};

struct ModelConfig {
  ViTConfig vit;
  CNNConfig cnn;
  FusionConfig fusion;
  HeadConfig head;

  // Ratio between the CNN map and the ViT token grid (4 for /16, 2 for /8).
  std::size_t cnn_to_vit_ratio() const {
    const std::size_t cnn_size = cnn.output_size(vit.image_size);
    const std::size_t p = vit.grid();
    if (cnn_size % p != 0) {
      throw GeometryError("CNN map " + std::to_string(cnn_size) +
                          " is not a multiple of the token grid " +
                          std::to_string(p));
    }
    return cnn_size / p;
  }

  void validate() const {
    vit.validate();
    cnn.validate();
    fusion.validate();
    head.validate();
    const std::size_t r = cnn_to_vit_ratio();
    if (r != 2 && r != 4) {
      throw ConfigError("CNN/ViT spatial ratio must be 2 or 4, got " +
                        std::to_string(r));
    }
  }

  // Numeric echo stored alongside checkpoints.
  std::vector<double> echo() const {
    std::vector<double> v{1.0,
                          double(vit.image_size),
                          double(vit.patch_size),
                          double(vit.width),
                          double(vit.depth),
                          double(vit.heads),
                          double(vit.mlp_ratio),
                          double(cnn.stem_channels),
                          double(cnn.mid_channels),
                          double(cnn.block_channels),
                          double(cnn.blocks),
                          double(fusion.kernel),
                          double(static_cast<int>(fusion.strategy)),
                          double(fusion.proj_channels),
                          double(fusion.out_channels),
                          fusion.per_image_offsets ? 1.0 : 0.0,
                          double(head.hidden),
                          double(static_cast<int>(head.pooling)),
                          double(vit.tapped_blocks.size())};
    for (auto b : vit.tapped_blocks) v.push_back(double(b));
    return v;
  }

  // Default desk-scale geometry: every shape relation of the full network
  // at roughly 1/150 of its parameters.
  static ModelConfig desk(std::size_t patch_size = 16) {
    ModelConfig c;
    c.vit.patch_size = patch_size;
    return c;
  }

  // Narrower variant used by fast tests and the overfit smoke run.
  static ModelConfig tiny(std::size_t patch_size = 16) {
    ModelConfig c;
    c.vit.patch_size = patch_size;
    c.vit.width = 32;
    c.vit.heads = 2;
    c.cnn.stem_channels = 16;
    c.cnn.mid_channels = 8;
    c.cnn.block_channels = 16;
    c.fusion.proj_channels = 16;
    c.fusion.out_channels = 32;
    c.head.hidden = 16;
    return c;
  }

  // ViT-B + ResNet-50 stage-1 widths, for exported pretrained weights.
  static ModelConfig full(std::size_t patch_size = 16) {
    ModelConfig c;
    c.vit.patch_size = patch_size;
    c.vit.width = 768;
    c.vit.heads = 12;
    c.vit.depth = 12;
    c.cnn.stem_channels = 64;
    c.cnn.mid_channels = 64;
    c.cnn.block_channels = 256;
    c.fusion.proj_channels = 256;
    c.fusion.out_channels = 256;
    c.head.hidden = 128;
    return c;
  }
};

}  // namespace ahiq
