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

// Reference-guided feature fusion.
//
//   offsets = up_r(Conv1x1(vit_ref))                 [2K^2, rp, rp]
//   cnn'    = DConv(cnn, offsets)                    [C, rp, rp]
//   proj    = Conv/2(ReLU(Conv/2(cnn')))             [C', p, p]   (r = 4)
//   f       = [vit, proj]                            per image
//   f_all   = [f_dis, f_ref, f_dis - f_ref]
//   f_out   = Conv3x3(ReLU(Conv3x3(f_all)))
//
// r is the CNN/ViT resolution ratio: 4 for 16-pixel patches, 2 for 8-pixel
// patches (a single stride-2 projection conv in that case).

#pragma once

#include "ahiq/config.hpp"
#include "ahiq/nn.hpp"

namespace ahiq {

template <Real T>
class FeatureFusion {
 public:
  struct Output {
    Tensor<T> fused;        // [1, out_channels, p, p]
    Tensor<T> offsets_ref;  // undefined unless the deformable path runs
    Tensor<T> offsets_dis;
  };

  FeatureFusion(ParamStore<T>& store, const ModelConfig& cfg, Rng& rng,
                const std::string& prefix = "fusion")
      : cfg_(cfg), ratio_(cfg.cnn_to_vit_ratio()) {
    const auto& f = cfg_.fusion;
    const std::size_t vit_c = cfg_.vit.output_channels();
    const std::size_t cnn_c = cfg_.cnn.output_channels();
    const std::size_t k = f.kernel;

    offset_weight_ = store.add(prefix + ".offset.weight",
                               {f.offset_channels(), vit_c, 1, 1}, Init::zeros, rng);
    offset_bias_ = store.add(prefix + ".offset.bias", {f.offset_channels()},
                             Init::zeros, rng);
    deform_weight_ = store.add(prefix + ".deform.weight", {cnn_c, cnn_c, k, k},
                               Init::normal, rng,
                               std::sqrt(1.0 / static_cast<double>(cnn_c * k * k)));
    deform_bias_ = store.add(prefix + ".deform.bias", {cnn_c}, Init::zeros, rng);

    const Conv2dOptions down{2, 1, Rounding::floor};
    proj1_ = Conv2d<T>(store, prefix + ".proj1", cnn_c, f.proj_channels, 3, down, rng);
    if (ratio_ == 4) {
      proj2_ = Conv2d<T>(store, prefix + ".proj2", f.proj_channels,
                         f.proj_channels, 3, down, rng, true, 1.0);
    }

    std::size_t per_image = 0;
    if (f.uses_vit()) per_image += vit_c;
    if (f.uses_cnn()) per_image += f.proj_channels;
    fuse1_ = Conv2d<T>(store, prefix + ".fuse1", 3 * per_image, f.out_channels, 3,
                       {1, 1}, rng);
    fuse2_ = Conv2d<T>(store, prefix + ".fuse2", f.out_channels, f.out_channels,
                       3, {1, 1}, rng, true, 1.0);
  }

  std::size_t ratio() const { return ratio_; }
  std::size_t per_image_channels() const { return fuse1_.weight.dim(1) / 3; }

  // vit_ref [1,Ct,p,p] -> offsets [1,2K^2,rp,rp].
  Tensor<T> predict_offsets(const Tensor<T>& vit_ref) const {
    const std::size_t p = cfg_.vit.grid();
    if (vit_ref.rank() != 4 || vit_ref.dim(2) != p || vit_ref.dim(3) != p) {
      throw GeometryError("predict_offsets: expected a " + std::to_string(p) +
                          "x" + std::to_string(p) + " ViT map, got " +
                          shape_str(vit_ref.shape()));
    }
    auto coarse = conv2d(vit_ref, offset_weight_,
                         std::optional<Tensor<T>>(offset_bias_));
    return upsample_bilinear(coarse, ratio_);
  }

  Tensor<T> deform(const Tensor<T>& cnn, const Tensor<T>& offsets) const {
    return deform_conv2d(cnn, offsets, deform_weight_,
                         std::optional<Tensor<T>>(deform_bias_));
  }

  // [1,C,rp,rp] -> [1,C',p,p]
  Tensor<T> project_cnn(const Tensor<T>& cnn) const {
    const std::size_t p = cfg_.vit.grid();
    if (cnn.rank() != 4 || cnn.dim(2) != ratio_ * p || cnn.dim(3) != ratio_ * p) {
      throw GeometryError("project_cnn: expected a " + std::to_string(ratio_ * p) +
                          "x" + std::to_string(ratio_ * p) +
                          " map (divisible by " + std::to_string(ratio_) +
                          " onto the token grid), got " + shape_str(cnn.shape()));
    }
    auto x = proj1_(cnn);
    if (proj2_) x = (*proj2_)(relu(x));
    return x;
  }

  // Per-image feature [vit, proj] according to the strategy.
  Tensor<T> combine(const Tensor<T>& vit, const Tensor<T>& proj) const {
    switch (cfg_.fusion.strategy) {
      case FusionStrategy::vit_only: return vit;
      case FusionStrategy::cnn_only: return proj;
      default: break;
    }
    if (vit.dim(2) != proj.dim(2) || vit.dim(3) != proj.dim(3)) {
      throw GeometryError("fuse_pair: ViT map " + shape_str(vit.shape()) +
                          " and projected CNN map " + shape_str(proj.shape()) +
                          " differ spatially");
    }
    return concat<T>({vit, proj}, 1);
  }

  // [f_dis, f_ref, f_dis - f_ref]
  static Tensor<T> pair_concat(const Tensor<T>& dis, const Tensor<T>& ref) {
    if (dis.shape() != ref.shape()) {
      throw GeometryError("fuse_pair: distorted " + shape_str(dis.shape()) +
                          " vs reference " + shape_str(ref.shape()));
    }
    return concat<T>({dis, ref, sub(dis, ref)}, 1);
  }

  // Merges projected maps of both images into f_out. Unused inputs for the
  // vit-only / cnn-only strategies may be left undefined.
  Tensor<T> fuse_pair(const Tensor<T>& vit_dis, const Tensor<T>& proj_dis,
                      const Tensor<T>& vit_ref, const Tensor<T>& proj_ref) const {
    auto all = pair_concat(combine(vit_dis, proj_dis), combine(vit_ref, proj_ref));
    return fuse2_(relu(fuse1_(all)));
  }

  // Full module: raw backbone maps of both images in, f_out out.
  Output forward(const Tensor<T>& vit_dis, const Tensor<T>& cnn_dis,
                 const Tensor<T>& vit_ref, const Tensor<T>& cnn_ref) const {
    Output out;
    Tensor<T> proj_dis, proj_ref;
    if (cfg_.fusion.uses_cnn()) {
      Tensor<T> c_dis = cnn_dis, c_ref = cnn_ref;
      if (cfg_.fusion.uses_deform()) {
        out.offsets_ref = predict_offsets(vit_ref);
        out.offsets_dis = cfg_.fusion.per_image_offsets
                              ? predict_offsets(vit_dis)
                              : out.offsets_ref;
        c_dis = deform(cnn_dis, out.offsets_dis);
        c_ref = deform(cnn_ref, out.offsets_ref);
      }
      proj_dis = project_cnn(c_dis);
      proj_ref = project_cnn(c_ref);
    }
    out.fused = fuse_pair(vit_dis, proj_dis, vit_ref, proj_ref);
    return out;
  }

  const Tensor<T>& offset_weight() const { return offset_weight_; }
  const Tensor<T>& offset_bias() const { return offset_bias_; }
  const Tensor<T>& deform_weight() const { return deform_weight_; }
  const Tensor<T>& deform_bias() const { return deform_bias_; }
  const Conv2d<T>& proj1() const { return proj1_; }
  const std::optional<Conv2d<T>>& proj2() const { return proj2_; }
  const Conv2d<T>& fuse1() const { return fuse1_; }
  const Conv2d<T>& fuse2() const { return fuse2_; }

 private:
  ModelConfig cfg_;
  std::size_t ratio_;
  Tensor<T> offset_weight_, offset_bias_;
  Tensor<T> deform_weight_, deform_bias_;
  Conv2d<T> proj1_;
  std::optional<Conv2d<T>> proj2_;
  Conv2d<T> fuse1_, fuse2_;
};

}  // namespace ahiq
