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

#pragma once

#include "ahiq/config.hpp"
#include "ahiq/nn.hpp"

namespace ahiq {

// s_f = sum(s * w) / sum(w). Both maps must share a shape.
template <Real T>
Tensor<T> weighted_pool(const Tensor<T>& scores, const Tensor<T>& weights) {
  if (scores.shape() != weights.shape()) {
    throw DimensionError("weighted_pool: score map " + shape_str(scores.shape()) +
                         " vs weight map " + shape_str(weights.shape()));
  }
  return div(sum(mul(scores, weights)), sum(weights));
}

// Patch-wise score/attention head plus the spatial-pooling alternative.
template <Real T>
class PredictionHead {
 public:
  struct Output {
    Tensor<T> score;       // scalar
    Tensor<T> score_map;   // [1,1,H,W], undefined for spatial pooling
    Tensor<T> weight_map;  // [1,1,H,W], strictly positive
  };

  PredictionHead(ParamStore<T>& store, std::size_t in_channels,
                 const HeadConfig& cfg, Rng& rng, const std::string& prefix = "head")
      : cfg_(cfg) {
    score1_ = Conv2d<T>(store, prefix + ".score1", in_channels, cfg.hidden, 3, {1, 1}, rng);
    score2_ = Conv2d<T>(store, prefix + ".score2", cfg.hidden, 1, 1, {}, rng, true, 1.0);
    weight1_ = Conv2d<T>(store, prefix + ".weight1", in_channels, cfg.hidden, 3, {1, 1}, rng);
    weight2_ = Conv2d<T>(store, prefix + ".weight2", cfg.hidden, 1, 1, {}, rng, true, 1.0);
    spatial_weight_ = store.add(prefix + ".spatial.weight", {2 * in_channels, 1},
                                Init::normal, rng,
                                std::sqrt(1.0 / static_cast<double>(2 * in_channels)));
    spatial_bias_ = store.add(prefix + ".spatial.bias", {1}, Init::zeros, rng);
  }

  // 3x3 conv -> ReLU -> 1x1 conv to one unbounded channel.
  Tensor<T> score_branch(const Tensor<T>& f) const {
    return score2_(relu(score1_(f)));
  }

  // Same stack, then sigmoid + eps so every weight is positive.
  Tensor<T> weight_branch(const Tensor<T>& f) const {
    return add_scalar(sigmoid(weight2_(relu(weight1_(f)))),
                      static_cast<T>(cfg_.weight_eps));
  }

  // Per-channel [max, mean] over space -> linear -> scalar.
  Tensor<T> spatial_pool(const Tensor<T>& f) const {
    if (f.rank() != 4 || f.dim(0) != 1) {
      throw DimensionError("spatial_pool expects [1,C,H,W], got " + shape_str(f.shape()));
    }
    const std::size_t c = f.dim(1);
    auto flat = reshape(f, {c, f.dim(2) * f.dim(3)});
    auto stats = reshape(concat<T>({max(flat, 1), mean(flat, 1)}, 0), {1, 2 * c});
    return reshape(add(matmul(stats, spatial_weight_), spatial_bias_), {});
  }

  Output forward(const Tensor<T>& f) const {
    Output out;
    if (cfg_.pooling != Pooling::spatial) {
      out.score_map = score_branch(f);
      out.weight_map = weight_branch(f);
      out.score = weighted_pool(out.score_map, out.weight_map);
    }
    if (cfg_.pooling == Pooling::spatial) {
      out.score = spatial_pool(f);
    } else if (cfg_.pooling == Pooling::patch_spatial) {
      out.score = scale(add(out.score, spatial_pool(f)), T(0.5));
    }
    return out;
  }

  const Conv2d<T>& score1() const { return score1_; }
  const Conv2d<T>& score2() const { return score2_; }
  const Conv2d<T>& weight1() const { return weight1_; }
  const Conv2d<T>& weight2() const { return weight2_; }
  const Tensor<T>& spatial_weight() const { return spatial_weight_; }
  const Tensor<T>& spatial_bias() const { return spatial_bias_; }

 private:
  HeadConfig cfg_;
  Conv2d<T> score1_, score2_, weight1_, weight2_;
  Tensor<T> spatial_weight_, spatial_bias_;
};

}  // namespace ahiq
