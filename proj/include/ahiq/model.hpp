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

#include "ahiq/backbones.hpp"
#include "ahiq/checkpoint.hpp"
#include "ahiq/fusion.hpp"
#include "ahiq/head.hpp"

namespace ahiq {

inline constexpr const char* kConfigEchoName = "meta.config";

// The full pair-in, score-out network.
template <Real T>
class AhiqModel {
 public:
  struct Prediction {
    Tensor<T> score;        // scalar, MOS units
    Tensor<T> score_map;    // [1,1,p,p]
    Tensor<T> weight_map;   // [1,1,p,p]
    Tensor<T> offsets_ref;  // [1,2K^2,rp,rp] when the deformable path runs
    Tensor<T> offsets_dis;
    Tensor<T> fused;        // f_out
  };

  explicit AhiqModel(const ModelConfig& cfg, std::uint64_t seed = 0)
      : cfg_((cfg.validate(), cfg)),
        rng_(seed),
        vit_(params_, cfg_.vit, rng_),
        cnn_(params_, cfg_.cnn, rng_),
        fusion_(params_, cfg_, rng_),
        head_(params_, cfg_.fusion.out_channels, cfg_.head, rng_) {}

  AhiqModel(const AhiqModel&) = delete;
  AhiqModel& operator=(const AhiqModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }
  const VisionTransformer<T>& vit() const { return vit_; }
  const ResidualCNN<T>& cnn() const { return cnn_; }
  const FeatureFusion<T>& fusion() const { return fusion_; }
  const PredictionHead<T>& head() const { return head_; }

  // ref, dist: normalised [3,224,224] images.
  Prediction forward(const Tensor<T>& ref, const Tensor<T>& dist) const {
    const auto& f = cfg_.fusion;
    Tensor<T> vit_ref, vit_dis, cnn_ref, cnn_dis;
    if (f.uses_vit()) {
      vit_ref = vit_.extract(ref);
      vit_dis = vit_.extract(dist);
    }
    if (f.uses_cnn()) {
      cnn_ref = cnn_.extract(ref, cfg_.vit.image_size);
      cnn_dis = cnn_.extract(dist, cfg_.vit.image_size);
    }
    auto fused = fusion_.forward(vit_dis, cnn_dis, vit_ref, cnn_ref);
    auto head = head_.forward(fused.fused);
    return {head.score, head.score_map, head.weight_map, fused.offsets_ref,
            fused.offsets_dis, fused.fused};
  }

  // Offset field steered by the reference image alone.
  Tensor<T> offsets(const Tensor<T>& ref) const {
    if (!cfg_.fusion.uses_deform()) {
      throw ConfigError("fusion strategy " + to_string(cfg_.fusion.strategy) +
                        " has no deformable offsets");
    }
    return fusion_.predict_offsets(vit_.extract(ref));
  }

  // Names and shapes of every tensor a checkpoint for this geometry holds.
  std::vector<std::pair<std::string, Shape>> load_list() const {
    std::vector<std::pair<std::string, Shape>> out;
    for (const auto& e : params_.entries()) out.emplace_back(e.name, e.tensor.shape());
    out.emplace_back(kConfigEchoName, Shape{cfg_.echo().size()});
    return out;
  }

  TensorMap state() const {
    TensorMap m;
    for (const auto& e : params_.entries()) {
      m.insert(e.name, e.tensor.shape(), e.tensor.to_vector());
    }
    const auto echo = cfg_.echo();
    if constexpr (std::is_same_v<T, float>) {
      m.insert(kConfigEchoName, Shape{echo.size()},
               std::vector<float>(echo.begin(), echo.end()));
    } else {
      m.insert(kConfigEchoName, Shape{echo.size()}, echo);
    }
    return m;
  }

  // Backbone tensors only; the set a pretrained-weight export must provide.
  std::vector<std::pair<std::string, Shape>> backbone_load_list() const {
    std::vector<std::pair<std::string, Shape>> out;
    for (const auto& e : params_.entries()) {
      if (is_backbone(e.name)) out.emplace_back(e.name, e.tensor.shape());
    }
    return out;
  }

  // Validates every tensor before copying any; on mismatch nothing changes.
  void load_state(const TensorMap& m) { load(m, false); }

  // Loads exactly the backbone tensors; fusion and head keep their values.
  void load_backbones(const TensorMap& m) { load(m, true); }

 private:
  static bool is_backbone(const std::string& name) {
    return name.starts_with("vit.") || name.starts_with("cnn.");
  }

  void load(const TensorMap& m, bool backbones_only) {
    constexpr DType want = std::is_same_v<T, float> ? DType::f32 : DType::f64;
    auto wanted = [&](const std::string& name) {
      return !backbones_only || is_backbone(name);
    };
    std::vector<std::string> bad;
    std::ostringstream detail;
    for (const auto& e : params_.entries()) {
      if (!wanted(e.name)) continue;
      const StoredTensor* s = m.find(e.name);
      if (!s) {
        bad.push_back(e.name);
        detail << "\n  " << e.name << ": missing";
      } else if (s->dtype() != want || s->shape != e.tensor.shape()) {
        bad.push_back(e.name);
        detail << "\n  " << e.name << ": checkpoint " << to_string(s->dtype())
               << shape_str(s->shape) << ", model " << to_string(want)
               << shape_str(e.tensor.shape());
      }
    }
    for (const auto& s : m.items()) {
      const bool is_echo = s.name == kConfigEchoName;
      if ((is_echo && backbones_only) ||
          (!is_echo && (!params_.contains(s.name) || !wanted(s.name)))) {
        bad.push_back(s.name);
        detail << "\n  " << s.name << ": not part of this geometry";
      }
    }
    if (const StoredTensor* echo = m.find(kConfigEchoName); echo && !backbones_only) {
      const auto mine = cfg_.echo();
      bool same = echo->size() == mine.size();
      std::visit(
          [&](const auto& v) {
            for (std::size_t i = 0; same && i < v.size(); ++i) {
              same = static_cast<double>(v[i]) == mine[i];
            }
          },
          echo->values);
      if (!same) {
        bad.push_back(kConfigEchoName);
        detail << "\n  " << kConfigEchoName << ": configuration differs";
      }
    }
    if (!bad.empty()) {
      throw StateMismatchError("checkpoint does not match model geometry:" + detail.str(),
                               std::move(bad));
    }
    for (auto& e : params_.entries()) {
      if (!wanted(e.name)) continue;
      const auto& src = std::get<std::vector<T>>(m.find(e.name)->values);
      auto dst = Tensor<T>(e.tensor).mutable_data();
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }

  ModelConfig cfg_;
  Rng rng_;
  ParamStore<T> params_;
  VisionTransformer<T> vit_;
  ResidualCNN<T> cnn_;
  FeatureFusion<T> fusion_;
  PredictionHead<T> head_;
};

}  // namespace ahiq
