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

// Optimiser, learning-rate schedule, training loop and evaluation reports.

#pragma once

#include <cstdio>
#include <limits>
#include <numbers>

#include "ahiq/data.hpp"
#include "ahiq/metrics.hpp"
#include "ahiq/model.hpp"

namespace ahiq {

// Cosine annealing indexed by epoch; flat at eta_min past t_max.
inline double cosine_lr(std::size_t epoch, double eta_max = 1e-4, std::size_t t_max = 50,
                        double eta_min = 0.0) {
  if (t_max == 0) throw ConfigError("cosine schedule needs t_max >= 1");
  const double t = static_cast<double>(std::min(epoch, t_max)) / static_cast<double>(t_max);
  return eta_min + 0.5 * (eta_max - eta_min) * (1.0 + std::cos(std::numbers::pi * t));
}

struct AdamWConfig {
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with decoupled weight decay. Moments are kept in double.
template <Real T>
class AdamW {
 public:
  explicit AdamW(ParamStore<T>& params, AdamWConfig cfg = {}) : params_(params), cfg_(cfg) {
    for (const auto& e : params_.entries()) {
      m_.emplace_back(e.tensor.numel(), 0.0);
      v_.emplace_back(e.tensor.numel(), 0.0);
    }
  }

  const AdamWConfig& config() const { return cfg_; }
  std::size_t steps() const { return step_; }
  const std::vector<double>& first_moment(std::size_t i) const { return m_.at(i); }
  const std::vector<double>& second_moment(std::size_t i) const { return v_.at(i); }

  // Parameters without a gradient are left alone. Any non-finite gradient
  // aborts before a single value changes.
  void step(double lr) {
    auto& entries = params_.entries();
    for (const auto& e : entries) {
      for (T g : e.tensor.grad()) {
        if (!std::isfinite(static_cast<double>(g))) {
          throw NonFiniteError("non-finite gradient in " + e.name + "; step aborted");
        }
      }
    }
    ++step_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    const double decay = 1.0 - lr * cfg_.weight_decay;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      Tensor<T> p = entries[i].tensor;
      if (!p.has_grad()) continue;
      const auto g = p.grad();
      auto theta = p.mutable_data();
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t k = 0; k < theta.size(); ++k) {
        const double gk = g[k];
        m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * gk;
        v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * gk * gk;
        double t = static_cast<double>(theta[k]) * decay;
        t -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg_.eps);
        theta[k] = static_cast<T>(t);
      }
    }
  }

 private:
  ParamStore<T>& params_;
  AdamWConfig cfg_;
  std::size_t step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct TrainConfig {
  std::size_t batch_size = 8;
  std::size_t epochs = 50;
  std::size_t t_max = 50;
  double lr = 1e-4;
  double eta_min = 0.0;
  AdamWConfig adamw;
  std::uint64_t seed = 0;
  std::size_t eval_crops = kEvalCrops;
  double flip_probability = 0.5;
  bool validate_each_epoch = true;

  void validate() const {
    if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
    if (t_max == 0) throw ConfigError("train.t_max must be >= 1");
    if (eval_crops == 0) throw ConfigError("train.eval_crops must be >= 1");
    if (!(lr >= 0.0) || !(adamw.weight_decay >= 0.0)) {
      throw ConfigError("train.lr and train.weight_decay must be non-negative");
    }
    if (!(flip_probability >= 0.0 && flip_probability <= 1.0)) {
      throw ConfigError("train.flip_probability must lie in [0, 1]");
    }
  }
};

inline std::string format_fixed(double v, int decimals = 6) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

struct EvalRow {
  std::string sample_id;
  double predicted = 0.0;
  double mos = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;  // sorted by sample_id
  double plcc = 0.0;
  double srocc = 0.0;
  double main = 0.0;

  std::string to_csv() const {
    std::string out = "sample_id,predicted,mos\n";
    for (const auto& r : rows) {
      out += r.sample_id + ',' + format_fixed(r.predicted) + ',' + format_fixed(r.mos) + '\n';
    }
    out += "# plcc=" + format_fixed(plcc) + '\n';
    out += "# srocc=" + format_fixed(srocc) + '\n';
    out += "# main=" + format_fixed(main) + '\n';
    return out;
  }
};

// Crop RNG for one sample: depends on the seed and the id only, so the
// score of a sample does not depend on its neighbours.
inline Rng sample_rng(std::uint64_t seed, const std::string& sample_id) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed),
                                   static_cast<std::uint32_t>(seed >> 32)};
  for (unsigned char c : sample_id) words.push_back(c);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

// Image-pair scorer backed by a model, gradients off.
template <Real T>
auto model_scorer(const AhiqModel<T>& model) {
  return [&model](const Image& ref, const Image& dist) {
    NoGradGuard guard;
    return static_cast<double>(
        model.forward(normalize<T>(ref), normalize<T>(dist)).score.item());
  };
}

// Multi-crop score per sample, then correlations over the split.
// Degenerate predictions raise DegenerateInputError.
template <typename Scorer>
EvalReport evaluate(Scorer&& scorer, const std::vector<ImagePairSample>& samples,
                    ImageCache& images, std::uint64_t seed,
                    std::size_t crops = kEvalCrops) {
  if (samples.empty()) throw std::invalid_argument("evaluate needs a non-empty split");
  EvalReport report;
  for (const auto& s : samples) {
    Rng rng = sample_rng(seed, s.sample_id());
    const double score =
        twenty_crop_score(scorer, images.get(s.ref_path), images.get(s.dist_path), rng, crops);
    report.rows.push_back({s.sample_id(), score, s.mos});
  }
  std::stable_sort(report.rows.begin(), report.rows.end(),
                   [](const EvalRow& a, const EvalRow& b) { return a.sample_id < b.sample_id; });
  std::vector<double> pred, mos;
  for (const auto& r : report.rows) {
    pred.push_back(r.predicted);
    mos.push_back(r.mos);
  }
  report.plcc = plcc(pred, mos);
  report.srocc = srocc(pred, mos);
  report.main = main_score(report.plcc, report.srocc);
  return report;
}

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double val_plcc = std::numeric_limits<double>::quiet_NaN();
  double val_srocc = std::numeric_limits<double>::quiet_NaN();

  std::string line() const {
    return "epoch=" + std::to_string(epoch) + " lr=" + format_fixed(lr) +
           " loss=" + format_fixed(loss) + " val_plcc=" + format_fixed(val_plcc) +
           " val_srocc=" + format_fixed(val_srocc);
  }
};

struct TrainResult {
  TensorMap best;
  std::optional<std::size_t> best_epoch;  // empty: initial weights kept
  double best_main = std::numeric_limits<double>::quiet_NaN();
  std::vector<EpochLog> log;

  std::string log_text() const {
    std::string out;
    for (const auto& e : log) out += e.line() + '\n';
    return out;
  }
};

namespace detail {
inline void seeded_shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(v[i - 1], v[pick(rng)]);
  }
}
}  // namespace detail

// Mini-batch AdamW on MSE with a per-epoch cosine schedule. The state with
// the best validation main score is kept; when validation never yields a
// finite score the final state is kept instead.
template <Real T>
TrainResult train(AhiqModel<T>& model, const std::vector<ImagePairSample>& train_set,
                  const std::vector<ImagePairSample>& val_set, const TrainConfig& cfg,
                  ImageCache& images, std::ostream* log = nullptr) {
  cfg.validate();
  if (train_set.empty()) throw std::invalid_argument("train needs a non-empty training split");
  if (cfg.validate_each_epoch && val_set.empty()) {
    throw std::invalid_argument("train needs a non-empty validation split");
  }
  TrainResult result;
  result.best = model.state();
  if (cfg.epochs == 0) return result;

  Rng rng(cfg.seed);
  AdamW<T> opt(model.params(), cfg.adamw);
  std::vector<std::size_t> order(train_set.size());

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = cosine_lr(epoch, cfg.lr, cfg.t_max, cfg.eta_min);
    std::iota(order.begin(), order.end(), std::size_t{0});
    detail::seeded_shuffle(order, rng);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const T scale = T(1) / static_cast<T>(end - start);
      model.params().zero_grad();
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const auto& s = train_set[order[k]];
        auto [ref, dist] = paired_random_crop(images.get(s.ref_path), images.get(s.dist_path),
                                              kCropSize, rng);
        std::tie(ref, dist) = paired_hflip(ref, dist, cfg.flip_probability, rng);
        auto pred = model.forward(normalize<T>(ref), normalize<T>(dist)).score;
        auto target = Tensor<T>::scalar(static_cast<T>(s.mos));
        auto loss = mse_loss(pred, target);
        batch_loss += static_cast<double>(loss.item());
        backward(ahiq::scale(loss, scale));
      }
      if (!std::isfinite(batch_loss)) {
        std::string ids;
        for (std::size_t k = start; k < end; ++k) {
          ids += (ids.empty() ? "" : ", ") + train_set[order[k]].sample_id();
        }
        throw NonFiniteError("non-finite loss at epoch " + std::to_string(epoch) +
                             " in batch [" + ids + "]");
      }
      loss_sum += batch_loss;
      opt.step(entry.lr);
    }
    model.params().zero_grad();
    entry.loss = loss_sum / static_cast<double>(order.size());

    double main = std::numeric_limits<double>::quiet_NaN();
    if (cfg.validate_each_epoch) {
      try {
        const auto rep = evaluate(model_scorer(model), val_set, images, cfg.seed, cfg.eval_crops);
        entry.val_plcc = rep.plcc;
        entry.val_srocc = rep.srocc;
        main = rep.main;
      } catch (const DegenerateInputError&) {
      }
    }
    const bool improved = std::isfinite(main) &&
                          (!std::isfinite(result.best_main) || main > result.best_main);
    if (improved) {
      result.best = model.state();
      result.best_epoch = epoch;
      result.best_main = main;
    } else if (!std::isfinite(result.best_main) && epoch + 1 == cfg.epochs) {
      result.best = model.state();
      result.best_epoch = epoch;
    }
    if (log) *log << entry.line() << '\n' << std::flush;
    result.log.push_back(entry);
  }
  return result;
}

}  // namespace ahiq
