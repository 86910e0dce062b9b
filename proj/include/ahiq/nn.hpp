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

#include <cmath>
#include <map>
#include <random>

#include "ahiq/conv.hpp"

namespace ahiq {

using Rng = std::mt19937_64;

enum class Init { zeros, ones, normal };

// Ordered, uniquely named collection of trainable leaves.
template <Real T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
  };

  Tensor<T> add(const std::string& name, Shape shape, Init init, Rng& rng,
                double stddev = 0.0) {
    if (index_.count(name)) {
      throw ContractError("duplicate parameter name " + name);
    }
    const std::size_t n = shape_numel(shape);
    std::vector<T> values(n, T(0));
    if (init == Init::ones) {
      std::fill(values.begin(), values.end(), T(1));
    } else if (init == Init::normal) {
      std::normal_distribution<double> dist(0.0, stddev);
      for (auto& v : values) v = static_cast<T>(dist(rng));
    }
    Tensor<T> t(std::move(shape), std::move(values), true);
    index_[name] = entries_.size();
    entries_.push_back({name, t});
    return t;
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  Tensor<T> get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter " + name);
    return entries_[it->second].tensor;
  }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t parameter_count() const {
    std::size_t total = 0;
    for (const auto& e : entries_) total += e.tensor.numel();
    return total;
  }

  void zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

// y = x W + b with W stored [in, out].
template <Real T>
struct Linear {
  Tensor<T> weight, bias;

  Linear() = default;
  Linear(ParamStore<T>& store, const std::string& name, std::size_t in,
         std::size_t out, Rng& rng, double stddev = 0.02)
      : weight(store.add(name + ".weight", {in, out}, Init::normal, rng, stddev)),
        bias(store.add(name + ".bias", {out}, Init::zeros, rng)) {}

  Tensor<T> operator()(const Tensor<T>& x) const {
    return add(matmul(x, weight), bias);
  }
};

template <Real T>
struct Conv2d {
  Tensor<T> weight;
  std::optional<Tensor<T>> bias;
  Conv2dOptions options;

  Conv2d() = default;
  // He-normal weights (fan-in), zero bias.
  Conv2d(ParamStore<T>& store, const std::string& name, std::size_t in,
         std::size_t out, std::size_t kernel, Conv2dOptions opt, Rng& rng,
         bool with_bias = true, double gain = 2.0)
      : weight(store.add(name + ".weight", {out, in, kernel, kernel},
                         Init::normal, rng,
                         std::sqrt(gain / static_cast<double>(in * kernel * kernel)))),
        options(opt) {
    if (with_bias) bias = store.add(name + ".bias", {out}, Init::zeros, rng);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    return conv2d(x, weight, bias, options);
  }
};

template <Real T>
struct LayerNorm {
  Tensor<T> gamma, beta;
  T eps = T(1e-6);

  LayerNorm() = default;
  LayerNorm(ParamStore<T>& store, const std::string& name, std::size_t width,
            Rng& rng)
      : gamma(store.add(name + ".weight", {width}, Init::ones, rng)),
        beta(store.add(name + ".bias", {width}, Init::zeros, rng)) {}

  Tensor<T> operator()(const Tensor<T>& x) const {
    return add(mul(layernorm(x, eps), gamma), beta);
  }
};

}  // namespace ahiq
