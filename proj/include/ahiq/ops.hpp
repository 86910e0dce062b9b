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

// Differentiable elementwise, shape, reduction and normalisation operators.

#pragma once

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <numbers>

#include "ahiq/tensor.hpp"

namespace ahiq {

namespace detail {

template <Real T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <Real T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <Real T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

// b broadcasts onto a when its shape is a trailing suffix of a's (or it
// holds a single value).
inline bool broadcasts_onto(const Shape& big, const Shape& small) {
  if (shape_numel(small) == 1) return true;
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

inline Shape broadcast_shape(const Shape& a, const Shape& b,
                             std::string_view op) {
  if (a == b) return a;
  if (shape_numel(a) >= shape_numel(b) && broadcasts_onto(a, b)) return a;
  if (broadcasts_onto(b, a)) return b;
  throw DimensionError(std::string(op) + ": shapes " + shape_str(a) + " and " +
                       shape_str(b) + " do not broadcast");
}

// out[i] = f(a[i % na], b[i % nb]) with partials (da, db) = df(a, b, out).
template <Real T, typename F, typename DF>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, std::string_view op,
                 F f, DF df) {
  Shape shape = broadcast_shape(a.shape(), b.shape(), op);
  const std::size_t n = shape_numel(shape);
  const std::size_t na = a.numel(), nb = b.numel();
  std::vector<T> out(n);
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = f(ad[i % na], bd[i % nb]);
  return make_result<T>(
      std::move(shape), std::move(out), {&a, &b}, op,
      [df, na, nb](Node<T>& self) {
        const auto& av = self.parents[0]->data;
        const auto& bv = self.parents[1]->data;
        T* ga = parent_grad(self, 0);
        T* gb = parent_grad(self, 1);
        for (std::size_t i = 0; i < self.data.size(); ++i) {
          const T g = self.grad[i];
          const auto [da, db] = df(av[i % na], bv[i % nb], self.data[i]);
          if (ga) ga[i % na] += g * da;
          if (gb) gb[i % nb] += g * db;
        }
      });
}

// y = f(x) with dy/dx = df(x, y).
template <Real T, typename F, typename DF>
Tensor<T> unary(const Tensor<T>& x, std::string_view op, F f, DF df) {
  std::vector<T> out(x.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xd[i]);
  return make_result<T>(x.shape(), std::move(out), {&x}, op,
                        [df](Node<T>& self) {
                          T* gx = parent_grad(self, 0);
                          if (!gx) return;
                          const auto& xv = self.parents[0]->data;
                          for (std::size_t i = 0; i < self.data.size(); ++i) {
                            gx[i] += self.grad[i] * df(xv[i], self.data[i]);
                          }
                        });
}

inline std::size_t normalize_axis(long axis, std::size_t rank) {
  const long r = static_cast<long>(rank);
  if (axis < -r || axis >= r) {
    throw DimensionError("axis " + std::to_string(axis) +
                         " out of range for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(axis < 0 ? axis + r : axis);
}

// Splits a shape around `axis` into (outer, extent, inner) strides.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};
inline AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace detail

template <Real T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(
      a, b, "add", [](T x, T y) { return x + y; },
      [](T, T, T) { return std::pair<T, T>{T(1), T(1)}; });
}

template <Real T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(
      a, b, "sub", [](T x, T y) { return x - y; },
      [](T, T, T) { return std::pair<T, T>{T(1), T(-1)}; });
}

template <Real T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(
      a, b, "mul", [](T x, T y) { return x * y; },
      [](T x, T y, T) { return std::pair<T, T>{y, x}; });
}

template <Real T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(
      a, b, "div", [](T x, T y) { return x / y; },
      [](T x, T y, T) { return std::pair<T, T>{T(1) / y, -x / (y * y)}; });
}

template <Real T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return detail::unary(
      x, "scale", [factor](T v) { return v * factor; },
      [factor](T, T) { return factor; });
}

template <Real T>
Tensor<T> add_scalar(const Tensor<T>& x, T offset) {
  return detail::unary(
      x, "add_scalar", [offset](T v) { return v + offset; },
      [](T, T) { return T(1); });
}

template <Real T>
Tensor<T> square(const Tensor<T>& x) {
  return detail::unary(
      x, "square", [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <Real T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary(
      x, "relu", [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <Real T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary(
      x, "sigmoid", [](T v) { return T(1) / (T(1) + std::exp(-v)); },
      [](T, T y) { return y * (T(1) - y); });
}

// tanh approximation of GELU.
template <Real T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T k = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T c = T(0.044715);
  return detail::unary(
      x, "gelu",
      [](T v) { return T(0.5) * v * (T(1) + std::tanh(k * (v + c * v * v * v))); },
      [](T v, T) {
        const T t = std::tanh(k * (v + c * v * v * v));
        return T(0.5) * (T(1) + t) +
               T(0.5) * v * (T(1) - t * t) * k * (T(1) + T(3) * c * v * v);
      });
}

template <Real T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape " + shape_str(x.shape()) + " to " +
                         shape_str(shape) + " changes element count");
  }
  return make_result<T>(std::move(shape), x.to_vector(), {&x}, "reshape",
                        [](Node<T>& self) {
                          T* gx = detail::parent_grad(self, 0);
                          if (!gx) return;
                          for (std::size_t i = 0; i < self.grad.size(); ++i) {
                            gx[i] += self.grad[i];
                          }
                        });
}

template <Real T>
Tensor<T> transpose(const Tensor<T>& x) {
  if (x.rank() != 2) {
    throw DimensionError("transpose expects a matrix, got " +
                         shape_str(x.shape()));
  }
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<T> out(x.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xd[i * c + j];
  }
  return make_result<T>(Shape{c, r}, std::move(out), {&x}, "transpose",
                        [r, c](Node<T>& self) {
                          T* gx = detail::parent_grad(self, 0);
                          if (!gx) return;
                          for (std::size_t i = 0; i < r; ++i) {
                            for (std::size_t j = 0; j < c; ++j) {
                              gx[i * c + j] += self.grad[j * r + i];
                            }
                          }
                        });
}

template <Real T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " are not aligned");
  }
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  std::vector<T> out(static_cast<std::size_t>(m * n));
  detail::MatMap<T>(out.data(), m, n).noalias() =
      detail::ConstMatMap<T>(a.data().data(), m, k) *
      detail::ConstMatMap<T>(b.data().data(), k, n);
  return make_result<T>(
      Shape{a.dim(0), b.dim(1)}, std::move(out), {&a, &b}, "matmul",
      [m, k, n](Node<T>& self) {
        detail::ConstMatMap<T> g(self.grad.data(), m, n);
        if (T* ga = detail::parent_grad(self, 0)) {
          detail::MatMap<T>(ga, m, k).noalias() +=
              g * detail::ConstMatMap<T>(self.parents[1]->data.data(), k, n)
                      .transpose();
        }
        if (T* gb = detail::parent_grad(self, 1)) {
          detail::MatMap<T>(gb, k, n).noalias() +=
              detail::ConstMatMap<T>(self.parents[0]->data.data(), m, k)
                  .transpose() *
              g;
        }
      });
}

template <Real T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, long axis_arg) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const Shape& first = parts.front().shape();
  const std::size_t axis = detail::normalize_axis(axis_arg, first.size());
  Shape shape = first;
  shape[axis] = 0;
  std::vector<std::size_t> extents;
  for (const auto& p : parts) {
    bool ok = p.rank() == first.size();
    for (std::size_t d = 0; ok && d < first.size(); ++d) {
      ok = d == axis || p.dim(d) == first[d];
    }
    if (!ok) {
      throw DimensionError("concat along axis " + std::to_string(axis) +
                           ": " + shape_str(first) + " vs " +
                           shape_str(p.shape()));
    }
    extents.push_back(p.dim(axis));
    shape[axis] += p.dim(axis);
  }
  const auto split = detail::split_axis(shape, axis);
  std::vector<T> out(shape_numel(shape));
  std::size_t base = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto src = parts[pi].data();
    const std::size_t chunk = extents[pi] * split.inner;
    for (std::size_t o = 0; o < split.outer; ++o) {
      std::copy_n(src.begin() + o * chunk, chunk,
                  out.begin() + o * split.extent * split.inner + base);
    }
    base += chunk;
  }
  return make_result<T>(
      std::move(shape), std::move(out), parts, "concat",
      [split, extents](Node<T>& self) {
        std::size_t base = 0;
        for (std::size_t pi = 0; pi < extents.size(); ++pi) {
          const std::size_t chunk = extents[pi] * split.inner;
          if (T* gp = detail::parent_grad(self, pi)) {
            for (std::size_t o = 0; o < split.outer; ++o) {
              const T* g =
                  self.grad.data() + o * split.extent * split.inner + base;
              for (std::size_t i = 0; i < chunk; ++i) gp[o * chunk + i] += g[i];
            }
          }
          base += chunk;
        }
      });
}

// Slice [start, start + length) along `axis`.
template <Real T>
Tensor<T> narrow(const Tensor<T>& x, long axis_arg, std::size_t start,
                 std::size_t length) {
  const std::size_t axis = detail::normalize_axis(axis_arg, x.rank());
  if (length == 0 || start + length > x.dim(axis)) {
    throw DimensionError("narrow [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") exceeds axis " +
                         std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  const auto split = detail::split_axis(x.shape(), axis);
  Shape shape = x.shape();
  shape[axis] = length;
  std::vector<T> out(shape_numel(shape));
  const auto xd = x.data();
  const std::size_t chunk = length * split.inner;
  for (std::size_t o = 0; o < split.outer; ++o) {
    std::copy_n(xd.begin() + (o * split.extent + start) * split.inner, chunk,
                out.begin() + o * chunk);
  }
  return make_result<T>(
      std::move(shape), std::move(out), {&x}, "narrow",
      [split, start, chunk](Node<T>& self) {
        T* gx = detail::parent_grad(self, 0);
        if (!gx) return;
        for (std::size_t o = 0; o < split.outer; ++o) {
          T* dst = gx + (o * split.extent + start) * split.inner;
          const T* g = self.grad.data() + o * chunk;
          for (std::size_t i = 0; i < chunk; ++i) dst[i] += g[i];
        }
      });
}

template <Real T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = T(0);
  for (T v : x.data()) acc += v;
  return make_result<T>(Shape{}, {acc}, {&x}, "sum", [](Node<T>& self) {
    T* gx = detail::parent_grad(self, 0);
    if (!gx) return;
    const T g = self.grad[0];
    const std::size_t n = self.parents[0]->data.size();
    for (std::size_t i = 0; i < n; ++i) gx[i] += g;
  });
}

template <Real T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

namespace detail {
template <Real T>
Shape drop_axis(const Shape& shape, std::size_t axis) {
  Shape out = shape;
  out.erase(out.begin() + static_cast<long>(axis));
  return out;
}
}  // namespace detail

// Sum over one axis; the axis is removed from the result shape.
template <Real T>
Tensor<T> sum(const Tensor<T>& x, long axis_arg) {
  const std::size_t axis = detail::normalize_axis(axis_arg, x.rank());
  const auto s = detail::split_axis(x.shape(), axis);
  std::vector<T> out(s.outer * s.inner, T(0));
  const auto xd = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t e = 0; e < s.extent; ++e) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        out[o * s.inner + i] += xd[(o * s.extent + e) * s.inner + i];
      }
    }
  }
  return make_result<T>(detail::drop_axis<T>(x.shape(), axis), std::move(out),
                        {&x}, "sum_axis", [s](Node<T>& self) {
                          T* gx = detail::parent_grad(self, 0);
                          if (!gx) return;
                          for (std::size_t o = 0; o < s.outer; ++o) {
                            for (std::size_t e = 0; e < s.extent; ++e) {
                              for (std::size_t i = 0; i < s.inner; ++i) {
                                gx[(o * s.extent + e) * s.inner + i] +=
                                    self.grad[o * s.inner + i];
                              }
                            }
                          }
                        });
}

template <Real T>
Tensor<T> mean(const Tensor<T>& x, long axis_arg) {
  const std::size_t axis = detail::normalize_axis(axis_arg, x.rank());
  return scale(sum(x, axis_arg), T(1) / static_cast<T>(x.dim(axis)));
}

// Maximum over one axis; gradient routes to the first maximal element.
template <Real T>
Tensor<T> max(const Tensor<T>& x, long axis_arg) {
  const std::size_t axis = detail::normalize_axis(axis_arg, x.rank());
  const auto s = detail::split_axis(x.shape(), axis);
  std::vector<T> out(s.outer * s.inner);
  std::vector<std::size_t> argmax(out.size());
  const auto xd = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      std::size_t best = o * s.extent * s.inner + i;
      for (std::size_t e = 1; e < s.extent; ++e) {
        const std::size_t idx = (o * s.extent + e) * s.inner + i;
        if (xd[idx] > xd[best]) best = idx;
      }
      out[o * s.inner + i] = xd[best];
      argmax[o * s.inner + i] = best;
    }
  }
  return make_result<T>(detail::drop_axis<T>(x.shape(), axis), std::move(out),
                        {&x}, "max_axis",
                        [argmax = std::move(argmax)](Node<T>& self) {
                          T* gx = detail::parent_grad(self, 0);
                          if (!gx) return;
                          for (std::size_t j = 0; j < argmax.size(); ++j) {
                            gx[argmax[j]] += self.grad[j];
                          }
                        });
}

template <Real T>
Tensor<T> softmax(const Tensor<T>& x, long axis_arg) {
  const std::size_t axis = detail::normalize_axis(axis_arg, x.rank());
  const auto s = detail::split_axis(x.shape(), axis);
  std::vector<T> out(x.numel());
  const auto xd = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      T peak = -std::numeric_limits<T>::infinity();
      for (std::size_t e = 0; e < s.extent; ++e) {
        peak = std::max(peak, xd[base + e * s.inner]);
      }
      T total = T(0);
      for (std::size_t e = 0; e < s.extent; ++e) {
        const T v = std::exp(xd[base + e * s.inner] - peak);
        out[base + e * s.inner] = v;
        total += v;
      }
      for (std::size_t e = 0; e < s.extent; ++e) out[base + e * s.inner] /= total;
    }
  }
  return make_result<T>(x.shape(), std::move(out), {&x}, "softmax",
                        [s](Node<T>& self) {
                          T* gx = detail::parent_grad(self, 0);
                          if (!gx) return;
                          const auto& y = self.data;
                          const auto& g = self.grad;
                          for (std::size_t o = 0; o < s.outer; ++o) {
                            for (std::size_t i = 0; i < s.inner; ++i) {
                              const std::size_t base = o * s.extent * s.inner + i;
                              T dot = T(0);
                              for (std::size_t e = 0; e < s.extent; ++e) {
                                const std::size_t k = base + e * s.inner;
                                dot += g[k] * y[k];
                              }
                              for (std::size_t e = 0; e < s.extent; ++e) {
                                const std::size_t k = base + e * s.inner;
                                gx[k] += y[k] * (g[k] - dot);
                              }
                            }
                          }
                        });
}

// Normalises each row over the last axis to zero mean and unit (biased)
// variance. Affine scale/shift is applied separately by the caller.
template <Real T>
Tensor<T> layernorm(const Tensor<T>& x, T eps) {
  if (x.rank() == 0) throw DimensionError("layernorm on a scalar");
  const std::size_t width = x.shape().back();
  const std::size_t rows = x.numel() / width;
  std::vector<T> out(x.numel());
  std::vector<T> inv_std(rows);
  const auto xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xd.data() + r * width;
    T mu = T(0);
    for (std::size_t i = 0; i < width; ++i) mu += row[i];
    mu /= static_cast<T>(width);
    T var = T(0);
    for (std::size_t i = 0; i < width; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<T>(width);
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t i = 0; i < width; ++i) {
      out[r * width + i] = (row[i] - mu) * inv_std[r];
    }
  }
  return make_result<T>(
      x.shape(), std::move(out), {&x}, "layernorm",
      [width, rows, inv_std = std::move(inv_std)](Node<T>& self) {
        T* gx = detail::parent_grad(self, 0);
        if (!gx) return;
        const T n = static_cast<T>(width);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* g = self.grad.data() + r * width;
          const T* y = self.data.data() + r * width;
          T g_mean = T(0), gy_mean = T(0);
          for (std::size_t i = 0; i < width; ++i) {
            g_mean += g[i];
            gy_mean += g[i] * y[i];
          }
          g_mean /= n;
          gy_mean /= n;
          for (std::size_t i = 0; i < width; ++i) {
            gx[r * width + i] += inv_std[r] * (g[i] - g_mean - y[i] * gy_mean);
          }
        }
      });
}

// Mean squared error over all elements; shapes must hold equal counts.
template <Real T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.numel() != target.numel()) {
    throw DimensionError("mse_loss: " + shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()));
  }
  const auto p = pred.data();
  const auto t = target.data();
  T acc = T(0);
  for (std::size_t i = 0; i < p.size(); ++i) acc += (p[i] - t[i]) * (p[i] - t[i]);
  const T n = static_cast<T>(p.size());
  return make_result<T>(Shape{}, {acc / n}, {&pred, &target}, "mse_loss",
                        [n](Node<T>& self) {
                          const auto& pv = self.parents[0]->data;
                          const auto& tv = self.parents[1]->data;
                          const T g = self.grad[0] * T(2) / n;
                          T* gp = detail::parent_grad(self, 0);
                          T* gt = detail::parent_grad(self, 1);
                          for (std::size_t i = 0; i < pv.size(); ++i) {
                            const T d = g * (pv[i] - tv[i]);
                            if (gp) gp[i] += d;
                            if (gt) gt[i] -= d;
                          }
                        });
}

}  // namespace ahiq
