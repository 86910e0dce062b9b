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

// Spatial operators on NCHW feature maps: convolution (cross-correlation),
// max pooling, bilinear resampling and deformable convolution.

#pragma once

#include <array>
#include <optional>

#include "ahiq/ops.hpp"

namespace ahiq {

// How a strided window count that does not divide evenly is resolved.
enum class Rounding {
  exact,  // (extent + 2*pad - kernel) must be a multiple of stride
  floor,  // trailing partial window dropped
};

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  Rounding rounding = Rounding::exact;
};

namespace detail {

inline std::size_t window_count(std::size_t extent, std::size_t kernel,
                                std::size_t stride, std::size_t padding,
                                Rounding rounding, std::string_view op) {
  const long span = static_cast<long>(extent + 2 * padding) -
                    static_cast<long>(kernel);
  if (stride == 0 || span < 0) {
    throw GeometryError(std::string(op) + ": kernel " + std::to_string(kernel) +
                        " does not fit extent " + std::to_string(extent) +
                        " with padding " + std::to_string(padding));
  }
  if (rounding == Rounding::exact && span % static_cast<long>(stride) != 0) {
    throw GeometryError(std::string(op) + ": (" + std::to_string(extent) +
                        " + 2*" + std::to_string(padding) + " - " +
                        std::to_string(kernel) + ")/" + std::to_string(stride) +
                        " is not an integer output extent");
  }
  return static_cast<std::size_t>(span) / stride + 1;
}

struct ConvGeometry {
  std::size_t channels, height, width;
  std::size_t kh, kw;
  std::size_t stride, pad;
  std::size_t out_h, out_w;
};

// cols[(c*kh + i)*kw + j][oy*out_w + ox] = x[c][oy*s - p + i][ox*s - p + j]
template <Real T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
  const std::size_t plane = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = cols + ((c * g.kh + i) * g.kw + j) * plane;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + i) -
                          static_cast<long>(g.pad);
          T* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.height)) {
            std::fill_n(dst, g.out_w, T(0));
            continue;
          }
          const T* src = x + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + j) -
                            static_cast<long>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.width))
                          ? T(0)
                          : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

template <Real T>
void col2im_add(const T* cols, const ConvGeometry& g, T* x) {
  const std::size_t plane = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = cols + ((c * g.kh + i) * g.kw + j) * plane;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + i) -
                          static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          T* dst = x + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + j) -
                            static_cast<long>(g.pad);
            if (ix >= 0 && ix < static_cast<long>(g.width)) {
              dst[static_cast<std::size_t>(ix)] += row[oy * g.out_w + ox];
            }
          }
        }
      }
    }
  }
}

inline bool is_pointwise(const ConvGeometry& g) {
  return g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0;
}

}  // namespace detail

// Cross-correlation of x [N,C,H,W] with weight [O,C,Kh,Kw] plus optional
// bias [O]; zero padding.
template <Real T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight,
                 const std::optional<Tensor<T>>& bias, Conv2dOptions opt = {}) {
  if (x.rank() != 4 || weight.rank() != 4 || x.dim(1) != weight.dim(1)) {
    throw DimensionError("conv2d: input " + shape_str(x.shape()) +
                         " incompatible with kernel " +
                         shape_str(weight.shape()));
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != weight.dim(0))) {
    throw DimensionError("conv2d: bias " + shape_str(bias->shape()) +
                         " for kernel " + shape_str(weight.shape()));
  }
  detail::ConvGeometry g{x.dim(1), x.dim(2), x.dim(3), weight.dim(2),
                         weight.dim(3), opt.stride, opt.padding, 0, 0};
  g.out_h = detail::window_count(g.height, g.kh, g.stride, g.pad, opt.rounding,
                                 "conv2d");
  g.out_w = detail::window_count(g.width, g.kw, g.stride, g.pad, opt.rounding,
                                 "conv2d");
  const std::size_t batch = x.dim(0), out_c = weight.dim(0);
  const auto plane = static_cast<Eigen::Index>(g.out_h * g.out_w);
  const auto patch = static_cast<Eigen::Index>(g.channels * g.kh * g.kw);
  const auto oc = static_cast<Eigen::Index>(out_c);
  const bool pointwise = detail::is_pointwise(g);

  std::vector<T> out(batch * out_c * static_cast<std::size_t>(plane));
  std::vector<T> cols(pointwise ? 0 : static_cast<std::size_t>(patch * plane));
  detail::ConstMatMap<T> w(weight.data().data(), oc, patch);
  const T* xd = x.data().data();
  const std::size_t in_stride = g.channels * g.height * g.width;
  for (std::size_t n = 0; n < batch; ++n) {
    const T* col_ptr = xd + n * in_stride;
    if (!pointwise) {
      detail::im2col(col_ptr, g, cols.data());
      col_ptr = cols.data();
    }
    detail::MatMap<T> y(out.data() + n * out_c * plane, oc, plane);
    y.noalias() = w * detail::ConstMatMap<T>(col_ptr, patch, plane);
    if (bias) {
      const auto bd = bias->data();
      for (Eigen::Index o = 0; o < oc; ++o) y.row(o).array() += bd[o];
    }
  }

  std::vector<Tensor<T>> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return make_result<T>(
      Shape{batch, out_c, g.out_h, g.out_w}, std::move(out), inputs, "conv2d",
      [g, batch, oc, plane, patch, pointwise](Node<T>& self) {
        const T* xd = self.parents[0]->data.data();
        detail::ConstMatMap<T> w(self.parents[1]->data.data(), oc, patch);
        T* gx = detail::parent_grad(self, 0);
        T* gw = detail::parent_grad(self, 1);
        T* gb = self.parents.size() > 2 ? detail::parent_grad(self, 2) : nullptr;
        const std::size_t in_stride = g.channels * g.height * g.width;
        std::vector<T> cols(pointwise ? 0 : static_cast<std::size_t>(patch * plane));
        std::vector<T> gcols(gx && !pointwise ? cols.size() : 0);
        for (std::size_t n = 0; n < batch; ++n) {
          detail::ConstMatMap<T> gy(self.grad.data() + n * oc * plane, oc, plane);
          if (gb) {
            for (Eigen::Index o = 0; o < oc; ++o) gb[o] += gy.row(o).sum();
          }
          if (gw) {
            const T* col_ptr = xd + n * in_stride;
            if (!pointwise) {
              detail::im2col(col_ptr, g, cols.data());
              col_ptr = cols.data();
            }
            detail::MatMap<T>(gw, oc, patch).noalias() +=
                gy * detail::ConstMatMap<T>(col_ptr, patch, plane).transpose();
          }
          if (gx) {
            if (pointwise) {
              detail::MatMap<T>(gx + n * in_stride, patch, plane).noalias() +=
                  w.transpose() * gy;
            } else {
              detail::MatMap<T>(gcols.data(), patch, plane).noalias() =
                  w.transpose() * gy;
              detail::col2im_add(gcols.data(), g, gx + n * in_stride);
            }
          }
        }
      });
}

template <Real T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight,
                 Conv2dOptions opt = {}) {
  return conv2d(x, weight, std::optional<Tensor<T>>{}, opt);
}

// Max pooling with implicit -inf padding and floor rounding.
template <Real T>
Tensor<T> max_pool2d(const Tensor<T>& x, std::size_t kernel, std::size_t stride,
                     std::size_t padding) {
  if (x.rank() != 4) {
    throw DimensionError("max_pool2d expects NCHW, got " + shape_str(x.shape()));
  }
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh =
      detail::window_count(h, kernel, stride, padding, Rounding::floor, "max_pool2d");
  const std::size_t ow =
      detail::window_count(w, kernel, stride, padding, Rounding::floor, "max_pool2d");
  std::vector<T> out(n * c * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  const auto xd = x.data();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_idx = base;
        for (std::size_t i = 0; i < kernel; ++i) {
          const long iy = static_cast<long>(oy * stride + i) - static_cast<long>(padding);
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (std::size_t j = 0; j < kernel; ++j) {
            const long ix = static_cast<long>(ox * stride + j) - static_cast<long>(padding);
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            const std::size_t idx = base + static_cast<std::size_t>(iy) * w +
                                    static_cast<std::size_t>(ix);
            if (xd[idx] > best) {
              best = xd[idx];
              best_idx = idx;
            }
          }
        }
        const std::size_t o = (plane * oh + oy) * ow + ox;
        out[o] = best;
        argmax[o] = best_idx;
      }
    }
  }
  return make_result<T>(Shape{n, c, oh, ow}, std::move(out), {&x}, "max_pool2d",
                        [argmax = std::move(argmax)](Node<T>& self) {
                          T* gx = detail::parent_grad(self, 0);
                          if (!gx) return;
                          for (std::size_t o = 0; o < argmax.size(); ++o) {
                            gx[argmax[o]] += self.grad[o];
                          }
                        });
}

namespace detail {

// Source coordinate for half-pixel-centre resampling, clamped at 0.
template <Real T>
std::pair<std::size_t, T> resample_source(std::size_t dst, std::size_t factor,
                                          std::size_t extent) {
  T src = (static_cast<T>(dst) + T(0.5)) / static_cast<T>(factor) - T(0.5);
  if (src < T(0)) src = T(0);
  auto lo = static_cast<std::size_t>(src);
  if (lo >= extent - 1) return {extent - 1, T(0)};
  return {lo, src - static_cast<T>(lo)};
}

}  // namespace detail

// Bilinear upsampling of NCHW by an integer factor (half-pixel centres,
// edge clamped); constants map to constants.
template <Real T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, std::size_t factor) {
  if (x.rank() != 4 || factor == 0) {
    throw DimensionError("upsample_bilinear expects NCHW and factor >= 1, got " +
                         shape_str(x.shape()));
  }
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h * factor, ow = w * factor;
  struct Tap {
    std::size_t lo, hi;
    T frac;
  };
  auto taps = [factor](std::size_t out, std::size_t extent) {
    std::vector<Tap> t(out);
    for (std::size_t d = 0; d < out; ++d) {
      const auto [lo, frac] = detail::resample_source<T>(d, factor, extent);
      t[d] = {lo, std::min(lo + 1, extent - 1), frac};
    }
    return t;
  };
  auto ty = taps(oh, h);
  auto tx = taps(ow, w);
  std::vector<T> out(planes * oh * ow);
  const auto xd = x.data();
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = xd.data() + p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const auto& a = ty[oy];
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const auto& b = tx[ox];
        const T top = src[a.lo * w + b.lo] * (T(1) - b.frac) + src[a.lo * w + b.hi] * b.frac;
        const T bot = src[a.hi * w + b.lo] * (T(1) - b.frac) + src[a.hi * w + b.hi] * b.frac;
        out[(p * oh + oy) * ow + ox] = top * (T(1) - a.frac) + bot * a.frac;
      }
    }
  }
  return make_result<T>(
      Shape{x.dim(0), x.dim(1), oh, ow}, std::move(out), {&x}, "upsample_bilinear",
      [planes, h, w, oh, ow, ty = std::move(ty), tx = std::move(tx)](Node<T>& self) {
        T* gx = detail::parent_grad(self, 0);
        if (!gx) return;
        for (std::size_t p = 0; p < planes; ++p) {
          T* dst = gx + p * h * w;
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const auto& a = ty[oy];
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const auto& b = tx[ox];
              const T g = self.grad[(p * oh + oy) * ow + ox];
              dst[a.lo * w + b.lo] += g * (T(1) - a.frac) * (T(1) - b.frac);
              dst[a.lo * w + b.hi] += g * (T(1) - a.frac) * b.frac;
              dst[a.hi * w + b.lo] += g * a.frac * (T(1) - b.frac);
              dst[a.hi * w + b.hi] += g * a.frac * b.frac;
            }
          }
        }
      });
}

namespace detail {

// The four lattice neighbours of (y, x) with their bilinear weights and the
// partial derivatives of those weights. Neighbours outside the plane are
// marked invalid and contribute zero; so does any point outside
// (-1, H) x (-1, W).
template <Real T>
struct BilinearStencil {
  std::array<long, 4> index{};  // flat offset into the plane, -1 if invalid
  std::array<T, 4> weight{};
  std::array<T, 4> d_dy{};
  std::array<T, 4> d_dx{};

  BilinearStencil(std::size_t height, std::size_t width, T y, T x) {
    index.fill(-1);
    if (!(y > T(-1) && y < static_cast<T>(height) && x > T(-1) &&
          x < static_cast<T>(width))) {
      return;
    }
    const long y0 = static_cast<long>(std::floor(y));
    const long x0 = static_cast<long>(std::floor(x));
    const T ly = y - static_cast<T>(y0), lx = x - static_cast<T>(x0);
    const T hy = T(1) - ly, hx = T(1) - lx;
    const long ys[4] = {y0, y0, y0 + 1, y0 + 1};
    const long xs[4] = {x0, x0 + 1, x0, x0 + 1};
    const T w[4] = {hy * hx, hy * lx, ly * hx, ly * lx};
    const T dy[4] = {-hx, -lx, hx, lx};
    const T dx[4] = {-hy, hy, -ly, ly};
    for (int k = 0; k < 4; ++k) {
      if (ys[k] < 0 || xs[k] < 0 || ys[k] >= static_cast<long>(height) ||
          xs[k] >= static_cast<long>(width)) {
        continue;
      }
      index[k] = ys[k] * static_cast<long>(width) + xs[k];
      weight[k] = w[k];
      d_dy[k] = dy[k];
      d_dx[k] = dx[k];
    }
  }

  T sample(const T* plane) const {
    T v = T(0);
    for (int k = 0; k < 4; ++k) {
      if (index[k] >= 0) v += weight[k] * plane[index[k]];
    }
    return v;
  }
};

}  // namespace detail

// Samples every channel of x [C,H,W] at the real location (loc[0], loc[1])
// = (y, x). Differentiable in x and in the location.
template <Real T>
Tensor<T> bilinear_sample(const Tensor<T>& x, const Tensor<T>& loc) {
  if (x.rank() != 3 || loc.numel() != 2) {
    throw DimensionError("bilinear_sample expects [C,H,W] and a 2-vector, got " +
                         shape_str(x.shape()) + " and " + shape_str(loc.shape()));
  }
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const detail::BilinearStencil<T> st(h, w, loc.data()[0], loc.data()[1]);
  std::vector<T> out(c);
  const auto xd = x.data();
  for (std::size_t ch = 0; ch < c; ++ch) out[ch] = st.sample(xd.data() + ch * h * w);
  return make_result<T>(Shape{c}, std::move(out), {&x, &loc}, "bilinear_sample",
                        [st, c, h, w](Node<T>& self) {
                          const auto& xv = self.parents[0]->data;
                          T* gx = detail::parent_grad(self, 0);
                          T* gl = detail::parent_grad(self, 1);
                          for (std::size_t ch = 0; ch < c; ++ch) {
                            const T g = self.grad[ch];
                            for (int k = 0; k < 4; ++k) {
                              if (st.index[k] < 0) continue;
                              const std::size_t idx =
                                  ch * h * w + static_cast<std::size_t>(st.index[k]);
                              if (gx) gx[idx] += g * st.weight[k];
                              if (gl) {
                                gl[0] += g * st.d_dy[k] * xv[idx];
                                gl[1] += g * st.d_dx[k] * xv[idx];
                              }
                            }
                          }
                        });
}

// Deformable convolution, stride 1, padding (K-1)/2, K odd.
//   x       [N,C,H,W]
//   offsets [N,2*K*K,H,W]; channel 2t holds dy and 2t+1 holds dx for tap
//           t = i*K + j, in input-pixel units
//   weight  [O,C,K,K]
// Tap (i, j) of output (h, w) samples x at (h - pad + i + dy, w - pad + j + dx).
template <Real T>
Tensor<T> deform_conv2d(const Tensor<T>& x, const Tensor<T>& offsets,
                        const Tensor<T>& weight,
                        const std::optional<Tensor<T>>& bias = std::nullopt) {
  if (x.rank() != 4 || weight.rank() != 4 || x.dim(1) != weight.dim(1) ||
      weight.dim(2) != weight.dim(3) || weight.dim(2) % 2 == 0) {
    throw DimensionError("deform_conv2d: input " + shape_str(x.shape()) +
                         " incompatible with odd square kernel " +
                         shape_str(weight.shape()));
  }
  const std::size_t k = weight.dim(2), taps = k * k;
  if (offsets.rank() != 4 || offsets.dim(0) != x.dim(0) ||
      offsets.dim(1) != 2 * taps || offsets.dim(2) != x.dim(2) ||
      offsets.dim(3) != x.dim(3)) {
    throw GeometryError("deform_conv2d: offsets " + shape_str(offsets.shape()) +
                        " must be [N," + std::to_string(2 * taps) +
                        ",H,W] matching input " + shape_str(x.shape()));
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != weight.dim(0))) {
    throw DimensionError("deform_conv2d: bias " + shape_str(bias->shape()));
  }
  const std::size_t batch = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t out_c = weight.dim(0), pad = (k - 1) / 2, plane = h * w;
  const auto oc = static_cast<Eigen::Index>(out_c);
  const auto patch = static_cast<Eigen::Index>(ch * taps);
  const auto pl = static_cast<Eigen::Index>(plane);

  // Gathers the deformed columns for batch item n into cols [C*K*K, H*W].
  auto gather = [=](const T* xn, const T* on, T* cols) {
    for (std::size_t t = 0; t < taps; ++t) {
      const std::size_t i = t / k, j = t % k;
      const T* dy = on + (2 * t) * plane;
      const T* dx = on + (2 * t + 1) * plane;
      for (std::size_t oy = 0; oy < h; ++oy) {
        for (std::size_t ox = 0; ox < w; ++ox) {
          const std::size_t p = oy * w + ox;
          const detail::BilinearStencil<T> st(
              h, w, static_cast<T>(oy + i) - static_cast<T>(pad) + dy[p],
              static_cast<T>(ox + j) - static_cast<T>(pad) + dx[p]);
          for (std::size_t c = 0; c < ch; ++c) {
            cols[(c * taps + t) * plane + p] = st.sample(xn + c * plane);
          }
        }
      }
    }
  };

  std::vector<T> out(batch * out_c * plane);
  std::vector<T> cols(static_cast<std::size_t>(patch) * plane);
  detail::ConstMatMap<T> wm(weight.data().data(), oc, patch);
  for (std::size_t n = 0; n < batch; ++n) {
    gather(x.data().data() + n * ch * plane,
           offsets.data().data() + n * 2 * taps * plane, cols.data());
    detail::MatMap<T> y(out.data() + n * out_c * plane, oc, pl);
    y.noalias() = wm * detail::ConstMatMap<T>(cols.data(), patch, pl);
    if (bias) {
      const auto bd = bias->data();
      for (Eigen::Index o = 0; o < oc; ++o) y.row(o).array() += bd[o];
    }
  }

  std::vector<Tensor<T>> inputs{x, offsets, weight};
  if (bias) inputs.push_back(*bias);
  return make_result<T>(
      Shape{batch, out_c, h, w}, std::move(out), inputs, "deform_conv2d",
      [=](Node<T>& self) {
        const T* xd = self.parents[0]->data.data();
        const T* od = self.parents[1]->data.data();
        detail::ConstMatMap<T> wm(self.parents[2]->data.data(), oc, patch);
        T* gx = detail::parent_grad(self, 0);
        T* go = detail::parent_grad(self, 1);
        T* gw = detail::parent_grad(self, 2);
        T* gb = self.parents.size() > 3 ? detail::parent_grad(self, 3) : nullptr;
        std::vector<T> cols(gw ? static_cast<std::size_t>(patch) * plane : 0);
        std::vector<T> gcols((gx || go) ? static_cast<std::size_t>(patch) * plane : 0);
        for (std::size_t n = 0; n < batch; ++n) {
          const T* xn = xd + n * ch * plane;
          const T* on = od + n * 2 * taps * plane;
          detail::ConstMatMap<T> gy(self.grad.data() + n * out_c * plane, oc, pl);
          if (gb) {
            for (Eigen::Index o = 0; o < oc; ++o) gb[o] += gy.row(o).sum();
          }
          if (gw) {
            gather(xn, on, cols.data());
            detail::MatMap<T>(gw, oc, patch).noalias() +=
                gy * detail::ConstMatMap<T>(cols.data(), patch, pl).transpose();
          }
          if (!gx && !go) continue;
          detail::MatMap<T>(gcols.data(), patch, pl).noalias() = wm.transpose() * gy;
          for (std::size_t t = 0; t < taps; ++t) {
            const std::size_t i = t / k, j = t % k;
            const T* dy = on + (2 * t) * plane;
            const T* dx = on + (2 * t + 1) * plane;
            for (std::size_t oy = 0; oy < h; ++oy) {
              for (std::size_t ox = 0; ox < w; ++ox) {
                const std::size_t p = oy * w + ox;
                const detail::BilinearStencil<T> st(
                    h, w, static_cast<T>(oy + i) - static_cast<T>(pad) + dy[p],
                    static_cast<T>(ox + j) - static_cast<T>(pad) + dx[p]);
                T g_dy = T(0), g_dx = T(0);
                for (std::size_t c = 0; c < ch; ++c) {
                  const T g = gcols[(c * taps + t) * plane + p];
                  const T* xc = xn + c * plane;
                  for (int q = 0; q < 4; ++q) {
                    if (st.index[q] < 0) continue;
                    if (gx) gx[n * ch * plane + c * plane + st.index[q]] += g * st.weight[q];
                    g_dy += g * st.d_dy[q] * xc[st.index[q]];
                    g_dx += g * st.d_dx[q] * xc[st.index[q]];
                  }
                }
                if (go) {
                  go[n * 2 * taps * plane + (2 * t) * plane + p] += g_dy;
                  go[n * 2 * taps * plane + (2 * t + 1) * plane + p] += g_dx;
                }
              }
            }
          }
        }
      });
}

}  // namespace ahiq
