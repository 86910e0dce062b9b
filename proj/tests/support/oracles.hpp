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

// Reference implementations used only by tests. Everything here is written
// from the defining formulas with plain loops and shares no code with the
// library kernels.

#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "ahiq/image.hpp"
#include "ahiq/ops.hpp"

namespace ahiq::testing {

using D = double;
using TD = Tensor<double>;
using Rng = std::mt19937_64;

inline std::vector<D> uniform(std::size_t n, Rng& rng, D lo = -1.0, D hi = 1.0) {
  std::uniform_real_distribution<D> u(lo, hi);
  std::vector<D> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline TD random_tensor(const Shape& s, Rng& rng, bool rg = true, D lo = -1.0, D hi = 1.0) {
  return TD(s, uniform(shape_numel(s), rng, lo, hi), rg);
}

// Values bounded away from zero: |v| in [lo, hi] with random sign.
inline TD away_from_zero(const Shape& s, Rng& rng, D lo = 0.1, D hi = 1.0) {
  std::uniform_real_distribution<D> u(lo, hi);
  std::bernoulli_distribution sign(0.5);
  std::vector<D> v(shape_numel(s));
  for (auto& x : v) x = sign(rng) ? u(rng) : -u(rng);
  return TD(s, std::move(v), true);
}

inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// ---------------------------------------------------------------------------
// Central finite differences.

struct GradInstance {
  std::vector<TD> inputs;  // leaves; those with requires_grad are checked
  std::function<TD(const std::vector<TD>&)> fn;
};

struct GradResult {
  double rel_error = 0.0;  // worst over checked inputs
  std::size_t checked = 0;
};

// Projects fn's output onto a fixed random direction, then compares the
// autodiff gradient of every input against central differences with a
// norm-wise relative error ||a - n|| / max(||a||, ||n||).
inline GradResult gradcheck(GradInstance inst, Rng& rng, D h = 1e-6) {
  TD probe;
  {
    NoGradGuard ng;
    probe = inst.fn(inst.inputs);
  }
  const TD dir(probe.shape(), uniform(probe.numel(), rng, 0.5, 1.5), false);
  auto project = [&](const TD& y) { return sum(mul(y, dir)); };

  for (auto& x : inst.inputs) x.zero_grad();
  backward(project(inst.fn(inst.inputs)));

  GradResult res;
  for (auto& x : inst.inputs) {
    if (!x.requires_grad()) continue;
    std::vector<D> analytic(x.numel(), 0.0);
    if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());
    std::vector<D> numeric(x.numel());
    auto data = x.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const D saved = data[i];
      NoGradGuard ng;
      data[i] = saved + h;
      const D up = project(inst.fn(inst.inputs)).item();
      data[i] = saved - h;
      const D down = project(inst.fn(inst.inputs)).item();
      data[i] = saved;
      numeric[i] = (up - down) / (2 * h);
    }
    D diff = 0, na = 0, nn = 0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      na += analytic[i] * analytic[i];
      nn += numeric[i] * numeric[i];
    }
    const D denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
    res.rel_error = std::max(res.rel_error, std::sqrt(diff) / denom);
    ++res.checked;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Convolution oracles.

// Direct zero-padded cross-correlation; output extent floor((H+2p-K)/s)+1.
inline std::vector<D> naive_conv2d(const std::vector<D>& x, std::size_t n, std::size_t c,
                                   std::size_t h, std::size_t w, const std::vector<D>& wt,
                                   std::size_t o, std::size_t k, const std::vector<D>* bias,
                                   std::size_t stride, std::size_t pad, std::size_t& oh,
                                   std::size_t& ow) {
  oh = (h + 2 * pad - k) / stride + 1;
  ow = (w + 2 * pad - k) / stride + 1;
  std::vector<D> y(n * o * oh * ow, 0.0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t oc = 0; oc < o; ++oc)
      for (std::size_t yy = 0; yy < oh; ++yy)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          D acc = bias ? (*bias)[oc] : 0.0;
          for (std::size_t ic = 0; ic < c; ++ic)
            for (std::size_t i = 0; i < k; ++i)
              for (std::size_t j = 0; j < k; ++j) {
                const long sy = long(yy * stride + i) - long(pad);
                const long sx = long(xx * stride + j) - long(pad);
                if (sy < 0 || sx < 0 || sy >= long(h) || sx >= long(w)) continue;
                acc += wt[((oc * c + ic) * k + i) * k + j] *
                       x[((b * c + ic) * h + std::size_t(sy)) * w + std::size_t(sx)];
              }
          y[((b * o + oc) * oh + yy) * ow + xx] = acc;
        }
  return y;
}

// Bilinear read of one channel plane with zeros outside the image.
inline D bilinear_oracle(const D* plane, std::size_t h, std::size_t w, D y, D x) {
  const D y0 = std::floor(y), x0 = std::floor(x);
  D acc = 0;
  for (int dy = 0; dy <= 1; ++dy)
    for (int dx = 0; dx <= 1; ++dx) {
      const D yy = y0 + dy, xx = x0 + dx;
      if (yy < 0 || xx < 0 || yy > D(h - 1) || xx > D(w - 1)) continue;
      const D wgt = (1 - std::abs(y - yy)) * (1 - std::abs(x - xx));
      acc += wgt * plane[std::size_t(yy) * w + std::size_t(xx)];
    }
  return acc;
}

// Shifts every channel of x [N,C,H,W] by integers (sy, sx):
// out(h, w) = x(h + sy, w + sx), zero outside.
inline std::vector<D> shift_oracle(const std::vector<D>& x, std::size_t nc, std::size_t h,
                                   std::size_t w, long sy, long sx) {
  std::vector<D> out(x.size(), 0.0);
  for (std::size_t p = 0; p < nc; ++p)
    for (std::size_t yy = 0; yy < h; ++yy)
      for (std::size_t xx = 0; xx < w; ++xx) {
        const long ty = long(yy) + sy, tx = long(xx) + sx;
        if (ty < 0 || tx < 0 || ty >= long(h) || tx >= long(w)) continue;
        out[(p * h + yy) * w + xx] = x[(p * h + std::size_t(ty)) * w + std::size_t(tx)];
      }
  return out;
}

// Deformable convolution from its definition: tap (i, j) of output (h, w)
// reads x at (h - pad + i + dy, w - pad + j + dx) by bilinear interpolation.
inline std::vector<D> naive_deform(const std::vector<D>& x, std::size_t c, std::size_t h,
                                   std::size_t w, const std::vector<D>& off,
                                   const std::vector<D>& wt, std::size_t o, std::size_t k) {
  const std::size_t pad = (k - 1) / 2, plane = h * w;
  std::vector<D> y(o * plane, 0.0);
  for (std::size_t oc = 0; oc < o; ++oc)
    for (std::size_t yy = 0; yy < h; ++yy)
      for (std::size_t xx = 0; xx < w; ++xx) {
        D acc = 0;
        for (std::size_t i = 0; i < k; ++i)
          for (std::size_t j = 0; j < k; ++j) {
            const std::size_t t = i * k + j;
            const D py = D(yy) - D(pad) + D(i) + off[(2 * t) * plane + yy * w + xx];
            const D px = D(xx) - D(pad) + D(j) + off[(2 * t + 1) * plane + yy * w + xx];
            for (std::size_t ic = 0; ic < c; ++ic) {
              acc += wt[((oc * c + ic) * k + i) * k + j] *
                     bilinear_oracle(x.data() + ic * plane, h, w, py, px);
            }
          }
        y[oc * plane + yy * w + xx] = acc;
      }
  return y;
}

// Integer-shift oracle for deformable convolution: pad x by m zeros, shift
// the canvas by (sy, sx), run a plain valid convolution and read the window
// that lines up with the unpadded output grid.
inline std::vector<D> shift_then_conv(const std::vector<D>& x, std::size_t c, std::size_t h,
                                      std::size_t w, long sy, long sx, const std::vector<D>& wt,
                                      std::size_t o, std::size_t k) {
  const std::size_t pad = (k - 1) / 2;
  const std::size_t m = pad + std::size_t(std::max(std::labs(sy), std::labs(sx)));
  const std::size_t ch = h + 2 * m, cw = w + 2 * m;
  std::vector<D> canvas(c * ch * cw, 0.0);
  for (std::size_t p = 0; p < c; ++p)
    for (std::size_t yy = 0; yy < h; ++yy)
      for (std::size_t xx = 0; xx < w; ++xx)
        canvas[(p * ch + yy + m) * cw + xx + m] = x[(p * h + yy) * w + xx];
  const auto shifted = shift_oracle(canvas, c, ch, cw, sy, sx);
  std::size_t oh = 0, ow = 0;
  const auto full = naive_conv2d(shifted, 1, c, ch, cw, wt, o, k, nullptr, 1, 0, oh, ow);
  std::vector<D> y(o * h * w);
  for (std::size_t oc = 0; oc < o; ++oc)
    for (std::size_t yy = 0; yy < h; ++yy)
      for (std::size_t xx = 0; xx < w; ++xx)
        y[(oc * h + yy) * w + xx] = full[(oc * oh + yy + m - pad) * ow + xx + m - pad];
  return y;
}

// ---------------------------------------------------------------------------
// Correlation oracles, straight from the definitions.

inline double pearson_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  const long double n = x.size();
  long double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const long double mx = sx / n, my = sy / n;
  long double cov = 0, vx = 0, vy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    cov += (x[i] - mx) * (y[i] - my);
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
  }
  return static_cast<double>(cov / std::sqrt(vx * vy));
}

// rank_i = 1 + #{j : v_j < v_i} + (#{j : v_j == v_i} - 1) / 2
inline std::vector<double> rank_oracle(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::size_t less = 0, equal = 0;
    for (std::size_t j = 0; j < v.size(); ++j) {
      less += v[j] < v[i];
      equal += v[j] == v[i];
    }
    r[i] = 1.0 + double(less) + 0.5 * double(equal - 1);
  }
  return r;
}

inline double spearman_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson_oracle(rank_oracle(x), rank_oracle(y));
}

// ---------------------------------------------------------------------------
// Synthetic datasets on disk.

struct SyntheticSet {
  std::filesystem::path root, labels, ref_dir, dist_dir;
  std::vector<std::string> dist_names;
  std::vector<double> mos;
};

inline double mean_abs_diff(const Image& a, const Image& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    s += std::abs(double(a.pixels[i]) - double(b.pixels[i]));
  }
  return s / double(a.pixels.size());
}

// MOS assigned to a synthetic pair: a fixed affine map of the mean absolute
// pixel difference.
inline double synthetic_mos(const Image& ref, const Image& dist) {
  return 1.0 - 0.05 * mean_abs_diff(ref, dist);
}

inline Image smooth_pattern(std::size_t w, std::size_t h, Rng& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  const double fx = 1 + 5 * u(rng), fy = 1 + 5 * u(rng), ph = 6.28 * u(rng);
  Image img(w, h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = 0.5 + 0.35 * std::sin(fx * 6.28 * x / w + ph + c) *
                                   std::cos(fy * 6.28 * y / h + 0.5 * c);
        img.at(y, x, c) = static_cast<std::uint8_t>(std::lround(255 * v));
      }
  return img;
}

// Additive uniform noise of the given amplitude, clamped to [0, 255].
inline Image add_noise(const Image& src, int amplitude, Rng& rng) {
  std::uniform_int_distribution<int> u(-amplitude, amplitude);
  Image out = src;
  for (auto& p : out.pixels) p = static_cast<std::uint8_t>(std::clamp(int(p) + u(rng), 0, 255));
  return out;
}

// `refs` references, `per_ref` noisy versions each, named so that
// R<k>_<d>.png distorts R<k>.png.
inline SyntheticSet write_synthetic_set(const std::filesystem::path& root, std::size_t refs,
                                        std::size_t per_ref, std::size_t size,
                                        std::uint64_t seed, bool bmp_refs = false) {
  Rng rng(seed);
  SyntheticSet s;
  s.root = root;
  s.ref_dir = root / "ref";
  s.dist_dir = root / "dist";
  s.labels = root / "labels.csv";
  std::filesystem::remove_all(root);
  std::filesystem::create_directories(s.ref_dir);
  std::filesystem::create_directories(s.dist_dir);
  std::ofstream labels(s.labels);
  labels << "# dist_filename,mos\n";
  for (std::size_t r = 0; r < refs; ++r) {
    std::string id = std::to_string(r);
    id = "R" + std::string(id.size() < 3 ? 3 - id.size() : 0, '0') + id;
    const Image ref = smooth_pattern(size, size, rng);
    if (bmp_refs) {
      write_bmp(ref, s.ref_dir / (id + ".bmp"));
    } else {
      write_png(ref, s.ref_dir / (id + ".png"));
    }
    for (std::size_t d = 0; d < per_ref; ++d) {
      const int amp = 4 + int(pick(rng, 0, 36));
      const Image dist = add_noise(ref, amp, rng);
      const std::string name = id + "_" + std::to_string(d) + ".png";
      write_png(dist, s.dist_dir / name);
      const double mos = synthetic_mos(ref, dist);
      s.dist_names.push_back(name);
      s.mos.push_back(mos);
      char line[64];
      std::snprintf(line, sizeof line, "%s,%.9f\n", name.c_str(), mos);
      labels << line;
    }
  }
  return s;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("ahiq_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace ahiq::testing
