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

// Dataset manifests, reference-grouped splits, normalisation and the paired
// augmentation / multi-crop evaluation protocol.

#pragma once

#include <array>
#include <iostream>
#include <map>
#include <random>
#include <set>

#include "ahiq/image.hpp"
#include "ahiq/nn.hpp"

namespace ahiq {

struct ImagePairSample {
  std::filesystem::path ref_path;
  std::filesystem::path dist_path;
  double mos = 0.0;
  std::string ref_id;

  // Distorted file name; the key reports are sorted by.
  std::string sample_id() const { return dist_path.filename().string(); }
};

struct DatasetManifest {
  std::filesystem::path label_file;
  std::filesystem::path ref_dir;
  std::filesystem::path dist_dir;
  std::vector<ImagePairSample> samples;

  std::set<std::string> ref_ids() const {
    std::set<std::string> ids;
    for (const auto& s : samples) ids.insert(s.ref_id);
    return ids;
  }
};

// The reference id is the distorted file name up to its first '_'.
inline std::string reference_stem(const std::string& dist_filename) {
  const std::string stem = std::filesystem::path(dist_filename).stem().string();
  const auto cut = stem.find('_');
  return cut == std::string::npos ? stem : stem.substr(0, cut);
}

namespace detail {
inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::filesystem::path find_reference(const std::filesystem::path& dir,
                                            const std::string& id) {
  for (const char* ext : {".png", ".bmp", ".PNG", ".BMP"}) {
    auto p = dir / (id + ext);
    if (std::filesystem::exists(p)) return p;
  }
  return {};
}
}  // namespace detail

// Parses `dist_filename,mos` lines ('#' comments and blank lines skipped)
// and resolves every image on disk.
inline DatasetManifest load_manifest(const std::filesystem::path& label_file,
                                     const std::filesystem::path& ref_dir,
                                     const std::filesystem::path& dist_dir,
                                     std::ostream* warnings = &std::cerr) {
  std::ifstream in(label_file);
  if (!in) throw std::runtime_error("cannot open label file " + label_file.string());
  DatasetManifest m{label_file, ref_dir, dist_dir, {}};
  std::set<std::pair<std::string, std::string>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto comma = t.find(',');
    if (comma == std::string::npos || t.find(',', comma + 1) != std::string::npos) {
      throw ParseError("expected 'dist_filename,mos', got '" + t + "'", line_no);
    }
    const std::string name = detail::trim(t.substr(0, comma));
    const std::string score = detail::trim(t.substr(comma + 1));
    if (name.empty()) throw ParseError("empty file name", line_no);
    double mos = 0.0;
    std::size_t used = 0;
    try {
      mos = std::stod(score, &used);
    } catch (const std::exception&) {
      throw ParseError("unparsable MOS '" + score + "'", line_no);
    }
    if (used != score.size()) throw ParseError("unparsable MOS '" + score + "'", line_no);
    if (!std::isfinite(mos)) throw ParseError("non-finite MOS '" + score + "'", line_no);

    ImagePairSample s;
    s.dist_path = dist_dir / name;
    s.ref_id = reference_stem(name);
    s.ref_path = detail::find_reference(ref_dir, s.ref_id);
    s.mos = mos;
    if (!std::filesystem::exists(s.dist_path)) {
      throw std::runtime_error("missing distorted image " + s.dist_path.string() +
                               " (line " + std::to_string(line_no) + ")");
    }
    if (s.ref_path.empty()) {
      throw std::runtime_error("missing reference image " + s.ref_id + ".png/.bmp in " +
                               ref_dir.string() + " (line " + std::to_string(line_no) + ")");
    }
    if (!seen.emplace(s.ref_path.string(), s.dist_path.string()).second) {
      throw ParseError("duplicate pair " + name, line_no);
    }
    m.samples.push_back(std::move(s));
  }
  if (m.samples.empty() && warnings) {
    *warnings << "warning: label file " << label_file.string() << " lists no samples\n";
  }
  return m;
}

struct DatasetSplit {
  std::vector<ImagePairSample> train, val, test;
  std::vector<std::string> train_refs, val_refs, test_refs;
};

// Shuffles reference ids with a seeded RNG and assigns 60/20/20 of them by
// count (val and test get floor(0.2 n), train the remainder). Every sample
// follows its reference.
inline DatasetSplit split_by_reference(const DatasetManifest& m, std::uint64_t seed) {
  const auto id_set = m.ref_ids();
  if (id_set.size() < 5) {
    throw std::invalid_argument("split_by_reference needs at least 5 reference images, got " +
                                std::to_string(id_set.size()));
  }
  std::vector<std::string> ids(id_set.begin(), id_set.end());
  std::mt19937_64 rng(seed);
  for (std::size_t i = ids.size() - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    std::swap(ids[i], ids[pick(rng)]);
  }
  const std::size_t n_eval = ids.size() / 5;
  DatasetSplit s;
  s.val_refs.assign(ids.begin(), ids.begin() + static_cast<long>(n_eval));
  s.test_refs.assign(ids.begin() + static_cast<long>(n_eval),
                     ids.begin() + static_cast<long>(2 * n_eval));
  s.train_refs.assign(ids.begin() + static_cast<long>(2 * n_eval), ids.end());
  std::map<std::string, int> where;
  for (const auto& r : s.train_refs) where[r] = 0;
  for (const auto& r : s.val_refs) where[r] = 1;
  for (const auto& r : s.test_refs) where[r] = 2;
  for (const auto& sample : m.samples) {
    switch (where.at(sample.ref_id)) {
      case 0: s.train.push_back(sample); break;
      case 1: s.val.push_back(sample); break;
      default: s.test.push_back(sample); break;
    }
  }
  return s;
}

inline constexpr std::array<double, 3> kImageNetMean{0.485, 0.456, 0.406};
inline constexpr std::array<double, 3> kImageNetStd{0.229, 0.224, 0.225};

// u8 HWC RGB -> [3,H,W], (v/255 - mean) / std per channel.
template <Real T>
Tensor<T> normalize(const Image& img) {
  if (img.channels != 3) {
    throw ImageError("normalize expects 3-channel RGB, got " +
                     std::to_string(img.channels) + " channels");
  }
  const std::size_t plane = img.width * img.height;
  std::vector<T> out(3 * plane);
  for (std::size_t c = 0; c < 3; ++c) {
    const double mu = kImageNetMean[c], sd = kImageNetStd[c];
    for (std::size_t i = 0; i < plane; ++i) {
      out[c * plane + i] = static_cast<T>((img.pixels[i * 3 + c] / 255.0 - mu) / sd);
    }
  }
  return Tensor<T>({3, img.height, img.width}, std::move(out));
}

template <Real T>
Image denormalize(const Tensor<T>& t) {
  if (t.rank() != 3 || t.dim(0) != 3) {
    throw DimensionError("denormalize expects [3,H,W], got " + shape_str(t.shape()));
  }
  Image img(t.dim(2), t.dim(1));
  const std::size_t plane = img.width * img.height;
  const auto d = t.data();
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      const double v = (double(d[c * plane + i]) * kImageNetStd[c] + kImageNetMean[c]) * 255.0;
      img.pixels[i * 3 + c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  return img;
}

inline Image crop(const Image& img, std::size_t top, std::size_t left, std::size_t h,
                  std::size_t w) {
  if (top + h > img.height || left + w > img.width) {
    throw GeometryError("crop window exceeds image bounds");
  }
  Image out(w, h, 0, img.channels);
  for (std::size_t y = 0; y < h; ++y) {
    const auto* src = img.pixels.data() + ((top + y) * img.width + left) * img.channels;
    std::copy_n(src, w * img.channels, out.pixels.data() + y * w * img.channels);
  }
  return out;
}

inline Image hflip(const Image& img) {
  Image out = img;
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < img.channels; ++c) {
        out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
      }
    }
  }
  return out;
}

struct CropWindow {
  std::size_t top = 0, left = 0;
  auto operator<=>(const CropWindow&) const = default;
};

inline CropWindow draw_crop_window(std::size_t height, std::size_t width, std::size_t size,
                                   Rng& rng) {
  std::uniform_int_distribution<std::size_t> dy(0, height - size);
  std::uniform_int_distribution<std::size_t> dx(0, width - size);
  const std::size_t top = dy(rng);
  return {top, dx(rng)};
}

inline void check_pair(const Image& ref, const Image& dist, std::size_t size) {
  if (!ref.same_size(dist)) {
    throw GeometryError("reference " + std::to_string(ref.width) + "x" +
                        std::to_string(ref.height) + " and distorted " +
                        std::to_string(dist.width) + "x" + std::to_string(dist.height) +
                        " differ in size");
  }
  if (ref.width < size || ref.height < size) {
    throw GeometryError("image " + std::to_string(ref.width) + "x" +
                        std::to_string(ref.height) + " is smaller than the " +
                        std::to_string(size) + " crop");
  }
}

// One window, applied to both images.
inline std::pair<Image, Image> paired_random_crop(const Image& ref, const Image& dist,
                                                  std::size_t size, Rng& rng) {
  check_pair(ref, dist, size);
  const auto w = draw_crop_window(ref.height, ref.width, size, rng);
  return {crop(ref, w.top, w.left, size, size), crop(dist, w.top, w.left, size, size)};
}

// Flips both images or neither.
inline std::pair<Image, Image> paired_hflip(const Image& ref, const Image& dist, double p,
                                            Rng& rng) {
  std::bernoulli_distribution coin(p);
  if (coin(rng)) return {hflip(ref), hflip(dist)};
  return {ref, dist};
}

inline constexpr std::size_t kEvalCrops = 20;

// Mean prediction over `crops` aligned random windows. Identical windows are
// scored once.
template <typename Scorer>
  requires std::invocable<Scorer&, const Image&, const Image&>
double twenty_crop_score(Scorer&& scorer, const Image& ref, const Image& dist, Rng& rng,
                         std::size_t crops = kEvalCrops, std::size_t size = 224) {
  check_pair(ref, dist, size);
  std::map<CropWindow, double> cache;
  double total = 0.0;
  for (std::size_t i = 0; i < crops; ++i) {
    const auto w = draw_crop_window(ref.height, ref.width, size, rng);
    auto it = cache.find(w);
    if (it == cache.end()) {
      const double s = static_cast<double>(
          scorer(crop(ref, w.top, w.left, size, size), crop(dist, w.top, w.left, size, size)));
      it = cache.emplace(w, s).first;
    }
    total += it->second;
  }
  return total / static_cast<double>(crops);
}

// Decoded images keyed by path; loads on first use.
class ImageCache {
 public:
  const Image& get(const std::filesystem::path& path) {
    auto it = images_.find(path.string());
    if (it == images_.end()) it = images_.emplace(path.string(), read_image(path)).first;
    return it->second;
  }

 private:
  std::map<std::string, Image> images_;
};

}  // namespace ahiq
