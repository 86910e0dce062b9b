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

// Run configuration and the command implementations behind the `ahiq` tool.
//
// Config files are flat `key=value` lines, '#' starts a comment. Later
// assignments win, so command-line overrides are simply appended.

#pragma once

#include <charconv>
#include <functional>

#include "ahiq/train.hpp"

namespace ahiq {

enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitUsage = 2 };

class RunConfig {
 public:
  struct Key {
    const char* name;
    const char* help;
  };

  static const std::vector<Key>& schema() {
    static const std::vector<Key> keys{
        {"model.preset", "desk | tiny | full; applied before every other model key"},
        {"vit.patch_size", "8 or 16"},
        {"vit.width", "token width c"},
        {"vit.depth", "transformer blocks"},
        {"vit.heads", "attention heads"},
        {"vit.mlp_ratio", "MLP hidden width / c"},
        {"vit.tapped", "comma-separated block indices whose outputs are kept"},
        {"cnn.stem_channels", "stem width"},
        {"cnn.mid_channels", "bottleneck inner width"},
        {"cnn.block_channels", "bottleneck output width"},
        {"cnn.blocks", "bottleneck blocks"},
        {"fusion.kernel", "deformable kernel size (odd)"},
        {"fusion.strategy", "deform+concat | concat-only | vit-only | cnn-only"},
        {"fusion.proj_channels", "CNN projection width"},
        {"fusion.out_channels", "fused feature width"},
        {"fusion.per_image_offsets", "true: each image predicts its own offsets"},
        {"head.hidden", "score/weight branch hidden width"},
        {"head.pooling", "patch | spatial | patch+spatial"},
        {"model.init", "AHIQW1 file with backbone weights loaded before training"},
        {"data.labels", "label file, `dist_filename,mos` per line"},
        {"data.ref_dir", "reference image directory"},
        {"data.dist_dir", "distorted image directory"},
        {"train.batch_size", "mini-batch size"},
        {"train.epochs", "epoch budget"},
        {"train.t_max", "cosine schedule period in epochs"},
        {"train.lr", "initial learning rate"},
        {"train.eta_min", "final learning rate"},
        {"train.weight_decay", "decoupled weight decay"},
        {"train.flip_probability", "horizontal flip probability"},
        {"eval.crops", "random aligned crops per evaluated pair"},
        {"seed", "RNG seed for splits, training and crops"},
        {"out", "output directory"},
    };
    return keys;
  }

  static bool known(const std::string& key) {
    for (const auto& k : schema()) {
      if (key == k.name) return true;
    }
    return false;
  }

  // `key=value`; `where` names the source in error messages.
  void set(const std::string& assignment, const std::string& where) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(where + ": expected key=value, got '" + assignment + "'");
    }
    std::string key = detail::trim(assignment.substr(0, eq));
    std::string value = detail::trim(assignment.substr(eq + 1));
    if (!known(key)) throw ConfigError(where + ": unknown config key '" + key + "'");
    values_[key] = {std::move(value), where};
  }

  void set(const std::string& key, const std::string& value, const std::string& where) {
    set(key + "=" + value, where);
  }

  static RunConfig from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    RunConfig cfg;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      const auto t = detail::trim(line);
      if (t.empty() || t[0] == '#') continue;
      cfg.set(t, path.string() + ":" + std::to_string(n));
    }
    return cfg;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get(const std::string& key, const std::string& fallback = {}) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second.value;
  }

  std::string require(const std::string& key) const {
    if (!has(key)) throw ConfigError("config key '" + key + "' is required");
    return get(key);
  }

  std::size_t get_size(const std::string& key, std::size_t fallback) const {
    if (!has(key)) return fallback;
    const auto& e = values_.at(key);
    return parse_size(e.value, key, e.where);
  }

  double get_real(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const auto& e = values_.at(key);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(e.value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != e.value.size() || !std::isfinite(v)) {
      throw ConfigError(e.where + ": " + key + " expects a finite number, got '" + e.value +
                        "'");
    }
    return v;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto& e = values_.at(key);
    if (e.value == "true" || e.value == "1") return true;
    if (e.value == "false" || e.value == "0") return false;
    throw ConfigError(e.where + ": " + key + " expects true or false, got '" + e.value + "'");
  }

  std::vector<std::size_t> get_list(const std::string& key,
                                    std::vector<std::size_t> fallback) const {
    if (!has(key)) return fallback;
    const auto& e = values_.at(key);
    std::vector<std::size_t> out;
    std::stringstream ss(e.value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_size(detail::trim(item), key, e.where));
    if (out.empty()) throw ConfigError(e.where + ": " + key + " is empty");
    return out;
  }

  ModelConfig model() const {
    const std::string preset = get("model.preset", "desk");
    const std::size_t patch = get_size("vit.patch_size", 16);
    ModelConfig c;
    if (preset == "desk") {
      c = ModelConfig::desk(patch);
    } else if (preset == "tiny") {
      c = ModelConfig::tiny(patch);
    } else if (preset == "full") {
      c = ModelConfig::full(patch);
    } else {
      throw ConfigError("unknown model.preset '" + preset + "' (desk, tiny, full)");
    }
    c.vit.width = get_size("vit.width", c.vit.width);
    c.vit.depth = get_size("vit.depth", c.vit.depth);
    c.vit.heads = get_size("vit.heads", c.vit.heads);
    c.vit.mlp_ratio = get_size("vit.mlp_ratio", c.vit.mlp_ratio);
    c.vit.tapped_blocks = get_list("vit.tapped", c.vit.tapped_blocks);
    c.cnn.stem_channels = get_size("cnn.stem_channels", c.cnn.stem_channels);
    c.cnn.mid_channels = get_size("cnn.mid_channels", c.cnn.mid_channels);
    c.cnn.block_channels = get_size("cnn.block_channels", c.cnn.block_channels);
    c.cnn.blocks = get_size("cnn.blocks", c.cnn.blocks);
    c.fusion.kernel = get_size("fusion.kernel", c.fusion.kernel);
    if (has("fusion.strategy")) c.fusion.strategy = parse_fusion_strategy(get("fusion.strategy"));
    c.fusion.proj_channels = get_size("fusion.proj_channels", c.fusion.proj_channels);
    c.fusion.out_channels = get_size("fusion.out_channels", c.fusion.out_channels);
    c.fusion.per_image_offsets = get_bool("fusion.per_image_offsets", c.fusion.per_image_offsets);
    c.head.hidden = get_size("head.hidden", c.head.hidden);
    if (has("head.pooling")) c.head.pooling = parse_pooling(get("head.pooling"));
    c.validate();
    return c;
  }

  TrainConfig training() const {
    TrainConfig t;
    t.batch_size = get_size("train.batch_size", t.batch_size);
    t.epochs = get_size("train.epochs", t.epochs);
    t.t_max = get_size("train.t_max", t.t_max);
    t.lr = get_real("train.lr", t.lr);
    t.eta_min = get_real("train.eta_min", t.eta_min);
    t.adamw.weight_decay = get_real("train.weight_decay", t.adamw.weight_decay);
    t.flip_probability = get_real("train.flip_probability", t.flip_probability);
    t.eval_crops = get_size("eval.crops", t.eval_crops);
    t.seed = seed();
    t.validate();
    return t;
  }

  std::uint64_t seed() const { return get_size("seed", 0); }
  std::filesystem::path out_dir() const { return get("out", "ahiq_out"); }

 private:
  static std::size_t parse_size(const std::string& text, const std::string& key,
                                const std::string& where) {
    std::size_t v = 0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (text.empty() || ec != std::errc{} || ptr != end) {
      throw ConfigError(where + ": " + key + " expects a non-negative integer, got '" + text +
                        "'");
    }
    return v;
  }

  struct Value {
    std::string value;
    std::string where;
  };
  std::map<std::string, Value> values_;
};

namespace detail {

inline void require_exists(const std::filesystem::path& p, const std::string& what) {
  if (!std::filesystem::exists(p)) throw ConfigError(what + " not found: " + p.string());
}

inline DatasetManifest manifest_from(const RunConfig& cfg, std::ostream& err) {
  const std::filesystem::path labels = cfg.require("data.labels");
  require_exists(labels, "label file");
  const std::filesystem::path ref_dir = cfg.require("data.ref_dir");
  const std::filesystem::path dist_dir = cfg.require("data.dist_dir");
  require_exists(ref_dir, "reference directory");
  require_exists(dist_dir, "distorted directory");
  return load_manifest(labels, ref_dir, dist_dir, &err);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

inline std::string split_text(const DatasetSplit& s) {
  std::string out = "# ref_id,split\n";
  auto emit = [&](const std::vector<std::string>& ids, const char* tag) {
    std::vector<std::string> sorted = ids;
    std::sort(sorted.begin(), sorted.end());
    for (const auto& id : sorted) out += id + ',' + tag + '\n';
  };
  emit(s.train_refs, "train");
  emit(s.val_refs, "val");
  emit(s.test_refs, "test");
  return out;
}

inline void load_model_checkpoint(AhiqModel<float>& model, const std::filesystem::path& path) {
  require_exists(path, "checkpoint");
  model.load_state(load_checkpoint(path));
}

// Largest centred square crop for single-image commands.
inline Image center_crop(const Image& img, std::size_t size) {
  if (img.width < size || img.height < size) {
    throw GeometryError("image " + std::to_string(img.width) + "x" +
                        std::to_string(img.height) + " is smaller than the " +
                        std::to_string(size) + " crop");
  }
  return crop(img, (img.height - size) / 2, (img.width - size) / 2, size, size);
}

}  // namespace detail

// Maps library errors to exit codes and prints the message.
inline int run_guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const StateMismatchError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const GeometryError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

// Split, train, keep the best checkpoint and report on the test split.
// Writes best.ahiqw, train.log, split.csv and test_report.csv into `out`.
inline int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return run_guarded(
      [&] {
        const ModelConfig mcfg = cfg.model();
        const TrainConfig tcfg = cfg.training();
        const auto manifest = detail::manifest_from(cfg, err);
        const auto split = split_by_reference(manifest, tcfg.seed);
        const auto dir = cfg.out_dir();
        std::filesystem::create_directories(dir);
        detail::write_text(dir / "split.csv", detail::split_text(split));

        AhiqModel<float> model(mcfg, tcfg.seed);
        if (cfg.has("model.init")) {
          const std::filesystem::path init = cfg.get("model.init");
          detail::require_exists(init, "initial weights");
          model.load_backbones(load_checkpoint(init));
        }
        ImageCache images;
        const auto result = train(model, split.train, split.val, tcfg, images, &out);
        detail::write_text(dir / "train.log", result.log_text());
        save_checkpoint(result.best, dir / "best.ahiqw");

        model.load_state(result.best);
        const auto report =
            evaluate(model_scorer(model), split.test, images, tcfg.seed, tcfg.eval_crops);
        detail::write_text(dir / "test_report.csv", report.to_csv());
        out << "test plcc=" << format_fixed(report.plcc) << " srocc=" << format_fixed(report.srocc)
            << " main=" << format_fixed(report.main) << '\n';
        return int{kExitOk};
      },
      err);
}

// Re-derives the split from the manifest and seed and reports on one part
// ("train", "val", "test" or "all").
inline int cmd_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                    const std::string& part, std::ostream& out, std::ostream& err) {
  return run_guarded(
      [&] {
        const ModelConfig mcfg = cfg.model();
        const TrainConfig tcfg = cfg.training();
        if (part != "train" && part != "val" && part != "test" && part != "all") {
          throw ConfigError("unknown split '" + part + "' (train, val, test, all)");
        }
        AhiqModel<float> model(mcfg, tcfg.seed);
        detail::load_model_checkpoint(model, checkpoint);
        const auto manifest = detail::manifest_from(cfg, err);
        std::vector<ImagePairSample> samples = manifest.samples;
        if (part != "all") {
          const auto split = split_by_reference(manifest, tcfg.seed);
          samples = part == "train" ? split.train : part == "val" ? split.val : split.test;
        }
        ImageCache images;
        const auto report =
            evaluate(model_scorer(model), samples, images, tcfg.seed, tcfg.eval_crops);
        const auto dir = cfg.out_dir();
        std::filesystem::create_directories(dir);
        detail::write_text(dir / (part + "_report.csv"), report.to_csv());
        out << part << " plcc=" << format_fixed(report.plcc)
            << " srocc=" << format_fixed(report.srocc) << " main=" << format_fixed(report.main)
            << '\n';
        return int{kExitOk};
      },
      err);
}

// Prints the multi-crop score of one pair with 4 decimals.
inline int cmd_score(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                     const std::filesystem::path& ref, const std::filesystem::path& dist,
                     std::ostream& out, std::ostream& err) {
  return run_guarded(
      [&] {
        const ModelConfig mcfg = cfg.model();
        const std::size_t crops = cfg.get_size("eval.crops", kEvalCrops);
        if (crops == 0) throw ConfigError("eval.crops must be >= 1");
        AhiqModel<float> model(mcfg, cfg.seed());
        detail::load_model_checkpoint(model, checkpoint);
        const Image r = read_image(ref);
        const Image d = read_image(dist);
        Rng rng(cfg.seed());
        const double s = twenty_crop_score(model_scorer(model), r, d, rng, crops);
        out << format_fixed(s, 4) << '\n';
        return int{kExitOk};
      },
      err);
}

// Writes `<prefix>.csv` (y,x,tap,dy,dx) and `<prefix>.ppm`, the per-location
// mean offset magnitude scaled so the largest value is white.
inline int cmd_export_offsets(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                              const std::filesystem::path& ref,
                              const std::filesystem::path& prefix, std::ostream& out,
                              std::ostream& err) {
  return run_guarded(
      [&] {
        const ModelConfig mcfg = cfg.model();
        AhiqModel<float> model(mcfg, cfg.seed());
        detail::load_model_checkpoint(model, checkpoint);
        const Image img = detail::center_crop(read_image(ref), mcfg.vit.image_size);
        Tensor<float> field;
        {
          NoGradGuard guard;
          field = model.offsets(normalize<float>(img));
        }
        const std::size_t taps = mcfg.fusion.kernel * mcfg.fusion.kernel;
        const std::size_t h = field.dim(2), w = field.dim(3), plane = h * w;
        const auto v = field.data();

        if (prefix.has_parent_path()) std::filesystem::create_directories(prefix.parent_path());
        std::string csv = "y,x,tap,dy,dx\n";
        std::vector<double> magnitude(plane, 0.0);
        for (std::size_t y = 0; y < h; ++y) {
          for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t t = 0; t < taps; ++t) {
              const double dy = v[(2 * t) * plane + y * w + x];
              const double dx = v[(2 * t + 1) * plane + y * w + x];
              csv += std::to_string(y) + ',' + std::to_string(x) + ',' + std::to_string(t) + ',' +
                     format_fixed(dy) + ',' + format_fixed(dx) + '\n';
              magnitude[y * w + x] += std::hypot(dy, dx) / static_cast<double>(taps);
            }
          }
        }
        detail::write_text(prefix.string() + ".csv", csv);

        const double peak = *std::max_element(magnitude.begin(), magnitude.end());
        Image heat(w, h, 0, 1);
        for (std::size_t i = 0; i < plane; ++i) {
          heat.pixels[i] = peak > 0.0
                               ? static_cast<std::uint8_t>(std::lround(255.0 * magnitude[i] / peak))
                               : 0;
        }
        write_ppm(heat, prefix.string() + ".ppm");
        out << "offset field " << h << "x" << w << ", " << taps << " taps, peak mean magnitude "
            << format_fixed(peak) << '\n';
        return int{kExitOk};
      },
      err);
}

// One `name shape` line per tensor a checkpoint for this geometry holds.
inline int cmd_params(const RunConfig& cfg, bool backbones_only, std::ostream& out,
                      std::ostream& err) {
  return run_guarded(
      [&] {
        AhiqModel<float> model(cfg.model(), cfg.seed());
        const auto list = backbones_only ? model.backbone_load_list() : model.load_list();
        for (const auto& [name, shape] : list) out << name << ' ' << shape_str(shape) << '\n';
        return int{kExitOk};
      },
      err);
}

}  // namespace ahiq
