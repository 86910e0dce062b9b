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

// ahiq: train, evaluate and score full-reference IQA models.
//
//   ahiq --config run.cfg train
//   ahiq --config run.cfg eval --checkpoint out/best.ahiqw --split test
//   ahiq --config run.cfg score --checkpoint out/best.ahiqw --ref a.png --dist b.png
//   ahiq --config run.cfg export-offsets --checkpoint out/best.ahiqw --ref a.png --prefix out/off
//   ahiq --set model.preset=full params --backbones

#include <CLI11.hpp>
#include <iostream>

#include "ahiq/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"AHIQ full-reference image quality assessment"};
  app.fallthrough();
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "flat key=value config file");
  app.add_option("--seed", seed, "overrides the `seed` key");
  app.add_option("--out", out_dir, "overrides the `out` key");
  app.add_option("--set", overrides, "extra key=value assignment (repeatable)");

  auto* train = app.add_subcommand("train", "split, train, save best.ahiqw and a test report");

  std::string checkpoint, split = "test", ref, dist, prefix = "offsets";
  auto* eval = app.add_subcommand("eval", "report PLCC/SROCC on one split");
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--split", split, "train, val, test or all");

  auto* score = app.add_subcommand("score", "multi-crop score of one image pair");
  score->add_option("--checkpoint", checkpoint)->required();
  score->add_option("--ref", ref)->required();
  score->add_option("--dist", dist)->required();

  auto* offsets = app.add_subcommand("export-offsets", "dump the learned offset field");
  offsets->add_option("--checkpoint", checkpoint)->required();
  offsets->add_option("--ref", ref)->required();
  offsets->add_option("--prefix", prefix, "writes <prefix>.csv and <prefix>.ppm");

  bool backbones = false;
  auto* params = app.add_subcommand("params", "list checkpoint tensor names and shapes");
  params->add_flag("--backbones", backbones, "only the pretrained backbone tensors");

  auto* keys = app.add_subcommand("keys", "list accepted config keys");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ahiq::kExitOk : ahiq::kExitUsage;
  }

  ahiq::RunConfig cfg;
  const int loaded = ahiq::run_guarded(
      [&] {
        if (!config_path.empty()) cfg = ahiq::RunConfig::from_file(config_path);
        for (const auto& o : overrides) cfg.set(o, "--set");
        if (seed) cfg.set("seed", std::to_string(*seed), "--seed");
        if (!out_dir.empty()) cfg.set("out", out_dir, "--out");
        return int{ahiq::kExitOk};
      },
      std::cerr);
  if (loaded != ahiq::kExitOk) return loaded;

  if (train->parsed()) return ahiq::cmd_train(cfg, std::cout, std::cerr);
  if (eval->parsed()) return ahiq::cmd_eval(cfg, checkpoint, split, std::cout, std::cerr);
  if (score->parsed()) return ahiq::cmd_score(cfg, checkpoint, ref, dist, std::cout, std::cerr);
  if (offsets->parsed()) {
    return ahiq::cmd_export_offsets(cfg, checkpoint, ref, prefix, std::cout, std::cerr);
  }
  if (params->parsed()) return ahiq::cmd_params(cfg, backbones, std::cout, std::cerr);
  if (keys->parsed()) {
    for (const auto& k : ahiq::RunConfig::schema()) std::cout << k.name << "  " << k.help << '\n';
    return ahiq::kExitOk;
  }
  return ahiq::kExitUsage;
}
