// Copyright (c) 2026 The Domino Authors. All Rights Reserved.
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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "domino/common.hpp"
#include "domino/config.hpp"
#include "domino/data.hpp"
#include "domino/domain_embedding.hpp"
#include "domino/encoders.hpp"
#include "domino/evaluation.hpp"
#include "domino/runner.hpp"
#include "domino/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string default_data_root() {
  const char* env = std::getenv("DOMINO_DATA_ROOT");
  return env != nullptr ? std::string(env) : std::string("data");
}

domino::ExperimentConfig load_config_with_seed(const std::string& path,
                                               int64_t seed_override) {
  domino::ExperimentConfig config = domino::load_experiment_config(path);
  if (seed_override >= 0) {
    config.seed = static_cast<uint64_t>(seed_override);
    config.finalize_and_validate();
  }
  return config;
}

std::vector<domino::DomainDescription> catalog_or_default(
    const std::string& path) {
  if (path.empty()) return domino::default_catalog();
  return domino::load_catalog(path);
}

int cmd_generate_data(const std::string& config_path, const std::string& out,
                      int64_t seed_override) {
  const auto config = load_config_with_seed(config_path, seed_override);
  const uint64_t data_seed =
      domino::derive_seed(config.seed, domino::kSeedStreamData, 0);

  int written = 0;
  for (const auto split : {domino::Split::kTrainSource, domino::Split::kValSource,
                           domino::Split::kValTarget}) {
    const auto scenes = domino::build_dataset(split, config.data, data_seed);
    written += domino::save_split(out, domino::to_string(split), scenes,
                                  config.data, data_seed);
  }
  if (!config.data.synthetic_domains.empty()) {
    const auto pool = domino::build_synthetic_pool(config.data, data_seed);
    written += domino::save_split(out, "synthetic", pool, config.data, data_seed);
  }
  std::cout << "dataset ready under " << out << " (" << written
            << " files written)\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out,
              int64_t seed_override) {
  const auto config = load_config_with_seed(config_path, seed_override);
  const auto result = domino::train_loop(config, out);
  std::cout << "checkpoint: " << result.checkpoint_path << "\n"
            << "metrics:    " << result.metrics_path << "\n"
            << "final: source_miou=" << 100.0 * *result.final_report.source_miou
            << " target_miou=" << 100.0 * *result.final_report.target_miou
            << " miou_percent=" << *result.final_report.miou_percent << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_dir,
             const std::string& catalog_path, const std::string& out_path) {
  auto loaded = domino::load_checkpoint(checkpoint_path);

  auto catalog = catalog_path.empty()
                     ? catalog_or_default(loaded.config.domain.catalog_path)
                     : domino::load_catalog(catalog_path);
  domino::StatisticalEncoder encoder(loaded.config.domain.embedding_dim,
                                     loaded.config.domain.encoder_seed);
  domino::DomainExtractor extractor(catalog, encoder,
                                    loaded.config.domain.temperature);
  const domino::DomainExtractor* ex =
      loaded.model.cfg.needs_domain_embedding() ? &extractor : nullptr;

  json out;
  if (fs::exists(fs::path(data_dir) / "manifest.json")) {
    const auto scenes = domino::load_split(data_dir);
    out = domino::evaluate_dataset(loaded.model, scenes, ex).to_json();
  } else if (fs::exists(fs::path(data_dir) / "val_source" / "manifest.json") &&
             fs::exists(fs::path(data_dir) / "val_target" / "manifest.json")) {
    const auto src_scenes =
        domino::load_split((fs::path(data_dir) / "val_source").string());
    const auto tgt_scenes =
        domino::load_split((fs::path(data_dir) / "val_target").string());
    const auto src = domino::evaluate_dataset(loaded.model, src_scenes, ex);
    const auto tgt = domino::evaluate_dataset(loaded.model, tgt_scenes, ex);
    const auto cross = domino::make_cross_domain_report(src, tgt);
    out = cross.to_json();
    out["val_source"] = src.to_json();
  } else {
    throw domino::ConfigError(
        "no dataset found at " + data_dir +
        " (expected manifest.json or val_source/ + val_target/)");
  }

  const std::string text = out.dump(2) + "\n";
  if (out_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream f(out_path, std::ios::trunc);
    domino::check_config(f.good(), "cannot write report: " + out_path);
    f << text;
  }
  return 0;
}

int cmd_extract_domain(const std::string& image_path, int height, int width,
                       const std::string& catalog_path, double temperature,
                       int embedding_dim) {
  domino::check_config(height > 0 && width > 0,
                       "height/width must be positive");
  std::ifstream in(image_path, std::ios::binary);
  domino::check_config(in.good(), "cannot open image file: " + image_path);
  std::vector<float> buf(static_cast<size_t>(height) * width * 3);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  domino::check_config(
      in.gcount() == static_cast<std::streamsize>(buf.size() * sizeof(float)),
      "image file smaller than height*width*3 float32: " + image_path);

  domino::Tensor image({3, height, width});
  const float* fp = buf.data();
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        image.at(c, y, x) = static_cast<double>(*fp++);
      }
    }
  }

  const auto catalog = catalog_or_default(catalog_path);
  domino::StatisticalEncoder encoder(embedding_dim);
  const auto [alpha, w] =
      domino::extract_domain_embedding(image, catalog, encoder, temperature);

  json out;
  out["alpha"] = alpha.alpha;
  out["w"] = w;
  json ids = json::array();
  for (const auto& d : catalog) ids.push_back(d.id);
  out["catalog_ids"] = ids;
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& run_dirs,
               const std::string& out_path) {
  std::vector<domino::RunSummary> runs;
  runs.reserve(run_dirs.size());
  for (const auto& dir : run_dirs) {
    runs.push_back(domino::read_run_summary(dir));
  }
  const std::string csv = domino::report_csv(runs);
  if (out_path.empty()) {
    std::cout << csv;
  } else {
    std::ofstream f(out_path, std::ios::trunc);
    domino::check_config(f.good(), "cannot write report: " + out_path);
    f << csv;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"domino: domain-aware fine-tuning toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = default_data_root();
  int64_t seed_override = -1;

  auto* gen = app.add_subcommand("generate-data",
                                 "Generate the benchmark dataset on disk");
  gen->add_option("--config", config_path, "experiment config JSON")->required();
  gen->add_option("--out", out_dir, "output dataset root");
  gen->add_option("--seed", seed_override, "override the config seed");

  std::string train_out = "run";
  auto* train = app.add_subcommand("train", "Train a model per the config");
  train->add_option("--config", config_path, "experiment config JSON")->required();
  train->add_option("--out", train_out, "run output directory");
  train->add_option("--seed", seed_override, "override the config seed");

  std::string ckpt_path, eval_data = default_data_root(), eval_catalog,
                         eval_out;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  ev->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  ev->add_option("--data", eval_data,
                 "split dir, or dataset root with val_source/ + val_target/");
  ev->add_option("--catalog", eval_catalog, "domain catalog JSON");
  ev->add_option("--out", eval_out, "write the JSON report here");

  std::string img_path, ed_catalog;
  int ed_h = 64, ed_w = 64, ed_dim = 32;
  double ed_temp = 1.0;
  auto* ed = app.add_subcommand("extract-domain",
                                "Print domain weights and embedding for an image");
  ed->add_option("--image", img_path, "raw float32 HWC image file")->required();
  ed->add_option("--height", ed_h, "image height");
  ed->add_option("--width", ed_w, "image width");
  ed->add_option("--catalog", ed_catalog, "domain catalog JSON");
  ed->add_option("--temperature", ed_temp, "softmax temperature");
  ed->add_option("--embedding-dim", ed_dim, "embedding dimension");

  std::vector<std::string> run_dirs;
  std::string report_out;
  auto* rep = app.add_subcommand("report", "Render a CSV table over run dirs");
  rep->add_option("runs", run_dirs, "run directories")->required();
  rep->add_option("--out", report_out, "write the CSV here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate_data(config_path, out_dir, seed_override);
    if (train->parsed()) return cmd_train(config_path, train_out, seed_override);
    if (ev->parsed()) return cmd_eval(ckpt_path, eval_data, eval_catalog, eval_out);
    if (ed->parsed()) {
      return cmd_extract_domain(img_path, ed_h, ed_w, ed_catalog, ed_temp, ed_dim);
    }
    if (rep->parsed()) return cmd_report(run_dirs, report_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
