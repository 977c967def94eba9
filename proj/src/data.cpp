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

#include "domino/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "domino/common.hpp"
#include "domino/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace domino {

namespace {

// Substream tags for derive_seed.
constexpr uint64_t kStreamScene = 1;
constexpr uint64_t kStreamNoise = 2;
constexpr uint64_t kStreamJitter = 3;
constexpr uint64_t kStreamMixer = 4;
constexpr uint64_t kStreamSynthPick = 5;
constexpr uint64_t kStreamTargetPick = 6;

constexpr double kPi2 = 6.283185307179586476925286766559;

// Quantize through float32 so in-memory values equal the disk round trip.
inline double q32(double v) { return static_cast<double>(static_cast<float>(v)); }

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

struct ClassStyle {
  double r, g, b;
  int texture;  // 0 = horizontal stripes, 1 = dots, 2 = vertical stripes
};

// Styles cycle for class ids beyond the built-in three shape classes.
ClassStyle class_style(int cls) {
  static const ClassStyle styles[3] = {
      {0.72, 0.34, 0.20, 0},
      {0.22, 0.64, 0.30, 1},
      {0.24, 0.36, 0.76, 2},
  };
  return styles[(cls - 1) % 3];
}

double texture_value(int texture, int x, int y) {
  switch (texture) {
    case 0:
      return 0.13 * std::sin(kPi2 * y / 6.0);
    case 1:
      return 0.13 * std::sin(kPi2 * x / 6.0) * std::sin(kPi2 * y / 6.0);
    default:
      return 0.13 * std::sin(kPi2 * x / 6.0);
  }
}

void box_blur(Tensor& image, int radius) {
  const int h = image.dim(1);
  const int w = image.dim(2);
  std::vector<double> row(static_cast<size_t>(std::max(h, w)));
  for (int c = 0; c < 3; ++c) {
    // horizontal pass
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          int xx = std::clamp(x + k, 0, w - 1);
          acc += image.at(c, y, xx);
        }
        row[static_cast<size_t>(x)] = acc / (2 * radius + 1);
      }
      for (int x = 0; x < w; ++x) image.at(c, y, x) = row[static_cast<size_t>(x)];
    }
    // vertical pass
    for (int x = 0; x < w; ++x) {
      for (int y = 0; y < h; ++y) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          int yy = std::clamp(y + k, 0, h - 1);
          acc += image.at(c, yy, x);
        }
        row[static_cast<size_t>(y)] = acc / (2 * radius + 1);
      }
      for (int y = 0; y < h; ++y) image.at(c, y, x) = row[static_cast<size_t>(y)];
    }
  }
}

void validate_transform_params(const DomainTransform& t) {
  check_config(t.brightness_shift >= -1.0 && t.brightness_shift <= 1.0,
               "brightness_shift out of range [-1,1] for domain '" + t.domain_id + "'");
  check_config(t.contrast_gain > 0.0 && t.contrast_gain <= 3.0,
               "contrast_gain out of range (0,3] for domain '" + t.domain_id + "'");
  check_config(t.noise_std >= 0.0 && t.noise_std <= 0.5,
               "noise_std out of range [0,0.5] for domain '" + t.domain_id + "'");
  check_config(t.blur_radius >= 0 && t.blur_radius <= 4,
               "blur_radius out of range [0,4] for domain '" + t.domain_id + "'");
}

void validate_scene_config(const SceneConfig& sc) {
  check_config(sc.height >= 16 && sc.width >= 16, "canvas must be at least 16x16");
  check_config(sc.num_classes >= 2 && sc.num_classes <= 255,
               "num_classes must be in [2,255]");
  check_config(sc.min_shapes >= 1 && sc.max_shapes >= sc.min_shapes,
               "shape count range invalid");
}

uint64_t scene_seed(uint64_t base_seed, int64_t offset, int index) {
  return base_seed + static_cast<uint64_t>(offset) + static_cast<uint64_t>(index);
}

void write_file_if_changed(const fs::path& path, const std::string& bytes,
                           int* written) {
  if (fs::exists(path)) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    if (ss.str() == bytes) return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write file: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  ++*written;
}

}  // namespace

std::string to_string(Provenance p) {
  return p == Provenance::kRealAnalog ? "real_analog" : "synthetic_analog";
}

Provenance provenance_from_string(const std::string& s) {
  if (s == "real_analog") return Provenance::kRealAnalog;
  if (s == "synthetic_analog") return Provenance::kSyntheticAnalog;
  throw ConfigError("unknown provenance: " + s);
}

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrainSource: return "train_source";
    case Split::kValSource: return "val_source";
    default: return "val_target";
  }
}

const std::vector<DomainTransform>& domain_registry() {
  static const std::vector<DomainTransform> registry = {
      {"clear", 0.0, 1.0, 0.0, 0},
      {"fog", 0.32, 0.35, 0.01, 2},
      {"rain", -0.08, 0.85, 0.09, 0},
      {"night", -0.45, 0.65, 0.03, 0},
      {"snow", 0.22, 0.72, 0.05, 1},
  };
  return registry;
}

const DomainTransform& find_transform(const std::string& domain_id) {
  for (const auto& t : domain_registry()) {
    if (t.domain_id == domain_id) return t;
  }
  throw ConfigError("unknown domain_id: " + domain_id);
}

bool is_known_domain(const std::string& domain_id) {
  for (const auto& t : domain_registry()) {
    if (t.domain_id == domain_id) return true;
  }
  return false;
}

void DataConfig::validate() const {
  validate_scene_config(scene);
  check_config(train_size > 0 && val_source_size > 0 && val_target_size > 0,
               "split sizes must be positive");
  check_config(!target_domains.empty(), "target_domains must be non-empty");
  for (const auto& d : target_domains) {
    check_config(is_known_domain(d), "unknown target domain: " + d);
    check_config(d != "clear", "'clear' cannot be a target domain");
  }
  for (const auto& d : synthetic_domains) {
    check_config(is_known_domain(d), "unknown synthetic domain: " + d);
    if (!allow_target_leakage) {
      for (const auto& t : target_domains) {
        check_config(d != t, "synthetic domain '" + d +
                                 "' leaks a target domain; set "
                                 "allow_target_leakage to override");
      }
    }
  }
  check_config(mix.real_fraction >= 0.0 && mix.real_fraction <= 1.0,
               "real_fraction must be in [0,1]");
  check_config(jitter_px >= 0 && jitter_px <= 8, "jitter_px must be in [0,8]");
  if (mix.real_fraction < 1.0) {
    check_config(!synthetic_domains.empty(),
                 "real_fraction < 1 requires non-empty synthetic_domains");
  }

  // Split seed ranges must not overlap.
  const int64_t vs = val_source_offset >= 0 ? val_source_offset
                                            : train_offset + train_size;
  const int64_t vt = val_target_offset >= 0 ? val_target_offset
                                            : vs + val_source_size;
  struct Range { int64_t lo, hi; };
  const Range ranges[3] = {{train_offset, train_offset + train_size},
                           {vs, vs + val_source_size},
                           {vt, vt + val_target_size}};
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      const bool disjoint =
          ranges[i].hi <= ranges[j].lo || ranges[j].hi <= ranges[i].lo;
      check_config(disjoint, "split seed ranges overlap");
    }
  }
}

LabeledScene generate_scene(uint64_t seed, const SceneConfig& config) {
  validate_scene_config(config);
  const int h = config.height;
  const int w = config.width;

  LabeledScene scene;
  scene.height = h;
  scene.width = w;
  scene.seed = seed;
  scene.image = Tensor({3, h, w});
  scene.labels.assign(static_cast<size_t>(h) * w, 0);

  Rng rng(derive_seed(seed, kStreamScene, 0));
  const double illum = rng.uniform(-0.05, 0.05);

  // Background: textured gray with a soft vertical gradient.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double n = rng.uniform(-0.03, 0.03);
      const double g =
          0.50 + illum + 0.05 * (static_cast<double>(y) / h - 0.5) + n;
      scene.image.at(0, y, x) = g;
      scene.image.at(1, y, x) = g;
      scene.image.at(2, y, x) = g * 0.96;
    }
  }

  const int n_shapes =
      config.min_shapes + rng.uniform_int(config.max_shapes - config.min_shapes + 1);
  for (int s = 0; s < n_shapes; ++s) {
    const int cls = 1 + rng.uniform_int(config.num_classes - 1);
    const ClassStyle style = class_style(cls);
    const int kind = (cls - 1) % 3;  // 0 rect, 1 circle, 2 triangle
    const double cx = rng.uniform(4.0, w - 4.0);
    const double cy = rng.uniform(4.0, h - 4.0);
    const double sx = rng.uniform(5.0, 11.0);
    const double sy = kind == 0 ? rng.uniform(5.0, 11.0) : sx;
    const double dr = rng.uniform(-0.06, 0.06);
    const double dg = rng.uniform(-0.06, 0.06);
    const double db = rng.uniform(-0.06, 0.06);

    const int x0 = std::max(0, static_cast<int>(std::floor(cx - sx)) - 1);
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(cx + sx)) + 1);
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - sy)) - 1);
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(cy + sy)) + 1);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dx = x - cx;
        const double dy = y - cy;
        bool inside = false;
        if (kind == 0) {
          inside = std::abs(dx) <= sx && std::abs(dy) <= sy;
        } else if (kind == 1) {
          inside = dx * dx + dy * dy <= sx * sx;
        } else {
          // isoceles triangle, apex up
          inside = dy >= -sy && dy <= sy &&
                   std::abs(dx) <= sx * (dy + sy) / (2.0 * sy);
        }
        if (!inside) continue;
        const double tex = texture_value(style.texture, x, y);
        scene.labels[static_cast<size_t>(y) * w + x] = static_cast<uint8_t>(cls);
        scene.image.at(0, y, x) = style.r + dr + tex + illum;
        scene.image.at(1, y, x) = style.g + dg + tex + illum;
        scene.image.at(2, y, x) = style.b + db + tex + illum;
      }
    }
  }

  for (int64_t i = 0; i < scene.image.numel(); ++i) {
    scene.image[i] = q32(clamp01(scene.image[i]));
  }
  return scene;
}

LabeledScene apply_domain_transform(const LabeledScene& scene,
                                    const DomainTransform& t, uint64_t seed) {
  validate_transform_params(t);
  check_contract(scene.image.rank() == 3 && scene.image.dim(0) == 3,
                 "scene image must be [3,H,W]");

  LabeledScene out = scene;
  out.domain_id = t.domain_id;

  if (t.blur_radius > 0) box_blur(out.image, t.blur_radius);

  if (t.contrast_gain != 1.0 || t.brightness_shift != 0.0) {
    for (int64_t i = 0; i < out.image.numel(); ++i) {
      out.image[i] = (out.image[i] - 0.5) * t.contrast_gain + 0.5 +
                     t.brightness_shift;
    }
  }

  if (t.noise_std > 0.0) {
    Rng rng(derive_seed(seed, kStreamNoise, 0));
    const int h = out.height;
    const int w = out.width;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double n = t.noise_std * rng.normal();
        out.image.at(0, y, x) += n;
        out.image.at(1, y, x) += n;
        out.image.at(2, y, x) += n;
      }
    }
  }

  if (t.blur_radius > 0 || t.contrast_gain != 1.0 ||
      t.brightness_shift != 0.0 || t.noise_std > 0.0) {
    for (int64_t i = 0; i < out.image.numel(); ++i) {
      out.image[i] = q32(clamp01(out.image[i]));
    }
  }
  return out;
}

std::vector<LabeledScene> build_dataset(Split split, const DataConfig& config,
                                        uint64_t base_seed) {
  config.validate();
  const int64_t vs_off = config.val_source_offset >= 0
                             ? config.val_source_offset
                             : config.train_offset + config.train_size;
  const int64_t vt_off = config.val_target_offset >= 0
                             ? config.val_target_offset
                             : vs_off + config.val_source_size;

  int n = 0;
  int64_t offset = 0;
  switch (split) {
    case Split::kTrainSource: n = config.train_size; offset = config.train_offset; break;
    case Split::kValSource: n = config.val_source_size; offset = vs_off; break;
    case Split::kValTarget: n = config.val_target_size; offset = vt_off; break;
  }

  std::vector<LabeledScene> scenes(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const uint64_t s = scene_seed(base_seed, offset, i);
    LabeledScene scene = generate_scene(s, config.scene);
    if (split == Split::kValTarget) {
      const auto& domain =
          config.target_domains[static_cast<size_t>(i) % config.target_domains.size()];
      scene = apply_domain_transform(scene, find_transform(domain),
                                     derive_seed(s, kStreamTargetPick, 0));
    }
    scenes[static_cast<size_t>(i)] = std::move(scene);
  }
  return scenes;
}

std::vector<LabeledScene> build_synthetic_pool(const DataConfig& config,
                                               uint64_t base_seed) {
  config.validate();
  check_config(!config.synthetic_domains.empty(),
               "synthetic pool requires synthetic_domains");
  std::vector<LabeledScene> pool(static_cast<size_t>(config.train_size));
  for (int i = 0; i < config.train_size; ++i) {
    const uint64_t s = scene_seed(base_seed, config.train_offset, i);
    LabeledScene scene = generate_scene(s, config.scene);

    Rng pick(derive_seed(s, kStreamSynthPick, 0));
    const auto& domain = config.synthetic_domains[static_cast<size_t>(
        pick.uniform_int(static_cast<int>(config.synthetic_domains.size())))];
    scene = apply_domain_transform(scene, find_transform(domain),
                                   derive_seed(s, kStreamNoise, 1));

    // Image-only translation jitter: the synthetic-quality-gap analog.
    if (config.jitter_px > 0) {
      Rng jit(derive_seed(s, kStreamJitter, 0));
      const int dx = jit.uniform_int(2 * config.jitter_px + 1) - config.jitter_px;
      const int dy = jit.uniform_int(2 * config.jitter_px + 1) - config.jitter_px;
      if (dx != 0 || dy != 0) {
        Tensor shifted({3, scene.height, scene.width});
        for (int c = 0; c < 3; ++c) {
          for (int y = 0; y < scene.height; ++y) {
            const int sy = std::clamp(y - dy, 0, scene.height - 1);
            for (int x = 0; x < scene.width; ++x) {
              const int sx = std::clamp(x - dx, 0, scene.width - 1);
              shifted.at(c, y, x) = scene.image.at(c, sy, sx);
            }
          }
        }
        scene.image = std::move(shifted);
      }
    }
    scene.provenance = Provenance::kSyntheticAnalog;
    pool[static_cast<size_t>(i)] = std::move(scene);
  }
  return pool;
}

std::vector<std::pair<int, int>> mixing_indices(int real_size,
                                                int synthetic_size,
                                                const MixSpec& mix,
                                                uint64_t seed, int n) {
  check_config(mix.real_fraction >= 0.0 && mix.real_fraction <= 1.0,
               "real_fraction must be in [0,1]");
  check_config(mix.real_fraction == 0.0 || real_size > 0,
               "real_fraction > 0 with empty real pool");
  check_config(mix.real_fraction == 1.0 || synthetic_size > 0,
               "real_fraction < 1 with empty synthetic pool");
  Rng rng(derive_seed(seed, kStreamMixer, 0));
  std::vector<std::pair<int, int>> draws;
  draws.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const bool real = rng.bernoulli(mix.real_fraction);
    const int pool_size = real ? real_size : synthetic_size;
    draws.emplace_back(real ? 0 : 1, rng.uniform_int(pool_size));
  }
  return draws;
}

std::vector<LabeledScene> mixing_sampler(
    const std::vector<LabeledScene>& real_pool,
    const std::vector<LabeledScene>& synthetic_pool, const MixSpec& mix,
    uint64_t seed, int n) {
  const auto draws = mixing_indices(static_cast<int>(real_pool.size()),
                                    static_cast<int>(synthetic_pool.size()),
                                    mix, seed, n);
  std::vector<LabeledScene> out;
  out.reserve(static_cast<size_t>(n));
  for (const auto& [pool, idx] : draws) {
    out.push_back(pool == 0 ? real_pool[static_cast<size_t>(idx)]
                            : synthetic_pool[static_cast<size_t>(idx)]);
  }
  return out;
}

double mean_luminance(const Tensor& image) {
  const int h = image.dim(1);
  const int w = image.dim(2);
  double acc = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      acc += 0.299 * image.at(0, y, x) + 0.587 * image.at(1, y, x) +
             0.114 * image.at(2, y, x);
    }
  }
  return acc / (static_cast<double>(h) * w);
}

int save_split(const std::string& dir, const std::string& split_name,
               const std::vector<LabeledScene>& scenes,
               const DataConfig& config, uint64_t base_seed) {
  const fs::path split_dir = fs::path(dir) / split_name;
  fs::create_directories(split_dir);
  int written = 0;

  json manifest;
  manifest["split"] = split_name;
  manifest["base_seed"] = base_seed;
  manifest["canvas"] = {config.scene.height, config.scene.width};
  manifest["num_classes"] = config.scene.num_classes;
  manifest["entries"] = json::array();

  for (size_t i = 0; i < scenes.size(); ++i) {
    const auto& scene = scenes[i];
    const int h = scene.height;
    const int w = scene.width;

    std::string img_bytes(static_cast<size_t>(h) * w * 3 * sizeof(float), '\0');
    float* fp = reinterpret_cast<float*>(img_bytes.data());
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < 3; ++c) {
          *fp++ = static_cast<float>(scene.image.at(c, y, x));
        }
      }
    }
    write_file_if_changed(split_dir / (std::to_string(i) + ".img"), img_bytes,
                          &written);

    std::string lbl_bytes(reinterpret_cast<const char*>(scene.labels.data()),
                          scene.labels.size());
    write_file_if_changed(split_dir / (std::to_string(i) + ".lbl"), lbl_bytes,
                          &written);

    manifest["entries"].push_back({{"index", i},
                                   {"seed", scene.seed},
                                   {"domain_id", scene.domain_id},
                                   {"provenance", to_string(scene.provenance)}});
  }

  write_file_if_changed(split_dir / "manifest.json", manifest.dump(2) + "\n",
                        &written);
  return written;
}

std::vector<LabeledScene> load_split(const std::string& dir) {
  const fs::path split_dir(dir);
  const fs::path manifest_path = split_dir / "manifest.json";
  check_config(fs::exists(manifest_path),
               "missing manifest: " + manifest_path.string());
  std::ifstream in(manifest_path);
  json manifest = json::parse(in);

  const int h = manifest.at("canvas")[0].get<int>();
  const int w = manifest.at("canvas")[1].get<int>();

  std::vector<LabeledScene> scenes;
  for (const auto& entry : manifest.at("entries")) {
    const size_t idx = entry.at("index").get<size_t>();
    LabeledScene scene;
    scene.height = h;
    scene.width = w;
    scene.seed = entry.at("seed").get<uint64_t>();
    scene.domain_id = entry.at("domain_id").get<std::string>();
    scene.provenance =
        provenance_from_string(entry.at("provenance").get<std::string>());

    const fs::path img_path = split_dir / (std::to_string(idx) + ".img");
    std::ifstream img_in(img_path, std::ios::binary);
    check_config(img_in.good(), "missing image file: " + img_path.string());
    std::vector<float> buf(static_cast<size_t>(h) * w * 3);
    img_in.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
    check_config(img_in.gcount() ==
                     static_cast<std::streamsize>(buf.size() * sizeof(float)),
                 "truncated image file: " + img_path.string());
    scene.image = Tensor({3, h, w});
    const float* fp = buf.data();
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < 3; ++c) {
          scene.image.at(c, y, x) = static_cast<double>(*fp++);
        }
      }
    }

    const fs::path lbl_path = split_dir / (std::to_string(idx) + ".lbl");
    std::ifstream lbl_in(lbl_path, std::ios::binary);
    check_config(lbl_in.good(), "missing label file: " + lbl_path.string());
    scene.labels.resize(static_cast<size_t>(h) * w);
    lbl_in.read(reinterpret_cast<char*>(scene.labels.data()),
                static_cast<std::streamsize>(scene.labels.size()));
    check_config(lbl_in.gcount() ==
                     static_cast<std::streamsize>(scene.labels.size()),
                 "truncated label file: " + lbl_path.string());

    scenes.push_back(std::move(scene));
  }
  return scenes;
}

}  // namespace domino
