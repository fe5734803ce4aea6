// SPDX-FileCopyrightText: 2026 The geneo-seg authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "geneo/error.hpp"
#include "geneo/pointcloud.hpp"
#include "geneo/synth.hpp"
#include "geneo/training.hpp"

namespace geneo {

struct SplitFractions {
  double train = 0.2;
  double val = 0.1;
  double test = 0.7;

  void validate() const {
    if (train < 0.0 || val < 0.0 || test < 0.0 || std::abs(train + val + test - 1.0) > 1e-9) {
      throw ConfigError("split fractions must be nonnegative and sum to 1");
    }
  }
};

enum class Split { Train, Val, Test };

inline const char* split_name(Split s) {
  return s == Split::Train ? "train" : (s == Split::Val ? "val" : "test");
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw ConfigError("unknown split '" + s + "'");
}

/// Scene counts per split: train and val rounded, test takes the rest.
inline std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitFractions& f) {
  f.validate();
  const auto tr = static_cast<std::size_t>(std::llround(f.train * static_cast<double>(n)));
  const auto va = std::min(n - std::min(n, tr),
                           static_cast<std::size_t>(std::llround(f.val * static_cast<double>(n))));
  const std::size_t t = std::min(n, tr);
  return {t, va, n - t - va};
}

inline Split split_of(std::size_t index, const std::array<std::size_t, 3>& sizes) {
  if (index < sizes[0]) return Split::Train;
  if (index < sizes[0] + sizes[1]) return Split::Val;
  return Split::Test;
}

/// 64-bit FNV-1a, hex encoded.
inline std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string config_hash(const SceneConfig& cfg) { return fnv1a_hex(nlohmann::json(cfg).dump()); }

/// One tower-centered crop: the scene cut to a disc of radius equal to the
/// height of its central tower.
struct TowerCrop {
  PointCloud cloud;
  std::vector<TowerInfo> towers;  ///< towers whose axis lies inside the crop
  std::uint64_t seed = 0;
};

inline SceneConfig scene_config_for(const SceneConfig& base, std::size_t index) {
  SceneConfig c = base;
  c.seed = base.seed + index;
  return c;
}

inline TowerCrop make_tower_crop(const SceneConfig& cfg) {
  SyntheticScene s = generate_scene(cfg);
  std::array<double, 3> center{cfg.extent_x / 2.0, cfg.extent_y / 2.0, 0.0};
  double radius = 0.5 * (cfg.tower_height_min + cfg.tower_height_max);
  if (!s.towers.empty()) {
    center = {s.towers[0].x, s.towers[0].y, s.towers[0].base_z};
    radius = s.towers[0].height;
  }
  TowerCrop crop;
  crop.cloud = crop_around_point(s.cloud, center, radius);
  crop.seed = cfg.seed;
  for (const auto& t : s.towers) {
    if (std::hypot(t.x - center[0], t.y - center[1]) <= radius) crop.towers.push_back(t);
  }
  return crop;
}

struct ManifestEntry {
  std::string file;
  Split split = Split::Train;
  std::uint64_t seed = 0;
  std::string config_hash;
  double tower_radius_m = 0.0;  ///< mean radius over height of the crop's towers (0 if none)
};

struct Manifest {
  std::filesystem::path root;  ///< directory the scene files are relative to
  SceneConfig config;
  SplitFractions splits;
  std::vector<ManifestEntry> scenes;

  double mean_tower_radius_m() const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& e : scenes) {
      if (e.tower_radius_m > 0.0) {
        s += e.tower_radius_m;
        ++n;
      }
    }
    return n ? s / static_cast<double>(n) : 0.0;
  }
};

inline nlohmann::json manifest_json(const Manifest& m) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["target_label"] = kTowerLabel;
  j["scene_config"] = m.config;
  j["splits"] = {m.splits.train, m.splits.val, m.splits.test};
  j["scenes"] = nlohmann::json::array();
  for (const auto& e : m.scenes) {
    j["scenes"].push_back({{"file", e.file},
                           {"split", split_name(e.split)},
                           {"seed", e.seed},
                           {"config_hash", e.config_hash},
                           {"tower_radius_m", e.tower_radius_m}});
  }
  return j;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(path));
    Manifest m;
    m.root = path.parent_path();
    if (j.at("format_version").get<int>() != 1) throw IoError("unsupported manifest version");
    m.config = j.at("scene_config").get<SceneConfig>();
    const auto& sp = j.at("splits");
    m.splits = {sp.at(0).get<double>(), sp.at(1).get<double>(), sp.at(2).get<double>()};
    for (const auto& e : j.at("scenes")) {
      ManifestEntry me;
      me.file = e.at("file").get<std::string>();
      me.split = parse_split(e.at("split").get<std::string>());
      me.seed = e.at("seed").get<std::uint64_t>();
      me.config_hash = e.at("config_hash").get<std::string>();
      me.tower_radius_m = e.value("tower_radius_m", 0.0);
      m.scenes.push_back(std::move(me));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": malformed manifest: " + e.what());
  } catch (const ConfigError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

/// Generates the crop for scene `index`, applying label noise to the
/// training and validation splits when the config asks for it. Test crops
/// always keep clean labels.
inline TowerCrop dataset_crop(const SceneConfig& base, std::size_t index, Split split) {
  const SceneConfig cfg = scene_config_for(base, index);
  TowerCrop crop = make_tower_crop(cfg);
  if (cfg.noise_rate > 0.0 && split != Split::Test) crop.cloud = inject_label_noise(crop.cloud, cfg);
  return crop;
}

inline double mean_radius(const std::vector<TowerInfo>& towers) {
  if (towers.empty()) return 0.0;
  double s = 0.0;
  for (const auto& t : towers) s += t.mean_radius();
  return s / static_cast<double>(towers.size());
}

/// Writes `scene_NNNN.gpc` files and `manifest.json` into out_dir.
inline Manifest build_dataset(const SceneConfig& config, std::size_t n_scenes,
                              const SplitFractions& splits, const std::filesystem::path& out_dir) {
  config.validate();
  splits.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  Manifest m;
  m.root = out_dir;
  m.config = config;
  m.splits = splits;
  const auto sizes = split_sizes(n_scenes, splits);
  std::vector<ManifestEntry> entries(n_scenes);
  parallel_for(0, n_scenes, [&](std::size_t i) {
    const Split split = split_of(i, sizes);
    const TowerCrop crop = dataset_crop(config, i, split);
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%04zu.gpc", i);
    save_pointcloud(crop.cloud, out_dir / name, CloudFormat::Binary);
    entries[i] = {name, split, crop.seed, config_hash(scene_config_for(config, i)), mean_radius(crop.towers)};
  });
  m.scenes = std::move(entries);
  detail::write_file(out_dir / "manifest.json", manifest_json(m).dump(2) + "\n");
  return m;
}

/// Voxelized scenes grouped by split.
struct Dataset {
  std::vector<Scene> train;
  std::vector<Scene> val;
  std::vector<Scene> test;

  std::vector<Scene>& split(Split s) { return s == Split::Train ? train : (s == Split::Val ? val : test); }
  const std::vector<Scene>& split(Split s) const {
    return s == Split::Train ? train : (s == Split::Val ? val : test);
  }
};

inline Dataset load_dataset(const Manifest& m, Shape3 grid_shape) {
  Dataset d;
  std::vector<Scene> scenes(m.scenes.size());
  parallel_for(0, m.scenes.size(), [&](std::size_t i) {
    const auto& e = m.scenes[i];
    scenes[i] = make_scene(e.file, load_pointcloud(m.root / e.file, CloudFormat::Binary), grid_shape);
  });
  for (std::size_t i = 0; i < scenes.size(); ++i) d.split(m.scenes[i].split).push_back(std::move(scenes[i]));
  return d;
}

inline std::vector<Scene> load_split(const Manifest& m, Split which, Shape3 grid_shape) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < m.scenes.size(); ++i)
    if (m.scenes[i].split == which) idx.push_back(i);
  std::vector<Scene> scenes(idx.size());
  parallel_for(0, idx.size(), [&](std::size_t k) {
    const auto& e = m.scenes[idx[k]];
    scenes[k] = make_scene(e.file, load_pointcloud(m.root / e.file, CloudFormat::Binary), grid_shape);
  });
  return scenes;
}

/// Loads and voxelizes the scenes of one split one at a time.
inline void for_each_manifest_scene(const Manifest& m, Split which, Shape3 grid_shape,
                                    const std::function<void(const Scene&)>& fn) {
  for (const auto& e : m.scenes) {
    if (e.split != which) continue;
    fn(make_scene(e.file, load_pointcloud(m.root / e.file, CloudFormat::Binary), grid_shape));
  }
}

/// In-memory equivalent of build_dataset followed by load_dataset.
struct GeneratedDataset {
  Dataset data;
  double mean_tower_radius_m = 0.0;
};

inline GeneratedDataset generate_dataset(const SceneConfig& config, std::size_t n_scenes,
                                         const SplitFractions& splits, Shape3 grid_shape) {
  config.validate();
  const auto sizes = split_sizes(n_scenes, splits);
  std::vector<Scene> scenes(n_scenes);
  std::vector<double> radii(n_scenes, 0.0);
  parallel_for(0, n_scenes, [&](std::size_t i) {
    TowerCrop crop = dataset_crop(config, i, split_of(i, sizes));
    radii[i] = mean_radius(crop.towers);
    scenes[i] = make_scene("scene_" + std::to_string(i), std::move(crop.cloud), grid_shape);
  });
  GeneratedDataset g;
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < n_scenes; ++i) {
    g.data.split(split_of(i, sizes)).push_back(std::move(scenes[i]));
    if (radii[i] > 0.0) {
      s += radii[i];
      ++n;
    }
  }
  g.mean_tower_radius_m = n ? s / static_cast<double>(n) : 0.0;
  return g;
}

/// Builds the scenes of one split one at a time, for grids too large to hold
/// a whole split in memory.
inline void for_each_generated_scene(const SceneConfig& config, std::size_t n_scenes,
                                     const SplitFractions& splits, Split which, Shape3 grid_shape,
                                     const std::function<void(const Scene&)>& fn) {
  config.validate();
  const auto sizes = split_sizes(n_scenes, splits);
  for (std::size_t i = 0; i < n_scenes; ++i) {
    const Split s = split_of(i, sizes);
    if (s != which) continue;
    TowerCrop crop = dataset_crop(config, i, s);
    fn(make_scene("scene_" + std::to_string(i), std::move(crop.cloud), grid_shape));
  }
}

}  // namespace geneo
