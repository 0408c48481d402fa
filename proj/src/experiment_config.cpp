// Copyright 2026 The PhoDe Toolkit Authors
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

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "json.hpp"
#include "phode/pipeline.hpp"
#include "phode/rng.hpp"

namespace phode {

using nlohmann::json;

std::string Cell::name() const {
  return std::string(to_string(condition)) + "_" + std::string(to_string(noise));
}

std::vector<Cell> ExperimentConfig::cells() const {
  std::vector<Cell> out;
  for (auto c : conditions)
    for (auto n : noise_levels) out.push_back({c, n});
  return out;
}

std::optional<std::filesystem::path> ExperimentConfig::human_for(const Cell& c) const {
  for (const std::string& key : {c.name(), std::string(to_string(c.condition)), std::string("*")}) {
    auto it = human.find(key);
    if (it != human.end()) return it->second;
  }
  return std::nullopt;
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return path.lexically_normal();
}

template <typename T>
T get(const json& j, const char* key, const char* where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config: '") + key + "' in " + where + " has the wrong type");
  }
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string("config: ") + where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }))
      throw ConfigError("config: unknown key '" + k + "' in " + where);
  }
}

template <typename E, typename Parse>
std::vector<E> parse_list(const json& j, const char* key, Parse parse) {
  if (!j.is_array() || j.empty())
    throw ConfigError(std::string("config: '") + key + "' must be a non-empty array");
  std::vector<E> out;
  for (const auto& v : j) {
    if (!v.is_string()) throw ConfigError(std::string("config: '") + key + "' entries must be strings");
    E e;
    try {
      e = parse(v.get<std::string>());
    } catch (const std::exception& ex) {
      throw ConfigError(std::string("config: ") + ex.what());
    }
    if (std::find(out.begin(), out.end(), e) != out.end())
      throw ConfigError(std::string("config: duplicate entry in '") + key + "'");
    out.push_back(e);
  }
  return out;
}

std::string hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

std::string file_digest(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) return "missing";
  std::string data((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return hex(fnv1a64(data));
}

json pipeline_fields(const ExperimentConfig& cfg) {
  json j;
  j["manifest"] = file_digest(cfg.manifest);
  j["weights"] = file_digest(cfg.weights);
  j["augmentation_config"] = cfg.augmentation_config ? file_digest(*cfg.augmentation_config) : "default";
  j["seed"] = cfg.seed;
  json conds = json::array(), noises = json::array();
  for (auto c : cfg.conditions) conds.push_back(std::string(to_string(c)));
  for (auto n : cfg.noise_levels) noises.push_back(std::string(to_string(n)));
  j["conditions"] = conds;
  j["noise_levels"] = noises;
  const auto& v = cfg.vocoder;
  j["vocoder"] = {{"pulse_rate", v.pulse_rate},
                  {"apply_spread", v.apply_spread},
                  {"spread_decay_per_mm", v.spread.decay_per_mm}};
  j["activations"] = cfg.needs_activations();
  return j;
}

}  // namespace

ExperimentConfig parse_experiment_config(std::string_view json_text,
                                         const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  check_keys(j,
             {"manifest", "weights", "out", "seed", "jobs", "conditions", "noise_levels",
              "augmentation_config", "vocoder", "human", "shuffles", "dynamics", "decode"},
             "the top level");
  ExperimentConfig cfg;
  if (j.contains("manifest")) cfg.manifest = resolve(base_dir, get<std::string>(j, "manifest", "config"));
  if (j.contains("weights")) cfg.weights = resolve(base_dir, get<std::string>(j, "weights", "config"));
  if (j.contains("out")) cfg.out_dir = resolve(base_dir, get<std::string>(j, "out", "config"));
  if (j.contains("seed")) cfg.seed = get<std::uint64_t>(j, "seed", "config");
  if (j.contains("jobs")) cfg.jobs = get<int>(j, "jobs", "config");
  if (j.contains("conditions"))
    cfg.conditions = parse_list<Condition>(j["conditions"], "conditions", parse_condition);
  if (j.contains("noise_levels"))
    cfg.noise_levels = parse_list<NoiseLevel>(j["noise_levels"], "noise_levels", parse_noise_level);
  if (j.contains("augmentation_config") && !j["augmentation_config"].is_null())
    cfg.augmentation_config = resolve(base_dir, get<std::string>(j, "augmentation_config", "config"));
  if (j.contains("shuffles")) cfg.shuffles = get<int>(j, "shuffles", "config");

  if (j.contains("vocoder")) {
    const auto& v = j["vocoder"];
    check_keys(v, {"pulse_rate", "apply_spread", "spread_decay_per_mm"}, "vocoder");
    if (v.contains("pulse_rate")) cfg.vocoder.pulse_rate = get<double>(v, "pulse_rate", "vocoder");
    if (v.contains("apply_spread")) cfg.vocoder.apply_spread = get<bool>(v, "apply_spread", "vocoder");
    if (v.contains("spread_decay_per_mm"))
      cfg.vocoder.spread.decay_per_mm = get<double>(v, "spread_decay_per_mm", "vocoder");
  }
  if (j.contains("human")) {
    const auto& h = j["human"];
    if (h.is_string()) {
      cfg.human["*"] = resolve(base_dir, h.get<std::string>());
    } else if (h.is_object()) {
      for (const auto& [k, v] : h.items()) {
        if (!v.is_string()) throw ConfigError("config: human matrix paths must be strings");
        cfg.human[k] = resolve(base_dir, v.get<std::string>());
      }
    } else {
      throw ConfigError("config: 'human' must be a path or an object of paths");
    }
  }
  if (j.contains("dynamics")) {
    const auto& d = j["dynamics"];
    check_keys(d,
               {"enabled", "layers", "pre_fraction", "post_fraction", "max_per_category",
                "min_per_category", "pca_threshold"},
               "dynamics");
    if (d.contains("enabled")) cfg.dynamics = get<bool>(d, "enabled", "dynamics");
    if (d.contains("layers")) cfg.dynamics_layers = get<std::vector<int>>(d, "layers", "dynamics");
    if (d.contains("pre_fraction")) cfg.window.pre_fraction = get<double>(d, "pre_fraction", "dynamics");
    if (d.contains("post_fraction")) cfg.window.post_fraction = get<double>(d, "post_fraction", "dynamics");
    if (d.contains("max_per_category"))
      cfg.exemplars.max_per_category = get<int>(d, "max_per_category", "dynamics");
    if (d.contains("min_per_category"))
      cfg.exemplars.min_per_category = get<int>(d, "min_per_category", "dynamics");
    if (d.contains("pca_threshold")) cfg.pca_threshold = get<double>(d, "pca_threshold", "dynamics");
  }
  if (j.contains("decode")) {
    const auto& d = j["decode"];
    check_keys(d, {"enabled", "folds", "train_fraction", "ridge", "max_frames"}, "decode");
    if (d.contains("enabled")) cfg.decode = get<bool>(d, "enabled", "decode");
    if (d.contains("folds")) cfg.decoding.folds = get<int>(d, "folds", "decode");
    if (d.contains("train_fraction")) cfg.decoding.train_fraction = get<double>(d, "train_fraction", "decode");
    if (d.contains("ridge")) cfg.decoding.ridge = get<double>(d, "ridge", "decode");
    if (d.contains("max_frames")) cfg.decode_max_frames = get<int>(d, "max_frames", "decode");
  }

  if (cfg.jobs < 1) throw ConfigError("config: jobs must be at least 1");
  if (cfg.shuffles < 1) throw ConfigError("config: shuffles must be at least 1");
  if (!(cfg.vocoder.pulse_rate > 0)) throw ConfigError("config: vocoder pulse_rate must be positive");
  if (!(cfg.pca_threshold > 0 && cfg.pca_threshold <= 1))
    throw ConfigError("config: pca_threshold must lie in (0, 1]");
  if (cfg.exemplars.min_per_category < 1 ||
      cfg.exemplars.max_per_category < cfg.exemplars.min_per_category)
    throw ConfigError("config: exemplar counts must satisfy 1 <= min_per_category <= max_per_category");
  if (cfg.decoding.folds < 1 || !(cfg.decoding.train_fraction > 0 && cfg.decoding.train_fraction < 1))
    throw ConfigError("config: decode needs folds >= 1 and train_fraction in (0, 1)");
  if (cfg.decode_max_frames < 1) throw ConfigError("config: decode max_frames must be positive");
  for (int l : cfg.dynamics_layers)
    if (l < 0) throw ConfigError("config: dynamics layers must be nonnegative trace indices");
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_experiment_config(ss.str(), path.parent_path());
}

std::string experiment_config_json(const ExperimentConfig& cfg) {
  json j;
  j["manifest"] = cfg.manifest.string();
  j["weights"] = cfg.weights.string();
  j["out"] = cfg.out_dir.string();
  j["seed"] = cfg.seed;
  j["jobs"] = cfg.jobs;
  json conds = json::array(), noises = json::array();
  for (auto c : cfg.conditions) conds.push_back(std::string(to_string(c)));
  for (auto n : cfg.noise_levels) noises.push_back(std::string(to_string(n)));
  j["conditions"] = conds;
  j["noise_levels"] = noises;
  j["augmentation_config"] = cfg.augmentation_config ? json(cfg.augmentation_config->string()) : json();
  j["vocoder"] = {{"pulse_rate", cfg.vocoder.pulse_rate},
                  {"apply_spread", cfg.vocoder.apply_spread},
                  {"spread_decay_per_mm", cfg.vocoder.spread.decay_per_mm}};
  json human = json::object();
  for (const auto& [k, v] : cfg.human) human[k] = v.string();
  j["human"] = human;
  j["shuffles"] = cfg.shuffles;
  j["dynamics"] = {{"enabled", cfg.dynamics},
                   {"layers", cfg.dynamics_layers},
                   {"pre_fraction", cfg.window.pre_fraction},
                   {"post_fraction", cfg.window.post_fraction},
                   {"max_per_category", cfg.exemplars.max_per_category},
                   {"min_per_category", cfg.exemplars.min_per_category},
                   {"pca_threshold", cfg.pca_threshold}};
  j["decode"] = {{"enabled", cfg.decode},
                 {"folds", cfg.decoding.folds},
                 {"train_fraction", cfg.decoding.train_fraction},
                 {"ridge", cfg.decoding.ridge},
                 {"max_frames", cfg.decode_max_frames}};
  return j.dump(2) + "\n";
}

std::string pipeline_hash(const ExperimentConfig& cfg) {
  return hex(fnv1a64(pipeline_fields(cfg).dump()));
}

std::string config_hash(const ExperimentConfig& cfg) {
  json j = pipeline_fields(cfg);
  json human = json::object();
  for (const auto& [k, v] : cfg.human) human[k] = file_digest(v);
  j["human"] = human;
  j["shuffles"] = cfg.shuffles;
  j["dynamics"] = {cfg.dynamics,
                   cfg.dynamics_layers,
                   cfg.window.pre_fraction,
                   cfg.window.post_fraction,
                   cfg.window.zscore,
                   cfg.exemplars.max_per_category,
                   cfg.exemplars.min_per_category,
                   cfg.pca_threshold};
  j["decode"] = {cfg.decode, cfg.decoding.folds, cfg.decoding.train_fraction, cfg.decoding.ridge,
                 cfg.decode_max_frames};
  return hex(fnv1a64(j.dump()));
}

}  // namespace phode
