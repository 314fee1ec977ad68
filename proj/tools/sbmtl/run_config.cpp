// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#include "run_config.hpp"

#include <fstream>
#include <sstream>

namespace sbmtl::cli {

Json default_config() {
  return Json::parse(R"({
    "run": {"name": "default", "seed": 1, "jobs": 1},
    "domain": {
      "item_shape": [3, 16, 16], "latent_dim": 16, "source_classes": 32, "target_classes": 16,
      "items_per_class": 60, "prototype_scale": 1.0, "latent_decay": 0.85, "spread_min": 0.8,
      "spread_max": 2.0, "basis_frequencies": 3, "render_gain": 1.5, "pixel_noise": 0.05,
      "shift_magnitude": 0.5, "rotation_angle": 0.8, "channel_gain": 0.3, "channel_bias": 0.3,
      "nonlinearity_gain": 0.5, "noise_gain": 1.0, "clutter_gain": 0.5, "class_split_seed": 17
    },
    "encoder": {"widths": [64, 64, 64, 64], "tunable_blocks": 1, "leaky_slope": 0.2},
    "pretrain": {
      "epochs": 40, "learning_rate": 0.001, "batch_size": 64,
      "episodic_way": 5, "episodic_shot": 5, "episodic_query": 5, "episodes_per_epoch": 0
    },
    "gnn": {
      "metric_dim": 32, "layers": 2, "layer_hidden": 32, "edge_hidden": 32,
      "self_operator": "identity", "leaky_slope": 0.2, "max_pairs_per_chunk": 2000000
    },
    "inner": {
      "epochs": 15, "augment_epochs": 5, "batch_size": 16, "optimizer": "adam", "learning_rate": 0.01,
      "transductive": true, "augment": false, "augment_extra": 17, "augment_jitter": 0.1,
      "augment_crop_min": 0.75, "augment_hflip": true, "augment_vflip": true,
      "reset_heads": false
    },
    "outer": {"learning_rate": 0.001, "episodes": 500, "way": 5, "shot": 5, "query": 15, "checkpoint_every": 100},
    "eval": {"way": 5, "query": 15, "episodes": 600, "shots": [5, 20, 50], "predictor": "paired",
             "reset_heads": true},
    "diagnose": {"trials": 100, "shot": 5, "query": 15, "accuracy_episodes": 600, "psi_convention": "verbatim"}
  })");
}

namespace {

const char* kind_name(const Json& j) {
  if (j.is_boolean()) return "boolean";
  if (j.is_number()) return "number";
  if (j.is_string()) return "string";
  if (j.is_array()) return "array";
  if (j.is_object()) return "object";
  return "null";
}

bool same_kind(const Json& a, const Json& b) {
  if (a.is_number() && b.is_number()) return true;
  return std::string(kind_name(a)) == kind_name(b);
}

template <typename T>
T get(const Json& j, const char* section, const char* key) {
  const Json& v = j.at(section).at(key);
  try {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError("");
      return v.get<T>();
    } else {
      return v.get<T>();
    }
  } catch (const std::exception&) {
    throw ConfigError(std::string("config: ") + section + "." + key + " has an invalid value " + v.dump());
  }
}

std::vector<std::size_t> get_sizes(const Json& j, const char* section, const char* key) {
  std::vector<std::size_t> out;
  for (const Json& v : j.at(section).at(key)) {
    if (!v.is_number_integer() || v.get<long long>() <= 0) {
      throw ConfigError(std::string("config: ") + section + "." + key + " must hold positive integers");
    }
    out.push_back(v.get<std::size_t>());
  }
  return out;
}

// Library validation failures are configuration errors at this level.
template <typename F>
void check(const char* what, F&& f) {
  try {
    f();
  } catch (const InputError& e) {
    throw ConfigError(std::string("config: ") + what + ": " + e.what());
  }
}

}  // namespace

void merge_config(Json& base, const Json& patch, const std::string& path) {
  if (!patch.is_object()) throw ConfigError("config: expected an object at '" + (path.empty() ? "<root>" : path) + "'");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("config: unknown key '" + key + "'");
    Json& target = base[it.key()];
    if (!same_kind(target, it.value())) {
      throw ConfigError("config: '" + key + "' expects a " + kind_name(target) + ", got " + it.value().dump());
    }
    if (target.is_object()) {
      merge_config(target, it.value(), key);
    } else {
      target = it.value();
    }
  }
}

void apply_set(Json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects section.key=value, got '" + assignment + "'");
  const std::string path = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(text);
  } catch (const Json::parse_error&) {
    value = text;
  }
  // Build a nested patch from the dotted path and merge it.
  Json patch = value;
  std::string rest = path;
  std::vector<std::string> parts;
  for (std::size_t pos; (pos = rest.find('.')) != std::string::npos; rest = rest.substr(pos + 1)) {
    parts.push_back(rest.substr(0, pos));
  }
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    if (it->empty()) throw ConfigError("--set: empty key in '" + path + "'");
    Json wrap = Json::object();
    wrap[*it] = std::move(patch);
    patch = std::move(wrap);
  }
  merge_config(config, patch);
}

RunConfig build_config(const Json& j) {
  RunConfig c;
  c.resolved = j;
  c.name = get<std::string>(j, "run", "name");
  if (c.name.empty() || c.name.find('/') != std::string::npos) throw ConfigError("config: run.name must be a plain name");
  c.seed = get<std::uint64_t>(j, "run", "seed");
  c.jobs = get<std::size_t>(j, "run", "jobs");
  if (c.jobs == 0) throw ConfigError("config: run.jobs must be positive");

  auto& d = c.domain;
  d.item_shape = get_sizes(j, "domain", "item_shape");
  d.latent_dim = get<std::size_t>(j, "domain", "latent_dim");
  d.source_classes = get<std::size_t>(j, "domain", "source_classes");
  d.target_classes = get<std::size_t>(j, "domain", "target_classes");
  d.items_per_class = get<std::size_t>(j, "domain", "items_per_class");
  d.prototype_scale = get<double>(j, "domain", "prototype_scale");
  d.latent_decay = get<double>(j, "domain", "latent_decay");
  d.spread_min = get<double>(j, "domain", "spread_min");
  d.spread_max = get<double>(j, "domain", "spread_max");
  d.basis_frequencies = get<std::size_t>(j, "domain", "basis_frequencies");
  d.render_gain = get<double>(j, "domain", "render_gain");
  d.pixel_noise = get<double>(j, "domain", "pixel_noise");
  d.shift_magnitude = get<double>(j, "domain", "shift_magnitude");
  d.rotation_angle = get<double>(j, "domain", "rotation_angle");
  d.channel_gain = get<double>(j, "domain", "channel_gain");
  d.channel_bias = get<double>(j, "domain", "channel_bias");
  d.nonlinearity_gain = get<double>(j, "domain", "nonlinearity_gain");
  d.noise_gain = get<double>(j, "domain", "noise_gain");
  d.clutter_gain = get<double>(j, "domain", "clutter_gain");
  d.class_split_seed = get<std::uint64_t>(j, "domain", "class_split_seed");
  check("domain", [&] { d.validate(); });

  encoder::EncoderConfig enc;
  enc.input_shape = d.item_shape;
  const std::vector<std::size_t> widths = get_sizes(j, "encoder", "widths");
  for (std::size_t i = 0; i < widths.size(); ++i) {
    enc.blocks.push_back({widths[i], true, i > 0 && widths[i] == widths[i - 1], true});
  }
  enc.tunable_blocks = get<std::size_t>(j, "encoder", "tunable_blocks");
  enc.leaky_slope = get<double>(j, "encoder", "leaky_slope");
  if (widths.empty()) throw ConfigError("config: encoder.widths must not be empty");

  c.model.encoder = enc;
  c.model.metric_dim = get<std::size_t>(j, "gnn", "metric_dim");
  auto& g = c.model.gnn;
  g.layers = get<std::size_t>(j, "gnn", "layers");
  g.layer_hidden = get<std::size_t>(j, "gnn", "layer_hidden");
  g.edge_hidden = get<std::size_t>(j, "gnn", "edge_hidden");
  check("gnn", [&] { g.self_operator = gnn::parse_self_operator(get<std::string>(j, "gnn", "self_operator")); });
  g.leaky_slope = get<double>(j, "gnn", "leaky_slope");
  g.max_pairs_per_chunk = get<std::size_t>(j, "gnn", "max_pairs_per_chunk");

  c.outer.learning_rate = get<double>(j, "outer", "learning_rate");
  c.outer.episodes = get<std::size_t>(j, "outer", "episodes");
  c.outer.way = get<std::size_t>(j, "outer", "way");
  c.outer.shot = get<std::size_t>(j, "outer", "shot");
  c.outer.query = get<std::size_t>(j, "outer", "query");
  c.outer.checkpoint_every = get<std::size_t>(j, "outer", "checkpoint_every");
  c.outer.seed = derive_seed(c.seed, 0x0e7);
  c.model.n_way = c.outer.way;
  check("model", [&] { c.model.validate(); });
  check("outer", [&] { c.outer.validate(); });

  maml::PretrainConfig pre;
  pre.epochs = get<std::size_t>(j, "pretrain", "epochs");
  pre.learning_rate = get<double>(j, "pretrain", "learning_rate");
  pre.batch_size = get<std::size_t>(j, "pretrain", "batch_size");
  pre.way = get<std::size_t>(j, "pretrain", "episodic_way");
  pre.shot = get<std::size_t>(j, "pretrain", "episodic_shot");
  pre.query = get<std::size_t>(j, "pretrain", "episodic_query");
  pre.episodes_per_epoch = get<std::size_t>(j, "pretrain", "episodes_per_epoch");
  pre.head = g;
  c.pretrain_supervised = pre;
  c.pretrain_episodic = pre;
  c.pretrain_episodic.mode = maml::PretrainMode::kEpisodic;
  check("pretrain", [&] { pre.validate(); });
  if (pre.way != c.model.n_way) throw ConfigError("config: pretrain.episodic_way must equal outer.way");

  auto& in = c.inner;
  in.epochs = get<std::size_t>(j, "inner", "epochs");
  in.augment_epochs = get<std::size_t>(j, "inner", "augment_epochs");
  in.batch_size = get<std::size_t>(j, "inner", "batch_size");
  check("inner", [&] { in.optimizer = numerics::parse_optimizer_kind(get<std::string>(j, "inner", "optimizer")); });
  in.learning_rate = get<double>(j, "inner", "learning_rate");
  in.transductive = get<bool>(j, "inner", "transductive");
  in.augment = get<bool>(j, "inner", "augment");
  in.augmentation.extra_per_image = get<std::size_t>(j, "inner", "augment_extra");
  in.augmentation.jitter = get<double>(j, "inner", "augment_jitter");
  in.augmentation.crop_min_fraction = get<double>(j, "inner", "augment_crop_min");
  in.augmentation.horizontal_flip = get<bool>(j, "inner", "augment_hflip");
  in.augmentation.vertical_flip = get<bool>(j, "inner", "augment_vflip");
  in.reset_heads = get<bool>(j, "inner", "reset_heads");
  check("inner", [&] { in.validate(); });

  c.eval.way = get<std::size_t>(j, "eval", "way");
  c.eval.query = get<std::size_t>(j, "eval", "query");
  c.eval.episodes = get<std::size_t>(j, "eval", "episodes");
  c.eval.shots = get_sizes(j, "eval", "shots");
  c.eval.predictor = get<std::string>(j, "eval", "predictor");
  c.eval.reset_heads = get<bool>(j, "eval", "reset_heads");
  if (c.eval.predictor != "paired" && c.eval.predictor != "oracle") {
    throw ConfigError("config: eval.predictor must be paired or oracle");
  }
  if (c.eval.way != c.model.n_way) throw ConfigError("config: eval.way must equal outer.way");
  if (c.eval.shots.empty() || c.eval.episodes == 0) throw ConfigError("config: eval needs shots and episodes");

  c.diagnose.trials = get<std::size_t>(j, "diagnose", "trials");
  c.diagnose.shot = get<std::size_t>(j, "diagnose", "shot");
  c.diagnose.query = get<std::size_t>(j, "diagnose", "query");
  c.diagnose.accuracy_episodes = get<std::size_t>(j, "diagnose", "accuracy_episodes");
  check("diagnose", [&] {
    c.diagnose.convention = diagnostics::parse_psi_convention(get<std::string>(j, "diagnose", "psi_convention"));
  });
  if (c.diagnose.trials == 0 || c.diagnose.shot == 0 || c.diagnose.query == 0) {
    throw ConfigError("config: diagnose.trials, shot and query must be positive");
  }
  return c;
}

Json load_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw MissingArtifact("cannot read config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  try {
    return Json::parse(ss.str());
  } catch (const Json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
}

}  // namespace sbmtl::cli
