// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "sbmtl/common/errors.hpp"
#include "sbmtl/diagnostics/diagnostics.hpp"
#include "sbmtl/episodes/synth.hpp"
#include "sbmtl/maml/maml.hpp"

namespace sbmtl::cli {

using Json = nlohmann::ordered_json;

// Malformed or inconsistent configuration; exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A prerequisite artifact is missing; exit code 3.
class MissingArtifact : public Error {
 public:
  using Error::Error;
};

struct EvalSettings {
  std::size_t way = 5;
  std::size_t query = 15;
  std::size_t episodes = 600;
  std::vector<std::size_t> shots{5, 20, 50};
  std::string predictor = "paired";  // paired | oracle
  // Fresh classifiers for the new target classes of every test episode.
  bool reset_heads = true;
};

struct DiagnoseSettings {
  std::size_t trials = 100;
  std::size_t shot = 5;
  std::size_t query = 15;
  std::size_t accuracy_episodes = 600;
  diagnostics::PsiConvention convention = diagnostics::PsiConvention::kVerbatim;
};

struct RunConfig {
  Json resolved;  // defaults with every override applied
  std::string name;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  episodes::DomainShiftConfig domain;
  maml::ModelConfig model;
  maml::PretrainConfig pretrain_supervised;
  maml::PretrainConfig pretrain_episodic;
  maml::InnerLoopConfig inner;
  maml::OuterLoopConfig outer;
  EvalSettings eval;
  DiagnoseSettings diagnose;
};

// Every key the configuration accepts, at its default value.
Json default_config();

// Recursively overlays `patch` onto `base`. Keys absent from base and values
// whose JSON kind differs from the default raise ConfigError naming the key.
void merge_config(Json& base, const Json& patch, const std::string& path = "");

// Applies "section.key=value"; the value is parsed as JSON when possible and
// taken as a string otherwise.
void apply_set(Json& config, const std::string& assignment);

// Validates a merged document and builds the typed configuration.
RunConfig build_config(const Json& resolved);

Json load_json_file(const std::filesystem::path& path);

}  // namespace sbmtl::cli
