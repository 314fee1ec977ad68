// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "run_config.hpp"

namespace sbmtl::cli {

// Fixed layout below the run directory.
struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path resolved_config() const { return root / "config.resolved"; }
  std::filesystem::path data() const { return root / "data"; }
  std::filesystem::path source() const { return data() / "source.bin"; }
  std::filesystem::path target() const { return data() / "target.bin"; }
  std::filesystem::path manifest() const { return data() / "manifest.json"; }
  std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  std::filesystem::path encoder(maml::PretrainMode mode) const {
    return checkpoints() / ("encoder_" + maml::to_string(mode) + ".ckpt");
  }
  std::filesystem::path metamodel() const { return checkpoints() / "metamodel.ckpt"; }
  std::filesystem::path logs() const { return root / "logs"; }
  std::filesystem::path reports() const { return root / "reports"; }
};

// Run directory for a configuration: `override` when given, otherwise
// $SBMTL_OUTPUT_ROOT (default "runs") joined with run.name.
RunPaths resolve_run(const RunConfig& cfg, const std::string& override_dir);

// Creates the layout and writes config.resolved.
void prepare_run(const RunConfig& cfg, const RunPaths& paths);

void cmd_synth(const RunConfig& cfg, const RunPaths& paths, std::ostream& out);
// mode: supervised, episodic or both.
void cmd_pretrain(const RunConfig& cfg, const RunPaths& paths, const std::string& mode, std::ostream& out);
void cmd_metatrain(const RunConfig& cfg, const RunPaths& paths, std::ostream& out);
void cmd_eval(const RunConfig& cfg, const RunPaths& paths, std::ostream& out);
void cmd_diagnose(const RunConfig& cfg, const RunPaths& paths, std::ostream& out);

}  // namespace sbmtl::cli
