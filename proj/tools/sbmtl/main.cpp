// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"

using namespace sbmtl;
using namespace sbmtl::cli;

namespace {

struct Common {
  std::string config_path;
  std::string run_dir;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON run configuration");
  cmd->add_option("--run-dir", c.run_dir, "run directory (default: $SBMTL_OUTPUT_ROOT/<run.name>)");
  cmd->add_option("--set", c.sets, "override one key, e.g. --set outer.episodes=100")->allow_extra_args(false);
  cmd->add_option("--seed", c.seed, "run seed");
  cmd->add_option("--jobs", c.jobs, "meta-test worker threads");
}

RunConfig resolve(const Common& c, const std::vector<std::string>& extra_sets) {
  Json doc = default_config();
  if (!c.config_path.empty()) merge_config(doc, load_json_file(c.config_path));
  for (const auto& s : c.sets) apply_set(doc, s);
  for (const auto& s : extra_sets) apply_set(doc, s);
  if (c.seed) apply_set(doc, "run.seed=" + std::to_string(*c.seed));
  if (c.jobs) apply_set(doc, "run.jobs=" + std::to_string(*c.jobs));
  return build_config(doc);
}

std::string shots_json(const std::string& list) {
  std::string out = "[";
  std::stringstream ss(list);
  std::string item;
  bool first = true;
  while (std::getline(ss, item, ',')) {
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos) {
      throw ConfigError("--shots expects a comma-separated list of positive integers, got '" + list + "'");
    }
    out += (first ? "" : ",") + item;
    first = false;
  }
  return out + "]";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Score-based meta transfer-learning for cross-domain few-shot classification"};
  app.require_subcommand(1);
  Common common;
  std::string mode = "both", shots, augment, psi;

  CLI::App* synth = app.add_subcommand("synth", "generate source and target datasets");
  CLI::App* pretrain = app.add_subcommand("pretrain", "pretrain the feature encoders");
  CLI::App* metatrain = app.add_subcommand("metatrain", "meta-train on source episodes");
  CLI::App* eval = app.add_subcommand("eval", "evaluate on target episodes");
  CLI::App* diagnose = app.add_subcommand("diagnose", "asymmetry measures and the Linear MTL comparison");
  for (CLI::App* cmd : {synth, pretrain, metatrain, eval, diagnose}) add_common(cmd, common);
  pretrain->add_option("--mode", mode, "supervised, episodic or both")
      ->check(CLI::IsMember({"supervised", "episodic", "both"}));
  eval->add_option("--shots", shots, "comma-separated shot list, e.g. 5,20,50");
  for (CLI::App* cmd : {metatrain, eval, diagnose}) {
    cmd->add_option("--augment", augment, "support augmentation in the inner loop")->check(CLI::IsMember({"on", "off"}));
  }
  diagnose->add_option("--psi-convention", psi, "verbatim or normalized")
      ->check(CLI::IsMember({"verbatim", "normalized"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    std::vector<std::string> extra;
    if (!shots.empty()) extra.push_back("eval.shots=" + shots_json(shots));
    if (!augment.empty()) extra.push_back(std::string("inner.augment=") + (augment == "on" ? "true" : "false"));
    if (!psi.empty()) extra.push_back("diagnose.psi_convention=\"" + psi + "\"");
    const RunConfig cfg = resolve(common, extra);
    const RunPaths paths = resolve_run(cfg, common.run_dir);
    prepare_run(cfg, paths);
    if (synth->parsed()) cmd_synth(cfg, paths, std::cout);
    if (pretrain->parsed()) cmd_pretrain(cfg, paths, mode, std::cout);
    if (metatrain->parsed()) cmd_metatrain(cfg, paths, std::cout);
    if (eval->parsed()) cmd_eval(cfg, paths, std::cout);
    if (diagnose->parsed()) cmd_diagnose(cfg, paths, std::cout);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const MissingArtifact& e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
