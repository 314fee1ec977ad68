// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#include "commands.hpp"

#include <cstdlib>
#include <fstream>
#include <ostream>

#include "sbmtl/numerics/checkpoint.hpp"

namespace sbmtl::cli {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << text;
  if (!os) throw IoError("failed writing: " + path.string());
}

void require(const std::filesystem::path& path, const std::string& producer) {
  if (!std::filesystem::exists(path)) {
    throw MissingArtifact("missing " + path.string() + " (run `sbmtl " + producer + "` first)");
  }
}

episodes::Dataset load_data(const std::filesystem::path& path) {
  require(path, "synth");
  return episodes::load_dataset(path);
}

std::uint64_t seed_for(const RunConfig& cfg, std::uint64_t tag) { return derive_seed(cfg.seed, tag); }

constexpr std::uint64_t kSynthTag = 0x5e7;
constexpr std::uint64_t kPretrainTag = 0x9e1;
constexpr std::uint64_t kAssembleTag = 0x6d1;
constexpr std::uint64_t kEvalTag = 0xe7a1;
constexpr std::uint64_t kPsiTag = 0xd1a;

encoder::EncoderState load_encoder(const RunConfig& cfg, const RunPaths& paths, maml::PretrainMode mode,
                                   std::size_t outputs) {
  const auto path = paths.encoder(mode);
  require(path, "pretrain --mode " + maml::to_string(mode));
  encoder::EncoderState s(cfg.model.encoder, outputs, 0);
  numerics::restore_checkpoint(path, s.named_parameters(""));
  return s;
}

maml::MetaModel load_model(const RunConfig& cfg, const RunPaths& paths) {
  require(paths.metamodel(), "metatrain");
  maml::MetaModel m = maml::blank_model(cfg.model, 0);
  numerics::restore_checkpoint(paths.metamodel(), m.named_parameters());
  return m;
}

Json manifest_entry(const episodes::Dataset& ds, const std::string& file) {
  Json j;
  j["file"] = file;
  j["domain_id"] = ds.domain_id;
  j["shift_magnitude"] = ds.shift_magnitude;
  j["item_shape"] = ds.item_shape;
  j["items"] = ds.size();
  j["classes"] = ds.classes;
  return j;
}

std::string records_jsonl(const std::vector<maml::EpisodeRecord>& records) {
  std::string out;
  for (const auto& r : records) out += maml::to_json_line(r) + "\n";
  return out;
}

// Inner-loop settings for target episodes.
maml::InnerLoopConfig test_inner(const RunConfig& cfg) {
  maml::InnerLoopConfig in = cfg.inner;
  in.reset_heads = cfg.eval.reset_heads;
  return in;
}

maml::EpisodePredictor oracle_predictor() {
  return [](const maml::EpisodeTask& ep, std::uint64_t) {
    return std::vector<maml::MethodPrediction>{{"oracle", ep.query_y}};
  };
}

diagnostics::BenchmarkReport base_report(const RunConfig& cfg, const std::string& title) {
  diagnostics::BenchmarkReport r;
  r.title = title;
  r.config_hash = diagnostics::config_hash(cfg.resolved.dump());
  r.seeds = {{"run", cfg.seed}};
  return r;
}

}  // namespace

RunPaths resolve_run(const RunConfig& cfg, const std::string& override_dir) {
  if (!override_dir.empty()) return {override_dir};
  const char* root = std::getenv("SBMTL_OUTPUT_ROOT");
  return {std::filesystem::path(root && *root ? root : "runs") / cfg.name};
}

void prepare_run(const RunConfig& cfg, const RunPaths& paths) {
  for (const auto& dir : {paths.root, paths.data(), paths.checkpoints(), paths.logs(), paths.reports()}) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  }
  write_text(paths.resolved_config(), cfg.resolved.dump(2) + "\n");
}

void cmd_synth(const RunConfig& cfg, const RunPaths& paths, std::ostream& out) {
  Rng rng(seed_for(cfg, kSynthTag));
  episodes::DomainPair pair = episodes::synth_domains(cfg.domain, rng);
  episodes::save_dataset(paths.source(), pair.source);
  episodes::save_dataset(paths.target(), pair.target);
  Json m;
  m["seed"] = cfg.seed;
  m["source"] = manifest_entry(pair.source, "source.bin");
  m["target"] = manifest_entry(pair.target, "target.bin");
  write_text(paths.manifest(), m.dump(2) + "\n");
  out << "source: " << pair.source.classes.size() << " classes, " << pair.source.size() << " items\n"
      << "target: " << pair.target.classes.size() << " classes, " << pair.target.size()
      << " items, shift magnitude " << pair.target.shift_magnitude << "\n";
}

void cmd_pretrain(const RunConfig& cfg, const RunPaths& paths, const std::string& mode, std::ostream& out) {
  std::vector<maml::PretrainMode> modes;
  if (mode == "both") {
    modes = {maml::PretrainMode::kSupervised, maml::PretrainMode::kEpisodic};
  } else {
    try {
      modes = {maml::parse_pretrain_mode(mode)};
    } catch (const InputError& e) {
      throw ConfigError(e.what());
    }
  }
  const episodes::Dataset source = load_data(paths.source());
  for (maml::PretrainMode m : modes) {
    const maml::PretrainConfig& pc =
        m == maml::PretrainMode::kSupervised ? cfg.pretrain_supervised : cfg.pretrain_episodic;
    std::vector<maml::PretrainEpoch> log;
    const std::uint64_t seed = derive_seed(cfg.seed, kPretrainTag, m == maml::PretrainMode::kSupervised ? 0 : 1);
    encoder::EncoderState s = maml::pretrain(cfg.model.encoder, source, pc, seed, &log);
    numerics::save_checkpoint(paths.encoder(m), s.named_parameters(""));
    std::string lines;
    for (const auto& e : log) {
      Json j;
      j["epoch"] = e.epoch;
      j["loss"] = e.loss;
      j["accuracy"] = e.accuracy;
      lines += j.dump() + "\n";
    }
    write_text(paths.logs() / ("pretrain_" + maml::to_string(m) + ".jsonl"), lines);
    out << maml::to_string(m) << " pretraining: " << log.size() << " epochs";
    if (!log.empty()) out << ", final loss " << log.back().loss << ", accuracy " << log.back().accuracy;
    out << "\n";
  }
}

void cmd_metatrain(const RunConfig& cfg, const RunPaths& paths, std::ostream& out) {
  const episodes::Dataset source = load_data(paths.source());
  encoder::EncoderState sup =
      load_encoder(cfg, paths, maml::PretrainMode::kSupervised, source.classes.size());
  encoder::EncoderState epi = load_encoder(cfg, paths, maml::PretrainMode::kEpisodic, cfg.pretrain_episodic.way);
  maml::MetaModel model = maml::assemble_model(cfg.model, epi, sup, seed_for(cfg, kAssembleTag));

  maml::MetaTrainHooks hooks;
  hooks.on_checkpoint = [&](std::size_t done) {
    numerics::save_checkpoint(paths.checkpoints() / ("metamodel_ep" + std::to_string(done) + ".ckpt"),
                              model.named_parameters());
  };
  std::vector<maml::MetaTrainEntry> log = maml::meta_train(model, source, cfg.outer, cfg.inner, hooks);
  numerics::save_checkpoint(paths.metamodel(), model.named_parameters());
  std::string lines;
  bool intact = true;
  for (const auto& e : log) {
    lines += maml::to_json_line(e) + "\n";
    intact = intact && e.frozen_intact;
  }
  write_text(paths.logs() / "metatrain.jsonl", lines);
  out << "meta-training: " << log.size() << " episodes";
  if (!log.empty()) {
    const std::size_t tail = std::max<std::size_t>(1, log.size() / 10);
    double acc = 0;
    for (std::size_t i = log.size() - tail; i < log.size(); ++i) acc += log[i].accuracy;
    out << ", last " << tail << " query accuracy " << acc / static_cast<double>(tail);
  }
  out << (intact ? ", frozen blocks intact" : ", FROZEN BLOCKS CHANGED") << "\n";
}

void cmd_eval(const RunConfig& cfg, const RunPaths& paths, std::ostream& out) {
  const episodes::Dataset target = load_data(paths.target());
  const bool oracle = cfg.eval.predictor == "oracle";
  maml::MetaModel model;
  if (!oracle) model = load_model(cfg, paths);
  const maml::EpisodePredictor predict =
      oracle ? oracle_predictor() : diagnostics::paired_predictor(model, test_inner(cfg));

  diagnostics::BenchmarkReport report = base_report(cfg, "few-shot evaluation on the target domain");
  report.seeds.push_back({"eval", seed_for(cfg, kEvalTag)});
  for (std::size_t shot : cfg.eval.shots) {
    const std::size_t query = maml::fit_query_count(target, shot, cfg.eval.query);
    if (query == 0) {
      throw ConfigError("target classes are too small for " + std::to_string(shot) + "-shot episodes");
    }
    maml::MetaTestConfig mt;
    mt.way = cfg.eval.way;
    mt.shot = shot;
    mt.query = query;
    mt.episodes = cfg.eval.episodes;
    mt.seed = seed_for(cfg, kEvalTag);
    mt.jobs = cfg.jobs;
    maml::MetaTestResult res = maml::meta_test(target, mt, predict);
    write_text(paths.logs() / ("eval_shot" + std::to_string(shot) + ".jsonl"), records_jsonl(res.records));
    for (auto& row : diagnostics::accuracy_rows(res, shot, query)) report.accuracy.push_back(row);
  }
  diagnostics::emit_report(report, paths.reports(), "eval");
  out << diagnostics::report_table(report);
}

void cmd_diagnose(const RunConfig& cfg, const RunPaths& paths, std::ostream& out) {
  const episodes::Dataset target = load_data(paths.target());
  maml::MetaModel model = load_model(cfg, paths);
  const maml::EpisodePredictor predict = diagnostics::paired_predictor(model, test_inner(cfg));

  diagnostics::BenchmarkReport report = base_report(cfg, "Linear MTL versus SB-MTL on the target domain");
  report.convention = cfg.diagnose.convention;
  report.seeds.push_back({"psi", seed_for(cfg, kPsiTag)});

  diagnostics::AsymmetrySuiteConfig suite;
  suite.trials = cfg.diagnose.trials;
  suite.way = cfg.eval.way;
  suite.shot = cfg.diagnose.shot;
  suite.query = cfg.diagnose.query;
  suite.seed = seed_for(cfg, kPsiTag);
  suite.jobs = cfg.jobs;
  suite.convention = cfg.diagnose.convention;
  diagnostics::AsymmetrySuiteResult psi = diagnostics::asymmetry_trial_suite(target, suite, predict);
  report.psi = psi.psi;
  write_text(paths.logs() / "diagnose_psi.jsonl", records_jsonl(psi.episodes.records));

  if (cfg.diagnose.accuracy_episodes > 0) {
    report.seeds.push_back({"eval", seed_for(cfg, kEvalTag)});
    maml::MetaTestConfig mt;
    mt.way = cfg.eval.way;
    mt.shot = cfg.diagnose.shot;
    mt.query = cfg.diagnose.query;
    mt.episodes = cfg.diagnose.accuracy_episodes;
    mt.seed = seed_for(cfg, kEvalTag);
    mt.jobs = cfg.jobs;
    maml::MetaTestResult res = maml::meta_test(target, mt, predict);
    write_text(paths.logs() / "diagnose_accuracy.jsonl", records_jsonl(res.records));
    report.accuracy = diagnostics::accuracy_rows(res, mt.shot, mt.query);
  }
  diagnostics::emit_report(report, paths.reports(), "diagnose");
  out << diagnostics::report_table(report);
}

}  // namespace sbmtl::cli
