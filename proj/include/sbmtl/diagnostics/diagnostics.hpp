// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sbmtl/common/rng.hpp"
#include "sbmtl/common/stats.hpp"
#include "sbmtl/gnn/gnn.hpp"
#include "sbmtl/maml/maml.hpp"

namespace sbmtl::diagnostics {

using numerics::Tensor;

// K x K matrix indexed [true][predicted].
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  ConfusionMatrix(std::size_t k, std::vector<double> values, bool normalized);

  // Counts scaled so that all entries sum to one. An all-zero count matrix
  // stays zero.
  static ConfusionMatrix from_counts(const std::vector<std::vector<std::size_t>>& counts);

  std::size_t size() const { return k_; }
  bool normalized() const { return normalized_; }
  double at(std::size_t i, std::size_t j) const { return values_[i * k_ + j]; }
  std::span<const double> values() const { return values_; }

  ConfusionMatrix transposed() const;
  // Same matrix with the diagonal set to zero.
  ConfusionMatrix zero_diagonal() const;

 private:
  std::size_t k_ = 0;
  std::vector<double> values_;
  bool normalized_ = false;
};

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels, std::size_t k);

double frobenius(const ConfusionMatrix& c);

// |C - C^T|_F
double psi0(const ConfusionMatrix& c);

enum class PsiConvention {
  kVerbatim,    // psi0 / (2 |C~|_F), at most 1/sqrt(2)
  kNormalized,  // psi0 / (sqrt(2) |C~|_F), at most 1
};
PsiConvention parse_psi_convention(const std::string& name);
std::string to_string(PsiConvention c);

// 0 when C has no off-diagonal mass.
double psi1(const ConfusionMatrix& c, PsiConvention convention = PsiConvention::kVerbatim);

// argmax(softmax(w1) + softmax(w2)); exact ties go to the lowest index.
int linear_mtl_predict(std::span<const double> w1, std::span<const double> w2);
// Row-wise over score matrices [B x N_w].
std::vector<int> linear_mtl_predict(const Tensor& w1, const Tensor& w2);

// SB-MTL and Linear MTL predictions from one set of adapted clones, so the
// two methods see the same fine-tuning on every episode. Method names
// "linear_mtl" and "sbmtl".
maml::EpisodePredictor paired_predictor(const maml::MetaModel& model, const maml::InnerLoopConfig& inner);

struct PsiSummary {
  std::string method;
  MeanCi psi0;  // x100
  MeanCi psi1;  // x100
  std::size_t trials = 0;
};

// Mean over records of the per-record psi values, scaled by 100, one entry
// per method in the order methods first appear.
std::vector<PsiSummary> summarize_psi(const std::vector<maml::EpisodeRecord>& records, PsiConvention convention);

struct AsymmetrySuiteConfig {
  std::size_t trials = 100;
  std::size_t way = 5;
  std::size_t shot = 5;
  std::size_t query = 15;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  PsiConvention convention = PsiConvention::kVerbatim;
};

struct AsymmetrySuiteResult {
  maml::MetaTestResult episodes;
  std::vector<PsiSummary> psi;
};

// One single-episode meta-test per trial; every method sees the same trial
// episodes.
AsymmetrySuiteResult asymmetry_trial_suite(const episodes::Dataset& target, const AsymmetrySuiteConfig& cfg,
                                           const maml::EpisodePredictor& predict);

// ---- two-class asymmetric score scenario ----

// Class A items score w0 ~ w1 (argmax is a coin flip); class B items score
// w1 well above w0. Both score streams share a common-mode offset per item,
// so only score differences carry the class.
struct ScoreScenarioConfig {
  std::size_t support_per_class = 5;
  std::size_t query_per_class = 10;
  double a_jitter = 0.3;          // spread of w1 - w0 for class A
  double b_margin = 3.0;          // mean of w1 - w0 for class B
  double b_jitter = 0.3;
  double common_noise = 1.0;      // spread of the shared offset
  double stream_noise = 0.1;      // independent noise between w1 and w2

  void validate() const;
};

struct ScoreEpisode {
  Tensor support_w1, support_w2;  // [2*S x 2]
  std::vector<int> support_y;
  Tensor query_w1, query_w2;      // [2*Q x 2]
  std::vector<int> query_y;
};

// Label 0 is class A, label 1 is class B; items are class-major.
ScoreEpisode score_scenario(const ScoreScenarioConfig& cfg, Rng& rng);

struct ScoreGnnTraining {
  std::size_t steps = 400;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;
};

// Trains the metric layer and graph network on freshly drawn scenario
// episodes with Adam. Returns the per-step query loss.
std::vector<double> train_score_gnn(gnn::MetricLayer& metric, gnn::GnnParams& params, const ScoreScenarioConfig& cfg,
                                    const ScoreGnnTraining& training);

struct ScenarioErrors {
  double gnn_class_a = 0.0;
  double gnn_class_b = 0.0;
  double linear_class_a = 0.0;
  double linear_class_b = 0.0;
  std::size_t queries_per_class = 0;
};

ScenarioErrors scenario_errors(const gnn::MetricLayer& metric, const gnn::GnnParams& params,
                               const ScoreScenarioConfig& cfg, std::size_t episodes, std::uint64_t seed);

// ---- reports ----

struct AccuracyRow {
  std::string method;
  std::size_t shot = 0;
  std::size_t query = 0;  // per class
  MeanCi accuracy;        // fraction in [0, 1]
};

struct BenchmarkReport {
  std::string title;
  std::string config_hash;
  std::vector<std::pair<std::string, std::uint64_t>> seeds;
  std::vector<AccuracyRow> accuracy;
  std::vector<PsiSummary> psi;
  PsiConvention convention = PsiConvention::kVerbatim;
};

// One row per method of a meta-test result.
std::vector<AccuracyRow> accuracy_rows(const maml::MetaTestResult& result, std::size_t shot, std::size_t query);

// 16 hex digits of FNV-1a over the text.
std::string config_hash(const std::string& text);

std::string report_json(const BenchmarkReport& report);
std::string report_table(const BenchmarkReport& report);

// Writes <dir>/<stem>.json and <dir>/<stem>.txt. Throws InputError when the
// report has no rows and IoError naming the path on write failure.
void emit_report(const BenchmarkReport& report, const std::filesystem::path& dir, const std::string& stem);

}  // namespace sbmtl::diagnostics
