// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "sbmtl/common/errors.hpp"
#include "sbmtl/diagnostics/diagnostics.hpp"
#include "sbmtl/episodes/synth.hpp"

using namespace sbmtl;
using namespace sbmtl::diagnostics;

namespace {

// Normalized random matrix with a random fraction of exact zeros.
ConfusionMatrix random_confusion(std::size_t k, Rng& rng) {
  std::vector<double> v(k * k);
  double total = 0;
  for (double& x : v) {
    x = uniform01(rng) < 0.3 ? 0.0 : uniform01(rng);
    total += x;
  }
  if (total == 0) v[0] = total = 1;
  for (double& x : v) x /= total;
  return ConfusionMatrix(k, v, true);
}

// Independent loops over the raw entries.
double brute_psi0(const ConfusionMatrix& c) {
  double s = 0;
  for (std::size_t i = 0; i < c.size(); ++i)
    for (std::size_t j = 0; j < c.size(); ++j) s += std::pow(c.at(i, j) - c.at(j, i), 2);
  return std::sqrt(s);
}

double brute_psi1(const ConfusionMatrix& c) {
  double s = 0;
  for (std::size_t i = 0; i < c.size(); ++i)
    for (std::size_t j = 0; j < c.size(); ++j)
      if (i != j) s += c.at(i, j) * c.at(i, j);
  const double d = 2 * std::sqrt(s);
  return d > 0 ? brute_psi0(c) / d : 0.0;
}

ConfusionMatrix permute(const ConfusionMatrix& c, const std::vector<std::size_t>& p) {
  const std::size_t k = c.size();
  std::vector<double> v(k * k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) v[p[i] * k + p[j]] = c.at(i, j);
  return ConfusionMatrix(k, v, true);
}

}  // namespace

TEST_CASE("confusion counts and normalization") {
  std::vector<int> pred{1, 1}, truth{0, 1};
  ConfusionMatrix c = confusion(pred, truth, 2);
  CHECK(c.at(0, 0) == 0.0);
  CHECK(c.at(0, 1) == 0.5);
  CHECK(c.at(1, 0) == 0.0);
  CHECK(c.at(1, 1) == 0.5);

  std::vector<int> all{0, 1, 2, 2, 1};
  ConfusionMatrix diag = confusion(all, all, 3);
  CHECK(frobenius(diag.zero_diagonal()) == 0.0);
  CHECK(diag.at(2, 2) == doctest::Approx(0.4));

  Rng rng(1);
  std::vector<int> p, t;
  for (int i = 0; i < 97; ++i) {
    t.push_back(static_cast<int>(uniform_index(rng, 4)));
    p.push_back(static_cast<int>(uniform_index(rng, 4)));
  }
  ConfusionMatrix r = confusion(p, t, 4);
  double total = 0;
  for (double v : r.values()) total += v;
  CHECK(std::abs(total - 1.0) < 1e-12);
  for (std::size_t i = 0; i < 4; ++i) {
    double row = 0;
    for (std::size_t j = 0; j < 4; ++j) row += r.at(i, j);
    CHECK(row == doctest::Approx(static_cast<double>(std::count(t.begin(), t.end(), static_cast<int>(i))) / 97.0));
  }
  CHECK_THROWS_AS(confusion(std::vector<int>{0}, std::vector<int>{0, 1}, 2), InputError);
  CHECK_THROWS_AS(confusion(std::vector<int>{2}, std::vector<int>{0}, 2), InputError);
}

TEST_CASE("psi worked example") {
  ConfusionMatrix c(2, {0.4, 0.1, 0.0, 0.5}, true);
  CHECK(psi0(c) == doctest::Approx(0.141421356).epsilon(1e-8));
  CHECK(psi1(c) == doctest::Approx(0.707106781).epsilon(1e-8));
  CHECK(psi1(c, PsiConvention::kNormalized) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(psi0(c.transposed()) == psi0(c));
  ConfusionMatrix sym(2, {0.4, 0.1, 0.1, 0.4}, true);
  CHECK(psi0(sym) == 0.0);
  CHECK(psi1(sym) == 0.0);
  ConfusionMatrix d(2, {0.5, 0.0, 0.0, 0.5}, true);
  CHECK(psi1(d) == 0.0);
  CHECK(parse_psi_convention("normalized") == PsiConvention::kNormalized);
  CHECK_THROWS_AS(parse_psi_convention("unit"), InputError);
}

TEST_CASE("psi matches brute-force loops and is permutation invariant") {
  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    ConfusionMatrix c = random_confusion(5, rng);
    CHECK(std::abs(psi0(c) - brute_psi0(c)) < 1e-12);
    CHECK(std::abs(psi1(c) - brute_psi1(c)) < 1e-12);
    CHECK(psi0(c) >= 0.0);
    CHECK(psi1(c) <= 1.0 / std::sqrt(2.0) + 1e-12);
    std::vector<std::size_t> p{0, 1, 2, 3, 4};
    shuffle(p, rng);
    ConfusionMatrix q = permute(c, p);
    CHECK(std::abs(psi0(q) - psi0(c)) < 1e-12);
    CHECK(std::abs(psi1(q) - psi1(c)) < 1e-12);
  }
}

TEST_CASE("psi1 reaches 1/sqrt(2) when every error is one-directional") {
  Rng rng(3);
  double best = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> v(25, 0.0);
    for (std::size_t i = 0; i < 5; ++i) v[i * 5 + i] = uniform01(rng);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = i + 1; j < 5; ++j) {
        const double e = uniform01(rng);
        if (uniform01(rng) < 0.5) v[i * 5 + j] = e; else v[j * 5 + i] = e;
      }
    double total = 0;
    for (double x : v) total += x;
    for (double& x : v) x /= total;
    ConfusionMatrix c(5, v, true);
    CHECK(std::abs(psi1(c) - 1.0 / std::sqrt(2.0)) < 1e-9);
    CHECK(std::abs(psi1(c, PsiConvention::kNormalized) - 1.0) < 1e-9);
    best = std::max(best, psi1(c));
  }
  CHECK(std::abs(best - 1.0 / std::sqrt(2.0)) < 1e-9);
}

TEST_CASE("psi is zero exactly for symmetric matrices") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    ConfusionMatrix c = random_confusion(4, rng);
    std::vector<double> v(16);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) v[i * 4 + j] = 0.5 * (c.at(i, j) + c.at(j, i));
    ConfusionMatrix s(4, v, true);
    CHECK(psi0(s) < 1e-12);
    CHECK(psi1(s) < 1e-12);
    CHECK((psi0(c) < 1e-12) == (brute_psi0(c) < 1e-12));
  }
}

TEST_CASE("linear MTL prediction") {
  std::vector<double> a{0.1, 2.0, -1.0}, b = a;
  CHECK(linear_mtl_predict(a, b) == 1);
  std::vector<double> strong{5.0, 0.0, 0.0}, mild{0.0, 0.5, 0.0};
  CHECK(linear_mtl_predict(strong, mild) == 0);
  std::vector<double> tie{1.0, 1.0, 0.0};
  CHECK(linear_mtl_predict(tie, tie) == 0);
  CHECK_THROWS_AS(linear_mtl_predict(tie, std::vector<double>{1.0}), InputError);

  Rng rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> w1(5), w2(5);
    for (double& x : w1) x = uniform(rng, -4, 4);
    for (double& x : w2) x = uniform(rng, -4, 4);
    double z1 = 0, z2 = 0;
    for (double x : w1) z1 += std::exp(x);
    for (double x : w2) z2 += std::exp(x);
    int best = 0;
    double best_v = -1;
    for (int i = 0; i < 5; ++i) {
      const double v = std::exp(w1[i]) / z1 + std::exp(w2[i]) / z2;
      if (v > best_v) best_v = v, best = i;
    }
    CHECK(linear_mtl_predict(w1, w2) == best);
    std::vector<double> shifted = w1;
    for (double& x : shifted) x += 7.5;
    CHECK(linear_mtl_predict(shifted, w2) == best);
  }
  Tensor m1 = Tensor::from({2, 2}, {0, 1, 3, 0}), m2 = Tensor::from({2, 2}, {0, 1, 3, 0});
  CHECK(linear_mtl_predict(m1, m2) == std::vector<int>{1, 0});
}

TEST_CASE("asymmetry suite over paired trials") {
  episodes::DomainShiftConfig dc;
  dc.item_shape = {1, 4, 4};
  dc.latent_dim = 6;
  dc.source_classes = 6;
  dc.target_classes = 5;
  dc.items_per_class = 20;
  Rng rng(6);
  auto dom = episodes::synth_domains(dc, rng);

  AsymmetrySuiteConfig cfg;
  cfg.trials = 20;
  cfg.way = 3;
  cfg.shot = 2;
  cfg.query = 4;
  // The "biased" method always answers class 0, so every error goes one way.
  maml::EpisodePredictor predict = [](const maml::EpisodeTask& ep, std::uint64_t) {
    return std::vector<maml::MethodPrediction>{{"perfect", ep.query_y},
                                               {"biased", std::vector<int>(ep.query_y.size(), 0)}};
  };
  AsymmetrySuiteResult r = asymmetry_trial_suite(dom.target, cfg, predict);
  REQUIRE(r.psi.size() == 2);
  CHECK(r.psi[0].method == "perfect");
  CHECK(r.psi[0].psi0.mean == 0.0);
  CHECK(r.psi[0].psi1.mean == 0.0);
  CHECK(r.psi[1].psi1.mean == doctest::Approx(100.0 / std::sqrt(2.0)));
  CHECK(r.psi[1].trials == 20);
  CHECK(r.psi[1].psi0.ci95.has_value());

  cfg.trials = 1;
  AsymmetrySuiteResult one = asymmetry_trial_suite(dom.target, cfg, predict);
  CHECK_FALSE(one.psi[1].psi0.ci95.has_value());
  CHECK(report_table({"t", "h", {}, {}, one.psi, PsiConvention::kVerbatim}).find("(no CI)") != std::string::npos);
}

TEST_CASE("score-based graph network corrects the one-sided confusion") {
  ScoreScenarioConfig sc;
  gnn::GnnConfig g;
  g.n_way = 2;
  g.input_hidden = 2 * 4;
  g.layer_hidden = 8;
  g.edge_hidden = 8;
  auto metric = gnn::MetricLayer::init(2, 4, 1);
  auto params = gnn::GnnParams::init(g, 2);
  ScoreGnnTraining tr;
  tr.steps = 150;
  auto losses = train_score_gnn(metric, params, sc, tr);
  CHECK(losses.back() < losses.front());
  ScenarioErrors e = scenario_errors(metric, params, sc, 50, 9);
  CHECK(e.gnn_class_a < 0.05);
  CHECK(e.linear_class_a == doctest::Approx(0.5).epsilon(0.2));
  CHECK(e.linear_class_b < 0.01);

  Rng rng(1);
  ScoreEpisode ep = score_scenario(sc, rng);
  CHECK(ep.support_w1.shape() == numerics::Shape{10, 2});
  CHECK(ep.query_y.size() == 20);
}

TEST_CASE("reports are deterministic and aggregate their inputs") {
  maml::MetaTestResult res;
  for (std::size_t e = 0; e < 4; ++e) {
    maml::EpisodeRecord r;
    r.episode = e;
    r.method = "sbmtl";
    r.accuracy = 0.5 + 0.1 * static_cast<double>(e);
    r.confusion = {{2, 1}, {0, 3}};
    res.records.push_back(r);
  }
  std::vector<double> acc{0.5, 0.6, 0.7, 0.8};
  res.summary.push_back({"sbmtl", mean_ci(acc)});
  BenchmarkReport rep;
  rep.title = "eval";
  rep.config_hash = config_hash("{}");
  rep.seeds = {{"run", 7}};
  rep.accuracy = accuracy_rows(res, 5, 15);
  rep.psi = summarize_psi(res.records, PsiConvention::kVerbatim);
  CHECK(rep.accuracy[0].accuracy.mean == doctest::Approx(0.65));
  CHECK(rep.config_hash.size() == 16);
  CHECK(config_hash("a") != config_hash("b"));

  const auto dir = std::filesystem::temp_directory_path() / "sbmtl_report_test";
  std::filesystem::remove_all(dir);
  emit_report(rep, dir, "r");
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
  };
  const std::string j1 = slurp(dir / "r.json"), t1 = slurp(dir / "r.txt");
  emit_report(rep, dir, "r");
  CHECK(slurp(dir / "r.json") == j1);
  CHECK(slurp(dir / "r.txt") == t1);
  CHECK(j1.find("\"config_hash\"") != std::string::npos);
  CHECK(t1.find("65.00%") != std::string::npos);
  std::filesystem::remove_all(dir);

  BenchmarkReport empty;
  CHECK_THROWS_AS(emit_report(empty, dir, "r"), InputError);
  std::filesystem::path blocked = dir.string() + "_file";
  { std::ofstream(blocked) << "x"; }
  CHECK_THROWS_AS(emit_report(rep, blocked / "sub", "r"), IoError);
  std::filesystem::remove(blocked);
}
