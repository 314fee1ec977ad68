// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#include "sbmtl/diagnostics/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "sbmtl/common/errors.hpp"
#include "sbmtl/numerics/ops.hpp"
#include "sbmtl/numerics/optimizer.hpp"

namespace sbmtl::diagnostics {

namespace nx = sbmtl::numerics;

ConfusionMatrix::ConfusionMatrix(std::size_t k, std::vector<double> values, bool normalized)
    : k_(k), values_(std::move(values)), normalized_(normalized) {
  if (values_.size() != k_ * k_) throw InputError("confusion matrix: expected k*k entries");
  for (double v : values_)
    if (!(v >= 0.0)) throw InputError("confusion matrix: entries must be non-negative");
}

ConfusionMatrix ConfusionMatrix::from_counts(const std::vector<std::vector<std::size_t>>& counts) {
  const std::size_t k = counts.size();
  std::vector<double> v(k * k, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (counts[i].size() != k) throw InputError("confusion matrix: counts must be square");
    for (std::size_t j = 0; j < k; ++j) {
      v[i * k + j] = static_cast<double>(counts[i][j]);
      total += v[i * k + j];
    }
  }
  if (total > 0)
    for (double& x : v) x /= total;
  return ConfusionMatrix(k, std::move(v), true);
}

ConfusionMatrix ConfusionMatrix::transposed() const {
  std::vector<double> v(values_.size());
  for (std::size_t i = 0; i < k_; ++i)
    for (std::size_t j = 0; j < k_; ++j) v[j * k_ + i] = values_[i * k_ + j];
  return ConfusionMatrix(k_, std::move(v), normalized_);
}

ConfusionMatrix ConfusionMatrix::zero_diagonal() const {
  std::vector<double> v = values_;
  for (std::size_t i = 0; i < k_; ++i) v[i * k_ + i] = 0.0;
  return ConfusionMatrix(k_, std::move(v), false);
}

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels, std::size_t k) {
  if (predictions.size() != labels.size()) {
    throw InputError("confusion: " + std::to_string(predictions.size()) + " predictions for " +
                     std::to_string(labels.size()) + " labels");
  }
  if (k == 0) throw InputError("confusion: k must be positive");
  std::vector<std::vector<std::size_t>> counts(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int t = labels[i], p = predictions[i];
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= k || static_cast<std::size_t>(p) >= k) {
      throw InputError("confusion: class index outside [0, " + std::to_string(k) + ")");
    }
    ++counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }
  return ConfusionMatrix::from_counts(counts);
}

double frobenius(const ConfusionMatrix& c) {
  double ss = 0.0;
  for (double v : c.values()) ss += v * v;
  return std::sqrt(ss);
}

double psi0(const ConfusionMatrix& c) {
  const std::size_t k = c.size();
  double ss = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const double d = c.at(i, j) - c.at(j, i);
      ss += d * d;
    }
  return std::sqrt(ss);
}

PsiConvention parse_psi_convention(const std::string& name) {
  if (name == "verbatim") return PsiConvention::kVerbatim;
  if (name == "normalized") return PsiConvention::kNormalized;
  throw InputError("unknown psi convention '" + name + "' (expected verbatim or normalized)");
}

std::string to_string(PsiConvention c) { return c == PsiConvention::kVerbatim ? "verbatim" : "normalized"; }

double psi1(const ConfusionMatrix& c, PsiConvention convention) {
  const double off = frobenius(c.zero_diagonal());
  const double denom = (convention == PsiConvention::kVerbatim ? 2.0 : std::sqrt(2.0)) * off;
  return denom > 0.0 ? psi0(c) / denom : 0.0;
}

int linear_mtl_predict(std::span<const double> w1, std::span<const double> w2) {
  if (w1.size() != w2.size() || w1.empty()) throw InputError("linear MTL: score vectors must be equal and non-empty");
  auto softmax = [](std::span<const double> w) {
    const double mx = *std::max_element(w.begin(), w.end());
    std::vector<double> e(w.size());
    double z = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) z += e[i] = std::exp(w[i] - mx);
    for (double& v : e) v /= z;
    return e;
  };
  const std::vector<double> a = softmax(w1), b = softmax(w2);
  int best = 0;
  for (std::size_t i = 1; i < a.size(); ++i)
    if (a[i] + b[i] > a[static_cast<std::size_t>(best)] + b[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

std::vector<int> linear_mtl_predict(const Tensor& w1, const Tensor& w2) {
  if (w1.shape() != w2.shape()) throw DimensionError("linear MTL: score matrices differ in shape");
  const std::size_t rows = w1.rows(), cols = w1.cols();
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    out[r] = linear_mtl_predict(w1.data().subspan(r * cols, cols), w2.data().subspan(r * cols, cols));
  }
  return out;
}

maml::EpisodePredictor paired_predictor(const maml::MetaModel& model, const maml::InnerLoopConfig& inner) {
  return [&model, inner](const maml::EpisodeTask& ep, std::uint64_t seed) {
    maml::EpisodeOutputs o = maml::evaluate_episode(model, ep, inner, seed);
    return std::vector<maml::MethodPrediction>{
        {"linear_mtl", linear_mtl_predict(o.scores.query_w1, o.scores.query_w2)},
        {"sbmtl", maml::argmax_rows(o.logits)}};
  };
}

std::vector<PsiSummary> summarize_psi(const std::vector<maml::EpisodeRecord>& records, PsiConvention convention) {
  std::vector<std::string> methods;
  std::vector<std::vector<double>> p0, p1;
  for (const auto& r : records) {
    auto it = std::find(methods.begin(), methods.end(), r.method);
    std::size_t m = static_cast<std::size_t>(it - methods.begin());
    if (it == methods.end()) {
      methods.push_back(r.method);
      p0.emplace_back();
      p1.emplace_back();
    }
    ConfusionMatrix c = ConfusionMatrix::from_counts(r.confusion);
    p0[m].push_back(100.0 * psi0(c));
    p1[m].push_back(100.0 * psi1(c, convention));
  }
  std::vector<PsiSummary> out;
  for (std::size_t m = 0; m < methods.size(); ++m) {
    out.push_back({methods[m], mean_ci(p0[m]), mean_ci(p1[m]), p0[m].size()});
  }
  return out;
}

AsymmetrySuiteResult asymmetry_trial_suite(const episodes::Dataset& target, const AsymmetrySuiteConfig& cfg,
                                           const maml::EpisodePredictor& predict) {
  if (cfg.trials == 0) throw InputError("asymmetry suite: trials must be positive");
  maml::MetaTestConfig mt;
  mt.way = cfg.way;
  mt.shot = cfg.shot;
  mt.query = cfg.query;
  mt.episodes = cfg.trials;
  mt.seed = cfg.seed;
  mt.jobs = cfg.jobs;
  AsymmetrySuiteResult out;
  out.episodes = maml::meta_test(target, mt, predict);
  out.psi = summarize_psi(out.episodes.records, cfg.convention);
  return out;
}

void ScoreScenarioConfig::validate() const {
  if (support_per_class == 0 || query_per_class == 0) throw InputError("score scenario: item counts must be positive");
  if (a_jitter < 0 || b_jitter < 0 || common_noise < 0 || stream_noise < 0) {
    throw InputError("score scenario: noise levels must be non-negative");
  }
}

ScoreEpisode score_scenario(const ScoreScenarioConfig& cfg, Rng& rng) {
  cfg.validate();
  auto draw = [&](std::size_t per_class, Tensor& w1, Tensor& w2, std::vector<int>& y) {
    std::vector<double> a, b;
    for (int cls = 0; cls < 2; ++cls) {
      for (std::size_t i = 0; i < per_class; ++i) {
        const double common = cfg.common_noise * normal(rng);
        const double gap = cls == 0 ? cfg.a_jitter * normal(rng) : cfg.b_margin + cfg.b_jitter * normal(rng);
        const double w0 = common, w1v = common + gap;
        a.push_back(w0);
        a.push_back(w1v);
        b.push_back(w0 + cfg.stream_noise * normal(rng));
        b.push_back(w1v + cfg.stream_noise * normal(rng));
        y.push_back(cls);
      }
    }
    w1 = Tensor::from({2 * per_class, 2}, std::move(a));
    w2 = Tensor::from({2 * per_class, 2}, std::move(b));
  };
  ScoreEpisode ep;
  draw(cfg.support_per_class, ep.support_w1, ep.support_w2, ep.support_y);
  draw(cfg.query_per_class, ep.query_w1, ep.query_w2, ep.query_y);
  return ep;
}

std::vector<double> train_score_gnn(gnn::MetricLayer& metric, gnn::GnnParams& params, const ScoreScenarioConfig& cfg,
                                    const ScoreGnnTraining& training) {
  if (metric.n_way() != 2 || params.config.n_way != 2) throw InputError("score scenario: the model must be 2-way");
  std::vector<Tensor> ps = metric.parameters();
  for (const Tensor& t : params.parameters()) ps.push_back(t);
  nx::OptimizerOptions o;
  o.learning_rate = training.learning_rate;
  nx::Optimizer opt(ps, o);
  std::vector<double> losses;
  for (std::size_t s = 0; s < training.steps; ++s) {
    Rng rng(derive_seed(training.seed, 0x5c0, s));
    ScoreEpisode ep = score_scenario(cfg, rng);
    opt.zero_grad();
    Tensor logits =
        gnn::gnn_classify(ep.support_w1, ep.support_w2, ep.support_y, ep.query_w1, ep.query_w2, metric, params);
    Tensor loss = nx::softmax_cross_entropy(logits, ep.query_y);
    nx::backward(loss);
    opt.step();
    losses.push_back(loss.item());
  }
  return losses;
}

ScenarioErrors scenario_errors(const gnn::MetricLayer& metric, const gnn::GnnParams& params,
                               const ScoreScenarioConfig& cfg, std::size_t episodes, std::uint64_t seed) {
  nx::NoGradGuard no_grad;
  std::size_t wrong[2][2] = {{0, 0}, {0, 0}}, seen[2] = {0, 0};
  for (std::size_t e = 0; e < episodes; ++e) {
    Rng rng(derive_seed(seed, 0x5c1, e));
    ScoreEpisode ep = score_scenario(cfg, rng);
    const std::vector<int> g = maml::argmax_rows(
        gnn::gnn_classify(ep.support_w1, ep.support_w2, ep.support_y, ep.query_w1, ep.query_w2, metric, params));
    const std::vector<int> l = linear_mtl_predict(ep.query_w1, ep.query_w2);
    for (std::size_t q = 0; q < ep.query_y.size(); ++q) {
      const int y = ep.query_y[q];
      wrong[0][y] += g[q] != y;
      wrong[1][y] += l[q] != y;
      ++seen[y];
    }
  }
  auto rate = [&](std::size_t w, int y) {
    return seen[y] ? static_cast<double>(wrong[w][y]) / static_cast<double>(seen[y]) : 0.0;
  };
  return {rate(0, 0), rate(0, 1), rate(1, 0), rate(1, 1), seen[0]};
}

std::vector<AccuracyRow> accuracy_rows(const maml::MetaTestResult& result, std::size_t shot, std::size_t query) {
  std::vector<AccuracyRow> out;
  for (const auto& s : result.summary) out.push_back({s.method, shot, query, s.accuracy});
  return out;
}

std::string config_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

nlohmann::ordered_json mean_ci_json(const MeanCi& m) {
  nlohmann::ordered_json j;
  j["mean"] = m.mean;
  j["ci95"] = m.ci95 ? nlohmann::ordered_json(*m.ci95) : nlohmann::ordered_json(nullptr);
  j["n"] = m.n;
  return j;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string with_ci(const MeanCi& m, double scale, const char* unit) {
  std::string s = fmt("%.2f", m.mean * scale) + unit;
  s += m.ci95 ? " +/- " + fmt("%.2f", *m.ci95 * scale) + unit : " (no CI)";
  return s;
}

std::string table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows) {
    if (width.size() < r.size()) width.resize(r.size(), 0);
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  std::ostringstream os;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      os << rows[i][c];
      if (c + 1 < rows[i].size()) os << std::string(width[c] - rows[i][c].size() + 2, ' ');
    }
    os << '\n';
    if (i == 0) {
      std::size_t total = 0;
      for (std::size_t c = 0; c < width.size(); ++c) total += width[c] + (c + 1 < width.size() ? 2 : 0);
      os << std::string(total, '-') << '\n';
    }
  }
  return os.str();
}

}  // namespace

std::string report_json(const BenchmarkReport& report) {
  nlohmann::ordered_json j;
  j["title"] = report.title;
  j["config_hash"] = report.config_hash;
  nlohmann::ordered_json seeds = nlohmann::ordered_json::object();
  for (const auto& [name, value] : report.seeds) seeds[name] = value;
  j["seeds"] = seeds;
  j["accuracy"] = nlohmann::ordered_json::array();
  for (const auto& r : report.accuracy) {
    nlohmann::ordered_json row;
    row["method"] = r.method;
    row["shot"] = r.shot;
    row["query"] = r.query;
    row["accuracy"] = mean_ci_json(r.accuracy);
    j["accuracy"].push_back(row);
  }
  j["psi_convention"] = to_string(report.convention);
  j["psi_x100"] = nlohmann::ordered_json::array();
  for (const auto& p : report.psi) {
    nlohmann::ordered_json row;
    row["method"] = p.method;
    row["trials"] = p.trials;
    row["psi0"] = mean_ci_json(p.psi0);
    row["psi1"] = mean_ci_json(p.psi1);
    j["psi_x100"].push_back(row);
  }
  return j.dump(2) + "\n";
}

std::string report_table(const BenchmarkReport& report) {
  std::ostringstream os;
  os << report.title << "\nconfig " << report.config_hash << "\n";
  for (const auto& [name, value] : report.seeds) os << "seed " << name << " = " << value << "\n";
  if (!report.accuracy.empty()) {
    std::vector<std::vector<std::string>> rows{{"method", "shot", "query", "accuracy", "episodes"}};
    for (const auto& r : report.accuracy) {
      rows.push_back({r.method, std::to_string(r.shot), std::to_string(r.query), with_ci(r.accuracy, 100.0, "%"), std::to_string(r.accuracy.n)});
    }
    os << "\n" << table(rows);
  }
  if (!report.psi.empty()) {
    std::vector<std::vector<std::string>> rows{{"method", "psi0 x100", "psi1 x100 (" + to_string(report.convention) + ")",
                                                "trials"}};
    for (const auto& p : report.psi) {
      rows.push_back({p.method, with_ci(p.psi0, 1.0, ""), with_ci(p.psi1, 1.0, ""), std::to_string(p.trials)});
    }
    os << "\n" << table(rows);
  }
  return os.str();
}

void emit_report(const BenchmarkReport& report, const std::filesystem::path& dir, const std::string& stem) {
  if (report.accuracy.empty() && report.psi.empty()) throw InputError("report: no method rows to write");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create report directory " + dir.string() + ": " + ec.message());
  auto write = [](const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open report for writing: " + path.string());
    os << text;
    if (!os) throw IoError("failed writing report: " + path.string());
  };
  write(dir / (stem + ".json"), report_json(report));
  write(dir / (stem + ".txt"), report_table(report));
}

}  // namespace sbmtl::diagnostics
