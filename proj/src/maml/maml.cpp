// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#include "sbmtl/maml/maml.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "sbmtl/common/errors.hpp"
#include "sbmtl/numerics/checkpoint.hpp"
#include "sbmtl/numerics/ops.hpp"

namespace sbmtl::maml {

namespace nx = sbmtl::numerics;

namespace {

std::vector<Tensor> head_parameters(const EncoderState& s) { return {s.head().weight, s.head().bias}; }

void zero_grads(const std::vector<Tensor>& ts) {
  for (Tensor t : ts) t.zero_grad();
}

double accuracy_of(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (truth.empty()) return 0.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) ok += pred[i] == truth[i];
  return static_cast<double>(ok) / static_cast<double>(truth.size());
}

// Rows of an episode as one pool: support, then query, then augmented copies.
struct EpisodePool {
  Tensor x;
  std::size_t support = 0;
  std::size_t query = 0;
  std::size_t stats_rows = 0;
  std::vector<std::size_t> finetune_rows;  // pool rows used as training items
  std::vector<int> finetune_labels;
};

EpisodePool build_pool(const EpisodeTask& ep, const InnerLoopConfig& cfg, Rng& rng) {
  EpisodePool pool;
  pool.support = ep.support_x.dim(0);
  pool.query = ep.query_x.dim(0);
  pool.stats_rows = cfg.transductive ? pool.support + pool.query : pool.support;
  std::vector<Tensor> parts{ep.support_x, ep.query_x};
  for (std::size_t i = 0; i < pool.support; ++i) {
    pool.finetune_rows.push_back(i);
    pool.finetune_labels.push_back(ep.support_y[i]);
  }
  if (cfg.augment && cfg.augmentation.extra_per_image > 0) {
    episodes::AugmentedSupport aug = augment_support(ep.support_x, ep.support_y, ep.item_shape, cfg.augmentation, rng);
    const std::size_t extra = aug.x.dim(0) - aug.original_count;
    parts.push_back(nx::slice_rows(aug.x, aug.original_count, aug.x.dim(0)));
    for (std::size_t i = 0; i < extra; ++i) {
      pool.finetune_rows.push_back(pool.support + pool.query + i);
      pool.finetune_labels.push_back(aug.y[aug.original_count + i]);
    }
  }
  pool.x = parts.size() == 2 && pool.query == 0 ? ep.support_x : nx::concat_rows(parts);
  return pool;
}

// Fine-tunes the trailing blocks and classifier of `state` on pool rows.
// Features of the frozen prefix are computed once without a graph.
void finetune_one(EncoderState& state, const EpisodePool& pool, const InnerLoopConfig& cfg, Rng& rng,
                  double* loss_before, double* loss_after, std::size_t* steps) {
  const std::size_t frozen = state.config().frozen_blocks();
  const std::size_t total = state.config().block_count();
  Tensor cache;
  {
    nx::NoGradGuard no_grad;
    cache = state.forward_blocks(pool.x, 0, frozen, pool.stats_rows);
  }
  std::vector<Tensor> params = encoder::split_params(state).tunable;
  nx::OptimizerOptions opts;
  opts.kind = cfg.optimizer;
  opts.learning_rate = cfg.learning_rate;
  nx::Optimizer opt(params, opts);

  const std::size_t n = pool.finetune_rows.size();
  const std::size_t b = std::min(cfg.batch_size, n);

  // Loss over a set of fine-tune positions; the stats rows always go first.
  auto batch_loss = [&](const std::vector<std::size_t>& positions) {
    std::vector<std::size_t> rows(pool.stats_rows);
    for (std::size_t i = 0; i < pool.stats_rows; ++i) rows[i] = i;
    std::vector<std::size_t> pick;
    std::vector<int> labels;
    for (std::size_t p : positions) {
      const std::size_t r = pool.finetune_rows[p];
      if (r < pool.stats_rows) {
        pick.push_back(r);
      } else {
        pick.push_back(rows.size());
        rows.push_back(r);
      }
      labels.push_back(pool.finetune_labels[p]);
    }
    Tensor h = nx::gather_rows(cache, rows);
    Tensor feats = state.forward_blocks(h, frozen, total, pool.stats_rows);
    Tensor scores = encoder::classify(state, nx::gather_rows(feats, pick));
    return nx::softmax_cross_entropy(scores, labels);
  };

  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  if (loss_before) {
    nx::NoGradGuard no_grad;
    *loss_before = batch_loss(all).item();
  }
  const std::size_t epochs = cfg.effective_epochs();
  std::vector<std::size_t> order = all;
  for (std::size_t e = 0; e < epochs; ++e) {
    shuffle(order, rng);
    for (std::size_t start = 0; start < n; start += b) {
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + b)));
      opt.zero_grad();
      Tensor loss = batch_loss(batch);
      nx::backward(loss);
      opt.step();
      if (steps) ++*steps;
    }
  }
  if (loss_after) {
    nx::NoGradGuard no_grad;
    *loss_after = batch_loss(all).item();
  }
}

Tensor scores_of(const EncoderState& state, const EpisodeTask& ep, bool transductive) {
  const std::size_t ns = ep.support_x.dim(0);
  const std::size_t stats = transductive ? ns + ep.query_x.dim(0) : ns;
  Tensor x = nx::concat_rows({ep.support_x, ep.query_x});
  Tensor feats = state.forward_blocks(x, 0, state.config().block_count(), stats);
  return encoder::classify(state, feats);
}

std::uint64_t frozen_checksum(const EncoderState& s) {
  return nx::checksum(s.block_parameters(0, s.config().frozen_blocks()));
}

}  // namespace

gnn::GnnConfig ModelConfig::resolved_gnn() const {
  gnn::GnnConfig g = gnn;
  g.input_hidden = 2 * metric_dim;
  g.n_way = n_way;
  return g;
}

void ModelConfig::validate() const {
  encoder.validate();
  if (n_way < 2) throw InputError("model: n_way must be at least 2");
  if (metric_dim == 0) throw InputError("model: metric_dim must be positive");
  resolved_gnn().validate();
}

std::vector<NamedTensor> MetaModel::named_parameters() const {
  std::vector<NamedTensor> out = encoder1.named_parameters("encoder1.");
  for (NamedTensor& t : encoder2.named_parameters("encoder2.")) out.push_back(std::move(t));
  out.push_back({"metric.weight", metric.weight});
  for (NamedTensor& t : gnn.named_parameters("gnn.")) out.push_back(std::move(t));
  return out;
}

std::vector<Tensor> MetaModel::outer_parameters() const {
  std::vector<Tensor> out = encoder1.parameters();
  for (const Tensor& t : head_parameters(encoder2)) out.push_back(t);
  for (const Tensor& t : metric.parameters()) out.push_back(t);
  for (const Tensor& t : gnn.parameters()) out.push_back(t);
  return out;
}

std::vector<Tensor> MetaModel::encoder2_block_parameters() const {
  return encoder2.block_parameters(0, encoder2.config().block_count());
}

MetaModel assemble_model(const ModelConfig& config, const EncoderState& episodic, const EncoderState& supervised,
                         std::uint64_t seed) {
  config.validate();
  if (episodic.config().input_dim() != supervised.config().input_dim() ||
      episodic.config().block_count() != supervised.config().block_count() ||
      episodic.config().feature_dim() != supervised.config().feature_dim()) {
    throw InputError("model: the two encoders must share one configuration shape");
  }
  MetaModel m;
  m.config = config;
  m.encoder1 = encoder::clone_for_episode(episodic);
  m.encoder2 = encoder::clone_for_episode(supervised);
  m.encoder1.reset_head(config.n_way, derive_seed(seed, 0x4e1));
  m.encoder2.reset_head(config.n_way, derive_seed(seed, 0x4e2));
  m.metric = gnn::MetricLayer::init(config.n_way, config.metric_dim, derive_seed(seed, 0x3e));
  m.gnn = gnn::GnnParams::init(config.resolved_gnn(), derive_seed(seed, 0x6a));
  return m;
}

MetaModel blank_model(const ModelConfig& config, std::uint64_t seed) {
  EncoderState a(config.encoder, config.n_way, derive_seed(seed, 1));
  EncoderState b(config.encoder, config.n_way, derive_seed(seed, 2));
  return assemble_model(config, a, b, seed);
}

void InnerLoopConfig::validate() const {
  if (batch_size == 0) throw InputError("inner loop: batch_size must be positive");
  if (!(learning_rate > 0.0)) throw InputError("inner loop: learning_rate must be positive");
  augmentation.validate();
}

AdaptedEncoders inner_finetune(const MetaModel& model, const EpisodeTask& episode, const InnerLoopConfig& cfg,
                               Rng& rng, FineTuneTrace* trace) {
  cfg.validate();
  if (episode.support_y.empty() || !episode.support_x.defined() || episode.support_x.dim(0) == 0) {
    throw InputError("inner loop: the support set is empty");
  }
  AdaptedEncoders out{encoder::clone_for_episode(model.encoder1), encoder::clone_for_episode(model.encoder2)};
  if (cfg.reset_heads) {
    out.encoder1.reset_head(model.config.n_way, rng());
    out.encoder2.reset_head(model.config.n_way, rng());
  }
  EpisodePool pool = build_pool(episode, cfg, rng);
  double b1 = 0, a1 = 0, b2 = 0, a2 = 0;
  std::size_t steps = 0;
  const bool want = trace != nullptr;
  finetune_one(out.encoder1, pool, cfg, rng, want ? &b1 : nullptr, want ? &a1 : nullptr, &steps);
  finetune_one(out.encoder2, pool, cfg, rng, want ? &b2 : nullptr, want ? &a2 : nullptr, &steps);
  if (trace) {
    trace->loss_before = 0.5 * (b1 + b2);
    trace->loss_after = 0.5 * (a1 + a2);
    trace->steps = steps;
    trace->finetune_rows = pool.finetune_rows.size();
  }
  return out;
}

EpisodeScores episode_scores(const AdaptedEncoders& adapted, const EpisodeTask& episode, bool transductive) {
  const std::size_t ns = episode.support_x.dim(0), nq = episode.query_x.dim(0);
  Tensor w1 = scores_of(adapted.encoder1, episode, transductive);
  Tensor w2 = scores_of(adapted.encoder2, episode, transductive);
  return {nx::slice_rows(w1, 0, ns), nx::slice_rows(w2, 0, ns), nx::slice_rows(w1, ns, ns + nq),
          nx::slice_rows(w2, ns, ns + nq)};
}

Tensor episode_forward(const MetaModel& model, const AdaptedEncoders& adapted, const EpisodeTask& episode,
                       bool transductive) {
  EpisodeScores s = episode_scores(adapted, episode, transductive);
  return gnn::gnn_classify(s.support_w1, s.support_w2, episode.support_y, s.query_w1, s.query_w2, model.metric,
                           model.gnn);
}

void OuterLoopConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InputError("outer loop: learning_rate must be positive");
  if (way < 2 || shot == 0 || query == 0) throw InputError("outer loop: need way >= 2, shot >= 1, query >= 1");
}

MetaLearner::MetaLearner(MetaModel& model, double learning_rate)
    : model_(model), optimizer_(model.outer_parameters(), [&] {
        nx::OptimizerOptions o;
        o.kind = nx::OptimizerKind::kAdam;
        o.learning_rate = learning_rate;
        return o;
      }()) {}

OuterStepResult MetaLearner::step(const EpisodeTask& episode, const InnerLoopConfig& inner, Rng& rng) {
  OuterStepResult r;
  AdaptedEncoders adapted = inner_finetune(model_, episode, inner, rng, &r.inner);
  r.frozen_intact = frozen_checksum(adapted.encoder1) == frozen_checksum(model_.encoder1) &&
                    frozen_checksum(adapted.encoder2) == frozen_checksum(model_.encoder2);

  // Query loss at the adapted parameters. encoder1 is differentiated through
  // every block; encoder2 only through its classifier.
  const std::vector<Tensor> clone1 = adapted.encoder1.parameters();
  const std::vector<Tensor> clone2_head = head_parameters(adapted.encoder2);
  zero_grads(clone1);
  zero_grads(clone2_head);
  zero_grads(model_.metric.parameters());
  zero_grads(model_.gnn.parameters());

  const std::size_t ns = episode.support_x.dim(0), nq = episode.query_x.dim(0);
  const std::size_t stats = inner.transductive ? ns + nq : ns;
  Tensor x = nx::concat_rows({episode.support_x, episode.query_x});
  Tensor w1 = encoder::classify(
      adapted.encoder1, adapted.encoder1.forward_blocks(x, 0, adapted.encoder1.config().block_count(), stats));
  Tensor feats2;
  {
    nx::NoGradGuard no_grad;
    feats2 = adapted.encoder2.forward_blocks(x, 0, adapted.encoder2.config().block_count(), stats);
  }
  Tensor w2 = encoder::classify(adapted.encoder2, feats2);
  Tensor logits = gnn::gnn_classify(nx::slice_rows(w1, 0, ns), nx::slice_rows(w2, 0, ns), episode.support_y,
                                    nx::slice_rows(w1, ns, ns + nq), nx::slice_rows(w2, ns, ns + nq), model_.metric,
                                    model_.gnn);
  Tensor loss = nx::softmax_cross_entropy(logits, episode.query_y);
  r.graph_size = nx::graph_size(loss);
  nx::backward(loss);
  r.loss = loss.item();
  r.accuracy = accuracy_of(argmax_rows(logits), episode.query_y);

  // Gradients measured on the clones move the initializations.
  std::vector<std::span<const double>> grads;
  for (const Tensor& t : clone1) grads.push_back(t.grad());
  for (const Tensor& t : clone2_head) grads.push_back(t.grad());
  for (const Tensor& t : model_.metric.parameters()) grads.push_back(t.grad());
  for (const Tensor& t : model_.gnn.parameters()) grads.push_back(t.grad());
  optimizer_.step(grads);
  return r;
}

std::vector<MetaTrainEntry> meta_train(MetaModel& model, const Dataset& source, const OuterLoopConfig& cfg,
                                       const InnerLoopConfig& inner, const MetaTrainHooks& hooks) {
  cfg.validate();
  inner.validate();
  std::vector<MetaTrainEntry> log;
  if (cfg.episodes == 0) return log;
  MetaLearner learner(model, cfg.learning_rate);
  for (std::size_t i = 0; i < cfg.episodes; ++i) {
    Rng rng(derive_seed(cfg.seed, 0x3e7a, i));
    EpisodeTask ep = episodes::sample_episode(source, cfg.way, cfg.shot, cfg.query, rng);
    OuterStepResult r = learner.step(ep, inner, rng);
    log.push_back({i, r.loss, r.accuracy, r.graph_size, r.frozen_intact});
    if (hooks.on_episode) hooks.on_episode(i, r);
    if (cfg.checkpoint_every > 0 && (i + 1) % cfg.checkpoint_every == 0 && hooks.on_checkpoint) {
      hooks.on_checkpoint(i + 1);
    }
  }
  return log;
}

PretrainMode parse_pretrain_mode(const std::string& name) {
  if (name == "supervised") return PretrainMode::kSupervised;
  if (name == "episodic") return PretrainMode::kEpisodic;
  throw InputError("unknown pretrain mode '" + name + "' (expected supervised or episodic)");
}

std::string to_string(PretrainMode mode) { return mode == PretrainMode::kSupervised ? "supervised" : "episodic"; }

void PretrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InputError("pretrain: learning_rate must be positive");
  if (batch_size < 2) throw InputError("pretrain: batch_size must be at least 2");
  if (way < 2 || shot == 0 || query == 0) throw InputError("pretrain: need way >= 2, shot >= 1, query >= 1");
}

namespace {

std::vector<int> class_indices(const Dataset& ds) {
  std::vector<int> out(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto it = std::lower_bound(ds.classes.begin(), ds.classes.end(), ds.labels[i]);
    out[i] = static_cast<int>(it - ds.classes.begin());
  }
  return out;
}

Tensor gather_items(const Dataset& ds, const std::vector<std::size_t>& items) {
  const std::size_t d = ds.item_dim();
  std::vector<double> v(items.size() * d);
  for (std::size_t r = 0; r < items.size(); ++r) {
    auto src = ds.item(items[r]);
    std::copy(src.begin(), src.end(), v.begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  return Tensor::from({items.size(), d}, std::move(v));
}

EncoderState pretrain_supervised(const EncoderConfig& enc, const Dataset& ds, const PretrainConfig& cfg,
                                 std::uint64_t seed, std::vector<PretrainEpoch>* log) {
  EncoderState state(enc, ds.classes.size(), seed);
  if (cfg.epochs == 0) return state;
  const std::vector<int> y = class_indices(ds);
  nx::OptimizerOptions o;
  o.learning_rate = cfg.learning_rate;
  nx::Optimizer opt(state.parameters(), o);
  Rng rng(derive_seed(seed, 0x5e9));
  std::vector<std::size_t> order(ds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t b = std::min(cfg.batch_size, ds.size());
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    shuffle(order, rng);
    double loss_sum = 0.0, hits = 0.0;
    std::size_t seen = 0;
    // Batches of one item cannot be normalized; a short tail joins the
    // previous batch.
    for (std::size_t start = 0; start < order.size();) {
      std::size_t end = std::min(order.size(), start + b);
      if (order.size() - end < 2) end = order.size();
      std::vector<std::size_t> items(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(end));
      std::vector<int> labels;
      for (std::size_t i : items) labels.push_back(y[i]);
      opt.zero_grad();
      Tensor scores = encoder::classify(state, encoder::encode(state, gather_items(ds, items)));
      Tensor loss = nx::softmax_cross_entropy(scores, labels);
      nx::backward(loss);
      opt.step();
      loss_sum += loss.item() * static_cast<double>(items.size());
      hits += accuracy_of(argmax_rows(scores), labels) * static_cast<double>(items.size());
      seen += items.size();
      start = end;
    }
    if (log) log->push_back({e, loss_sum / static_cast<double>(seen), hits / static_cast<double>(seen)});
  }
  return state;
}

EncoderState pretrain_episodic(const EncoderConfig& enc, const Dataset& ds, const PretrainConfig& cfg,
                               std::uint64_t seed, std::vector<PretrainEpoch>* log) {
  EncoderState state(enc, cfg.way, seed);
  if (cfg.epochs == 0) return state;
  gnn::GnnConfig head_cfg = cfg.head;
  head_cfg.input_hidden = enc.feature_dim();
  head_cfg.n_way = cfg.way;
  gnn::GnnParams head = gnn::GnnParams::init(head_cfg, derive_seed(seed, 0x9a));
  std::vector<Tensor> params = state.block_parameters(0, enc.block_count());
  for (const Tensor& t : head.parameters()) params.push_back(t);
  nx::OptimizerOptions o;
  o.learning_rate = cfg.learning_rate;
  nx::Optimizer opt(params, o);
  const std::size_t per_episode = cfg.way * (cfg.shot + cfg.query);
  const std::size_t per_epoch =
      cfg.episodes_per_epoch > 0 ? cfg.episodes_per_epoch : std::max<std::size_t>(1, ds.size() / per_episode);
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    double loss_sum = 0.0, acc_sum = 0.0;
    for (std::size_t k = 0; k < per_epoch; ++k) {
      Rng rng(derive_seed(seed, 0xe915, e * per_epoch + k));
      EpisodeTask ep = episodes::sample_episode(ds, cfg.way, cfg.shot, cfg.query, rng);
      const std::size_t ns = ep.support_x.dim(0), nq = ep.query_x.dim(0);
      opt.zero_grad();
      Tensor feats = state.forward_blocks(nx::concat_rows({ep.support_x, ep.query_x}), 0, enc.block_count());
      Tensor logits = gnn::gnn_classify_hidden(nx::slice_rows(feats, 0, ns), ep.support_y,
                                               nx::slice_rows(feats, ns, ns + nq), head);
      Tensor loss = nx::softmax_cross_entropy(logits, ep.query_y);
      nx::backward(loss);
      opt.step();
      loss_sum += loss.item();
      acc_sum += accuracy_of(argmax_rows(logits), ep.query_y);
    }
    if (log) {
      log->push_back({e, loss_sum / static_cast<double>(per_epoch), acc_sum / static_cast<double>(per_epoch)});
    }
  }
  return state;
}

}  // namespace

EncoderState pretrain(const EncoderConfig& encoder, const Dataset& source, const PretrainConfig& cfg,
                      std::uint64_t seed, std::vector<PretrainEpoch>* log) {
  cfg.validate();
  encoder.validate();
  source.validate();
  if (source.item_dim() != encoder.input_dim()) {
    throw DimensionError("pretrain: dataset items have " + std::to_string(source.item_dim()) +
                         " values but the encoder expects " + std::to_string(encoder.input_dim()));
  }
  return cfg.mode == PretrainMode::kSupervised ? pretrain_supervised(encoder, source, cfg, seed, log)
                                               : pretrain_episodic(encoder, source, cfg, seed, log);
}

double supervised_accuracy(const EncoderState& state, const Dataset& ds) {
  nx::NoGradGuard no_grad;
  std::vector<std::size_t> all(ds.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  Tensor scores = encoder::classify(state, encoder::encode(state, gather_items(ds, all)));
  return accuracy_of(argmax_rows(scores), class_indices(ds));
}

void MetaTestConfig::validate() const {
  if (way < 2 || shot == 0 || query == 0) throw InputError("meta-test: need way >= 2, shot >= 1, query >= 1");
  if (jobs == 0) throw InputError("meta-test: jobs must be positive");
}

std::uint64_t episode_seed(std::uint64_t seed, std::size_t shot, std::size_t index) {
  return derive_seed(seed, 0x7e57 + shot, index);
}

std::size_t fit_query_count(const Dataset& ds, std::size_t shot, std::size_t query) {
  std::size_t smallest = ds.size();
  for (const auto& items : ds.items_by_class()) smallest = std::min(smallest, items.size());
  if (smallest <= shot) return 0;
  return std::min(query, smallest - shot);
}

MetaTestResult meta_test(const Dataset& target, const MetaTestConfig& cfg, const EpisodePredictor& predict) {
  cfg.validate();
  if (target.classes.size() < cfg.way || fit_query_count(target, cfg.shot, cfg.query) < cfg.query) {
    throw CapacityError("meta-test: target dataset cannot supply " + std::to_string(cfg.way) + "-way " +
                        std::to_string(cfg.shot) + "-shot episodes with " + std::to_string(cfg.query) +
                        " queries per class");
  }
  std::vector<std::vector<EpisodeRecord>> per_episode(cfg.episodes);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cfg.episodes) return;
      try {
        const std::uint64_t seed = episode_seed(cfg.seed, cfg.shot, i);
        Rng rng(seed);
        EpisodeTask ep = episodes::sample_episode(target, cfg.way, cfg.shot, cfg.query, rng);
        for (MethodPrediction& m : predict(ep, derive_seed(seed, 0x9e))) {
          if (m.predictions.size() != ep.query_y.size()) {
            throw InputError("meta-test: method '" + m.method + "' returned " + std::to_string(m.predictions.size()) +
                             " predictions for " + std::to_string(ep.query_y.size()) + " queries");
          }
          EpisodeRecord rec;
          rec.episode = i;
          rec.seed = seed;
          rec.shot = cfg.shot;
          rec.method = m.method;
          rec.accuracy = accuracy_of(m.predictions, ep.query_y);
          rec.confusion.assign(cfg.way, std::vector<std::size_t>(cfg.way, 0));
          for (std::size_t q = 0; q < ep.query_y.size(); ++q) {
            const int p = m.predictions[q];
            if (p < 0 || static_cast<std::size_t>(p) >= cfg.way) {
              throw InputError("meta-test: prediction " + std::to_string(p) + " outside the episode classes");
            }
            ++rec.confusion[static_cast<std::size_t>(ep.query_y[q])][static_cast<std::size_t>(p)];
          }
          per_episode[i].push_back(std::move(rec));
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next.store(cfg.episodes);
        return;
      }
    }
  };

  const std::size_t jobs = std::min(cfg.jobs, std::max<std::size_t>(1, cfg.episodes));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  MetaTestResult out;
  std::vector<std::string> methods;
  std::vector<std::vector<double>> accs;
  for (auto& recs : per_episode) {
    for (EpisodeRecord& r : recs) {
      auto it = std::find(methods.begin(), methods.end(), r.method);
      if (it == methods.end()) {
        methods.push_back(r.method);
        accs.emplace_back();
        it = methods.end() - 1;
      }
      accs[static_cast<std::size_t>(it - methods.begin())].push_back(r.accuracy);
      out.records.push_back(std::move(r));
    }
  }
  for (std::size_t m = 0; m < methods.size(); ++m) out.summary.push_back({methods[m], mean_ci(accs[m])});
  return out;
}

EpisodeOutputs evaluate_episode(const MetaModel& model, const EpisodeTask& episode, const InnerLoopConfig& inner,
                                std::uint64_t seed) {
  Rng rng(seed);
  AdaptedEncoders adapted = inner_finetune(model, episode, inner, rng);
  nx::NoGradGuard no_grad;
  EpisodeOutputs out;
  out.scores = episode_scores(adapted, episode, inner.transductive);
  out.logits = gnn::gnn_classify(out.scores.support_w1, out.scores.support_w2, episode.support_y,
                                 out.scores.query_w1, out.scores.query_w2, model.metric, model.gnn);
  return out;
}

EpisodePredictor sbmtl_predictor(const MetaModel& model, const InnerLoopConfig& inner) {
  return [&model, inner](const EpisodeTask& ep, std::uint64_t seed) {
    EpisodeOutputs o = evaluate_episode(model, ep, inner, seed);
    return std::vector<MethodPrediction>{{"sbmtl", argmax_rows(o.logits)}};
  };
}

std::vector<int> argmax_rows(const Tensor& logits) {
  const std::size_t rows = logits.rows(), cols = logits.cols();
  auto v = logits.data();
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c)
      if (v[r * cols + c] > v[r * cols + best]) best = c;
    out[r] = static_cast<int>(best);
  }
  return out;
}

std::string to_json_line(const MetaTrainEntry& e) {
  nlohmann::ordered_json j;
  j["episode"] = e.episode;
  j["loss"] = e.loss;
  j["accuracy"] = e.accuracy;
  j["graph_size"] = e.graph_size;
  j["frozen_intact"] = e.frozen_intact;
  return j.dump();
}

std::string to_json_line(const EpisodeRecord& r) {
  nlohmann::ordered_json j;
  j["episode"] = r.episode;
  j["seed"] = r.seed;
  j["shot"] = r.shot;
  j["method"] = r.method;
  j["accuracy"] = r.accuracy;
  j["confusion"] = r.confusion;
  return j.dump();
}

}  // namespace sbmtl::maml
