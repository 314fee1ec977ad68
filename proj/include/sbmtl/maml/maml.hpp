// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sbmtl/common/rng.hpp"
#include "sbmtl/common/stats.hpp"
#include "sbmtl/encoder/encoder.hpp"
#include "sbmtl/episodes/augment.hpp"
#include "sbmtl/episodes/dataset.hpp"
#include "sbmtl/gnn/gnn.hpp"
#include "sbmtl/numerics/optimizer.hpp"

namespace sbmtl::maml {

using encoder::EncoderConfig;
using encoder::EncoderState;
using episodes::Dataset;
using episodes::EpisodeTask;
using numerics::NamedTensor;
using numerics::Tensor;

struct ModelConfig {
  EncoderConfig encoder = EncoderConfig::desk_default();
  std::size_t n_way = 5;
  std::size_t metric_dim = 32;  // m; the graph network sees 2m score coordinates
  gnn::GnnConfig gnn;           // input_hidden and n_way are overwritten by resolved_gnn()

  gnn::GnnConfig resolved_gnn() const;
  void validate() const;
};

// encoder1 is the episodic-pretrained backbone whose initializations are
// meta-learned; encoder2 is the supervised-pretrained backbone whose blocks
// stay at their pretrained values. Each carries an n_way classifier.
struct MetaModel {
  ModelConfig config;
  EncoderState encoder1;
  EncoderState encoder2;
  gnn::MetricLayer metric;
  gnn::GnnParams gnn;

  std::vector<NamedTensor> named_parameters() const;
  // Everything the outer loop moves: all of encoder1, encoder2's classifier,
  // the metric layer and the graph network.
  std::vector<Tensor> outer_parameters() const;
  std::vector<Tensor> encoder2_block_parameters() const;
};

// Builds a model from two pretrained encoders. Both receive fresh n_way
// classifiers; the metric layer and graph network are initialized from seed.
MetaModel assemble_model(const ModelConfig& config, const EncoderState& episodic,
                         const EncoderState& supervised, std::uint64_t seed);

// Same parameter layout with freshly initialized encoders; used to restore
// checkpoints.
MetaModel blank_model(const ModelConfig& config, std::uint64_t seed);

struct InnerLoopConfig {
  std::size_t epochs = 15;
  std::size_t augment_epochs = 5;
  std::size_t batch_size = 16;
  numerics::OptimizerKind optimizer = numerics::OptimizerKind::kAdam;
  double learning_rate = 0.01;
  bool transductive = true;
  bool augment = false;
  episodes::AugmentConfig augmentation;
  // Replace both classifiers with fresh ones before fine-tuning, as at
  // meta-test time when the episode classes are new.
  bool reset_heads = false;

  std::size_t effective_epochs() const { return augment ? augment_epochs : epochs; }
  void validate() const;
};

struct AdaptedEncoders {
  EncoderState encoder1;
  EncoderState encoder2;
};

struct FineTuneTrace {
  double loss_before = 0.0;  // support loss of both clones before the first step
  double loss_after = 0.0;
  std::size_t steps = 0;
  std::size_t finetune_rows = 0;  // support items plus augmented copies
};

// Clones both encoders and fine-tunes the last k blocks and the classifier of
// each clone on the episode support. With cfg.transductive, batch statistics
// come from all support and query items of the episode; otherwise from the
// support items. The model itself is not modified.
AdaptedEncoders inner_finetune(const MetaModel& model, const EpisodeTask& episode, const InnerLoopConfig& cfg,
                               Rng& rng, FineTuneTrace* trace = nullptr);

struct EpisodeScores {
  Tensor support_w1, support_w2;  // [N_w*N_s x N_w]
  Tensor query_w1, query_w2;      // [N_w*N_q x N_w]
};

// Pre-softmax scores of the adapted encoders on the original episode items.
EpisodeScores episode_scores(const AdaptedEncoders& adapted, const EpisodeTask& episode, bool transductive);

// Graph-network query logits [N_w*N_q x N_w] from the adapted encoders.
Tensor episode_forward(const MetaModel& model, const AdaptedEncoders& adapted, const EpisodeTask& episode,
                       bool transductive);

struct OuterLoopConfig {
  double learning_rate = 0.001;
  std::size_t episodes = 500;
  std::size_t way = 5;
  std::size_t shot = 5;
  std::size_t query = 15;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // 0: never

  void validate() const;
};

struct OuterStepResult {
  double loss = 0.0;
  double accuracy = 0.0;
  // Nodes in the graph of the query loss; independent of the inner step count.
  std::size_t graph_size = 0;
  // First L - k blocks of both adapted clones equal the model's blocks.
  bool frozen_intact = false;
  FineTuneTrace inner;
};

// Holds the outer Adam state. Each step adapts clones on the support, takes
// the query loss gradient at the adapted parameters and applies it to the
// initializations (first order: nothing is differentiated through the inner
// updates).
class MetaLearner {
 public:
  MetaLearner(MetaModel& model, double learning_rate);

  OuterStepResult step(const EpisodeTask& episode, const InnerLoopConfig& inner, Rng& rng);

  const numerics::Optimizer& optimizer() const { return optimizer_; }

 private:
  MetaModel& model_;
  numerics::Optimizer optimizer_;
};

struct MetaTrainEntry {
  std::size_t episode = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t graph_size = 0;
  bool frozen_intact = false;
};

struct MetaTrainHooks {
  std::function<void(std::size_t episode, const OuterStepResult&)> on_episode;
  std::function<void(std::size_t episode)> on_checkpoint;
};

// Samples cfg.episodes source episodes and applies one outer step to each.
// The log has one entry per episode.
std::vector<MetaTrainEntry> meta_train(MetaModel& model, const Dataset& source, const OuterLoopConfig& cfg,
                                       const InnerLoopConfig& inner, const MetaTrainHooks& hooks = {});

enum class PretrainMode { kSupervised, kEpisodic };
PretrainMode parse_pretrain_mode(const std::string& name);
std::string to_string(PretrainMode mode);

struct PretrainConfig {
  PretrainMode mode = PretrainMode::kSupervised;
  std::size_t epochs = 40;
  double learning_rate = 0.001;
  std::size_t batch_size = 64;  // supervised
  std::size_t way = 5;          // episodic
  std::size_t shot = 5;
  std::size_t query = 5;
  // Episodes per epoch; 0 derives it from the dataset size.
  std::size_t episodes_per_epoch = 0;
  gnn::GnnConfig head;  // episodic head; input_hidden and n_way are overwritten

  void validate() const;
};

struct PretrainEpoch {
  std::size_t epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

// Supervised mode trains the encoder and a linear classifier over all source
// classes. Episodic mode trains the encoder with a graph network over raw
// features on sampled episodes. The returned encoder's head has one output
// per source class (supervised) or per episode class (episodic).
EncoderState pretrain(const EncoderConfig& encoder, const Dataset& source, const PretrainConfig& cfg,
                      std::uint64_t seed, std::vector<PretrainEpoch>* log = nullptr);

// Accuracy of a supervised encoder over a labeled dataset, batch statistics
// over the whole set.
double supervised_accuracy(const EncoderState& state, const Dataset& ds);

// ---- meta-test ----

struct MethodPrediction {
  std::string method;
  std::vector<int> predictions;  // one per query item
};

// Predictions of one or more methods on an episode. Every method in a call
// sees the same episode, which makes comparisons paired.
using EpisodePredictor = std::function<std::vector<MethodPrediction>(const EpisodeTask&, std::uint64_t seed)>;

struct MetaTestConfig {
  std::size_t way = 5;
  std::size_t shot = 5;
  std::size_t query = 15;
  std::size_t episodes = 600;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;

  void validate() const;
};

struct EpisodeRecord {
  std::size_t episode = 0;
  std::uint64_t seed = 0;
  std::size_t shot = 0;
  std::string method;
  double accuracy = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted] counts
};

struct MethodSummary {
  std::string method;
  MeanCi accuracy;
};

struct MetaTestResult {
  std::vector<EpisodeRecord> records;  // ordered by episode, then method
  std::vector<MethodSummary> summary;  // in the order methods first appear
};

// Seed of episode i; the same for every method and independent of jobs.
std::uint64_t episode_seed(std::uint64_t seed, std::size_t shot, std::size_t index);

// Runs cfg.episodes target episodes through `predict` using cfg.jobs worker
// threads. Throws CapacityError when the target cannot supply the episode
// shape.
MetaTestResult meta_test(const Dataset& target, const MetaTestConfig& cfg, const EpisodePredictor& predict);

// Query count that fits every class of ds next to `shot` support items,
// capped at `query`.
std::size_t fit_query_count(const Dataset& ds, std::size_t shot, std::size_t query);

// Adapted scores and graph-network logits of one episode.
struct EpisodeOutputs {
  EpisodeScores scores;
  Tensor logits;
};
EpisodeOutputs evaluate_episode(const MetaModel& model, const EpisodeTask& episode, const InnerLoopConfig& inner,
                                std::uint64_t seed);

// Argmax of the graph-network logits, method name "sbmtl".
EpisodePredictor sbmtl_predictor(const MetaModel& model, const InnerLoopConfig& inner);

std::vector<int> argmax_rows(const Tensor& logits);

// One JSON object per line for training logs and episode records.
std::string to_json_line(const MetaTrainEntry& e);
std::string to_json_line(const EpisodeRecord& r);

}  // namespace sbmtl::maml
