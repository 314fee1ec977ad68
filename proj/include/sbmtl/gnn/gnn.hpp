// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sbmtl/numerics/checkpoint.hpp"
#include "sbmtl/numerics/tensor.hpp"

namespace sbmtl::gnn {

using numerics::NamedTensor;
using numerics::Tensor;

// Linear map from an N_w score vector to m metric coordinates. The same
// weights embed both score streams. There is no offset: it would move every
// vertex of a graph by the same amount, which the pairwise edge inputs and
// the row-stochastic operators cancel.
struct MetricLayer {
  Tensor weight;  // [N_w x m]

  static MetricLayer init(std::size_t n_way, std::size_t m, std::uint64_t seed);
  std::size_t n_way() const { return weight.dim(0); }
  std::size_t dim() const { return weight.dim(1); }
  std::vector<Tensor> parameters() const { return {weight}; }
};

// Rows of w1 and w2 ([B x N_w] each) mapped to Gamma = [phi(w1) | phi(w2)],
// shape [B x 2m]. Throws InputError when the score widths disagree with the
// layer.
Tensor score_metric(const Tensor& w1, const Tensor& w2, const MetricLayer& layer);

// Signals of G graphs with V vertices each, stored as [G x V x d]. The last
// `label_dim` columns are the label block; the query vertex is the last row
// of every graph.
struct VertexSignal {
  Tensor s;
  std::size_t label_dim = 0;
  std::size_t layer = 0;
  // Every graph holds the same support rows (true after init_vertices).
  bool shared_support = false;

  std::size_t graphs() const { return s.dim(0); }
  std::size_t vertices() const { return s.dim(1); }
  std::size_t width() const { return s.dim(2); }
  std::size_t hidden_dim() const { return width() - label_dim; }
};

// One graph per query row: every graph holds all support rows, each with a
// one-hot label block, followed by that query with a uniform 1/N_w block.
// support_hidden is [N_s x h], query_hidden is [Q x h].
VertexSignal init_vertices(const Tensor& support_hidden, std::span<const int> support_labels,
                           const Tensor& query_hidden, std::size_t n_way);

// Scalar edge network. Its input is the absolute difference of the hidden
// columns of two vertices plus the L1 distance between their label blocks;
// the label block therefore enters through one weight shared by every class
// position. The layers carry no biases: the row softmax removes any shift
// that is the same for a whole row, and away from activation kinks that is
// all a bias contributes.
struct EdgeMlp {
  Tensor w1, w2, w3;

  static EdgeMlp init(std::size_t hidden_in, std::size_t width, std::uint64_t seed);
  std::vector<Tensor> parameters() const { return {w1, w2, w3}; }
};

// Symmetric raw edge scores [G x V x V].
Tensor edge_scores(const VertexSignal& s, const EdgeMlp& mlp, double slope);

// Raw scores normalized by a softmax over each row.
Tensor edge_features(const VertexSignal& s, const EdgeMlp& mlp, double slope);

// A weight theta of shape [(h_in + N) x (h_out + N)], or [(h_in + N) x N] in
// the readout, that commutes with any permutation of the label columns:
//
//   [ hh   0   ]
//   [ 0    a I ]
//
// Hidden and label channels meet only through the learned adjacency. Tied
// cross terms (u 1^T, 1 w^T, b 1 1^T) were left out: the label block of every
// vertex sums to one at the input, and a shift shared by all label channels
// cancels in the logits' softmax, so those terms carry almost no gradient.
struct EquivariantWeight {
  Tensor hh;     // [h_in x h_out], absent in the readout
  Tensor alpha;  // [1]

  static EquivariantWeight init(std::size_t h_in, std::size_t h_out, bool readout, double alpha,
                                std::uint64_t seed);
  bool readout() const { return !hh.defined(); }
  std::vector<Tensor> parameters() const;
};

Tensor assemble_weight(const EquivariantWeight& weight, std::size_t h_in, std::size_t n_label);

enum class SelfOperator { kIdentity, kMean };
SelfOperator parse_self_operator(const std::string& name);
std::string to_string(SelfOperator op);

struct GnnConfig {
  std::size_t input_hidden = 64;  // 2m for score inputs
  std::size_t n_way = 5;
  std::size_t layers = 2;
  std::size_t layer_hidden = 32;
  std::size_t edge_hidden = 32;
  SelfOperator self_operator = SelfOperator::kIdentity;
  double leaky_slope = 0.2;
  // Upper bound on adjacency entries (graphs x V x V) held at once; query
  // graphs are processed in chunks that respect it.
  std::size_t max_pairs_per_chunk = 2000000;

  void validate() const;
};

struct GnnLayer {
  EdgeMlp edge;
  EquivariantWeight adjacency;
  EquivariantWeight self;
};

struct GnnParams {
  GnnConfig config;
  std::vector<GnnLayer> layers;

  static GnnParams init(const GnnConfig& config, std::uint64_t seed);
  std::vector<Tensor> parameters() const;
  std::vector<NamedTensor> named_parameters(const std::string& prefix) const;
};

// One convolution: f(A S theta_A + B S theta_B) with B the identity or mean
// operator and f the leaky ReLU, omitted in the readout layer.
VertexSignal graph_conv(const VertexSignal& s, const Tensor& adjacency, const GnnLayer& layer,
                        const GnnConfig& config, bool readout);

// Runs all layers on prepared graphs and returns the query logits [G x N_w].
// Gives the same logits as applying edge_features and graph_conv layer by
// layer and reading the query rows, but evaluates the edge network on fewer
// pairs: shared support pairs once in the first layer, and only the query
// row in the readout.
Tensor gnn_forward(const VertexSignal& s0, const GnnParams& params);

// Query logits [Q x N_w] from raw per-item hidden rows (support [N_s x h],
// query [Q x h]); graphs are evaluated in chunks.
Tensor gnn_classify_hidden(const Tensor& support_hidden, std::span<const int> support_labels,
                           const Tensor& query_hidden, const GnnParams& params);

// Score streams through the shared metric layer, then the graph network.
Tensor gnn_classify(const Tensor& support_w1, const Tensor& support_w2, std::span<const int> support_labels,
                    const Tensor& query_w1, const Tensor& query_w2, const MetricLayer& metric,
                    const GnnParams& params);

}  // namespace sbmtl::gnn
