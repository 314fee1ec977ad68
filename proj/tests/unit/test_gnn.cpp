// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "sbmtl/common/errors.hpp"
#include "sbmtl/gnn/gnn.hpp"
#include "sbmtl/numerics/gradcheck.hpp"
#include "sbmtl/numerics/ops.hpp"
#include "support/helpers.hpp"

using namespace sbmtl;
using namespace sbmtl::gnn;
using namespace sbmtl::numerics;
using sbmtl::testing::random_tensor;
using sbmtl::testing::values;

namespace {

GnnConfig small_config(std::size_t hidden = 6, std::size_t n_way = 3) {
  GnnConfig c;
  c.input_hidden = hidden;
  c.n_way = n_way;
  c.layer_hidden = 5;
  c.edge_hidden = 4;
  return c;
}

double leaky(double x, double s) { return x > 0 ? x : s * x; }

// Edge network evaluated pair by pair with plain loops.
std::vector<double> brute_edge_scores(const std::vector<double>& s, std::size_t v, std::size_t d, std::size_t n,
                                      const EdgeMlp& mlp, double slope) {
  const std::size_t h = d - n;
  const std::size_t width = mlp.w1.dim(1);
  std::vector<double> out(v * v);
  for (std::size_t i = 0; i < v; ++i) {
    for (std::size_t j = 0; j < v; ++j) {
      std::vector<double> in(h + 1, 0.0);
      for (std::size_t c = 0; c < h; ++c) in[c] = std::abs(s[i * d + c] - s[j * d + c]);
      for (std::size_t c = h; c < d; ++c) in[h] += std::abs(s[i * d + c] - s[j * d + c]);
      std::vector<double> a(width), b(width);
      for (std::size_t k = 0; k < width; ++k) {
        double t = 0;
        for (std::size_t c = 0; c <= h; ++c) t += in[c] * mlp.w1.at(c * width + k);
        a[k] = leaky(t, slope);
      }
      for (std::size_t k = 0; k < width; ++k) {
        double t = 0;
        for (std::size_t c = 0; c < width; ++c) t += a[c] * mlp.w2.at(c * width + k);
        b[k] = leaky(t, slope);
      }
      double e = 0;
      for (std::size_t k = 0; k < width; ++k) e += b[k] * mlp.w3.at(k);
      out[i * v + j] = e;
    }
  }
  return out;
}

struct Instance {
  Tensor support, query;
  std::vector<int> labels;
};

Instance random_instance(std::size_t way, std::size_t shot, std::size_t queries, std::size_t hidden, Rng& rng) {
  Instance in;
  in.support = random_tensor({way * shot, hidden}, rng);
  in.query = random_tensor({queries, hidden}, rng);
  for (std::size_t c = 0; c < way; ++c)
    for (std::size_t s = 0; s < shot; ++s) in.labels.push_back(static_cast<int>(c));
  return in;
}

}  // namespace

TEST_CASE("score metric applies one layer to both streams") {
  MetricLayer layer = MetricLayer::init(5, 32, 1);
  Rng rng(1);
  Tensor w = random_tensor({4, 5}, rng);
  Tensor g = score_metric(w, w, layer);
  CHECK(g.shape() == Shape{4, 64});
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 32; ++c) CHECK(g.at(r * 64 + c) == g.at(r * 64 + 32 + c));

  MetricLayer eye{Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1})};
  Tensor w1 = Tensor::from({1, 3}, {0.5, -1, 2});
  Tensor w2 = Tensor::from({1, 3}, {3, 4, 5});
  CHECK(values(score_metric(w1, w2, eye)) == std::vector<double>{0.5, -1, 2, 3, 4, 5});
  CHECK_THROWS_AS(score_metric(Tensor::zeros({1, 4}), Tensor::zeros({1, 4}), eye), InputError);
  CHECK_THROWS_AS(score_metric(Tensor::zeros({1, 3}), Tensor::zeros({2, 3}), eye), InputError);
}

TEST_CASE("vertex initialization") {
  Rng rng(2);
  Tensor sup = random_tensor({25, 64}, rng, false);
  Tensor qry = random_tensor({3, 64}, rng, false);
  std::vector<int> labels(25);
  for (std::size_t i = 0; i < 25; ++i) labels[i] = static_cast<int>(i / 5);
  VertexSignal s = init_vertices(sup, labels, qry, 5);
  CHECK(s.s.shape() == Shape{3, 26, 69});
  CHECK(s.hidden_dim() == 64);
  const std::size_t d = 69;
  // Support item 10 has label 2.
  for (std::size_t c = 0; c < 5; ++c) CHECK(s.s.at(1 * 26 * d + 10 * d + 64 + c) == (c == 2 ? 1.0 : 0.0));
  for (std::size_t c = 0; c < 5; ++c) CHECK(s.s.at(2 * 26 * d + 25 * d + 64 + c) == doctest::Approx(0.2));
  for (std::size_t c = 0; c < 64; ++c) CHECK(s.s.at(2 * 26 * d + 25 * d + c) == qry.at(2 * 64 + c));
  labels[3] = 5;
  CHECK_THROWS_AS(init_vertices(sup, labels, qry, 5), InputError);
}

TEST_CASE("edge scores match the loop oracle and are exactly symmetric") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    Instance in = random_instance(3, 2, 2, 6, rng);
    EdgeMlp mlp = EdgeMlp::init(6, 4, seed);
    VertexSignal s = init_vertices(in.support, in.labels, in.query, 3);
    Tensor raw = edge_scores(s, mlp, 0.2);
    const std::size_t v = 7, d = 9;
    for (std::size_t g = 0; g < 2; ++g) {
      std::vector<double> graph(s.s.data().begin() + g * v * d, s.s.data().begin() + (g + 1) * v * d);
      auto oracle = brute_edge_scores(graph, v, d, 3, mlp, 0.2);
      for (std::size_t i = 0; i < v; ++i)
        for (std::size_t j = 0; j < v; ++j) {
          CHECK(raw.at(g * v * v + i * v + j) == raw.at(g * v * v + j * v + i));
          CHECK(raw.at(g * v * v + i * v + j) == doctest::Approx(oracle[i * v + j]).epsilon(1e-12));
        }
    }
    Tensor norm = edge_features(s, mlp, 0.2);
    for (std::size_t r = 0; r < 2 * v; ++r) {
      double total = 0;
      for (std::size_t j = 0; j < v; ++j) total += norm.at(r * v + j);
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("identical vertices give uniform rows") {
  Tensor sup = Tensor::full({4, 6}, 0.3);
  Tensor qry = Tensor::full({1, 6}, 0.3);
  std::vector<int> labels{0, 0, 0, 0};
  // With a single class the label blocks still differ from the uniform query
  // block, so use one class and one way.
  VertexSignal s = init_vertices(sup, labels, qry, 1);
  Tensor a = edge_features(s, EdgeMlp::init(6, 4, 3), 0.2);
  for (double x : a.data()) CHECK(x == doctest::Approx(0.2).epsilon(1e-14));
}

TEST_CASE("swapping two support vertices swaps adjacency rows and columns") {
  Rng rng(4);
  Instance in = random_instance(5, 1, 1, 6, rng);
  EdgeMlp mlp = EdgeMlp::init(6, 4, 5);
  Tensor a = edge_scores(init_vertices(in.support, in.labels, in.query, 5), mlp, 0.2);
  std::vector<std::size_t> perm{0, 3, 2, 1, 4};
  std::vector<int> labels2(5);
  for (std::size_t i = 0; i < 5; ++i) labels2[i] = in.labels[perm[i]];
  Tensor b = edge_scores(init_vertices(gather_rows(in.support, perm), labels2, in.query, 5), mlp, 0.2);
  std::vector<std::size_t> full{0, 3, 2, 1, 4, 5};
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) CHECK(b.at(i * 6 + j) == a.at(full[i] * 6 + full[j]));
}

TEST_CASE("assembled weights commute with label permutations") {
  EquivariantWeight w = EquivariantWeight::init(4, 3, false, 0.7, 1);
  const std::size_t n = 5;
  Tensor theta = assemble_weight(w, 4, n);
  CHECK(theta.shape() == Shape{9, 8});
  std::vector<std::size_t> pi{2, 0, 4, 1, 3};
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      CHECK(theta.at((4 + pi[r]) * 8 + 3 + pi[c]) == theta.at((4 + r) * 8 + 3 + c));
      CHECK(theta.at((4 + r) * 8 + 3 + c) == (r == c ? 0.7 : 0.0));
    }
    for (std::size_t j = 0; j < 3; ++j) CHECK(theta.at((4 + r) * 8 + j) == 0.0);
  }
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) CHECK(theta.at(i * 8 + j) == w.hh.at(i * 3 + j));
    for (std::size_t c = 0; c < n; ++c) CHECK(theta.at(i * 8 + 3 + c) == 0.0);
  }
  EquivariantWeight ro = EquivariantWeight::init(4, 3, true, 0.9, 1);
  Tensor t2 = assemble_weight(ro, 4, n);
  CHECK(t2.shape() == Shape{9, 5});
  for (std::size_t i = 0; i < 4 * 5; ++i) CHECK(t2.at(i) == 0.0);
  CHECK(t2.at(4 * 5 + 0) == 0.9);
}

TEST_CASE("graph conv reduces to a per-vertex affine map without messages") {
  Rng rng(6);
  Instance in = random_instance(3, 2, 2, 6, rng);
  GnnConfig cfg = small_config();
  GnnParams p = GnnParams::init(cfg, 7);
  const GnnLayer& layer = p.layers[0];
  VertexSignal s = init_vertices(in.support, in.labels, in.query, 3);

  GnnLayer no_msg = layer;
  no_msg.adjacency = EquivariantWeight::init(6, 5, false, 0.0, 1);
  for (auto t : no_msg.adjacency.parameters()) for (double& x : t.data()) x = 0.0;
  Tensor adj = edge_features(s, layer.edge, 0.2);
  VertexSignal out = graph_conv(s, adj, no_msg, cfg, false);
  Tensor direct = leaky_relu(matmul(reshape(s.s, {14, 9}), assemble_weight(no_msg.self, 6, 3)), 0.2);
  CHECK(values(reshape(out.s, {14, 8})) == values(direct));

  // Identity adjacency with a zero self weight is the same affine map again.
  GnnLayer swapped = layer;
  swapped.adjacency = no_msg.self;
  swapped.self = no_msg.adjacency;
  std::vector<double> eye(2 * 7 * 7, 0.0);
  for (std::size_t g = 0; g < 2; ++g)
    for (std::size_t i = 0; i < 7; ++i) eye[g * 49 + i * 7 + i] = 1.0;
  VertexSignal out2 = graph_conv(s, Tensor::from({2, 7, 7}, eye), swapped, cfg, false);
  CHECK(values(out2.s) == values(out.s));
}

TEST_CASE("support permutation equivariance and query invariance") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 20);
    Instance in = random_instance(5, 1, 3, 6, rng);
    GnnConfig cfg = small_config(6, 5);
    GnnParams p = GnnParams::init(cfg, seed);
    std::vector<std::size_t> perm{4, 2, 0, 3, 1};
    std::vector<int> labels2(5);
    for (std::size_t i = 0; i < 5; ++i) labels2[i] = in.labels[perm[i]];

    VertexSignal s = init_vertices(in.support, in.labels, in.query, 5);
    VertexSignal sp = init_vertices(gather_rows(in.support, perm), labels2, in.query, 5);
    VertexSignal s1 = graph_conv(s, edge_features(s, p.layers[0].edge, 0.2), p.layers[0], cfg, false);
    VertexSignal sp1 = graph_conv(sp, edge_features(sp, p.layers[0].edge, 0.2), p.layers[0], cfg, false);
    const std::size_t d = s1.width();
    std::vector<std::size_t> full{4, 2, 0, 3, 1, 5};
    for (std::size_t g = 0; g < 3; ++g)
      for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t c = 0; c < d; ++c)
          CHECK(std::abs(sp1.s.at((g * 6 + i) * d + c) - s1.s.at((g * 6 + full[i]) * d + c)) < 1e-10);

    Tensor a = gnn_classify_hidden(in.support, in.labels, in.query, p);
    Tensor b = gnn_classify_hidden(gather_rows(in.support, perm), labels2, in.query, p);
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(std::abs(a.at(i) - b.at(i)) < 1e-10);
  }
}

TEST_CASE("relabeling classes permutes the logits") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 40);
    Instance in = random_instance(5, 1, 4, 6, rng);
    GnnParams p = GnnParams::init(small_config(6, 5), seed + 3);
    std::vector<int> pi{3, 0, 4, 2, 1};
    std::vector<int> relabeled(5);
    for (std::size_t i = 0; i < 5; ++i) relabeled[i] = pi[static_cast<std::size_t>(in.labels[i])];
    Tensor a = gnn_classify_hidden(in.support, in.labels, in.query, p);
    Tensor b = gnn_classify_hidden(in.support, relabeled, in.query, p);
    for (std::size_t q = 0; q < 4; ++q)
      for (std::size_t c = 0; c < 5; ++c)
        CHECK(std::abs(b.at(q * 5 + static_cast<std::size_t>(pi[c])) - a.at(q * 5 + c)) < 1e-10);
  }
}

TEST_CASE("classification is deterministic and chunking does not change results") {
  Rng rng(8);
  Instance in = random_instance(3, 3, 7, 6, rng);
  GnnConfig cfg = small_config();
  GnnParams p = GnnParams::init(cfg, 9);
  Tensor a = gnn_classify_hidden(in.support, in.labels, in.query, p);
  CHECK(a.shape() == Shape{7, 3});
  CHECK(values(a) == values(gnn_classify_hidden(in.support, in.labels, in.query, p)));
  p.config.max_pairs_per_chunk = 100;  // two graphs per chunk
  Tensor b = gnn_classify_hidden(in.support, in.labels, in.query, p);
  CHECK(values(a) == values(b));
}

TEST_CASE("logits depend on scores only through the metric layer") {
  Rng rng(10);
  // Adding a vector from the kernel of W^T (nontrivial when N_w > m) to a
  // score row leaves its metric image unchanged.
  MetricLayer narrow = MetricLayer::init(3, 2, 2);
  GnnConfig cfg = small_config(4, 3);
  GnnParams p = GnnParams::init(cfg, 3);
  Tensor sw1 = random_tensor({6, 3}, rng), sw2 = random_tensor({6, 3}, rng);
  Tensor qw1 = random_tensor({2, 3}, rng), qw2 = random_tensor({2, 3}, rng);
  std::vector<int> labels{0, 0, 1, 1, 2, 2};
  // Kernel direction of narrow.weight^T: the cross product of its columns.
  const double* w = narrow.weight.data().data();
  const double k0 = w[2] * w[5] - w[4] * w[3];
  const double k1 = w[4] * w[1] - w[0] * w[5];
  const double k2 = w[0] * w[3] - w[2] * w[1];
  std::vector<double> shifted = values(qw1);
  for (std::size_t r = 0; r < 2; ++r) {
    shifted[r * 3 + 0] += 3.0 * k0;
    shifted[r * 3 + 1] += 3.0 * k1;
    shifted[r * 3 + 2] += 3.0 * k2;
  }
  Tensor a = gnn_classify(sw1, sw2, labels, qw1, qw2, narrow, p);
  Tensor b = gnn_classify(sw1, sw2, labels, Tensor::from({2, 3}, shifted), qw2, narrow, p);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.at(i) == doctest::Approx(b.at(i)).epsilon(1e-10));
}

TEST_CASE("gradients through the full graph network match central differences") {
  // Parameters are redrawn away from their initial values: at init the edge
  // softmax is nearly flat, which leaves some gradients below what central
  // differences can resolve in double precision.
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed + 60);
    GnnConfig cfg = small_config(4, 3);
    GnnParams p = GnnParams::init(cfg, seed);
    for (GnnLayer& l : p.layers) {
      for (Tensor& t : l.edge.parameters())
        for (double& x : t.data()) x *= 2.0;
      l.adjacency.alpha.data()[0] = uniform(rng, 1.0, 4.0);
      l.self.alpha.data()[0] = uniform(rng, -4.0, 4.0);
    }
    MetricLayer m = MetricLayer::init(3, 2, seed);
    Tensor sw1 = random_tensor({3, 3}, rng, true, -3, 3), sw2 = random_tensor({3, 3}, rng, true, -3, 3);
    Tensor qw1 = random_tensor({2, 3}, rng, true, -3, 3), qw2 = random_tensor({2, 3}, rng, true, -3, 3);
    std::vector<int> labels{0, 1, 2};
    std::vector<int> qy{2, 0};
    std::vector<Tensor> params = p.parameters();
    for (const Tensor& t : m.parameters()) params.push_back(t);
    params.push_back(sw1);
    params.push_back(qw2);
    auto r = finite_diff_check(
        [&] { return softmax_cross_entropy(gnn_classify(sw1, sw2, labels, qw1, qw2, m, p), qy); }, params, 1e-5);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("graph convolution with the mean operator matches central differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed + 90);
    GnnConfig cfg = small_config(3, 3);
    cfg.self_operator = SelfOperator::kMean;
    GnnParams p = GnnParams::init(cfg, seed);
    GnnLayer& layer = p.layers[0];
    layer.self.alpha.data()[0] = uniform(rng, -2.0, 2.0);
    // Free-valued label columns so that the mean differs across channels.
    VertexSignal s{random_tensor({2, 4, 6}, rng), 3, 0};
    Tensor adj = random_tensor({2, 4, 4}, rng, true, 0.0, 1.0);
    Tensor proj = random_tensor({2, 4, cfg.layer_hidden + 3}, rng, false);
    std::vector<Tensor> params = layer.adjacency.parameters();
    for (const Tensor& t : layer.self.parameters()) params.push_back(t);
    params.push_back(s.s);
    params.push_back(adj);
    auto r = finite_diff_check([&] { return sum(mul(graph_conv(s, adj, layer, cfg, false).s, proj)); }, params, 1e-5);
    CHECK(r.max_rel_error < 1e-4);
  }
}
