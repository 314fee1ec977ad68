// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#include "sbmtl/gnn/gnn.hpp"

#include <algorithm>
#include <cmath>

#include "sbmtl/common/errors.hpp"
#include "sbmtl/common/rng.hpp"
#include "sbmtl/numerics/ops.hpp"

namespace sbmtl::gnn {

namespace nx = sbmtl::numerics;
using nx::detail::Node;

namespace {

Tensor uniform_init(nx::Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(nx::shape_numel(shape));
  for (double& x : v) x = uniform(rng, -bound, bound);
  return Tensor::from(std::move(shape), std::move(v), true);
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// Edge-network input for every unordered pair i <= j of every graph:
// [|S_i - S_j| over hidden columns, sum of |S_i - S_j| over label columns].
Tensor pairwise_edge_input(const VertexSignal& sig) {
  const std::size_t g = sig.graphs(), v = sig.vertices(), d = sig.width();
  const std::size_t h = sig.hidden_dim();
  const std::size_t pairs = v * (v + 1) / 2;
  const std::size_t cols = h + 1;
  const auto& s = sig.s.node()->data;
  std::vector<double> out(g * pairs * cols);
  std::size_t row = 0;
  for (std::size_t k = 0; k < g; ++k) {
    const double* base = s.data() + k * v * d;
    for (std::size_t i = 0; i < v; ++i) {
      for (std::size_t j = i; j < v; ++j, ++row) {
        const double* a = base + i * d;
        const double* b = base + j * d;
        double* o = out.data() + row * cols;
        for (std::size_t c = 0; c < h; ++c) o[c] = std::abs(a[c] - b[c]);
        double l1 = 0.0;
        for (std::size_t c = h; c < d; ++c) l1 += std::abs(a[c] - b[c]);
        o[h] = l1;
      }
    }
  }
  return nx::make_result({g * pairs, cols}, std::move(out), {sig.s}, [g, v, d, h, cols](Node& self) {
    auto& p = *self.parents[0];
    std::size_t row = 0;
    for (std::size_t k = 0; k < g; ++k) {
      const double* base = p.data.data() + k * v * d;
      double* gbase = p.grad.data() + k * v * d;
      for (std::size_t i = 0; i < v; ++i) {
        for (std::size_t j = i; j < v; ++j, ++row) {
          if (i == j) continue;
          const double* a = base + i * d;
          const double* b = base + j * d;
          const double* go = self.grad.data() + row * cols;
          for (std::size_t c = 0; c < d; ++c) {
            const double gc = c < h ? go[c] : go[h];
            const double t = gc * sign(a[c] - b[c]);
            gbase[i * d + c] += t;
            gbase[j * d + c] -= t;
          }
        }
      }
    }
  });
}

// Scores on the upper triangle [G*P x 1] mirrored into [G x V x V].
Tensor symmetric_from_upper(const Tensor& upper, std::size_t g, std::size_t v) {
  const std::size_t pairs = v * (v + 1) / 2;
  if (upper.numel() != g * pairs) throw DimensionError("symmetric_from_upper: wrong pair count");
  const auto& e = upper.node()->data;
  std::vector<double> out(g * v * v);
  std::size_t p = 0;
  for (std::size_t k = 0; k < g; ++k) {
    double* m = out.data() + k * v * v;
    for (std::size_t i = 0; i < v; ++i) {
      for (std::size_t j = i; j < v; ++j, ++p) {
        m[i * v + j] = e[p];
        m[j * v + i] = e[p];
      }
    }
  }
  return nx::make_result({g, v, v}, std::move(out), {upper}, [g, v](Node& self) {
    auto& par = *self.parents[0];
    std::size_t p = 0;
    for (std::size_t k = 0; k < g; ++k) {
      const double* m = self.grad.data() + k * v * v;
      for (std::size_t i = 0; i < v; ++i) {
        for (std::size_t j = i; j < v; ++j, ++p) {
          par.grad[p] += i == j ? m[i * v + i] : m[i * v + j] + m[j * v + i];
        }
      }
    }
  });
}

// Graph tensor [Q x V x (h + n)] from shared support rows and one query row
// per graph.
Tensor assemble_graphs(const Tensor& support, std::span<const int> labels, const Tensor& query,
                       std::size_t n_way) {
  const std::size_t ns = support.dim(0), h = support.dim(1), q = query.dim(0);
  const std::size_t v = ns + 1, d = h + n_way;
  const auto& sd = support.node()->data;
  const auto& qd = query.node()->data;
  std::vector<double> out(q * v * d, 0.0);
  const double uniform_label = 1.0 / static_cast<double>(n_way);
  for (std::size_t k = 0; k < q; ++k) {
    double* gph = out.data() + k * v * d;
    for (std::size_t i = 0; i < ns; ++i) {
      std::copy_n(sd.data() + i * h, h, gph + i * d);
      gph[i * d + h + static_cast<std::size_t>(labels[i])] = 1.0;
    }
    std::copy_n(qd.data() + k * h, h, gph + ns * d);
    for (std::size_t c = 0; c < n_way; ++c) gph[ns * d + h + c] = uniform_label;
  }
  return nx::make_result({q, v, d}, std::move(out), {support, query}, [ns, h, q, v, d](Node& self) {
    auto& ps = *self.parents[0];
    auto& pq = *self.parents[1];
    for (std::size_t k = 0; k < q; ++k) {
      const double* g = self.grad.data() + k * v * d;
      if (ps.requires_grad) {
        for (std::size_t i = 0; i < ns; ++i)
          for (std::size_t c = 0; c < h; ++c) ps.grad[i * h + c] += g[i * d + c];
      }
      if (pq.requires_grad) {
        for (std::size_t c = 0; c < h; ++c) pq.grad[k * h + c] += g[ns * d + c];
      }
    }
  });
}

// Edge-network input for the pairs (query, j), j = 0..V-1, of every graph,
// where the query is the last vertex: [G*V x (h + 1)].
Tensor query_edge_input(const VertexSignal& sig) {
  const std::size_t g = sig.graphs(), v = sig.vertices(), d = sig.width();
  const std::size_t h = sig.hidden_dim();
  const std::size_t cols = h + 1;
  const auto& s = sig.s.node()->data;
  std::vector<double> out(g * v * cols);
  for (std::size_t k = 0; k < g; ++k) {
    const double* base = s.data() + k * v * d;
    const double* a = base + (v - 1) * d;
    for (std::size_t j = 0; j < v; ++j) {
      const double* b = base + j * d;
      double* o = out.data() + (k * v + j) * cols;
      for (std::size_t c = 0; c < h; ++c) o[c] = std::abs(a[c] - b[c]);
      double l1 = 0.0;
      for (std::size_t c = h; c < d; ++c) l1 += std::abs(a[c] - b[c]);
      o[h] = l1;
    }
  }
  return nx::make_result({g * v, cols}, std::move(out), {sig.s}, [g, v, d, h, cols](Node& self) {
    auto& p = *self.parents[0];
    for (std::size_t k = 0; k < g; ++k) {
      const double* base = p.data.data() + k * v * d;
      double* gbase = p.grad.data() + k * v * d;
      const double* a = base + (v - 1) * d;
      for (std::size_t j = 0; j + 1 < v; ++j) {
        const double* b = base + j * d;
        const double* go = self.grad.data() + (k * v + j) * cols;
        for (std::size_t c = 0; c < d; ++c) {
          const double t = (c < h ? go[c] : go[h]) * sign(a[c] - b[c]);
          gbase[(v - 1) * d + c] += t;
          gbase[j * d + c] -= t;
        }
      }
    }
  });
}

// Full score tensor [G x V x V] from one support block shared by all graphs
// (upper triangle of the first V-1 vertices, [P x 1]) and the per-graph query
// rows ([G*V x 1]).
Tensor scores_from_shared(const Tensor& support_upper, const Tensor& query_rows, std::size_t g, std::size_t v) {
  const std::size_t ns = v - 1;
  if (support_upper.numel() != ns * (ns + 1) / 2 || query_rows.numel() != g * v) {
    throw DimensionError("scores_from_shared: wrong pair count");
  }
  const auto& e = support_upper.node()->data;
  const auto& qd = query_rows.node()->data;
  std::vector<double> out(g * v * v);
  for (std::size_t k = 0; k < g; ++k) {
    double* m = out.data() + k * v * v;
    std::size_t p = 0;
    for (std::size_t i = 0; i < ns; ++i) {
      for (std::size_t j = i; j < ns; ++j, ++p) {
        m[i * v + j] = e[p];
        m[j * v + i] = e[p];
      }
    }
    for (std::size_t j = 0; j < v; ++j) {
      m[ns * v + j] = qd[k * v + j];
      m[j * v + ns] = qd[k * v + j];
    }
  }
  return nx::make_result({g, v, v}, std::move(out), {support_upper, query_rows}, [g, v, ns](Node& self) {
    auto& ps = *self.parents[0];
    auto& pq = *self.parents[1];
    for (std::size_t k = 0; k < g; ++k) {
      const double* m = self.grad.data() + k * v * v;
      if (ps.requires_grad) {
        std::size_t p = 0;
        for (std::size_t i = 0; i < ns; ++i)
          for (std::size_t j = i; j < ns; ++j, ++p) ps.grad[p] += i == j ? m[i * v + i] : m[i * v + j] + m[j * v + i];
      }
      if (pq.requires_grad) {
        for (std::size_t j = 0; j < ns; ++j) pq.grad[k * v + j] += m[ns * v + j] + m[j * v + ns];
        pq.grad[k * v + ns] += m[ns * v + ns];
      }
    }
  });
}

Tensor edge_mlp(const Tensor& input, const EdgeMlp& mlp, double slope) {
  Tensor x = nx::leaky_relu(nx::matmul(input, mlp.w1), slope);
  x = nx::leaky_relu(nx::matmul(x, mlp.w2), slope);
  return nx::matmul(x, mlp.w3);
}

}  // namespace

MetricLayer MetricLayer::init(std::size_t n_way, std::size_t m, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x3e7));
  return {uniform_init({n_way, m}, n_way, rng)};
}

Tensor score_metric(const Tensor& w1, const Tensor& w2, const MetricLayer& layer) {
  if (w1.ndim() != 2 || w2.ndim() != 2 || w1.shape() != w2.shape() || w1.dim(1) != layer.n_way()) {
    throw InputError("score_metric: score streams " + nx::shape_str(w1.shape()) + " and " +
                     nx::shape_str(w2.shape()) + " do not fit a metric layer over " +
                     std::to_string(layer.n_way()) + " classes");
  }
  Tensor a = nx::matmul(w1, layer.weight);
  Tensor b = nx::matmul(w2, layer.weight);
  return nx::concat_cols({a, b});
}

VertexSignal init_vertices(const Tensor& support_hidden, std::span<const int> support_labels,
                           const Tensor& query_hidden, std::size_t n_way) {
  if (support_hidden.ndim() != 2 || query_hidden.ndim() != 2 || support_hidden.dim(1) != query_hidden.dim(1)) {
    throw DimensionError("init_vertices: support " + nx::shape_str(support_hidden.shape()) + " and query " +
                         nx::shape_str(query_hidden.shape()) + " rows differ");
  }
  if (support_labels.size() != support_hidden.dim(0)) {
    throw InputError("init_vertices: one label per support row is required");
  }
  if (n_way == 0) throw InputError("init_vertices: n_way must be positive");
  for (int y : support_labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= n_way) {
      throw InputError("init_vertices: label " + std::to_string(y) + " outside [0, " + std::to_string(n_way) + ")");
    }
  }
  return {assemble_graphs(support_hidden, support_labels, query_hidden, n_way), n_way, 0, true};
}

EdgeMlp EdgeMlp::init(std::size_t hidden_in, std::size_t width, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0xed6e));
  EdgeMlp m;
  m.w1 = uniform_init({hidden_in + 1, width}, hidden_in + 1, rng);
  m.w2 = uniform_init({width, width}, width, rng);
  m.w3 = uniform_init({width, 1}, width, rng);
  return m;
}

Tensor edge_scores(const VertexSignal& s, const EdgeMlp& mlp, double slope) {
  if (mlp.w1.dim(0) != s.hidden_dim() + 1) {
    throw DimensionError("edge_scores: edge network expects " + std::to_string(mlp.w1.dim(0) - 1) +
                         " hidden columns, signal has " + std::to_string(s.hidden_dim()));
  }
  return symmetric_from_upper(edge_mlp(pairwise_edge_input(s), mlp, slope), s.graphs(), s.vertices());
}

Tensor edge_features(const VertexSignal& s, const EdgeMlp& mlp, double slope) {
  return nx::softmax_rows(edge_scores(s, mlp, slope));
}

EquivariantWeight EquivariantWeight::init(std::size_t h_in, std::size_t h_out, bool readout, double alpha,
                                          std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0xe9));
  EquivariantWeight w;
  w.alpha = Tensor::from({1}, {alpha}, true);
  if (!readout) w.hh = uniform_init({h_in, h_out}, h_in, rng);
  return w;
}

std::vector<Tensor> EquivariantWeight::parameters() const {
  if (readout()) return {alpha};
  return {hh, alpha};
}

Tensor assemble_weight(const EquivariantWeight& ew, std::size_t h_in, std::size_t n) {
  const bool ro = ew.readout();
  const std::size_t h_out = ro ? 0 : ew.hh.dim(1);
  if (!ro && ew.hh.dim(0) != h_in) throw DimensionError("assemble_weight: hidden width mismatch");
  const std::size_t rows = h_in + n, cols = h_out + n;
  std::vector<double> out(rows * cols, 0.0);
  if (!ro) {
    auto hh = ew.hh.data();
    for (std::size_t i = 0; i < h_in; ++i)
      for (std::size_t j = 0; j < h_out; ++j) out[i * cols + j] = hh[i * h_out + j];
  }
  for (std::size_t c = 0; c < n; ++c) out[(h_in + c) * cols + h_out + c] = ew.alpha.at(0);

  return nx::make_result({rows, cols}, std::move(out), ew.parameters(), [ro, h_in, h_out, n, cols](Node& self) {
    const auto& g = self.grad;
    // Parent order follows EquivariantWeight::parameters().
    Node& alpha = ro ? *self.parents[0] : *self.parents[1];
    if (alpha.requires_grad)
      for (std::size_t c = 0; c < n; ++c) alpha.grad[0] += g[(h_in + c) * cols + h_out + c];
    if (ro) return;
    Node& hh = *self.parents[0];
    if (hh.requires_grad)
      for (std::size_t i = 0; i < h_in; ++i)
        for (std::size_t j = 0; j < h_out; ++j) hh.grad[i * h_out + j] += g[i * cols + j];
  });
}

SelfOperator parse_self_operator(const std::string& name) {
  if (name == "identity") return SelfOperator::kIdentity;
  if (name == "mean") return SelfOperator::kMean;
  throw InputError("unknown self operator '" + name + "' (expected identity or mean)");
}

std::string to_string(SelfOperator op) { return op == SelfOperator::kIdentity ? "identity" : "mean"; }

void GnnConfig::validate() const {
  if (input_hidden == 0 || n_way == 0) throw InputError("gnn: input width and n_way must be positive");
  if (layers < 1) throw InputError("gnn: at least one layer is required");
  if (layer_hidden == 0 || edge_hidden == 0) throw InputError("gnn: layer widths must be positive");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw InputError("gnn: leaky slope outside (0, 1)");
  if (max_pairs_per_chunk == 0) throw InputError("gnn: max_pairs_per_chunk must be positive");
}

GnnParams GnnParams::init(const GnnConfig& config, std::uint64_t seed) {
  config.validate();
  GnnParams p;
  p.config = config;
  std::size_t h_in = config.input_hidden;
  for (std::size_t k = 0; k < config.layers; ++k) {
    const bool readout = k + 1 == config.layers;
    const std::uint64_t ls = derive_seed(seed, 0x1a7e, k);
    GnnLayer layer;
    layer.edge = EdgeMlp::init(h_in, config.edge_hidden, derive_seed(ls, 1));
    layer.adjacency = EquivariantWeight::init(h_in, config.layer_hidden, readout, 1.0, derive_seed(ls, 2));
    layer.self = EquivariantWeight::init(h_in, config.layer_hidden, readout, readout ? 0.0 : 1.0,
                                         derive_seed(ls, 3));
    p.layers.push_back(std::move(layer));
    h_in = config.layer_hidden;
  }
  return p;
}

std::vector<Tensor> GnnParams::parameters() const {
  std::vector<Tensor> out;
  for (const GnnLayer& l : layers) {
    for (const auto& group : {l.edge.parameters(), l.adjacency.parameters(), l.self.parameters()}) {
      out.insert(out.end(), group.begin(), group.end());
    }
  }
  return out;
}

std::vector<NamedTensor> GnnParams::named_parameters(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const GnnLayer& l = layers[k];
    const std::string p = prefix + "layer" + std::to_string(k) + ".";
    const char* edge_names[] = {"w1", "w2", "w3"};
    auto edge = l.edge.parameters();
    for (std::size_t i = 0; i < edge.size(); ++i) out.push_back({p + "edge." + edge_names[i], edge[i]});
    for (const auto& [tag, ew] : {std::pair<const char*, const EquivariantWeight*>{"adj.", &l.adjacency},
                                  std::pair<const char*, const EquivariantWeight*>{"self.", &l.self}}) {
      if (!ew->readout()) out.push_back({p + tag + "hh", ew->hh});
      out.push_back({p + tag + "alpha", ew->alpha});
    }
  }
  return out;
}

VertexSignal graph_conv(const VertexSignal& s, const Tensor& adjacency, const GnnLayer& layer,
                        const GnnConfig& config, bool readout) {
  const std::size_t g = s.graphs(), v = s.vertices(), d = s.width();
  const std::size_t n = s.label_dim, h_in = s.hidden_dim();
  if (adjacency.shape() != nx::Shape{g, v, v}) {
    throw DimensionError("graph_conv: adjacency " + nx::shape_str(adjacency.shape()) + " does not match " +
                         std::to_string(g) + " graphs of " + std::to_string(v) + " vertices");
  }
  const Tensor theta_adj = assemble_weight(layer.adjacency, h_in, n);
  const Tensor theta_self = assemble_weight(layer.self, h_in, n);
  const std::size_t out_w = theta_adj.dim(1);

  Tensor flat = nx::reshape(s.s, {g * v, d});
  Tensor msg = nx::matmul(nx::reshape(nx::bmm(adjacency, s.s), {g * v, d}), theta_adj);
  Tensor self_in = flat;
  if (config.self_operator == SelfOperator::kMean) {
    Tensor avg = Tensor::full({g, v, v}, 1.0 / static_cast<double>(v));
    self_in = nx::reshape(nx::bmm(avg, s.s), {g * v, d});
  }
  Tensor out = nx::add(msg, nx::matmul(self_in, theta_self));
  if (!readout) out = nx::leaky_relu(out, config.leaky_slope);
  return {nx::reshape(out, {g, v, out_w}), n, s.layer + 1};
}

Tensor gnn_forward(const VertexSignal& s0, const GnnParams& params) {
  VertexSignal s = s0;
  const auto& cfg = params.config;
  const std::size_t g = s.graphs(), v = s.vertices();
  const std::size_t last = params.layers.size() - 1;
  for (std::size_t k = 0; k < last; ++k) {
    const EdgeMlp& mlp = params.layers[k].edge;
    Tensor scores;
    if (k == 0 && s.shared_support && v > 1) {
      // Support rows are the same in every graph before the first layer, so
      // their pair scores are computed once.
      Tensor first = nx::reshape(nx::slice_rows(nx::reshape(s.s, {g * v, s.width()}), 0, v - 1),
                                 {1, v - 1, s.width()});
      Tensor support_upper = edge_mlp(pairwise_edge_input({first, s.label_dim, 0}), mlp, cfg.leaky_slope);
      scores = scores_from_shared(support_upper, edge_mlp(query_edge_input(s), mlp, cfg.leaky_slope), g, v);
    } else {
      scores = edge_scores(s, mlp, cfg.leaky_slope);
    }
    s = graph_conv(s, nx::softmax_rows(scores), params.layers[k], cfg, false);
  }

  // Readout: only the query vertex's row of the adjacency reaches the logits.
  const GnnLayer& layer = params.layers[last];
  const std::size_t d = s.width(), n = s.label_dim;
  Tensor row = nx::softmax_rows(nx::reshape(edge_mlp(query_edge_input(s), layer.edge, cfg.leaky_slope), {g, v}));
  Tensor msg = nx::reshape(nx::bmm(nx::reshape(row, {g, 1, v}), s.s), {g, d});
  Tensor self_in;
  if (cfg.self_operator == SelfOperator::kMean) {
    self_in = nx::reshape(nx::bmm(Tensor::full({g, 1, v}, 1.0 / static_cast<double>(v)), s.s), {g, d});
  } else {
    std::vector<std::size_t> query_rows(g);
    for (std::size_t i = 0; i < g; ++i) query_rows[i] = i * v + v - 1;
    self_in = nx::gather_rows(nx::reshape(s.s, {g * v, d}), query_rows);
  }
  return nx::add(nx::matmul(msg, assemble_weight(layer.adjacency, s.hidden_dim(), n)),
                 nx::matmul(self_in, assemble_weight(layer.self, s.hidden_dim(), n)));
}

Tensor gnn_classify_hidden(const Tensor& support_hidden, std::span<const int> support_labels,
                           const Tensor& query_hidden, const GnnParams& params) {
  const auto& cfg = params.config;
  if (support_hidden.ndim() != 2 || support_hidden.dim(1) != cfg.input_hidden) {
    throw DimensionError("gnn_classify: support rows " + nx::shape_str(support_hidden.shape()) +
                         " do not have width " + std::to_string(cfg.input_hidden));
  }
  const std::size_t v = support_hidden.dim(0) + 1;
  const std::size_t chunk = std::max<std::size_t>(1, cfg.max_pairs_per_chunk / (v * v));
  const std::size_t q = query_hidden.dim(0);
  std::vector<Tensor> parts;
  for (std::size_t begin = 0; begin < q; begin += chunk) {
    const std::size_t end = std::min(q, begin + chunk);
    Tensor rows = (begin == 0 && end == q) ? query_hidden : nx::slice_rows(query_hidden, begin, end);
    parts.push_back(gnn_forward(init_vertices(support_hidden, support_labels, rows, cfg.n_way), params));
  }
  return parts.size() == 1 ? parts[0] : nx::concat_rows(parts);
}

Tensor gnn_classify(const Tensor& support_w1, const Tensor& support_w2, std::span<const int> support_labels,
                    const Tensor& query_w1, const Tensor& query_w2, const MetricLayer& metric,
                    const GnnParams& params) {
  return gnn_classify_hidden(score_metric(support_w1, support_w2, metric), support_labels,
                             score_metric(query_w1, query_w2, metric), params);
}

}  // namespace sbmtl::gnn
