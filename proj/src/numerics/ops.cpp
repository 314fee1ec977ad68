// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#include "sbmtl/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sbmtl/common/errors.hpp"

namespace sbmtl::numerics {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap cmap(const std::vector<double>& v, std::size_t r, std::size_t c, std::size_t offset = 0) {
  return ConstMap(v.data() + offset, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

MutMap mmap(std::vector<double>& v, std::size_t r, std::size_t c, std::size_t offset = 0) {
  return MutMap(v.data() + offset, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw DimensionError(std::string(op) + ": " + what);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), op,
          "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.ndim() == 2 && b.ndim() == 2, "matmul", "operands must be 2-D");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(b.dim(0) == k, "matmul",
          "inner dims differ " + shape_str(a.shape()) + " . " + shape_str(b.shape()));
  std::vector<double> out(m * n);
  mmap(out, m, n).noalias() = cmap(a.node()->data, m, k) * cmap(b.node()->data, k, n);
  return make_result({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    auto g = cmap(self.grad, m, n);
    if (pa.requires_grad) mmap(pa.grad, m, k).noalias() += g * cmap(pb.data, k, n).transpose();
    if (pb.requires_grad) mmap(pb.grad, k, n).noalias() += cmap(pa.data, m, k).transpose() * g;
  });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  require(a.ndim() == 3 && b.ndim() == 3, "bmm", "operands must be 3-D");
  const std::size_t g = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  require(b.dim(0) == g && b.dim(1) == k, "bmm",
          "incompatible " + shape_str(a.shape()) + " . " + shape_str(b.shape()));
  std::vector<double> out(g * m * n);
  for (std::size_t i = 0; i < g; ++i) {
    mmap(out, m, n, i * m * n).noalias() =
        cmap(a.node()->data, m, k, i * m * k) * cmap(b.node()->data, k, n, i * k * n);
  }
  return make_result({g, m, n}, std::move(out), {a, b}, [g, m, k, n](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    for (std::size_t i = 0; i < g; ++i) {
      auto gr = cmap(self.grad, m, n, i * m * n);
      if (pa.requires_grad) {
        mmap(pa.grad, m, k, i * m * k).noalias() += gr * cmap(pb.data, k, n, i * k * n).transpose();
      }
      if (pb.requires_grad) {
        mmap(pb.grad, k, n, i * k * n).noalias() += cmap(pa.data, m, k, i * m * k).transpose() * gr;
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  const auto& x = a.node()->data;
  const auto& y = b.node()->data;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  const auto& x = a.node()->data;
  const auto& y = b.node()->data;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (pa.requires_grad) pa.grad[i] += self.grad[i];
      if (pb.requires_grad) pb.grad[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  const auto& x = a.node()->data;
  const auto& y = b.node()->data;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (pa.requires_grad) pa.grad[i] += self.grad[i] * pb.data[i];
      if (pb.requires_grad) pb.grad[i] += self.grad[i] * pa.data[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= factor;
  return make_result(a.shape(), std::move(out), {a}, [factor](detail::Node& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += factor * self.grad[i];
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t n = x.cols();
  require(bias.numel() == n, "add_bias",
          "bias " + shape_str(bias.shape()) + " does not match " + shape_str(x.shape()));
  const std::size_t r = x.rows();
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto& b = bias.node()->data;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += b[j];
  }
  return make_result(x.shape(), std::move(out), {x, bias}, [r, n](detail::Node& self) {
    auto& px = *self.parents[0];
    auto& pb = *self.parents[1];
    if (px.requires_grad) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < n; ++j) pb.grad[j] += self.grad[i * n + j];
      }
    }
  });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  if (!(slope > 0.0 && slope < 1.0)) throw InputError("leaky_relu: slope must lie in (0, 1)");
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v = v > 0.0 ? v : slope * v;
  return make_result(x.shape(), std::move(out), {x}, [slope](detail::Node& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      p.grad[i] += self.grad[i] * (p.data[i] > 0.0 ? 1.0 : slope);
    }
  });
}

Tensor softmax_rows(const Tensor& x) {
  const std::size_t n = x.cols();
  const std::size_t r = x.rows();
  std::vector<double> out(x.numel());
  const auto& in = x.node()->data;
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = in.data() + i * n;
    double* o = out.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = std::exp(row[j] - mx);
      z += o[j];
    }
    for (std::size_t j = 0; j < n; ++j) o[j] /= z;
  }
  return make_result(x.shape(), out, {x}, [r, n, out](detail::Node& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < r; ++i) {
      const double* s = out.data() + i * n;
      const double* g = self.grad.data() + i * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[j] * s[j];
      for (std::size_t j = 0; j < n; ++j) p.grad[i * n + j] += s[j] * (g[j] - dot);
    }
  });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require(logits.ndim() == 2, "softmax_cross_entropy", "logits must be [B x K]");
  const std::size_t b = logits.dim(0), k = logits.dim(1);
  if (labels.size() != b) throw InputError("softmax_cross_entropy: label count differs from batch");
  if (b == 0) throw InputError("softmax_cross_entropy: empty batch");
  std::vector<double> probs(b * k);
  std::vector<int> lab(labels.begin(), labels.end());
  const auto& z = logits.node()->data;
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    if (lab[i] < 0 || static_cast<std::size_t>(lab[i]) >= k) {
      throw InputError("softmax_cross_entropy: label " + std::to_string(lab[i]) +
                       " outside [0, " + std::to_string(k) + ")");
    }
    const double* row = z.data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
    const double log_z = mx + std::log(sum);
    for (std::size_t j = 0; j < k; ++j) probs[i * k + j] = std::exp(row[j] - log_z);
    loss += log_z - row[lab[i]];
  }
  loss /= static_cast<double>(b);
  return make_result({1}, {loss}, {logits},
                     [b, k, probs = std::move(probs), lab = std::move(lab)](detail::Node& self) {
                       auto& p = *self.parents[0];
                       const double g = self.grad[0] / static_cast<double>(b);
                       for (std::size_t i = 0; i < b; ++i) {
                         for (std::size_t j = 0; j < k; ++j) {
                           const double onehot = static_cast<int>(j) == lab[i] ? 1.0 : 0.0;
                           p.grad[i * k + j] += g * (probs[i * k + j] - onehot);
                         }
                       }
                     });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  std::size_t stats_rows, double eps) {
  require(x.ndim() == 2, "batch_norm", "input must be [B x d]");
  const std::size_t b = x.dim(0), d = x.dim(1);
  require(gamma.numel() == d && beta.numel() == d, "batch_norm", "affine size differs from d");
  const std::size_t r = stats_rows == 0 ? b : stats_rows;
  if (r > b) throw InputError("batch_norm: stats_rows exceeds batch");
  if (r < 2) throw DegenerateBatchError("batch_norm: batch statistics need at least 2 rows");

  const auto& in = x.node()->data;
  std::vector<double> mu(d, 0.0), inv_std(d, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < d; ++j) mu[j] += in[i * d + j];
  }
  for (double& m : mu) m /= static_cast<double>(r);
  std::vector<double> var(d, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double c = in[i * d + j] - mu[j];
      var[j] += c * c;
    }
  }
  for (std::size_t j = 0; j < d; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] / static_cast<double>(r) + eps);

  std::vector<double> xhat(b * d), out(b * d);
  const auto& ga = gamma.node()->data;
  const auto& be = beta.node()->data;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (in[i * d + j] - mu[j]) * inv_std[j];
      xhat[i * d + j] = h;
      out[i * d + j] = ga[j] * h + be[j];
    }
  }
  return make_result(
      {b, d}, std::move(out), {x, gamma, beta},
      [b, d, r, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        const auto& g = self.grad;
        if (pg.requires_grad || pb.requires_grad) {
          for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
              if (pg.requires_grad) pg.grad[j] += g[i * d + j] * xhat[i * d + j];
              if (pb.requires_grad) pb.grad[j] += g[i * d + j];
            }
          }
        }
        if (!px.requires_grad) return;
        // s = inv_std. Sums run over all b rows, but mu and var only see the
        // first r:  dmu = -s * sum(dxhat),  dvar = -0.5 * s^2 * sum(dxhat * x_hat).
        const auto& ga = pg.data;
        std::vector<double> sum_dh(d, 0.0), sum_dh_h(d, 0.0);
        for (std::size_t i = 0; i < b; ++i) {
          for (std::size_t j = 0; j < d; ++j) {
            const double dh = g[i * d + j] * ga[j];
            sum_dh[j] += dh;
            sum_dh_h[j] += dh * xhat[i * d + j];
          }
        }
        const double inv_r = 1.0 / static_cast<double>(r);
        for (std::size_t i = 0; i < b; ++i) {
          for (std::size_t j = 0; j < d; ++j) {
            const double dh = g[i * d + j] * ga[j];
            double v = dh * inv_std[j];
            if (i < r) {
              // dmu / r + dvar * 2 (x - mu) / r
              v -= inv_std[j] * inv_r * (sum_dh[j] + xhat[i * d + j] * sum_dh_h[j]);
            }
            px.grad[i * d + j] += v;
          }
        }
      });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw InputError("concat_cols: no inputs");
  const std::size_t r = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    require(p.ndim() == 2 && p.dim(0) == r, "concat_cols", "row counts differ");
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<double> out(r * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& src = parts[k].node()->data;
    const std::size_t w = widths[k];
    for (std::size_t i = 0; i < r; ++i) {
      std::copy_n(src.data() + i * w, w, out.data() + i * total + off);
    }
    off += w;
  }
  return make_result({r, total}, std::move(out), parts,
                     [r, total, widths = std::move(widths)](detail::Node& self) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < widths.size(); ++k) {
                         auto& p = *self.parents[k];
                         const std::size_t w = widths[k];
                         if (p.requires_grad) {
                           for (std::size_t i = 0; i < r; ++i) {
                             for (std::size_t j = 0; j < w; ++j) {
                               p.grad[i * w + j] += self.grad[i * total + off + j];
                             }
                           }
                         }
                         off += w;
                       }
                     });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw InputError("concat_rows: no inputs");
  const std::size_t c = parts[0].cols();
  std::size_t total = 0;
  std::vector<std::size_t> sizes;
  for (const Tensor& p : parts) {
    require(p.ndim() == 2 && p.dim(1) == c, "concat_rows", "column counts differ");
    total += p.dim(0);
    sizes.push_back(p.numel());
  }
  std::vector<double> out;
  out.reserve(total * c);
  for (const Tensor& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_result({total, c}, std::move(out), parts, [sizes = std::move(sizes)](detail::Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      auto& p = *self.parents[k];
      if (p.requires_grad) {
        for (std::size_t i = 0; i < sizes[k]; ++i) p.grad[i] += self.grad[off + i];
      }
      off += sizes[k];
    }
  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices) {
  const std::size_t c = x.cols();
  const std::size_t r = x.rows();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  std::vector<double> out(idx.size() * c);
  const auto& in = x.node()->data;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= r) throw DimensionError("gather_rows: index out of range");
    std::copy_n(in.data() + idx[i] * c, c, out.data() + i * c);
  }
  const std::size_t n = idx.size();
  return make_result({n, c}, std::move(out), {x}, [c, idx = std::move(idx)](detail::Node& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t j = 0; j < c; ++j) p.grad[idx[i] * c + j] += self.grad[i * c + j];
    }
  });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  if (begin > end || end > x.rows()) throw DimensionError("slice_rows: range out of bounds");
  std::vector<std::size_t> idx(end - begin);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
  return gather_rows(x, idx);
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require(x.ndim() == 2, "slice_cols", "input must be 2-D");
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (begin > end || end > c) throw DimensionError("slice_cols: range out of bounds");
  const std::size_t w = end - begin;
  std::vector<double> out(r * w);
  const auto& in = x.node()->data;
  for (std::size_t i = 0; i < r; ++i) std::copy_n(in.data() + i * c + begin, w, out.data() + i * w);
  return make_result({r, w}, std::move(out), {x}, [r, c, w, begin](detail::Node& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < w; ++j) p.grad[i * c + begin + j] += self.grad[i * w + j];
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {x}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result({1}, {s}, {x}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    for (double& g : p.grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw InputError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

}  // namespace sbmtl::numerics
