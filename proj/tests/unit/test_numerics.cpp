// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "sbmtl/common/errors.hpp"
#include "sbmtl/numerics/checkpoint.hpp"
#include "sbmtl/numerics/gradcheck.hpp"
#include "sbmtl/numerics/ops.hpp"
#include "sbmtl/numerics/optimizer.hpp"
#include "support/helpers.hpp"

using namespace sbmtl;
using namespace sbmtl::numerics;
using sbmtl::testing::naive_matmul;
using sbmtl::testing::random_tensor;
using sbmtl::testing::values;

TEST_CASE("matmul against identity, zero and the loop oracle") {
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from({2, 2}, {5, 6, 7, 8});
  CHECK(values(matmul(a, b)) == std::vector<double>{19, 22, 43, 50});
  CHECK(values(matmul(a, b)) == naive_matmul(values(a), values(b), 2, 2, 2));

  Rng rng(3);
  Tensor m = random_tensor({3, 4}, rng, false);
  Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  CHECK(values(matmul(eye, m)) == values(m));
  for (double v : values(matmul(Tensor::zeros({2, 3}), m))) CHECK(v == 0.0);

  for (int seed = 0; seed < 20; ++seed) {
    Rng r(seed);
    const std::size_t p = 1 + uniform_index(r, 7), q = 1 + uniform_index(r, 7), s = 1 + uniform_index(r, 7);
    Tensor x = random_tensor({p, q}, r, false);
    Tensor y = random_tensor({q, s}, r, false);
    auto got = values(matmul(x, y));
    auto want = naive_matmul(values(x), values(y), p, q, s);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
}

TEST_CASE("leaky relu values and slope validation") {
  Tensor x = Tensor::from({3}, {0.0, -1.0, 2.0}, true);
  Tensor y = leaky_relu(x, 0.2);
  CHECK(y.at(0) == 0.0);
  CHECK(y.at(1) == doctest::Approx(-0.2));
  CHECK(y.at(2) == 2.0);
  CHECK_THROWS_AS(leaky_relu(x, 1.0), InputError);
  CHECK_THROWS_AS(leaky_relu(x, 0.0), InputError);

  Tensor z = Tensor::from({1}, {-1.0}, true);
  auto r = finite_diff_check([&] { return sum(leaky_relu(z, 0.2)); }, {z}, 1e-6);
  CHECK(r.analytic == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(r.max_rel_error < 1e-8);
}

TEST_CASE("cross entropy: uniform, large margin, shift invariance, label range") {
  std::vector<int> labels{0, 3, 4};
  CHECK(softmax_cross_entropy(Tensor::zeros({3, 5}), labels).item() == doctest::Approx(std::log(5.0)).epsilon(1e-12));

  Tensor sharp = Tensor::from({1, 3}, {0.0, 40.0, 0.0});
  std::vector<int> one{1};
  CHECK(softmax_cross_entropy(sharp, one).item() < 1e-6);

  Rng rng(11);
  for (int t = 0; t < 20; ++t) {
    Tensor l = random_tensor({3, 5}, rng, false, -5, 5);
    std::vector<double> shifted = values(l);
    const double c = uniform(rng, -100, 100);
    for (double& v : shifted) v += c;
    const double a = softmax_cross_entropy(l, labels).item();
    const double b = softmax_cross_entropy(Tensor::from({3, 5}, shifted), labels).item();
    CHECK(std::abs(a - b) < 1e-10);
  }
  std::vector<int> bad{0, 5, 1};
  CHECK_THROWS_AS(softmax_cross_entropy(Tensor::zeros({3, 5}), bad), InputError);
  std::vector<int> neg{0, -1, 1};
  CHECK_THROWS_AS(softmax_cross_entropy(Tensor::zeros({3, 5}), neg), InputError);

  Tensor logits = random_tensor({3, 4}, rng);
  std::vector<int> lab{1, 0, 3};
  auto r = finite_diff_check([&] { return softmax_cross_entropy(logits, lab); }, {logits}, 1e-6);
  CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("batch norm statistics and modes") {
  Tensor gamma = Tensor::full({2}, 1.0);
  Tensor beta = Tensor::zeros({2});
  Tensor constant = Tensor::from({3, 2}, {7, 1, 7, 2, 7, 3});
  Tensor y = batch_norm(constant, gamma, beta);
  for (std::size_t i = 0; i < 3; ++i) CHECK(y.at(i * 2) == 0.0);

  Rng rng(5);
  Tensor x = random_tensor({50, 4}, rng, false, -3, 7);
  Tensor z = batch_norm(x, Tensor::full({4}, 1.0), Tensor::zeros({4}));
  for (std::size_t c = 0; c < 4; ++c) {
    double m = 0, v = 0;
    for (std::size_t r = 0; r < 50; ++r) m += z.at(r * 4 + c);
    m /= 50;
    for (std::size_t r = 0; r < 50; ++r) v += (z.at(r * 4 + c) - m) * (z.at(r * 4 + c) - m);
    v /= 50;
    CHECK(std::abs(m) < 1e-12);
    CHECK(v == doctest::Approx(1.0).epsilon(1e-4));
  }

  // Support and query drawn from different distributions: statistics over
  // the support alone versus the whole episode give different outputs.
  Tensor support = random_tensor({10, 3}, rng, false, 0, 1);
  Tensor query = random_tensor({10, 3}, rng, false, 4, 6);
  Tensor episode = concat_rows({support, query});
  Tensor g3 = Tensor::full({3}, 1.0), b3 = Tensor::zeros({3});
  Tensor trans = slice_rows(batch_norm(episode, g3, b3), 0, 10);
  Tensor plain = slice_rows(batch_norm(episode, g3, b3, 10), 0, 10);
  double diff = 0;
  for (std::size_t i = 0; i < 30; ++i) diff = std::max(diff, std::abs(trans.at(i) - plain.at(i)));
  CHECK(diff > 0.5);

  CHECK_THROWS_AS(batch_norm(Tensor::zeros({1, 3}), g3, b3), DegenerateBatchError);
  CHECK_THROWS_AS(batch_norm(episode, g3, b3, 1), DegenerateBatchError);
}

TEST_CASE("backward: squares, reuse, unreachable tensors, scalar loss") {
  Tensor x = Tensor::from({3}, {1.0, -2.0, 3.0}, true);
  backward(sum(mul(x, x)));
  CHECK(values(Tensor::from({3}, {x.grad()[0], x.grad()[1], x.grad()[2]})) == std::vector<double>{2, -4, 6});

  for (int k = 1; k <= 5; ++k) {
    Tensor w = Tensor::from({2}, {0.5, 1.5}, true);
    Tensor acc = w;
    for (int i = 1; i < k; ++i) acc = add(acc, w);
    backward(sum(acc));
    CHECK(w.grad()[0] == doctest::Approx(k));
    CHECK(w.grad()[1] == doctest::Approx(k));
  }

  Tensor used = Tensor::from({2}, {1, 2}, true);
  Tensor unused = Tensor::from({2}, {3, 4}, true);
  Tensor side = mul(unused, unused);
  backward(sum(scale(used, 3.0)));
  CHECK(unused.grad()[0] == 0.0);
  CHECK(unused.grad()[1] == 0.0);
  CHECK(side.grad()[0] == 0.0);

  CHECK_THROWS_AS(backward(mul(x, x)), InputError);
}

TEST_CASE("finite difference oracle: linear and quadratic") {
  Tensor x = Tensor::from({1}, {3.0}, true);
  auto q = finite_diff_check([&] { return sum(mul(x, x)); }, {x}, 1e-5);
  CHECK(q.analytic == doctest::Approx(6.0));
  CHECK(q.numeric == doctest::Approx(6.0).epsilon(1e-8));

  Rng rng(2);
  Tensor w = random_tensor({4, 3}, rng);
  Tensor c = random_tensor({4, 3}, rng, false);
  auto lin = finite_diff_check([&] { return sum(mul(w, c)); }, {w}, 1e-4);
  CHECK(lin.max_rel_error < 1e-9);

  CHECK_THROWS_AS(finite_diff_check([&] { return sum(w); }, {w}, 1e-2), InputError);
  CHECK_THROWS_AS(finite_diff_check([&] { return sum(w); }, {w}, 1e-9), InputError);
}

TEST_CASE("every differentiable op matches central differences over 100 seeds") {
  const double tol = 1e-4;
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    Tensor c = random_tensor({3, 4}, rng);
    Tensor g = random_tensor({2, 3, 2}, rng);
    Tensor h = random_tensor({2, 2, 3}, rng);
    Tensor bias = random_tensor({4}, rng);
    Tensor gamma = random_tensor({4}, rng, true, 0.5, 1.5);
    Tensor beta = random_tensor({4}, rng);
    Tensor proj = random_tensor({3, 4}, rng, false);
    std::vector<int> labels{static_cast<int>(seed % 4), static_cast<int>((seed / 4) % 4), 2};
    std::vector<std::size_t> idx{2, 0, 2};
    auto weighted = [&](const Tensor& t) {
      // A fixed random projection keeps every output element in play.
      Rng pr(seed + 1000);
      return sum(mul(t, random_tensor(t.shape(), pr, false)));
    };
    const std::vector<std::function<Tensor()>> fns = {
        [&] { return weighted(matmul(a, b)); },
        [&] { return weighted(bmm(g, h)); },
        [&] { return weighted(add(a, c)); },
        [&] { return weighted(sub(a, c)); },
        [&] { return weighted(mul(a, c)); },
        [&] { return weighted(scale(a, -1.7)); },
        [&] { return weighted(add_bias(a, bias)); },
        [&] { return weighted(leaky_relu(a, 0.2)); },
        [&] { return weighted(softmax_rows(a)); },
        [&] { return softmax_cross_entropy(a, labels); },
        [&] { return weighted(batch_norm(add(a, proj), gamma, beta)); },
        [&] { return weighted(batch_norm(add(a, proj), gamma, beta, 2)); },
        [&] { return weighted(concat_cols({a, c})); },
        [&] { return weighted(concat_rows({a, c})); },
        [&] { return weighted(gather_rows(a, idx)); },
        [&] { return weighted(slice_rows(a, 1, 3)); },
        [&] { return weighted(slice_cols(a, 1, 3)); },
        [&] { return weighted(reshape(a, {2, 6})); },
        [&] { return mean(mul(a, a)); },
    };
    for (const auto& f : fns) {
      auto r = finite_diff_check(f, {a, b, c, g, h, bias, gamma, beta}, 1e-6);
      worst = std::max(worst, r.max_rel_error);
    }
  }
  CHECK(worst < tol);
}

TEST_CASE("two layer perceptron passes the gradient check") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 50);
    Tensor x = random_tensor({6, 5}, rng, false);
    Tensor w1 = random_tensor({5, 8}, rng), b1 = random_tensor({8}, rng);
    Tensor w2 = random_tensor({8, 3}, rng), b2 = random_tensor({3}, rng);
    std::vector<int> y{0, 1, 2, 0, 1, 2};
    auto f = [&] {
      Tensor h = leaky_relu(add_bias(matmul(x, w1), b1), 0.2);
      return softmax_cross_entropy(add_bias(matmul(h, w2), b2), y);
    };
    CHECK(finite_diff_check(f, {w1, b1, w2, b2}, 1e-6).max_rel_error < 1e-4);
  }
}

TEST_CASE("optimizers") {
  Tensor p = Tensor::from({2}, {1.0, -1.0}, true);
  Optimizer sgd({p}, {OptimizerKind::kSgd, 0.1});
  p.mutable_grad()[0] = 2.0;
  p.mutable_grad()[1] = 0.0;
  sgd.step();
  CHECK(p.at(0) == doctest::Approx(0.8));
  CHECK(p.at(1) == -1.0);
  CHECK(sgd.step_count() == 1);

  Tensor q = Tensor::from({3}, {0.5, 0.5, 0.5}, true);
  Optimizer adam({q}, {OptimizerKind::kAdam, 0.01});
  q.mutable_grad()[0] = 3.0;
  q.mutable_grad()[1] = -0.002;
  q.mutable_grad()[2] = 0.0;
  adam.step();
  // One step: m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps).
  CHECK(q.at(0) == doctest::Approx(0.5 - 0.01 * 3.0 / (3.0 + 1e-8)).epsilon(1e-12));
  CHECK(q.at(1) == doctest::Approx(0.5 + 0.01 * 0.002 / (0.002 + 1e-8)).epsilon(1e-12));
  CHECK(q.at(2) == 0.5);
  CHECK(adam.first_moment(0).size() == 3);
  CHECK(adam.second_moment(0).size() == 3);
  adam.step();
  CHECK(adam.step_count() == 2);

  Tensor never = Tensor::from({1}, {1.0}, true);
  Optimizer bad({never}, {});
  CHECK_THROWS_AS(bad.step(), StateError);

  // Identical state and gradients give identical results.
  auto run = [] {
    Tensor r = Tensor::from({2}, {0.3, 0.7}, true);
    Optimizer o({r}, {OptimizerKind::kAdam, 0.05});
    for (int i = 0; i < 5; ++i) {
      r.zero_grad();
      r.mutable_grad()[0] = 0.1 * i;
      r.mutable_grad()[1] = -0.2;
      o.step();
    }
    return values(r);
  };
  CHECK(run() == run());

  Tensor e = Tensor::from({2}, {1.0, 1.0}, true);
  Optimizer ext({e}, {OptimizerKind::kSgd, 0.5});
  std::vector<double> gvec{2.0, -2.0};
  std::vector<std::span<const double>> grads{gvec};
  ext.step(grads);
  CHECK(values(e) == std::vector<double>{0.0, 2.0});
  CHECK(parse_optimizer_kind("sgd") == OptimizerKind::kSgd);
  CHECK_THROWS_AS(parse_optimizer_kind("rmsprop"), InputError);
}

TEST_CASE("grad mode switch and graph size") {
  Tensor a = Tensor::from({2}, {1, 2}, true);
  {
    NoGradGuard guard;
    Tensor b = mul(a, a);
    CHECK_FALSE(b.requires_grad());
    CHECK(graph_size(b) == 1);
  }
  Tensor c = mul(a, a);
  CHECK(c.requires_grad());
  CHECK(graph_size(sum(c)) == 3);
}

TEST_CASE("checkpoint round trip and errors") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "sbmtl_ckpt_test";
  fs::create_directories(dir);
  Rng rng(9);
  std::vector<NamedTensor> recs{{"w", random_tensor({3, 2}, rng)}, {"b", random_tensor({2}, rng)}};
  save_checkpoint(dir / "a.ckpt", recs);
  auto loaded = load_checkpoint(dir / "a.ckpt");
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].name == "w");
  CHECK(values(loaded[0].tensor) == values(recs[0].tensor));
  CHECK(checksum(loaded) == checksum(recs));

  std::vector<NamedTensor> into{{"w", Tensor::zeros({3, 2})}, {"b", Tensor::zeros({2})}};
  restore_checkpoint(dir / "a.ckpt", into);
  CHECK(values(into[1].tensor) == values(recs[1].tensor));

  std::vector<NamedTensor> wrong{{"w", Tensor::zeros({2, 3})}, {"b", Tensor::zeros({2})}};
  CHECK_THROWS_AS(restore_checkpoint(dir / "a.ckpt", wrong), IoError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), IoError);
  fs::remove_all(dir);
}
