// Copyright 2026 The sbmtl Authors
// SPDX-License-Identifier: Apache-2.0

#include <vector>

#include "doctest.h"
#include "sbmtl/common/errors.hpp"
#include "sbmtl/encoder/encoder.hpp"
#include "sbmtl/numerics/gradcheck.hpp"
#include "sbmtl/numerics/ops.hpp"
#include "sbmtl/numerics/optimizer.hpp"
#include "support/helpers.hpp"

using namespace sbmtl;
using namespace sbmtl::encoder;
using namespace sbmtl::numerics;
using sbmtl::testing::random_tensor;
using sbmtl::testing::values;

namespace {

EncoderConfig small_config(std::size_t k = 1) {
  EncoderConfig c;
  c.input_shape = {2, 3, 3};
  c.blocks = {{8, true, false, true}, {8, true, true, true}, {8, true, true, true}, {8, true, true, true}};
  c.tunable_blocks = k;
  return c;
}

}  // namespace

TEST_CASE("config validation and defaults") {
  EncoderConfig d = EncoderConfig::desk_default();
  CHECK(d.block_count() == 4);
  CHECK(d.feature_dim() == 64);
  CHECK(d.input_dim() == 768);
  CHECK(d.tunable_blocks == 1);
  d.tunable_blocks = 5;
  CHECK_THROWS_AS(d.validate(), InputError);
  EncoderConfig r = small_config();
  r.blocks[1].width = 4;
  CHECK_THROWS_AS(r.validate(), InputError);
}

TEST_CASE("encode shape, determinism and input check") {
  EncoderState s(small_config(), 5, 1);
  Rng rng(1);
  Tensor x = random_tensor({6, 18}, rng, false);
  Tensor f = encode(s, x);
  CHECK(f.shape() == Shape{6, 8});
  std::vector<double> dup = values(x);
  std::copy(dup.begin(), dup.begin() + 18, dup.begin() + 18);
  Tensor g = encode(s, Tensor::from({6, 18}, dup));
  for (std::size_t c = 0; c < 8; ++c) CHECK(g.at(c) == g.at(8 + c));
  CHECK(values(encode(s, x)) == values(f));
  CHECK_THROWS_AS(encode(s, Tensor::zeros({6, 17})), DimensionError);
}

TEST_CASE("residual block with zero weights passes its input through") {
  EncoderConfig c = small_config();
  c.blocks[1].batch_norm = false;
  EncoderState s(c, 3, 2);
  for (double& v : const_cast<Tensor&>(s.blocks()[1].weight).data()) v = 0.0;
  Rng rng(4);
  Tensor h = random_tensor({5, 8}, rng, false);
  CHECK(values(s.forward_blocks(h, 1, 2)) == values(h));
}

TEST_CASE("classify is affine and produces raw scores") {
  EncoderState s(small_config(), 5, 3);
  Tensor w = s.head().weight;
  for (double& v : w.data()) v = 0.0;
  Tensor b = s.head().bias;
  for (std::size_t i = 0; i < 5; ++i) b.data()[i] = static_cast<double>(i) - 1.5;
  Rng rng(2);
  Tensor feats = random_tensor({4, 8}, rng, false);
  Tensor scores = classify(s, feats);
  CHECK(scores.shape() == Shape{4, 5});
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t j = 0; j < 5; ++j) CHECK(scores.at(r * 5 + j) == b.at(j));

  EncoderState t(small_config(), 5, 4);
  Tensor sc = classify(t, feats);
  Tensor sm = softmax_rows(sc);
  bool differ = false;
  for (std::size_t r = 0; r < 4; ++r) {
    std::size_t a1 = 0, a2 = 0;
    for (std::size_t j = 1; j < 5; ++j) {
      if (sc.at(r * 5 + j) > sc.at(r * 5 + a1)) a1 = j;
      if (sm.at(r * 5 + j) > sm.at(r * 5 + a2)) a2 = j;
      differ = differ || sc.at(r * 5 + j) != sm.at(r * 5 + j);
    }
    CHECK(a1 == a2);
  }
  CHECK(differ);
}

TEST_CASE("split params partitions blocks and head") {
  for (std::size_t k = 0; k <= 4; ++k) {
    EncoderState s(small_config(k), 5, 1);
    ParamSplit p = split_params(s);
    CHECK(p.frozen.size() + p.tunable.size() == s.parameters().size());
    CHECK(p.frozen.size() == 3 * (4 - k));
    CHECK(p.tunable.back().same_node(s.head().bias));
    for (const Tensor& f : p.frozen)
      for (const Tensor& t : p.tunable) CHECK_FALSE(f.same_node(t));
  }
  EncoderState s0(small_config(0), 5, 1);
  CHECK(split_params(s0).tunable.size() == 2);
  EncoderState s4(small_config(4), 5, 1);
  CHECK(split_params(s4).frozen.empty());
  EncoderState s1(small_config(1), 5, 1);
  CHECK(split_params(s1).frozen.size() == s1.block_parameters(0, 3).size());
}

TEST_CASE("clones are independent deep copies") {
  EncoderState base(small_config(), 5, 7);
  const auto before = checksum(base.named_parameters(""));
  Rng rng(8);
  Tensor x = random_tensor({10, 18}, rng, false);
  std::vector<int> y{0, 1, 2, 3, 4, 0, 1, 2, 3, 4};

  EncoderState a = clone_for_episode(base);
  CHECK(values(classify(a, encode(a, x))) == values(classify(base, encode(base, x))));

  auto tune = [&](EncoderState& s, const Tensor& xs) {
    auto params = split_params(s).tunable;
    Optimizer opt(params, {OptimizerKind::kAdam, 0.01});
    for (int i = 0; i < 5; ++i) {
      opt.zero_grad();
      backward(softmax_cross_entropy(classify(s, encode(s, xs)), y));
      opt.step();
    }
  };
  EncoderState b = clone_for_episode(base);
  tune(a, x);
  tune(b, random_tensor({10, 18}, rng, false));
  CHECK(checksum(base.named_parameters("")) == before);
  CHECK(checksum(a.named_parameters("")) != checksum(b.named_parameters("")));
  CHECK(checksum(a.block_parameters(0, 3)) == checksum(base.block_parameters(0, 3)));
}

TEST_CASE("transductive context changes statistics, not the returned rows") {
  EncoderState s(small_config(), 5, 9);
  Rng rng(10);
  Tensor x = random_tensor({6, 18}, rng, false, 0, 1);
  Tensor ctx = random_tensor({6, 18}, rng, false, 3, 5);
  Tensor plain = encode(s, x);
  Tensor trans = encode(s, x, ctx);
  CHECK(trans.shape() == plain.shape());
  CHECK(values(trans) != values(plain));
}

TEST_CASE("encoder is permutation equivariant over the batch") {
  EncoderState s(small_config(), 5, 12);
  Rng rng(13);
  Tensor x = random_tensor({7, 18}, rng, false);
  std::vector<std::size_t> perm{3, 0, 6, 1, 5, 2, 4};
  Tensor out = classify(s, encode(s, x));
  Tensor pout = classify(s, encode(s, gather_rows(x, perm)));
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      CHECK(pout.at(i * 5 + j) == doctest::Approx(out.at(perm[i] * 5 + j)).epsilon(1e-12));
}

TEST_CASE("encoder gradients match central differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    EncoderState s(small_config(2), 3, seed);
    Rng rng(seed + 100);
    Tensor x = random_tensor({6, 18}, rng, false);
    std::vector<int> y{0, 1, 2, 0, 1, 2};
    auto r = finite_diff_check([&] { return softmax_cross_entropy(classify(s, encode(s, x)), y); },
                               s.parameters(), 1e-6);
    CHECK(r.max_rel_error < 1e-4);
  }
}
