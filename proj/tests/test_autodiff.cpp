// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>

#include "core/rng.h"
#include "nn/ops.h"

using namespace gsav;
using nn::Value;

namespace {

// Central-difference gradient check of a scalar-valued graph builder against
// the tape. float32 throughout, so tolerances are loose but meaningful.
void check_grads(const std::function<Value()>& build, std::vector<Value> leaves,
                 float h = 1e-2f, float rtol = 3e-2f, float atol = 2e-3f) {
  for (auto& l : leaves)
    if (l->grad.defined()) l->grad.zero();
  Value loss = build();
  nn::backward(loss);
  for (auto& leaf : leaves) {
    REQUIRE(leaf->grad.defined());
    for (int64_t i = 0; i < leaf->val.numel(); ++i) {
      const float old = leaf->val[i];
      leaf->val[i] = old + h;
      const float fp = build()->val.item();
      leaf->val[i] = old - h;
      const float fm = build()->val.item();
      leaf->val[i] = old;
      const float num = (fp - fm) / (2 * h);
      const float ana = leaf->grad[i];
      const float tol = atol + rtol * std::max(std::abs(num), std::abs(ana));
      INFO("elem ", i, " analytic ", ana, " numeric ", num);
      CHECK(std::abs(num - ana) <= tol);
    }
  }
}

Value leaf(std::vector<int> shape, uint64_t seed, float scale = 1.0f) {
  Rng rng(seed);
  return nn::make_leaf(Tensor::randn(std::move(shape), rng, scale));
}

}  // namespace

TEST_CASE("elementwise op gradients") {
  Value a = leaf({3, 4}, 1, 0.7f);
  Value b = leaf({3, 4}, 2, 0.7f);
  check_grads([&] { return nn::mean_all(nn::mul(nn::silu(a), nn::tanh_v(b))); }, {a, b});
  check_grads([&] { return nn::mean_all(nn::sigmoid_v(nn::sub(a, b))); }, {a, b});
  check_grads([&] { return nn::mse(nn::exp_v(nn::affine(a, 0.3f, 0.1f)), b); }, {a, b});
}

TEST_CASE("matmul gradients across transpose flags") {
  Value a = leaf({4, 3}, 3, 0.5f);
  Value b = leaf({3, 5}, 4, 0.5f);
  check_grads([&] { return nn::mean_all(nn::matmul(a, b)); }, {a, b});
  Value at = leaf({3, 4}, 5, 0.5f);
  check_grads([&] { return nn::mean_all(nn::matmul(at, b, true, false)); }, {at, b});
  Value bt = leaf({5, 3}, 6, 0.5f);
  check_grads([&] { return nn::mean_all(nn::matmul(a, bt, false, true)); }, {a, bt});
  check_grads([&] { return nn::mean_all(nn::matmul(at, bt, true, true)); }, {at, bt});
}

TEST_CASE("bias and shape-movement gradients") {
  Value x = leaf({6, 4}, 7, 0.5f);
  Value b = leaf({4}, 8, 0.5f);
  check_grads([&] { return nn::mean_all(nn::tanh_v(nn::add_row_bias(x, b))); }, {x, b});

  Value n4 = leaf({2, 3, 4, 4}, 9, 0.5f);
  Value cb = leaf({3}, 10, 0.5f);
  check_grads([&] { return nn::mse(nn::add_channel_bias(n4, cb), nn::make_const(Tensor::zeros({2,3,4,4}))); },
              {n4, cb});

  check_grads([&] { return nn::mean_all(nn::tanh_v(nn::concat_cols(x, x))); }, {x});
  check_grads([&] { return nn::mean_all(nn::tanh_v(nn::slice_rows(x, 1, 3))); }, {x});
  check_grads([&] { return nn::mean_all(nn::tanh_v(nn::gather_rows(x, {0, 2, 2, 5}))); }, {x});
}

TEST_CASE("conv2d gradients") {
  Value x = leaf({2, 3, 6, 6}, 11, 0.5f);
  Value w = leaf({4, 3, 3, 3}, 12, 0.3f);
  Value b = leaf({4}, 13, 0.3f);
  check_grads([&] { return nn::mean_all(nn::tanh_v(nn::conv2d(x, w, b, 1, 1))); },
              {x, w, b});
  check_grads([&] { return nn::mean_all(nn::tanh_v(nn::conv2d(x, w, b, 2, 1))); },
              {x, w, b});
}

TEST_CASE("pool and upsample gradients") {
  Value x = leaf({2, 3, 4, 4}, 14, 0.5f);
  check_grads([&] { return nn::mean_all(nn::tanh_v(nn::avgpool2(x))); }, {x});
  check_grads([&] { return nn::mean_all(nn::tanh_v(nn::upsample_nearest2(x))); }, {x});
}

TEST_CASE("normalization gradients") {
  Value x = leaf({5, 6}, 15, 0.8f);
  Value g = leaf({6}, 16, 0.3f);
  Value b = leaf({6}, 17, 0.3f);
  check_grads([&] { return nn::mean_all(nn::tanh_v(nn::layer_norm(x, g, b))); },
              {x, g, b});

  Value x4 = leaf({2, 4, 3, 3}, 18, 0.8f);
  Value g4 = leaf({4}, 19, 0.3f);
  Value b4 = leaf({4}, 20, 0.3f);
  check_grads([&] { return nn::mean_all(nn::tanh_v(nn::group_norm(x4, 2, g4, b4))); },
              {x4, g4, b4});

  check_grads([&] { return nn::mean_all(nn::tanh_v(nn::normalize_channels(x4))); }, {x4});
}

TEST_CASE("attention gradients, single and multi head") {
  Value q = leaf({5, 8}, 21, 0.5f);
  Value k = leaf({7, 8}, 22, 0.5f);
  Value v = leaf({7, 8}, 23, 0.5f);
  check_grads([&] { return nn::mean_all(nn::tanh_v(nn::attention(q, k, v, 1))); },
              {q, k, v});
  check_grads([&] { return nn::mean_all(nn::tanh_v(nn::attention(q, k, v, 2))); },
              {q, k, v});
}

TEST_CASE("stack, scatter and scalar-scale gradients") {
  Value a = leaf({3, 2, 2}, 24, 0.5f);
  Value b = leaf({3, 2, 2}, 25, 0.5f);
  check_grads([&] { return nn::mean_all(nn::tanh_v(nn::stack_batch({a, b}))); }, {a, b});

  Value rows = leaf({3, 4}, 26, 0.5f);
  check_grads(
      [&] { return nn::mean_all(nn::tanh_v(nn::rows_to_channel_map(rows, {1, 4, 6}, 8))); },
      {rows});

  Value s = leaf({1}, 27, 0.5f);
  check_grads([&] { return nn::mean_all(nn::tanh_v(nn::scale_by(rows, s))); }, {rows, s});
}

TEST_CASE("weighted_sum combines scalar gradients") {
  Value a = leaf({2, 2}, 28, 0.5f);
  Value b = leaf({2, 2}, 29, 0.5f);
  check_grads(
      [&] {
        return nn::weighted_sum(
            {{0.7f, nn::mean_all(nn::mul(a, a))}, {1.3f, nn::mse(a, b)}});
      },
      {a, b});
}

TEST_CASE("backward accumulates across shared subgraphs") {
  Value a = leaf({2, 2}, 30, 0.5f);
  check_grads([&] { return nn::mean_all(nn::mul(a, a)); }, {a});
  // Same leaf used through two paths.
  check_grads([&] { return nn::mean_all(nn::add(nn::tanh_v(a), nn::silu(a))); }, {a});
}

TEST_CASE("no-grad mode builds no tape") {
  Value a = leaf({2, 2}, 31);
  nn::NoGradGuard ng;
  Value y = nn::mul(a, a);
  CHECK_FALSE(y->requires_grad);
  CHECK(y->parents.empty());
}
