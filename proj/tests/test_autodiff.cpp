// Copyright 2026 the mtvl authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "core/grad_check.hpp"

using namespace mtvl::nc;
using Td = Tensor<double>;

TEST_CASE("d(x^2)/dx at x=3 is 6") {
  auto x = Td::scalar(3.0, /*requires_grad=*/true);
  TapeScope<double> tape;
  auto y = mul(x, x);
  tape.backward(y);
  CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("gradient accumulates additively across multiple uses") {
  auto x = Td::scalar(2.0, true);
  TapeScope<double> tape;
  auto y = add(mul(x, x), x);  // x^2 + x -> dy/dx = 2x + 1 = 5
  tape.backward(y);
  CHECK(x.grad()[0] == doctest::Approx(5.0));
}

TEST_CASE("softmax backward matches the analytic Jacobian row") {
  // loss = softmax(z) . onehot(k) = y_k, so dL/dz_j = y_k (delta_kj - y_j)
  auto z = Td::from_vector({4}, {0.3, -1.0, 2.0, 0.5}, true);
  const int64_t k = 2;
  TapeScope<double> tape;
  auto y = softmax(z, 0);
  auto onehot = Td::from_vector({4}, {0, 0, 1, 0});
  auto loss = sum_all(mul(y, onehot));
  tape.backward(loss);
  const auto& yv = y.values();
  for (int64_t j = 0; j < 4; ++j) {
    double oracle = yv[size_t(k)] * ((j == k ? 1.0 : 0.0) - yv[size_t(j)]);
    CHECK(z.grad()[size_t(j)] == doctest::Approx(oracle).epsilon(1e-12));
  }
}

TEST_CASE("detached tensors receive zero gradient") {
  auto x = Td::scalar(1.5, true);
  TapeScope<double> tape;
  auto d = x.detach();
  CHECK(!d.requires_grad());
  auto y = add(mul(x, x), mul(d, d));  // only the x^2 path carries gradient
  tape.backward(y);
  CHECK(x.grad()[0] == doctest::Approx(3.0));
}

TEST_CASE("backward rejects non-scalar loss") {
  auto x = Td::from_vector({2}, {1, 2}, true);
  TapeScope<double> tape;
  auto y = mul(x, x);
  CHECK_THROWS_AS(tape.backward(y), ContractError);
}

TEST_CASE("no tape means no graph: ops outside a TapeScope are detached") {
  auto x = Td::scalar(2.0, true);
  auto y = mul(x, x);
  CHECK(!y.requires_grad());
}

TEST_CASE("grad_check passes on sum(sin(x))") {
  Rng rng(5);
  auto x = Td::randn({7}, rng, 1.0, true);
  auto report = grad_check([&]() { return sum_all(mtvl::nc::sin(x)); }, {{"x", x}}, 1e-5, 1e-6);
  CHECK(report.pass);
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("grad_check on a constant function gives exactly zero on both sides") {
  auto x = Td::from_vector({3}, {1, 2, 3}, true);
  auto c = Td::scalar(4.0);
  auto report = grad_check([&]() { return add(mul_scalar(sum_all(mul_scalar(x, 0.0)), 1.0), c); },
                           {{"x", x}}, 1e-5, 1e-12);
  CHECK(report.pass);
  CHECK(report.max_rel_err == 0.0);
}

TEST_CASE("grad_check rejects a non-deterministic function") {
  auto x = Td::scalar(1.0, true);
  int calls = 0;
  CHECK_THROWS_AS(grad_check(
                      [&]() {
                        ++calls;
                        return mul_scalar(x, double(calls));
                      },
                      {{"x", x}}),
                  ContractError);
}

TEST_CASE("grad_check covers every elementwise and structural op") {
  Rng rng(17);
  auto x = Td::randn({3, 6}, rng, 0.7, true);
  auto w = Td::randn({6, 4}, rng, 0.5, true);
  auto g = Td::randn({4}, rng, 0.2, true);
  auto b = Td::randn({4}, rng, 0.2, true);

  SUBCASE("matmul+gelu+layer_norm+mean") {
    auto fn = [&]() {
      auto h = layer_norm(gelu(matmul(x, w)), g, b);
      return mean_all(mul(h, h));
    };
    auto rep = grad_check(fn, {{"x", x}, {"w", w}, {"g", g}, {"b", b}}, 1e-5, 1e-7);
    CHECK(rep.pass);
  }
  SUBCASE("sigmoid+div+log+sqrt") {
    auto fn = [&]() {
      auto s = sigmoid(x);
      auto q = div(add_scalar(s, 1.0), add_scalar(mtvl::nc::sqrt(add_scalar(mul(x, x), 1.0)), 0.5));
      return sum_all(mtvl::nc::log(add_scalar(q, 2.0)));
    };
    auto rep = grad_check(fn, {{"x", x}}, 1e-5, 1e-7);
    CHECK(rep.pass);
  }
  SUBCASE("broadcast add + softmax + slice + concat + permute") {
    auto row = Td::randn({1, 6}, rng, 0.3, true);
    auto fn = [&]() {
      auto h = add(x, row);
      auto s = softmax(h, 1);
      auto parts = concat<double>({slice(s, 1, 0, 3), slice(s, 1, 3, 3)}, 1);
      return sum_all(mul(permute(parts, {1, 0}), permute(x, {1, 0})));
    };
    auto rep = grad_check(fn, {{"x", x}, {"row", row}}, 1e-5, 1e-7);
    CHECK(rep.pass);
  }
  SUBCASE("min/max with distinct values") {
    auto y2 = Td::randn({3, 6}, rng, 0.9, true);
    auto fn = [&]() {
      return sum_all(add(mul(minimum(x, y2), x), mul(maximum(x, y2), y2)));
    };
    auto rep = grad_check(fn, {{"x", x}, {"y2", y2}}, 1e-6, 1e-6);
    CHECK(rep.pass);
  }
  SUBCASE("reductions along axes") {
    auto fn = [&]() { return sum_all(mul(mean_axis(mul(x, x), 1), sum_axis(x, 1))); };
    auto rep = grad_check(fn, {{"x", x}}, 1e-5, 1e-7);
    CHECK(rep.pass);
  }
}

TEST_CASE("grad_check covers conv, pooling, upsampling, norms, lookup") {
  Rng rng(23);
  SUBCASE("conv2d + group_norm + pooling chain") {
    auto img = Td::randn({2, 6, 6, 3}, rng, 0.5, true);
    auto w = Td::randn({3 * 3 * 3, 4}, rng, 0.3, true);
    auto bias = Td::randn({4}, rng, 0.1, true);
    auto gg = Td::randn({4}, rng, 0.2, true);
    auto gb = Td::randn({4}, rng, 0.2, true);
    auto fn = [&]() {
      auto h = conv2d(img, w, bias, 3, 3, 2, 1);       // [2,3,3,4]
      h = group_norm(h, 2, gg, gb);
      h = adaptive_avg_pool2d(h, 2, 2);
      h = upsample_bilinear(h, 3, 3);
      return mean_all(mul(h, h));
    };
    auto rep = grad_check(fn, {{"img", img}, {"w", w}, {"b", bias}, {"gg", gg}, {"gb", gb}},
                          1e-5, 1e-6);
    CHECK(rep.pass);
  }
  SUBCASE("embedding + gather + select + log_softmax") {
    auto table = Td::randn({5, 4}, rng, 0.5, true);
    auto fn = [&]() {
      auto e = embedding(table, {0, 3, 3, 1});
      auto lp = log_softmax(e, 1);
      auto picked = select_last_index(lp, {1, 0, 2, 3});
      return mean_all(picked);
    };
    auto rep = grad_check(fn, {{"table", table}}, 1e-5, 1e-7);
    CHECK(rep.pass);
  }
  SUBCASE("bmm family and expand_leading") {
    auto a = Td::randn({2, 3, 4}, rng, 0.4, true);
    auto bb = Td::randn({2, 5, 4}, rng, 0.4, true);
    auto lhs2 = Td::randn({1, 3}, rng, 0.4, true);
    auto fn = [&]() {
      auto s = bmm_nt(a, bb);                    // [2,3,5]
      auto t = bmm(a, permute(bb, {0, 2, 1}));   // [2,3,5]
      auto u = add(s, t);
      auto e = expand_leading(lhs2, 2);          // [2,3]
      auto v = bmm(reshape(e, {2, 1, 3}), u);    // [2,1,5]
      return sum_all(mul(v, v));
    };
    auto rep = grad_check(fn, {{"a", a}, {"b", bb}, {"lhs2", lhs2}}, 1e-5, 1e-7);
    CHECK(rep.pass);
  }
  SUBCASE("bce_with_logits") {
    auto z = Td::randn({6}, rng, 1.0, true);
    auto t = Td::from_vector({6}, {1, 0, 1, 1, 0, 0});
    auto rep = grad_check([&]() { return bce_with_logits(z, t); }, {{"z", z}}, 1e-5, 1e-8);
    CHECK(rep.pass);
  }
}
