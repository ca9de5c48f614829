// Copyright 2026 the mtvl authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "core/nn_ops.hpp"

using namespace mtvl::nc;
using Tf = Tensor<float>;
using Td = Tensor<double>;

TEST_CASE("matmul identity") {
  auto a = Tf::from_vector({2, 2}, {1, 2, 3, 4});
  auto eye = Tf::from_vector({2, 2}, {1, 0, 0, 1});
  auto c = matmul(a, eye);
  CHECK(c.values() == std::vector<float>{1, 2, 3, 4});
}

TEST_CASE("matmul rejects mismatched inner dims with shapes in message") {
  auto a = Tf::zeros({2, 3});
  auto b = Tf::zeros({2, 2});
  try {
    matmul(a, b);
    FAIL("expected ContractError");
  } catch (const ContractError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[2,2]") != std::string::npos);
  }
}

TEST_CASE("softmax symmetry and simplex invariants") {
  auto z = Td::from_vector({2}, {0, 0});
  auto y = softmax(z, 0);
  CHECK(y.values()[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(y.values()[1] == doctest::Approx(0.5).epsilon(1e-12));

  Rng rng(7);
  auto x = Td::randn({5, 9}, rng);
  auto s = softmax(x, 1);
  for (int64_t r = 0; r < 5; ++r) {
    double sum = 0;
    for (int64_t c = 0; c < 9; ++c) sum += s.at({r, c});
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
  // invariance to adding a constant along the softmax axis
  auto shifted = softmax(add_scalar(x, 13.5), 1);
  for (size_t i = 0; i < s.values().size(); ++i)
    CHECK(std::abs(s.values()[i] - shifted.values()[i]) < 1e-6);
}

TEST_CASE("softmax over a non-trailing axis") {
  auto x = Td::from_vector({2, 2}, {1, 5, 3, 2});
  auto s = softmax(x, 0);
  for (int64_t c = 0; c < 2; ++c) {
    double sum = s.at({0, c}) + s.at({1, c});
    CHECK(sum == doctest::Approx(1.0));
  }
  CHECK(s.at({1, 0}) > s.at({0, 0}));  // 3 > 1
  CHECK(s.at({0, 1}) > s.at({1, 1}));  // 5 > 2
}

TEST_CASE("adaptive average pooling of a constant map is constant") {
  auto x = Tf::filled({56, 56}, 3.25f);
  auto p = adaptive_avg_pool2d(x, 28, 28);
  CHECK(p.shape() == Shape{28, 28});
  for (float v : p.values()) CHECK(v == doctest::Approx(3.25f));
  // enlarging target is also legal (cells are duplicated)
  auto q = adaptive_avg_pool2d(x, 64, 64);
  for (float v : q.values()) CHECK(v == doctest::Approx(3.25f));
}

TEST_CASE("adaptive average pooling averages the right buckets") {
  auto x = Td::from_vector({2, 4}, {0, 1, 2, 3, 4, 5, 6, 7});
  auto p = adaptive_avg_pool2d(x, 1, 2);
  CHECK(p.at({0, 0}) == doctest::Approx((0 + 1 + 4 + 5) / 4.0));
  CHECK(p.at({0, 1}) == doctest::Approx((2 + 3 + 6 + 7) / 4.0));
}

TEST_CASE("broadcast allowed only over leading singleton dims") {
  auto big = Tf::filled({3, 2}, 1.0f);
  auto row = Tf::from_vector({1, 2}, {10, 20});
  auto ok = add(big, row);
  CHECK(ok.at({2, 1}) == doctest::Approx(21.0f));

  auto col = Tf::from_vector({3, 1}, {1, 2, 3});
  CHECK_THROWS_AS(add(big, col), ContractError);  // trailing singleton: explicit reshape required
}

TEST_CASE("reshape aliases and infers -1") {
  auto x = Tf::from_vector({2, 3}, {0, 1, 2, 3, 4, 5});
  auto r = reshape(x, {3, -1});
  CHECK(r.shape() == Shape{3, 2});
  CHECK(r.at({2, 1}) == 5.0f);
  CHECK_THROWS_AS(reshape(x, {4, 2}), ContractError);
}

TEST_CASE("concat and slice round trip") {
  auto a = Tf::from_vector({2, 2}, {1, 2, 3, 4});
  auto b = Tf::from_vector({1, 2}, {5, 6});
  auto c = concat<float>({a, b}, 0);
  CHECK(c.shape() == Shape{3, 2});
  auto s = slice(c, 0, 2, 1);
  CHECK(s.values() == std::vector<float>{5, 6});
  auto d = concat<float>({a, a}, 1);
  CHECK(d.shape() == Shape{2, 4});
  CHECK(d.at({1, 3}) == 4.0f);
}

TEST_CASE("permute matches manual transpose") {
  auto x = Td::from_vector({2, 3}, {0, 1, 2, 3, 4, 5});
  auto t = transpose2d(x);
  CHECK(t.shape() == Shape{3, 2});
  CHECK(t.at({0, 1}) == 3.0);
  CHECK(t.at({2, 0}) == 2.0);

  auto y = Td::from_vector({2, 2, 2}, {0, 1, 2, 3, 4, 5, 6, 7});
  auto p = permute(y, {2, 0, 1});
  CHECK(p.at({1, 0, 1}) == y.at({0, 1, 1}));
  CHECK(p.at({0, 1, 0}) == y.at({1, 0, 0}));
}

TEST_CASE("bilinear upsample preserves constants and interpolates") {
  auto c = Tf::filled({4, 4}, 2.0f);
  auto u = upsample_bilinear(c, 8, 8);
  for (float v : u.values()) CHECK(v == doctest::Approx(2.0f));

  auto x = Td::from_vector({1, 2}, {0.0, 1.0});
  auto w = upsample_bilinear(x, 1, 4);
  CHECK(w.at({0, 0}) == doctest::Approx(0.0));
  CHECK(w.at({0, 3}) == doctest::Approx(1.0));
  CHECK(w.at({0, 1}) < w.at({0, 2}));
}

TEST_CASE("embedding and gather_rows pick the right rows") {
  auto table = Tf::from_vector({3, 2}, {0, 1, 10, 11, 20, 21});
  auto e = embedding(table, {2, 0, 2});
  CHECK(e.shape() == Shape{3, 2});
  CHECK(e.values() == std::vector<float>{20, 21, 0, 1, 20, 21});
  CHECK_THROWS_AS(embedding(table, {3}), ContractError);

  auto g = gather_rows(e, {1});
  CHECK(g.values() == std::vector<float>{0, 1});
}

TEST_CASE("conv2d matches a hand-computed case") {
  // 1x3x3x1 input, 2x2 kernel, stride 1, no pad
  auto x = Td::from_vector({1, 3, 3, 1}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  auto w = Td::from_vector({4, 1}, {1, 0, 0, 1});  // picks top-left + bottom-right
  auto out = conv2d(x, w, Td(), 2, 2, 1, 0);
  CHECK(out.shape() == Shape{1, 2, 2, 1});
  CHECK(out.at({0, 0, 0, 0}) == doctest::Approx(1 + 5));
  CHECK(out.at({0, 1, 1, 0}) == doctest::Approx(5 + 9));
}

TEST_CASE("conv2d stride-2 halves spatial extent with padding") {
  auto x = Td::zeros({2, 8, 8, 3});
  Rng rng(3);
  for (auto& v : x.values()) v = rng.normal();
  auto w = Td::randn({3 * 3 * 3, 5}, rng, 0.1);
  auto b = Td::randn({5}, rng, 0.1);
  auto out = conv2d(x, w, b, 3, 3, 2, 1);
  CHECK(out.shape() == Shape{2, 4, 4, 5});
}

TEST_CASE("ops are deterministic for identical inputs and seeds") {
  Rng r1(11), r2(11);
  auto a1 = Td::randn({4, 4}, r1);
  auto a2 = Td::randn({4, 4}, r2);
  CHECK(a1.values() == a2.values());
  auto s1 = softmax(matmul(a1, a1), 1);
  auto s2 = softmax(matmul(a2, a2), 1);
  CHECK(s1.values() == s2.values());
}

TEST_CASE("finite checks flag NaN in verification mode") {
  FiniteCheckScope on;
  CHECK_THROWS_AS(Td::from_vector({1}, {std::nan("")}), NumericFault);
  auto x = Td::from_vector({1}, {-1.0});
  CHECK_THROWS_AS(mtvl::nc::log(x), NumericFault);
}

TEST_CASE("bce_with_logits matches direct formula") {
  auto x = Td::from_vector({3}, {0.5, -1.2, 2.0});
  auto t = Td::from_vector({3}, {1.0, 0.0, 1.0});
  auto l = bce_with_logits(x, t);
  double want = 0.0;
  for (int i = 0; i < 3; ++i) {
    double z = x.values()[i], y = t.values()[i];
    double p = 1.0 / (1.0 + std::exp(-z));
    want += -(y * std::log(p) + (1 - y) * std::log(1 - p));
  }
  want /= 3.0;
  CHECK(l.item() == doctest::Approx(want).epsilon(1e-12));
}
