#include <doctest.h>

#include <cmath>

#include "nsf/gradcheck.hpp"
#include "nsf/graph.hpp"
#include "nsf/rng.hpp"

using namespace nsf;

TEST_SUITE_BEGIN("diffcore");

TEST_CASE("square function value and gradient") {
  GraphD g;
  auto x = g.param(Tensor<double>::scalar(3.0));
  auto y = g.mul(x, x);
  CHECK(g.value(y)[0] == doctest::Approx(9.0));
  g.backward(y);
  CHECK((*g.grad(x))[0] == doctest::Approx(6.0));
}

TEST_CASE("stop_gradient blocks one factor") {
  GraphD g;
  auto x = g.param(Tensor<double>::scalar(3.0));
  auto y = g.mul(g.stop_gradient(x), x);
  CHECK(g.value(y)[0] == doctest::Approx(9.0));
  g.backward(y);
  CHECK((*g.grad(x))[0] == doctest::Approx(3.0));
}

TEST_CASE("sigmoid at zero") {
  GraphD g;
  auto x = g.param(Tensor<double>::scalar(0.0));
  auto y = g.sigmoid(x);
  CHECK(g.value(y)[0] == doctest::Approx(0.5));
  g.backward(y);
  CHECK((*g.grad(x))[0] == doctest::Approx(0.25));
}

TEST_CASE("check_gradients on sum of squares") {
  auto build = [](GraphD& g, GraphD::Id x) { return g.sum(g.mul(x, x)); };
  const auto report = check_gradients<double>(build, Tensor<double>::from({3}, {1, 2, 3}), 1e-5);
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("check_gradients on relu away from the kink") {
  auto build = [](GraphD& g, GraphD::Id x) { return g.sum(g.relu(x)); };
  const auto report = check_gradients<double>(build, Tensor<double>::from({1}, {0.5}), 1e-5);
  CHECK(report.max_rel_error < 1e-9);
}

TEST_CASE("relu gradient at exactly zero is zero") {
  GraphD g;
  auto x = g.param(Tensor<double>::scalar(0.0));
  auto y = g.sum(g.relu(x));
  g.backward(y);
  CHECK((*g.grad(x))[0] == 0.0);
}

TEST_CASE("every primitive matches central differences at non-singular points") {
  Rng rng(42);
  auto rand_tensor = [&](std::vector<int64_t> shape, double lo, double hi) {
    Tensor<double> t = Tensor<double>::zeros(shape);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
  };

  SUBCASE("add/sub/mul/div full") {
    Tensor<double> other = rand_tensor({4, 3}, 0.5, 2.0);
    for (int which = 0; which < 4; ++which) {
      auto build = [&](GraphD& g, GraphD::Id x) {
        auto o = g.constant(other);
        GraphD::Id y;
        switch (which) {
          case 0: y = g.add(x, o); break;
          case 1: y = g.sub(x, o); break;
          case 2: y = g.mul(x, o); break;
          default: y = g.div(x, o);
        }
        return g.sum(g.mul(y, y));
      };
      const auto r = check_gradients<double>(build, rand_tensor({4, 3}, 0.5, 2.0), 1e-6);
      CHECK_MESSAGE(r.max_rel_error < 1e-5, "binary op ", which);
    }
  }

  SUBCASE("row and bias broadcasts, both sides") {
    Tensor<double> big = rand_tensor({5, 4}, 0.5, 2.0);
    auto build_row = [&](GraphD& g, GraphD::Id x) {
      auto b = g.param(big);
      auto y = g.mul(b, x);           // [5,4] * [5]
      auto z = g.div(b, x);           // [5,4] / [5]
      return g.sum(g.add(y, z));
    };
    CHECK(check_gradients<double>(build_row, rand_tensor({5}, 0.5, 2.0), 1e-6).max_rel_error < 1e-5);
    auto build_row_lhs = [&](GraphD& g, GraphD::Id x) {
      auto w = g.constant(rand_tensor({5}, 0.5, 2.0));
      return g.sum(g.mul(x, w));
    };
    CHECK(check_gradients<double>(build_row_lhs, big, 1e-6).max_rel_error < 1e-5);
    auto build_bias = [&](GraphD& g, GraphD::Id x) {
      auto b = g.constant(big);
      return g.sum(g.mul(g.add(b, x), g.add(b, x)));  // bias add
    };
    CHECK(check_gradients<double>(build_bias, rand_tensor({4}, -1.0, 1.0), 1e-6).max_rel_error < 1e-5);
  }

  SUBCASE("matmul both arguments") {
    Tensor<double> w = rand_tensor({3, 2}, -1.0, 1.0);
    auto build_x = [&](GraphD& g, GraphD::Id x) {
      auto y = g.matmul(x, g.constant(w));
      return g.sum(g.mul(y, y));
    };
    CHECK(check_gradients<double>(build_x, rand_tensor({4, 3}, -1.0, 1.0), 1e-6).max_rel_error < 1e-5);
    Tensor<double> xin = rand_tensor({4, 3}, -1.0, 1.0);
    auto build_w = [&](GraphD& g, GraphD::Id wv) {
      auto y = g.matmul(g.constant(xin), wv);
      return g.sum(g.mul(y, y));
    };
    CHECK(check_gradients<double>(build_w, w, 1e-6).max_rel_error < 1e-5);
  }

  SUBCASE("unary ops") {
    auto point = rand_tensor({6}, 0.3, 1.5);  // positive, away from kinks
    auto make = [&](int which) {
      return [which](GraphD& g, GraphD::Id x) {
        GraphD::Id y;
        switch (which) {
          case 0: y = g.relu(x); break;
          case 1: y = g.sigmoid(x); break;
          case 2: y = g.abs(x); break;
          case 3: y = g.power(x, 2.0); break;
          case 4: y = g.power(x, 1.7); break;
          case 5: y = g.add_scalar(x, 0.7); break;
          case 6: y = g.mul_scalar(x, -1.3); break;
          default: y = g.rsub_scalar(2.0, x);
        }
        return g.mean(g.mul(y, y));
      };
    };
    for (int which = 0; which < 8; ++which)
      CHECK_MESSAGE(check_gradients<double>(make(which), point, 1e-6).max_rel_error < 1e-5,
                    "unary op ", which);
  }

  SUBCASE("lerp full and row weight") {
    Tensor<double> a = rand_tensor({4, 3}, 0.0, 1.0);
    Tensor<double> b = rand_tensor({4, 3}, 0.0, 1.0);
    auto build_w = [&](GraphD& g, GraphD::Id w) {
      auto y = g.lerp(g.param(a), g.param(b), w);
      return g.sum(g.mul(y, y));
    };
    CHECK(check_gradients<double>(build_w, rand_tensor({4}, 0.1, 0.9), 1e-6).max_rel_error < 1e-5);
    auto build_a = [&](GraphD& g, GraphD::Id av) {
      auto y = g.lerp(av, g.constant(b), g.constant(rand_tensor({4, 3}, 0.1, 0.9)));
      return g.sum(g.mul(y, y));
    };
    CHECK(check_gradients<double>(build_a, a, 1e-6).max_rel_error < 1e-5);
  }

  SUBCASE("gather, gather_rows, concat") {
    auto idx = std::make_shared<std::vector<int64_t>>(std::vector<int64_t>{0, 2, 2, 5, 1});
    auto build_gather = [&](GraphD& g, GraphD::Id x) {
      auto y = g.gather(x, idx, {5});
      return g.sum(g.mul(y, y));
    };
    CHECK(check_gradients<double>(build_gather, rand_tensor({6}, -1.0, 1.0), 1e-6).max_rel_error < 1e-5);

    auto rows = std::make_shared<std::vector<int32_t>>(std::vector<int32_t>{1, 0, 1, 3});
    auto build_rows = [&](GraphD& g, GraphD::Id t) {
      auto y = g.gather_rows(t, rows);
      return g.sum(g.mul(y, y));
    };
    CHECK(check_gradients<double>(build_rows, rand_tensor({4, 2}, -1.0, 1.0), 1e-6).max_rel_error < 1e-5);

    auto build_concat = [&](GraphD& g, GraphD::Id x) {
      auto other = g.constant(rand_tensor({3, 2}, -1.0, 1.0));
      auto y = g.concat_cols({x, other, x});
      return g.sum(g.mul(y, y));
    };
    CHECK(check_gradients<double>(build_concat, rand_tensor({3}, -1.0, 1.0), 1e-6).max_rel_error < 1e-5);
  }
}

TEST_CASE("gather backward accumulates repeated indices") {
  GraphD g;
  auto table = g.param(Tensor<double>::from({4}, {1, 2, 3, 4}));
  auto idx = std::make_shared<std::vector<int64_t>>(std::vector<int64_t>{2, 2, 2});
  auto y = g.sum(g.gather(table, idx, {3}));
  g.backward(y);
  const auto& grad = *g.grad(table);
  CHECK(grad[2] == doctest::Approx(3.0));  // read 3 times with upstream 1
  CHECK(grad[0] == 0.0);
}

TEST_CASE("gather_rows scatter accumulates rows") {
  GraphD g;
  auto table = g.param(Tensor<double>::from({3, 2}, {1, 2, 3, 4, 5, 6}));
  auto rows = std::make_shared<std::vector<int32_t>>(std::vector<int32_t>{1, 1});
  auto y = g.sum(g.gather_rows(table, rows));
  g.backward(y);
  const auto& grad = *g.grad(table);
  CHECK(grad[2] == doctest::Approx(2.0));
  CHECK(grad[3] == doctest::Approx(2.0));
  CHECK(grad[0] == 0.0);
}

TEST_CASE("replay is bit-identical and tracks leaf updates") {
  Rng rng(7);
  Tensor<float> x = Tensor<float>::zeros({32});
  for (int64_t i = 0; i < 32; ++i) x[i] = static_cast<float>(rng.uniform(-1, 1));
  GraphF g;
  auto xid = g.param(x);
  auto y = g.mean(g.sigmoid(g.mul_scalar(g.add_scalar(xid, 0.25f), 3.0f)));
  const float first = g.value(y)[0];
  g.replay();
  CHECK(g.value(y)[0] == first);  // bitwise
  x[0] += 1.0f;                   // shared buffer: replay sees the update
  g.replay();
  CHECK(g.value(y)[0] != first);
}

TEST_CASE("shape errors name the primitive and shapes") {
  GraphD g;
  auto a = g.constant(Tensor<double>::zeros({2, 3}));
  auto b = g.constant(Tensor<double>::zeros({4, 2}));
  CHECK_THROWS_WITH_AS(g.add(a, b), doctest::Contains("add"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(g.matmul(a, b), doctest::Contains("matmul"), std::invalid_argument);
  try {
    g.matmul(a, b);
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("[2,3]") != std::string::npos);
    CHECK(std::string(e.what()).find("[4,2]") != std::string::npos);
  }
}

TEST_CASE("backward of a non-scalar without seed is an error") {
  GraphD g;
  auto x = g.param(Tensor<double>::zeros({3}));
  auto y = g.mul(x, x);
  CHECK_THROWS_AS(g.backward(y), std::invalid_argument);
  g.backward(y, Tensor<double>::from({3}, {1, 1, 1}));  // explicit seed works
  CHECK(g.grad(x) != nullptr);
}

TEST_CASE("fan-out accumulates gradient") {
  GraphD g;
  auto x = g.param(Tensor<double>::scalar(2.0));
  auto y = g.add(g.mul(x, x), g.mul_scalar(x, 3.0));  // x^2 + 3x
  g.backward(y);
  CHECK((*g.grad(x))[0] == doctest::Approx(7.0));
}

TEST_CASE("matmul forward matches a hand loop") {
  Rng rng(3);
  Tensor<double> x = Tensor<double>::zeros({5, 4});
  Tensor<double> w = Tensor<double>::zeros({4, 3});
  for (int64_t i = 0; i < x.numel(); ++i) x[i] = rng.uniform(-1, 1);
  for (int64_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-1, 1);
  GraphD g;
  auto y = g.matmul(g.constant(x), g.constant(w));
  for (int64_t i = 0; i < 5; ++i)
    for (int64_t j = 0; j < 3; ++j) {
      double expect = 0;
      for (int64_t k = 0; k < 4; ++k) expect += x[i * 4 + k] * w[k * 3 + j];
      CHECK(g.value(y)[i * 3 + j] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("mean and sum reductions") {
  GraphD g;
  auto x = g.constant(Tensor<double>::from({2, 2}, {1, 2, 3, 4}));
  CHECK(g.value(g.sum(x))[0] == doctest::Approx(10.0));
  CHECK(g.value(g.mean(x))[0] == doctest::Approx(2.5));
}

TEST_SUITE_END();
