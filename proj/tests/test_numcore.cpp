#include <cmath>
#include <limits>

#include "doctest.h"
#include "gradcheck.hpp"
#include "tfpdet/error.hpp"
#include "tfpdet/numcore.hpp"

using namespace tfpdet;
using namespace tfpdet::numcore;
using tfpdet::testing::grad_check;
using tfpdet::testing::random_tensor;

namespace {

std::vector<double> vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

Tensor param(Shape s, std::vector<double> v) { return Tensor::from(std::move(s), std::move(v), true); }

}  // namespace

TEST_CASE("linear: identity and bias-only cases") {
  auto y = linear(Tensor::from({1, 2}, {1, 2}), param({2, 2}, {1, 0, 0, 1}), param({2}, {0, 0}));
  CHECK(vec(y) == std::vector<double>{1, 2});
  auto z = linear(Tensor::from({1, 2}, {0, 0}), param({2, 2}, {5, -3, 2, 7}), param({2}, {3, 4}));
  CHECK(vec(z) == std::vector<double>{3, 4});
}

TEST_CASE("linear: matches triple-loop matmul oracle") {
  Rng rng(3);
  auto x = random_tensor(rng, {3, 4});
  auto w = random_tensor(rng, {4, 5});
  auto b = random_tensor(rng, {5});
  auto y = linear(x, w, b);
  double max_diff = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      double acc = b[j];
      for (std::size_t k = 0; k < 4; ++k) acc += x[i * 4 + k] * w[k * 5 + j];
      max_diff = std::max(max_diff, std::abs(acc - y.at(i, j)));
    }
  }
  CHECK(max_diff < 1e-12);
}

TEST_CASE("linear: shape mismatch names both shapes") {
  try {
    linear(Tensor::zeros({2, 3}), param({2, 2}, {1, 0, 0, 1}), param({2}, {0, 0}));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[2x2]") != std::string::npos);
  }
}

TEST_CASE("temporal_conv: identity kernel, padded box filter, output length") {
  auto x = Tensor::from({1, 4}, {1, 2, 3, 4});
  CHECK(vec(temporal_conv(x, param({1, 1, 1}, {1}), param({1}, {0}), 1, 0)) ==
        std::vector<double>{1, 2, 3, 4});
  auto ones = Tensor::from({1, 4}, {1, 1, 1, 1});
  CHECK(vec(temporal_conv(ones, param({1, 1, 3}, {1, 1, 1}), param({1}, {0}), 1, 1)) ==
        std::vector<double>{2, 3, 3, 2});
  auto y = temporal_conv(x, param({1, 1, 2}, {1, 1}), param({1}, {0}), 2, 0);
  CHECK(y.dim(1) == 2);
  CHECK(vec(y) == std::vector<double>{3, 7});
}

TEST_CASE("temporal_conv: empty output is rejected") {
  CHECK_THROWS_AS(temporal_conv(Tensor::zeros({1, 2}), param({1, 1, 3}, {1, 1, 1}), param({1}, {0}), 1, 0),
                  ContractError);
}

TEST_CASE("temporal_conv: batched form equals per-item form") {
  Rng rng(5);
  auto x = random_tensor(rng, {2, 3, 7}, false);
  auto w = random_tensor(rng, {4, 3, 3}, false);
  auto b = random_tensor(rng, {4}, false);
  auto yb = temporal_conv(x, w, b, 2, 1);
  for (std::size_t item = 0; item < 2; ++item) {
    std::vector<double> xi(x.values().begin() + item * 21, x.values().begin() + (item + 1) * 21);
    auto yi = temporal_conv(Tensor::from({3, 7}, xi), w, b, 2, 1);
    for (std::size_t i = 0; i < yi.numel(); ++i) CHECK(yi[i] == yb[item * yi.numel() + i]);
  }
}

TEST_CASE("temporal_maxpool: monotone, ties, and loop oracle") {
  auto y = temporal_maxpool(Tensor::from({1, 4}, {1, 2, 3, 4}), 2, 2);
  CHECK(vec(y) == std::vector<double>{2, 4});

  auto x = Tensor::from({1, 4}, {5, 5, 5, 5}, true);
  auto p = temporal_maxpool(x, 2, 2);
  CHECK(vec(p) == std::vector<double>{5, 5});
  auto loss = linear(reshape(p, {1, 2}), param({2, 1}, {1, 1}), param({1}, {0}));
  backward(reshape(loss, {}));
  CHECK(vec(Tensor(x.node())) == std::vector<double>{5, 5, 5, 5});
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{1, 0, 1, 0});

  Rng rng(9);
  auto r = random_tensor(rng, {3, 8}, false);
  auto out = temporal_maxpool(r, 3, 2);
  REQUIRE(out.dim(1) == 3);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t t = 0; t < 3; ++t) {
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < 3; ++j) m = std::max(m, r[c * 8 + t * 2 + j]);
      CHECK(out.at(c, t) == m);
    }
  }
  CHECK_THROWS_AS(temporal_maxpool(Tensor::zeros({1, 1}), 2, 2), ContractError);
}

TEST_CASE("softmax_cross_entropy: symmetry, stabilization, high-precision reference") {
  const int zero = 0;
  CHECK(softmax_cross_entropy(Tensor::from({1, 2}, {0, 0}), std::span(&zero, 1)).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const double big = softmax_cross_entropy(Tensor::from({1, 2}, {1000, 0}), std::span(&zero, 1)).item();
  CHECK(std::isfinite(big));
  CHECK(big == doctest::Approx(0.0));

  // Reference computed at 50 significant digits.
  auto logits = Tensor::from({4, 3}, {-0.286, 0.359, 2.545, -0.206, 0.047, 0.524, -1.892, 0.071, 0.779,
                                      1.758, -2.435, -1.18});
  const std::vector<int> labels{2, 0, 1, 1};
  CHECK(std::abs(softmax_cross_entropy(logits, labels).item() - 1.760996047767404515957018) < 1e-10);

  const int bad = 2;
  CHECK_THROWS_AS(softmax_cross_entropy(Tensor::from({1, 2}, {0, 0}), std::span(&bad, 1)), IndexError);
}

TEST_CASE("softmax_cross_entropy is nonnegative") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    auto logits = random_tensor(rng, {5, 4}, false, 5.0);
    std::vector<int> labels(5);
    for (auto& l : labels) l = static_cast<int>(rng.index(4));
    CHECK(softmax_cross_entropy(logits, labels).item() >= 0.0);
  }
}

TEST_CASE("smooth_l1: closed forms and continuity at |d| = 1") {
  CHECK(smooth_l1(Tensor::from({1, 2}, {1, 2}), Tensor::from({1, 2}, {1, 2})).item() == 0.0);
  CHECK(smooth_l1(Tensor::from({1}, {0.5}), Tensor::from({1}, {0.0})).item() == 0.125);
  CHECK(smooth_l1(Tensor::from({1}, {2.0}), Tensor::from({1}, {0.0})).item() == 1.5);
  CHECK_THROWS_AS(smooth_l1(Tensor::zeros({2, 2}), Tensor::zeros({1, 2})), DimensionError);

  for (double sign : {1.0, -1.0}) {
    const double below = std::nextafter(1.0, 0.0) * sign;
    const double above = std::nextafter(1.0, 2.0) * sign;
    auto eval = [](double d) {
      auto p = Tensor::from({1}, {d}, true);
      auto l = smooth_l1(p, Tensor::from({1}, {0.0}));
      backward(l);
      return std::pair{l.item(), p.grad()[0]};
    };
    const auto [f_lo, g_lo] = eval(below);
    const auto [f_hi, g_hi] = eval(above);
    CHECK(std::abs(f_lo - f_hi) < 1e-12);
    CHECK(std::abs(g_lo - g_hi) < 1e-12);
  }
}

TEST_CASE("relu and concat_channels") {
  CHECK(vec(relu(Tensor::from({3}, {-1, 0, 2}))) == std::vector<double>{0, 0, 2});
  auto c = concat_channels(Tensor::from({1, 1}, {1}), Tensor::from({1, 1}, {2}));
  CHECK(c.shape() == Shape{2, 1});
  CHECK(vec(c) == std::vector<double>{1, 2});
  CHECK_THROWS_AS(concat_channels(Tensor::zeros({1, 2}), Tensor::zeros({1, 3})), DimensionError);
}

TEST_CASE("finite-difference gradients of every op") {
  Rng rng(1234);
  auto x = random_tensor(rng, {3, 4});
  auto w = random_tensor(rng, {4, 5});
  auto b = random_tensor(rng, {5});
  auto target = random_tensor(rng, {3, 5}, false);
  SUBCASE("linear") {
    auto r = grad_check([&] { return smooth_l1(linear(x, w, b), target); }, {x, w, b});
    CHECK(r.max_rel_error < 1e-4);
  }
  SUBCASE("temporal_conv strided and padded") {
    auto cx = random_tensor(rng, {2, 3, 9});
    auto cw = random_tensor(rng, {4, 3, 3});
    auto cb = random_tensor(rng, {4});
    auto tgt = random_tensor(rng, {2, 4, 5}, false);
    auto r = grad_check([&] { return smooth_l1(temporal_conv(cx, cw, cb, 2, 1), tgt); }, {cx, cw, cb});
    CHECK(r.max_rel_error < 1e-4);
  }
  SUBCASE("maxpool, relu, concat, gather, reshape, add, scale") {
    auto a = random_tensor(rng, {3, 8});
    auto c = random_tensor(rng, {2, 4});
    const std::vector<std::size_t> idx{0, 3, 5, 5, 11, 19};
    const std::vector<int> labels{2, 0};
    auto r = grad_check(
        [&] {
          auto pooled = relu(temporal_maxpool(a, 2, 2));      // 3x4
          auto cat = concat_channels(pooled, c);              // 5x4
          auto logits = reshape(gather(cat, idx, {6}), {2, 3});
          auto ce = softmax_cross_entropy(logits, labels);
          auto reg = smooth_l1(reshape(cat, {20}), Tensor::zeros({20}));
          return add(scale(ce, 0.7), reg);
        },
        {a, c});
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("backward requires a scalar") {
  auto x = Tensor::from({2}, {1, 2}, true);
  CHECK_THROWS_AS(backward(relu(x)), ContractError);
}

TEST_CASE("no-grad mode builds no graph") {
  auto w = Tensor::from({1}, {2.0}, true);
  NoGradGuard guard;
  auto y = scale(w, 3.0);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("determinism: identical inputs give bit-identical values and grads") {
  auto run = [] {
    Rng rng(77);
    auto x = random_tensor(rng, {2, 3, 8});
    auto w = random_tensor(rng, {3, 3, 3});
    auto b = random_tensor(rng, {3});
    auto l = smooth_l1(temporal_conv(x, w, b, 1, 1), Tensor::zeros({2, 3, 8}));
    backward(l);
    std::vector<double> out{l.item()};
    out.insert(out.end(), w.grad().begin(), w.grad().end());
    out.insert(out.end(), x.grad().begin(), x.grad().end());
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("sgd_step: plain step, momentum recurrence, pure decay, schedule") {
  auto make = [](double p, double g) {
    ParameterStore store;
    auto t = store.add("p", {1}, ConstantInit{p});
    Rng rng(0);
    store.initialize(rng);
    t.mutable_grad()[0] = g;
    return std::pair{store, t};
  };
  {
    auto [store, t] = make(1.0, 1.0);
    SgdState st;
    sgd_step(store, {0.1, 0.0, 0.0, 0.1, 1000}, 0, st);
    CHECK(t[0] == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(t.grad()[0] == 0.0);
  }
  {
    auto [store, t] = make(1.0, 1.0);
    SgdState st;
    const SgdConfig cfg{0.1, 0.9, 0.0, 0.1, 1000};
    sgd_step(store, cfg, 0, st);
    t.mutable_grad()[0] = 1.0;
    sgd_step(store, cfg, 1, st);
    CHECK(t[0] == doctest::Approx(0.71).epsilon(1e-14));
  }
  {
    auto [store, t] = make(1.0, 0.0);
    SgdState st;
    sgd_step(store, {0.1, 0.0, 0.5, 0.1, 1000}, 0, st);
    CHECK(t[0] == doctest::Approx(0.95).epsilon(1e-15));
  }
  {
    auto [store, t] = make(0.3, 0.25);
    SgdState st;
    sgd_step(store, {0.01, 0.0, 0.0, 0.1, 1000}, 0, st);
    CHECK(t[0] == 0.3 - 0.01 * 0.25);
  }
  const SgdConfig sched{1e-3, 0.9, 0.0, 0.1, 1000};
  CHECK(sched.lr_at(999) == 1e-3);
  CHECK(sched.lr_at(1000) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(sched.lr_at(2500) == doctest::Approx(1e-5).epsilon(1e-12));
}

TEST_CASE("parameter init follows the init spec") {
  ParameterStore store;
  auto w = store.add("w", {1000}, GaussianInit{0.0, 0.01});
  auto b = store.add("b", {3}, ConstantInit{0.1});
  CHECK_THROWS_AS(store.add("w", {1}, ConstantInit{0.0}), ConfigError);
  Rng rng(1);
  store.initialize(rng);
  double sum = 0.0, sq = 0.0;
  for (double v : w.values()) sum += v, sq += v * v;
  CHECK(std::abs(sum / 1000) < 0.002);
  CHECK(std::sqrt(sq / 1000) == doctest::Approx(0.01).epsilon(0.1));
  for (double v : b.values()) CHECK(v == 0.1);
}
