#include <cmath>
#include <vector>

#include "doctest.h"
#include "iaunet/nn.hpp"
#include "iaunet/ops.hpp"
#include "iaunet/optim.hpp"
#include "iaunet/rng.hpp"
#include "iaunet/tensor.hpp"
#include "support/gradcheck_oracle.hpp"

using namespace iaunet;
using testsupport::max_grad_error;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0,
                     bool requires_grad = false) {
  std::vector<double> data(static_cast<std::size_t>(numel(shape)));
  for (auto& v : data) v = rng.normal(0.0, scale);
  return Tensor::from_data(std::move(shape), std::move(data), requires_grad);
}

}  // namespace

TEST_CASE("backward populates leaf gradients") {
  auto x = Tensor::from_data({3}, {1.0, 2.0, 3.0}, true);

  SUBCASE("sum gives all-ones gradient") {
    ops::sum(x).backward();
    for (double g : x.grad()) CHECK(g == 1.0);
  }
  SUBCASE("sum of squares") {
    auto x2 = Tensor::from_data({2}, {1.0, 2.0}, true);
    ops::sum(ops::mul(x2, x2)).backward();
    CHECK(x2.grad()[0] == doctest::Approx(2.0));
    CHECK(x2.grad()[1] == doctest::Approx(4.0));
  }
  SUBCASE("repeated backward accumulates until zeroed") {
    auto loss = ops::sum(x);
    loss.backward();
    loss.backward();
    CHECK(x.grad()[0] == 2.0);
    x.zero_grad();
    loss.backward();
    CHECK(x.grad()[0] == 1.0);
  }
  SUBCASE("non-scalar loss is rejected") {
    CHECK_THROWS_AS(x.backward(), ContractError);
  }
}

TEST_CASE("shared subexpressions accumulate once per path") {
  // y = a*a; loss = sum(y) + sum(y)  =>  dloss/da = 4a
  auto a = Tensor::from_data({2}, {3.0, -2.0}, true);
  auto y = ops::mul(a, a);
  auto loss = ops::add(ops::sum(y), ops::sum(y));
  loss.backward();
  CHECK(a.grad()[0] == doctest::Approx(12.0));
  CHECK(a.grad()[1] == doctest::Approx(-8.0));
}

TEST_CASE("conv2d forward examples") {
  SUBCASE("all-ones 3x3, pad 1: center sums to 9") {
    auto x = Tensor::full({1, 1, 3, 3}, 1.0);
    auto w = Tensor::full({1, 1, 3, 3}, 1.0);
    auto y = ops::conv2d(x, w, Tensor(), 1, 1);
    CHECK(y.shape() == Shape{1, 1, 3, 3});
    CHECK(y.at(4) == doctest::Approx(9.0));  // center
    CHECK(y.at(0) == doctest::Approx(4.0));  // corner
  }
  SUBCASE("single-hot identity kernel reproduces the input") {
    Rng rng(11);
    auto x = random_tensor({1, 1, 4, 5}, rng);
    std::vector<double> wk(9, 0.0);
    wk[4] = 1.0;
    auto w = Tensor::from_data({1, 1, 3, 3}, wk);
    auto y = ops::conv2d(x, w, Tensor(), 1, 1);
    for (std::int64_t i = 0; i < x.size(); ++i)
      CHECK(y.at(i) == doctest::Approx(x.at(i)));
  }
  SUBCASE("shape errors name the offending axis") {
    auto x = Tensor::full({1, 2, 4, 4}, 1.0);
    auto w = Tensor::full({1, 3, 3, 3}, 1.0);
    CHECK_THROWS_WITH_AS(ops::conv2d(x, w, Tensor(), 1, 1),
                         doctest::Contains("channel"), ShapeError);
    auto small = Tensor::full({1, 2, 2, 4}, 1.0);
    auto w2 = Tensor::full({1, 2, 3, 3}, 1.0);
    CHECK_THROWS_WITH_AS(ops::conv2d(small, w2, Tensor(), 1, 0),
                         doctest::Contains("height"), ShapeError);
  }
}

TEST_CASE("conv2d gradients match central differences") {
  Rng rng(7);
  auto x = random_tensor({1, 2, 5, 5}, rng, 1.0, true);
  auto w = random_tensor({3, 2, 3, 3}, rng, 0.5, true);
  auto b = random_tensor({3}, rng, 0.5, true);
  auto forward = [&]() {
    auto y = ops::conv2d(x, w, b, 2, 1);
    return ops::sum(ops::mul(y, y));
  };
  CHECK(max_grad_error(x, forward) < 1e-5);
  CHECK(max_grad_error(w, forward) < 1e-5);
  CHECK(max_grad_error(b, forward) < 1e-5);
}

TEST_CASE("depthwise conv keeps channels independent") {
  Rng rng(3);
  SUBCASE("identity kernels reproduce the input") {
    auto x = random_tensor({1, 2, 4, 4}, rng);
    std::vector<double> wk(2 * 9, 0.0);
    wk[4] = 1.0;
    wk[9 + 4] = 1.0;
    auto w = Tensor::from_data({2, 1, 3, 3}, wk);
    auto y = ops::depthwise_conv2d(x, w, 1, 1);
    for (std::int64_t i = 0; i < x.size(); ++i)
      CHECK(y.at(i) == doctest::Approx(x.at(i)));
  }
  SUBCASE("zero kernel silences only its channel") {
    auto x = random_tensor({1, 2, 4, 4}, rng);
    std::vector<double> wk(2 * 9, 0.0);
    wk[9 + 4] = 1.0;  // channel 1 identity, channel 0 zero
    auto w = Tensor::from_data({2, 1, 3, 3}, wk);
    auto y = ops::depthwise_conv2d(x, w, 1, 1);
    for (int i = 0; i < 16; ++i) CHECK(y.at(i) == 0.0);
    for (int i = 16; i < 32; ++i) CHECK(y.at(i) == doctest::Approx(x.at(i)));
  }
  SUBCASE("gradient check") {
    auto x = random_tensor({1, 3, 5, 4}, rng, 1.0, true);
    auto w = random_tensor({3, 1, 3, 3}, rng, 0.5, true);
    auto forward = [&]() {
      auto y = ops::depthwise_conv2d(x, w, 1, 1);
      return ops::sum(ops::mul(y, y));
    };
    CHECK(max_grad_error(x, forward) < 1e-5);
    CHECK(max_grad_error(w, forward) < 1e-5);
  }
}

TEST_CASE("linear") {
  SUBCASE("identity weight, zero bias") {
    auto x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    auto w = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    auto b = Tensor::zeros({3});
    auto y = ops::linear(x, w, b);
    for (std::int64_t i = 0; i < x.size(); ++i) CHECK(y.at(i) == x.at(i));
  }
  SUBCASE("weight of ones sums the input") {
    auto x = Tensor::from_data({1, 3}, {1, 2, 3});
    auto w = Tensor::full({2, 3}, 1.0);
    auto y = ops::linear(x, w, Tensor());
    CHECK(y.at(0) == doctest::Approx(6.0));
    CHECK(y.at(1) == doctest::Approx(6.0));
  }
  SUBCASE("trailing-dimension mismatch") {
    auto x = Tensor::full({2, 4}, 1.0);
    auto w = Tensor::full({3, 3}, 1.0);
    CHECK_THROWS_AS(ops::linear(x, w, Tensor()), ShapeError);
  }
  SUBCASE("gradient check") {
    Rng rng(5);
    auto x = random_tensor({4, 3}, rng, 1.0, true);
    auto w = random_tensor({2, 3}, rng, 1.0, true);
    auto b = random_tensor({2}, rng, 1.0, true);
    auto forward = [&]() {
      auto y = ops::linear(x, w, b);
      return ops::mean(ops::mul(y, y));
    };
    CHECK(max_grad_error(x, forward) < 1e-5);
    CHECK(max_grad_error(w, forward) < 1e-5);
    CHECK(max_grad_error(b, forward) < 1e-5);
  }
}

TEST_CASE("softmax_lastdim") {
  SUBCASE("uniform logits give uniform probabilities") {
    auto y = ops::softmax_lastdim(Tensor::zeros({3}));
    for (int i = 0; i < 3; ++i) CHECK(y.at(i) == doctest::Approx(1.0 / 3));
  }
  SUBCASE("shift invariance") {
    Rng rng(2);
    auto x = random_tensor({4, 5}, rng);
    auto y0 = ops::softmax_lastdim(x);
    auto y1 = ops::softmax_lastdim(ops::add_scalar(x, 17.5));
    for (std::int64_t i = 0; i < y0.size(); ++i)
      CHECK(std::fabs(y0.at(i) - y1.at(i)) < 1e-12);
  }
  SUBCASE("extreme logits do not overflow") {
    auto y = ops::softmax_lastdim(Tensor::from_data({2}, {1000.0, 0.0}));
    CHECK(y.at(0) == doctest::Approx(1.0));
    CHECK(y.at(1) == doctest::Approx(0.0));
    CHECK(std::isfinite(y.at(0)));
  }
  SUBCASE("rows sum to one") {
    Rng rng(9);
    auto y = ops::softmax_lastdim(random_tensor({6, 7}, rng, 3.0));
    for (int r = 0; r < 6; ++r) {
      double s = 0.0;
      for (int c = 0; c < 7; ++c) s += y.at(r * 7 + c);
      CHECK(std::fabs(s - 1.0) < 1e-9);
    }
  }
  SUBCASE("NaN input raises a numeric error") {
    auto x = Tensor::from_data({2}, {std::nan(""), 0.0});
    CHECK_THROWS_AS(ops::softmax_lastdim(x), NumericError);
  }
  SUBCASE("gradient check") {
    Rng rng(4);
    auto x = random_tensor({3, 4}, rng, 1.0, true);
    auto t = random_tensor({3, 4}, rng);
    auto forward = [&]() {
      return ops::sum(ops::mul(ops::softmax_lastdim(x), t));
    };
    CHECK(max_grad_error(x, forward) < 1e-5);
  }
}

TEST_CASE("bilinear_upsample2x") {
  SUBCASE("constants are preserved and sum scales by 4") {
    auto x = Tensor::full({1, 2, 3, 3}, 2.5);
    auto y = ops::bilinear_upsample2x(x);
    CHECK(y.shape() == Shape{1, 2, 6, 6});
    double s = 0.0;
    for (std::int64_t i = 0; i < y.size(); ++i) {
      CHECK(y.at(i) == doctest::Approx(2.5));
      s += y.at(i);
    }
    CHECK(s == doctest::Approx(4.0 * 2.5 * 18));
  }
  SUBCASE("half-pixel convention on a two-sample row") {
    auto x = Tensor::from_data({1, 1, 1, 2}, {0.0, 1.0});
    auto y = ops::bilinear_upsample2x(x);
    CHECK(y.dim(2) == 2);
    CHECK(y.dim(3) == 4);
    const double expected[4] = {0.0, 0.25, 0.75, 1.0};
    for (int i = 0; i < 4; ++i) CHECK(y.at(i) == doctest::Approx(expected[i]));
  }
  SUBCASE("gradient check") {
    Rng rng(6);
    auto x = random_tensor({1, 2, 3, 4}, rng, 1.0, true);
    auto t = random_tensor({1, 2, 6, 8}, rng);
    auto forward = [&]() {
      return ops::sum(ops::mul(ops::bilinear_upsample2x(x), t));
    };
    CHECK(max_grad_error(x, forward) < 1e-5);
  }
}

TEST_CASE("batchnorm2d") {
  Rng rng(13);
  SUBCASE("train mode normalizes per channel") {
    auto x = random_tensor({2, 3, 4, 4}, rng, 2.0);
    auto gamma = Tensor::full({3}, 1.0);
    auto beta = Tensor::zeros({3});
    ops::BatchNormState state;
    state.running_mean = Tensor::zeros({3});
    state.running_var = Tensor::full({3}, 1.0);
    auto y = ops::batchnorm2d(x, gamma, beta, state, ops::BnMode::train);
    for (int c = 0; c < 3; ++c) {
      double mu = 0.0, var = 0.0;
      for (int n = 0; n < 2; ++n)
        for (int i = 0; i < 16; ++i) mu += y.at((n * 3 + c) * 16 + i);
      mu /= 32;
      for (int n = 0; n < 2; ++n)
        for (int i = 0; i < 16; ++i) {
          const double d = y.at((n * 3 + c) * 16 + i) - mu;
          var += d * d;
        }
      var /= 32;
      CHECK(std::fabs(mu) < 1e-6);
      CHECK(std::fabs(var - 1.0) < 1e-4);
    }
  }
  SUBCASE("zero gamma collapses output to beta") {
    auto x = random_tensor({1, 2, 3, 3}, rng);
    auto gamma = Tensor::zeros({2});
    auto beta = Tensor::from_data({2}, {0.5, -1.5});
    ops::BatchNormState state;
    state.running_mean = Tensor::zeros({2});
    state.running_var = Tensor::full({2}, 1.0);
    auto y = ops::batchnorm2d(x, gamma, beta, state, ops::BnMode::train);
    for (int i = 0; i < 9; ++i) CHECK(y.at(i) == doctest::Approx(0.5));
    for (int i = 9; i < 18; ++i) CHECK(y.at(i) == doctest::Approx(-1.5));
  }
  SUBCASE("eval mode uses running statistics") {
    auto x = Tensor::full({1, 1, 2, 2}, 3.0);
    auto gamma = Tensor::full({1}, 1.0);
    auto beta = Tensor::zeros({1});
    ops::BatchNormState state;
    state.running_mean = Tensor::from_data({1}, {1.0});
    state.running_var = Tensor::from_data({1}, {4.0});
    auto y = ops::batchnorm2d(x, gamma, beta, state, ops::BnMode::eval);
    CHECK(y.at(0) == doctest::Approx((3.0 - 1.0) / std::sqrt(4.0 + 1e-5)));
  }
  SUBCASE("gradient check in train mode") {
    auto x = random_tensor({2, 2, 3, 3}, rng, 1.0, true);
    auto gamma = random_tensor({2}, rng, 0.5, true);
    auto beta = random_tensor({2}, rng, 0.5, true);
    auto t = random_tensor({2, 2, 3, 3}, rng);
    ops::BatchNormState state;
    state.running_mean = Tensor::zeros({2});
    state.running_var = Tensor::full({2}, 1.0);
    auto forward = [&]() {
      auto y = ops::batchnorm2d(x, gamma, beta, state, ops::BnMode::train);
      return ops::sum(ops::mul(y, t));
    };
    CHECK(max_grad_error(x, forward) < 1e-4);
    CHECK(max_grad_error(gamma, forward) < 1e-4);
    CHECK(max_grad_error(beta, forward) < 1e-4);
  }
}

TEST_CASE("elementwise and reduction gradients on random shapes") {
  Rng rng(21);
  for (int trial = 0; trial < 4; ++trial) {
    const int r = rng.uniform_int(1, 4), c = rng.uniform_int(1, 5);
    auto x = random_tensor({r, c}, rng, 1.0, true);
    auto y = random_tensor({r, c}, rng, 1.0, true);
    auto forward = [&]() {
      auto s = ops::sigmoid(ops::mul(x, y));
      auto rl = ops::relu(ops::sub(x, y));
      return ops::add(ops::mean(s), ops::sum(rl));
    };
    CHECK(max_grad_error(x, forward) < 1e-5);
    CHECK(max_grad_error(y, forward) < 1e-5);
  }
}

TEST_CASE("matmul and attention-shaped gradients") {
  Rng rng(31);
  auto q = random_tensor({3, 4}, rng, 1.0, true);
  auto k = random_tensor({5, 4}, rng, 1.0, true);
  auto v = random_tensor({5, 4}, rng, 1.0, true);
  auto forward = [&]() {
    auto attn = ops::softmax_lastdim(ops::mul_scalar(ops::matmul_nt(q, k), 0.5));
    auto out = ops::matmul(attn, v);
    return ops::sum(ops::mul(out, out));
  };
  CHECK(max_grad_error(q, forward) < 1e-5);
  CHECK(max_grad_error(k, forward) < 1e-5);
  CHECK(max_grad_error(v, forward) < 1e-5);
}

TEST_CASE("layernorm gradient and shape ops") {
  Rng rng(41);
  auto x = random_tensor({4, 6}, rng, 1.0, true);
  auto g = random_tensor({6}, rng, 0.3, true);
  auto b = random_tensor({6}, rng, 0.3, true);
  auto t = random_tensor({4, 6}, rng);
  auto forward = [&]() {
    return ops::sum(ops::mul(ops::layernorm_lastdim(x, g, b), t));
  };
  CHECK(max_grad_error(x, forward) < 1e-4);
  CHECK(max_grad_error(g, forward) < 1e-4);
  CHECK(max_grad_error(b, forward) < 1e-4);

  SUBCASE("transpose, slice, select, concat round out the op set") {
    auto xt = ops::transpose2d(x);
    CHECK(xt.dim(0) == 6);
    CHECK(xt.at(1) == x.at(6));
    auto row = ops::select_row(x, 2);
    CHECK(row.at(3) == x.at(2 * 6 + 3));
    auto sl = ops::slice_lastdim(x, 2, 3);
    CHECK(sl.at(0) == x.at(2));
    auto cc = ops::concat_lastdim(sl, sl);
    CHECK(cc.dim(1) == 6);
  }
}

TEST_CASE("forward values stay finite on a random corpus") {
  Rng rng(99);
  for (int trial = 0; trial < 8; ++trial) {
    auto x = random_tensor({1, 3, 8, 8}, rng, 4.0);
    auto w = random_tensor({4, 3, 3, 3}, rng, 2.0);
    auto y = ops::conv2d(x, w, Tensor(), 1, 1);
    y = ops::relu(y);
    y = ops::bilinear_upsample2x(y);
    auto s = ops::softmax_lastdim(ops::reshape(y, {4, 16 * 16}));
    auto m = ops::mean(s);
    CHECK(std::isfinite(m.item()));
  }
}

TEST_CASE("adamw steps") {
  Rng rng(1);
  SUBCASE("zero gradient and zero decay leave parameters unchanged") {
    nn::ParamStore ps;
    auto p = ps.create("p", {2}, nn::Init::ones, rng);
    optim::AdamW opt;
    p.grad();  // allocate zero grads
    opt.step(ps, 0.1, 0.0);
    CHECK(p.at(0) == doctest::Approx(1.0));
  }
  SUBCASE("bias-corrected first step moves by about lr") {
    nn::ParamStore ps;
    auto p = ps.create("p", {1}, nn::Init::ones, rng);
    p.grad()[0] = 1.0;
    optim::AdamW opt;
    opt.step(ps, 0.1, 0.0);
    CHECK(p.at(0) == doctest::Approx(0.9).epsilon(1e-6));
  }
  SUBCASE("decoupled decay shrinks by (1 - lr wd)") {
    nn::ParamStore ps;
    auto p = ps.create("p", {1}, nn::Init::ones, rng);
    p.grad();  // zero gradient
    optim::AdamW opt;
    opt.step(ps, 0.1, 0.05);
    CHECK(p.at(0) == doctest::Approx(1.0 - 0.1 * 0.05));
  }
}

TEST_CASE("cosine schedule hits both endpoints") {
  CHECK(optim::cosine_lr(0, 100, 1e-4, 1e-6) == doctest::Approx(1e-4));
  CHECK(optim::cosine_lr(99, 100, 1e-4, 1e-6) == doctest::Approx(1e-6));
  CHECK(optim::cosine_lr(50, 100, 1.0, 0.0) < 1.0);
}

TEST_CASE("loss primitives") {
  SUBCASE("bce at zero logits is ln 2") {
    auto x = Tensor::zeros({4, 4});
    auto t = Tensor::zeros({4, 4});
    CHECK(ops::bce_with_logits_mean(x, t).item() ==
          doctest::Approx(std::log(2.0)));
  }
  SUBCASE("saturated correct logits vanish") {
    auto x = Tensor::from_data({2}, {50.0, -50.0});
    auto t = Tensor::from_data({2}, {1.0, 0.0});
    CHECK(ops::bce_with_logits_mean(x, t).item() < 1e-8);
  }
  SUBCASE("bce matches a direct per-pixel evaluation") {
    Rng rng(55);
    auto x = random_tensor({8, 8}, rng, 2.0, true);
    std::vector<double> tv(64);
    for (auto& v : tv) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    auto t = Tensor::from_data({8, 8}, tv);
    double direct = 0.0;
    for (int i = 0; i < 64; ++i) {
      const double p = 1.0 / (1.0 + std::exp(-x.at(i)));
      direct += -(tv[i] * std::log(p) + (1.0 - tv[i]) * std::log(1.0 - p));
    }
    direct /= 64.0;
    CHECK(std::fabs(ops::bce_with_logits_mean(x, t).item() - direct) < 1e-10);
    auto forward = [&]() { return ops::bce_with_logits_mean(x, t); };
    CHECK(max_grad_error(x, forward) < 1e-5);
  }
  SUBCASE("weighted cross entropy with uniform logits") {
    auto x = Tensor::zeros({3, 2});
    const double loss =
        ops::cross_entropy_weighted(x, {1, 1, 1}, {1.0, 0.1}).item();
    CHECK(loss == doctest::Approx(std::log(2.0)));
  }
  SUBCASE("cross entropy gradient") {
    Rng rng(77);
    auto x = random_tensor({5, 3}, rng, 1.0, true);
    std::vector<int> targets = {0, 2, 1, 2, 0};
    auto forward = [&]() {
      return ops::cross_entropy_weighted(x, targets, {1.0, 1.0, 0.1});
    };
    CHECK(max_grad_error(x, forward) < 1e-5);
  }
}
