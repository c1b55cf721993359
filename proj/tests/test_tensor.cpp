#include <cmath>
#include <limits>

#include "awada/adam.hpp"
#include "awada/kernels.hpp"
#include "awada/ops.hpp"
#include "awada/rng.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace awada;

namespace {

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("tensor shape bookkeeping") {
  const Tensor t = Tensor::zeros({2, 3, 4});
  CHECK(t.numel() == 24);
  CHECK(t.ndim() == 3);
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor::zeros({1, 1, 1, 1, 1}), std::invalid_argument);
}

TEST_CASE("conv2d identity and summation kernels") {
  const Tensor x = Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4});
  CHECK(vals(conv2d(x, Tensor::from({1, 1, 1, 1}, {1}), Tensor::from({1}, {0}), 1, 0)) ==
        std::vector<double>{1, 2, 3, 4});
  const Tensor ones = Tensor::full({1, 1, 2, 2}, 1.0);
  const Tensor y = conv2d(ones, Tensor::full({1, 1, 2, 2}, 1.0), Tensor::from({1}, {0}), 1, 0);
  CHECK(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y.item() == 4.0);
}

TEST_CASE("conv2d output size and argument errors") {
  const Tensor x = Tensor::zeros({1, 2, 7, 5});
  const Tensor k = Tensor::zeros({4, 2, 3, 3});
  const Tensor b = Tensor::zeros({4});
  CHECK(conv2d(x, k, b, 2, 1).shape() == Shape{1, 4, 4, 3});
  CHECK_THROWS_WITH_AS(conv2d(x, Tensor::zeros({4, 3, 3, 3}), b, 1, 0), doctest::Contains("channels"),
                       std::invalid_argument);
  CHECK_THROWS_AS(conv2d(x, k, b, 0, 0), std::invalid_argument);
  CHECK_THROWS_AS(conv2d(x, Tensor::zeros({4, 2, 9, 9}), b, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(conv2d(x, k, Tensor::zeros({3}), 1, 0), std::invalid_argument);
}

TEST_CASE("conv2d gradient matches central differences on the 1x2x5x5 / 3x2x3x3 case") {
  Rng rng(42);
  const double err = gradcheck::max_relative_error(
      {gradcheck::rand_input(rng, {1, 2, 5, 5}), gradcheck::rand_input(rng, {3, 2, 3, 3}),
       gradcheck::rand_input(rng, {3})},
      [](const std::vector<Tensor>& x) { return conv2d(x[0], x[1], x[2], 1, 0); }, rng);
  CHECK(err < gradcheck::kTolerance);
}

TEST_CASE("elementwise examples") {
  CHECK(leaky_relu(Tensor::scalar(-1.0), 0.2).item() == doctest::Approx(-0.2).epsilon(1e-15));
  CHECK(tanh(Tensor::scalar(0.0)).item() == 0.0);
  const Tensor x = Tensor::from({1}, {3.0}, true);
  mul(x, x).backward();
  CHECK(x.grad()[0] == 6.0);
  CHECK_THROWS_AS(add(Tensor::zeros({2}), Tensor::zeros({3})), std::invalid_argument);
}

TEST_CASE("log clamps tiny inputs and passes no gradient there") {
  const Tensor x = Tensor::from({2}, {0.0, 2.0}, true);
  const Tensor y = log(x);
  CHECK(y[0] == doctest::Approx(std::log(1e-12)));
  sum(y).backward();
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 0.5);
}

TEST_CASE("reductions") {
  const Tensor x = Tensor::from({4}, {1, 2, 3, 4});
  CHECK(mean(x).item() == 2.5);
  CHECK_THROWS_AS(sum(Tensor::zeros({0})), std::invalid_argument);
  CHECK_THROWS_AS(mean(x, {3}), std::invalid_argument);
  const Tensor ab = Tensor::from({2}, {5.0, -1.0}, true);
  mean(ab).backward();
  CHECK(ab.grad()[0] == 0.5);
  const Tensor m = mean(Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}), {1});
  CHECK(m.shape() == Shape{2, 1});
  CHECK(vals(m) == std::vector<double>{2, 5});
}

TEST_CASE("weighted_mean with unit weights is bit-identical to mean") {
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const Shape s{1, 1, rng.uniform_int(1, 9), rng.uniform_int(1, 9)};
    const auto v = gradcheck::random_values(rng, shape_numel(s), -10, 10);
    const Tensor a = Tensor::from(s, v, true), b = Tensor::from(s, v, true);
    const Tensor wm = weighted_mean(a, Tensor::full(s, 1.0));
    const Tensor pm = mean(b);
    CHECK(wm.item() == pm.item());
    wm.backward();
    pm.backward();
    CHECK(std::vector<double>(a.grad().begin(), a.grad().end()) ==
          std::vector<double>(b.grad().begin(), b.grad().end()));
  }
}

TEST_CASE("upsample2x") {
  const Tensor x = Tensor::from({1, 1, 1, 1}, {1.0}, true);
  const Tensor y = upsample2x(x);
  CHECK(vals(y) == std::vector<double>{1, 1, 1, 1});
  sum(y).backward();
  CHECK(x.grad()[0] == 4.0);
  const Tensor c = Tensor::full({1, 2, 3, 2}, 0.75);
  CHECK(vals(avgpool2x(upsample2x(c))) == vals(c));
}

TEST_CASE("backward contract") {
  const Tensor p = Tensor::parameter("p", {2}, {1.0, 2.0});
  const Tensor unused = Tensor::parameter("unused", {2}, {1.0, 1.0});
  const Tensor c = Tensor::from({2}, {3.0, 4.0});
  const Tensor loss = sum(mul(p, c));
  loss.backward();
  CHECK(p.grad()[0] == 3.0);
  CHECK_FALSE(c.has_grad());
  CHECK(unused.grad()[0] == 0.0);
  CHECK_THROWS_AS(loss.backward(), std::logic_error);
  CHECK_THROWS_AS(sum(mul(p, c)).backward(), std::logic_error);
  Tensor q = p;
  q.zero_grad();
  sum(mul(p, c)).backward();
  CHECK(p.grad()[0] == 3.0);
  CHECK_THROWS_AS(mul(p, c).backward(), std::invalid_argument);
}

TEST_CASE("backward is linear in the loss") {
  Rng rng(11);
  const auto kv = gradcheck::random_values(rng, 2 * 2 * 3 * 3, -1, 1);
  const Tensor x = Tensor::from({1, 2, 4, 4}, gradcheck::random_values(rng, 32, -1, 1));
  auto grad_of = [&](int which) {
    const Tensor k = Tensor::parameter("k", {2, 2, 3, 3}, kv);
    const Tensor b = Tensor::parameter("b", {2}, {0.1, -0.2});
    const Tensor y = conv2d(x, k, b, 1, 1);
    const Tensor l1 = mean(square(y));
    const Tensor l2 = sum(tanh(y));
    (which == 0 ? l1 : which == 1 ? l2 : add(l1, l2)).backward();
    return std::vector<double>(k.grad().begin(), k.grad().end());
  };
  const auto g1 = grad_of(0), g2 = grad_of(1), g12 = grad_of(2);
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g12[i] == doctest::Approx(g1[i] + g2[i]).epsilon(1e-12));
}

TEST_CASE("forward ops stay finite on finite inputs") {
  Rng rng(5);
  const Tensor x = Tensor::from({1, 2, 4, 4}, gradcheck::random_values(rng, 32, -50, 50));
  for (const Tensor& y : {sigmoid(x), tanh(x), softmax_channels(x), log(sigmoid(x)), instance_norm(x),
                          leaky_relu(x, 0.2), log(abs(x))}) {
    for (double v : y.values()) CHECK(std::isfinite(v));
  }
}

TEST_CASE("gradient checks across ops (randomized)") {
  Rng rng(2024);
  for (const auto& c : gradcheck::op_cases()) {
    double worst = 0;
    for (int i = 0; i < 20; ++i) worst = std::max(worst, c.run(rng));
    INFO(c.name);
    CHECK(worst < gradcheck::kTolerance);
  }
}

TEST_CASE("parallel conv kernels agree with the reference") {
  Rng rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    kernels::ConvShape s;
    s.batch = rng.uniform_int(1, 3);
    s.in_ch = rng.uniform_int(1, 4);
    s.out_ch = rng.uniform_int(1, 5);
    s.k_h = rng.uniform_int(1, 4);
    s.k_w = rng.uniform_int(1, 4);
    s.pad = rng.uniform_int(0, 2);
    s.stride = rng.uniform_int(1, 3);
    s.in_h = rng.uniform_int(std::max(1, s.k_h - 2 * s.pad), 9);
    s.in_w = rng.uniform_int(std::max(1, s.k_w - 2 * s.pad), 9);
    const auto in = gradcheck::random_values(rng, std::size_t(s.batch) * s.in_ch * s.in_h * s.in_w, -1, 1);
    const auto k = gradcheck::random_values(rng, std::size_t(s.out_ch) * s.patch_len(), -1, 1);
    const auto b = gradcheck::random_values(rng, s.out_ch, -1, 1);
    const std::size_t nout = std::size_t(s.batch) * s.out_ch * s.out_h() * s.out_w();
    std::vector<double> o1(nout), o2(nout);
    kernels::reference::conv2d_forward(s, in, k, b, o1);
    kernels::parallel::conv2d_forward(s, in, k, b, o2);
    CHECK(o1 == o2);
    const auto go = gradcheck::random_values(rng, nout, -1, 1);
    std::vector<double> gk1(k.size()), gk2(k.size()), gb1(b.size()), gb2(b.size());
    kernels::reference::conv2d_backward_kernel(s, go, in, gk1, gb1);
    kernels::parallel::conv2d_backward_kernel(s, go, in, gk2, gb2);
    CHECK(gk1 == gk2);
    CHECK(gb1 == gb2);
    std::vector<double> gi1(in.size()), gi2(in.size());
    kernels::reference::conv2d_backward_input(s, go, k, gi1);
    kernels::parallel::conv2d_backward_input(s, go, k, gi2);
    for (std::size_t i = 0; i < gi1.size(); ++i) CHECK(gi1[i] == doctest::Approx(gi2[i]).epsilon(1e-12));
  }
}

TEST_CASE("parallel conv result does not depend on the thread count") {
  Rng rng(17);
  kernels::ConvShape s{2, 3, 12, 12, 4, 3, 3, 1, 1};
  const auto in = gradcheck::random_values(rng, 2 * 3 * 144, -1, 1);
  const auto k = gradcheck::random_values(rng, 4 * 27, -1, 1);
  const auto go = gradcheck::random_values(rng, 2 * 4 * 144, -1, 1);
  auto run = [&](int threads) {
    kernels::set_thread_count(threads);
    std::vector<double> gi(in.size());
    kernels::parallel::conv2d_backward_input(s, go, k, gi);
    return gi;
  };
  const int before = kernels::thread_count();
  const auto a = run(1), b = run(3);
  kernels::set_thread_count(before);
  CHECK(a == b);
}

}  // TEST_SUITE

TEST_SUITE("adam") {

TEST_CASE("first step on a scalar with unit gradient moves by lr") {
  const Tensor p = Tensor::parameter("w", {1}, {1.0});
  Adam adam({p}, {0.1, 0.9, 0.999, 1e-8});
  mul(p, Tensor::from({1}, {1.0})).backward();
  adam.step();
  // m_hat = 1, v_hat = 1, so the step is lr * 1 / (1 + eps).
  CHECK(p[0] == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-15));
  CHECK(adam.step_count() == 1);
}

TEST_CASE("zero gradient leaves parameters unchanged") {
  Tensor p = Tensor::parameter("w", {3}, {1.0, -2.0, 0.5});
  Adam adam({p}, {});
  for (int i = 0; i < 3; ++i) adam.step();
  CHECK(vals(p) == std::vector<double>{1.0, -2.0, 0.5});
}

TEST_CASE("hand-computed two-step trajectory") {
  const Tensor p = Tensor::parameter("w", {1}, {0.0});
  const AdamOptions o{0.01, 0.5, 0.999, 1e-8};
  Adam adam({p}, o);
  double m = 0, v = 0, w = 0;
  for (int t = 1; t <= 2; ++t) {
    const double g = t == 1 ? 2.0 : -1.0;
    Tensor q = p;
    q.zero_grad();
    mul(p, Tensor::from({1}, {g})).backward();
    adam.step();
    m = o.beta1 * m + (1 - o.beta1) * g;
    v = o.beta2 * v + (1 - o.beta2) * g * g;
    const double mh = m / (1 - std::pow(o.beta1, t)), vh = v / (1 - std::pow(o.beta2, t));
    w -= o.lr * mh / (std::sqrt(vh) + o.eps);
    CHECK(p[0] == doctest::Approx(w).epsilon(1e-14));
  }
}

TEST_CASE("NaN gradient aborts naming the parameter") {
  const Tensor p = Tensor::parameter("gen/enc1.w", {1}, {1.0});
  Adam adam({p}, {});
  mul(p, Tensor::from({1}, {std::numeric_limits<double>::quiet_NaN()})).backward();
  CHECK_THROWS_WITH_AS(adam.step(), doctest::Contains("gen/enc1.w"), std::runtime_error);
  CHECK(p[0] == 1.0);
}

TEST_CASE("identical runs are bit-identical after 10 steps") {
  auto run = [] {
    Rng rng(77);
    const Tensor p = Tensor::parameter("w", {4}, gradcheck::random_values(rng, 4, -1, 1));
    Adam adam({p}, {});
    for (int i = 0; i < 10; ++i) {
      Tensor q = p;
      q.zero_grad();
      sum(square(add_scalar(p, 0.3))).backward();
      adam.step();
    }
    return vals(p);
  };
  CHECK(run() == run());
}

}  // TEST_SUITE
