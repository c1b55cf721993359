#include <cmath>
#include <limits>

#include "awada/losses.hpp"
#include "awada/nets.hpp"
#include "awada/ops.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace awada;

namespace {

const Shape kMap{1, 1, 4, 4};

Tensor constant(double v, const Shape& s = kMap) { return Tensor::full(s, v); }

Tensor half_mask(const Shape& s = kMap) {
  std::vector<double> v(shape_numel(s));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = (i % s.back()) < std::size_t(s.back() / 2) ? 1.0 : 0.0;
  return Tensor::from(s, v);
}

Tensor random_probs(Rng& rng, const Shape& s) {
  return softmax_channels(Tensor::from(s, gradcheck::random_values(rng, shape_numel(s), -3, 3)));
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("discriminator loss examples") {
  const double ln2 = std::log(2.0);
  CHECK(gan_loss_discriminator(constant(0.5), constant(0.5), GanForm::log).item() ==
        doctest::Approx(2 * ln2).epsilon(1e-14));
  CHECK(gan_loss_discriminator(constant(1.0), constant(0.0), GanForm::least_squares).item() == 0.0);
  CHECK(gan_loss_discriminator(constant(1.0), constant(0.0), GanForm::log).item() == doctest::Approx(0.0));
  CHECK_THROWS_AS(gan_loss_discriminator(constant(0.5), constant(0.5, {1, 1, 2, 2}), GanForm::log),
                  std::invalid_argument);
  CHECK_THROWS_AS(gan_loss_discriminator(constant(0.5), constant(0.5), GanForm::log, constant(1, {1, 1, 2, 2})),
                  std::invalid_argument);
}

TEST_CASE("zero fake attention removes the fake term and its gradient") {
  for (GanForm form : {GanForm::log, GanForm::least_squares}) {
    const Tensor real = Tensor::full(kMap, 0.7, true);
    const Tensor fake = Tensor::full(kMap, 0.4, true);
    const Tensor l = gan_loss_discriminator(real, fake, form, {}, constant(0.0));
    const Tensor real_only = gan_loss_discriminator(constant(0.7), constant(0.0), form);
    CHECK(l.item() == doctest::Approx(real_only.item()).epsilon(1e-14));
    l.backward();
    for (double g : fake.grad()) CHECK(g == 0.0);
    for (double g : real.grad()) CHECK(g != 0.0);
  }
}

TEST_CASE("generator loss examples") {
  CHECK(gan_loss_generator(constant(1.0), GanForm::least_squares).item() == 0.0);
  CHECK(gan_loss_generator(constant(0.5), GanForm::log).item() == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  for (GanForm form : {GanForm::log, GanForm::least_squares}) {
    const double plain = gan_loss_generator(constant(0.3), form).item();
    CHECK(gan_loss_generator(constant(0.3), form, half_mask()).item() == doctest::Approx(plain / 2).epsilon(1e-14));
  }
}

TEST_CASE("cycle loss examples") {
  Rng rng(1);
  const Shape s{2, 3, 4, 4};
  const Tensor x = Tensor::from(s, gradcheck::random_values(rng, shape_numel(s), -1, 1));
  CHECK(cycle_loss(x, x, x, x).item() == 0.0);
  const Tensor shifted = add_scalar(x, 0.5);
  CHECK(cycle_loss(x, shifted, x, x).item() == doctest::Approx(0.5).epsilon(1e-14));
  const Tensor ones = constant(1.0, {2, 1, 4, 4});
  CHECK(cycle_loss(x, shifted, x, shifted, ones, ones).item() == cycle_loss(x, shifted, x, shifted).item());
  CHECK_THROWS_AS(cycle_loss(x, constant(0, {2, 3, 4, 2}), x, x), std::invalid_argument);
}

TEST_CASE("semantic loss examples") {
  const Tensor q = constant(0.5, {1, 2, 3, 3});
  CHECK(semantic_loss(q, q).item() == 0.0);
  std::vector<double> pv(18, 0.0);
  for (int i = 0; i < 9; ++i) pv[i] = 1.0;
  const Tensor p = Tensor::from({1, 2, 3, 3}, pv);
  CHECK(semantic_loss(q, p).item() == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    CHECK(semantic_loss(random_probs(rng, {2, 3, 4, 4}), random_probs(rng, {2, 3, 4, 4})).item() >= 0.0);
  }
  CHECK_THROWS_AS(semantic_loss(constant(0.4, {1, 2, 3, 3}), q), std::invalid_argument);
  CHECK_THROWS_AS(semantic_loss(q, constant(0.5, {1, 2, 3, 2})), std::invalid_argument);
}

TEST_CASE("semantic loss leaves the segmenter untouched") {
  SegmenterNet f("seg", 3);
  f.freeze();
  Rng rng(4);
  const Tensor x = Tensor::from({1, 3, 8, 8}, gradcheck::random_values(rng, 192, -1, 1));
  GeneratorNet g("g", {}, 5);
  const Tensor l = semantic_loss(f.forward(x), f.forward(g.forward(x)));
  l.backward();
  for (const Tensor& p : f.parameters()) {
    for (double v : p.grad()) CHECK(v == 0.0);
  }
  bool moved = false;
  for (const Tensor& p : g.parameters()) {
    for (double v : p.grad()) moved = moved || v != 0.0;
  }
  CHECK(moved);
}

TEST_CASE("total loss examples") {
  const LossComponents ones{Tensor::scalar(1), Tensor::scalar(1), Tensor::scalar(1), Tensor::scalar(1)};
  CHECK(total_loss(ones, {}).item() == 13.0);
  CHECK(total_loss(ones, {0, 0, 0, 0}).item() == 0.0);
  const LossComponents c{Tensor::scalar(0.3), Tensor::scalar(0.7), Tensor::scalar(0.11), Tensor::scalar(0.2)};
  const double base = total_loss(c, {1, 1, 10, 1}).item();
  const double doubled = total_loss(c, {1, 1, 20, 1}).item();
  CHECK(doubled - base == doctest::Approx(10 * 0.11).epsilon(1e-14));
  const LossComponents bad{Tensor::scalar(1), Tensor::scalar(std::numeric_limits<double>::quiet_NaN()),
                           Tensor::scalar(1), {}};
  CHECK_THROWS_WITH_AS(total_loss(bad, {}), doctest::Contains("gan_ts"), std::runtime_error);
  CHECK_THROWS_AS(total_loss(ones, {-1, 1, 1, 1}), std::invalid_argument);
}

TEST_CASE("placement labels and forms") {
  CHECK(AwmPlacement{}.label() == "xx--");
  CHECK(AwmPlacement::none().label() == "----");
  CHECK(AwmPlacement::from_label("x-x-") == AwmPlacement{true, false, true, false});
  CHECK_THROWS_AS(AwmPlacement::from_label("xx"), std::invalid_argument);
  CHECK(gan_form_from_string(to_string(GanForm::log)) == GanForm::log);
  CHECK_THROWS_AS(gan_form_from_string("wasserstein"), std::invalid_argument);
}

TEST_CASE("every loss with all-ones attention equals its unweighted form") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const Shape m{2, 1, rng.uniform_int(1, 6), rng.uniform_int(1, 6)};
    const Shape img{2, 3, m[2], m[3]};
    const Tensor ones = constant(1.0, m);
    const Tensor dr = sigmoid(Tensor::from(m, gradcheck::random_values(rng, shape_numel(m), -3, 3)));
    const Tensor df = sigmoid(Tensor::from(m, gradcheck::random_values(rng, shape_numel(m), -3, 3)));
    for (GanForm form : {GanForm::log, GanForm::least_squares}) {
      CHECK(std::abs(gan_loss_discriminator(dr, df, form, ones, ones).item() -
                     gan_loss_discriminator(dr, df, form).item()) <= 1e-12);
      CHECK(std::abs(gan_loss_generator(df, form, ones).item() - gan_loss_generator(df, form).item()) <= 1e-12);
    }
    const Tensor a = Tensor::from(img, gradcheck::random_values(rng, shape_numel(img), -1, 1));
    const Tensor b = Tensor::from(img, gradcheck::random_values(rng, shape_numel(img), -1, 1));
    CHECK(std::abs(cycle_loss(a, b, b, a, ones, ones).item() - cycle_loss(a, b, b, a).item()) <= 1e-12);
    const Tensor p = random_probs(rng, {2, 2, m[2], m[3]}), q = random_probs(rng, {2, 2, m[2], m[3]});
    CHECK(std::abs(semantic_loss(p, q, ones).item() - semantic_loss(p, q).item()) <= 1e-12);
  }
}

TEST_CASE("normalized weighting divides by the attention mass") {
  const Tensor map = Tensor::from(kMap, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16});
  const Tensor attn = half_mask();
  // Left half columns 0..1 hold 1,2,5,6,9,10,13,14 (sum 60) over 8 weighted pixels.
  CHECK(reduce_loss_map(map, attn, true).item() == doctest::Approx(60.0 / 8).epsilon(1e-14));
  CHECK(reduce_loss_map(map, attn, false).item() == doctest::Approx(60.0 / 16).epsilon(1e-14));
  CHECK(reduce_loss_map(map, constant(0.0), true).item() == 0.0);
}

TEST_CASE("loss gradients match central differences") {
  Rng rng(99);
  for (const auto& c : gradcheck::loss_cases()) {
    double worst = 0;
    for (int i = 0; i < 20; ++i) worst = std::max(worst, c.run(rng));
    INFO(c.name);
    CHECK(worst < gradcheck::kTolerance);
  }
}

TEST_CASE("masked adversarial loss gives no gradient outside attended receptive fields") {
  // Three 4x4 stride-2 pad-1 layers: score column j sees input columns
  // [8j - 7, 8j + 14]. With only columns 0 and 1 attended, inputs at
  // column 23 and beyond cannot influence the loss.
  DiscriminatorNet d("d", 21);
  Rng rng(6);
  const Tensor x = Tensor::from({1, 3, 64, 64}, gradcheck::random_values(rng, 3 * 64 * 64, -1, 1), true);
  const Tensor score = d.forward(x);
  REQUIRE(score.shape() == Shape{1, 1, 8, 8});
  std::vector<double> av(64, 0.0);
  for (int r = 0; r < 8; ++r) av[r * 8] = av[r * 8 + 1] = 1.0;
  for (GanForm form : {GanForm::log, GanForm::least_squares}) {
    const Tensor xi = Tensor::from(x.shape(), {x.values().begin(), x.values().end()}, true);
    gan_loss_generator(d.forward(xi), form, Tensor::from({1, 1, 8, 8}, av)).backward();
    bool inside_nonzero = false;
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < 64; ++y) {
        for (int u = 0; u < 64; ++u) {
          const double g = xi.grad()[(std::size_t(c) * 64 + y) * 64 + u];
          if (u >= 23) {
            CHECK(g == 0.0);
          } else {
            inside_nonzero = inside_nonzero || g != 0.0;
          }
        }
      }
    }
    CHECK(inside_nonzero);
    for (const Tensor& p : d.parameters()) {
      Tensor q = p;
      q.zero_grad();
    }
  }
}

}  // TEST_SUITE
