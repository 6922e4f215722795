// Loss values against hand-computed cases, analytic gradients against
// finite differences, and the frozen feature extractor behind the
// perceptual term.

#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "xdecode/losses.hpp"

using namespace xdecode;
using xdecode::testing::fd_max_rel_error;
using xdecode::testing::random_tensor;

namespace {

Tensor scores(std::initializer_list<float> vals) {
  Tensor t(1, 1, 1, static_cast<int>(vals.size()));
  size_t i = 0;
  for (float v : vals) t.v[i++] = v;
  return t;
}

// Keep every element at least `margin` away from `kink` so central
// differences never straddle a nondifferentiable point.
Tensor away_from(Tensor t, float kink, float margin) {
  for (float& v : t.v) {
    if (std::abs(v - kink) < margin) v = v < kink ? kink - margin : kink + margin;
  }
  return t;
}

// FD step matched to the value grid: inputs snapped to multiples of
// 2^-10 make x +/- eps exactly representable, so the difference
// quotient carries no float32 rounding error.
constexpr double kFdEps = 0x1p-10;

Tensor snap(Tensor t) {
  for (float& v : t.v) v = std::nearbyintf(v * 1024.f) / 1024.f;
  return t;
}

}  // namespace

TEST_SUITE_BEGIN("losses");

TEST_CASE("l1 loss hand cases") {
  CHECK(l1_loss(scores({1.f, 1.f}), scores({1.f, 1.f})) == 0.0);
  CHECK(l1_loss(scores({1.f, 1.f, 1.f}), scores({0.f, 0.f, 0.f})) == doctest::Approx(1.0));
  CHECK(l1_loss(scores({2.f, -1.f}), scores({0.5f, 0.5f})) == doctest::Approx(1.5));

  // Scalar brute-force oracle on a random pair.
  Rng rng(61);
  const Tensor a = random_tensor(rng, 2, 3, 4, 4);
  const Tensor b = random_tensor(rng, 2, 3, 4, 4);
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += std::abs(static_cast<double>(a.v[i]) - b.v[i]);
  CHECK(l1_loss(a, b) == doctest::Approx(acc / a.size()).epsilon(1e-7));

  // ImageTensor overload agrees with the tensor one (single image, so
  // only the first batch entry of the oracle pair is copied).
  ImageTensor ia(4, 4, 3, RangeTag::signed_), ib(4, 4, 3, RangeTag::signed_);
  double img_acc = 0.0;
  for (size_t i = 0; i < ia.size(); ++i) {
    ia.data[i] = a.v[i];
    ib.data[i] = b.v[i];
    img_acc += std::abs(static_cast<double>(ia.data[i]) - ib.data[i]);
  }
  CHECK(l1_loss(ia, ib) == doctest::Approx(img_acc / ia.size()).epsilon(1e-7));
}

TEST_CASE("hinge_d hand cases") {
  // Both margins satisfied: zero loss.
  CHECK(hinge_d(scores({1.f, 2.f, 5.f}), scores({-1.f, -3.f})) == 0.0);
  // Zero scores: each side contributes its margin of 1.
  CHECK(hinge_d(scores({0.f, 0.f}), scores({0.f, 0.f, 0.f})) == doctest::Approx(2.0));
  // Element-wise hand evaluation.
  CHECK(hinge_d(scores({2.f, -3.f}), scores({0.5f, -4.f})) == doctest::Approx(2.75));
}

TEST_CASE("hinge_g hand cases") {
  CHECK(hinge_g(scores({0.f, 0.f})) == 0.0);
  CHECK(hinge_g(scores({1.f, 1.f})) == doctest::Approx(-1.0));
  CHECK(hinge_g(scores({0.5f, -0.5f, 2.0f})) == doctest::Approx(-2.0 / 3.0));
}

TEST_CASE("bce hand cases") {
  const double ln2 = std::log(2.0);
  // Zero logits: softplus(0) = ln 2 from each of the two d-side terms.
  CHECK(bce_adversarial(scores({0.f}), scores({0.f}), AdvSide::d) ==
        doctest::Approx(2 * ln2));
  CHECK(bce_adversarial(scores({0.f}), scores({0.f}), AdvSide::g) == doctest::Approx(ln2));
  // Saturated correct scores push the d loss toward zero.
  CHECK(bce_adversarial(scores({30.f}), scores({-30.f}), AdvSide::d) ==
        doctest::Approx(0.0).epsilon(1e-9));

  // Scalar oracle for the g side on random logits.
  Rng rng(62);
  const Tensor fake = random_tensor(rng, 1, 1, 3, 5);
  double acc = 0.0;
  for (float v : fake.v) acc += std::log1p(std::exp(-static_cast<double>(v)));
  CHECK(bce_adversarial(scores({0.f}), fake, AdvSide::g) ==
        doctest::Approx(acc / fake.size()).epsilon(1e-6));
}

TEST_CASE("l1 gradient matches finite differences") {
  Rng rng(63);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor a = snap(random_tensor(rng, 1, 2, 3, 4));
    const Tensor b = snap(random_tensor(rng, 1, 2, 3, 4));
    // Keep |a-b| off zero, the |.| kink.
    for (size_t i = 0; i < a.size(); ++i)
      if (std::abs(a.v[i] - b.v[i]) < 0.05f) a.v[i] += 0.125f;
    Tensor da;
    l1_loss_grad(a, b, da);
    Rng probes(630 + trial);
    const double err = fd_max_rel_error([&](const Tensor& t) { return l1_loss(t, b); }, a,
                                        da, kFdEps, 12, probes);
    CHECK(err <= 1e-4);
  }
}

TEST_CASE("hinge gradients match finite differences") {
  Rng rng(64);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor real = away_from(snap(random_tensor(rng, 1, 1, 4, 4)), 1.f, 0.0625f);
    const Tensor fake = away_from(snap(random_tensor(rng, 1, 1, 4, 4)), -1.f, 0.0625f);
    Tensor dreal, dfake;
    hinge_d_grad(real, fake, dreal, dfake);
    Rng probes(640 + trial);
    const double real_err = fd_max_rel_error(
        [&](const Tensor& t) { return hinge_d(t, fake); }, real, dreal, kFdEps, 10, probes);
    const double fake_err = fd_max_rel_error(
        [&](const Tensor& t) { return hinge_d(real, t); }, fake, dfake, kFdEps, 10, probes);
    CHECK(real_err <= 1e-4);
    CHECK(fake_err <= 1e-4);

    Tensor dg;
    hinge_g_grad(fake, dg);
    const double g_err = fd_max_rel_error([&](const Tensor& t) { return hinge_g(t); },
                                          fake, dg, kFdEps, 10, probes);
    CHECK(g_err <= 1e-4);
  }
}

TEST_CASE("bce gradients match finite differences") {
  Rng rng(65);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor real = snap(random_tensor(rng, 1, 1, 3, 3));
    const Tensor fake = snap(random_tensor(rng, 1, 1, 3, 3));
    for (AdvSide side : {AdvSide::d, AdvSide::g}) {
      Tensor dreal, dfake;
      bce_adversarial_grad(real, fake, side, dreal, dfake);
      Rng probes(650 + trial);
      const double fake_err = fd_max_rel_error(
          [&](const Tensor& t) { return bce_adversarial(real, t, side); }, fake, dfake,
          kFdEps, 10, probes);
      CHECK(fake_err <= 1e-4);
      if (side == AdvSide::d) {
        const double real_err = fd_max_rel_error(
            [&](const Tensor& t) { return bce_adversarial(t, fake, side); }, real, dreal,
            kFdEps, 10, probes);
        CHECK(real_err <= 1e-4);
      }
    }
  }
}

TEST_CASE("loss gradients point the right way") {
  // Raising real scores lowers the d loss while the margin is active.
  Tensor dreal, dfake;
  hinge_d_grad(scores({0.f}), scores({0.f}), dreal, dfake);
  CHECK(dreal.v[0] < 0.f);
  CHECK(dfake.v[0] > 0.f);
  // Inactive margins carry no gradient.
  hinge_d_grad(scores({2.f}), scores({-2.f}), dreal, dfake);
  CHECK(dreal.v[0] == 0.f);
  CHECK(dfake.v[0] == 0.f);
  Tensor dg;
  hinge_g_grad(scores({0.f}), dg);
  CHECK(dg.v[0] < 0.f);
}

TEST_CASE("weighted total") {
  LossReport parts;
  parts.perc = 1.0;
  parts.l1 = 1.0;
  parts.hinge_g = 1.0;
  CHECK(total_generator_loss(parts, LossWeights{}) == doctest::Approx(32.0));

  LossWeights zero{0.0, 0.0, 0.0};
  parts.perc = 5.0;
  CHECK(total_generator_loss(parts, zero) == 0.0);

  const LossReport r = make_report(0.5, 0.25, -1.0, 2.0, LossWeights{});
  CHECK(r.perc == 0.5);
  CHECK(r.l1 == 0.25);
  CHECK(r.hinge_g == -1.0);
  CHECK(r.hinge_d == 2.0);
  CHECK(r.total_g == doctest::Approx(0.5 + 0.25 - 30.0));

  LossWeights bad;
  bad.lambda_l1 = -1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("feature extractor shape and determinism") {
  FeatureExtractorConfig thin = FeatureExtractorConfig::thin();
  REQUIRE(thin.widths.size() == 7);
  CHECK(thin.widths == std::vector<int>{16, 16, 32, 32, 64, 64, 64});

  FeatureExtractor a(thin), b(thin);
  Rng rng(66);
  const Tensor x = random_tensor(rng, 1, 3, 32, 32, 0.4);
  const Tensor pa = a.prepare(x);
  CHECK(a.features(pa).v == b.features(b.prepare(x)).v);

  // Two pools shrink 32 to 8; channel count is the last width.
  Tensor f = a.features(pa);
  CHECK(f.c == 64);
  CHECK(f.h == 8);
  CHECK(f.w == 8);

  // Parameter count from the conv stack arithmetic.
  size_t expect = 0;
  int cin = 3;
  for (int wdt : thin.widths) {
    expect += static_cast<size_t>(wdt) * cin * 9 + wdt;
    cin = wdt;
  }
  CHECK(a.param_count() == expect);
}

TEST_CASE("prepare maps signed input to normalized unit range") {
  FeatureExtractor phi(FeatureExtractorConfig::thin());
  Tensor x(1, 3, 2, 2);
  for (float& v : x.v) v = -1.f;  // signed black
  const Tensor p = phi.prepare(x);
  // Channel means/stds of the normalization: black maps to -mean/std.
  const double mean[3] = {0.485, 0.456, 0.406};
  const double stdv[3] = {0.229, 0.224, 0.225};
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < 4; ++i) {
      CHECK(p.at(0, c, i / 2, i % 2) ==
            doctest::Approx(-mean[c] / stdv[c]).epsilon(1e-5));
    }
  }
}

TEST_CASE("perceptual loss basics") {
  FeatureExtractor phi(FeatureExtractorConfig::thin());
  Rng rng(67);
  const Tensor a = random_tensor(rng, 1, 3, 32, 32, 0.4);
  const Tensor b = random_tensor(rng, 1, 3, 32, 32, 0.4);

  CHECK(perceptual_loss(a, a, phi) == 0.0);
  const double ab = perceptual_loss(a, b, phi);
  CHECK(ab > 0.0);
  CHECK(perceptual_loss(b, a, phi) == doctest::Approx(ab).epsilon(1e-7));

  // Decomposed oracle: run the pipeline stages by hand.
  FeatureExtractor phi2(FeatureExtractorConfig::thin());
  const Tensor fa = phi2.features(phi2.prepare(a));
  const Tensor fb = phi2.features(phi2.prepare(b));
  double acc = 0.0;
  for (size_t i = 0; i < fa.size(); ++i)
    acc += std::abs(static_cast<double>(fa.v[i]) - fb.v[i]);
  CHECK(ab == doctest::Approx(acc / fa.size()).epsilon(1e-6));

  // ImageTensor overload.
  ImageTensor ia(32, 32, 3, RangeTag::signed_), ib(32, 32, 3, RangeTag::signed_);
  for (size_t i = 0; i < ia.size(); ++i) {
    ia.data[i] = a.v[i];
    ib.data[i] = b.v[i];
  }
  CHECK(perceptual_loss(ia, ib, phi) == doctest::Approx(ab).epsilon(1e-7));
}

TEST_CASE("perceptual gradient matches directional finite differences") {
  // Per-coordinate FD is hopeless here: individual derivatives are ~1e-3 and
  // the float32 feature stack leaves ~5e-7 noise on each loss evaluation, so
  // probe error lands around 5% no matter how correct the gradient is.
  // Directional derivatives aggregate the whole vector and keep the signal
  // three orders of magnitude above that floor.
  FeatureExtractor phi(FeatureExtractorConfig::thin());
  Rng rng(68);
  const Tensor real = random_tensor(rng, 1, 3, 16, 16, 0.4);
  Tensor gen = random_tensor(rng, 1, 3, 16, 16, 0.4);

  Tensor dgen;
  perceptual_loss_grad(gen, real, phi, dgen);
  REQUIRE(dgen.same_shape(gen));

  double norm = 0.0;
  for (float g : dgen.v) norm += static_cast<double>(g) * g;
  norm = std::sqrt(norm);
  REQUIRE(norm > 1e-4);

  const double eps = 3e-3;
  auto directional_fd = [&](const std::vector<double>& u) {
    Tensor plus = gen, minus = gen;
    for (size_t i = 0; i < u.size(); ++i) {
      plus.v[i] = static_cast<float>(static_cast<double>(gen.v[i]) + eps * u[i]);
      minus.v[i] = static_cast<float>(static_cast<double>(gen.v[i]) - eps * u[i]);
    }
    return (perceptual_loss(plus, real, phi) - perceptual_loss(minus, real, phi)) /
           (2.0 * eps);
  };
  auto dot_grad = [&](const std::vector<double>& u) {
    double acc = 0.0;
    for (size_t i = 0; i < u.size(); ++i) acc += static_cast<double>(dgen.v[i]) * u[i];
    return acc;
  };

  // Along the gradient itself the derivative equals |dgen|; anything
  // structurally wrong (sign, scale, transposed kernels) misses by a lot.
  std::vector<double> along(dgen.v.size());
  for (size_t i = 0; i < along.size(); ++i) along[i] = dgen.v[i] / norm;
  const double fd_along = directional_fd(along);
  CHECK(std::abs(fd_along - norm) <= 0.02 * norm);

  // Random unit directions cover components the gradient direction cannot.
  Rng probes(680);
  for (int k = 0; k < 4; ++k) {
    std::vector<double> u(dgen.v.size());
    double n2 = 0.0;
    for (double& x : u) {
      x = probes.normal(0.0, 1.0);
      n2 += x * x;
    }
    n2 = std::sqrt(n2);
    for (double& x : u) x /= n2;
    CHECK(std::abs(directional_fd(u) - dot_grad(u)) <= 5e-3 * norm);
  }
}

TEST_CASE("feature magnitudes stay usable through the stack") {
  // The pinned random weights are fan-in scaled; features must neither
  // vanish nor explode, or the loss would be numerically useless.
  FeatureExtractor phi(FeatureExtractorConfig::thin());
  Rng rng(69);
  const Tensor x = random_tensor(rng, 1, 3, 32, 32, 0.4);
  const Tensor f = phi.features(phi.prepare(x));
  double mean_abs = 0.0;
  for (float v : f.v) mean_abs += std::abs(v);
  mean_abs /= f.size();
  CHECK(mean_abs > 1e-3);
  CHECK(mean_abs < 1e3);
}

TEST_SUITE_END();
