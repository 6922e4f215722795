#include "xdecode/losses.hpp"

#include <cmath>
#include <string>

#include "xdecode/error.hpp"
#include "xdecode/rng.hpp"

namespace xdecode {

namespace {

// ImageNet channel statistics, the standard normalization for VGG-style
// feature inputs.
constexpr float kChanMean[3] = {0.485f, 0.456f, 0.406f};
constexpr float kChanStd[3] = {0.229f, 0.224f, 0.225f};

void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
  if (!a.same_shape(b))
    throw Error(Errc::invalid_config, std::string(who) + ": shape mismatch");
}

double softplus(double x) {
  // Stable in both tails.
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void LossWeights::validate() const {
  if (lambda_perc < 0 || lambda_l1 < 0 || lambda_g < 0)
    throw Error(Errc::invalid_config, "loss weights must be non-negative");
}

double l1_loss(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "l1_loss");
  double sum = 0.0;
  for (size_t i = 0; i < a.size(); ++i) sum += std::abs(static_cast<double>(a.v[i]) - b.v[i]);
  return sum / static_cast<double>(a.size());
}

double l1_loss(const ImageTensor& a, const ImageTensor& b) {
  return l1_loss(pack_image(a), pack_image(b));
}

double l1_loss_grad(const Tensor& a, const Tensor& b, Tensor& da) {
  require_same_shape(a, b, "l1_loss");
  da = Tensor(a.n, a.c, a.h, a.w);
  const double inv = 1.0 / static_cast<double>(a.size());
  double sum = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.v[i]) - b.v[i];
    sum += std::abs(d);
    da.v[i] = static_cast<float>(d > 0 ? inv : (d < 0 ? -inv : 0.0));
  }
  return sum * inv;
}

double hinge_d(const Tensor& real_scores, const Tensor& fake_scores) {
  double real_term = 0.0, fake_term = 0.0;
  for (float s : real_scores.v) real_term += std::max(0.0, 1.0 - s);
  for (float s : fake_scores.v) fake_term += std::max(0.0, 1.0 + s);
  return real_term / static_cast<double>(real_scores.size()) +
         fake_term / static_cast<double>(fake_scores.size());
}

double hinge_d_grad(const Tensor& real_scores, const Tensor& fake_scores,
                    Tensor& dreal, Tensor& dfake) {
  dreal = Tensor(real_scores.n, real_scores.c, real_scores.h, real_scores.w);
  dfake = Tensor(fake_scores.n, fake_scores.c, fake_scores.h, fake_scores.w);
  const double inv_r = 1.0 / static_cast<double>(real_scores.size());
  const double inv_f = 1.0 / static_cast<double>(fake_scores.size());
  double loss = 0.0;
  for (size_t i = 0; i < real_scores.size(); ++i) {
    const double m = 1.0 - real_scores.v[i];
    if (m > 0) {
      loss += m * inv_r;
      dreal.v[i] = static_cast<float>(-inv_r);
    }
  }
  for (size_t i = 0; i < fake_scores.size(); ++i) {
    const double m = 1.0 + fake_scores.v[i];
    if (m > 0) {
      loss += m * inv_f;
      dfake.v[i] = static_cast<float>(inv_f);
    }
  }
  return loss;
}

double hinge_g(const Tensor& fake_scores) {
  double sum = 0.0;
  for (float s : fake_scores.v) sum += s;
  return -sum / static_cast<double>(fake_scores.size());
}

double hinge_g_grad(const Tensor& fake_scores, Tensor& dfake) {
  dfake = Tensor(fake_scores.n, fake_scores.c, fake_scores.h, fake_scores.w);
  const float g = static_cast<float>(-1.0 / static_cast<double>(fake_scores.size()));
  std::fill(dfake.v.begin(), dfake.v.end(), g);
  return hinge_g(fake_scores);
}

double bce_adversarial(const Tensor& real_scores, const Tensor& fake_scores,
                       AdvSide side) {
  if (side == AdvSide::g) {
    double sum = 0.0;
    for (float s : fake_scores.v) sum += softplus(-s);
    return sum / static_cast<double>(fake_scores.size());
  }
  double real_term = 0.0, fake_term = 0.0;
  for (float s : real_scores.v) real_term += softplus(-s);
  for (float s : fake_scores.v) fake_term += softplus(s);
  return real_term / static_cast<double>(real_scores.size()) +
         fake_term / static_cast<double>(fake_scores.size());
}

double bce_adversarial_grad(const Tensor& real_scores, const Tensor& fake_scores,
                            AdvSide side, Tensor& dreal, Tensor& dfake) {
  dreal = Tensor(real_scores.n, real_scores.c, real_scores.h, real_scores.w);
  dfake = Tensor(fake_scores.n, fake_scores.c, fake_scores.h, fake_scores.w);
  const double inv_r = 1.0 / static_cast<double>(real_scores.size());
  const double inv_f = 1.0 / static_cast<double>(fake_scores.size());
  if (side == AdvSide::g) {
    for (size_t i = 0; i < fake_scores.size(); ++i)
      dfake.v[i] = static_cast<float>(-sigmoid(-fake_scores.v[i]) * inv_f);
  } else {
    for (size_t i = 0; i < real_scores.size(); ++i)
      dreal.v[i] = static_cast<float>(-sigmoid(-real_scores.v[i]) * inv_r);
    for (size_t i = 0; i < fake_scores.size(); ++i)
      dfake.v[i] = static_cast<float>(sigmoid(fake_scores.v[i]) * inv_f);
  }
  return bce_adversarial(real_scores, fake_scores, side);
}

double total_generator_loss(const LossReport& parts, const LossWeights& w) {
  return w.lambda_perc * parts.perc + w.lambda_l1 * parts.l1 +
         w.lambda_g * parts.hinge_g;
}

LossReport make_report(double perc, double l1, double hinge_g_v, double hinge_d_v,
                       const LossWeights& w) {
  LossReport r;
  r.perc = perc;
  r.l1 = l1;
  r.hinge_g = hinge_g_v;
  r.hinge_d = hinge_d_v;
  r.total_g = total_generator_loss(r, w);
  return r;
}

FeatureExtractorConfig FeatureExtractorConfig::thin() {
  FeatureExtractorConfig cfg;
  cfg.widths = {16, 16, 32, 32, 64, 64, 64};
  return cfg;
}

FeatureExtractor::FeatureExtractor(const FeatureExtractorConfig& cfg) : cfg_(cfg) {
  if (cfg_.widths.size() != 7)
    throw Error(Errc::invalid_config, "feature extractor needs 7 conv widths");

  std::vector<std::pair<nn::Conv2d*, int>> convs;  // layer, fan-in channels
  int cin = 3;
  auto conv = [&](int idx) {
    convs.emplace_back(net_.add<nn::Conv2d>("phi.conv" + std::to_string(idx),
                                            cin, cfg_.widths[idx], 3, 1, 1),
                       cin);
    net_.add<nn::ReLU>();
    cin = cfg_.widths[idx];
  };
  conv(0);
  conv(1);
  net_.add<nn::MaxPool2d>();
  conv(2);
  conv(3);
  net_.add<nn::MaxPool2d>();
  conv(4);
  conv(5);
  conv(6);

  // Fan-in scaled init keeps feature magnitudes comparable to the
  // input across the stack; with a fixed small stddev the truncation
  // layer would sit many orders of magnitude below the pixels.
  Rng rng(cfg_.weight_seed);
  for (auto [c, fan_in] : convs) c->init(rng, std::sqrt(2.0 / (9.0 * fan_in)));
}

Tensor FeatureExtractor::prepare(const Tensor& signed_images) const {
  if (signed_images.c != 3)
    throw Error(Errc::invalid_config, "feature extractor expects 3-channel input");
  Tensor out = signed_images;
  const size_t plane = out.plane();
  for (int i = 0; i < out.n; ++i) {
    for (int c = 0; c < 3; ++c) {
      float* p = out.image(i) + c * plane;
      for (size_t k = 0; k < plane; ++k)
        p[k] = ((p[k] + 1.f) * 0.5f - kChanMean[c]) / kChanStd[c];
    }
  }
  return out;
}

Tensor FeatureExtractor::features(const Tensor& prepared) {
  return net_.forward(prepared);
}

Tensor FeatureExtractor::backward(const Tensor& dfeatures) {
  nn::BackwardOpts opts;
  opts.param_grads = false;
  return net_.backward(dfeatures, opts);
}

double perceptual_loss(const Tensor& gen, const Tensor& real, FeatureExtractor& phi) {
  require_same_shape(gen, real, "perceptual_loss");
  const Tensor f_real = phi.features(phi.prepare(real));
  const Tensor f_gen = phi.features(phi.prepare(gen));
  return l1_loss(f_gen, f_real);
}

double perceptual_loss(const ImageTensor& gen, const ImageTensor& real,
                       FeatureExtractor& phi) {
  return perceptual_loss(pack_image(gen), pack_image(real), phi);
}

double perceptual_loss_grad(const Tensor& gen, const Tensor& real,
                            FeatureExtractor& phi, Tensor& dgen) {
  require_same_shape(gen, real, "perceptual_loss");
  const Tensor f_real = phi.features(phi.prepare(real));
  // Run gen second so the layer caches hold the pass we backprop.
  const Tensor f_gen = phi.features(phi.prepare(gen));

  Tensor dfeat;
  const double loss = l1_loss_grad(f_gen, f_real, dfeat);
  Tensor dprep = phi.backward(dfeat);

  // Undo prepare(): d/dx of ((x+1)/2 - mean)/std is 0.5/std per channel.
  dgen = std::move(dprep);
  const size_t plane = dgen.plane();
  for (int i = 0; i < dgen.n; ++i) {
    for (int c = 0; c < 3; ++c) {
      float* p = dgen.image(i) + c * plane;
      const float s = 0.5f / kChanStd[c];
      for (size_t k = 0; k < plane; ++k) p[k] *= s;
    }
  }
  return loss;
}

}  // namespace xdecode
