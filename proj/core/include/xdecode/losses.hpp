#pragma once

#include <cstdint>
#include <vector>

#include "xdecode/image.hpp"
#include "xdecode/nn.hpp"
#include "xdecode/tensor.hpp"

namespace xdecode {

// Weights of the combined generator objective
// total = lambda_perc * perc + lambda_l1 * l1 + lambda_g * hinge_g.
struct LossWeights {
  double lambda_perc = 1.0;
  double lambda_l1 = 1.0;
  double lambda_g = 30.0;

  void validate() const;
};

// Per-step loss values as logged to the training CSV.
struct LossReport {
  double perc = 0.0;
  double l1 = 0.0;
  double hinge_g = 0.0;
  double hinge_d = 0.0;
  double total_g = 0.0;
};

enum class AdvSide { d, g };

// Mean absolute difference over all elements. The _grad variants also
// return d(loss)/d(first argument); gradients w.r.t. the second follow
// by symmetry (negated) and are not needed anywhere.
double l1_loss(const Tensor& a, const Tensor& b);
double l1_loss(const ImageTensor& a, const ImageTensor& b);
double l1_loss_grad(const Tensor& a, const Tensor& b, Tensor& da);

// Hinge losses on raw discriminator score maps:
//   L_D = mean(max(0, 1 - real)) + mean(max(0, 1 + fake))
//   L_G = -mean(fake)
double hinge_d(const Tensor& real_scores, const Tensor& fake_scores);
double hinge_d_grad(const Tensor& real_scores, const Tensor& fake_scores,
                    Tensor& dreal, Tensor& dfake);
double hinge_g(const Tensor& fake_scores);
double hinge_g_grad(const Tensor& fake_scores, Tensor& dfake);

// Sigmoid cross-entropy alternative for the adversarial ablation.
// Scores are logits. d side: mean softplus(-real) + mean softplus(fake).
// g side uses the non-saturating form mean softplus(-fake); real_scores
// are ignored there.
double bce_adversarial(const Tensor& real_scores, const Tensor& fake_scores,
                       AdvSide side);
double bce_adversarial_grad(const Tensor& real_scores, const Tensor& fake_scores,
                            AdvSide side, Tensor& dreal, Tensor& dfake);

double total_generator_loss(const LossReport& parts, const LossWeights& w);

// Fills total_g from the parts and weights.
LossReport make_report(double perc, double l1, double hinge_g_v, double hinge_d_v,
                       const LossWeights& w);

// Feature network for the perceptual loss: a frozen VGG16-shaped stack
// (3x3 convs, 2x2 max pools) truncated after the third block's last
// activation. Pretrained classifier weights are not shippable here, so
// the weights are random but pinned by a constant seed; the loss is
// still a meaningful fixed perceptual metric and identical across runs.
struct FeatureExtractorConfig {
  // Channel widths of conv1_1..conv3_3.
  std::vector<int> widths = {64, 64, 128, 128, 256, 256, 256};
  uint64_t weight_seed = 0x7a3c9f0451e82b6dULL;

  // Quarter-width variant so small training configs stay cheap.
  static FeatureExtractorConfig thin();
};

class FeatureExtractor {
 public:
  explicit FeatureExtractor(const FeatureExtractorConfig& cfg = {});

  // Maps signed-range images to the extractor's expected input:
  // rescale to [0,1], then per-channel mean/std normalization.
  Tensor prepare(const Tensor& signed_images) const;

  // Forward over prepared input; returns the truncation-layer features.
  Tensor features(const Tensor& prepared);

  // Data gradient back to the prepared input (weights stay frozen).
  Tensor backward(const Tensor& dfeatures);

  size_t param_count() { return nn::param_count(net_.params()); }
  const FeatureExtractorConfig& config() const { return cfg_; }

 private:
  FeatureExtractorConfig cfg_;
  nn::Sequential net_;
};

// Mean absolute difference of feature maps, inputs signed-range.
double perceptual_loss(const Tensor& gen, const Tensor& real, FeatureExtractor& phi);
double perceptual_loss(const ImageTensor& gen, const ImageTensor& real,
                       FeatureExtractor& phi);
// Also backpropagates to the generated image.
double perceptual_loss_grad(const Tensor& gen, const Tensor& real,
                            FeatureExtractor& phi, Tensor& dgen);

}  // namespace xdecode
