#pragma once

#include <memory>
#include <vector>

#include "xdecode/nn.hpp"
#include "xdecode/rng.hpp"
#include "xdecode/tensor.hpp"

namespace xdecode {

// Generator shape. Widths double per stage and cap at 8x the base
// (64, 128, 256, 512, 512, ... for the default base of 64). Depth is
// chosen so the innermost activation is 1x1: 8 stages for 256-pixel
// inputs, 6 for 64-pixel ones.
struct GeneratorConfig {
  int in_channels = 3;
  int out_channels = 3;
  int base_width = 64;
  int depth = 8;

  static GeneratorConfig for_image(int image_size, int base_width = 64);
  int width(int stage) const;
  void validate() const;
};

// 70x70 PatchGAN shape. in_channels is 6 because the discriminator
// scores the degraded input stacked with the candidate restoration.
struct DiscriminatorConfig {
  int in_channels = 6;
  int base_width = 64;
  int n_layers = 3;

  void validate() const;
};

// Encoder-decoder with skip connections (pix2pix style U-Net).
// Encoder stages are stride-2 4x4 convs; decoder stages are stride-2
// transposed convs whose inputs are the previous decoder output
// concatenated with the matching encoder output. Instance norm
// everywhere except the outermost and innermost convs; tanh output.
class UNetGenerator {
 public:
  UNetGenerator(const GeneratorConfig& cfg, Rng& rng);

  Tensor forward(const Tensor& x);
  // Backpropagates dy (gradient at the tanh output), accumulating
  // parameter gradients unless opts says otherwise. Returns the
  // gradient at the input.
  Tensor backward(const Tensor& dy, const nn::BackwardOpts& opts = {});

  std::vector<nn::Param*> params();
  size_t param_count();
  void zero_grad();
  void set_half(bool half);
  const GeneratorConfig& config() const { return cfg_; }

 private:
  GeneratorConfig cfg_;
  // Indexed by stage; entries a stage doesn't use stay null
  // (enc_norm_[0], enc_norm_[depth-1], enc_act_[0], dec_norm_[0]).
  std::vector<std::unique_ptr<nn::Conv2d>> enc_conv_;
  std::vector<std::unique_ptr<nn::InstanceNorm2d>> enc_norm_;
  std::vector<std::unique_ptr<nn::LeakyReLU>> enc_act_;
  std::vector<std::unique_ptr<nn::ConvTranspose2d>> dec_conv_;
  std::vector<std::unique_ptr<nn::InstanceNorm2d>> dec_norm_;
  std::vector<std::unique_ptr<nn::ReLU>> dec_act_;
  nn::Tanh out_act_;
};

// PatchGAN discriminator: stride-2 4x4 convs (64, 128, 256 wide for
// the default base), one stride-1 512-wide conv, then a stride-1 conv
// to a single-channel score map. Leaky ReLU between stages, no
// sigmoid; scores feed the hinge losses directly.
class PatchDiscriminator {
 public:
  PatchDiscriminator(const DiscriminatorConfig& cfg, Rng& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy, const nn::BackwardOpts& opts = {});

  std::vector<nn::Param*> params() { return net_.params(); }
  size_t param_count() { return nn::param_count(net_.params()); }
  void zero_grad();
  void set_half(bool half) { net_.set_half_all(half); }
  const DiscriminatorConfig& config() const { return cfg_; }

 private:
  DiscriminatorConfig cfg_;
  nn::Sequential net_;
};

}  // namespace xdecode
