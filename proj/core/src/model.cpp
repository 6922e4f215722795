#include "xdecode/model.hpp"

#include <algorithm>
#include <cassert>
#include <string>

#include "xdecode/error.hpp"

namespace xdecode {

namespace {

void add_into(Tensor& dst, const Tensor& src) {
  assert(dst.v.size() == src.v.size());
  for (size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += src.v[i];
}

bool power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace

GeneratorConfig GeneratorConfig::for_image(int image_size, int base_width) {
  if (!power_of_two(image_size) || image_size < 8)
    throw Error(Errc::invalid_config,
                "generator image size must be a power of two >= 8, got " +
                    std::to_string(image_size));
  GeneratorConfig cfg;
  cfg.base_width = base_width;
  cfg.depth = 0;
  for (int s = image_size; s > 1; s /= 2) ++cfg.depth;
  cfg.validate();
  return cfg;
}

int GeneratorConfig::width(int stage) const {
  return base_width * std::min(1 << stage, 8);
}

void GeneratorConfig::validate() const {
  if (in_channels <= 0 || out_channels <= 0)
    throw Error(Errc::invalid_config, "generator channel counts must be positive");
  if (base_width <= 0)
    throw Error(Errc::invalid_config, "generator base_width must be positive");
  if (depth < 3)
    throw Error(Errc::invalid_config,
                "generator depth must be at least 3, got " + std::to_string(depth));
}

void DiscriminatorConfig::validate() const {
  if (in_channels <= 0)
    throw Error(Errc::invalid_config, "discriminator in_channels must be positive");
  if (base_width <= 0)
    throw Error(Errc::invalid_config, "discriminator base_width must be positive");
  if (n_layers < 1)
    throw Error(Errc::invalid_config, "discriminator n_layers must be at least 1");
}

UNetGenerator::UNetGenerator(const GeneratorConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const int D = cfg_.depth;
  enc_conv_.resize(D);
  enc_norm_.resize(D);
  enc_act_.resize(D);
  dec_conv_.resize(D);
  dec_norm_.resize(D);
  dec_act_.resize(D);

  for (int i = 0; i < D; ++i) {
    const int cin = (i == 0) ? cfg_.in_channels : cfg_.width(i - 1);
    enc_conv_[i] = std::make_unique<nn::Conv2d>("g.enc" + std::to_string(i),
                                                cin, cfg_.width(i), 4, 2, 1);
    if (i > 0) enc_act_[i] = std::make_unique<nn::LeakyReLU>(0.2f);
    if (i > 0 && i < D - 1)
      enc_norm_[i] = std::make_unique<nn::InstanceNorm2d>(
          "g.enc" + std::to_string(i) + ".norm", cfg_.width(i));
  }
  for (int i = 0; i < D; ++i) {
    // Stage i consumes d_{i+1} concatenated with e_i, except the
    // innermost stage which sees the bottleneck alone.
    const int cin = (i == D - 1) ? cfg_.width(D - 1) : 2 * cfg_.width(i);
    const int cout = (i == 0) ? cfg_.out_channels : cfg_.width(i - 1);
    dec_conv_[i] = std::make_unique<nn::ConvTranspose2d>(
        "g.dec" + std::to_string(i), cin, cout, 4, 2, 1);
    dec_act_[i] = std::make_unique<nn::ReLU>();
    if (i > 0)
      dec_norm_[i] = std::make_unique<nn::InstanceNorm2d>(
          "g.dec" + std::to_string(i) + ".norm", cout);
  }

  // Init in a fixed order so a seed pins the weights exactly.
  for (int i = 0; i < D; ++i) enc_conv_[i]->init(rng);
  for (int i = 0; i < D; ++i) dec_conv_[i]->init(rng);
}

Tensor UNetGenerator::forward(const Tensor& x) {
  const int D = cfg_.depth;
  assert(x.c == cfg_.in_channels);

  std::vector<Tensor> e(D);
  e[0] = enc_conv_[0]->forward(x);
  for (int i = 1; i < D; ++i) {
    Tensor h = enc_act_[i]->forward(e[i - 1]);
    h = enc_conv_[i]->forward(h);
    if (enc_norm_[i]) h = enc_norm_[i]->forward(h);
    e[i] = std::move(h);
  }

  Tensor d = std::move(e[D - 1]);  // no skip from the bottleneck
  for (int i = D - 1; i >= 1; --i) {
    Tensor h = (i == D - 1) ? std::move(d) : concat_channels(e[i], d);
    h = dec_act_[i]->forward(h);
    h = dec_conv_[i]->forward(h);
    h = dec_norm_[i]->forward(h);
    d = std::move(h);
  }
  Tensor h = dec_act_[0]->forward(concat_channels(e[0], d));
  h = dec_conv_[0]->forward(h);
  return out_act_.forward(h);
}

Tensor UNetGenerator::backward(const Tensor& dy, const nn::BackwardOpts& opts) {
  const int D = cfg_.depth;

  Tensor g = out_act_.backward(dy, opts);
  g = dec_conv_[0]->backward(g, opts);
  g = dec_act_[0]->backward(g, opts);

  // Gradients w.r.t. each encoder output. The skip path fills them in
  // as the decoder unwinds; the encoder pass below adds the
  // through-path contribution.
  std::vector<Tensor> ge(D);
  Tensor gd;  // gradient w.r.t. the current decoder stage output
  split_channels(g, cfg_.width(0), ge[0], gd);

  for (int i = 1; i < D; ++i) {
    Tensor h = dec_norm_[i]->backward(gd, opts);
    h = dec_conv_[i]->backward(h, opts);
    h = dec_act_[i]->backward(h, opts);
    if (i == D - 1) {
      ge[D - 1] = std::move(h);
    } else {
      Tensor skip;
      split_channels(h, cfg_.width(i), skip, gd);
      ge[i] = std::move(skip);
    }
  }

  for (int i = D - 1; i >= 1; --i) {
    Tensor h = std::move(ge[i]);
    if (enc_norm_[i]) h = enc_norm_[i]->backward(h, opts);
    h = enc_conv_[i]->backward(h, opts);
    h = enc_act_[i]->backward(h, opts);
    add_into(ge[i - 1], h);
  }
  return enc_conv_[0]->backward(ge[0], opts);
}

std::vector<nn::Param*> UNetGenerator::params() {
  std::vector<nn::Param*> out;
  auto take = [&out](nn::Layer* l) {
    if (!l) return;
    for (nn::Param* p : l->params()) out.push_back(p);
  };
  for (int i = 0; i < cfg_.depth; ++i) {
    take(enc_conv_[i].get());
    take(enc_norm_[i].get());
  }
  for (int i = 0; i < cfg_.depth; ++i) {
    take(dec_conv_[i].get());
    take(dec_norm_[i].get());
  }
  return out;
}

size_t UNetGenerator::param_count() { return nn::param_count(params()); }

void UNetGenerator::zero_grad() {
  for (nn::Param* p : params()) p->zero_grad();
}

void UNetGenerator::set_half(bool half) {
  auto set = [half](nn::Layer* l) {
    if (l) l->set_half(half);
  };
  for (int i = 0; i < cfg_.depth; ++i) {
    set(enc_conv_[i].get());
    set(enc_norm_[i].get());
    set(enc_act_[i].get());
    set(dec_conv_[i].get());
    set(dec_norm_[i].get());
    set(dec_act_[i].get());
  }
  out_act_.set_half(half);
}

PatchDiscriminator::PatchDiscriminator(const DiscriminatorConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  const int base = cfg_.base_width;
  auto mult = [](int n) { return std::min(1 << n, 8); };

  std::vector<nn::Conv2d*> convs;
  convs.push_back(net_.add<nn::Conv2d>("d.conv0", cfg_.in_channels, base, 4, 2, 1));
  net_.add<nn::LeakyReLU>(0.2f);
  for (int n = 1; n < cfg_.n_layers; ++n) {
    convs.push_back(net_.add<nn::Conv2d>("d.conv" + std::to_string(n),
                                         base * mult(n - 1), base * mult(n), 4, 2, 1));
    net_.add<nn::InstanceNorm2d>("d.conv" + std::to_string(n) + ".norm",
                                 base * mult(n));
    net_.add<nn::LeakyReLU>(0.2f);
  }
  const int n = cfg_.n_layers;
  convs.push_back(net_.add<nn::Conv2d>("d.conv" + std::to_string(n),
                                       base * mult(n - 1), base * mult(n), 4, 1, 1));
  net_.add<nn::InstanceNorm2d>("d.conv" + std::to_string(n) + ".norm",
                               base * mult(n));
  net_.add<nn::LeakyReLU>(0.2f);
  convs.push_back(net_.add<nn::Conv2d>("d.score", base * mult(n), 1, 4, 1, 1));

  for (nn::Conv2d* c : convs) c->init(rng);
}

Tensor PatchDiscriminator::forward(const Tensor& x) {
  assert(x.c == cfg_.in_channels);
  return net_.forward(x);
}

Tensor PatchDiscriminator::backward(const Tensor& dy, const nn::BackwardOpts& opts) {
  return net_.backward(dy, opts);
}

void PatchDiscriminator::zero_grad() {
  for (nn::Param* p : net_.params()) p->zero_grad();
}

}  // namespace xdecode
