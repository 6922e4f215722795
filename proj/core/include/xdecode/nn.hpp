#pragma once

#include <cstdint>
#include <istream>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "xdecode/rng.hpp"
#include "xdecode/tensor.hpp"

namespace xdecode::nn {

// A learnable parameter block: value and accumulated gradient, same length.
struct Param {
  std::string name;
  std::vector<float> value;
  std::vector<float> grad;

  explicit Param(std::string name_, size_t size = 0)
      : name(std::move(name_)), value(size, 0.f), grad(size, 0.f) {}

  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.f); }
};

// Backward pass controls. Gradients w.r.t. parameters are skipped when a
// module only needs the data gradient (frozen nets, generator step
// through the discriminator).
struct BackwardOpts {
  bool param_grads = true;
};

class Layer {
 public:
  virtual ~Layer() = default;

  virtual Tensor forward(const Tensor& x) = 0;
  virtual Tensor backward(const Tensor& dy, const BackwardOpts& opts) = 0;
  virtual std::vector<Param*> params() { return {}; }

  // Emulated fp16 compute: outputs (and data gradients) are rounded
  // through binary16 after each layer.
  void set_half(bool half) { half_ = half; }
  bool half() const { return half_; }

 protected:
  void maybe_round(Tensor& t) const {
    if (half_) round_to_half(t.v);
  }
  bool half_ = false;
};

// 2-D convolution, zero padding. Weight layout [cout][cin][k][k].
class Conv2d : public Layer {
 public:
  Conv2d(std::string name, int cin, int cout, int k, int stride, int pad);

  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& dy, const BackwardOpts& opts) override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }

  void init(Rng& rng, double stddev = 0.02);
  int out_h(int in_h) const { return (in_h + 2 * pad_ - k_) / stride_ + 1; }
  int out_w(int in_w) const { return (in_w + 2 * pad_ - k_) / stride_ + 1; }

 private:
  int cin_, cout_, k_, stride_, pad_;
  Param weight_, bias_;
  Tensor x_;  // cached input
};

// Transposed 2-D convolution (stride-2 upsampling in the decoder).
// Weight layout [cin][cout][k][k].
class ConvTranspose2d : public Layer {
 public:
  ConvTranspose2d(std::string name, int cin, int cout, int k, int stride, int pad);

  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& dy, const BackwardOpts& opts) override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }

  void init(Rng& rng, double stddev = 0.02);
  int out_h(int in_h) const { return (in_h - 1) * stride_ - 2 * pad_ + k_; }
  int out_w(int in_w) const { return (in_w - 1) * stride_ - 2 * pad_ + k_; }

 private:
  int cin_, cout_, k_, stride_, pad_;
  Param weight_, bias_;
  Tensor x_;
};

// Instance normalization with affine parameters; statistics are per
// (sample, channel), so train and inference behave identically.
class InstanceNorm2d : public Layer {
 public:
  explicit InstanceNorm2d(std::string name, int channels, double eps = 1e-5);

  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& dy, const BackwardOpts& opts) override;
  std::vector<Param*> params() override { return {&gamma_, &beta_}; }

 private:
  int channels_;
  double eps_;
  Param gamma_, beta_;
  Tensor xhat_;
  std::vector<float> inv_std_;  // per (n, c)
};

class ReLU : public Layer {
 public:
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& dy, const BackwardOpts& opts) override;

 private:
  Tensor y_;
};

class LeakyReLU : public Layer {
 public:
  explicit LeakyReLU(float slope = 0.2f) : slope_(slope) {}
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& dy, const BackwardOpts& opts) override;

 private:
  float slope_;
  Tensor y_;
};

class Tanh : public Layer {
 public:
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& dy, const BackwardOpts& opts) override;

 private:
  Tensor y_;
};

// 2x2 max pooling, stride 2.
class MaxPool2d : public Layer {
 public:
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& dy, const BackwardOpts& opts) override;

 private:
  int in_h_ = 0, in_w_ = 0, in_c_ = 0, in_n_ = 0;
  std::vector<uint32_t> argmax_;
};

// Plain layer chain.
class Sequential : public Layer {
 public:
  template <typename L, typename... Args>
  L* add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L* raw = layer.get();
    layers_.push_back(std::move(layer));
    return raw;
  }

  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& dy, const BackwardOpts& opts) override;
  std::vector<Param*> params() override;

  void set_half_all(bool half);
  size_t size() const { return layers_.size(); }
  Layer* at(size_t i) { return layers_[i].get(); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// Adam over a parameter set. Moments live here, keyed by parameter
// order, and serialize with the checkpoint.
class Adam {
 public:
  Adam(std::vector<Param*> params, double beta1 = 0.5, double beta2 = 0.999,
       double eps = 1e-8);

  void zero_grad();
  void step(double lr);

  // Loss-scaled variant for mixed precision: gradients are divided by
  // `scale` first; the update is skipped if any gradient is non-finite.
  // Returns false when skipped.
  bool step_scaled(double lr, double scale);

  void save(std::ostream& os) const;
  void load(std::istream& is);

  int64_t steps() const { return t_; }

 private:
  std::vector<Param*> params_;
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

size_t param_count(const std::vector<Param*>& params);

// Raw little-endian parameter blob I/O (shared by checkpoints).
void write_params(std::ostream& os, const std::vector<Param*>& params);
void read_params(std::istream& is, const std::vector<Param*>& params);

}  // namespace xdecode::nn
