#define EIGEN_DONT_PARALLELIZE
#include "xdecode/nn.hpp"

#include <Eigen/Core>
#include <cassert>
#include <cmath>
#include <string>

#include "xdecode/error.hpp"

namespace xdecode::nn {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;

// ---------------------------------------------------------------------------
// im2col / col2im for zero-padded convolution geometry.
// cols is [c*k*k, out_h*out_w], one column per output position.

static void im2col(const float* src, int c, int h, int w, int k, int stride, int pad,
                   int out_h, int out_w, float* cols) {
  const int L = out_h * out_w;
  for (int ic = 0; ic < c; ++ic) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* dst = cols + (static_cast<size_t>(ic) * k * k + ky * k + kx) * L;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + out_w, 0.f);
            dst += out_w;
            continue;
          }
          const float* row = src + (static_cast<size_t>(ic) * h + iy) * w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kx;
            *dst++ = (ix >= 0 && ix < w) ? row[ix] : 0.f;
          }
        }
      }
    }
  }
}

static void col2im(const float* cols, int c, int h, int w, int k, int stride, int pad,
                   int out_h, int out_w, float* dst) {
  const int L = out_h * out_w;
  std::fill(dst, dst + static_cast<size_t>(c) * h * w, 0.f);
  for (int ic = 0; ic < c; ++ic) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* src = cols + (static_cast<size_t>(ic) * k * k + ky * k + kx) * L;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) {
            src += out_w;
            continue;
          }
          float* row = dst + (static_cast<size_t>(ic) * h + iy) * w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) row[ix] += src[ox];
          }
          src += out_w;
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(std::string name, int cin, int cout, int k, int stride, int pad)
    : cin_(cin), cout_(cout), k_(k), stride_(stride), pad_(pad),
      weight_(name + ".weight", static_cast<size_t>(cout) * cin * k * k),
      bias_(name + ".bias", cout) {}

void Conv2d::init(Rng& rng, double stddev) {
  for (float& v : weight_.value) v = static_cast<float>(rng.normal(0.0, stddev));
  std::fill(bias_.value.begin(), bias_.value.end(), 0.f);
}

Tensor Conv2d::forward(const Tensor& x) {
  assert(x.c == cin_);
  x_ = x;
  const int oh = out_h(x.h), ow = out_w(x.w);
  if (oh <= 0 || ow <= 0)
    throw Error(Errc::invalid_config,
                "conv input " + std::to_string(x.h) + "x" + std::to_string(x.w) +
                    " is too small for kernel " + std::to_string(k_));
  const int L = oh * ow;
  Tensor y(x.n, cout_, oh, ow);
  std::vector<float> cols(static_cast<size_t>(cin_) * k_ * k_ * L);

  CMapM W(weight_.value.data(), cout_, cin_ * k_ * k_);
  for (int i = 0; i < x.n; ++i) {
    im2col(x.image(i), cin_, x.h, x.w, k_, stride_, pad_, oh, ow, cols.data());
    CMapM C(cols.data(), cin_ * k_ * k_, L);
    MapM Y(y.image(i), cout_, L);
    Y.noalias() = W * C;
    for (int oc = 0; oc < cout_; ++oc) Y.row(oc).array() += bias_.value[oc];
  }
  maybe_round(y);
  return y;
}

Tensor Conv2d::backward(const Tensor& dy, const BackwardOpts& opts) {
  const int oh = dy.h, ow = dy.w;
  const int L = oh * ow;
  Tensor dx(x_.n, cin_, x_.h, x_.w);
  std::vector<float> cols(static_cast<size_t>(cin_) * k_ * k_ * L);
  std::vector<float> dcols(cols.size());

  CMapM W(weight_.value.data(), cout_, cin_ * k_ * k_);
  MapM dW(weight_.grad.data(), cout_, cin_ * k_ * k_);
  for (int i = 0; i < x_.n; ++i) {
    CMapM dY(dy.image(i), cout_, L);
    if (opts.param_grads) {
      im2col(x_.image(i), cin_, x_.h, x_.w, k_, stride_, pad_, oh, ow, cols.data());
      CMapM C(cols.data(), cin_ * k_ * k_, L);
      dW.noalias() += dY * C.transpose();
      // Scalar loop, not an Eigen redux: packet reductions change
      // summation order with buffer alignment, and the bias sum must
      // come out bit-identical no matter where the tensor landed.
      for (int oc = 0; oc < cout_; ++oc) {
        const float* row = dy.image(i) + static_cast<size_t>(oc) * L;
        float acc = 0.f;
        for (int j = 0; j < L; ++j) acc += row[j];
        bias_.grad[oc] += acc;
      }
    }
    MapM dC(dcols.data(), cin_ * k_ * k_, L);
    dC.noalias() = W.transpose() * dY;
    col2im(dcols.data(), cin_, x_.h, x_.w, k_, stride_, pad_, oh, ow, dx.image(i));
  }
  maybe_round(dx);
  return dx;
}

// ---------------------------------------------------------------------------
// ConvTranspose2d

ConvTranspose2d::ConvTranspose2d(std::string name, int cin, int cout, int k, int stride,
                                 int pad)
    : cin_(cin), cout_(cout), k_(k), stride_(stride), pad_(pad),
      weight_(name + ".weight", static_cast<size_t>(cin) * cout * k * k),
      bias_(name + ".bias", cout) {}

void ConvTranspose2d::init(Rng& rng, double stddev) {
  for (float& v : weight_.value) v = static_cast<float>(rng.normal(0.0, stddev));
  std::fill(bias_.value.begin(), bias_.value.end(), 0.f);
}

// Forward scatters through the adjoint geometry: a conv with the same
// (k, stride, pad) maps the output of this layer back onto its input.
Tensor ConvTranspose2d::forward(const Tensor& x) {
  assert(x.c == cin_);
  x_ = x;
  const int oh = out_h(x.h), ow = out_w(x.w);
  const int Lin = x.h * x.w;
  Tensor y(x.n, cout_, oh, ow);
  std::vector<float> cols(static_cast<size_t>(cout_) * k_ * k_ * Lin);

  CMapM W(weight_.value.data(), cin_, cout_ * k_ * k_);
  for (int i = 0; i < x.n; ++i) {
    CMapM X(x.image(i), cin_, Lin);
    MapM C(cols.data(), cout_ * k_ * k_, Lin);
    C.noalias() = W.transpose() * X;
    col2im(cols.data(), cout_, oh, ow, k_, stride_, pad_, x.h, x.w, y.image(i));
    MapM Y(y.image(i), cout_, oh * ow);
    for (int oc = 0; oc < cout_; ++oc) Y.row(oc).array() += bias_.value[oc];
  }
  maybe_round(y);
  return y;
}

Tensor ConvTranspose2d::backward(const Tensor& dy, const BackwardOpts& opts) {
  const int Lin = x_.h * x_.w;
  Tensor dx(x_.n, cin_, x_.h, x_.w);
  std::vector<float> dcols(static_cast<size_t>(cout_) * k_ * k_ * Lin);

  CMapM W(weight_.value.data(), cin_, cout_ * k_ * k_);
  MapM dW(weight_.grad.data(), cin_, cout_ * k_ * k_);
  for (int i = 0; i < x_.n; ++i) {
    im2col(dy.image(i), cout_, dy.h, dy.w, k_, stride_, pad_, x_.h, x_.w, dcols.data());
    CMapM dC(dcols.data(), cout_ * k_ * k_, Lin);
    MapM dX(dx.image(i), cin_, Lin);
    dX.noalias() = W * dC;
    if (opts.param_grads) {
      CMapM X(x_.image(i), cin_, Lin);
      dW.noalias() += X * dC.transpose();
      // Same fixed-order reduction as Conv2d: alignment must not be
      // able to perturb the sum.
      const int area = dy.h * dy.w;
      for (int oc = 0; oc < cout_; ++oc) {
        const float* row = dy.image(i) + static_cast<size_t>(oc) * area;
        float acc = 0.f;
        for (int j = 0; j < area; ++j) acc += row[j];
        bias_.grad[oc] += acc;
      }
    }
  }
  maybe_round(dx);
  return dx;
}

// ---------------------------------------------------------------------------
// InstanceNorm2d

InstanceNorm2d::InstanceNorm2d(std::string name, int channels, double eps)
    : channels_(channels), eps_(eps),
      gamma_(name + ".gamma", channels), beta_(name + ".beta", channels) {
  std::fill(gamma_.value.begin(), gamma_.value.end(), 1.f);
}

Tensor InstanceNorm2d::forward(const Tensor& x) {
  assert(x.c == channels_);
  const size_t plane = x.plane();
  Tensor y(x.n, x.c, x.h, x.w);
  xhat_ = Tensor(x.n, x.c, x.h, x.w);
  inv_std_.assign(static_cast<size_t>(x.n) * x.c, 0.f);

  for (int i = 0; i < x.n; ++i) {
    for (int ic = 0; ic < x.c; ++ic) {
      const float* src = x.image(i) + ic * plane;
      double mean = 0.0;
      for (size_t p = 0; p < plane; ++p) mean += src[p];
      mean /= static_cast<double>(plane);
      double var = 0.0;
      for (size_t p = 0; p < plane; ++p) {
        const double d = src[p] - mean;
        var += d * d;
      }
      var /= static_cast<double>(plane);
      const float inv = static_cast<float>(1.0 / std::sqrt(var + eps_));
      inv_std_[static_cast<size_t>(i) * x.c + ic] = inv;

      float* xh = xhat_.image(i) + ic * plane;
      float* dst = y.image(i) + ic * plane;
      const float g = gamma_.value[ic], b = beta_.value[ic];
      const float m = static_cast<float>(mean);
      for (size_t p = 0; p < plane; ++p) {
        xh[p] = (src[p] - m) * inv;
        dst[p] = g * xh[p] + b;
      }
    }
  }
  maybe_round(y);
  return y;
}

Tensor InstanceNorm2d::backward(const Tensor& dy, const BackwardOpts& opts) {
  const size_t plane = dy.plane();
  Tensor dx(dy.n, dy.c, dy.h, dy.w);
  for (int i = 0; i < dy.n; ++i) {
    for (int ic = 0; ic < dy.c; ++ic) {
      const float* dsrc = dy.image(i) + ic * plane;
      const float* xh = xhat_.image(i) + ic * plane;
      double sum_dy = 0.0, sum_dy_xh = 0.0;
      for (size_t p = 0; p < plane; ++p) {
        sum_dy += dsrc[p];
        sum_dy_xh += dsrc[p] * xh[p];
      }
      if (opts.param_grads) {
        gamma_.grad[ic] += static_cast<float>(sum_dy_xh);
        beta_.grad[ic] += static_cast<float>(sum_dy);
      }
      const float mean_dy = static_cast<float>(sum_dy / static_cast<double>(plane));
      const float mean_dy_xh = static_cast<float>(sum_dy_xh / static_cast<double>(plane));
      const float scale = gamma_.value[ic] * inv_std_[static_cast<size_t>(i) * dy.c + ic];
      float* dst = dx.image(i) + ic * plane;
      for (size_t p = 0; p < plane; ++p) {
        dst[p] = scale * (dsrc[p] - mean_dy - xh[p] * mean_dy_xh);
      }
    }
  }
  maybe_round(dx);
  return dx;
}

// ---------------------------------------------------------------------------
// Activations

Tensor ReLU::forward(const Tensor& x) {
  Tensor y = x;
  for (float& v : y.v) v = v > 0.f ? v : 0.f;
  maybe_round(y);
  y_ = y;
  return y;
}

Tensor ReLU::backward(const Tensor& dy, const BackwardOpts&) {
  Tensor dx = dy;
  for (size_t i = 0; i < dx.v.size(); ++i) {
    if (y_.v[i] <= 0.f) dx.v[i] = 0.f;
  }
  maybe_round(dx);
  return dx;
}

Tensor LeakyReLU::forward(const Tensor& x) {
  Tensor y = x;
  for (float& v : y.v) v = v > 0.f ? v : slope_ * v;
  maybe_round(y);
  y_ = y;
  return y;
}

Tensor LeakyReLU::backward(const Tensor& dy, const BackwardOpts&) {
  Tensor dx = dy;
  for (size_t i = 0; i < dx.v.size(); ++i) {
    if (y_.v[i] <= 0.f) dx.v[i] *= slope_;
  }
  maybe_round(dx);
  return dx;
}

Tensor Tanh::forward(const Tensor& x) {
  Tensor y = x;
  for (float& v : y.v) v = std::tanh(v);
  maybe_round(y);
  y_ = y;
  return y;
}

Tensor Tanh::backward(const Tensor& dy, const BackwardOpts&) {
  Tensor dx = dy;
  for (size_t i = 0; i < dx.v.size(); ++i) {
    dx.v[i] *= 1.f - y_.v[i] * y_.v[i];
  }
  maybe_round(dx);
  return dx;
}

// ---------------------------------------------------------------------------
// MaxPool2d

Tensor MaxPool2d::forward(const Tensor& x) {
  in_n_ = x.n;
  in_c_ = x.c;
  in_h_ = x.h;
  in_w_ = x.w;
  const int oh = x.h / 2, ow = x.w / 2;
  Tensor y(x.n, x.c, oh, ow);
  argmax_.assign(y.size(), 0);
  size_t out_idx = 0;
  for (int i = 0; i < x.n; ++i) {
    for (int ic = 0; ic < x.c; ++ic) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          float best = -std::numeric_limits<float>::infinity();
          uint32_t best_idx = 0;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const int iy = 2 * oy + dy, ix = 2 * ox + dx;
              const size_t idx = ((static_cast<size_t>(i) * x.c + ic) * x.h + iy) * x.w + ix;
              if (x.v[idx] > best) {
                best = x.v[idx];
                best_idx = static_cast<uint32_t>(idx);
              }
            }
          }
          y.v[out_idx] = best;
          argmax_[out_idx] = best_idx;
          ++out_idx;
        }
      }
    }
  }
  maybe_round(y);
  return y;
}

Tensor MaxPool2d::backward(const Tensor& dy, const BackwardOpts&) {
  Tensor dx(in_n_, in_c_, in_h_, in_w_);
  for (size_t i = 0; i < dy.v.size(); ++i) {
    dx.v[argmax_[i]] += dy.v[i];
  }
  maybe_round(dx);
  return dx;
}

// ---------------------------------------------------------------------------
// Sequential

Tensor Sequential::forward(const Tensor& x) {
  Tensor y = x;
  for (auto& layer : layers_) y = layer->forward(y);
  return y;
}

Tensor Sequential::backward(const Tensor& dy, const BackwardOpts& opts) {
  Tensor g = dy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    g = (*it)->backward(g, opts);
  }
  return g;
}

std::vector<Param*> Sequential::params() {
  std::vector<Param*> out;
  for (auto& layer : layers_) {
    for (Param* p : layer->params()) out.push_back(p);
  }
  return out;
}

void Sequential::set_half_all(bool half) {
  set_half(half);
  for (auto& layer : layers_) layer->set_half(half);
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(std::vector<Param*> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (Param* p : params_) {
    m_.emplace_back(p->value.size(), 0.f);
    v_.emplace_back(p->value.size(), 0.f);
  }
}

void Adam::zero_grad() {
  for (Param* p : params_) p->zero_grad();
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    Param& p = *params_[pi];
    std::vector<float>& m = m_[pi];
    std::vector<float>& v = v_[pi];
    for (size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      m[j] = static_cast<float>(beta1_ * m[j] + (1.0 - beta1_) * g);
      v[j] = static_cast<float>(beta2_ * v[j] + (1.0 - beta2_) * g * g);
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p.value[j] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps_));
    }
  }
}

bool Adam::step_scaled(double lr, double scale) {
  const float inv = static_cast<float>(1.0 / scale);
  bool finite = true;
  for (Param* p : params_) {
    for (float& g : p->grad) {
      g *= inv;
      if (!std::isfinite(g)) finite = false;
    }
  }
  if (!finite) return false;
  step(lr);
  return true;
}

void Adam::save(std::ostream& os) const {
  const uint64_t t = static_cast<uint64_t>(t_);
  os.write(reinterpret_cast<const char*>(&t), sizeof(t));
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    os.write(reinterpret_cast<const char*>(m_[pi].data()), m_[pi].size() * sizeof(float));
    os.write(reinterpret_cast<const char*>(v_[pi].data()), v_[pi].size() * sizeof(float));
  }
}

void Adam::load(std::istream& is) {
  uint64_t t = 0;
  is.read(reinterpret_cast<char*>(&t), sizeof(t));
  t_ = static_cast<int64_t>(t);
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    is.read(reinterpret_cast<char*>(m_[pi].data()), m_[pi].size() * sizeof(float));
    is.read(reinterpret_cast<char*>(v_[pi].data()), v_[pi].size() * sizeof(float));
  }
  if (!is) throw Error(Errc::checkpoint_io, "truncated optimizer state");
}

size_t param_count(const std::vector<Param*>& params) {
  size_t total = 0;
  for (const Param* p : params) total += p->value.size();
  return total;
}

void write_params(std::ostream& os, const std::vector<Param*>& params) {
  const uint64_t count = params.size();
  os.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (const Param* p : params) {
    const uint64_t len = p->value.size();
    os.write(reinterpret_cast<const char*>(&len), sizeof(len));
    os.write(reinterpret_cast<const char*>(p->value.data()), len * sizeof(float));
  }
}

void read_params(std::istream& is, const std::vector<Param*>& params) {
  // Distinguish a short stream (checkpoint_io) from metadata that read
  // fine but describes a different model (checkpoint_mismatch). A failed
  // read leaves the next length at zero, which would masquerade as a
  // size mismatch unless the stream is checked first.
  const auto need = [&is]() {
    if (!is) throw Error(Errc::checkpoint_io, "truncated parameter data");
  };
  uint64_t count = 0;
  is.read(reinterpret_cast<char*>(&count), sizeof(count));
  need();
  if (count != params.size()) {
    throw Error(Errc::checkpoint_mismatch,
                "parameter block count mismatch: file has " + std::to_string(count) +
                    ", model has " + std::to_string(params.size()));
  }
  for (Param* p : params) {
    uint64_t len = 0;
    is.read(reinterpret_cast<char*>(&len), sizeof(len));
    need();
    if (len != p->value.size()) {
      throw Error(Errc::checkpoint_mismatch, "parameter size mismatch for " + p->name);
    }
    is.read(reinterpret_cast<char*>(p->value.data()), len * sizeof(float));
    need();
  }
}

}  // namespace xdecode::nn
