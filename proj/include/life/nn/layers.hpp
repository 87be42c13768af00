#pragma once

#include "life/nn/ops.hpp"

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace life::nn {

/// Named, ordered parameter list. Order is creation order, which keeps
/// checkpoints and optimizer state stable.
template <typename S>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 1) : rng_(seed) {}

  /// Uniform(-bound, bound) initialisation. Draws are made in double so float
  /// and double models built from one seed agree to rounding.
  BasicTensor<S> create(const std::string& name, Shape shape, double bound) {
    Buffer<S> v(shape.numel());
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<S>(bound > 0 ? dist(rng_) : 0.0);
    auto t = BasicTensor<S>::from(shape, std::move(v), true);
    params_.emplace_back(name, t);
    return t;
  }

  const std::vector<std::pair<std::string, BasicTensor<S>>>& params() const { return params_; }

  std::vector<BasicTensor<S>> with_prefix(const std::string& prefix) const {
    std::vector<BasicTensor<S>> out;
    for (const auto& [name, t] : params_) {
      if (name.rfind(prefix, 0) == 0) out.push_back(t);
    }
    return out;
  }

  Index count() const {
    Index n = 0;
    for (const auto& [name, t] : params_) n += t.shape().numel();
    return n;
  }

 private:
  std::mt19937_64 rng_;
  std::vector<std::pair<std::string, BasicTensor<S>>> params_;
};

template <typename S>
struct Conv {
  BasicTensor<S> weight, bias;

  Conv() = default;
  /// Kaiming-uniform weights (bound sqrt(6 / fan_in)) times `gain`, zero bias.
  Conv(ParamStore<S>& store, const std::string& name, Index cin, Index cout, Index k, double gain = 1.0) {
    const double bound = gain * std::sqrt(6.0 / static_cast<double>(cin * k * k));
    weight = store.create(name + ".weight", Shape{cout, cin, k, k}, bound);
    bias = store.create(name + ".bias", Shape{1, cout, 1, 1}, 0.0);
  }

  BasicTensor<S> operator()(const BasicTensor<S>& x) const { return conv2d(x, weight, bias); }
};

/// conv3x3 -> instance norm -> ReLU.
template <typename S>
struct ConvNormRelu {
  Conv<S> conv;

  ConvNormRelu() = default;
  ConvNormRelu(ParamStore<S>& store, const std::string& name, Index cin, Index cout)
      : conv(store, name, cin, cout, 3) {}

  BasicTensor<S> operator()(const BasicTensor<S>& x) const { return relu(instance_norm(conv(x))); }
};

template <typename S>
struct ResidualBlock {
  ConvNormRelu<S> first;
  Conv<S> second;

  ResidualBlock() = default;
  ResidualBlock(ParamStore<S>& store, const std::string& name, Index ch)
      : first(store, name + ".0", ch, ch), second(store, name + ".1", ch, ch, 3) {}

  BasicTensor<S> operator()(const BasicTensor<S>& x) const {
    return relu(add(x, instance_norm(second(first(x)))));
  }
};

/// Recurrent convolution: one shared conv unit applied to x, then t more
/// times to x + previous state.
template <typename S>
struct RecurrentBlock {
  ConvNormRelu<S> unit;
  int steps = 2;

  RecurrentBlock() = default;
  RecurrentBlock(ParamStore<S>& store, const std::string& name, Index ch, int t)
      : unit(store, name, ch, ch), steps(t) {}

  BasicTensor<S> operator()(const BasicTensor<S>& x) const {
    BasicTensor<S> h = unit(x);
    for (int i = 0; i < steps; ++i) h = unit(add(x, h));
    return h;
  }
};

/// Recurrent residual block: 1x1 projection, two recurrent blocks, skip.
template <typename S>
struct RRCNNBlock {
  Conv<S> project;
  RecurrentBlock<S> r1, r2;

  RRCNNBlock() = default;
  RRCNNBlock(ParamStore<S>& store, const std::string& name, Index cin, Index cout, int t)
      : project(store, name + ".proj", cin, cout, 1),
        r1(store, name + ".rec0", cout, t),
        r2(store, name + ".rec1", cout, t) {}

  BasicTensor<S> operator()(const BasicTensor<S>& x) const {
    const BasicTensor<S> x0 = project(x);
    return add(x0, r2(r1(x0)));
  }
};

/// Single-channel residual U-Net: out = x + f(x). widths.size() - 1 pooling
/// levels; a single width gives a plain residual CNN.
template <typename S>
struct ResidualUNet {
  std::vector<ConvNormRelu<S>> enc_in;
  std::vector<ResidualBlock<S>> enc_res;
  std::vector<ConvNormRelu<S>> up_conv, merge;
  Conv<S> head;

  ResidualUNet() = default;
  ResidualUNet(ParamStore<S>& store, const std::string& name, const std::vector<int>& widths) {
    for (std::size_t l = 0; l < widths.size(); ++l) {
      const Index cin = l == 0 ? 1 : widths[l - 1];
      enc_in.emplace_back(store, name + ".down" + std::to_string(l) + ".conv", cin, widths[l]);
      enc_res.emplace_back(store, name + ".down" + std::to_string(l) + ".res", widths[l]);
    }
    for (std::size_t l = widths.size() - 1; l > 0; --l) {
      up_conv.emplace_back(store, name + ".up" + std::to_string(l) + ".conv", widths[l], widths[l - 1]);
      merge.emplace_back(store, name + ".up" + std::to_string(l) + ".merge", 2 * widths[l - 1], widths[l - 1]);
    }
    head = Conv<S>(store, name + ".head", widths[0], 1, 1, 0.1);
  }

  BasicTensor<S> operator()(const BasicTensor<S>& x) const {
    std::vector<BasicTensor<S>> skips;
    BasicTensor<S> h = x;
    for (std::size_t l = 0; l < enc_in.size(); ++l) {
      if (l > 0) h = maxpool2(h);
      h = enc_res[l](enc_in[l](h));
      skips.push_back(h);
    }
    for (std::size_t i = 0; i < up_conv.size(); ++i) {
      const auto& skip = skips[skips.size() - 2 - i];
      h = merge[i](concat(up_conv[i](upsample2(h)), skip));
    }
    return add(x, head(h));
  }
};

template <typename S>
struct EncoderOutput {
  BasicTensor<S> mu, sigma;
};

/// Recurrent residual U-Net with a mean head and a softplus scale head.
template <typename S>
struct R2UEncoder {
  std::vector<RRCNNBlock<S>> down;
  std::vector<ConvNormRelu<S>> up_conv;
  std::vector<RRCNNBlock<S>> up;
  Conv<S> mu_head, sigma_head;

  R2UEncoder() = default;
  R2UEncoder(ParamStore<S>& store, const std::string& name, const std::vector<int>& widths, int t) {
    for (std::size_t l = 0; l < widths.size(); ++l) {
      const Index cin = l == 0 ? 1 : widths[l - 1];
      down.emplace_back(store, name + ".down" + std::to_string(l), cin, widths[l], t);
    }
    for (std::size_t l = widths.size() - 1; l > 0; --l) {
      up_conv.emplace_back(store, name + ".up" + std::to_string(l) + ".conv", widths[l], widths[l - 1]);
      up.emplace_back(store, name + ".up" + std::to_string(l) + ".rrcnn", 2 * widths[l - 1], widths[l - 1], t);
    }
    mu_head = Conv<S>(store, name + ".mu", widths[0], 1, 1);
    sigma_head = Conv<S>(store, name + ".sigma", widths[0], 1, 1, 0.1);
  }

  EncoderOutput<S> operator()(const BasicTensor<S>& x) const {
    std::vector<BasicTensor<S>> skips;
    BasicTensor<S> h = x;
    for (std::size_t l = 0; l < down.size(); ++l) {
      if (l > 0) h = maxpool2(h);
      h = down[l](h);
      skips.push_back(h);
    }
    for (std::size_t i = 0; i < up.size(); ++i) {
      const auto& skip = skips[skips.size() - 2 - i];
      h = up[i](concat(skip, up_conv[i](upsample2(h))));
    }
    return {mu_head(h), softplus(sigma_head(h))};
  }
};

template <typename S>
class Adam {
 public:
  Adam(std::vector<BasicTensor<S>> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto& p : params) {
      slots_.push_back({p, Buffer<S>::Zero(p.value().size()), Buffer<S>::Zero(p.value().size())});
    }
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  long steps() const { return t_; }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const S step_size = static_cast<S>(lr_ / c1);
    const S b1 = static_cast<S>(beta1_), b2 = static_cast<S>(beta2_);
    const S root_c2 = static_cast<S>(std::sqrt(c2));
    for (auto& s : slots_) {
      if (!s.param.has_grad()) continue;
      const auto& g = s.param.grad();
      s.m = b1 * s.m + (S(1) - b1) * g;
      s.v = b2 * s.v + (S(1) - b2) * g.square();
      s.param.value() -= step_size * s.m / (s.v.sqrt() / root_c2 + static_cast<S>(eps_));
    }
  }

  void zero_grad() {
    for (auto& s : slots_) s.param.zero_grad();
  }

 private:
  struct Slot {
    BasicTensor<S> param;
    Buffer<S> m, v;
  };
  std::vector<Slot> slots_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace life::nn
