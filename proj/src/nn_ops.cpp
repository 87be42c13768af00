#include "life/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace life::nn {

namespace {

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
using MatMap = Eigen::Map<RowMat<S>>;

template <typename S>
using ConstMatMap = Eigen::Map<const RowMat<S>>;

void require_same(const Shape& a, const Shape& b, const char* op) {
  if (!(a == b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
  }
}

std::uint64_t pack_bits(const std::vector<bool>& bits) {
  std::uint64_t h = 1469598103934665603ULL;
  std::uint64_t word = 0;
  int count = 0;
  for (bool b : bits) {
    word = (word << 1) | (b ? 1U : 0U);
    if (++count == 64) {
      h = (h ^ word) * 1099511628211ULL;
      word = 0;
      count = 0;
    }
  }
  return (h ^ word ^ static_cast<std::uint64_t>(count)) * 1099511628211ULL;
}

/// Unfolds one sample [Cin, H, W] into [Cin*k*k, H*W] columns.
template <typename S>
void im2col(const S* in, Index cin, Index h, Index w, Index k, S* col) {
  const Index pad = k / 2;
  const Index hw = h * w;
  for (Index ci = 0; ci < cin; ++ci) {
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        S* row = col + ((ci * k + ky) * k + kx) * hw;
        const Index dx = kx - pad;
        const Index x0 = std::max<Index>(0, -dx);
        const Index x1 = std::min<Index>(w, w - dx);
        for (Index y = 0; y < h; ++y) {
          S* dst = row + y * w;
          const Index iy = y + ky - pad;
          if (iy < 0 || iy >= h || x0 >= x1) {
            std::fill(dst, dst + w, S(0));
            continue;
          }
          std::fill(dst, dst + x0, S(0));
          std::copy(in + (ci * h + iy) * w + x0 + dx, in + (ci * h + iy) * w + x1 + dx, dst + x0);
          std::fill(dst + x1, dst + w, S(0));
        }
      }
    }
  }
}

template <typename S>
void col2im_add(const S* col, Index cin, Index h, Index w, Index k, S* out) {
  const Index pad = k / 2;
  const Index hw = h * w;
  for (Index ci = 0; ci < cin; ++ci) {
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        const S* row = col + ((ci * k + ky) * k + kx) * hw;
        const Index dx = kx - pad;
        const Index x0 = std::max<Index>(0, -dx);
        const Index x1 = std::min<Index>(w, w - dx);
        for (Index y = 0; y < h; ++y) {
          const Index iy = y + ky - pad;
          if (iy < 0 || iy >= h) continue;
          S* dst = out + (ci * h + iy) * w + dx;
          const S* src = row + y * w;
          for (Index x = x0; x < x1; ++x) dst[x] += src[x];
        }
      }
    }
  }
}

}  // namespace

template <typename S>
BasicTensor<S> conv2d(const BasicTensor<S>& x, const BasicTensor<S>& weight, const BasicTensor<S>& bias) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.c != xs.c || ws.h != ws.w || ws.h % 2 != 1) {
    throw std::invalid_argument("conv2d: weight " + ws.str() + " incompatible with input " + xs.str());
  }
  if (bias.defined() && bias.shape().numel() != ws.n) {
    throw std::invalid_argument("conv2d: bias size must equal output channels");
  }
  const Index cout = ws.n, cin = xs.c, k = ws.h, hw = xs.plane();
  const Index kk = cin * k * k;
  const Shape os{xs.n, cout, xs.h, xs.w};
  Buffer<S> out(os.numel());
  const ConstMatMap<S> wm(weight.value().data(), cout, kk);

  const bool pointwise = (k == 1);
  const bool keep = detail::grad_enabled() && (x.requires_grad() || weight.requires_grad() ||
                                               (bias.defined() && bias.requires_grad()));
  auto cols = std::make_shared<std::vector<RowMat<S>>>();
  RowMat<S> scratch;
  for (Index n = 0; n < xs.n; ++n) {
    const S* xin = x.value().data() + n * cin * hw;
    MatMap<S> o(out.data() + n * cout * hw, cout, hw);
    if (pointwise) {
      o.noalias() = wm * ConstMatMap<S>(xin, cin, hw);
    } else {
      scratch.resize(kk, hw);
      im2col(xin, cin, xs.h, xs.w, k, scratch.data());
      o.noalias() = wm * scratch;
      if (keep && weight.requires_grad()) cols->push_back(scratch);
    }
    if (bias.defined()) o.colwise() += Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>(bias.value().data(), cout);
  }

  auto result = detail::make_output<S>(os, std::move(out), {x, weight, bias});
  if (!result.requires_grad()) return result;
  auto* self = result.node().get();
  auto xn = x.node(), wn = weight.node();
  auto bn = bias.defined() ? bias.node() : nullptr;
  self->backward = [self, xn, wn, bn, xs, cout, cin, k, hw, kk, pointwise, cols]() {
    const ConstMatMap<S> wmat(wn->value.data(), cout, kk);
    RowMat<S> dcol;
    for (Index n = 0; n < xs.n; ++n) {
      const ConstMatMap<S> g(self->grad.data() + n * cout * hw, cout, hw);
      if (wn->requires_grad) {
        MatMap<S> dw(wn->grad_buffer().data(), cout, kk);
        if (pointwise) {
          dw.noalias() += g * ConstMatMap<S>(xn->value.data() + n * cin * hw, cin, hw).transpose();
        } else {
          dw.noalias() += g * (*cols)[static_cast<std::size_t>(n)].transpose();
        }
      }
      if (bn && bn->requires_grad) {
        Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>>(bn->grad_buffer().data(), cout) += g.rowwise().sum();
      }
      if (xn->requires_grad) {
        S* dx = xn->grad_buffer().data() + n * cin * hw;
        if (pointwise) {
          MatMap<S>(dx, cin, hw).noalias() += wmat.transpose() * g;
        } else {
          dcol.noalias() = wmat.transpose() * g;
          col2im_add(dcol.data(), cin, xs.h, xs.w, k, dx);
        }
      }
    }
  };
  return result;
}

template <typename S>
BasicTensor<S> relu(const BasicTensor<S>& x) {
  Buffer<S> out = x.value().max(S(0));
  auto& trace = detail::kink_trace();
  if (trace.active) {
    std::vector<bool> bits(static_cast<std::size_t>(x.value().size()));
    for (Index i = 0; i < x.value().size(); ++i) bits[static_cast<std::size_t>(i)] = x.value()[i] > 0;
    trace.mix(pack_bits(bits));
  }
  auto result = detail::make_output<S>(x.shape(), std::move(out), {x});
  if (!result.requires_grad()) return result;
  auto* self = result.node().get();
  auto xn = x.node();
  self->backward = [self, xn]() {
    xn->grad_buffer() += (xn->value > S(0)).select(self->grad, S(0));
  };
  return result;
}

template <typename S>
BasicTensor<S> softplus(const BasicTensor<S>& x) {
  const auto& v = x.value();
  Buffer<S> out(v.size());
  for (Index i = 0; i < v.size(); ++i) {
    out[i] = v[i] > S(20) ? v[i] : std::log1p(std::exp(v[i]));
  }
  auto result = detail::make_output<S>(x.shape(), std::move(out), {x});
  if (!result.requires_grad()) return result;
  auto* self = result.node().get();
  auto xn = x.node();
  self->backward = [self, xn]() {
    xn->grad_buffer() += self->grad / (S(1) + (-xn->value).exp());
  };
  return result;
}

template <typename S>
BasicTensor<S> instance_norm(const BasicTensor<S>& x, S eps) {
  const Shape s = x.shape();
  const Index hw = s.plane();
  const Index planes = s.n * s.c;
  Buffer<S> out(s.numel());
  auto inv_std = std::make_shared<Buffer<S>>(planes);
  for (Index p = 0; p < planes; ++p) {
    const auto seg = x.value().segment(p * hw, hw);
    const S mean = seg.mean();
    const S var = (seg - mean).square().mean();
    const S inv = S(1) / std::sqrt(var + eps);
    (*inv_std)[p] = inv;
    out.segment(p * hw, hw) = (seg - mean) * inv;
  }
  auto result = detail::make_output<S>(s, std::move(out), {x});
  if (!result.requires_grad()) return result;
  auto* self = result.node().get();
  auto xn = x.node();
  self->backward = [self, xn, inv_std, planes, hw]() {
    auto& dx = xn->grad_buffer();
    for (Index p = 0; p < planes; ++p) {
      const auto g = self->grad.segment(p * hw, hw);
      const auto yhat = self->value.segment(p * hw, hw);
      const S gm = g.mean();
      const S gym = (g * yhat).mean();
      dx.segment(p * hw, hw) += (*inv_std)[p] * (g - gm - yhat * gym);
    }
  };
  return result;
}

template <typename S>
BasicTensor<S> maxpool2(const BasicTensor<S>& x) {
  const Shape s = x.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw std::invalid_argument("maxpool2: spatial size must be even, got " + s.str());
  }
  const Shape os{s.n, s.c, s.h / 2, s.w / 2};
  Buffer<S> out(os.numel());
  auto argmax = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(os.numel()));
  const S* in = x.value().data();
  for (Index p = 0; p < s.n * s.c; ++p) {
    for (Index y = 0; y < os.h; ++y) {
      for (Index xx = 0; xx < os.w; ++xx) {
        const Index base = p * s.plane() + 2 * y * s.w + 2 * xx;
        Index best = base;
        for (Index off : {base + 1, base + s.w, base + s.w + 1}) {
          if (in[off] > in[best]) best = off;
        }
        const Index o = p * os.plane() + y * os.w + xx;
        out[o] = in[best];
        (*argmax)[static_cast<std::size_t>(o)] = best;
      }
    }
  }
  auto& trace = detail::kink_trace();
  if (trace.active) {
    for (Index i : *argmax) trace.mix(static_cast<std::uint64_t>(i));
  }
  auto result = detail::make_output<S>(os, std::move(out), {x});
  if (!result.requires_grad()) return result;
  auto* self = result.node().get();
  auto xn = x.node();
  self->backward = [self, xn, argmax]() {
    auto& dx = xn->grad_buffer();
    for (std::size_t o = 0; o < argmax->size(); ++o) dx[(*argmax)[o]] += self->grad[static_cast<Index>(o)];
  };
  return result;
}

template <typename S>
BasicTensor<S> upsample2(const BasicTensor<S>& x) {
  const Shape s = x.shape();
  const Shape os{s.n, s.c, s.h * 2, s.w * 2};
  Buffer<S> out(os.numel());
  for (Index p = 0; p < s.n * s.c; ++p) {
    for (Index y = 0; y < os.h; ++y) {
      for (Index xx = 0; xx < os.w; ++xx) {
        out[p * os.plane() + y * os.w + xx] = x.value()[p * s.plane() + (y / 2) * s.w + xx / 2];
      }
    }
  }
  auto result = detail::make_output<S>(os, std::move(out), {x});
  if (!result.requires_grad()) return result;
  auto* self = result.node().get();
  auto xn = x.node();
  self->backward = [self, xn, s, os]() {
    auto& dx = xn->grad_buffer();
    for (Index p = 0; p < s.n * s.c; ++p) {
      for (Index y = 0; y < os.h; ++y) {
        for (Index xx = 0; xx < os.w; ++xx) {
          dx[p * s.plane() + (y / 2) * s.w + xx / 2] += self->grad[p * os.plane() + y * os.w + xx];
        }
      }
    }
  };
  return result;
}

template <typename S>
BasicTensor<S> concat(const BasicTensor<S>& a, const BasicTensor<S>& b) {
  const Shape sa = a.shape(), sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw std::invalid_argument("concat: incompatible shapes " + sa.str() + " and " + sb.str());
  }
  const Shape os{sa.n, sa.c + sb.c, sa.h, sa.w};
  const Index la = sa.c * sa.plane(), lb = sb.c * sb.plane();
  Buffer<S> out(os.numel());
  for (Index n = 0; n < sa.n; ++n) {
    out.segment(n * (la + lb), la) = a.value().segment(n * la, la);
    out.segment(n * (la + lb) + la, lb) = b.value().segment(n * lb, lb);
  }
  auto result = detail::make_output<S>(os, std::move(out), {a, b});
  if (!result.requires_grad()) return result;
  auto* self = result.node().get();
  auto an = a.node(), bn = b.node();
  const Index batch = sa.n;
  self->backward = [self, an, bn, la, lb, batch]() {
    for (Index n = 0; n < batch; ++n) {
      if (an->requires_grad) an->grad_buffer().segment(n * la, la) += self->grad.segment(n * (la + lb), la);
      if (bn->requires_grad) bn->grad_buffer().segment(n * lb, lb) += self->grad.segment(n * (la + lb) + la, lb);
    }
  };
  return result;
}

template <typename S>
BasicTensor<S> add(const BasicTensor<S>& a, const BasicTensor<S>& b) {
  require_same(a.shape(), b.shape(), "add");
  auto result = detail::make_output<S>(a.shape(), a.value() + b.value(), {a, b});
  if (!result.requires_grad()) return result;
  auto* self = result.node().get();
  auto an = a.node(), bn = b.node();
  self->backward = [self, an, bn]() {
    if (an->requires_grad) an->grad_buffer() += self->grad;
    if (bn->requires_grad) bn->grad_buffer() += self->grad;
  };
  return result;
}

template <typename S>
BasicTensor<S> mul(const BasicTensor<S>& a, const BasicTensor<S>& b) {
  require_same(a.shape(), b.shape(), "mul");
  auto result = detail::make_output<S>(a.shape(), a.value() * b.value(), {a, b});
  if (!result.requires_grad()) return result;
  auto* self = result.node().get();
  auto an = a.node(), bn = b.node();
  self->backward = [self, an, bn]() {
    if (an->requires_grad) an->grad_buffer() += self->grad * bn->value;
    if (bn->requires_grad) bn->grad_buffer() += self->grad * an->value;
  };
  return result;
}

template <typename S>
BasicTensor<S> affine(const BasicTensor<S>& x, S scale, S shift) {
  auto result = detail::make_output<S>(x.shape(), x.value() * scale + shift, {x});
  if (!result.requires_grad()) return result;
  auto* self = result.node().get();
  auto xn = x.node();
  self->backward = [self, xn, scale]() { xn->grad_buffer() += self->grad * scale; };
  return result;
}

template <typename S>
BasicTensor<S> reparameterize(const BasicTensor<S>& mu, const BasicTensor<S>& sigma,
                              const BasicTensor<S>& noise) {
  require_same(mu.shape(), sigma.shape(), "reparameterize");
  require_same(mu.shape(), noise.shape(), "reparameterize");
  auto result = detail::make_output<S>(mu.shape(), mu.value() + sigma.value() * noise.value(), {mu, sigma});
  if (!result.requires_grad()) return result;
  auto* self = result.node().get();
  auto mn = mu.node(), sn = sigma.node();
  auto eps = std::make_shared<Buffer<S>>(noise.value());
  self->backward = [self, mn, sn, eps]() {
    if (mn->requires_grad) mn->grad_buffer() += self->grad;
    if (sn->requires_grad) sn->grad_buffer() += self->grad * (*eps);
  };
  return result;
}

template <typename S>
BasicTensor<S> loss_l1l2(const BasicTensor<S>& y, const BasicTensor<S>& y_pred, S a, S b) {
  require_same(y.shape(), y_pred.shape(), "loss_l1l2");
  const Buffer<S> diff = y.value() - y_pred.value();
  const S n = static_cast<S>(diff.size());
  Buffer<S> out(1);
  out[0] = a * diff.abs().sum() + b / n * diff.square().sum();
  auto& trace = detail::kink_trace();
  if (trace.active) {
    std::vector<bool> bits(static_cast<std::size_t>(diff.size()));
    for (Index i = 0; i < diff.size(); ++i) bits[static_cast<std::size_t>(i)] = diff[i] > 0;
    trace.mix(pack_bits(bits));
  }
  auto result = detail::make_output<S>(Shape{1, 1, 1, 1}, std::move(out), {y_pred});
  if (!result.requires_grad()) return result;
  auto* self = result.node().get();
  auto pn = y_pred.node();
  auto d = std::make_shared<Buffer<S>>(diff);
  self->backward = [self, pn, d, a, b, n]() {
    const S g = self->grad[0];
    const Buffer<S> sign = (*d > S(0)).select(Buffer<S>::Ones(d->size()),
                                              (*d < S(0)).select(-Buffer<S>::Ones(d->size()), S(0)));
    pn->grad_buffer() += g * (-a * sign - S(2) * b / n * (*d));
  };
  return result;
}

template <typename S>
BasicTensor<S> sum(const BasicTensor<S>& x) {
  Buffer<S> out(1);
  out[0] = x.value().sum();
  auto result = detail::make_output<S>(Shape{1, 1, 1, 1}, std::move(out), {x});
  if (!result.requires_grad()) return result;
  auto* self = result.node().get();
  auto xn = x.node();
  self->backward = [self, xn]() { xn->grad_buffer() += self->grad[0]; };
  return result;
}

#define LIFE_NN_INSTANTIATE(S)                                                                          \
  template BasicTensor<S> conv2d(const BasicTensor<S>&, const BasicTensor<S>&, const BasicTensor<S>&); \
  template BasicTensor<S> relu(const BasicTensor<S>&);                                                 \
  template BasicTensor<S> softplus(const BasicTensor<S>&);                                             \
  template BasicTensor<S> instance_norm(const BasicTensor<S>&, S);                                     \
  template BasicTensor<S> maxpool2(const BasicTensor<S>&);                                             \
  template BasicTensor<S> upsample2(const BasicTensor<S>&);                                            \
  template BasicTensor<S> concat(const BasicTensor<S>&, const BasicTensor<S>&);                        \
  template BasicTensor<S> add(const BasicTensor<S>&, const BasicTensor<S>&);                           \
  template BasicTensor<S> mul(const BasicTensor<S>&, const BasicTensor<S>&);                           \
  template BasicTensor<S> affine(const BasicTensor<S>&, S, S);                                         \
  template BasicTensor<S> reparameterize(const BasicTensor<S>&, const BasicTensor<S>&,                 \
                                         const BasicTensor<S>&);                                       \
  template BasicTensor<S> loss_l1l2(const BasicTensor<S>&, const BasicTensor<S>&, S, S);               \
  template BasicTensor<S> sum(const BasicTensor<S>&);

LIFE_NN_INSTANTIATE(float)
LIFE_NN_INSTANTIATE(double)

#undef LIFE_NN_INSTANTIATE

}  // namespace life::nn
