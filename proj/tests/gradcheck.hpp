#pragma once

#include "life/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace life::test {

using nn::BasicTensor;
using nn::Index;
using nn::Buffer;
using nn::Shape;
using Forward = std::function<BasicTensor<double>(const std::vector<BasicTensor<double>>&)>;

inline BasicTensor<double> random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                                         bool grad = true) {
  std::uniform_real_distribution<double> d(lo, hi);
  Buffer<double> v(s.numel());
  for (auto& x : v) x = d(rng);
  return BasicTensor<double>::from(s, std::move(v), grad);
}

struct Probe {
  double value;
  std::uint64_t kinks;
};

inline Probe evaluate(const Forward& f, const std::vector<BasicTensor<double>>& inputs,
                      const BasicTensor<double>& weights) {
  nn::NoGradGuard guard;
  auto& trace = nn::detail::kink_trace();
  trace = nn::detail::KinkTrace{};
  trace.active = true;
  const BasicTensor<double> out = f(inputs);
  trace.active = false;
  double v = 0;
  for (Index i = 0; i < out.value().size(); ++i) v += out.value()[i] * weights.value()[i];
  return {v, trace.hash};
}

/// Worst relative error between the analytic gradient of sum(w * f(inputs))
/// and central differences with random weights w. Probes whose +-h
/// evaluations change any non-smooth branch are skipped. With `max_probes`
/// > 0 only that many randomly chosen elements are probed. The number of
/// probes actually compared is written to `checked`.
inline double gradient_error(const Forward& f, std::vector<BasicTensor<double>> inputs, std::mt19937_64& rng,
                             int* checked = nullptr, double h = 1e-3, int max_probes = 0) {
  const BasicTensor<double> probe_out = [&] {
    nn::NoGradGuard g;
    return f(inputs);
  }();
  const BasicTensor<double> weights = random_tensor(probe_out.shape(), rng, -1.0, 1.0, false);

  for (auto& in : inputs) in.zero_grad();
  nn::sum(nn::mul(f(inputs), weights)).backward();

  std::vector<std::pair<std::size_t, Index>> targets;
  std::vector<Buffer<double>> analytic(inputs.size());
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto& in = inputs[k];
    if (!in.requires_grad()) continue;
    analytic[k] = in.has_grad() ? Buffer<double>(in.grad()) : Buffer<double>::Zero(in.value().size());
    for (Index i = 0; i < in.value().size(); ++i) targets.emplace_back(k, i);
  }
  if (max_probes > 0 && static_cast<int>(targets.size()) > max_probes) {
    std::shuffle(targets.begin(), targets.end(), rng);
    targets.resize(static_cast<std::size_t>(max_probes));
  }

  const std::uint64_t base_kinks = evaluate(f, inputs, weights).kinks;
  double worst = 0;
  int used = 0;
  for (const auto& [k, i] : targets) {
    auto& in = inputs[k];
    const double x0 = in.value()[i];
    in.value()[i] = x0 + h;
    const Probe plus = evaluate(f, inputs, weights);
    in.value()[i] = x0 - h;
    const Probe minus = evaluate(f, inputs, weights);
    in.value()[i] = x0;
    if (plus.kinks != base_kinks || minus.kinks != base_kinks) continue;
    const double numeric = (plus.value - minus.value) / (2 * h);
    const double a = analytic[k][i];
    const double scale = std::max({std::abs(numeric), std::abs(a), 1e-2});
    worst = std::max(worst, std::abs(numeric - a) / scale);
    ++used;
  }
  if (checked) *checked = used;
  return worst;
}

}  // namespace life::test
