// Central finite-difference verification of every differentiable op.
// Runs in double precision; the forward passes used for differencing never
// open a tape, so they are independent of the backward implementation.
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "nv/tensor.hpp"

namespace nv::gradcheck {

struct OpReport {
  std::string op;
  int instances = 0;
  double max_rel_err = 0.0;
};

struct Summary {
  std::vector<OpReport> per_op;
  double max_rel_err = 0.0;
  bool passed(double tol = 1e-4) const { return max_rel_err <= tol; }
};

// rel error per spec: |ad - fd| / (|fd| + 1e-8)
inline double rel_err(double ad, double fd) {
  return std::abs(ad - fd) / (std::abs(fd) + 1e-8);
}

// fn builds a scalar loss from the given inputs. Pass 1 runs on a fresh tape
// and collects autodiff grads; then each input element is perturbed by +-h
// with no tape open and the central difference is compared.
inline double check_fn(const std::function<TensorD()>& fn,
                       std::vector<TensorD> inputs, double h = 1e-5) {
  std::vector<std::vector<double>> auto_grads;
  {
    Tape<double> tape;
    TensorD loss = fn();
    tape.backward(loss);
    for (auto& in : inputs) {
      auto g = in.grad_accum();
      auto_grads.emplace_back(g.begin(), g.end());
      in.zero_grad();
    }
  }
  double worst = 0.0;
  for (size_t t = 0; t < inputs.size(); ++t) {
    auto d = inputs[t].data();
    for (size_t i = 0; i < d.size(); ++i) {
      const double orig = d[i];
      d[i] = orig + h;
      const double up = fn().item();
      d[i] = orig - h;
      const double down = fn().item();
      d[i] = orig;
      const double fd = (up - down) / (2.0 * h);
      worst = std::max(worst, rel_err(auto_grads[t][i], fd));
    }
  }
  return worst;
}

// Random values with all pairwise gaps bounded below, so max-selection ops
// keep a stable argmax under the +-h probes. Ranks are shuffled, values are
// rank-spread with jitter.
inline std::vector<double> spread_values(Rng& rng, size_t n, double lo = -1.0,
                                         double hi = 1.0) {
  std::vector<int> ranks(n);
  for (size_t i = 0; i < n; ++i) ranks[i] = int(i);
  rng.shuffle(ranks);
  std::vector<double> out(n);
  const double step = (hi - lo) / double(n);
  for (size_t i = 0; i < n; ++i)
    out[i] = lo + (double(ranks[i]) + 0.2 + 0.6 * rng.uniform()) * step;
  return out;
}

inline TensorD random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> vals(size_t(numel(shape)));
  for (auto& v : vals) v = rng.uniform(lo, hi);
  auto t = TensorD::from(std::move(shape), std::move(vals));
  t.set_requires_grad(true);
  return t;
}

inline TensorD spread_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  auto t = TensorD::from(std::move(shape), spread_values(rng, size_t(numel(shape)), lo, hi));
  t.set_requires_grad(true);
  return t;
}

// Values kept away from the relu kink so finite differences stay two-sided.
inline TensorD off_kink_tensor(Rng& rng, Shape shape) {
  std::vector<double> vals(size_t(numel(shape)));
  for (auto& v : vals) {
    v = rng.uniform(-1.0, 1.0);
    if (std::abs(v) < 0.05) v += v >= 0 ? 0.1 : -0.1;
  }
  auto t = TensorD::from(std::move(shape), std::move(vals));
  t.set_requires_grad(true);
  return t;
}

// Scalarizes an op output with a fixed random projection.
inline TensorD project(const TensorD& y, Rng& rng) {
  std::vector<double> w(size_t(y.size()));
  for (auto& v : w) v = rng.uniform(-1.0, 1.0);
  return sum(mul(y, TensorD::from(y.shape(), std::move(w))));
}

Summary run(int instances_per_op = 20, uint64_t seed = 1234, double h = 1e-5);

}  // namespace nv::gradcheck
