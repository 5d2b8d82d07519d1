// Dense row-major tensors with reverse-mode autodiff on an explicit tape.
// Scalar type is a template parameter: float for training, double for
// finite-difference verification.
#pragma once

#include <cmath>
#include <concepts>
#include <cstring>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "nv/common.hpp"

namespace nv {

template <std::floating_point S>
class Tape;

// Handle with value semantics over shared storage. Data is immutable after
// creation by convention; only grad buffers accumulate.
template <std::floating_point S>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), false); }

  static Tensor full(Shape shape, S value) {
    Tensor t(std::move(shape), false);
    std::fill(t.st_->data.begin(), t.st_->data.end(), value);
    return t;
  }

  static Tensor from(Shape shape, std::vector<S> values) {
    if (int64_t(values.size()) != numel(shape))
      throw_dim(strprintf("tensor init: %lld values for shape %s",
                          (long long)values.size(), shape_str(shape).c_str()));
    Tensor t;
    t.shape_ = std::move(shape);
    t.st_ = std::make_shared<Storage>();
    t.st_->data = std::move(values);
    return t;
  }

  static Tensor scalar(S value) { return from({1}, {value}); }

  // Trainable leaf: participates in autodiff whenever a tape is open.
  static Tensor param(Shape shape) {
    Tensor t(std::move(shape), true);
    return t;
  }

  bool defined() const { return st_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int dim(int i) const { return shape_[size_t(i)]; }
  int64_t size() const { return st_ ? int64_t(st_->data.size()) : 0; }

  std::span<S> data() & { return {st_->data.data(), st_->data.size()}; }
  std::span<const S> data() const& { return {st_->data.data(), st_->data.size()}; }
  // Spans must not outlive the handle that produced them.
  std::span<S> data() && = delete;
  std::span<const S> data() const&& = delete;

  S item() const {
    if (size() != 1) throw std::invalid_argument("item(): tensor is not scalar");
    return st_->data[0];
  }

  bool requires_grad() const { return st_ && st_->requires_grad; }
  void set_requires_grad(bool v) { st_->requires_grad = v; }

  bool has_grad() const { return st_ && !st_->grad.empty(); }

  std::span<const S> grad() const& {
    if (!has_grad()) throw std::logic_error("grad(): no gradient populated");
    return {st_->grad.data(), st_->grad.size()};
  }
  std::span<const S> grad() const&& = delete;

  // Allocates (zero-filled) on first use; backward closures accumulate here.
  std::span<S> grad_accum() {
    if (st_->grad.empty()) st_->grad.assign(st_->data.size(), S(0));
    return {st_->grad.data(), st_->grad.size()};
  }

  void zero_grad() {
    if (st_ && !st_->grad.empty()) std::fill(st_->grad.begin(), st_->grad.end(), S(0));
  }

  void drop_grad() {
    if (st_) st_->grad.clear();
  }

  bool same_storage(const Tensor& o) const { return st_ == o.st_; }

 private:
  struct Storage {
    std::vector<S> data;
    std::vector<S> grad;  // empty until touched by backward
    bool requires_grad = false;
  };

  Tensor(Shape shape, bool requires_grad) : shape_(std::move(shape)) {
    int64_t n = numel(shape_);
    if (n < 0) throw_dim("negative extent in shape " + shape_str(shape_));
    st_ = std::make_shared<Storage>();
    st_->data.assign(size_t(n), S(0));
    st_->requires_grad = requires_grad;
  }

  Shape shape_;
  std::shared_ptr<Storage> st_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// Ordered record of backward closures for one forward pass. While a tape is
// open (RAII, thread-local), ops involving grad-requiring tensors record
// themselves; with no open tape everything runs forward-only.
template <std::floating_point S>
class Tape {
 public:
  Tape() {
    prev_ = active_;
    active_ = this;
  }
  ~Tape() { active_ = prev_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return active_; }

  void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }

  size_t node_count() const { return nodes_.size(); }

  void backward(Tensor<S>& loss) {
    if (consumed_) throw std::logic_error("tape already consumed by backward()");
    if (loss.size() != 1)
      throw std::invalid_argument("backward(): loss must be a scalar tensor");
    if (!loss.requires_grad())
      throw std::invalid_argument("backward(): loss is not attached to the tape");
    consumed_ = true;
    loss.grad_accum()[0] += S(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    nodes_.clear();
  }

 private:
  std::vector<std::function<void()>> nodes_;
  bool consumed_ = false;
  Tape* prev_ = nullptr;
  static inline thread_local Tape* active_ = nullptr;
};

namespace detail {

template <std::floating_point S>
bool track(std::initializer_list<const Tensor<S>*> inputs) {
  if (!Tape<S>::active()) return false;
  for (const Tensor<S>* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

// Output gradient, or empty span if nothing upstream touched this tensor.
template <std::floating_point S>
std::span<const S> out_grad(const Tensor<S>& y) {
  if (!y.has_grad()) return {};
  return y.grad();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and reduction ops

template <std::floating_point S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape())
    throw_dim("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<S> y = Tensor<S>::zeros(a.shape());
  auto ad = a.data(); auto bd = b.data(); auto yd = y.data();
  for (int64_t i = 0; i < a.size(); ++i) yd[size_t(i)] = ad[size_t(i)] + bd[size_t(i)];
  if (detail::track<S>({&a, &b})) {
    y.set_requires_grad(true);
    Tape<S>::active()->record([a = a, b = b, y = y]() mutable {
      auto g = detail::out_grad(y);
      if (g.empty()) return;
      if (a.requires_grad()) {
        auto ga = a.grad_accum();
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_accum();
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return y;
}

template <std::floating_point S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape())
    throw_dim("mul: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<S> y = Tensor<S>::zeros(a.shape());
  auto ad = a.data(); auto bd = b.data(); auto yd = y.data();
  for (int64_t i = 0; i < a.size(); ++i) yd[size_t(i)] = ad[size_t(i)] * bd[size_t(i)];
  if (detail::track<S>({&a, &b})) {
    y.set_requires_grad(true);
    Tape<S>::active()->record([a = a, b = b, y = y]() mutable {
      auto g = detail::out_grad(y);
      if (g.empty()) return;
      if (a.requires_grad()) {
        auto ga = a.grad_accum();
        auto bd2 = b.data();
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bd2[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_accum();
        auto ad2 = a.data();
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ad2[i];
      }
    });
  }
  return y;
}

template <std::floating_point S>
Tensor<S> scale(const Tensor<S>& x, S c) {
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  auto xd = x.data(); auto yd = y.data();
  for (int64_t i = 0; i < x.size(); ++i) yd[size_t(i)] = c * xd[size_t(i)];
  if (detail::track<S>({&x})) {
    y.set_requires_grad(true);
    Tape<S>::active()->record([x = x, y = y, c]() mutable {
      auto g = detail::out_grad(y);
      if (g.empty()) return;
      auto gx = x.grad_accum();
      for (size_t i = 0; i < g.size(); ++i) gx[i] += c * g[i];
    });
  }
  return y;
}

template <std::floating_point S>
Tensor<S> sum(const Tensor<S>& x) {
  S acc = 0;
  auto xd = x.data();
  for (int64_t i = 0; i < x.size(); ++i) acc += xd[size_t(i)];
  Tensor<S> y = Tensor<S>::scalar(acc);
  if (detail::track<S>({&x})) {
    y.set_requires_grad(true);
    Tape<S>::active()->record([x = x, y = y]() mutable {
      auto g = detail::out_grad(y);
      if (g.empty()) return;
      auto gx = x.grad_accum();
      for (size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
    });
  }
  return y;
}

template <std::floating_point S>
Tensor<S> relu(const Tensor<S>& x) {
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  auto xd = x.data(); auto yd = y.data();
  for (int64_t i = 0; i < x.size(); ++i) yd[size_t(i)] = xd[size_t(i)] > S(0) ? xd[size_t(i)] : S(0);
  if (detail::track<S>({&x})) {
    y.set_requires_grad(true);
    Tape<S>::active()->record([x = x, y = y]() mutable {
      auto g = detail::out_grad(y);
      if (g.empty()) return;
      auto gx = x.grad_accum();
      auto xd2 = x.data();
      for (size_t i = 0; i < g.size(); ++i)
        if (xd2[i] > S(0)) gx[i] += g[i];
    });
  }
  return y;
}

// Output clamped into the open unit interval so code values are never
// exactly 0 or 1 even when exp() under/overflows.
template <std::floating_point S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  static const S lo = std::numeric_limits<S>::denorm_min();
  static const S hi = S(1) - std::numeric_limits<S>::epsilon() / S(2);
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  auto xd = x.data(); auto yd = y.data();
  for (int64_t i = 0; i < x.size(); ++i) {
    S v = xd[size_t(i)];
    S s;
    if (v >= S(0)) {
      s = S(1) / (S(1) + std::exp(-v));
    } else {
      S e = std::exp(v);
      s = e / (S(1) + e);
    }
    if (s < lo) s = lo;
    if (s > hi) s = hi;
    yd[size_t(i)] = s;
  }
  if (detail::track<S>({&x})) {
    y.set_requires_grad(true);
    Tape<S>::active()->record([x = x, y = y]() mutable {
      auto g = detail::out_grad(y);
      if (g.empty()) return;
      auto gx = x.grad_accum();
      auto yd2 = y.data();
      for (size_t i = 0; i < g.size(); ++i)
        gx[i] += g[i] * yd2[i] * (S(1) - yd2[i]);
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// conv2d: input [B,Cin,H,W], kernel [Cout,Cin,kh,kw], bias [Cout].
// im2col + small GEMM forward; backward regenerates the column buffer.

namespace detail {

template <std::floating_point S>
void im2col(std::span<const S> img, int cin, int h, int w, int kh, int kw,
            int stride, int pad, int hout, int wout, std::vector<S>& col) {
  const int n = hout * wout;
  col.assign(size_t(cin) * kh * kw * n, S(0));
  size_t r = 0;
  for (int ci = 0; ci < cin; ++ci) {
    const S* plane = img.data() + size_t(ci) * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx, ++r) {
        S* row = col.data() + r * size_t(n);
        for (int oy = 0; oy < hout; ++oy) {
          int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          const S* src = plane + size_t(iy) * w;
          S* dst = row + size_t(oy) * wout;
          for (int ox = 0; ox < wout; ++ox) {
            int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[ox] = src[ix];
          }
        }
      }
    }
  }
}

template <std::floating_point S>
void col2im_add(const std::vector<S>& col, int cin, int h, int w, int kh, int kw,
                int stride, int pad, int hout, int wout, std::span<S> img) {
  const int n = hout * wout;
  size_t r = 0;
  for (int ci = 0; ci < cin; ++ci) {
    S* plane = img.data() + size_t(ci) * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx, ++r) {
        const S* row = col.data() + r * size_t(n);
        for (int oy = 0; oy < hout; ++oy) {
          int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          S* dst = plane + size_t(iy) * w;
          const S* src = row + size_t(oy) * wout;
          for (int ox = 0; ox < wout; ++ox) {
            int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

template <std::floating_point S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& kernel,
                 const Tensor<S>& bias, int stride, int pad) {
  if (input.shape().size() != 4) throw_dim("conv2d: input must be [B,Cin,H,W]");
  if (kernel.shape().size() != 4) throw_dim("conv2d: kernel must be [Cout,Cin,kh,kw]");
  const int b = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int cout = kernel.dim(0), kcin = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  if (cin != kcin)
    throw_dim(strprintf("conv2d: input channels %d vs kernel channels %d", cin, kcin));
  if (bias.shape() != Shape{cout})
    throw_dim("conv2d: bias must be [Cout]=" + std::to_string(cout));
  if (stride < 1) throw_dim("conv2d: stride must be >= 1");
  if (pad < 0) throw_dim("conv2d: pad must be >= 0");
  if (kh > h + 2 * pad || kw > w + 2 * pad)
    throw_dim(strprintf("conv2d: kernel %dx%d exceeds padded input %dx%d", kh, kw,
                        h + 2 * pad, w + 2 * pad));
  const int hout = (h + 2 * pad - kh) / stride + 1;
  const int wout = (w + 2 * pad - kw) / stride + 1;
  const int k = cin * kh * kw;
  const int n = hout * wout;

  Tensor<S> y = Tensor<S>::zeros({b, cout, hout, wout});
  auto in = input.data(); auto kd = kernel.data(); auto bd = bias.data(); auto yd = y.data();
  std::vector<S> col;
  for (int bi = 0; bi < b; ++bi) {
    detail::im2col<S>(in.subspan(size_t(bi) * cin * h * w, size_t(cin) * h * w),
                      cin, h, w, kh, kw, stride, pad, hout, wout, col);
    S* out = yd.data() + size_t(bi) * cout * n;
    for (int m = 0; m < cout; ++m) {
      S* orow = out + size_t(m) * n;
      for (int j = 0; j < n; ++j) orow[j] = bd[size_t(m)];
      const S* krow = kd.data() + size_t(m) * k;
      for (int kk = 0; kk < k; ++kk) {
        const S a = krow[kk];
        const S* crow = col.data() + size_t(kk) * n;
        for (int j = 0; j < n; ++j) orow[j] += a * crow[j];
      }
    }
  }

  if (detail::track<S>({&input, &kernel, &bias})) {
    y.set_requires_grad(true);
    Tape<S>::active()->record([input = input, kernel = kernel, bias = bias, y = y, stride, pad]() mutable {
      auto g = detail::out_grad(y);
      if (g.empty()) return;
      const int b = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
      const int cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
      const int hout = y.dim(2), wout = y.dim(3);
      const int k = cin * kh * kw;
      const int n = hout * wout;
      auto in = input.data();
      auto kd = kernel.data();
      const bool need_dx = input.requires_grad();
      const bool need_dw = kernel.requires_grad();
      const bool need_db = bias.requires_grad();
      std::vector<S> col, dcol;
      for (int bi = 0; bi < b; ++bi) {
        const S* gy = g.data() + size_t(bi) * cout * n;
        if (need_db) {
          auto gb = bias.grad_accum();
          for (int m = 0; m < cout; ++m) {
            S acc = 0;
            const S* grow = gy + size_t(m) * n;
            for (int j = 0; j < n; ++j) acc += grow[j];
            gb[size_t(m)] += acc;
          }
        }
        if (need_dw || need_dx) {
          detail::im2col<S>(in.subspan(size_t(bi) * cin * h * w, size_t(cin) * h * w),
                            cin, h, w, kh, kw, stride, pad, hout, wout, col);
        }
        if (need_dw) {
          auto gw = kernel.grad_accum();
          for (int m = 0; m < cout; ++m) {
            const S* grow = gy + size_t(m) * n;
            S* gwrow = gw.data() + size_t(m) * k;
            for (int kk = 0; kk < k; ++kk) {
              const S* crow = col.data() + size_t(kk) * n;
              S acc = 0;
              for (int j = 0; j < n; ++j) acc += grow[j] * crow[j];
              gwrow[kk] += acc;
            }
          }
        }
        if (need_dx) {
          dcol.assign(size_t(k) * n, S(0));
          for (int m = 0; m < cout; ++m) {
            const S* grow = gy + size_t(m) * n;
            const S* krow = kd.data() + size_t(m) * k;
            for (int kk = 0; kk < k; ++kk) {
              const S a = krow[kk];
              S* drow = dcol.data() + size_t(kk) * n;
              for (int j = 0; j < n; ++j) drow[j] += a * grow[j];
            }
          }
          auto gx = input.grad_accum();
          detail::col2im_add<S>(dcol, cin, h, w, kh, kw, stride, pad, hout, wout,
                                gx.subspan(size_t(bi) * cin * h * w, size_t(cin) * h * w));
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// maxpool2d, no padding. Gradient follows the argmax; ties go to the lowest
// linear index inside the window.

template <std::floating_point S>
Tensor<S> maxpool2d(const Tensor<S>& x, int k, int stride) {
  if (x.shape().size() != 4) throw_dim("maxpool2d: input must be [B,C,H,W]");
  if (k < 1 || stride < 1) throw_dim("maxpool2d: kernel and stride must be >= 1");
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (k > h || k > w)
    throw_dim(strprintf("maxpool2d: window %d exceeds input %dx%d", k, h, w));
  const int hout = (h - k) / stride + 1;
  const int wout = (w - k) / stride + 1;
  Tensor<S> y = Tensor<S>::zeros({b, c, hout, wout});
  auto argmax = std::make_shared<std::vector<int32_t>>(size_t(b) * c * hout * wout);
  auto xd = x.data(); auto yd = y.data();
  size_t o = 0;
  for (int bi = 0; bi < b; ++bi) {
    for (int ci = 0; ci < c; ++ci) {
      const S* plane = xd.data() + (size_t(bi) * c + ci) * h * w;
      for (int oy = 0; oy < hout; ++oy) {
        for (int ox = 0; ox < wout; ++ox, ++o) {
          int best = -1;
          S bv = 0;
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * stride + ky;
            for (int kx = 0; kx < k; ++kx) {
              const int idx = iy * w + ox * stride + kx;
              if (best < 0 || plane[idx] > bv) {
                best = idx;
                bv = plane[idx];
              }
            }
          }
          yd[o] = bv;
          (*argmax)[o] = int32_t(best);
        }
      }
    }
  }
  if (detail::track<S>({&x})) {
    y.set_requires_grad(true);
    Tape<S>::active()->record([x = x, y = y, argmax]() mutable {
      auto g = detail::out_grad(y);
      if (g.empty()) return;
      const int c = x.dim(1), h = x.dim(2), w = x.dim(3);
      const int per_plane_out = y.dim(2) * y.dim(3);
      auto gx = x.grad_accum();
      size_t o = 0;
      for (int bi = 0; bi < x.dim(0); ++bi) {
        for (int ci = 0; ci < c; ++ci) {
          S* gplane = gx.data() + (size_t(bi) * c + ci) * h * w;
          for (int j = 0; j < per_plane_out; ++j, ++o)
            gplane[(*argmax)[o]] += g[o];
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// reduce_spatial: [B,C,H,W] -> [B,C]; one scalar per unit.

enum class Reduce { max, mean };

template <std::floating_point S>
Tensor<S> reduce_spatial(const Tensor<S>& x, Reduce mode) {
  if (x.shape().size() != 4) throw_dim("reduce_spatial: input must be [B,C,H,W]");
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h < 1 || w < 1) throw_dim("reduce_spatial: empty spatial extent");
  const int hw = h * w;
  Tensor<S> y = Tensor<S>::zeros({b, c});
  auto xd = x.data(); auto yd = y.data();
  auto argmax = mode == Reduce::max
                    ? std::make_shared<std::vector<int32_t>>(size_t(b) * c)
                    : nullptr;
  for (int bi = 0; bi < b; ++bi) {
    for (int ci = 0; ci < c; ++ci) {
      const S* plane = xd.data() + (size_t(bi) * c + ci) * hw;
      const size_t o = size_t(bi) * c + ci;
      if (mode == Reduce::mean) {
        S acc = 0;
        for (int j = 0; j < hw; ++j) acc += plane[j];
        yd[o] = acc / S(hw);
      } else {
        int best = 0;
        for (int j = 1; j < hw; ++j)
          if (plane[j] > plane[best]) best = j;
        yd[o] = plane[best];
        (*argmax)[o] = int32_t(best);
      }
    }
  }
  if (detail::track<S>({&x})) {
    y.set_requires_grad(true);
    Tape<S>::active()->record([x = x, y = y, argmax, mode]() mutable {
      auto g = detail::out_grad(y);
      if (g.empty()) return;
      const int c = x.dim(1), hw = x.dim(2) * x.dim(3);
      auto gx = x.grad_accum();
      for (int bi = 0; bi < x.dim(0); ++bi) {
        for (int ci = 0; ci < c; ++ci) {
          const size_t o = size_t(bi) * c + ci;
          S* gplane = gx.data() + o * size_t(hw);
          if (mode == Reduce::mean) {
            const S s = g[o] / S(hw);
            for (int j = 0; j < hw; ++j) gplane[j] += s;
          } else {
            gplane[(*argmax)[o]] += g[o];
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// linear: x [B,N] x weight [M,N] + bias [M] -> [B,M]

template <std::floating_point S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias) {
  if (x.shape().size() != 2) throw_dim("linear: input must be [B,N]");
  if (weight.shape().size() != 2) throw_dim("linear: weight must be [M,N]");
  const int b = x.dim(0), n = x.dim(1), m = weight.dim(0);
  if (weight.dim(1) != n)
    throw_dim(strprintf("linear: input width %d vs weight width %d", n, weight.dim(1)));
  if (bias.shape() != Shape{m})
    throw_dim("linear: bias must be [M]=" + std::to_string(m));
  Tensor<S> y = Tensor<S>::zeros({b, m});
  auto xd = x.data(); auto wd = weight.data(); auto bd = bias.data(); auto yd = y.data();
  for (int bi = 0; bi < b; ++bi) {
    const S* xr = xd.data() + size_t(bi) * n;
    S* yr = yd.data() + size_t(bi) * m;
    for (int mi = 0; mi < m; ++mi) {
      const S* wr = wd.data() + size_t(mi) * n;
      S acc = bd[size_t(mi)];
      for (int j = 0; j < n; ++j) acc += xr[j] * wr[j];
      yr[mi] = acc;
    }
  }
  if (detail::track<S>({&x, &weight, &bias})) {
    y.set_requires_grad(true);
    Tape<S>::active()->record([x = x, weight = weight, bias = bias, y = y]() mutable {
      auto g = detail::out_grad(y);
      if (g.empty()) return;
      const int b = x.dim(0), n = x.dim(1), m = weight.dim(0);
      auto xd = x.data(); auto wd = weight.data();
      if (bias.requires_grad()) {
        auto gb = bias.grad_accum();
        for (int bi = 0; bi < b; ++bi)
          for (int mi = 0; mi < m; ++mi) gb[size_t(mi)] += g[size_t(bi) * m + mi];
      }
      if (weight.requires_grad()) {
        auto gw = weight.grad_accum();
        for (int bi = 0; bi < b; ++bi) {
          const S* xr = xd.data() + size_t(bi) * n;
          for (int mi = 0; mi < m; ++mi) {
            const S go = g[size_t(bi) * m + mi];
            S* gwr = gw.data() + size_t(mi) * n;
            for (int j = 0; j < n; ++j) gwr[j] += go * xr[j];
          }
        }
      }
      if (x.requires_grad()) {
        auto gx = x.grad_accum();
        for (int bi = 0; bi < b; ++bi) {
          S* gxr = gx.data() + size_t(bi) * n;
          for (int mi = 0; mi < m; ++mi) {
            const S go = g[size_t(bi) * m + mi];
            const S* wr = wd.data() + size_t(mi) * n;
            for (int j = 0; j < n; ++j) gxr[j] += go * wr[j];
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// concat along dim 1: list of [B,Ni] -> [B, sum Ni]

template <std::floating_point S>
Tensor<S> concat(const std::vector<Tensor<S>>& xs) {
  if (xs.empty()) throw_dim("concat: empty input list");
  const int b = xs[0].dim(0);
  int total = 0;
  for (const auto& t : xs) {
    if (t.shape().size() != 2) throw_dim("concat: inputs must be [B,N]");
    if (t.dim(0) != b) throw_dim("concat: batch size mismatch");
    total += t.dim(1);
  }
  Tensor<S> y = Tensor<S>::zeros({b, total});
  auto yd = y.data();
  int off = 0;
  for (const auto& t : xs) {
    auto td = t.data();
    const int n = t.dim(1);
    for (int bi = 0; bi < b; ++bi)
      std::memcpy(yd.data() + size_t(bi) * total + off, td.data() + size_t(bi) * n,
                  size_t(n) * sizeof(S));
    off += n;
  }
  bool any = false;
  for (const auto& t : xs) any = any || t.requires_grad();
  if (Tape<S>::active() && any) {
    y.set_requires_grad(true);
    Tape<S>::active()->record([xs = xs, y = y, total]() mutable {
      auto g = detail::out_grad(y);
      if (g.empty()) return;
      const int b = y.dim(0);
      int off = 0;
      for (auto& t : xs) {
        const int n = t.dim(1);
        if (t.requires_grad()) {
          auto gt = t.grad_accum();
          for (int bi = 0; bi < b; ++bi)
            for (int j = 0; j < n; ++j)
              gt[size_t(bi) * n + j] += g[size_t(bi) * total + off + j];
        }
        off += n;
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// softmax cross entropy, mean over the batch, max-stabilized.

template <std::floating_point S>
Tensor<S> softmax_cross_entropy(const Tensor<S>& logits, const std::vector<int>& labels) {
  if (logits.shape().size() != 2) throw_dim("softmax_cross_entropy: logits must be [B,K]");
  const int b = logits.dim(0), k = logits.dim(1);
  if (int(labels.size()) != b)
    throw_dim(strprintf("softmax_cross_entropy: %d labels for batch %d",
                        int(labels.size()), b));
  for (int label : labels)
    if (label < 0 || label >= k)
      throw std::out_of_range(strprintf("label %d outside [0,%d)", label, k));
  auto ld = logits.data();
  auto probs = std::make_shared<std::vector<S>>(size_t(b) * k);
  S loss = 0;
  for (int bi = 0; bi < b; ++bi) {
    const S* row = ld.data() + size_t(bi) * k;
    S mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    S denom = 0;
    for (int j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
    const S log_denom = std::log(denom);
    for (int j = 0; j < k; ++j)
      (*probs)[size_t(bi) * k + j] = std::exp(row[j] - mx) / denom;
    loss += -(row[labels[size_t(bi)]] - mx - log_denom);
  }
  Tensor<S> y = Tensor<S>::scalar(loss / S(b));
  if (detail::track<S>({&logits})) {
    y.set_requires_grad(true);
    auto labels_copy = std::make_shared<std::vector<int>>(labels);
    Tape<S>::active()->record([logits = logits, y = y, probs, labels_copy]() mutable {
      auto g = detail::out_grad(y);
      if (g.empty()) return;
      const int b = logits.dim(0), k = logits.dim(1);
      const S go = g[0] / S(b);
      auto gl = logits.grad_accum();
      for (int bi = 0; bi < b; ++bi) {
        for (int j = 0; j < k; ++j) {
          S p = (*probs)[size_t(bi) * k + j];
          if (j == (*labels_copy)[size_t(bi)]) p -= S(1);
          gl[size_t(bi) * k + j] += go * p;
        }
      }
    });
  }
  return y;
}

template <std::floating_point S>
std::vector<int> argmax_rows(const Tensor<S>& t) {
  if (t.shape().size() != 2) throw_dim("argmax_rows: input must be [B,K]");
  const int b = t.dim(0), k = t.dim(1);
  std::vector<int> out(static_cast<size_t>(b));
  auto d = t.data();
  for (int bi = 0; bi < b; ++bi) {
    const S* row = d.data() + size_t(bi) * k;
    int best = 0;
    for (int j = 1; j < k; ++j)
      if (row[j] > row[best]) best = j;
    out[size_t(bi)] = best;
  }
  return out;
}

template <std::floating_point S>
std::vector<S> softmax_rows(const Tensor<S>& logits) {
  const int b = logits.dim(0), k = logits.dim(1);
  std::vector<S> out(size_t(b) * k);
  auto d = logits.data();
  for (int bi = 0; bi < b; ++bi) {
    const S* row = d.data() + size_t(bi) * k;
    S mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    S denom = 0;
    for (int j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
    for (int j = 0; j < k; ++j) out[size_t(bi) * k + j] = std::exp(row[j] - mx) / denom;
  }
  return out;
}

}  // namespace nv
