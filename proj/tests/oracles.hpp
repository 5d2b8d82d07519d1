// Test-only oracles, written as plain nested loops and kept independent of
// the library's forward/backward implementations.
#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "nv/neuroview.hpp"

namespace oracle {

// Six-loop convolution, the reference for conv2d.
template <std::floating_point S>
nv::Tensor<S> conv2d(const nv::Tensor<S>& input, const nv::Tensor<S>& kernel,
                     const nv::Tensor<S>& bias, int stride, int pad) {
  const int b = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  const int hout = (h + 2 * pad - kh) / stride + 1;
  const int wout = (w + 2 * pad - kw) / stride + 1;
  nv::Tensor<S> out = nv::Tensor<S>::zeros({b, cout, hout, wout});
  auto in = input.data();
  auto kd = kernel.data();
  auto bd = bias.data();
  auto od = out.data();
  for (int bi = 0; bi < b; ++bi)
    for (int co = 0; co < cout; ++co)
      for (int oy = 0; oy < hout; ++oy)
        for (int ox = 0; ox < wout; ++ox) {
          S acc = bd[size_t(co)];
          for (int ci = 0; ci < cin; ++ci)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                const int iy = oy * stride - pad + ky;
                const int ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                acc += in[((size_t(bi) * cin + ci) * h + iy) * w + ix] *
                       kd[((size_t(co) * cin + ci) * kh + ky) * kw + kx];
              }
          od[((size_t(bi) * cout + co) * hout + oy) * wout + ox] = acc;
        }
  return out;
}

template <std::floating_point S>
nv::Tensor<S> linear(const nv::Tensor<S>& x, const nv::Tensor<S>& w,
                     const nv::Tensor<S>& bias) {
  const int b = x.dim(0), n = x.dim(1), m = w.dim(0);
  nv::Tensor<S> out = nv::Tensor<S>::zeros({b, m});
  auto xd = x.data();
  auto wd = w.data();
  auto bd = bias.data();
  auto od = out.data();
  for (int bi = 0; bi < b; ++bi)
    for (int mi = 0; mi < m; ++mi) {
      S acc = bd[size_t(mi)];
      for (int j = 0; j < n; ++j)
        acc += xd[size_t(bi) * n + j] * wd[size_t(mi) * n + j];
      od[size_t(bi) * m + mi] = acc;
    }
  return out;
}

// Direct two-pass softmax cross entropy.
template <std::floating_point S>
double softmax_ce(const nv::Tensor<S>& logits, const std::vector<int>& labels) {
  const int b = logits.dim(0), k = logits.dim(1);
  auto d = logits.data();
  double total = 0.0;
  for (int bi = 0; bi < b; ++bi) {
    double mx = double(d[size_t(bi) * k]);
    for (int j = 1; j < k; ++j) mx = std::max(mx, double(d[size_t(bi) * k + j]));
    double denom = 0.0;
    for (int j = 0; j < k; ++j) denom += std::exp(double(d[size_t(bi) * k + j]) - mx);
    total += -(double(d[size_t(bi) * k + labels[size_t(bi)]]) - mx - std::log(denom));
  }
  return total / b;
}

// The whole NeuroView forward path rebuilt naively from the parameters:
// loop convolutions, relu, pooling, sigmoid/identity codes, spatial
// reduction, layer- then view-ordered concatenation, affine head.
template <std::floating_point S>
std::vector<double> neuroview_forward(const nv::NeuroViewModel<S>& model,
                                      const std::vector<nv::Tensor<S>>& inputs) {
  const int b = inputs.at(0).dim(0);
  std::vector<double> codes;  // concatenated per batch row at the end
  std::vector<std::vector<double>> per_row(static_cast<size_t>(b));

  for (int v = 0; v < model.config.views; ++v) {
    const auto& bb = model.backbone_for_view(v);
    // run the stack with plain buffers
    std::vector<double> cur(inputs[size_t(v)].data().begin(), inputs[size_t(v)].data().end());
    int c = model.spec.input_shape[0], h = model.spec.input_shape[1],
        w = model.spec.input_shape[2];
    size_t conv_i = 0;
    for (const nv::LayerSpec& layer : model.spec.layers) {
      if (layer.kind == nv::LayerSpec::Kind::conv) {
        const auto& p = bb.convs[conv_i++];
        const int cout = layer.out_channels, kk = layer.kernel;
        const int hout = (h + 2 * layer.pad - kk) / layer.stride + 1;
        const int wout = (w + 2 * layer.pad - kk) / layer.stride + 1;
        std::vector<double> pre(size_t(b) * cout * hout * wout, 0.0);
        auto kd = p.kernel.data();
        auto bd = p.bias.data();
        for (int bi = 0; bi < b; ++bi)
          for (int co = 0; co < cout; ++co)
            for (int oy = 0; oy < hout; ++oy)
              for (int ox = 0; ox < wout; ++ox) {
                double acc = double(bd[size_t(co)]);
                for (int ci = 0; ci < c; ++ci)
                  for (int ky = 0; ky < kk; ++ky)
                    for (int kx = 0; kx < kk; ++kx) {
                      const int iy = oy * layer.stride - layer.pad + ky;
                      const int ix = ox * layer.stride - layer.pad + kx;
                      if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                      acc += cur[((size_t(bi) * c + ci) * h + iy) * w + ix] *
                             double(kd[((size_t(co) * c + ci) * kk + ky) * kk + kx]);
                    }
                pre[((size_t(bi) * cout + co) * hout + oy) * wout + ox] = acc;
              }
        // codes from this tap
        const int hw = hout * wout;
        for (int bi = 0; bi < b; ++bi)
          for (int co = 0; co < cout; ++co) {
            const double* plane = pre.data() + (size_t(bi) * cout + co) * hw;
            double reduced;
            if (model.config.reduce == nv::Reduce::max) {
              double best = model.config.vq == nv::NeuroViewConfig::Vq::sigmoid
                                ? 1.0 / (1.0 + std::exp(-plane[0] / model.config.temperature))
                                : std::max(0.0, plane[0]);
              for (int j = 1; j < hw; ++j) {
                const double code =
                    model.config.vq == nv::NeuroViewConfig::Vq::sigmoid
                        ? 1.0 / (1.0 + std::exp(-plane[j] / model.config.temperature))
                        : std::max(0.0, plane[j]);
                best = std::max(best, code);
              }
              reduced = best;
            } else {
              double acc = 0.0;
              for (int j = 0; j < hw; ++j)
                acc += model.config.vq == nv::NeuroViewConfig::Vq::sigmoid
                           ? 1.0 / (1.0 + std::exp(-plane[j] / model.config.temperature))
                           : std::max(0.0, plane[j]);
              reduced = acc / hw;
            }
            per_row[size_t(bi)].push_back(reduced);
          }
        // relu into cur
        cur.assign(pre.begin(), pre.end());
        for (auto& vv : cur) vv = std::max(0.0, vv);
        c = cout;
        h = hout;
        w = wout;
      } else {
        const int hout = (h - layer.kernel) / layer.stride + 1;
        const int wout = (w - layer.kernel) / layer.stride + 1;
        std::vector<double> next(size_t(b) * c * hout * wout);
        for (int bi = 0; bi < b; ++bi)
          for (int ci = 0; ci < c; ++ci)
            for (int oy = 0; oy < hout; ++oy)
              for (int ox = 0; ox < wout; ++ox) {
                double best = -1e300;
                for (int ky = 0; ky < layer.kernel; ++ky)
                  for (int kx = 0; kx < layer.kernel; ++kx)
                    best = std::max(best, cur[((size_t(bi) * c + ci) * h +
                                               oy * layer.stride + ky) *
                                                  w +
                                              ox * layer.stride + kx]);
                next[((size_t(bi) * c + ci) * hout + oy) * wout + ox] = best;
              }
        cur = std::move(next);
        h = hout;
        w = wout;
      }
    }
  }

  // affine head on the concatenated codes
  const int u = model.unit_total();
  const int k = model.spec.num_classes;
  auto wd = model.head_weight.data();
  auto bd = model.head_bias.data();
  std::vector<double> logits(size_t(b) * k);
  for (int bi = 0; bi < b; ++bi) {
    for (int kk = 0; kk < k; ++kk) {
      double acc = double(bd[size_t(kk)]);
      for (int j = 0; j < u; ++j)
        acc += per_row[size_t(bi)][size_t(j)] * double(wd[size_t(kk) * u + j]);
      logits[size_t(bi) * k + kk] = acc;
    }
  }
  return logits;
}

// Brute-force group-by for concept sums: unit -> concept lookup, then sum.
inline std::map<std::string, double> concept_sums(
    const std::vector<nv::UnitWeight<float>>& row,
    const std::map<std::pair<int, int>, std::string>& unit_concepts) {
  std::map<std::string, double> sums;
  for (const auto& e : row) {
    auto it = unit_concepts.find({e.layer, e.channel});
    sums[it == unit_concepts.end() ? "unlabeled" : it->second] += double(e.weight);
  }
  return sums;
}

// Minimal XML well-formedness check: prolog, balanced tags, quoted
// attributes. Good enough to catch emitter bugs in the svg output.
inline bool xml_well_formed(const std::string& text) {
  size_t i = 0;
  auto skip_ws = [&] { while (i < text.size() && std::isspace(uint8_t(text[i]))) ++i; };
  skip_ws();
  if (text.compare(i, 5, "<?xml") == 0) {
    i = text.find("?>", i);
    if (i == std::string::npos) return false;
    i += 2;
  }
  std::vector<std::string> stack;
  while (i < text.size()) {
    skip_ws();
    if (i >= text.size()) break;
    if (text[i] != '<') {  // character data
      while (i < text.size() && text[i] != '<') {
        if (text[i] == '>') return false;
        ++i;
      }
      continue;
    }
    if (text.compare(i, 4, "<!--") == 0) {
      i = text.find("-->", i);
      if (i == std::string::npos) return false;
      i += 3;
      continue;
    }
    const bool closing = i + 1 < text.size() && text[i + 1] == '/';
    size_t j = i + (closing ? 2 : 1);
    size_t name_start = j;
    while (j < text.size() && (std::isalnum(uint8_t(text[j])) || text[j] == ':' ||
                               text[j] == '-' || text[j] == '_'))
      ++j;
    if (j == name_start) return false;
    std::string name = text.substr(name_start, j - name_start);
    // attributes
    bool self_closing = false;
    while (j < text.size() && text[j] != '>') {
      if (text[j] == '"') {
        ++j;
        while (j < text.size() && text[j] != '"') ++j;
        if (j >= text.size()) return false;
      }
      if (text[j] == '/' && j + 1 < text.size() && text[j + 1] == '>') self_closing = true;
      ++j;
    }
    if (j >= text.size()) return false;
    ++j;  // past '>'
    if (closing) {
      if (stack.empty() || stack.back() != name) return false;
      stack.pop_back();
    } else if (!self_closing) {
      stack.push_back(name);
    }
    i = j;
  }
  return stack.empty();
}

}  // namespace oracle
