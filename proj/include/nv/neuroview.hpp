// The NeuroView transform: per-unit codes from each conv layer's
// pre-activation, spatial reduction to one scalar per unit, layer-ordered
// concatenation across views, and a single global linear head over all units.
#pragma once

#include <span>
#include <string>
#include <vector>

#include "nv/arch.hpp"
#include "nv/tensor.hpp"

namespace nv {

struct NeuroViewConfig {
  enum class Vq { sigmoid, identity };
  Vq vq = Vq::sigmoid;
  double temperature = 1.0;
  Reduce reduce = Reduce::mean;
  int views = 1;
  bool shared_view_weights = true;
};

inline void validate(const NeuroViewConfig& cfg) {
  if (!(cfg.temperature > 0.0))
    throw std::invalid_argument("NeuroViewConfig: temperature must be > 0");
  if (cfg.views < 1) throw std::invalid_argument("NeuroViewConfig: views must be >= 1");
}

inline const char* to_string(NeuroViewConfig::Vq v) {
  return v == NeuroViewConfig::Vq::sigmoid ? "sigmoid" : "identity";
}
inline const char* to_string(Reduce r) { return r == Reduce::max ? "max" : "mean"; }

// Concatenated reduced codes, width views * unit_count(spec). With
// vq=sigmoid every entry lies strictly inside (0,1).
template <std::floating_point S>
struct CodeVector {
  Tensor<S> values;  // [B, U_total]
  int width() const { return values.dim(1); }
};

template <std::floating_point S>
struct UnitWeight {
  int layer = 0;    // conv ordinal within the arch
  int view = 0;
  int channel = 0;
  S weight = 0;
};

template <std::floating_point S>
struct NeuroViewModel {
  ArchSpec spec;
  NeuroViewConfig config;
  // One entry when views share weights, otherwise one backbone per view.
  std::vector<Backbone<S>> backbones;
  Tensor<S> head_weight;  // [num_classes, U_total]
  Tensor<S> head_bias;    // [num_classes]
  uint64_t seed = 0;
  std::vector<std::string> class_names;  // optional, from the training set

  int unit_total() const { return config.views * unit_count(spec); }

  const Backbone<S>& backbone_for_view(int v) const {
    return backbones[config.shared_view_weights ? 0 : size_t(v)];
  }

  std::vector<Tensor<S>> params() const {
    std::vector<Tensor<S>> out;
    for (const auto& bb : backbones)
      for (auto& p : bb.params()) out.push_back(p);
    out.push_back(head_weight);
    out.push_back(head_bias);
    return out;
  }

  // Code maps per conv layer: sigmoid(pre/T) for the Soft VQ, or the layer's
  // raw nonlinear output for identity. Reduced to [B,C], concatenated layer
  // by layer within a view, then view by view.
  CodeVector<S> extract_codes(std::span<const Tensor<S>> inputs) const {
    if (int(inputs.size()) != config.views)
      throw std::invalid_argument(strprintf("extract_codes: %d inputs for %d views",
                                            int(inputs.size()), config.views));
    std::vector<Tensor<S>> pieces;
    pieces.reserve(size_t(config.views) * unit_layout(spec).size());
    for (int v = 0; v < config.views; ++v) {
      auto taps = backbone_for_view(v).forward(inputs[size_t(v)]);
      for (const Tensor<S>& pre : taps.pre_acts) {
        Tensor<S> code_map;
        if (config.vq == NeuroViewConfig::Vq::sigmoid) {
          Tensor<S> scaled = config.temperature == 1.0
                                 ? pre
                                 : scale(pre, S(1.0 / config.temperature));
          code_map = sigmoid(scaled);
        } else {
          code_map = relu(pre);
        }
        pieces.push_back(reduce_spatial(code_map, config.reduce));
      }
    }
    return {concat(pieces)};
  }

  Tensor<S> head_forward(const CodeVector<S>& codes) const {
    if (codes.width() != unit_total())
      throw_dim(strprintf("head_forward: code width %d, expected %d", codes.width(),
                          unit_total()));
    return linear(codes.values, head_weight, head_bias);
  }

  Tensor<S> forward(std::span<const Tensor<S>> inputs) const {
    return head_forward(extract_codes(inputs));
  }

  Tensor<S> forward(const Tensor<S>& x) const {
    // Single-image convenience: the same input feeds every view.
    std::vector<Tensor<S>> inputs(size_t(config.views), x);
    return forward(std::span<const Tensor<S>>(inputs));
  }

  // Row k of the head in concatenation order; flattening the weights
  // reproduces head_weight[k] bit-exactly.
  std::vector<UnitWeight<S>> weight_row(int class_k) const {
    if (class_k < 0 || class_k >= spec.num_classes)
      throw std::out_of_range(strprintf("weight_row: class %d outside [0,%d)", class_k,
                                        spec.num_classes));
    const auto layout = unit_layout(spec);
    std::vector<UnitWeight<S>> row;
    row.reserve(size_t(unit_total()));
    auto w = head_weight.data();
    size_t u = size_t(class_k) * unit_total();
    for (int v = 0; v < config.views; ++v)
      for (const LayerUnits& lu : layout)
        for (int c = 0; c < lu.channels; ++c, ++u)
          row.push_back({lu.conv_index, v, c, w[u]});
    return row;
  }

  std::string class_name(int k) const {
    if (k >= 0 && k < int(class_names.size())) return class_names[size_t(k)];
    return std::to_string(k);
  }
};

// Builds a model with seed-pinned backbone init and a zero head, so initial
// logits are input-independent and trained weights read as learned
// contribution.
template <std::floating_point S>
NeuroViewModel<S> make_neuroview(const ArchSpec& spec, const NeuroViewConfig& config,
                                 uint64_t seed) {
  validate(spec);
  validate(config);
  NeuroViewModel<S> m;
  m.spec = spec;
  m.config = config;
  m.seed = seed;
  const int n_backbones = config.shared_view_weights ? 1 : config.views;
  for (int i = 0; i < n_backbones; ++i)
    m.backbones.push_back(build_backbone<S>(spec, substream(seed, uint64_t(i))));
  m.head_weight = Tensor<S>::param({spec.num_classes, m.unit_total()});
  m.head_bias = Tensor<S>::param({spec.num_classes});
  return m;
}

}  // namespace nv
