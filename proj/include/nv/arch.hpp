// Declarative backbone descriptions. An ArchSpec is the source of truth for
// unit enumeration: a unit is one convolutional channel, every conv layer is
// implicitly followed by a ReLU, and the original final classifier of the
// source architecture is never built.
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "nv/tensor.hpp"

#include <nlohmann/json_fwd.hpp>

namespace nv {

struct LayerSpec {
  enum class Kind { conv, maxpool };
  Kind kind = Kind::conv;
  int out_channels = 0;  // conv only
  int kernel = 0;
  int stride = 1;
  int pad = 0;  // conv only

  static LayerSpec conv(int out_channels, int kernel = 3, int stride = 1, int pad = 1) {
    return {Kind::conv, out_channels, kernel, stride, pad};
  }
  static LayerSpec maxpool(int kernel = 2, int stride = 2) {
    return {Kind::maxpool, 0, kernel, stride, 0};
  }
  bool operator==(const LayerSpec&) const = default;
};

struct ArchSpec {
  std::string name;
  std::array<int, 3> input_shape{0, 0, 0};  // C,H,W
  std::vector<LayerSpec> layers;
  int num_classes = 0;
  bool operator==(const ArchSpec&) const = default;
};

// Throws std::invalid_argument when extents are non-positive or the spatial
// dimensions collapse below 1x1 anywhere in the stack.
void validate(const ArchSpec& spec);

int unit_count(const ArchSpec& spec);

struct LayerUnits {
  int conv_index = 0;  // 0-based ordinal over conv layers
  int channels = 0;
};
std::vector<LayerUnits> unit_layout(const ArchSpec& spec);

// (C,H,W) of the final feature map for the declared input shape.
std::array<int, 3> output_shape(const ArchSpec& spec);

// Presets: "vgg-mini" (16,32,64,64 conv channels) and "vgg11"
// (64,128,256,256,512,512,512,512). Input shape and class count are supplied
// by the caller, typically from the dataset.
ArchSpec make_preset(const std::string& name, std::array<int, 3> input_shape,
                     int num_classes);
bool is_preset(const std::string& name);

nlohmann::json arch_to_json(const ArchSpec& spec);
ArchSpec arch_from_json(const nlohmann::json& j);
ArchSpec load_arch(const std::string& path);
void save_arch(const ArchSpec& spec, const std::string& path);

// ---------------------------------------------------------------------------
// Built backbone: parameters plus a forward pass that exposes the tap points
// (the pre-activation map feeding each conv layer's ReLU).

template <std::floating_point S>
struct ConvLayer {
  Tensor<S> kernel;  // [Cout,Cin,k,k]
  Tensor<S> bias;    // [Cout]
  int stride = 1;
  int pad = 0;
};

template <std::floating_point S>
struct Backbone {
  ArchSpec spec;
  std::vector<ConvLayer<S>> convs;  // one per conv layer, in order

  struct Taps {
    Tensor<S> final_post;               // output of the last layer
    std::vector<Tensor<S>> pre_acts;    // per conv layer, inputs to ReLU
  };

  Taps forward(const Tensor<S>& x) const {
    if (x.shape().size() != 4 || x.dim(1) != spec.input_shape[0] ||
        x.dim(2) != spec.input_shape[1] || x.dim(3) != spec.input_shape[2])
      throw_dim("backbone forward: input " + shape_str(x.shape()) +
                " does not match arch input shape");
    Taps taps;
    Tensor<S> cur = x;
    size_t ci = 0;
    for (const LayerSpec& layer : spec.layers) {
      if (layer.kind == LayerSpec::Kind::conv) {
        const ConvLayer<S>& p = convs[ci++];
        Tensor<S> pre = conv2d(cur, p.kernel, p.bias, p.stride, p.pad);
        taps.pre_acts.push_back(pre);
        cur = relu(pre);
      } else {
        cur = maxpool2d(cur, layer.kernel, layer.stride);
      }
    }
    taps.final_post = cur;
    return taps;
  }

  std::vector<Tensor<S>> params() const {
    std::vector<Tensor<S>> out;
    for (const auto& c : convs) {
      out.push_back(c.kernel);
      out.push_back(c.bias);
    }
    return out;
  }
};

// Fan-in-scaled uniform kernels (bound sqrt(6/fan_in)), zero biases, all
// draws pinned to the seed.
template <std::floating_point S>
Backbone<S> build_backbone(const ArchSpec& spec, uint64_t seed) {
  validate(spec);
  Backbone<S> bb;
  bb.spec = spec;
  Rng rng(substream(seed, 0xb0));
  int cin = spec.input_shape[0];
  for (const LayerSpec& layer : spec.layers) {
    if (layer.kind != LayerSpec::Kind::conv) continue;
    ConvLayer<S> cl;
    cl.stride = layer.stride;
    cl.pad = layer.pad;
    cl.kernel = Tensor<S>::param({layer.out_channels, cin, layer.kernel, layer.kernel});
    cl.bias = Tensor<S>::param({layer.out_channels});
    const double fan_in = double(cin) * layer.kernel * layer.kernel;
    const double bound = std::sqrt(6.0 / fan_in);
    auto kd = cl.kernel.data();
    for (size_t i = 0; i < kd.size(); ++i) kd[i] = S(rng.uniform(-bound, bound));
    bb.convs.push_back(std::move(cl));
    cin = layer.out_channels;
  }
  return bb;
}

}  // namespace nv
