#include "nv/arch.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

namespace nv {

void validate(const ArchSpec& spec) {
  if (spec.num_classes < 1)
    throw std::invalid_argument("arch " + spec.name + ": num_classes must be >= 1");
  for (int d : spec.input_shape)
    if (d < 1) throw std::invalid_argument("arch " + spec.name + ": non-positive input extent");
  if (spec.layers.empty())
    throw std::invalid_argument("arch " + spec.name + ": no layers");
  int h = spec.input_shape[1], w = spec.input_shape[2];
  int li = 0;
  for (const LayerSpec& layer : spec.layers) {
    if (layer.kernel < 1 || layer.stride < 1)
      throw std::invalid_argument(strprintf("arch %s: layer %d has non-positive extents",
                                            spec.name.c_str(), li));
    if (layer.kind == LayerSpec::Kind::conv) {
      if (layer.out_channels < 1)
        throw std::invalid_argument(strprintf("arch %s: conv layer %d has no channels",
                                              spec.name.c_str(), li));
      if (layer.pad < 0)
        throw std::invalid_argument(strprintf("arch %s: conv layer %d negative pad",
                                              spec.name.c_str(), li));
      if (h + 2 * layer.pad < layer.kernel || w + 2 * layer.pad < layer.kernel)
        h = w = 0;
      else {
        h = (h + 2 * layer.pad - layer.kernel) / layer.stride + 1;
        w = (w + 2 * layer.pad - layer.kernel) / layer.stride + 1;
      }
    } else {
      if (h < layer.kernel || w < layer.kernel)
        h = w = 0;
      else {
        h = (h - layer.kernel) / layer.stride + 1;
        w = (w - layer.kernel) / layer.stride + 1;
      }
    }
    if (h < 1 || w < 1)
      throw std::invalid_argument(strprintf(
          "arch %s: spatial extent collapses to %dx%d at layer %d for input %dx%d",
          spec.name.c_str(), h, w, li, spec.input_shape[1], spec.input_shape[2]));
    ++li;
  }
}

int unit_count(const ArchSpec& spec) {
  int total = 0;
  for (const LayerSpec& layer : spec.layers)
    if (layer.kind == LayerSpec::Kind::conv) total += layer.out_channels;
  return total;
}

std::vector<LayerUnits> unit_layout(const ArchSpec& spec) {
  std::vector<LayerUnits> layout;
  int ci = 0;
  for (const LayerSpec& layer : spec.layers)
    if (layer.kind == LayerSpec::Kind::conv)
      layout.push_back({ci++, layer.out_channels});
  return layout;
}

std::array<int, 3> output_shape(const ArchSpec& spec) {
  int c = spec.input_shape[0], h = spec.input_shape[1], w = spec.input_shape[2];
  for (const LayerSpec& layer : spec.layers) {
    if (layer.kind == LayerSpec::Kind::conv) {
      c = layer.out_channels;
      h = (h + 2 * layer.pad - layer.kernel) / layer.stride + 1;
      w = (w + 2 * layer.pad - layer.kernel) / layer.stride + 1;
    } else {
      h = (h - layer.kernel) / layer.stride + 1;
      w = (w - layer.kernel) / layer.stride + 1;
    }
  }
  return {c, h, w};
}

bool is_preset(const std::string& name) {
  return name == "vgg-mini" || name == "vgg11";
}

ArchSpec make_preset(const std::string& name, std::array<int, 3> input_shape,
                     int num_classes) {
  ArchSpec spec;
  spec.name = name;
  spec.input_shape = input_shape;
  spec.num_classes = num_classes;
  if (name == "vgg-mini") {
    spec.layers = {
        LayerSpec::conv(16), LayerSpec::maxpool(),
        LayerSpec::conv(32), LayerSpec::maxpool(),
        LayerSpec::conv(64), LayerSpec::maxpool(),
        LayerSpec::conv(64),
    };
  } else if (name == "vgg11") {
    spec.layers = {
        LayerSpec::conv(64),  LayerSpec::maxpool(),
        LayerSpec::conv(128), LayerSpec::maxpool(),
        LayerSpec::conv(256), LayerSpec::conv(256), LayerSpec::maxpool(),
        LayerSpec::conv(512), LayerSpec::conv(512), LayerSpec::maxpool(),
        LayerSpec::conv(512), LayerSpec::conv(512), LayerSpec::maxpool(),
    };
  } else {
    throw std::invalid_argument("unknown arch preset: " + name);
  }
  validate(spec);
  return spec;
}

nlohmann::json arch_to_json(const ArchSpec& spec) {
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerSpec& layer : spec.layers) {
    nlohmann::json jl;
    if (layer.kind == LayerSpec::Kind::conv) {
      jl = {{"kind", "conv"},
            {"out_channels", layer.out_channels},
            {"kernel", layer.kernel},
            {"stride", layer.stride},
            {"pad", layer.pad}};
    } else {
      jl = {{"kind", "maxpool"}, {"kernel", layer.kernel}, {"stride", layer.stride}};
    }
    layers.push_back(std::move(jl));
  }
  return {{"name", spec.name},
          {"input_shape", spec.input_shape},
          {"num_classes", spec.num_classes},
          {"layers", std::move(layers)}};
}

ArchSpec arch_from_json(const nlohmann::json& j) {
  ArchSpec spec;
  spec.name = j.at("name").get<std::string>();
  auto shape = j.at("input_shape");
  if (!shape.is_array() || shape.size() != 3)
    throw std::invalid_argument("arch json: input_shape must be [C,H,W]");
  for (size_t i = 0; i < 3; ++i) spec.input_shape[i] = shape[i].get<int>();
  spec.num_classes = j.at("num_classes").get<int>();
  for (const auto& jl : j.at("layers")) {
    const std::string kind = jl.at("kind").get<std::string>();
    if (kind == "conv") {
      spec.layers.push_back(LayerSpec::conv(
          jl.at("out_channels").get<int>(), jl.at("kernel").get<int>(),
          jl.value("stride", 1), jl.value("pad", 0)));
    } else if (kind == "maxpool") {
      spec.layers.push_back(
          LayerSpec::maxpool(jl.at("kernel").get<int>(), jl.value("stride", 1)));
    } else {
      throw std::invalid_argument("arch json: unknown layer kind '" + kind + "'");
    }
  }
  validate(spec);
  return spec;
}

ArchSpec load_arch(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open arch file: " + path);
  nlohmann::json j;
  in >> j;
  return arch_from_json(j);
}

void save_arch(const ArchSpec& spec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write arch file: " + path);
  out << arch_to_json(spec).dump(2) << "\n";
}

}  // namespace nv
