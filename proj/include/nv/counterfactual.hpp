// Channel-perturbation counterfactuals: zero one color channel across an
// evaluation set and tabulate per-class accuracy against the unperturbed
// baseline column.
#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "nv/checkpoint.hpp"
#include "nv/dataset.hpp"

namespace nv {

enum class Channel { none = -1, red = 0, green = 1, blue = 2 };

Channel parse_channel(const std::string& s);
const char* to_string(Channel c);

struct PerturbSpec {
  Channel channel = Channel::none;
};

// Zeroes the selected channel; labels, sample count, and the other channels
// are untouched. channel=none is the identity. Perturbation happens in [0,1]
// pixel space, after loading and before any model-side processing.
Dataset perturb(const Dataset& data, PerturbSpec spec);

struct CounterfactualReport {
  std::vector<Channel> channels;            // column order, none first
  std::vector<std::string> networks;        // one per row group
  std::vector<std::string> class_names;
  // percent accuracy, full precision: values[model][class][column]
  std::vector<std::vector<std::vector<double>>> values;
};

CounterfactualReport counterfactual_table(
    const std::vector<std::pair<std::string, const AnyModel*>>& models,
    const Dataset& data,
    std::vector<Channel> channels = {Channel::none, Channel::red, Channel::green,
                                     Channel::blue});

// CSV columns network,class,<channel...>; percentages rounded at render time.
void render_counterfactual_csv(const CounterfactualReport& report,
                               const std::filesystem::path& path);

}  // namespace nv
