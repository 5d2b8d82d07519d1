#include "nv/counterfactual.hpp"

#include <cstring>
#include <fstream>

#include "nv/train.hpp"

namespace nv {

Channel parse_channel(const std::string& s) {
  if (s == "none") return Channel::none;
  if (s == "red") return Channel::red;
  if (s == "green") return Channel::green;
  if (s == "blue") return Channel::blue;
  throw std::invalid_argument("unknown channel: " + s);
}

const char* to_string(Channel c) {
  switch (c) {
    case Channel::none: return "none";
    case Channel::red: return "red";
    case Channel::green: return "green";
    default: return "blue";
  }
}

Dataset perturb(const Dataset& data, PerturbSpec spec) {
  if (spec.channel == Channel::none) return data;
  const int c = int(spec.channel);
  if (data.channels != 3)
    throw std::invalid_argument(strprintf(
        "perturb: channel '%s' requested on %d-channel data", to_string(spec.channel),
        data.channels));
  Dataset out = data;
  const size_t plane = size_t(data.height) * data.width;
  for (int i = 0; i < out.size(); ++i) {
    float* img = out.images.data() + size_t(i) * 3 * plane;
    std::memset(img + size_t(c) * plane, 0, plane * sizeof(float));
  }
  return out;
}

CounterfactualReport counterfactual_table(
    const std::vector<std::pair<std::string, const AnyModel*>>& models,
    const Dataset& data, std::vector<Channel> channels) {
  if (models.empty()) throw std::invalid_argument("counterfactual_table: no models");
  CounterfactualReport report;
  report.channels = channels;
  report.class_names = data.class_names;
  for (const auto& [name, model] : models) {
    if (model_spec(*model).num_classes != data.num_classes())
      throw std::invalid_argument("counterfactual_table: model " + name +
                                  " class count differs from dataset");
    report.networks.push_back(name);
  }
  report.values.assign(models.size(),
                       std::vector<std::vector<double>>(
                           size_t(data.num_classes()),
                           std::vector<double>(channels.size(), 0.0)));
  for (size_t ci = 0; ci < channels.size(); ++ci) {
    const Dataset view = perturb(data, {channels[ci]});
    for (size_t mi = 0; mi < models.size(); ++mi) {
      EvalResult r = std::visit([&](const auto& m) { return evaluate(m, view); },
                                *models[mi].second);
      for (int k = 0; k < data.num_classes(); ++k)
        report.values[mi][size_t(k)][ci] = 100.0 * r.per_class[size_t(k)];
    }
  }
  return report;
}

void render_counterfactual_csv(const CounterfactualReport& report,
                               const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write: " + path.string());
  out << "network,class";
  for (Channel c : report.channels) out << "," << to_string(c);
  out << "\n";
  for (size_t mi = 0; mi < report.networks.size(); ++mi)
    for (size_t k = 0; k < report.class_names.size(); ++k) {
      out << report.networks[mi] << "," << report.class_names[k];
      for (size_t ci = 0; ci < report.channels.size(); ++ci)
        out << "," << strprintf("%.2f", report.values[mi][k][ci]);
      out << "\n";
    }
}

}  // namespace nv
