#include "nv/checkpoint.hpp"

#include <bit>
#include <fstream>

#include <nlohmann/json.hpp>

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian; big-endian hosts need byte swaps");

namespace nv {

namespace fs = std::filesystem;

namespace {

constexpr const char* kFormatTag = "neuroview-checkpoint-v1";

void write_blob(const fs::path& dir, const std::string& name, const TensorF& t,
                nlohmann::json& index) {
  const std::string file = name + ".bin";
  std::ofstream out(dir / file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write blob: " + (dir / file).string());
  auto d = t.data();
  out.write(reinterpret_cast<const char*>(d.data()),
            std::streamsize(d.size() * sizeof(float)));
  index.push_back({{"name", name}, {"shape", t.shape()}, {"dtype", "f32"}, {"file", file}});
}

void read_blob(const fs::path& dir, const nlohmann::json& entry, TensorF& t) {
  const Shape shape = entry.at("shape").get<Shape>();
  if (shape != t.shape())
    throw std::runtime_error("checkpoint tensor " + entry.at("name").get<std::string>() +
                             " has shape " + shape_str(shape) + ", expected " +
                             shape_str(t.shape()));
  const fs::path file = dir / entry.at("file").get<std::string>();
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open blob: " + file.string());
  auto d = t.data();
  in.read(reinterpret_cast<char*>(d.data()), std::streamsize(d.size() * sizeof(float)));
  if (in.gcount() != std::streamsize(d.size() * sizeof(float)))
    throw std::runtime_error("truncated blob: " + file.string());
}

template <class Model>
std::vector<std::pair<std::string, TensorF>> named_params(Model& m);

std::vector<std::pair<std::string, TensorF>> named_params(NeuroViewModel<float>& m) {
  std::vector<std::pair<std::string, TensorF>> out;
  for (size_t v = 0; v < m.backbones.size(); ++v) {
    for (size_t c = 0; c < m.backbones[v].convs.size(); ++c) {
      out.emplace_back(strprintf("backbone%zu.conv%zu.kernel", v, c),
                       m.backbones[v].convs[c].kernel);
      out.emplace_back(strprintf("backbone%zu.conv%zu.bias", v, c),
                       m.backbones[v].convs[c].bias);
    }
  }
  out.emplace_back("head.weight", m.head_weight);
  out.emplace_back("head.bias", m.head_bias);
  return out;
}

std::vector<std::pair<std::string, TensorF>> named_params(BaselineModel<float>& m) {
  std::vector<std::pair<std::string, TensorF>> out;
  for (size_t c = 0; c < m.backbone.convs.size(); ++c) {
    out.emplace_back(strprintf("backbone0.conv%zu.kernel", c), m.backbone.convs[c].kernel);
    out.emplace_back(strprintf("backbone0.conv%zu.bias", c), m.backbone.convs[c].bias);
  }
  out.emplace_back("head.weight", m.head_weight);
  out.emplace_back("head.bias", m.head_bias);
  return out;
}

template <class Model>
void save_impl(const fs::path& dir, const Model& model, const std::string& kind,
               const nlohmann::json& config) {
  fs::remove_all(dir);  // the directory is the checkpoint; no stale blobs
  fs::create_directories(dir);
  nlohmann::json index = nlohmann::json::array();
  auto params = named_params(const_cast<Model&>(model));
  for (auto& [name, t] : params) write_blob(dir, name, t, index);
  nlohmann::json manifest{{"format", kFormatTag},
                          {"model_kind", kind},
                          {"arch", arch_to_json(model.spec)},
                          {"config", config},
                          {"seed", model.seed},
                          {"class_names", model.class_names},
                          {"tensors", std::move(index)}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest: " + (dir / "manifest.json").string());
  out << manifest.dump(2) << "\n";
}

}  // namespace

nlohmann::json config_to_json(const NeuroViewConfig& cfg) {
  return {{"vq", to_string(cfg.vq)},
          {"temperature", cfg.temperature},
          {"reduce", to_string(cfg.reduce)},
          {"views", cfg.views},
          {"shared_view_weights", cfg.shared_view_weights}};
}

NeuroViewConfig config_from_json(const nlohmann::json& j) {
  NeuroViewConfig cfg;
  const std::string vq = j.value("vq", "sigmoid");
  if (vq == "sigmoid") cfg.vq = NeuroViewConfig::Vq::sigmoid;
  else if (vq == "identity") cfg.vq = NeuroViewConfig::Vq::identity;
  else throw std::invalid_argument("config: unknown vq mode '" + vq + "'");
  cfg.temperature = j.value("temperature", 1.0);
  const std::string reduce = j.value("reduce", "mean");
  if (reduce == "max") cfg.reduce = Reduce::max;
  else if (reduce == "mean") cfg.reduce = Reduce::mean;
  else throw std::invalid_argument("config: unknown reduce mode '" + reduce + "'");
  cfg.views = j.value("views", 1);
  cfg.shared_view_weights = j.value("shared_view_weights", true);
  validate(cfg);
  return cfg;
}

void save_checkpoint(const fs::path& dir, const NeuroViewModel<float>& m) {
  save_impl(dir, m, "neuroview", config_to_json(m.config));
}

void save_checkpoint(const fs::path& dir, const BaselineModel<float>& m) {
  save_impl(dir, m, "baseline", nlohmann::json::object());
}

void save_checkpoint(const fs::path& dir, const AnyModel& m) {
  std::visit([&](const auto& v) { save_checkpoint(dir, v); }, m);
}

std::string checkpoint_kind(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("cannot open checkpoint manifest: " +
                                    (dir / "manifest.json").string());
  nlohmann::json manifest;
  in >> manifest;
  return manifest.at("model_kind").get<std::string>();
}

AnyModel load_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("cannot open checkpoint manifest: " +
                                    (dir / "manifest.json").string());
  nlohmann::json manifest;
  in >> manifest;
  if (manifest.value("format", "") != kFormatTag)
    throw std::runtime_error("unrecognized checkpoint format in " + dir.string());
  const ArchSpec spec = arch_from_json(manifest.at("arch"));
  const uint64_t seed = manifest.at("seed").get<uint64_t>();
  const std::string kind = manifest.at("model_kind").get<std::string>();

  auto finish = [&](auto& model) {
    model.class_names = manifest.value("class_names", std::vector<std::string>{});
    auto params = named_params(model);
    std::map<std::string, TensorF> by_name(params.begin(), params.end());
    const auto& tensors = manifest.at("tensors");
    if (tensors.size() != params.size())
      throw std::runtime_error(strprintf("checkpoint has %d tensors, model needs %d",
                                         int(tensors.size()), int(params.size())));
    for (const auto& entry : tensors) {
      auto it = by_name.find(entry.at("name").get<std::string>());
      if (it == by_name.end())
        throw std::runtime_error("checkpoint tensor not in model: " +
                                 entry.at("name").get<std::string>());
      read_blob(dir, entry, it->second);
    }
  };

  if (kind == "neuroview") {
    NeuroViewConfig cfg = config_from_json(manifest.at("config"));
    NeuroViewModel<float> model = make_neuroview<float>(spec, cfg, seed);
    finish(model);
    return model;
  }
  if (kind == "baseline") {
    BaselineModel<float> model = make_baseline<float>(spec, seed);
    finish(model);
    return model;
  }
  throw std::runtime_error("unknown model kind in checkpoint: " + kind);
}

}  // namespace nv
