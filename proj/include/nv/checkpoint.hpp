// Checkpoints: a directory holding manifest.json plus one raw blob per
// parameter tensor. Blobs are little-endian float32, row-major, no header;
// the manifest carries the arch, transform config, seed, class names, and a
// tensor index (name, shape, file), so dumps are diffable byte for byte.
#pragma once

#include <filesystem>
#include <string>
#include <variant>

#include "nv/neuroview.hpp"
#include "nv/train.hpp"

namespace nv {

using AnyModel = std::variant<NeuroViewModel<float>, BaselineModel<float>>;

void save_checkpoint(const std::filesystem::path& dir, const NeuroViewModel<float>& m);
void save_checkpoint(const std::filesystem::path& dir, const BaselineModel<float>& m);
void save_checkpoint(const std::filesystem::path& dir, const AnyModel& m);

AnyModel load_checkpoint(const std::filesystem::path& dir);

// "neuroview" or "baseline", read from the manifest without loading blobs.
std::string checkpoint_kind(const std::filesystem::path& dir);

inline const ArchSpec& model_spec(const AnyModel& m) {
  return std::visit([](const auto& v) -> const ArchSpec& { return v.spec; }, m);
}
inline std::string model_class_name(const AnyModel& m, int k) {
  return std::visit([&](const auto& v) { return v.class_name(k); }, m);
}
inline std::string model_kind_name(const AnyModel& m) {
  return std::holds_alternative<NeuroViewModel<float>>(m) ? "neuroview" : "baseline";
}

nlohmann::json config_to_json(const NeuroViewConfig& cfg);
NeuroViewConfig config_from_json(const nlohmann::json& j);

}  // namespace nv
