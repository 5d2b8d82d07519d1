#include "nv/train.hpp"

#include <nlohmann/json.hpp>

namespace nv {

void append_metrics_jsonl(const std::filesystem::path& path, const EpochMetrics& m) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot write metrics file: " + path.string());
  nlohmann::json j{{"epoch", m.epoch},
                   {"train_loss", m.train_loss},
                   {"val_acc", m.val_acc},
                   {"lr", m.lr}};
  out << j.dump() << "\n";
}

}  // namespace nv
