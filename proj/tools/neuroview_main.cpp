// neuroview: single entry point for training, evaluation, explanation,
// concept mapping, counterfactual tables, dataset generation, and gradient
// checking. Every command resolves its options (a --config JSON supplies
// defaults, flags override), writes all artifacts under --out, and drops a
// RunManifest next to them so runs can be replayed bitwise.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "nv/checkpoint.hpp"
#include "nv/counterfactual.hpp"
#include "nv/dataset.hpp"
#include "nv/explain.hpp"
#include "nv/gradcheck.hpp"
#include "nv/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr int kExitDiverged = 3;

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  json j;
  in >> j;
  // accept either a flat options object or a full run manifest
  if (j.contains("options")) return j.at("options");
  return j;
}

template <class T>
void cfg_default(CLI::App* cmd, const std::string& flag, const json& cfg,
                 const std::string& key, T& var) {
  if (cfg.contains(key) && cmd->count(flag) == 0) var = cfg.at(key).get<T>();
}

void write_manifest(const fs::path& out_dir, const std::string& command,
                    const json& options) {
  fs::create_directories(out_dir);
  json manifest{{"tool_version", kVersion}, {"command", command}, {"options", options}};
  std::ofstream out(out_dir / "manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest under " + out_dir.string());
  out << manifest.dump(2) << "\n";
}

nv::ArchSpec resolve_arch(const std::string& arch, std::array<int, 3> input_shape,
                          int num_classes) {
  if (nv::is_preset(arch)) return nv::make_preset(arch, input_shape, num_classes);
  if (!fs::exists(arch))
    throw std::runtime_error("--arch: not a preset and no such file: " + arch);
  nv::ArchSpec spec = nv::load_arch(arch);
  if (spec.input_shape != input_shape)
    throw std::runtime_error(nv::strprintf(
        "arch file %s declares input %s but the dataset provides %s", arch.c_str(),
        nv::shape_str({spec.input_shape[0], spec.input_shape[1], spec.input_shape[2]}).c_str(),
        nv::shape_str({input_shape[0], input_shape[1], input_shape[2]}).c_str()));
  if (spec.num_classes != num_classes)
    throw std::runtime_error(nv::strprintf("arch file %s declares %d classes, dataset has %d",
                                           arch.c_str(), spec.num_classes, num_classes));
  return spec;
}

nv::NeuroViewModel<float> require_neuroview(nv::AnyModel& model, const std::string& ckpt) {
  if (auto* m = std::get_if<nv::NeuroViewModel<float>>(&model)) return *m;
  throw std::runtime_error("checkpoint " + ckpt +
                           " holds a baseline model; unit-level reports need a neuroview model");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NeuroView-style networks: train, explain, and probe them"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  int exit_code = 0;

  // ---- train ---------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
  struct {
    std::string arch = "vgg-mini";
    bool neuroview = false, baseline = false;
    std::string reduce = "mean", vq = "sigmoid";
    int views = 1;
    std::string data, format = "idx", out, config;
    nv::TrainConfig tc;
  } tr;
  train_cmd->add_option("--arch", tr.arch, "arch preset name or arch json path");
  train_cmd->add_flag("--neuroview", tr.neuroview, "train the NeuroView variant");
  train_cmd->add_flag("--baseline", tr.baseline, "train the conventional baseline");
  train_cmd->add_option("--reduce", tr.reduce, "code reduction: max|mean")
      ->check(CLI::IsMember({"max", "mean"}));
  train_cmd->add_option("--vq", tr.vq, "unit code: sigmoid|identity")
      ->check(CLI::IsMember({"sigmoid", "identity"}));
  train_cmd->add_option("--views", tr.views, "number of views");
  train_cmd->add_option("--data", tr.data, "dataset root directory");
  train_cmd->add_option("--format", tr.format, "dataset format: idx|png-dir")
      ->check(CLI::IsMember({"idx", "png-dir"}));
  train_cmd->add_option("--epochs", tr.tc.epochs, "training epochs");
  train_cmd->add_option("--batch", tr.tc.batch_size, "batch size");
  train_cmd->add_option("--lr", tr.tc.learning_rate, "learning rate");
  train_cmd->add_option("--momentum", tr.tc.momentum, "SGD momentum");
  train_cmd->add_option("--wd", tr.tc.weight_decay, "weight decay");
  train_cmd->add_option("--seed", tr.tc.seed, "run seed");
  train_cmd->add_option("--out", tr.out, "output directory");
  train_cmd->add_option("--config", tr.config, "JSON config supplying defaults");
  train_cmd->callback([&] {
    const json cfg = load_config(tr.config);
    cfg_default(train_cmd, "--arch", cfg, "arch", tr.arch);
    cfg_default(train_cmd, "--reduce", cfg, "reduce", tr.reduce);
    cfg_default(train_cmd, "--vq", cfg, "vq", tr.vq);
    cfg_default(train_cmd, "--views", cfg, "views", tr.views);
    cfg_default(train_cmd, "--data", cfg, "data", tr.data);
    cfg_default(train_cmd, "--format", cfg, "format", tr.format);
    cfg_default(train_cmd, "--epochs", cfg, "epochs", tr.tc.epochs);
    cfg_default(train_cmd, "--batch", cfg, "batch", tr.tc.batch_size);
    cfg_default(train_cmd, "--lr", cfg, "lr", tr.tc.learning_rate);
    cfg_default(train_cmd, "--momentum", cfg, "momentum", tr.tc.momentum);
    cfg_default(train_cmd, "--wd", cfg, "wd", tr.tc.weight_decay);
    cfg_default(train_cmd, "--seed", cfg, "seed", tr.tc.seed);
    cfg_default(train_cmd, "--out", cfg, "out", tr.out);
    std::string model_kind = tr.neuroview ? "neuroview" : tr.baseline ? "baseline" : "";
    if (tr.neuroview && tr.baseline)
      throw CLI::ValidationError("--neuroview and --baseline are mutually exclusive");
    if (model_kind.empty() && cfg.contains("model"))
      model_kind = cfg.at("model").get<std::string>();
    if (model_kind.empty())
      throw CLI::ValidationError("one of --neuroview or --baseline is required");
    if (tr.data.empty()) throw CLI::ValidationError("--data is required");
    if (tr.out.empty()) throw CLI::ValidationError("--out is required");
    double temperature = cfg.value("temperature", 1.0);
    bool shared_views = cfg.value("shared_view_weights", true);
    tr.tc.lr_decay_at = cfg.value("lr_decay_at", tr.tc.lr_decay_at);
    tr.tc.lr_decay_factor = cfg.value("lr_decay_factor", tr.tc.lr_decay_factor);

    const nv::DataFormat format = nv::parse_format(tr.format);
    nv::Dataset train_set = nv::load_dataset(tr.data, format, "train");
    nv::Dataset val_set = nv::load_dataset(tr.data, format, "val");
    const nv::ArchSpec spec = resolve_arch(
        tr.arch, {train_set.channels, train_set.height, train_set.width},
        train_set.num_classes());

    const fs::path out_dir(tr.out);
    fs::create_directories(out_dir);
    const fs::path metrics_path = out_dir / "metrics.jsonl";
    if (fs::exists(metrics_path)) fs::remove(metrics_path);

    json options{{"arch", tr.arch},       {"model", model_kind},
                 {"reduce", tr.reduce},   {"vq", tr.vq},
                 {"views", tr.views},     {"data", tr.data},
                 {"format", tr.format},   {"epochs", tr.tc.epochs},
                 {"batch", tr.tc.batch_size}, {"lr", tr.tc.learning_rate},
                 {"momentum", tr.tc.momentum}, {"wd", tr.tc.weight_decay},
                 {"seed", tr.tc.seed},    {"out", tr.out},
                 {"temperature", temperature},
                 {"shared_view_weights", shared_views},
                 {"lr_decay_at", tr.tc.lr_decay_at},
                 {"lr_decay_factor", tr.tc.lr_decay_factor}};

    if (model_kind == "neuroview") {
      nv::NeuroViewConfig nv_cfg;
      nv_cfg.vq = tr.vq == "identity" ? nv::NeuroViewConfig::Vq::identity
                                      : nv::NeuroViewConfig::Vq::sigmoid;
      nv_cfg.reduce = tr.reduce == "max" ? nv::Reduce::max : nv::Reduce::mean;
      nv_cfg.views = tr.views;
      nv_cfg.temperature = temperature;
      nv_cfg.shared_view_weights = shared_views;
      auto model = nv::make_neuroview<float>(spec, nv_cfg, tr.tc.seed);
      nv::fit(model, train_set, val_set, tr.tc, &metrics_path, true);
      nv::save_checkpoint(out_dir / "checkpoint", model);
    } else {
      auto model = nv::make_baseline<float>(spec, tr.tc.seed);
      nv::fit(model, train_set, val_set, tr.tc, &metrics_path, true);
      nv::save_checkpoint(out_dir / "checkpoint", model);
    }
    write_manifest(out_dir, "train", options);
    std::printf("checkpoint written to %s\n", (out_dir / "checkpoint").string().c_str());
  });

  // ---- eval ----------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  struct {
    std::string ckpt, data, format = "idx", split = "val", out, config;
  } ev;
  eval_cmd->add_option("--ckpt", ev.ckpt, "checkpoint directory");
  eval_cmd->add_option("--data", ev.data, "dataset root directory");
  eval_cmd->add_option("--format", ev.format, "dataset format: idx|png-dir")
      ->check(CLI::IsMember({"idx", "png-dir"}));
  eval_cmd->add_option("--split", ev.split, "train|val");
  eval_cmd->add_option("--out", ev.out, "output directory");
  eval_cmd->add_option("--config", ev.config, "JSON config supplying defaults");
  eval_cmd->callback([&] {
    const json cfg = load_config(ev.config);
    cfg_default(eval_cmd, "--ckpt", cfg, "ckpt", ev.ckpt);
    cfg_default(eval_cmd, "--data", cfg, "data", ev.data);
    cfg_default(eval_cmd, "--format", cfg, "format", ev.format);
    cfg_default(eval_cmd, "--split", cfg, "split", ev.split);
    cfg_default(eval_cmd, "--out", cfg, "out", ev.out);
    if (ev.ckpt.empty()) throw CLI::ValidationError("--ckpt is required");
    if (ev.data.empty()) throw CLI::ValidationError("--data is required");
    if (ev.out.empty()) throw CLI::ValidationError("--out is required");

    nv::AnyModel model = nv::load_checkpoint(ev.ckpt);
    nv::Dataset data = nv::load_dataset(ev.data, nv::parse_format(ev.format), ev.split);
    nv::EvalResult r =
        std::visit([&](const auto& m) { return nv::evaluate(m, data); }, model);

    const fs::path out_dir(ev.out);
    fs::create_directories(out_dir);
    json per_class = json::array();
    for (int k = 0; k < data.num_classes(); ++k)
      per_class.push_back({{"class", data.class_names[size_t(k)]},
                           {"accuracy", r.per_class[size_t(k)]},
                           {"count", r.class_counts[size_t(k)]}});
    json out{{"accuracy", r.accuracy},
             {"per_class", std::move(per_class)},
             {"confusion", r.confusion}};
    std::ofstream(out_dir / "eval.json") << out.dump(2) << "\n";
    write_manifest(out_dir, "eval",
                   json{{"ckpt", ev.ckpt}, {"data", ev.data}, {"format", ev.format},
                        {"split", ev.split}, {"out", ev.out}});
    std::printf("accuracy %.4f (%d samples)\n", r.accuracy, data.size());
  });

  // ---- explain ---------------------------------------------------------------
  auto* explain_cmd = app.add_subcommand("explain", "per-class head weight report");
  struct {
    std::string ckpt, format = "csv", out, config;
    int class_k = 0;
  } ex;
  explain_cmd->add_option("--ckpt", ex.ckpt, "checkpoint directory");
  explain_cmd->add_option("--class", ex.class_k, "class index");
  explain_cmd->add_option("--format", ex.format, "csv|json|svg")
      ->check(CLI::IsMember({"csv", "json", "svg"}));
  explain_cmd->add_option("--out", ex.out, "output directory");
  explain_cmd->add_option("--config", ex.config, "JSON config supplying defaults");
  explain_cmd->callback([&] {
    const json cfg = load_config(ex.config);
    cfg_default(explain_cmd, "--ckpt", cfg, "ckpt", ex.ckpt);
    cfg_default(explain_cmd, "--class", cfg, "class", ex.class_k);
    cfg_default(explain_cmd, "--format", cfg, "format", ex.format);
    cfg_default(explain_cmd, "--out", cfg, "out", ex.out);
    if (ex.ckpt.empty()) throw CLI::ValidationError("--ckpt is required");
    if (ex.out.empty()) throw CLI::ValidationError("--out is required");

    nv::AnyModel any = nv::load_checkpoint(ex.ckpt);
    nv::NeuroViewModel<float> model = require_neuroview(any, ex.ckpt);
    nv::ClassWeightReport report = nv::weight_report(model, ex.class_k);
    const nv::RenderFormat fmt = nv::parse_render_format(ex.format);
    const fs::path out_dir(ex.out);
    fs::create_directories(out_dir);
    const fs::path file =
        out_dir / nv::strprintf("weights_class%d.%s", ex.class_k, nv::extension(fmt));
    nv::render_report(report, fmt, file);
    write_manifest(out_dir, "explain",
                   json{{"ckpt", ex.ckpt}, {"class", ex.class_k}, {"format", ex.format},
                        {"out", ex.out}});
    std::printf("report written to %s\n", file.string().c_str());
  });

  // ---- concepts --------------------------------------------------------------
  auto* concepts_cmd = app.add_subcommand("concepts", "concept-class mapping from unit labels");
  struct {
    std::string ckpt, labels, format = "csv", out, config;
    int class_k = 0, top_k = 5;
  } co;
  concepts_cmd->add_option("--ckpt", co.ckpt, "checkpoint directory");
  concepts_cmd->add_option("--labels", co.labels, "unit label csv (layer,channel,concept,category)");
  concepts_cmd->add_option("--class", co.class_k, "class index");
  concepts_cmd->add_option("--top-k", co.top_k, "top-k list length");
  concepts_cmd->add_option("--format", co.format, "csv|json|svg")
      ->check(CLI::IsMember({"csv", "json", "svg"}));
  concepts_cmd->add_option("--out", co.out, "output directory");
  concepts_cmd->add_option("--config", co.config, "JSON config supplying defaults");
  concepts_cmd->callback([&] {
    const json cfg = load_config(co.config);
    cfg_default(concepts_cmd, "--ckpt", cfg, "ckpt", co.ckpt);
    cfg_default(concepts_cmd, "--labels", cfg, "labels", co.labels);
    cfg_default(concepts_cmd, "--class", cfg, "class", co.class_k);
    cfg_default(concepts_cmd, "--top-k", cfg, "top_k", co.top_k);
    cfg_default(concepts_cmd, "--format", cfg, "format", co.format);
    cfg_default(concepts_cmd, "--out", cfg, "out", co.out);
    if (co.ckpt.empty()) throw CLI::ValidationError("--ckpt is required");
    if (co.labels.empty()) throw CLI::ValidationError("--labels is required");
    if (co.out.empty()) throw CLI::ValidationError("--out is required");

    nv::AnyModel any = nv::load_checkpoint(co.ckpt);
    nv::NeuroViewModel<float> model = require_neuroview(any, co.ckpt);
    nv::ConceptLabelTable labels = nv::load_concept_labels(co.labels);
    nv::ConceptMap map = nv::concept_map(model, labels, co.class_k, co.top_k);
    const nv::RenderFormat fmt = nv::parse_render_format(co.format);
    const fs::path out_dir(co.out);
    fs::create_directories(out_dir);
    const fs::path file =
        out_dir / nv::strprintf("concepts_class%d.%s", co.class_k, nv::extension(fmt));
    nv::render_concept_map(map, fmt, file);
    write_manifest(out_dir, "concepts",
                   json{{"ckpt", co.ckpt}, {"labels", co.labels}, {"class", co.class_k},
                        {"top_k", co.top_k}, {"format", co.format}, {"out", co.out}});
    std::printf("concept map written to %s\n", file.string().c_str());
  });

  // ---- view-means --------------------------------------------------------------
  auto* views_cmd = app.add_subcommand("view-means", "per-view mean head weight");
  struct {
    std::string ckpt, format = "csv", out, config;
    int class_k = 0;
  } vm;
  views_cmd->add_option("--ckpt", vm.ckpt, "checkpoint directory");
  views_cmd->add_option("--class", vm.class_k, "class index");
  views_cmd->add_option("--format", vm.format, "csv|json|svg")
      ->check(CLI::IsMember({"csv", "json", "svg"}));
  views_cmd->add_option("--out", vm.out, "output directory");
  views_cmd->add_option("--config", vm.config, "JSON config supplying defaults");
  views_cmd->callback([&] {
    const json cfg = load_config(vm.config);
    cfg_default(views_cmd, "--ckpt", cfg, "ckpt", vm.ckpt);
    cfg_default(views_cmd, "--class", cfg, "class", vm.class_k);
    cfg_default(views_cmd, "--format", cfg, "format", vm.format);
    cfg_default(views_cmd, "--out", cfg, "out", vm.out);
    if (vm.ckpt.empty()) throw CLI::ValidationError("--ckpt is required");
    if (vm.out.empty()) throw CLI::ValidationError("--out is required");

    nv::AnyModel any = nv::load_checkpoint(vm.ckpt);
    nv::NeuroViewModel<float> model = require_neuroview(any, vm.ckpt);
    auto means = nv::view_mean(model, vm.class_k);
    const nv::RenderFormat fmt = nv::parse_render_format(vm.format);
    const fs::path out_dir(vm.out);
    fs::create_directories(out_dir);
    const fs::path file =
        out_dir / nv::strprintf("view_means_class%d.%s", vm.class_k, nv::extension(fmt));
    nv::render_view_means(means, vm.class_k, model.class_name(vm.class_k), fmt, file);
    write_manifest(out_dir, "view-means",
                   json{{"ckpt", vm.ckpt}, {"class", vm.class_k}, {"format", vm.format},
                        {"out", vm.out}});
    std::printf("view means written to %s\n", file.string().c_str());
  });

  // ---- perturb -------------------------------------------------------------
  auto* perturb_cmd = app.add_subcommand("perturb", "counterfactual channel perturbation table");
  struct {
    std::vector<std::string> ckpts;
    std::string data, format = "idx", split = "val", out, config;
    std::string channels = "none,red,green,blue";
  } pe;
  perturb_cmd->add_option("--ckpt", pe.ckpts, "checkpoint directory (repeatable)");
  perturb_cmd->add_option("--data", pe.data, "dataset root directory");
  perturb_cmd->add_option("--format", pe.format, "dataset format: idx|png-dir")
      ->check(CLI::IsMember({"idx", "png-dir"}));
  perturb_cmd->add_option("--split", pe.split, "train|val");
  perturb_cmd->add_option("--channels", pe.channels, "comma list from none,red,green,blue");
  perturb_cmd->add_option("--out", pe.out, "output directory");
  perturb_cmd->add_option("--config", pe.config, "JSON config supplying defaults");
  perturb_cmd->callback([&] {
    const json cfg = load_config(pe.config);
    cfg_default(perturb_cmd, "--ckpt", cfg, "ckpt", pe.ckpts);
    cfg_default(perturb_cmd, "--data", cfg, "data", pe.data);
    cfg_default(perturb_cmd, "--format", cfg, "format", pe.format);
    cfg_default(perturb_cmd, "--split", cfg, "split", pe.split);
    cfg_default(perturb_cmd, "--channels", cfg, "channels", pe.channels);
    cfg_default(perturb_cmd, "--out", cfg, "out", pe.out);
    if (pe.ckpts.empty()) throw CLI::ValidationError("at least one --ckpt is required");
    if (pe.data.empty()) throw CLI::ValidationError("--data is required");
    if (pe.out.empty()) throw CLI::ValidationError("--out is required");

    std::vector<nv::Channel> channels;
    std::string cur;
    for (char ch : pe.channels + ",") {
      if (ch == ',') {
        if (!cur.empty()) channels.push_back(nv::parse_channel(cur));
        cur.clear();
      } else {
        cur += ch;
      }
    }
    nv::Dataset data = nv::load_dataset(pe.data, nv::parse_format(pe.format), pe.split);
    std::vector<nv::AnyModel> models;
    models.reserve(pe.ckpts.size());
    for (const auto& c : pe.ckpts) models.push_back(nv::load_checkpoint(c));
    std::vector<std::pair<std::string, const nv::AnyModel*>> named;
    for (size_t i = 0; i < models.size(); ++i)
      named.emplace_back(nv::model_kind_name(models[i]) + "-" + nv::model_spec(models[i]).name,
                         &models[i]);
    nv::CounterfactualReport report = nv::counterfactual_table(named, data, channels);
    const fs::path out_dir(pe.out);
    fs::create_directories(out_dir);
    nv::render_counterfactual_csv(report, out_dir / "counterfactual.csv");
    write_manifest(out_dir, "perturb",
                   json{{"ckpt", pe.ckpts}, {"data", pe.data}, {"format", pe.format},
                        {"split", pe.split}, {"channels", pe.channels}, {"out", pe.out}});
    std::printf("counterfactual table written to %s\n",
                (out_dir / "counterfactual.csv").string().c_str());
  });

  // ---- dataset -------------------------------------------------------------
  auto* dataset_cmd = app.add_subcommand("dataset", "dataset generation");
  dataset_cmd->require_subcommand(1);

  auto* digits_cmd =
      dataset_cmd->add_subcommand("make-digits", "synthetic 10-class grayscale digits (idx)");
  struct {
    int train_n = 8000, val_n = 2000;
    uint64_t seed = 1;
    std::string out, config;
  } dg;
  digits_cmd->add_option("--train-n", dg.train_n, "training sample count");
  digits_cmd->add_option("--val-n", dg.val_n, "validation sample count");
  digits_cmd->add_option("--seed", dg.seed, "generator seed");
  digits_cmd->add_option("--out", dg.out, "output directory");
  digits_cmd->add_option("--config", dg.config, "JSON config supplying defaults");
  digits_cmd->callback([&] {
    const json cfg = load_config(dg.config);
    cfg_default(digits_cmd, "--train-n", cfg, "train_n", dg.train_n);
    cfg_default(digits_cmd, "--val-n", cfg, "val_n", dg.val_n);
    cfg_default(digits_cmd, "--seed", cfg, "seed", dg.seed);
    cfg_default(digits_cmd, "--out", cfg, "out", dg.out);
    if (dg.out.empty()) throw CLI::ValidationError("--out is required");
    const fs::path out_dir(dg.out);
    nv::save_idx(out_dir, nv::make_digits(dg.train_n, dg.seed, "train"));
    nv::save_idx(out_dir, nv::make_digits(dg.val_n, dg.seed, "val"));
    write_manifest(out_dir, "dataset make-digits",
                   json{{"train_n", dg.train_n}, {"val_n", dg.val_n}, {"seed", dg.seed},
                        {"out", dg.out}});
    std::printf("digit dataset written to %s\n", out_dir.string().c_str());
  });

  auto* colored_cmd = dataset_cmd->add_subcommand(
      "make-colored-mnist", "tint a grayscale idx dataset with class-correlated colors (png-dir)");
  struct {
    std::string base, out, config;
    double rho = 1.0;
    uint64_t seed = 1;
  } cm;
  colored_cmd->add_option("--base", cm.base, "grayscale idx dataset directory");
  colored_cmd->add_option("--rho", cm.rho, "class-color correlation in [0,1]");
  colored_cmd->add_option("--seed", cm.seed, "tint seed");
  colored_cmd->add_option("--out", cm.out, "output directory");
  colored_cmd->add_option("--config", cm.config, "JSON config supplying defaults");
  colored_cmd->callback([&] {
    const json cfg = load_config(cm.config);
    cfg_default(colored_cmd, "--base", cfg, "base", cm.base);
    cfg_default(colored_cmd, "--rho", cfg, "rho", cm.rho);
    cfg_default(colored_cmd, "--seed", cfg, "seed", cm.seed);
    cfg_default(colored_cmd, "--out", cfg, "out", cm.out);
    if (cm.base.empty()) throw CLI::ValidationError("--base is required");
    if (cm.out.empty()) throw CLI::ValidationError("--out is required");
    const fs::path out_dir(cm.out);
    for (const char* split : {"train", "val"}) {
      nv::Dataset base = nv::load_dataset(cm.base, nv::DataFormat::idx, split);
      nv::Dataset colored =
          nv::make_colored(base, cm.rho, nv::default_palette(base.num_classes()), cm.seed);
      nv::save_png_dir(out_dir, colored);
    }
    write_manifest(out_dir, "dataset make-colored-mnist",
                   json{{"base", cm.base}, {"rho", cm.rho}, {"seed", cm.seed},
                        {"out", cm.out}});
    std::printf("colored dataset written to %s\n", out_dir.string().c_str());
  });

  // ---- gradcheck -------------------------------------------------------------
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of every op");
  struct {
    int instances = 20;
    uint64_t seed = 1234;
    double tol = 1e-4;
    std::string out, config;
  } gc;
  grad_cmd->add_option("--instances", gc.instances, "random instances per op");
  grad_cmd->add_option("--seed", gc.seed, "rng seed");
  grad_cmd->add_option("--tol", gc.tol, "max allowed relative error");
  grad_cmd->add_option("--out", gc.out, "optional output directory");
  grad_cmd->add_option("--config", gc.config, "JSON config supplying defaults");
  grad_cmd->callback([&] {
    const json cfg = load_config(gc.config);
    cfg_default(grad_cmd, "--instances", cfg, "instances", gc.instances);
    cfg_default(grad_cmd, "--seed", cfg, "seed", gc.seed);
    cfg_default(grad_cmd, "--tol", cfg, "tol", gc.tol);
    cfg_default(grad_cmd, "--out", cfg, "out", gc.out);
    nv::gradcheck::Summary s = nv::gradcheck::run(gc.instances, gc.seed);
    for (const auto& op : s.per_op)
      std::printf("%-24s %3d instances  max rel err %.3e\n", op.op.c_str(), op.instances,
                  op.max_rel_err);
    std::printf("max relative error %.3e (tolerance %g)\n", s.max_rel_err, gc.tol);
    if (!gc.out.empty()) {
      const fs::path out_dir(gc.out);
      fs::create_directories(out_dir);
      json per_op = json::array();
      for (const auto& op : s.per_op)
        per_op.push_back({{"op", op.op}, {"instances", op.instances},
                          {"max_rel_err", op.max_rel_err}});
      std::ofstream(out_dir / "gradcheck.json")
          << json{{"max_rel_err", s.max_rel_err}, {"per_op", std::move(per_op)}}.dump(2)
          << "\n";
      write_manifest(out_dir, "gradcheck",
                     json{{"instances", gc.instances}, {"seed", gc.seed}, {"tol", gc.tol},
                          {"out", gc.out}});
    }
    if (!s.passed(gc.tol)) exit_code = 1;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const nv::DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitDiverged;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return exit_code;
}
