// Optimization loop, metrics, and the conventional baseline model used in
// parity experiments. Training is single-threaded and fully seed-determined:
// init, shuffling, and batch order all flow from TrainConfig::seed.
#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nv/arch.hpp"
#include "nv/dataset.hpp"
#include "nv/neuroview.hpp"

namespace nv {

// Backbone plus a conventional linear classifier on the last layer's
// mean-pooled features.
template <std::floating_point S>
struct BaselineModel {
  ArchSpec spec;
  Backbone<S> backbone;
  Tensor<S> head_weight;  // [num_classes, C_last]
  Tensor<S> head_bias;    // [num_classes]
  uint64_t seed = 0;
  std::vector<std::string> class_names;

  Tensor<S> forward(const Tensor<S>& x) const {
    auto taps = backbone.forward(x);
    Tensor<S> pooled = reduce_spatial(taps.final_post, Reduce::mean);
    return linear(pooled, head_weight, head_bias);
  }

  std::vector<Tensor<S>> params() const {
    auto out = backbone.params();
    out.push_back(head_weight);
    out.push_back(head_bias);
    return out;
  }

  std::string class_name(int k) const {
    if (k >= 0 && k < int(class_names.size())) return class_names[size_t(k)];
    return std::to_string(k);
  }
};

template <std::floating_point S>
BaselineModel<S> make_baseline(const ArchSpec& spec, uint64_t seed) {
  validate(spec);
  BaselineModel<S> m;
  m.spec = spec;
  m.seed = seed;
  m.backbone = build_backbone<S>(spec, substream(seed, 0));
  m.head_weight = Tensor<S>::param({spec.num_classes, output_shape(spec)[0]});
  m.head_bias = Tensor<S>::param({spec.num_classes});
  return m;
}

struct TrainConfig {
  int epochs = 5;
  int batch_size = 32;
  float learning_rate = 0.1f;
  float momentum = 0.9f;
  float weight_decay = 5e-4f;
  uint64_t seed = 1;
  // step decay: multiply by lr_decay_factor once past each fraction of the
  // epoch budget
  std::vector<double> lr_decay_at{0.5, 0.75};
  float lr_decay_factor = 0.1f;

  float lr_for_epoch(int epoch_1based) const {
    float lr = learning_rate;
    for (double frac : lr_decay_at)
      if (double(epoch_1based) > frac * epochs) lr *= lr_decay_factor;
    return lr;
  }
};

inline void validate(const TrainConfig& cfg) {
  if (cfg.epochs < 1 || cfg.batch_size < 1)
    throw std::invalid_argument("TrainConfig: epochs and batch_size must be >= 1");
  if (!(cfg.learning_rate >= 0) || !(cfg.momentum >= 0) || !(cfg.weight_decay >= 0))
    throw std::invalid_argument("TrainConfig: negative hyperparameter");
  if (!(cfg.lr_decay_factor > 0))
    throw std::invalid_argument("TrainConfig: lr_decay_factor must be > 0");
}

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Sgd {
 public:
  Sgd(std::vector<TensorF> params, float lr, float momentum, float weight_decay)
      : params_(std::move(params)), lr_(lr), momentum_(momentum), wd_(weight_decay) {
    for (auto& p : params_) velocity_.emplace_back(size_t(p.size()), 0.0f);
  }

  void set_lr(float lr) { lr_ = lr; }
  float lr() const { return lr_; }

  // v <- mu*v + (g + wd*w); w <- w - lr*v
  void step() {
    for (size_t t = 0; t < params_.size(); ++t) {
      if (!params_[t].has_grad()) continue;
      auto w = params_[t].data();
      auto g = params_[t].grad();
      auto& v = velocity_[t];
      for (size_t i = 0; i < v.size(); ++i) {
        v[i] = momentum_ * v[i] + g[i] + wd_ * w[i];
        w[i] -= lr_ * v[i];
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

 private:
  std::vector<TensorF> params_;
  std::vector<std::vector<float>> velocity_;
  float lr_, momentum_, wd_;
};

struct EpochMetrics {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_acc = 0.0;
  double lr = 0.0;
};

void append_metrics_jsonl(const std::filesystem::path& path, const EpochMetrics& m);

struct EvalResult {
  double accuracy = 0.0;             // fraction in [0,1]
  std::vector<double> per_class;     // fraction per true class
  std::vector<int64_t> class_counts;
  std::vector<std::vector<int64_t>> confusion;  // [true][pred]
};

namespace detail {

// NeuroView models take one input per view; in single-image training every
// view sees the same batch.
template <std::floating_point S>
Tensor<S> model_logits(const NeuroViewModel<S>& m, const Tensor<S>& batch) {
  return m.forward(batch);
}

template <std::floating_point S>
Tensor<S> model_logits(const BaselineModel<S>& m, const Tensor<S>& batch) {
  return m.forward(batch);
}

}  // namespace detail

template <class Model>
EvalResult evaluate(const Model& model, const Dataset& data, int batch_size = 64) {
  const int k = model.spec.num_classes;
  if (data.num_classes() != k)
    throw std::invalid_argument(strprintf("evaluate: dataset has %d classes, model %d",
                                          data.num_classes(), k));
  EvalResult r;
  r.per_class.assign(size_t(k), 0.0);
  r.class_counts.assign(size_t(k), 0);
  r.confusion.assign(size_t(k), std::vector<int64_t>(size_t(k), 0));
  int64_t correct = 0;
  for (int start = 0; start < data.size(); start += batch_size) {
    const int stop = std::min(data.size(), start + batch_size);
    std::vector<int> idx(size_t(stop - start));
    for (int i = start; i < stop; ++i) idx[size_t(i - start)] = i;
    TensorF batch = data.batch(idx);
    auto pred = argmax_rows(detail::model_logits(model, batch));
    for (int i = start; i < stop; ++i) {
      const int truth = data.labels[size_t(i)];
      const int p = pred[size_t(i - start)];
      r.confusion[size_t(truth)][size_t(p)]++;
      r.class_counts[size_t(truth)]++;
      if (p == truth) ++correct;
    }
  }
  for (int c = 0; c < k; ++c)
    r.per_class[size_t(c)] = r.class_counts[size_t(c)]
                                 ? double(r.confusion[size_t(c)][size_t(c)]) /
                                       double(r.class_counts[size_t(c)])
                                 : 0.0;
  r.accuracy = double(correct) / double(data.size());
  return r;
}

// Joint SGD over every parameter the model exposes (backbone and head
// together). Returns per-epoch metrics; optionally appends them to a
// JSON-lines file as it goes. Throws DivergenceError on a non-finite loss.
template <class Model>
std::vector<EpochMetrics> fit(Model& model, const Dataset& train_set,
                              const Dataset& val_set, const TrainConfig& cfg,
                              const std::filesystem::path* metrics_path = nullptr,
                              bool verbose = false) {
  validate(cfg);
  if (train_set.num_classes() != model.spec.num_classes)
    throw std::invalid_argument(strprintf("fit: dataset has %d classes, model %d",
                                          train_set.num_classes(), model.spec.num_classes));
  model.class_names = train_set.class_names;
  Sgd opt(model.params(), cfg.learning_rate, cfg.momentum, cfg.weight_decay);
  std::vector<EpochMetrics> metrics;
  std::vector<int> order(size_t(train_set.size()));
  for (int i = 0; i < train_set.size(); ++i) order[size_t(i)] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    opt.set_lr(cfg.lr_for_epoch(epoch));
    Rng shuffle_rng(substream(cfg.seed, 0x5f00 + uint64_t(epoch)));
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (int start = 0; start < train_set.size(); start += cfg.batch_size) {
      const int stop = std::min(train_set.size(), start + cfg.batch_size);
      std::span<const int> idx(order.data() + start, size_t(stop - start));
      TensorF batch = train_set.batch(idx);
      std::vector<int> labels(idx.size());
      for (size_t i = 0; i < idx.size(); ++i) labels[i] = train_set.labels[size_t(idx[i])];
      Tape<float> tape;
      TensorF logits = detail::model_logits(model, batch);
      TensorF loss = softmax_cross_entropy(logits, labels);
      const float lv = loss.item();
      if (!std::isfinite(lv))
        throw DivergenceError(strprintf(
            "training diverged: non-finite loss at epoch %d, sample offset %d", epoch,
            start));
      loss_sum += double(lv) * double(idx.size());
      tape.backward(loss);
      opt.step();
      opt.zero_grad();
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / double(train_set.size());
    m.val_acc = evaluate(model, val_set).accuracy;
    m.lr = double(opt.lr());
    if (metrics_path) append_metrics_jsonl(*metrics_path, m);
    if (verbose)
      std::printf("epoch %d  train_loss %.4f  val_acc %.4f  lr %g\n", m.epoch,
                  m.train_loss, m.val_acc, m.lr);
    metrics.push_back(m);
  }
  return metrics;
}

}  // namespace nv
