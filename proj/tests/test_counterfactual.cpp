#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "nv/counterfactual.hpp"
#include "nv/train.hpp"

using namespace nv;
namespace fs = std::filesystem;

namespace {

Dataset tiny_rgb(int n, uint64_t seed) {
  Dataset d;
  d.split = "val";
  d.channels = 3;
  d.height = 4;
  d.width = 4;
  d.class_names = {"a", "b"};
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    d.labels.push_back(i % 2);
    for (int j = 0; j < 48; ++j) d.images.push_back(float(rng.uniform()));
  }
  return d;
}

ArchSpec rgb_arch() {
  return ArchSpec{"rgb", {3, 4, 4}, {LayerSpec::conv(4, 3, 1, 1)}, 2};
}

}  // namespace

TEST_SUITE_BEGIN("counterfactual");

TEST_CASE("perturb zeroes exactly the requested channel") {
  Dataset d = tiny_rgb(6, 1);
  Dataset r = perturb(d, {Channel::red});
  const size_t plane = 16;
  CHECK(r.labels == d.labels);
  CHECK(r.size() == d.size());
  for (int i = 0; i < d.size(); ++i) {
    auto orig = d.image(i);
    auto got = r.image(i);
    for (size_t p = 0; p < plane; ++p) {
      CHECK(got[p] == 0.0f);                      // red gone
      CHECK(got[plane + p] == orig[plane + p]);   // green untouched, bit-exact
      CHECK(got[2 * plane + p] == orig[2 * plane + p]);
    }
  }
}

TEST_CASE("perturb is idempotent and none is the identity") {
  Dataset d = tiny_rgb(5, 2);
  Dataset once = perturb(d, {Channel::green});
  Dataset twice = perturb(once, {Channel::green});
  CHECK(once.images == twice.images);
  Dataset same = perturb(d, {Channel::none});
  CHECK(same.images == d.images);
  CHECK(same.labels == d.labels);
}

TEST_CASE("color perturbation of grayscale data is rejected") {
  Dataset gray = make_digits(4, 1, "val");
  CHECK_THROWS_AS(perturb(gray, {Channel::blue}), std::invalid_argument);
  CHECK_NOTHROW(perturb(gray, {Channel::none}));
}

TEST_CASE("none column reproduces plain evaluation exactly") {
  Dataset d = tiny_rgb(40, 3);
  AnyModel model = make_neuroview<float>(rgb_arch(), {}, 5);
  {
    auto& m = std::get<NeuroViewModel<float>>(model);
    Rng rng(9);
    for (auto& v : m.head_weight.data()) v = float(rng.uniform(-1.0, 1.0));
  }
  auto report = counterfactual_table({{"m", &model}}, d);
  REQUIRE(report.channels[0] == Channel::none);
  auto eval = std::visit([&](const auto& m) { return evaluate(m, d); }, model);
  for (int k = 0; k < 2; ++k)
    CHECK(report.values[0][size_t(k)][0] == 100.0 * eval.per_class[size_t(k)]);
}

TEST_CASE("zeroing an already-zero channel changes nothing") {
  Dataset d = tiny_rgb(30, 4);
  const size_t plane = 16;
  for (int i = 0; i < d.size(); ++i) {
    auto img = d.image(i);
    for (size_t p = 0; p < plane; ++p) img[2 * plane + p] = 0.0f;  // blue == 0
  }
  AnyModel model = make_baseline<float>(rgb_arch(), 6);
  {
    auto& m = std::get<BaselineModel<float>>(model);
    Rng rng(10);
    for (auto& v : m.head_weight.data()) v = float(rng.uniform(-1.0, 1.0));
  }
  auto report = counterfactual_table({{"m", &model}}, d, {Channel::none, Channel::blue});
  for (int k = 0; k < 2; ++k)
    CHECK(report.values[0][size_t(k)][0] == report.values[0][size_t(k)][1]);
}

TEST_CASE("csv mirrors the pinned column schema") {
  Dataset d = tiny_rgb(10, 5);
  AnyModel model = make_baseline<float>(rgb_arch(), 6);
  auto report = counterfactual_table({{"baseline-rgb", &model}}, d);
  const fs::path dir = fs::temp_directory_path() / "nv_cf";
  fs::remove_all(dir);
  fs::create_directories(dir);
  render_counterfactual_csv(report, dir / "cf.csv");
  std::ifstream in(dir / "cf.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "network,class,none,red,green,blue");
  int rows = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);  // one per class
  fs::remove_all(dir);
}

TEST_CASE("a color-reliant model degrades when the dominant channel is removed") {
  // rho=1 colored digits: color alone identifies the class
  Dataset base_train = make_digits(1200, 21, "train");
  Dataset base_val = make_digits(300, 21, "val");
  auto palette = default_palette(10);
  Dataset train_rho1 = make_colored(base_train, 1.0, palette, 3);
  Dataset val_rho1 = make_colored(base_val, 1.0, palette, 4);
  Dataset val_rho0 = make_colored(base_val, 0.0, palette, 5);

  ArchSpec spec{"small", {3, 28, 28},
                {LayerSpec::conv(8), LayerSpec::maxpool(), LayerSpec::conv(16),
                 LayerSpec::maxpool()},
                10};
  auto model = make_neuroview<float>(spec, {}, 13);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.learning_rate = 0.2f;
  cfg.seed = 13;
  auto metrics = fit(model, train_rho1, val_rho1, cfg);
  REQUIRE(metrics.back().val_acc > 0.5);  // the probe needs a color-fitted model

  const double acc_rho1 = evaluate(model, val_rho1).accuracy;
  const double acc_rho0 = evaluate(model, val_rho0).accuracy;
  // decorrelated colors must hurt, strictly
  CHECK(acc_rho1 > acc_rho0);

  // dominant palette channel (largest total mass) zeroed must hurt, strictly
  int dominant = 0;
  double best = -1.0;
  for (int c = 0; c < 3; ++c) {
    double mass = 0.0;
    for (const auto& col : palette) mass += double(col[size_t(c)]);
    if (mass > best) {
      best = mass;
      dominant = c;
    }
  }
  CHECK(dominant == 0);  // the pinned palette is red-heavy
  const double acc_zeroed =
      evaluate(model, perturb(val_rho1, {Channel(dominant)})).accuracy;
  CHECK(acc_rho1 > acc_zeroed);
}

TEST_SUITE_END();
