#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "nv/checkpoint.hpp"
#include "nv/gradcheck.hpp"
#include "nv/neuroview.hpp"
#include "oracles.hpp"

using namespace nv;
namespace fs = std::filesystem;

namespace {

template <std::floating_point S>
Tensor<S> rand_tensor(Rng& rng, Shape shape, double lo = 0.0, double hi = 1.0) {
  auto t = Tensor<S>::zeros(std::move(shape));
  for (auto& v : t.data()) v = S(rng.uniform(lo, hi));
  return t;
}

template <std::floating_point S>
std::vector<Tensor<S>> random_views(Rng& rng, const ArchSpec& spec, int views, int batch) {
  std::vector<Tensor<S>> out;
  for (int v = 0; v < views; ++v)
    out.push_back(rand_tensor<S>(
        rng, {batch, spec.input_shape[0], spec.input_shape[1], spec.input_shape[2]}));
  return out;
}

void fill_random(TensorF& t, Rng& rng, double lo = -1.0, double hi = 1.0) {
  for (auto& v : t.data()) v = float(rng.uniform(lo, hi));
}

}  // namespace

TEST_SUITE_BEGIN("neuroview");

TEST_CASE("zero backbone bias and zero input gives every code 0.5") {
  ArchSpec spec{"tiny", {1, 6, 6}, {LayerSpec::conv(3), LayerSpec::conv(2)}, 2};
  auto model = make_neuroview<double>(spec, {}, 3);
  auto codes = model.extract_codes(std::vector<TensorD>{TensorD::zeros({2, 1, 6, 6})});
  CHECK(codes.width() == 5);
  for (double v : codes.values.data()) CHECK(v == doctest::Approx(0.5));
}

TEST_CASE("vgg-mini code vector width is 176, and 12-view vgg11 is 33024") {
  auto mini = make_preset("vgg-mini", {1, 28, 28}, 10);
  auto model = make_neuroview<float>(mini, {}, 1);
  auto codes =
      model.extract_codes(std::vector<TensorF>{TensorF::zeros({1, 1, 28, 28})});
  CHECK(codes.width() == 176);

  auto big = make_preset("vgg11", {3, 224, 224}, 10);
  NeuroViewConfig cfg;
  cfg.views = 12;
  auto mv = make_neuroview<float>(big, cfg, 1);
  CHECK(mv.unit_total() == 33024);
  CHECK(mv.head_weight.shape() == Shape{10, 33024});
}

TEST_CASE("sigmoid codes stay in (0,1) for random inputs") {
  ArchSpec spec{"tiny", {2, 8, 8},
                {LayerSpec::conv(4), LayerSpec::maxpool(), LayerSpec::conv(3)}, 3};
  Rng rng(11);
  for (auto reduce : {Reduce::max, Reduce::mean}) {
    NeuroViewConfig cfg;
    cfg.reduce = reduce;
    auto model = make_neuroview<float>(spec, cfg, 5);
    auto inputs = random_views<float>(rng, spec, 1, 3);
    auto codes = model.extract_codes(inputs);
    for (float v : codes.values.data()) {
      CHECK(v > 0.0f);
      CHECK(v < 1.0f);
    }
  }
}

TEST_CASE("head_forward identities") {
  ArchSpec spec{"tiny", {1, 4, 4}, {LayerSpec::conv(3, 3, 1, 1)}, 3};
  auto model = make_neuroview<float>(spec, {}, 9);

  SUBCASE("identity-like weight passes codes through") {
    auto wd = model.head_weight.data();
    for (int r = 0; r < 3; ++r) wd[size_t(r) * 3 + r] = 1.0f;
    CodeVector<float> codes{TensorF::from({2, 3}, {0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f})};
    auto logits = model.head_forward(codes);
    for (int64_t i = 0; i < logits.size(); ++i)
      CHECK(logits.data()[size_t(i)] == codes.values.data()[size_t(i)]);
  }

  SUBCASE("bias-only model is input independent") {
    auto bd = model.head_bias.data();
    bd[0] = 1.0f; bd[1] = -2.0f; bd[2] = 0.5f;
    Rng rng(4);
    auto a = model.forward(random_views<float>(rng, spec, 1, 2)[0]);
    auto b = model.forward(random_views<float>(rng, spec, 1, 2)[0]);
    for (int64_t i = 0; i < a.size(); ++i) {
      CHECK(a.data()[size_t(i)] == b.data()[size_t(i)]);
      CHECK(a.data()[size_t(i)] == bd[size_t(i) % 3]);
    }
  }

  SUBCASE("softmax of logits sums to one per row") {
    Rng rng(8);
    fill_random(model.head_weight, rng);
    fill_random(model.head_bias, rng);
    auto logits = model.forward(random_views<float>(rng, spec, 1, 4)[0]);
    auto probs = softmax_rows(logits);
    for (int bi = 0; bi < 4; ++bi) {
      double row = 0.0;
      for (int j = 0; j < 3; ++j) row += double(probs[size_t(bi) * 3 + j]);
      CHECK(row == doctest::Approx(1.0).epsilon(1e-6));
    }
  }

  SUBCASE("width mismatch is rejected") {
    CodeVector<float> bad{TensorF::zeros({1, 5})};
    CHECK_THROWS_AS(model.head_forward(bad), std::invalid_argument);
  }
}

TEST_CASE("forward equals the naive tap-reduce-concat-affine oracle") {
  auto spec = make_preset("vgg-mini", {1, 14, 14}, 6);
  Rng rng(123);
  for (auto reduce : {Reduce::max, Reduce::mean}) {
    for (int views : {1, 2}) {
      NeuroViewConfig cfg;
      cfg.reduce = reduce;
      cfg.views = views;
      auto model = make_neuroview<double>(spec, cfg, 77);
      auto wd = model.head_weight.data();
      for (auto& v : wd) v = rng.uniform(-0.5, 0.5);
      auto bd = model.head_bias.data();
      for (auto& v : bd) v = rng.uniform(-0.5, 0.5);
      for (int trial = 0; trial < 3; ++trial) {
        auto inputs = random_views<double>(rng, spec, views, 2);
        auto got = model.forward(std::span<const TensorD>(inputs));
        auto want = oracle::neuroview_forward(model, inputs);
        REQUIRE(size_t(got.size()) == want.size());
        for (size_t i = 0; i < want.size(); ++i)
          CHECK(got.data()[i] == doctest::Approx(want[i]).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("identity vq uses the raw nonlinear output") {
  ArchSpec spec{"tiny", {1, 5, 5}, {LayerSpec::conv(2, 3, 1, 1)}, 2};
  NeuroViewConfig cfg;
  cfg.vq = NeuroViewConfig::Vq::identity;
  cfg.reduce = Reduce::max;
  auto model = make_neuroview<double>(spec, cfg, 31);
  Rng rng(6);
  auto inputs = random_views<double>(rng, spec, 1, 2);
  auto codes = model.extract_codes(inputs);
  auto taps = model.backbones[0].forward(inputs[0]);
  auto pre = taps.pre_acts[0];
  const int hw = 25;
  for (int bi = 0; bi < 2; ++bi)
    for (int c = 0; c < 2; ++c) {
      double best = 0.0;
      for (int j = 0; j < hw; ++j)
        best = std::max(best, std::max(0.0, pre.data()[(size_t(bi) * 2 + c) * hw + j]));
      CHECK(codes.values.data()[size_t(bi) * 2 + c] == doctest::Approx(best));
    }
}

TEST_CASE("temperature rescales the code pre-activation") {
  ArchSpec spec{"tiny", {1, 4, 4}, {LayerSpec::conv(2, 3, 1, 1)}, 2};
  NeuroViewConfig hot;
  hot.temperature = 4.0;
  auto a = make_neuroview<double>(spec, {}, 3);
  auto b = make_neuroview<double>(spec, hot, 3);
  Rng rng(9);
  auto inputs = random_views<double>(rng, spec, 1, 1);
  auto ca = a.extract_codes(inputs).values;
  auto cb = b.extract_codes(inputs).values;
  // hotter temperature pulls codes toward 0.5
  for (int64_t i = 0; i < ca.size(); ++i)
    CHECK(std::abs(cb.data()[size_t(i)] - 0.5) <=
          std::abs(ca.data()[size_t(i)] - 0.5) + 1e-12);
}

TEST_CASE("batch structure: identical rows and permutation equivariance") {
  auto spec = make_preset("vgg-mini", {1, 14, 14}, 5);
  auto model = make_neuroview<float>(spec, {}, 13);
  Rng rng(21);
  fill_random(model.head_weight, rng, -0.3, 0.3);
  auto one = rand_tensor<float>(rng, {1, 1, 14, 14});
  TensorF three = TensorF::zeros({3, 1, 14, 14});
  {
    auto od = one.data();
    auto td = three.data();
    for (int r = 0; r < 3; ++r)
      std::copy(od.begin(), od.end(), td.begin() + r * od.size());
  }
  auto row = model.forward(one);
  auto rows = model.forward(three);
  for (int r = 0; r < 3; ++r)
    for (int j = 0; j < 5; ++j)
      CHECK(rows.data()[size_t(r) * 5 + j] == row.data()[size_t(j)]);

  // permuting the batch permutes the logits identically
  auto batch = rand_tensor<float>(rng, {4, 1, 14, 14});
  TensorF permuted = TensorF::zeros({4, 1, 14, 14});
  const int perm[4] = {2, 0, 3, 1};
  const size_t img = 14 * 14;
  for (int r = 0; r < 4; ++r)
    std::copy(batch.data().begin() + perm[r] * long(img),
              batch.data().begin() + (perm[r] + 1) * long(img),
              permuted.data().begin() + r * long(img));
  auto base = model.forward(batch);
  auto perm_logits = model.forward(permuted);
  for (int r = 0; r < 4; ++r)
    for (int j = 0; j < 5; ++j)
      CHECK(perm_logits.data()[size_t(r) * 5 + j] ==
            base.data()[size_t(perm[r]) * 5 + j]);
}

TEST_CASE("gradient reaches the first conv kernel through the codes") {
  auto spec = make_preset("vgg-mini", {1, 14, 14}, 4);
  auto model = make_neuroview<float>(spec, {}, 2);
  Rng rng(3);
  fill_random(model.head_weight, rng, -0.2, 0.2);
  auto batch = rand_tensor<float>(rng, {2, 1, 14, 14});
  Tape<float> tape;
  auto logits = model.forward(batch);
  auto loss = softmax_cross_entropy(logits, {1, 3});
  tape.backward(loss);
  double norm = 0.0;
  for (float g : model.backbones[0].convs[0].kernel.grad()) norm += double(g) * g;
  CHECK(norm > 0.0);
}

TEST_CASE("1x1 spatial maps make max and mean coincide") {
  ArchSpec spec{"tiny", {1, 3, 3}, {LayerSpec::conv(4, 3, 1, 0)}, 2};  // 1x1 output
  NeuroViewConfig mx, mn;
  mx.reduce = Reduce::max;
  mn.reduce = Reduce::mean;
  auto a = make_neuroview<double>(spec, mx, 8);
  auto b = make_neuroview<double>(spec, mn, 8);
  Rng rng(2);
  auto inputs = random_views<double>(rng, spec, 1, 3);
  auto ca = a.extract_codes(inputs).values;
  auto cb = b.extract_codes(inputs).values;
  for (int64_t i = 0; i < ca.size(); ++i)
    CHECK(ca.data()[size_t(i)] == cb.data()[size_t(i)]);
}

TEST_CASE("weight_row is an ordered partition that reassembles the head row") {
  auto spec = make_preset("vgg-mini", {1, 14, 14}, 5);
  NeuroViewConfig cfg;
  cfg.views = 3;
  auto model = make_neuroview<float>(spec, cfg, 17);
  Rng rng(55);
  fill_random(model.head_weight, rng);
  CHECK_THROWS_AS(model.weight_row(5), std::out_of_range);
  CHECK_THROWS_AS(model.weight_row(-1), std::out_of_range);
  const auto layout = unit_layout(spec);
  for (int k = 0; k < 5; ++k) {
    auto row = model.weight_row(k);
    REQUIRE(int(row.size()) == model.unit_total());
    auto wd = model.head_weight.data();
    size_t u = size_t(k) * model.unit_total();
    size_t i = 0;
    for (int v = 0; v < 3; ++v)
      for (const auto& lu : layout)
        for (int c = 0; c < lu.channels; ++c, ++i, ++u) {
          CHECK(row[i].view == v);
          CHECK(row[i].layer == lu.conv_index);
          CHECK(row[i].channel == c);
          CHECK(row[i].weight == wd[u]);
        }
  }
}

TEST_CASE("extract_codes rejects a view count mismatch") {
  ArchSpec spec{"tiny", {1, 4, 4}, {LayerSpec::conv(2, 3, 1, 1)}, 2};
  NeuroViewConfig cfg;
  cfg.views = 2;
  auto model = make_neuroview<float>(spec, cfg, 1);
  std::vector<TensorF> one{TensorF::zeros({1, 1, 4, 4})};
  CHECK_THROWS_AS(model.extract_codes(one), std::invalid_argument);
}

TEST_CASE("per-view backbones differ when weight sharing is off") {
  ArchSpec spec{"tiny", {1, 4, 4}, {LayerSpec::conv(2, 3, 1, 1)}, 2};
  NeuroViewConfig cfg;
  cfg.views = 3;
  cfg.shared_view_weights = false;
  auto model = make_neuroview<float>(spec, cfg, 4);
  REQUIRE(model.backbones.size() == 3);
  auto a = model.backbones[0].convs[0].kernel.data();
  auto b = model.backbones[1].convs[0].kernel.data();
  bool differ = false;
  for (size_t i = 0; i < a.size(); ++i) differ = differ || a[i] != b[i];
  CHECK(differ);
}

TEST_CASE("checkpoint round-trip preserves every byte and report") {
  auto spec = make_preset("vgg-mini", {1, 14, 14}, 4);
  NeuroViewConfig cfg;
  cfg.reduce = Reduce::max;
  cfg.views = 2;
  auto model = make_neuroview<float>(spec, cfg, 5);
  Rng rng(66);
  fill_random(model.head_weight, rng);
  fill_random(model.head_bias, rng);
  model.class_names = {"a", "b", "c", "d"};

  const fs::path dir = fs::temp_directory_path() / "nv_test_ckpt";
  fs::remove_all(dir);
  save_checkpoint(dir, model);
  auto loaded_any = load_checkpoint(dir);
  auto& loaded = std::get<NeuroViewModel<float>>(loaded_any);
  CHECK(loaded.spec == model.spec);
  CHECK(loaded.config.views == 2);
  CHECK(loaded.config.reduce == Reduce::max);
  CHECK(loaded.class_names == model.class_names);
  auto pa = model.params();
  auto pb = loaded.params();
  REQUIRE(pa.size() == pb.size());
  for (size_t t = 0; t < pa.size(); ++t) {
    auto da = pa[t].data();
    auto db = pb[t].data();
    REQUIRE(da.size() == db.size());
    for (size_t i = 0; i < da.size(); ++i) CHECK(da[i] == db[i]);
  }
  // saving the reloaded model reproduces identical blobs
  const fs::path dir2 = fs::temp_directory_path() / "nv_test_ckpt2";
  fs::remove_all(dir2);
  save_checkpoint(dir2, loaded);
  for (const auto& e : fs::directory_iterator(dir)) {
    std::ifstream a(e.path(), std::ios::binary), b(dir2 / e.path().filename(),
                                                   std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), {});
    std::string sb((std::istreambuf_iterator<char>(b)), {});
    CHECK(sa == sb);
  }
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_SUITE_END();
