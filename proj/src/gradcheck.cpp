#include "nv/gradcheck.hpp"

namespace nv::gradcheck {

namespace {

OpReport check_op(const std::string& name, int instances, uint64_t seed,
                  const std::function<double(Rng&)>& one_instance) {
  OpReport rep{name, instances, 0.0};
  for (int i = 0; i < instances; ++i) {
    Rng rng(substream(seed, uint64_t(i) * 977));
    rep.max_rel_err = std::max(rep.max_rel_err, one_instance(rng));
  }
  return rep;
}

}  // namespace

Summary run(int instances_per_op, uint64_t seed, double h) {
  Summary summary;
  auto add_report = [&](OpReport rep) {
    summary.max_rel_err = std::max(summary.max_rel_err, rep.max_rel_err);
    summary.per_op.push_back(std::move(rep));
  };

  add_report(check_op("conv2d", instances_per_op, substream(seed, 1), [&](Rng& rng) {
    const int b = 1 + int(rng.randint(2));
    const int cin = 1 + int(rng.randint(3));
    const int cout = 1 + int(rng.randint(3));
    const int hgt = 3 + int(rng.randint(4));
    const int wid = 3 + int(rng.randint(4));
    const int pad = int(rng.randint(2));
    const int kmax = std::min(hgt, wid) + 2 * pad;
    const int kk = 1 + int(rng.randint(uint64_t(std::min(3, kmax))));
    const int stride = 1 + int(rng.randint(2));
    auto x = random_tensor(rng, {b, cin, hgt, wid});
    auto w = random_tensor(rng, {cout, cin, kk, kk});
    auto bias = random_tensor(rng, {cout});
    // The projection rng is re-seeded per call so every forward evaluation
    // sees the same scalarization weights.
    Rng proj_rng(substream(seed, 0xc0));
    auto fixed = [&, s = proj_rng]() mutable {
      Rng r = s;
      return project(conv2d(x, w, bias, stride, pad), r);
    };
    return check_fn(fixed, {x, w, bias}, h);
  }));

  add_report(check_op("linear", instances_per_op, substream(seed, 2), [&](Rng& rng) {
    const int b = 1 + int(rng.randint(3));
    const int n = 2 + int(rng.randint(5));
    const int m = 2 + int(rng.randint(4));
    auto x = random_tensor(rng, {b, n});
    auto w = random_tensor(rng, {m, n});
    auto bias = random_tensor(rng, {m});
    Rng proj_rng(substream(seed, 0xc1));
    auto fixed = [&, s = proj_rng]() mutable {
      Rng r = s;
      return project(linear(x, w, bias), r);
    };
    return check_fn(fixed, {x, w, bias}, h);
  }));

  add_report(check_op("relu", instances_per_op, substream(seed, 3), [&](Rng& rng) {
    auto x = off_kink_tensor(rng, {2 + int(rng.randint(3)), 3 + int(rng.randint(4))});
    Rng proj_rng(substream(seed, 0xc2));
    auto fixed = [&, s = proj_rng]() mutable {
      Rng r = s;
      return project(relu(x), r);
    };
    return check_fn(fixed, {x}, h);
  }));

  add_report(check_op("sigmoid", instances_per_op, substream(seed, 4), [&](Rng& rng) {
    auto x = random_tensor(rng, {2 + int(rng.randint(3)), 2 + int(rng.randint(4))}, -4.0, 4.0);
    Rng proj_rng(substream(seed, 0xc3));
    auto fixed = [&, s = proj_rng]() mutable {
      Rng r = s;
      return project(sigmoid(x), r);
    };
    return check_fn(fixed, {x}, h);
  }));

  add_report(check_op("maxpool2d", instances_per_op, substream(seed, 5), [&](Rng& rng) {
    const int b = 1 + int(rng.randint(2));
    const int c = 1 + int(rng.randint(2));
    const int hw = 4 + int(rng.randint(3));
    const int k = 2 + int(rng.randint(2));
    const int stride = 1 + int(rng.randint(2));
    auto x = spread_tensor(rng, {b, c, hw, hw});
    Rng proj_rng(substream(seed, 0xc4));
    auto fixed = [&, s = proj_rng]() mutable {
      Rng r = s;
      return project(maxpool2d(x, k, stride), r);
    };
    return check_fn(fixed, {x}, h);
  }));

  add_report(check_op("reduce_spatial.max", instances_per_op, substream(seed, 6), [&](Rng& rng) {
    auto x = spread_tensor(rng, {1 + int(rng.randint(2)), 1 + int(rng.randint(3)),
                                 2 + int(rng.randint(3)), 2 + int(rng.randint(3))});
    Rng proj_rng(substream(seed, 0xc5));
    auto fixed = [&, s = proj_rng]() mutable {
      Rng r = s;
      return project(reduce_spatial(x, Reduce::max), r);
    };
    return check_fn(fixed, {x}, h);
  }));

  add_report(check_op("reduce_spatial.mean", instances_per_op, substream(seed, 7), [&](Rng& rng) {
    auto x = random_tensor(rng, {1 + int(rng.randint(2)), 1 + int(rng.randint(3)),
                                 2 + int(rng.randint(3)), 2 + int(rng.randint(3))});
    Rng proj_rng(substream(seed, 0xc6));
    auto fixed = [&, s = proj_rng]() mutable {
      Rng r = s;
      return project(reduce_spatial(x, Reduce::mean), r);
    };
    return check_fn(fixed, {x}, h);
  }));

  add_report(check_op("concat", instances_per_op, substream(seed, 8), [&](Rng& rng) {
    const int b = 1 + int(rng.randint(3));
    auto a = random_tensor(rng, {b, 1 + int(rng.randint(4))});
    auto c = random_tensor(rng, {b, 1 + int(rng.randint(4))});
    auto d = random_tensor(rng, {b, 1 + int(rng.randint(4))});
    Rng proj_rng(substream(seed, 0xc7));
    auto fixed = [&, s = proj_rng]() mutable {
      Rng r = s;
      return project(concat<double>({a, c, d}), r);
    };
    return check_fn(fixed, {a, c, d}, h);
  }));

  add_report(check_op("softmax_cross_entropy", instances_per_op, substream(seed, 9), [&](Rng& rng) {
    const int b = 2 + int(rng.randint(3));
    const int k = 3 + int(rng.randint(4));
    auto logits = random_tensor(rng, {b, k}, -2.0, 2.0);
    std::vector<int> labels(static_cast<size_t>(b));
    for (auto& l : labels) l = int(rng.randint(uint64_t(k)));
    auto fixed = [&]() { return softmax_cross_entropy(logits, labels); };
    return check_fn(fixed, {logits}, h);
  }));

  add_report(check_op("add_mul_scale_sum", instances_per_op, substream(seed, 10), [&](Rng& rng) {
    const int n = 3 + int(rng.randint(5));
    auto a = random_tensor(rng, {n});
    auto b = random_tensor(rng, {n});
    const double c = rng.uniform(-2.0, 2.0);
    auto fixed = [&]() { return sum(scale(mul(add(a, b), b), c)); };
    return check_fn(fixed, {a, b}, h);
  }));

  return summary;
}

}  // namespace nv::gradcheck
