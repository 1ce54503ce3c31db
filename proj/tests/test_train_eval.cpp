#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "mafn/adamw.hpp"
#include "mafn/metrics.hpp"
#include "mafn/ops.hpp"
#include "mafn/rng.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace mafn;
using D = Tensor<double>;

TEST_CASE("loss: saturated, zero-logit, and random-oracle cases") {
  auto big = Tensor<float>::full({1, 2, 2}, 60.0f);
  auto ones = Tensor<float>::ones({1, 2, 2});
  CHECK(bce_with_logits_mean(big, ones).item() == doctest::Approx(0.0).epsilon(1e-9));

  auto zero = Tensor<float>::zeros({1, 3, 3});
  auto mask = Tensor<float>::zeros({1, 3, 3});
  CHECK(bce_with_logits_mean(zero, mask).item() == doctest::Approx(std::log(2.0)));

  Rng rng(3);
  std::vector<double> zv(24), yv(24);
  for (auto& v : zv) v = rng.uniform(-3, 3);
  for (auto& v : yv) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
  auto loss = bce_with_logits_mean(D::from_data({24}, zv), D::from_data({24}, yv));
  CHECK(loss.item() == doctest::Approx(oracle::bce_naive(zv, yv)).epsilon(1e-9));

  CHECK_THROWS(bce_with_logits_mean(zero, Tensor<float>::zeros({1, 2, 2})));
}

TEST_CASE("adamw: zero gradient and zero decay leave parameters unchanged") {
  ParamRegistry<double> reg;
  auto w = reg.add("w", D::from_data({2}, {1.5, -0.5}));
  AdamW<double> opt(reg, 0.1, 0.0);
  w.zero_grad();
  opt.step();
  CHECK(w.data() == std::vector<double>{1.5, -0.5});
}

TEST_CASE("adamw: single step on f(w)=w^2 matches the hand-computed update") {
  ParamRegistry<double> reg;
  auto w = reg.add("w", D::from_data({1}, {1.0}));
  const double lr = 0.1, wd = 0.0;
  AdamW<double> opt(reg, lr, wd);
  auto loss = mul(w, w);
  w.zero_grad();
  backward(loss);
  CHECK(w.grad()[0] == doctest::Approx(2.0));
  opt.step();
  // m = 0.1*2 = 0.2; v = 0.001*4 = 0.004; mhat = 2; vhat = 4
  // w <- 1 - lr * 2/(2 + 1e-8)
  const double expect = 1.0 - 0.1 * (2.0 / (2.0 + 1e-8));
  CHECK(w.data()[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("adamw: decoupled decay with zero gradient scales weights") {
  ParamRegistry<double> reg;
  auto w = reg.add("w", D::from_data({3}, {1.0, -2.0, 0.5}));
  const double lr = 0.05, wd = 0.01;
  AdamW<double> opt(reg, lr, wd);
  w.zero_grad();
  opt.step();
  for (int i = 0; i < 3; ++i)
    CHECK(w.data()[size_t(i)] ==
          doctest::Approx(std::vector<double>{1.0, -2.0, 0.5}[size_t(i)] * (1 - lr * wd)));
}

TEST_CASE("adamw: NaN gradient aborts") {
  ParamRegistry<double> reg;
  auto w = reg.add("w", D::from_data({1}, {1.0}));
  AdamW<double> opt(reg, 0.1, 0.0);
  w.grad()[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS(opt.step());
}

namespace {
// build a flat mask with `ones` leading 1s out of `n` cells
std::vector<uint8_t> flat_mask(int n, int ones) {
  std::vector<uint8_t> m(size_t(n), 0);
  for (int i = 0; i < ones; ++i) m[size_t(i)] = 1;
  return m;
}
}  // namespace

TEST_CASE("metrics: perfect and disjoint predictions") {
  std::vector<std::vector<uint8_t>> truth = {flat_mask(10, 4), flat_mask(10, 6)};
  auto perfect = compute_metrics(truth, truth);
  CHECK(perfect.oiou == 1.0);
  CHECK(perfect.miou == 1.0);
  for (double p : perfect.precision_at) CHECK(p == 1.0);

  std::vector<std::vector<uint8_t>> disjoint;
  for (const auto& t : truth) {
    std::vector<uint8_t> p(t.size());
    for (size_t i = 0; i < t.size(); ++i) p[i] = t[i] ? 0 : 1;
    disjoint.push_back(p);
  }
  auto worst = compute_metrics(disjoint, truth);
  CHECK(worst.oiou == 0.0);
  CHECK(worst.miou == 0.0);
  for (double p : worst.precision_at) CHECK(p == 0.0);
}

TEST_CASE("metrics: hand-derived two-sample row") {
  // sample 1: |gt|=16, pred covers 11 of them plus 4 extra -> IoU 11/20 = 0.55
  std::vector<uint8_t> gt1(32, 0), p1(32, 0);
  for (int i = 0; i < 16; ++i) gt1[size_t(i)] = 1;
  for (int i = 0; i < 11; ++i) p1[size_t(i)] = 1;
  for (int i = 16; i < 20; ++i) p1[size_t(i)] = 1;
  // sample 2: |gt|=20, pred covers 19 -> IoU 19/20 = 0.95
  std::vector<uint8_t> gt2(32, 0), p2(32, 0);
  for (int i = 0; i < 20; ++i) gt2[size_t(i)] = 1;
  for (int i = 0; i < 19; ++i) p2[size_t(i)] = 1;

  CHECK(binary_iou(p1, gt1) == doctest::Approx(0.55));
  CHECK(binary_iou(p2, gt2) == doctest::Approx(0.95));

  auto r = compute_metrics({p1, p2}, {gt1, gt2});
  CHECK(r.miou == doctest::Approx(0.75));
  CHECK(r.precision_at[0] == 1.0);  // P@0.5
  CHECK(r.precision_at[1] == 0.5);  // P@0.6
  CHECK(r.precision_at[2] == 0.5);  // P@0.7
  CHECK(r.precision_at[3] == 0.5);  // P@0.8
  CHECK(r.precision_at[4] == 0.5);  // P@0.9
}

TEST_CASE("metrics: empty-union convention and single-sample identity") {
  std::vector<uint8_t> empty(8, 0);
  CHECK(binary_iou(empty, empty) == 1.0);

  std::vector<uint8_t> pred = flat_mask(12, 5), truth = flat_mask(12, 7);
  auto r = compute_metrics({pred}, {truth});
  CHECK(r.oiou == doctest::Approx(r.miou));  // one sample: the two coincide
}

TEST_CASE("metrics properties: monotone P@X and permutation invariance") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = rng.uniform_int(1, 6);
    std::vector<std::vector<uint8_t>> pred, truth;
    for (int s = 0; s < n; ++s) {
      std::vector<uint8_t> p(20), t(20);
      for (int i = 0; i < 20; ++i) {
        p[size_t(i)] = rng.uniform() < 0.5;
        t[size_t(i)] = rng.uniform() < 0.5;
      }
      pred.push_back(p);
      truth.push_back(t);
    }
    auto r = compute_metrics(pred, truth);
    for (size_t k = 1; k < r.precision_at.size(); ++k)
      CHECK(r.precision_at[k] <= r.precision_at[k - 1]);

    // permutation invariance
    std::vector<int> perm(size_t(n), 0);
    for (int i = 0; i < n; ++i) perm[size_t(i)] = i;
    rng.shuffle(perm);
    std::vector<std::vector<uint8_t>> pred2, truth2;
    for (int i : perm) {
      pred2.push_back(pred[size_t(i)]);
      truth2.push_back(truth[size_t(i)]);
    }
    auto r2 = compute_metrics(pred2, truth2);
    CHECK(r2.oiou == doctest::Approx(r.oiou).epsilon(1e-12));
    CHECK(r2.miou == doctest::Approx(r.miou).epsilon(1e-12));
  }
}

TEST_CASE("metrics: length mismatch rejected") {
  CHECK_THROWS(compute_metrics({flat_mask(4, 1)}, {}));
}

TEST_CASE("csv row matches the printed table values") {
  MetricsReport r;
  r.oiou = 0.625;
  r.miou = 0.5;
  r.precision_at = {1.0, 0.75, 0.5, 0.25, 0.0};
  r.sample_count = 4;
  auto row = metrics_csv_row(3, r);
  CHECK(row == "3,0.625000,0.500000,1.000000,0.750000,0.500000,0.250000,0.000000");
  auto table = metrics_table(r);
  CHECK(table.find("0.6250") != std::string::npos);
  CHECK(table.find("P@0.9") != std::string::npos);
}
