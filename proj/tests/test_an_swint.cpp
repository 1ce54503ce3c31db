#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mafn/an_swint.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace mafn;
using test_util::max_abs_diff;
using test_util::random_tensor;
using D = Tensor<double>;

namespace {

// literal transcription of the noisy-attention equations in plain loops:
// Q = F Wq; K = [(dk+F) Wk, diag(DA(F)) F Wk]; V = [(dv+F) Wv, F Wv];
// out = Att(Q,K,V) + F with DA a two-layer MLP + softmax over tokens
std::vector<double> naive_noisy_attention(const SwintStage<double>& st,
                                          const std::vector<double>& f, int t, int c) {
  auto matmul_raw = [](const std::vector<double>& a, int n, int k,
                       const std::vector<double>& b, int m) {
    std::vector<double> out(size_t(n) * m, 0.0);
    for (int i = 0; i < n; ++i)
      for (int p = 0; p < k; ++p)
        for (int j = 0; j < m; ++j)
          out[size_t(i) * m + j] += a[size_t(i) * k + p] * b[size_t(p) * m + j];
    return out;
  };
  const auto& wq = st.wq.data();
  const auto& wk = st.wk.data();
  const auto& wv = st.wv.data();
  const auto& dk = st.delta_k.data();
  const auto& dv = st.delta_v.data();

  // discriminator scores
  std::vector<double> logits(size_t(t), 0.0);
  for (int i = 0; i < t; ++i) {
    std::vector<double> h(size_t(c), 0.0);
    for (int j = 0; j < c; ++j) {
      double acc = st.da1.b.data()[size_t(j)];
      for (int p = 0; p < c; ++p) acc += f[size_t(i) * c + p] * st.da1.w.data()[size_t(p) * c + j];
      h[size_t(j)] = std::max(acc, 0.0);
    }
    double acc = st.da2.b.data()[0];
    for (int p = 0; p < c; ++p) acc += h[size_t(p)] * st.da2.w.data()[size_t(p)];
    logits[size_t(i)] = acc;
  }
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double z = 0;
  std::vector<double> s(size_t(t), 0.0);
  for (int i = 0; i < t; ++i) {
    s[size_t(i)] = std::exp(logits[size_t(i)] - mx);
    z += s[size_t(i)];
  }
  for (auto& v : s) v /= z;

  std::vector<double> fdk(size_t(t) * c), fdv(size_t(t) * c), fscored(size_t(t) * c);
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < c; ++j) {
      fdk[size_t(i) * c + j] = f[size_t(i) * c + j] + dk[size_t(i) * c + j];
      fdv[size_t(i) * c + j] = f[size_t(i) * c + j] + dv[size_t(i) * c + j];
      fscored[size_t(i) * c + j] = f[size_t(i) * c + j] * s[size_t(i)];
    }
  auto q = matmul_raw(f, t, c, wq, c);
  auto k1 = matmul_raw(fdk, t, c, wk, c);
  auto k2 = matmul_raw(fscored, t, c, wk, c);
  auto v1 = matmul_raw(fdv, t, c, wv, c);
  auto v2 = matmul_raw(f, t, c, wv, c);
  std::vector<double> kcat, vcat;
  kcat.insert(kcat.end(), k1.begin(), k1.end());
  kcat.insert(kcat.end(), k2.begin(), k2.end());
  vcat.insert(vcat.end(), v1.begin(), v1.end());
  vcat.insert(vcat.end(), v2.begin(), v2.end());
  auto att = oracle::attention_naive(q, t, c, kcat, 2 * t, vcat, c);
  for (int i = 0; i < t * c; ++i) att[size_t(i)] += f[size_t(i)];
  return att;
}

SwintStage<double> make_stage(ParamRegistry<double>& reg, int index, int in_c, int out_c,
                              int window, uint64_t seed = 7) {
  Rng rng(seed);
  return SwintStage<double>(reg, "stage", index, in_c, out_c, window, rng);
}

}  // namespace

TEST_CASE("patch embedding shape and linearity") {
  ParamRegistry<double> reg;
  Rng rng(3);
  PatchEmbed<double> pe(reg, 4, 8, rng);

  auto zero = pe.forward(D::zeros({3, 48, 48}));
  CHECK(zero.shape() == Shape{8, 12, 12});
  // zero image leaves only the bias
  for (int c = 0; c < 8; ++c)
    for (int i = 0; i < 144; ++i)
      CHECK(zero.data()[size_t(c) * 144 + i] == doctest::Approx(pe.proj.b.data()[size_t(c)]));

  auto img = test_util::random_tensor({3, 8, 8}, rng, 0, 1);
  auto once = pe.forward(img);
  auto twice = pe.forward(scale(img, 2.0));
  for (int c = 0; c < 8; ++c)
    for (int i = 0; i < 4; ++i) {
      const double b = pe.proj.b.data()[size_t(c)];
      CHECK(twice.data()[size_t(c) * 4 + i] - b ==
            doctest::Approx(2 * (once.data()[size_t(c) * 4 + i] - b)).epsilon(1e-9));
    }

  CHECK_THROWS(pe.forward(D::zeros({3, 10, 10})));  // not divisible by patch
}

TEST_CASE("discriminator scores: symmetry, singleton, normalization") {
  ParamRegistry<double> reg;
  auto st = make_stage(reg, 1, 8, 8, 2);

  // identical tokens -> uniform 1/T
  auto same = D::ones({4, 8});
  auto s = st.discriminator_scores(same);
  for (int i = 0; i < 4; ++i) CHECK(s.data()[size_t(i)] == doctest::Approx(0.25).epsilon(1e-9));

  // singleton window
  auto one = st.discriminator_scores(D::ones({1, 8}));
  CHECK(one.data()[0] == doctest::Approx(1.0));

  // random window sums to 1, scores in (0,1)
  Rng rng(5);
  auto tokens = random_tensor({4, 8}, rng);
  auto sr = st.discriminator_scores(tokens);
  double total = 0;
  for (double v : sr.data()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
    total += v;
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-6));

  CHECK_THROWS(st.discriminator_scores(D::zeros({0, 8})));
}

TEST_CASE("zero noise with forced-unit discriminator reduces to plain attention") {
  ParamRegistry<double> reg;
  auto st = make_stage(reg, 1, 8, 8, 2);
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    auto tokens = random_tensor({4, 8}, rng);
    SwintHooks hooks;
    hooks.zero_noise = true;
    hooks.unit_discriminator = true;
    auto noisy = st.noisy_window_attention(tokens, hooks);
    auto plain = add(attention(matmul(tokens, st.wq), matmul(tokens, st.wk),
                               matmul(tokens, st.wv)),
                     tokens);
    CHECK(max_abs_diff(noisy, plain) < 1e-6);
  }
}

TEST_CASE("singleton window with zero noise returns F Wv + F") {
  ParamRegistry<double> reg;
  auto st = make_stage(reg, 1, 8, 8, 2);
  Rng rng(13);
  auto tokens = random_tensor({1, 8}, rng);
  SwintHooks hooks;
  hooks.zero_noise = true;
  hooks.unit_discriminator = true;
  auto out = st.noisy_window_attention(tokens, hooks);
  auto expect = add(matmul(tokens, st.wv), tokens);
  CHECK(max_abs_diff(out, expect) < 1e-12);
}

TEST_CASE("noisy attention matches the equation transcription oracle") {
  ParamRegistry<double> reg;
  auto st = make_stage(reg, 1, 8, 8, 2);
  Rng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    auto tokens = random_tensor({4, 8}, rng);
    auto out = st.noisy_window_attention(tokens);
    auto ref = naive_noisy_attention(st, tokens.data(), 4, 8);
    CHECK(max_abs_diff(out, ref) < 1e-9);
  }
}

TEST_CASE("K and V carry exactly 2T rows") {
  // visible through the reduction identity: a biased key set would break it;
  // also check directly on the concat shapes via a tiny probe
  ParamRegistry<double> reg;
  auto st = make_stage(reg, 1, 4, 4, 2);
  Rng rng(19);
  auto tokens = random_tensor({4, 4}, rng);
  auto k1 = matmul(add(st.delta_k, tokens), st.wk);
  auto k = concat<double>({k1, matmul(tokens, st.wk)}, 0);
  CHECK(k.shape() == Shape{8, 4});
}

TEST_CASE("window partition and merge invert each other") {
  Rng rng(23);
  auto x = random_tensor({3, 8, 12}, rng);
  auto windows = window_partition(x, 4);
  CHECK(windows.size() == 6);
  auto back = window_merge(windows, 2, 3);
  CHECK(back.data() == x.data());
}

TEST_CASE("stage forward: partition count, shape contract, determinism") {
  ParamRegistry<double> reg;
  auto st1 = make_stage(reg, 1, 8, 8, 4);
  Rng rng(29);
  auto x = random_tensor({8, 12, 12}, rng);
  CHECK(window_partition(x, 4).size() == 9);  // 12x12 with window 4

  auto y1 = st1.forward(x);
  CHECK(y1.shape() == Shape{8, 12, 12});  // stage 1 keeps patch-embed resolution
  auto y2 = st1.forward(x);
  CHECK(y1.data() == y2.data());  // deterministic

  ParamRegistry<double> reg2;
  auto st2 = make_stage(reg2, 2, 8, 16, 4);
  auto z = st2.forward(x);
  CHECK(z.shape() == Shape{16, 6, 6});  // spatial halves, channels double
}

TEST_CASE("stage handles odd extents by pad-and-crop") {
  ParamRegistry<double> reg;
  auto st = make_stage(reg, 2, 8, 16, 4);
  Rng rng(31);
  auto x = random_tensor({8, 3, 3}, rng);
  auto y = st.forward(x);
  CHECK(y.shape() == Shape{16, 2, 2});
}

TEST_CASE("gradients flow into the learnable noise") {
  ParamRegistry<double> reg;
  auto st = make_stage(reg, 1, 8, 8, 2);
  Rng rng(37);
  auto x = random_tensor({8, 4, 4}, rng);
  auto loss = mean_all(mul(st.forward(x), st.forward(x)));
  backward(loss);
  auto sq = [](const D& t) {
    double s = 0;
    for (double g : t.grad()) s += g * g;
    return s;
  };
  CHECK(sq(st.delta_k) > 0.0);
  CHECK(sq(st.delta_v) > 0.0);
}

TEST_CASE("ablated stage drops noise parameters and uses plain attention") {
  ParamRegistry<double> reg_on, reg_off;
  Rng rng_a(7), rng_b(7);
  SwintStage<double> on(reg_on, "s", 1, 8, 8, 2, rng_a, true);
  SwintStage<double> off(reg_off, "s", 1, 8, 8, 2, rng_b, false);
  CHECK(reg_off.count() < reg_on.count());
  Rng rng(41);
  auto tokens = random_tensor({4, 8}, rng);
  auto out = off.noisy_window_attention(tokens);
  auto plain = add(attention(matmul(tokens, off.wq), matmul(tokens, off.wk),
                             matmul(tokens, off.wv)),
                   tokens);
  CHECK(max_abs_diff(out, plain) == 0.0);
}
