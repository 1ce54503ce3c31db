#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "mafn/an_swint.hpp"
#include "mafn/grad_check.hpp"
#include "mafn/metrics.hpp"
#include "mafn/model.hpp"
#include "mafn/transcription.hpp"

// Property suite behind the `verify` command: gradient checks on every
// differentiable primitive, brute-force oracles, the noisy-attention
// reduction identity, rotation properties, equation transcriptions, and the
// metric definitions. Each check reports its measured value against the gate
// it must clear.

namespace mafn::verify {

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0;      // measured error / deviation
  double threshold = 0;  // gate it must stay under
};

namespace detail {

using D = Tensor<double>;

inline D rand_tensor(Shape s, Rng& rng, double lo = -1, double hi = 1) {
  std::vector<double> v(size_t(shape_numel(s)));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return D::from_data(std::move(s), std::move(v));
}

inline void check(std::vector<CheckResult>& out, const std::string& name, double value,
                  double threshold) {
  out.push_back({name, value < threshold, value, threshold});
}

inline double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace detail

// every differentiable primitive, 5 seeds x 2 shapes, plus the rotation
// angle gradient; gate 1e-4 in 64-bit mode
inline std::vector<CheckResult> gradient_suite() {
  using namespace detail;
  std::vector<CheckResult> out;
  const double gate = 1e-4;

  struct Named {
    const char* name;
    std::function<double(Rng&, int, int)> run;
  };
  auto sum_of = [](D t) { return sum_all(t); };
  (void)sum_of;

  const std::vector<Named> checks = {
      {"add",
       [](Rng& r, int n, int m) {
         return grad_check([](const std::vector<D>& in) { return sum_all(add(in[0], in[1])); },
                           {rand_tensor({n, m}, r), rand_tensor({n, m}, r)});
       }},
      {"sub",
       [](Rng& r, int n, int m) {
         return grad_check([](const std::vector<D>& in) { return sum_all(sub(in[0], in[1])); },
                           {rand_tensor({n, m}, r), rand_tensor({n, m}, r)});
       }},
      {"mul",
       [](Rng& r, int n, int m) {
         return grad_check([](const std::vector<D>& in) { return sum_all(mul(in[0], in[1])); },
                           {rand_tensor({n, m}, r), rand_tensor({n, m}, r)});
       }},
      {"neg",
       [](Rng& r, int n, int m) {
         return grad_check([](const std::vector<D>& in) { return sum_all(neg(in[0])); },
                           {rand_tensor({n, m}, r)});
       }},
      {"scale",
       [](Rng& r, int n, int m) {
         return grad_check([](const std::vector<D>& in) { return sum_all(scale(in[0], -1.7)); },
                           {rand_tensor({n, m}, r)});
       }},
      {"scale_t",
       [](Rng& r, int n, int m) {
         return grad_check(
             [](const std::vector<D>& in) { return sum_all(scale_t(in[0], in[1])); },
             {rand_tensor({n, m}, r), rand_tensor({1}, r)});
       }},
      {"take",
       [](Rng& r, int n, int m) {
         return grad_check(
             [m](const std::vector<D>& in) { return take(in[0], m - 1); },
             {rand_tensor({n * m}, r)});
       }},
      {"relu",
       [](Rng& r, int n, int m) {
         return grad_check([](const std::vector<D>& in) { return sum_all(relu(in[0])); },
                           {rand_tensor({n, m}, r)});
       }},
      {"sigmoid",
       [](Rng& r, int n, int m) {
         return grad_check(
             [](const std::vector<D>& in) { return sum_all(mul(in[1], sigmoid(in[0]))); },
             {rand_tensor({n, m}, r), rand_tensor({n, m}, r)});
       }},
      {"tanh",
       [](Rng& r, int n, int m) {
         return grad_check(
             [](const std::vector<D>& in) { return sum_all(mul(in[1], tanh_act(in[0]))); },
             {rand_tensor({n, m}, r), rand_tensor({n, m}, r)});
       }},
      {"softmax",
       [](Rng& r, int n, int m) {
         return grad_check(
             [](const std::vector<D>& in) { return sum_all(mul(in[1], softmax_rows(in[0]))); },
             {rand_tensor({n, m}, r, -3, 3), rand_tensor({n, m}, r)});
       }},
      {"matmul",
       [](Rng& r, int n, int m) {
         return grad_check(
             [](const std::vector<D>& in) { return sum_all(matmul(in[0], in[1])); },
             {rand_tensor({n, m}, r), rand_tensor({m, n + 1}, r)});
       }},
      {"transpose",
       [](Rng& r, int n, int m) {
         return grad_check(
             [](const std::vector<D>& in) { return sum_all(mul(in[1], transpose(in[0]))); },
             {rand_tensor({n, m}, r), rand_tensor({m, n}, r)});
       }},
      {"reshape",
       [](Rng& r, int n, int m) {
         return grad_check(
             [n, m](const std::vector<D>& in) {
               return sum_all(mul(reshape(in[0], {m, n}), reshape(in[0], {m, n})));
             },
             {rand_tensor({n, m}, r)});
       }},
      {"add_row_vec",
       [](Rng& r, int n, int m) {
         return grad_check(
             [](const std::vector<D>& in) { return sum_all(add_row_vec(in[0], in[1])); },
             {rand_tensor({n, m}, r), rand_tensor({m}, r)});
       }},
      {"scale_rows",
       [](Rng& r, int n, int m) {
         return grad_check(
             [](const std::vector<D>& in) { return sum_all(scale_rows(in[0], in[1])); },
             {rand_tensor({n, m}, r), rand_tensor({n}, r)});
       }},
      {"layer_norm",
       [](Rng& r, int n, int m) {
         return grad_check(
             [](const std::vector<D>& in) {
               return sum_all(mul(in[3], layer_norm(in[0], in[1], in[2])));
             },
             {rand_tensor({n, m}, r), rand_tensor({m}, r, 0.5, 1.5), rand_tensor({m}, r),
              rand_tensor({n, m}, r)});
       }},
      {"concat_split",
       [](Rng& r, int n, int m) {
         return grad_check(
             [n](const std::vector<D>& in) {
               auto cat = concat<double>({in[0], in[1]}, 0);
               auto parts = split(cat, 0, {n, n});
               return sum_all(mul(parts[0], parts[1]));
             },
             {rand_tensor({n, m}, r), rand_tensor({n, m}, r)});
       }},
      {"sum_mean",
       [](Rng& r, int n, int m) {
         return grad_check(
             [](const std::vector<D>& in) { return mean_all(mul(in[0], in[0])); },
             {rand_tensor({n, m}, r)});
       }},
      {"embedding",
       [](Rng& r, int n, int m) {
         return grad_check(
             [](const std::vector<D>& in) { return sum_all(embedding(in[0], {0, 1, 1})); },
             {rand_tensor({n + 1, m}, r)});
       }},
      {"attention",
       [](Rng& r, int n, int m) {
         return grad_check(
             [](const std::vector<D>& in) {
               return sum_all(attention(in[0], in[1], in[2]));
             },
             {rand_tensor({n, m}, r), rand_tensor({n + 1, m}, r),
              rand_tensor({n + 1, m + 1}, r)});
       }},
      {"bce_with_logits",
       [](Rng& r, int n, int m) {
         std::vector<double> y(size_t(n) * m);
         for (auto& v : y) v = r.uniform() < 0.5 ? 0.0 : 1.0;
         auto target = D::from_data({n, m}, y);
         return grad_check(
             [target](const std::vector<D>& in) {
               return bce_with_logits_mean(in[0], target);
             },
             {rand_tensor({n, m}, r, -2, 2)});
       }},
      {"conv2d",
       [](Rng& r, int n, int m) {
         return grad_check(
             [](const std::vector<D>& in) {
               return sum_all(mul(in[2], conv2d(in[0], in[1], 1, 1)));
             },
             {rand_tensor({2, n + 2, m + 2}, r), rand_tensor({2, 2, 3, 3}, r),
              rand_tensor({2, n + 2, m + 2}, r)});
       }},
      {"conv2d_stride2",
       [](Rng& r, int n, int m) {
         (void)n;
         (void)m;
         return grad_check(
             [](const std::vector<D>& in) { return sum_all(conv2d(in[0], in[1], 2, 1)); },
             {rand_tensor({2, 5, 5}, r), rand_tensor({2, 2, 3, 3}, r)});
       }},
      {"depthwise_conv2d",
       [](Rng& r, int n, int m) {
         return grad_check(
             [](const std::vector<D>& in) {
               return sum_all(mul(in[2], depthwise_conv2d(in[0], in[1], 1, 1)));
             },
             {rand_tensor({3, n + 2, m + 2}, r), rand_tensor({3, 3, 3}, r),
              rand_tensor({3, n + 2, m + 2}, r)});
       }},
      {"add_channel_vec",
       [](Rng& r, int n, int m) {
         return grad_check(
             [](const std::vector<D>& in) { return sum_all(add_channel_vec(in[0], in[1])); },
             {rand_tensor({3, n, m}, r), rand_tensor({3}, r)});
       }},
      {"mul_channel_vec",
       [](Rng& r, int n, int m) {
         return grad_check(
             [](const std::vector<D>& in) { return sum_all(mul_channel_vec(in[0], in[1])); },
             {rand_tensor({3, n, m}, r), rand_tensor({3}, r)});
       }},
      {"mul_spatial_map",
       [](Rng& r, int n, int m) {
         return grad_check(
             [](const std::vector<D>& in) { return sum_all(mul_spatial_map(in[0], in[1])); },
             {rand_tensor({3, n, m}, r), rand_tensor({1, n, m}, r)});
       }},
      {"mean_channels",
       [](Rng& r, int n, int m) {
         return grad_check(
             [](const std::vector<D>& in) {
               return sum_all(mul(in[1], mean_channels(in[0])));
             },
             {rand_tensor({3, n, m}, r), rand_tensor({1, n, m}, r)});
       }},
      {"global_avg_pool",
       [](Rng& r, int n, int m) {
         return grad_check(
             [](const std::vector<D>& in) {
               return sum_all(mul(in[1], global_avg_pool(in[0])));
             },
             {rand_tensor({3, n, m}, r), rand_tensor({3}, r)});
       }},
      {"channel_norm2d",
       [](Rng& r, int n, int m) {
         return grad_check(
             [](const std::vector<D>& in) {
               return sum_all(mul(in[3], channel_norm2d(in[0], in[1], in[2])));
             },
             {rand_tensor({3, n, m}, r), rand_tensor({3}, r, 0.5, 1.5), rand_tensor({3}, r),
              rand_tensor({3, n, m}, r)});
       }},
      {"pad_crop",
       [](Rng& r, int n, int m) {
         return grad_check(
             [n, m](const std::vector<D>& in) {
               return sum_all(mul(crop2d(pad2d(in[0], 1, 1, 1, 1), 1, 1, n, m), in[0]));
             },
             {rand_tensor({2, n, m}, r)});
       }},
      {"space_to_channel",
       [](Rng& r, int n, int m) {
         (void)n;
         (void)m;
         return grad_check(
             [](const std::vector<D>& in) {
               auto y = space_to_channel(in[0], 2);
               return sum_all(mul(y, y));
             },
             {rand_tensor({2, 4, 4}, r)});
       }},
      {"bilinear_resize",
       [](Rng& r, int n, int m) {
         return grad_check(
             [](const std::vector<D>& in) {
               return sum_all(mul(in[1], bilinear_resize(in[0], 7, 5)));
             },
             {rand_tensor({2, n, m}, r), rand_tensor({2, 7, 5}, r)});
       }},
      {"correlation_volume",
       [](Rng& r, int n, int m) {
         return grad_check(
             [](const std::vector<D>& in) {
               return sum_all(mul(in[2], correlation_volume(in[0], in[1], 1)));
             },
             {rand_tensor({2, n, m}, r), rand_tensor({2, n, m}, r),
              rand_tensor({9, n, m}, r)});
       }},
      {"rotate_kernel_w",
       [](Rng& r, int n, int m) {
         (void)n;
         (void)m;
         const double th = r.uniform(0.15, 1.3);
         return grad_check(
             [](const std::vector<D>& in) {
               return sum_all(mul(in[2], rotate_kernel(in[0], in[1])));
             },
             {rand_tensor({2, 2, 3, 3}, r), D::from_data({1}, {th}),
              rand_tensor({2, 2, 3, 3}, r)});
       }},
      {"rotate_kernel_theta",
       [](Rng& r, int n, int m) {
         (void)n;
         (void)m;
         const double th = r.uniform(0.15, 1.3);
         return grad_check(
             [](const std::vector<D>& in) {
               return sum_all(mul(in[2], rotate_kernel(in[0], in[1])));
             },
             {rand_tensor({1, 1, 5, 5}, r), D::from_data({1}, {th}),
              rand_tensor({1, 1, 5, 5}, r)});
       }},
  };

  for (const auto& c : checks) {
    for (uint64_t seed = 1; seed <= 5; ++seed) {
      Rng rng(seed * 7919);
      for (int shape_case = 0; shape_case < 2; ++shape_case) {
        const int n = shape_case == 0 ? 2 : 4;
        const int m = shape_case == 0 ? 3 : 2;
        double err = c.run(rng, n, m);
        detail::check(out,
                      std::string("grad/") + c.name + "/seed" + std::to_string(seed) +
                          "/shape" + std::to_string(shape_case),
                      err, gate);
      }
    }
  }

  // fan-out: d/dx (f(x)+g(x)) equals the sum of branch gradients
  Rng rng(101);
  double err = grad_check(
      [](const std::vector<D>& in) {
        return sum_all(add(mul(in[0], in[0]), scale(in[0], 3.0)));
      },
      {rand_tensor({5}, rng)});
  detail::check(out, "grad/fanout_accumulation", err, gate);
  return out;
}

// AN-SwinT with zero noise and forced-unit discriminator equals standard
// windowed attention on 10 random windows
inline std::vector<CheckResult> reduction_suite() {
  using namespace detail;
  std::vector<CheckResult> out;
  ParamRegistry<double> reg;
  Rng prng(31);
  SwintStage<double> stage(reg, "verify", 1, 8, 8, 2, prng);
  Rng rng(212);
  for (int trial = 0; trial < 10; ++trial) {
    auto tokens = rand_tensor({4, 8}, rng);
    SwintHooks hooks;
    hooks.zero_noise = true;
    hooks.unit_discriminator = true;
    auto noisy = stage.noisy_window_attention(tokens, hooks);
    auto plain = add(attention(matmul(tokens, stage.wq), matmul(tokens, stage.wk),
                               matmul(tokens, stage.wv)),
                     tokens);
    check(out, "reduction/zero_noise_unit_da/window" + std::to_string(trial),
          max_diff(noisy.data(), plain.data()), 1e-6);
  }
  return out;
}

// Eq-10 implementation vs the quadruple-loop oracle on 20 random cases
inline std::vector<CheckResult> correlation_suite() {
  using namespace detail;
  std::vector<CheckResult> out;
  Rng rng(333);
  for (int trial = 0; trial < 20; ++trial) {
    const int c = rng.uniform_int(1, 8);
    const int h = rng.uniform_int(2, 8);
    const int w = rng.uniform_int(2, 8);
    const int d = rng.uniform_int(0, 3);
    auto tv = rand_tensor({c, h, w}, rng);
    auto tl = rand_tensor({c, h, w}, rng);
    auto vol = correlation_volume(tv, tl, d);
    auto ref = transcription::eq10_correlation(tv.data(), tl.data(), c, h, w, d);
    check(out, "correlation/case" + std::to_string(trial), max_diff(vol.data(), ref), 1e-6);
  }
  return out;
}

// theta = 0 identity must be bit exact; theta = pi/2 must match the discrete
// grid rotation on 3x3 and 5x5 kernels
inline std::vector<CheckResult> rotation_suite() {
  using namespace detail;
  std::vector<CheckResult> out;
  Rng rng(47);
  for (int k : {3, 5}) {
    auto w = rand_tensor({2, 1, k, k}, rng);
    auto id = rotate_kernel(w, D::zeros({1}));
    double id_err = id.data() == w.data() ? 0.0 : 1.0;
    out.push_back({"rotation/theta0_bit_exact_k" + std::to_string(k), id_err == 0.0, id_err, 0.5});

    auto quarter = rotate_kernel(w, D::full({1}, M_PI / 2));
    std::vector<double> ref(w.data().size());
    for (int f = 0; f < 2; ++f)
      for (int r = 0; r < k; ++r)
        for (int c = 0; c < k; ++c)
          ref[size_t(f) * k * k + size_t(r) * k + c] =
              w.data()[size_t(f) * k * k + size_t(c) * k + (k - 1 - r)];
    check(out, "rotation/quarter_turn_k" + std::to_string(k),
          max_diff(quarter.data(), ref), 1e-6);
  }
  return out;
}

// graph implementations vs the literal loop transcriptions
inline std::vector<CheckResult> transcription_suite() {
  using namespace detail;
  std::vector<CheckResult> out;
  ParamRegistry<double> reg;
  Rng prng(59);
  CfmLayer<double> layer(reg, "verify", 1, 8, 8, 2, 6, 2, {3, 5}, prng);
  Rng rng(515);
  const int c = 8, h = 4, w = 4, ct = 6, m = 3;
  auto ve = rand_tensor({c, h, w}, rng);
  auto ft = rand_tensor({ct, m}, rng);

  check(out, "transcription/eq6_visual_integration",
        max_diff(layer.visual_integration(ve).data(),
                 transcription::eq6_visual_integration(layer, ve.data(), c, h, w)),
        1e-6);
  check(out, "transcription/eq7_vision_gate",
        max_diff(layer.vision_gate(ve).data(),
                 transcription::gate_naive(layer.theta_gate, ve.data(), c, h, w)),
        1e-6);
  check(out, "transcription/eq8_multimodal_attention",
        max_diff(layer.multimodal_attention(ve, ft).data(),
                 transcription::eq8_multimodal(layer, ve.data(), c, h, w, ft.data(), ct, m)),
        1e-6);
  check(out, "transcription/eq9_language_gate",
        max_diff(layer.language_gate(ve).data(),
                 transcription::gate_naive(layer.phi_gate, ve.data(), c, h, w)),
        1e-6);
  {
    auto f_prev = rand_tensor({c, h, w}, rng);
    auto full = layer.forward(f_prev, ft);
    auto ve_stage = layer.stage.forward(f_prev);
    auto te = transcription::cfm_fusion_naive(layer, ve_stage.data(), c, h, w, ft.data(), ct, m);
    std::vector<double> ref(te.size());
    for (size_t i = 0; i < te.size(); ++i) ref[i] = ve_stage.data()[i] + te[i];
    check(out, "transcription/eq11_cfm_output", max_diff(full.data(), ref), 1e-5);
  }
  {
    ParamRegistry<double> reg2;
    Rng prng2(61);
    ArcBank<double> bank(reg2, "verify_bank", 4, 3, prng2);
    auto v = rand_tensor({4, 4, 4}, rng);
    auto [theta, lambda] = bank.predict(v);
    check(out, "transcription/eq16_rotated_conv",
          max_diff(bank.forward(v).data(),
                   transcription::eq16_arc(bank, v.data(), 4, 4, 4, theta.data(),
                                           lambda.data())),
          1e-6);

    ParamRegistry<double> reg3;
    Rng prng3(67);
    MsrcBlock<double> blk(reg3, "verify_msrc", 5, 4, {1, 3}, 2, prng3);
    auto x = rand_tensor({5, 4, 4}, rng);
    MsrcHooks<double> hooks;
    hooks.freeze_predictor = true;
    hooks.forced_theta = {0.6, -0.4};
    hooks.forced_lambda = {0.3, 0.7};
    check(out, "transcription/eq17_msrc_layer",
          max_diff(blk.forward(x, hooks).data(),
                   transcription::msrc_block_naive(blk, x.data(), 5, 4, 4, hooks.forced_theta,
                                                   hooks.forced_lambda)),
          1e-6);
  }

  // conv2d against its six-loop oracle, 20 random stride-1 cases
  for (int trial = 0; trial < 20; ++trial) {
    const int ci = rng.uniform_int(1, 3), co = rng.uniform_int(1, 3);
    const int k = 2 * rng.uniform_int(0, 2) + 1;
    const int hh = rng.uniform_int(k, 7), ww = rng.uniform_int(k, 7);
    auto x = rand_tensor({ci, hh, ww}, rng);
    auto ker = rand_tensor({co, ci, k, k}, rng);
    auto y = conv2d(x, ker, 1, (k - 1) / 2);
    auto ref = transcription::nconv(x.data(), ci, hh, ww, ker.data(), co, k, (k - 1) / 2, {});
    check(out, "oracle/conv2d_case" + std::to_string(trial), max_diff(y.data(), ref), 1e-6);
  }
  return out;
}

// metric definitions: the hand-derived example row plus P@X monotonicity
inline std::vector<CheckResult> metrics_suite() {
  using namespace detail;
  std::vector<CheckResult> out;

  std::vector<uint8_t> gt1(32, 0), p1(32, 0), gt2(32, 0), p2(32, 0);
  for (int i = 0; i < 16; ++i) gt1[size_t(i)] = 1;
  for (int i = 0; i < 11; ++i) p1[size_t(i)] = 1;
  for (int i = 16; i < 20; ++i) p1[size_t(i)] = 1;
  for (int i = 0; i < 20; ++i) gt2[size_t(i)] = 1;
  for (int i = 0; i < 19; ++i) p2[size_t(i)] = 1;
  auto r = compute_metrics({p1, p2}, {gt1, gt2});
  check(out, "metrics/hand_row_miou", std::abs(r.miou - 0.75), 1e-12);
  check(out, "metrics/hand_row_p50", std::abs(r.precision_at[0] - 1.0), 1e-12);
  check(out, "metrics/hand_row_p60", std::abs(r.precision_at[1] - 0.5), 1e-12);
  check(out, "metrics/hand_row_p90", std::abs(r.precision_at[4] - 0.5), 1e-12);

  Rng rng(77);
  bool monotone = true;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = rng.uniform_int(1, 6);
    std::vector<std::vector<uint8_t>> pred, truth;
    for (int s = 0; s < n; ++s) {
      std::vector<uint8_t> p(24), t(24);
      for (int i = 0; i < 24; ++i) {
        p[size_t(i)] = rng.uniform() < 0.5;
        t[size_t(i)] = rng.uniform() < 0.5;
      }
      pred.push_back(p);
      truth.push_back(t);
    }
    auto rep = compute_metrics(pred, truth);
    for (size_t k = 1; k < rep.precision_at.size(); ++k)
      monotone = monotone && rep.precision_at[k] <= rep.precision_at[k - 1];
  }
  out.push_back({"metrics/precision_monotone_100_sets", monotone, monotone ? 0.0 : 1.0, 0.5});
  return out;
}

inline std::vector<CheckResult> run_all() {
  std::vector<CheckResult> all;
  for (auto suite : {gradient_suite, reduction_suite, correlation_suite, rotation_suite,
                     transcription_suite, metrics_suite}) {
    auto part = suite();
    all.insert(all.end(), part.begin(), part.end());
  }
  return all;
}

inline int print_report(const std::vector<CheckResult>& results, std::FILE* stream) {
  int failures = 0;
  for (const auto& r : results) {
    if (!r.pass) ++failures;
    std::fprintf(stream, "[%s] %-55s %.3e (gate %.0e)\n", r.pass ? "PASS" : "FAIL",
                 r.name.c_str(), r.value, r.threshold);
  }
  std::fprintf(stream, "%d/%d checks passed\n", int(results.size()) - failures,
               int(results.size()));
  return failures;
}

}  // namespace mafn::verify
