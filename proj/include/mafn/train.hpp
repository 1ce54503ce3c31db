#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "mafn/adamw.hpp"
#include "mafn/checkpoint.hpp"
#include "mafn/config.hpp"
#include "mafn/dataset.hpp"
#include "mafn/metrics.hpp"
#include "mafn/model.hpp"

namespace mafn {

// MAFN_THREADS caps the worker count for the embarrassingly parallel parts
// (dataset generation, evaluation forwards). Training gradient accumulation
// is sequential in batch order, so results are thread-count independent.
inline int worker_count() {
  const char* env = std::getenv("MAFN_THREADS");
  if (!env) return 1;
  const int n = std::atoi(env);
  const int hw = int(std::thread::hardware_concurrency());
  return std::max(1, std::min(n, hw > 0 ? hw : 1));
}

// index-chunked parallel loop; results must be written to disjoint slots
template <typename Fn>
void parallel_for(int n, int workers, Fn&& fn) {
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  const int chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const int lo = w * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (int i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

inline Tensor<float> image_tensor(const synth::Sample& s) {
  return Tensor<float>::from_data({3, s.height, s.width}, s.image);
}

inline Tensor<float> mask_tensor(const synth::Sample& s) {
  std::vector<float> m(s.mask.size());
  for (size_t i = 0; i < m.size(); ++i) m[i] = float(s.mask[i]);
  return Tensor<float>::from_data({1, s.height, s.width}, std::move(m));
}

inline std::vector<uint8_t> logits_to_mask(const Tensor<float>& logits) {
  std::vector<uint8_t> mask(logits.data().size());
  for (size_t i = 0; i < mask.size(); ++i) mask[i] = logits.data()[i] > 0.0f ? 1 : 0;
  return mask;
}

inline std::vector<uint8_t> predict_mask(const MafnModel<float>& model,
                                         const synth::Sample& s) {
  NoGradGuard ng;
  return logits_to_mask(model.forward(image_tensor(s), s.tokens));
}

inline MetricsReport evaluate(const MafnModel<float>& model,
                              const std::vector<synth::Sample>& samples) {
  std::vector<std::vector<uint8_t>> preds(samples.size());
  std::vector<std::vector<uint8_t>> truths(samples.size());
  parallel_for(int(samples.size()), worker_count(), [&](int i) {
    preds[size_t(i)] = predict_mask(model, samples[size_t(i)]);
    truths[size_t(i)] = samples[size_t(i)].mask;
  });
  return compute_metrics(preds, truths);
}

struct EpochLog {
  int epoch = 0;
  double train_loss = 0;
  MetricsReport val;
};

struct TrainResult {
  std::vector<EpochLog> log;
  double best_miou = 0;
  int best_epoch = 0;
  int epochs_run = 0;
  int64_t steps = 0;
  bool early_stopped = false;
};

// Seeded, deterministic training loop. Saves best.ckpt (best validation mIoU)
// and last.ckpt (for resuming) under out_dir when it is non-empty; appends to
// metrics.csv. Resume is bit-identical because per-epoch shuffles derive from
// (seed, epoch) alone.
inline TrainResult train_model(MafnModel<float>& model, AdamW<float>& opt,
                               const std::vector<synth::Sample>& train_set,
                               const std::vector<synth::Sample>& val_set,
                               const RunConfig& cfg, const std::string& out_dir = "",
                               std::ostream* progress = nullptr, int start_epoch = 0,
                               double best_miou_so_far = 0.0) {
  if (train_set.empty()) throw std::invalid_argument("train: dataset empty");
  TrainResult result;
  result.best_miou = best_miou_so_far;
  result.steps = opt.step_count();

  std::ofstream csv;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    const std::string csv_path = out_dir + "/metrics.csv";
    const bool fresh = start_epoch == 0 || !std::filesystem::exists(csv_path);
    csv.open(csv_path, fresh ? std::ios::trunc : std::ios::app);
    if (fresh) csv << kMetricsCsvHeader << "\n";
  }

  const Rng seed_root(cfg.train.seed);
  for (int epoch = start_epoch; epoch < cfg.train.epochs; ++epoch) {
    // the permutation is a pure function of (seed, epoch) so a resumed run
    // shuffles exactly like an uninterrupted one
    std::vector<int> order(train_set.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
    Rng shuffle_rng = seed_root.fork(uint64_t(epoch) + 1);
    shuffle_rng.shuffle(order);

    double loss_sum = 0;
    int64_t loss_count = 0;
    for (size_t batch_lo = 0; batch_lo < order.size(); batch_lo += size_t(cfg.train.batch)) {
      const size_t batch_hi = std::min(order.size(), batch_lo + size_t(cfg.train.batch));
      const float inv_batch = 1.0f / float(batch_hi - batch_lo);
      model.params.zero_grad();
      for (size_t b = batch_lo; b < batch_hi; ++b) {
        const synth::Sample& s = train_set[size_t(order[b])];
        Tensor<float> logits = model.forward(image_tensor(s), s.tokens);
        Tensor<float> loss = bce_with_logits_mean(logits, mask_tensor(s));
        loss_sum += double(loss.item());
        ++loss_count;
        backward(scale(loss, inv_batch));
      }
      opt.step();
      ++result.steps;
    }

    EpochLog log;
    log.epoch = epoch + 1;
    log.train_loss = loss_sum / double(loss_count);
    log.val = evaluate(model, val_set);
    result.log.push_back(log);
    result.epochs_run = epoch + 1 - start_epoch;

    if (csv.is_open()) {
      csv << metrics_csv_row(log.epoch, log.val) << "\n";
      csv.flush();
    }
    if (progress)
      (*progress) << "epoch " << log.epoch << "  train_loss " << log.train_loss << "  val_mIoU "
                  << log.val.miou << "\n";

    if (log.val.miou > result.best_miou) {
      result.best_miou = log.val.miou;
      result.best_epoch = log.epoch;
      if (!out_dir.empty())
        save_checkpoint(out_dir + "/best.ckpt",
                        make_checkpoint(model.params, &opt, log.epoch, result.best_miou,
                                        cfg.to_text()));
    }
    if (!out_dir.empty())
      save_checkpoint(out_dir + "/last.ckpt",
                      make_checkpoint(model.params, &opt, log.epoch, result.best_miou,
                                      cfg.to_text()));

    if (cfg.train.early_stop_miou > 0 && log.val.miou >= cfg.train.early_stop_miou) {
      result.early_stopped = true;
      break;
    }
  }
  return result;
}

}  // namespace mafn
