// mafn: synthetic referring-segmentation pipeline
//   gen-data  build a synthetic corpus (train + val splits)
//   train     train from a config file, writing checkpoints and a metric log
//   eval      evaluate a checkpoint on a dataset split
//   infer     segment one image given an expression
//   verify    run the property suite (gradient checks, oracles, reductions)

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mafn/checkpoint.hpp"
#include "mafn/config.hpp"
#include "mafn/dataset.hpp"
#include "mafn/model.hpp"
#include "mafn/pnm.hpp"
#include "mafn/train.hpp"
#include "mafn/verify.hpp"

namespace fs = std::filesystem;
using namespace mafn;

namespace {

std::string vocab_to_text(const synth::Vocabulary& vocab) {
  std::string out;
  for (const auto& w : vocab.words()) out += w + "\n";
  return out;
}

synth::Vocabulary vocab_from_text(const std::string& text) {
  const fs::path tmp = fs::temp_directory_path() / ("mafn_vocab_" + std::to_string(::getpid()));
  std::ofstream(tmp) << text;
  auto vocab = synth::Vocabulary::load(tmp.string());
  fs::remove(tmp);
  return vocab;
}

// checkpoints carry their config and vocabulary so eval/infer are self-contained
Checkpoint checkpoint_with_vocab(const ParamRegistry<float>& params, AdamW<float>* opt,
                                 int epoch, double best, const RunConfig& cfg,
                                 const synth::Vocabulary& vocab) {
  auto ckpt = make_checkpoint(params, opt, epoch, best, cfg.to_text());
  ckpt.add_text("__vocab__", vocab_to_text(vocab));
  return ckpt;
}

struct LoadedModel {
  RunConfig cfg;
  synth::Vocabulary vocab = synth::Vocabulary::standard();
  std::unique_ptr<MafnModel<float>> model;
};

LoadedModel load_model(const std::string& checkpoint_path) {
  LoadedModel lm;
  auto ckpt = load_checkpoint(checkpoint_path);
  const std::string cfg_text = ckpt.text("__config__");
  if (cfg_text.empty())
    throw std::runtime_error(checkpoint_path + ": checkpoint has no config snapshot");
  lm.cfg = RunConfig::parse_text(cfg_text);
  const std::string vocab_text = ckpt.text("__vocab__");
  if (!vocab_text.empty()) lm.vocab = vocab_from_text(vocab_text);
  lm.cfg.model.vocab_size = lm.vocab.size();
  lm.model = std::make_unique<MafnModel<float>>(lm.cfg.model, lm.cfg.train.seed + 1);
  restore_params(ckpt, lm.model->params);
  return lm;
}

std::vector<int> tokenize(const std::string& expr, const synth::Vocabulary& vocab) {
  std::vector<int> tokens;
  std::stringstream ss(expr);
  std::string word;
  while (ss >> word) tokens.push_back(vocab.id(word));
  if (tokens.empty()) throw std::runtime_error("expression is empty");
  return tokens;
}

int cmd_gen_data(const std::string& out_dir, int num, int val_num, uint64_t seed, int size,
                 int min_entities, int max_entities) {
  if (num < 1) throw std::runtime_error("--num must be at least 1");
  if (val_num < 0) val_num = std::max(1, num / 5);
  auto vocab = synth::Vocabulary::standard();
  synth::SceneConfig sc;
  sc.image_size = size;
  sc.min_entities = min_entities;
  sc.max_entities = max_entities;

  const uint64_t base = seed * 1000003ull;
  auto generate_split = [&](const std::string& split, int count, uint64_t offset) {
    std::vector<synth::Sample> samples(static_cast<size_t>(count));
    parallel_for(count, worker_count(), [&](int i) {
      samples[size_t(i)] = synth::generate_sample(base + offset + uint64_t(i), sc, vocab);
    });
    synth::write_dataset(samples, out_dir, split, seed);
    return samples;
  };
  auto train_samples = generate_split("train", num, 0);
  auto val_samples = generate_split("val", val_num, uint64_t(num));
  vocab.save((fs::path(out_dir) / "vocab.txt").string());

  std::printf("dataset %s: %d train / %d val, size %dx%d, seed %llu\n", out_dir.c_str(), num,
              val_num, size, size, (unsigned long long)seed);
  std::printf("vocabulary: %d tokens; ambiguity ceiling (val): %.4f\n", vocab.size(),
              synth::ambiguity_ceiling(val_samples));
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, const std::vector<std::string>& overrides,
              bool resume, bool quiet) {
  RunConfig cfg = RunConfig::parse_file(config_path);
  if (!data_dir.empty()) cfg.data.dir = data_dir;
  for (const auto& kv : overrides) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos) throw std::runtime_error("--set expects key=value, got " + kv);
    cfg.apply_override(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (cfg.data.dir.empty()) throw std::runtime_error("no dataset directory (data.dir or --data)");

  auto train_ds = synth::read_dataset(cfg.data.dir, "train");
  auto val_ds = synth::read_dataset(cfg.data.dir, "val");
  auto vocab = synth::Vocabulary::load((fs::path(cfg.data.dir) / "vocab.txt").string());
  cfg.model.vocab_size = vocab.size();
  if (!train_ds.samples.empty()) cfg.data.image_size = train_ds.samples[0].width;

  MafnModel<float> model(cfg.model, cfg.train.seed + 1);
  AdamW<float> opt(model.params, cfg.train.lr, cfg.train.weight_decay);
  int start_epoch = 0;
  double best = 0;
  const std::string last_path = out_dir + "/last.ckpt";
  if (resume) {
    if (!fs::exists(last_path)) throw std::runtime_error(last_path + ": nothing to resume from");
    auto ckpt = load_checkpoint(last_path);
    restore_params(ckpt, model.params);
    restore_optimizer(ckpt, model.params, opt);
    start_epoch = int(ckpt.scalar("__epoch__"));
    best = ckpt.scalar("__best_miou__");
  }

  if (!quiet) {
    std::printf("model: %lld parameters, %d stages, channels %d, msrc kernels ",
                (long long)model.params.count(), cfg.model.stages, cfg.model.channels);
    for (size_t i = 0; i < cfg.model.msrc_kernels.size(); ++i)
      std::printf("%s%d", i ? "," : "[", cfg.model.msrc_kernels[i]);
    std::printf("]\ntrain: %zu samples, val: %zu, batch %d, lr %g, epochs %d, seed %llu\n",
                train_ds.samples.size(), val_ds.samples.size(), cfg.train.batch, cfg.train.lr,
                cfg.train.epochs, (unsigned long long)cfg.train.seed);
  }

  auto result = train_model(model, opt, train_ds.samples, val_ds.samples, cfg, out_dir,
                            quiet ? nullptr : &std::cout, start_epoch, best);

  // rewrite the loop's checkpoints with the vocabulary attached
  for (const char* name : {"best.ckpt", "last.ckpt"}) {
    const std::string p = out_dir + "/" + name;
    if (fs::exists(p)) {
      auto ckpt = load_checkpoint(p);
      MafnModel<float> tmp(cfg.model, cfg.train.seed + 1);
      restore_params(ckpt, tmp.params);
      AdamW<float> topt(tmp.params, cfg.train.lr, cfg.train.weight_decay);
      restore_optimizer(ckpt, tmp.params, topt);
      save_checkpoint(p, checkpoint_with_vocab(tmp.params, &topt, int(ckpt.scalar("__epoch__")),
                                               ckpt.scalar("__best_miou__"), cfg, vocab));
    }
  }

  if (!quiet) {
    std::printf("best val mIoU %.4f at epoch %d (%lld steps)%s\n", result.best_miou,
                result.best_epoch, (long long)result.steps,
                result.early_stopped ? ", early stop" : "");
  }
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_dir,
             const std::string& split, const std::string& csv_path) {
  auto lm = load_model(checkpoint_path);
  auto ds = synth::read_dataset(data_dir, split);
  auto report = evaluate(*lm.model, ds.samples);
  std::fputs(metrics_table(report).c_str(), stdout);
  if (!csv_path.empty()) {
    std::ofstream csv(csv_path);
    csv << "oIoU,mIoU,P@0.5,P@0.6,P@0.7,P@0.8,P@0.9\n";
    char row[256];
    std::snprintf(row, sizeof(row), "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", report.oiou,
                  report.miou, report.precision_at[0], report.precision_at[1],
                  report.precision_at[2], report.precision_at[3], report.precision_at[4]);
    csv << row;
  }
  return 0;
}

int cmd_infer(const std::string& checkpoint_path, const std::string& image_path,
              const std::string& expr, const std::string& out_path,
              const std::string& dump_dir) {
  auto lm = load_model(checkpoint_path);
  auto tokens = tokenize(expr, lm.vocab);
  PnmImage img = read_pnm(image_path);
  if (img.channels != 3) throw std::runtime_error(image_path + ": expected a P6 PPM image");

  std::vector<float> planar(size_t(3) * img.width * img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        planar[(size_t(c) * img.height + y) * img.width + x] =
            float(img.pixels[(size_t(y) * img.width + x) * 3 + c] / 255.0);
  auto image = Tensor<float>::from_data({3, img.height, img.width}, std::move(planar));

  NoGradGuard ng;
  if (!dump_dir.empty()) {
    fs::create_directories(dump_dir);
    auto stages = lm.model->encode(image, tokens);
    for (size_t i = 0; i < stages.size(); ++i) {
      auto mean = mean_channels(stages[i]);
      const auto& v = mean.data();
      float lo = v[0], hi = v[0];
      for (float x : v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
      const float span = hi - lo > 1e-12f ? hi - lo : 1.0f;
      std::vector<uint8_t> gray(v.size());
      for (size_t p = 0; p < v.size(); ++p)
        gray[p] = uint8_t(std::lround((v[p] - lo) / span * 255.0f));
      write_pgm((fs::path(dump_dir) / ("stage" + std::to_string(i + 1) + ".pgm")).string(),
                mean.dim(2), mean.dim(1), gray);
    }
  }
  auto logits = lm.model->forward(image, tokens);
  std::vector<uint8_t> mask(logits.data().size());
  for (size_t i = 0; i < mask.size(); ++i) mask[i] = logits.data()[i] > 0 ? 255 : 0;
  write_pgm(out_path, img.width, img.height, mask);
  std::printf("wrote %s (%dx%d)\n", out_path.c_str(), img.width, img.height);
  return 0;
}

int cmd_verify(const std::string& suite, bool inject_fault) {
  if (inject_fault) testing::inject_sigmoid_backward_fault() = true;
  std::vector<verify::CheckResult> results;
  if (suite == "all")
    results = verify::run_all();
  else if (suite == "gradients")
    results = verify::gradient_suite();
  else if (suite == "reduction")
    results = verify::reduction_suite();
  else if (suite == "correlation")
    results = verify::correlation_suite();
  else if (suite == "rotation")
    results = verify::rotation_suite();
  else if (suite == "transcription")
    results = verify::transcription_suite();
  else if (suite == "metrics")
    results = verify::metrics_suite();
  else
    throw std::runtime_error("unknown suite '" + suite + "'");
  const int failures = verify::print_report(results, stdout);
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MAFN reference pipeline"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic referring corpus");
  std::string gen_out = "data";
  int gen_num = 0, gen_val = -1, gen_size = 48, gen_min_e = 2, gen_max_e = 4;
  uint64_t gen_seed = 0;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--num", gen_num, "training sample count")->required();
  gen->add_option("--val-num", gen_val, "validation sample count (default num/5)");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--size", gen_size, "image extent in pixels")->capture_default_str();
  gen->add_option("--min-entities", gen_min_e, "entities per scene, lower bound")->capture_default_str();
  gen->add_option("--max-entities", gen_max_e, "entities per scene, upper bound")->capture_default_str();

  auto* train = app.add_subcommand("train", "train a model");
  std::string train_config, train_data, train_out = "run";
  std::vector<std::string> train_sets;
  bool train_resume = false, train_quiet = false;
  train->add_option("--config", train_config, "config file")->required();
  train->add_option("--data", train_data, "dataset directory (overrides data.dir)");
  train->add_option("--out", train_out, "output directory")->capture_default_str();
  train->add_option("--set", train_sets, "config override key=value (repeatable)");
  train->add_flag("--resume", train_resume, "continue from <out>/last.ckpt");
  train->add_flag("--quiet", train_quiet, "suppress progress output");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_ckpt, eval_data, eval_split = "val", eval_csv;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--data", eval_data, "dataset directory")->required();
  eval->add_option("--split", eval_split, "dataset split")->capture_default_str();
  eval->add_option("--csv", eval_csv, "also write the metric row to this CSV");

  auto* infer = app.add_subcommand("infer", "segment one image");
  std::string infer_ckpt, infer_image, infer_expr, infer_out = "mask.pgm", infer_dump;
  infer->add_option("--checkpoint", infer_ckpt, "checkpoint file")->required();
  infer->add_option("--image", infer_image, "input PPM image")->required();
  infer->add_option("--expr", infer_expr, "referring expression tokens")->required();
  infer->add_option("--out", infer_out, "output PGM mask")->capture_default_str();
  infer->add_option("--dump-features", infer_dump, "write per-stage feature maps here");

  auto* verify_cmd = app.add_subcommand("verify", "run the property suite");
  std::string verify_suite = "all";
  bool verify_fault = false;
  verify_cmd->add_option("--suite", verify_suite,
                         "all|gradients|reduction|correlation|rotation|transcription|metrics")->capture_default_str();
  verify_cmd
      ->add_flag("--inject-fault", verify_fault,
                 "flip one backward rule's sign (mutation check of the suite itself)")
      ->group("");  // hidden: test fixture

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_gen_data(gen_out, gen_num, gen_val, gen_seed, gen_size, gen_min_e, gen_max_e);
    if (train->parsed())
      return cmd_train(train_config, train_data, train_out, train_sets, train_resume,
                       train_quiet);
    if (eval->parsed()) return cmd_eval(eval_ckpt, eval_data, eval_split, eval_csv);
    if (infer->parsed()) return cmd_infer(infer_ckpt, infer_image, infer_expr, infer_out,
                                          infer_dump);
    if (verify_cmd->parsed()) return cmd_verify(verify_suite, verify_fault);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
