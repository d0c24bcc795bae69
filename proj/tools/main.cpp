#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "rvseg/checks.hpp"
#include "rvseg/config.hpp"
#include "rvseg/metrics.hpp"
#include "rvseg/train.hpp"

namespace fs = std::filesystem;
using namespace rvseg;

namespace {

// exit codes: 0 ok, 1 check-suite failure, 2 invalid flags/config,
// 3 I/O failure, 4 training aborted on non-finite values,
// 5 checkpoint/stack format mismatch
constexpr int kExitOk = 0;
constexpr int kExitSuiteFailure = 1;
constexpr int kExitBadConfig = 2;
constexpr int kExitIoFailure = 3;
constexpr int kExitNanAbort = 4;
constexpr int kExitFormat = 5;

const std::map<std::string, std::string>& key_help() {
  static const std::map<std::string, std::string> help = {
      {"variant", "training scheme: plain | gan | roigan_a | roigan_b | roigan_c"},
      {"generator", "generator architecture: fcnn | rfcnn"},
      {"learning_rate", "optimizer learning rate"},
      {"adam_beta1", "optimizer first-moment decay"},
      {"adam_beta2", "optimizer second-moment decay"},
      {"epochs", "training epochs"},
      {"batch_stacks", "whole stacks per optimizer step"},
      {"seed", "seed for init, shuffling and noise"},
      {"beta", "L1 loss weight (inside the L1 term)"},
      {"lambda", "adversarial weight in the total loss"},
      {"use_l1", "add the L1 term to the generator loss"},
      {"use_gan", "adversarial training: auto | true | false"},
      {"literal_generator_gan_loss", "minimize log(1-D(G)) instead of -log D(G)"},
      {"input_h", "full-resolution input height (divisible by 64)"},
      {"input_w", "full-resolution input width (divisible by 64)"},
      {"roi_h", "local-stream crop height (divisible by 64)"},
      {"roi_w", "local-stream crop width (divisible by 64)"},
      {"roi_margin", "pixels added around the ground-truth bounding box"},
      {"gen_widths", "six encoder feature counts, mirrored by the decoder"},
      {"disc_widths", "five discriminator feature counts"},
      {"noise", "decoder noise source: dropout | gaussian"},
      {"noise_dropout_p", "dropout probability on decoder blocks 1-3"},
      {"noise_sigma", "gaussian noise sigma when noise=gaussian"},
      {"gru_kernel", "Conv-GRU kernel size (recurrent generator)"},
      {"disc_condition_on_image", "feed the MRI slice to the discriminator too"},
      {"roigan_gan_term_in_gen_steps", "adversarial term in the coupled generator passes"},
      {"shared_gen_layers", "decoder blocks shared between the coupled generators"},
      {"shared_disc_layers", "conv blocks shared between roigan_c discriminators"},
      {"data_dir", "directory with manifest.txt and .rvs stacks"},
  };
  return help;
}

int run_gen_data(const fs::path& out, int stacks, std::int64_t h, std::int64_t w,
                 int slices, std::uint64_t seed) {
  if (h % 64 != 0 || w % 64 != 0 || h < 64 || w < 64)
    throw ConfigError("--size must give extents divisible by 64, got " +
                      std::to_string(h) + " " + std::to_string(w));
  if (slices < 8 || slices > 16)
    throw ConfigError("--slices must lie in [8,16], got " + std::to_string(slices));
  if (stacks < 3)
    throw ConfigError("--stacks must be at least 3 to populate each split");
  auto data = gen_phantom_dataset(stacks, h, w, slices, seed);
  fs::create_directories(out);
  std::vector<std::string> ids;
  for (const auto& ps : data) ids.push_back(ps.image.id);
  const DatasetManifest manifest = split_dataset(ids, {0.70, 0.15, 0.15}, seed);
  for (const auto& ps : data) stack_io_save(ps.image, ps.mask, out / (ps.image.id + ".rvs"));
  save_manifest(manifest, out / "manifest.txt");
  std::printf("wrote %d stacks (%lldx%lld, %d slices) and manifest.txt to %s\n", stacks,
              static_cast<long long>(h), static_cast<long long>(w), slices,
              out.string().c_str());
  return kExitOk;
}

int run_train(const RunConfig& rc, const fs::path& out) {
  const TrainConfig cfg = rc.to_train_config();
  const Dataset data = load_dataset(rc.get("data_dir"));
  Trainer trainer(cfg);
  const FitResult res = trainer.fit(data, out);
  for (const auto& row : res.history)
    std::printf("epoch %d: mse=%.6g gan_g=%.6g gan_d=%.6g l1=%.6g val_dice=%.4f\n",
                row.epoch, row.train_mse, row.train_gan_g, row.train_gan_d, row.train_l1,
                row.val_dice_mean);
  std::printf("best val dice %.4f at epoch %d; checkpoints in %s\n", res.best_val_dice,
              res.best_epoch, out.string().c_str());
  return kExitOk;
}

int run_eval(const fs::path& checkpoint, const fs::path& data_dir,
             const std::string& split, const fs::path& out) {
  Trainer trainer = Trainer::from_checkpoint(checkpoint);
  const Dataset data = load_dataset(data_dir);
  const std::vector<std::string>* ids = nullptr;
  if (split == "train")
    ids = &data.manifest.train;
  else if (split == "val")
    ids = &data.manifest.val;
  else if (split == "test")
    ids = &data.manifest.test;
  else
    throw ConfigError("unknown split '" + split + "' (expected train|val|test)");
  if (ids->empty()) throw TrainError("split '" + split + "' is empty");

  fs::create_directories(out);
  std::vector<MaskStack> preds, gts;
  std::vector<PixelSpacing> spacing;
  for (const auto& id : *ids) {
    const PhantomStack& ps = data.by_id(id);
    MaskStack pred = trainer.predict(ps.image);
    for (std::int64_t s = 0; s < ps.image.slices; ++s) {
      auto overlay = overlay_boundary(ps.image.slice(s), pred.slice(s), ps.image.height,
                                      ps.image.width);
      char name[64];
      std::snprintf(name, sizeof name, "%s_s%02lld.pgm", id.c_str(),
                    static_cast<long long>(s));
      write_pgm(out / name, ps.image.height, ps.image.width, overlay.data());
    }
    preds.push_back(std::move(pred));
    gts.push_back(ps.mask);
    spacing.push_back(ps.image.spacing);
  }
  const MetricsReport report = evaluate_stacks(preds, gts, spacing);
  write_report_csvs(report, out / "report_slices.csv", out / "report_summary.csv");
  std::printf("split %s: %zu slices\n", split.c_str(), report.slices.size());
  std::printf("  top: di %.4f(%.4f) hd %.3f(%.3f) mm\n", report.top.di_mean,
              report.top.di_sd, report.top.hd_mean, report.top.hd_sd);
  std::printf("  mid: di %.4f(%.4f) hd %.3f(%.3f) mm\n", report.mid.di_mean,
              report.mid.di_sd, report.mid.hd_mean, report.mid.hd_sd);
  std::printf("  low: di %.4f(%.4f) hd %.3f(%.3f) mm\n", report.low.di_mean,
              report.low.di_sd, report.low.hd_mean, report.low.hd_sd);
  std::printf("  overall: di %.4f(%.4f) hd %.3f(%.3f) mm\n", report.overall.di_mean,
              report.overall.di_sd, report.overall.hd_mean, report.overall.hd_sd);
  if (report.regression)
    std::printf("  area regression: slope %.4f intercept %.4f r %.4f\n",
                report.regression->slope, report.regression->intercept,
                report.regression->r);
  return kExitOk;
}

int run_infer(const fs::path& checkpoint, const fs::path& stack_file, const fs::path& out) {
  Trainer trainer = Trainer::from_checkpoint(checkpoint);
  auto [image, mask_unused] = stack_io_load(stack_file);
  (void)mask_unused;
  MaskStack pred = trainer.predict(image);
  fs::create_directories(out);
  stack_io_save(image, pred, out / (image.id + "_pred.rvs"));
  for (std::int64_t s = 0; s < image.slices; ++s) {
    auto overlay = overlay_boundary(image.slice(s), pred.slice(s), image.height, image.width);
    char name[64];
    std::snprintf(name, sizeof name, "%s_s%02lld_pred.pgm", image.id.c_str(),
                  static_cast<long long>(s));
    write_pgm(out / name, image.height, image.width, overlay.data());
  }
  std::printf("wrote %s_pred.rvs and %lld overlays to %s\n", image.id.c_str(),
              static_cast<long long>(image.slices), out.string().c_str());
  return kExitOk;
}

int run_check(const std::string& suite_name) {
  std::vector<checks::SuiteResult> suites;
  if (suite_name == "grad")
    suites.push_back(checks::run_grad_suite());
  else if (suite_name == "metrics")
    suites.push_back(checks::run_metrics_suite());
  else if (suite_name == "sharing")
    suites.push_back(checks::run_sharing_suite());
  else if (suite_name == "all")
    suites = checks::run_all_suites();
  else
    throw ConfigError("unknown suite '" + suite_name + "' (expected grad|metrics|sharing|all)");

  bool all_pass = true;
  double total = 0;
  for (const auto& s : suites) {
    checks::print_suite(s, std::cout);
    all_pass = all_pass && s.all_pass();
    total += s.seconds;
  }
  if (suite_name == "all") std::printf("total runtime %.2f s\n", total);
  return all_pass ? kExitOk : kExitSuiteFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"right-ventricle segmentation lab: synthetic data generation, "
               "FCNN/R-FCNN and coupled-GAN training, evaluation and property checks"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic phantom dataset");
  fs::path gen_out = "data";
  int gen_stacks = 10, gen_slices = 10;
  std::vector<std::int64_t> gen_size{64, 64};
  std::uint64_t gen_seed = 0;
  gen->add_option("--out", gen_out, "output directory")->capture_default_str();
  gen->add_option("--stacks", gen_stacks, "number of stacks")->capture_default_str();
  gen->add_option("--size", gen_size, "height and width, divisible by 64")
      ->expected(2)
      ->capture_default_str();
  gen->add_option("--slices", gen_slices, "slices per stack (8..16)")->capture_default_str();
  gen->add_option("--seed", gen_seed, "dataset seed")->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "train a configuration on a dataset");
  fs::path train_config_file, train_out = "runs/run";
  train->add_option("--config", train_config_file, "key=value config file");
  train->add_option("--out", train_out, "output directory for history and checkpoints")
      ->capture_default_str();
  std::map<std::string, std::string> overrides;
  for (const auto& [key, def] : RunConfig::defaults()) {
    auto it = key_help().find(key);
    const std::string help = it == key_help().end() ? "run configuration key" : it->second;
    train->add_option("--" + key, overrides[key], help)->default_str(def);
  }

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  fs::path eval_ckpt, eval_out = "eval";
  fs::path eval_data = "data";
  std::string eval_split = "test";
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--data", eval_data, "dataset directory")->capture_default_str();
  eval->add_option("--split", eval_split, "train | val | test")->capture_default_str();
  eval->add_option("--out", eval_out, "report directory")->capture_default_str();

  // infer
  auto* infer = app.add_subcommand("infer", "segment one .rvs stack with a checkpoint");
  fs::path infer_ckpt, infer_stack, infer_out = "infer";
  infer->add_option("--checkpoint", infer_ckpt, "checkpoint file")->required();
  infer->add_option("--stack", infer_stack, ".rvs stack to segment")->required();
  infer->add_option("--out", infer_out, "output directory")->capture_default_str();

  // check
  auto* check = app.add_subcommand("check", "run the property suites");
  std::string check_suite = "all";
  check->add_option("--suite", check_suite, "grad | metrics | sharing | all")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exits 0
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitBadConfig;
  }

  try {
    if (gen->parsed())
      return run_gen_data(gen_out, gen_stacks, gen_size[0], gen_size[1], gen_slices,
                          gen_seed);
    if (train->parsed()) {
      RunConfig rc = train_config_file.empty() ? RunConfig()
                                               : RunConfig::from_file(train_config_file);
      for (const auto& [key, value] : overrides)
        if (train->count("--" + key) > 0) rc.set(key, value);
      return run_train(rc, train_out);
    }
    if (eval->parsed()) return run_eval(eval_ckpt, eval_data, eval_split, eval_out);
    if (infer->parsed()) return run_infer(infer_ckpt, infer_stack, infer_out);
    if (check->parsed()) return run_check(check_suite);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitBadConfig;
  } catch (const TrainError& e) {
    const std::string msg = e.what();
    std::fprintf(stderr, "training error: %s\n", msg.c_str());
    return msg.find("non-finite") != std::string::npos ? kExitNanAbort : kExitBadConfig;
  } catch (const TensorError& e) {
    const std::string msg = e.what();
    std::fprintf(stderr, "error: %s\n", msg.c_str());
    return msg.find("non-finite") != std::string::npos ? kExitNanAbort : kExitBadConfig;
  } catch (const MetricError& e) {
    std::fprintf(stderr, "metrics error: %s\n", e.what());
    return kExitBadConfig;
  } catch (const IoError& e) {
    const std::string msg = e.what();
    std::fprintf(stderr, "io error: %s\n", msg.c_str());
    const bool format = msg.find("magic") != std::string::npos ||
                        msg.find("checkpoint") != std::string::npos ||
                        msg.find("truncated") != std::string::npos ||
                        msg.find("version") != std::string::npos;
    return format ? kExitFormat : kExitIoFailure;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIoFailure;
  }
  return kExitOk;
}
