#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "rvseg/checks.hpp"
#include "rvseg/config.hpp"
#include "rvseg/optim.hpp"
#include "rvseg/train.hpp"

using namespace rvseg;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* name) {
  fs::path p = fs::temp_directory_path() / "rvseg_train" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TrainConfig tiny_cfg(Variant v, GeneratorKind k = GeneratorKind::fcnn) {
  TrainConfig cfg;
  cfg.variant = v;
  cfg.generator_kind = k;
  cfg.gen_widths = {4, 8, 8, 8, 8, 8};
  cfg.disc_widths = {4, 8, 8, 8, 8};
  cfg.loss.use_gan = v != Variant::plain;
  cfg.loss.use_l1 = true;
  cfg.seed = 11;
  return cfg;
}

Dataset tiny_dataset(int n, std::uint64_t seed) {
  Dataset data;
  data.stacks = gen_phantom_dataset(n, 64, 64, 8, seed);
  std::vector<std::string> ids;
  for (const auto& s : data.stacks) ids.push_back(s.image.id);
  data.manifest = split_dataset(ids, {0.70, 0.15, 0.15}, seed);
  return data;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), {});
}

std::vector<float> param_snapshot(Generator<float>& gen) {
  std::vector<float> out;
  for (auto* p : gen.parameters())
    out.insert(out.end(), p->tensor.value().begin(), p->tensor.value().end());
  return out;
}

}  // namespace

TEST_CASE("adam descends, ignores zero gradients, solves a quadratic") {
  auto w = Tensor<float>::from_data({1}, {1.0f}, true);
  Parameter<float> p{w, "w", ParamKind::conv_weight};
  Adam<float> opt({&p}, 0.05f);

  w.grad_mut()[0] = 2.0f;  // d/dw w^2 at w=1
  opt.step();
  CHECK(w.value()[0] < 1.0f);

  const float frozen = w.value()[0];
  Adam<float> opt2({&p}, 0.05f);
  w.zero_grad();
  opt2.step();
  CHECK(w.value()[0] == frozen);

  // 500 steps on a 2-parameter quadratic
  auto w2 = Tensor<float>::from_data({2}, {1.0f, -1.5f}, true);
  Parameter<float> p2{w2, "w2", ParamKind::conv_weight};
  Adam<float> opt3({&p2}, 0.05f);
  for (int i = 0; i < 500; ++i) {
    w2.zero_grad();
    auto g = w2.grad_mut();
    g[0] = 2.0f * w2.value()[0];
    g[1] = 2.0f * w2.value()[1];
    opt3.step();
  }
  CHECK(std::abs(w2.value()[0]) < 1e-3f);
  CHECK(std::abs(w2.value()[1]) < 1e-3f);

  w.grad_mut()[0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_WITH_AS(opt.step(), doctest::Contains("w"), TensorError);
}

TEST_CASE("gan step with lambda=0 matches plain supervised descent bitwise") {
  auto data = tiny_dataset(4, 3);
  TrainConfig plain = tiny_cfg(Variant::plain);
  plain.loss.use_gan = false;
  plain.loss.use_l1 = false;
  TrainConfig gan = tiny_cfg(Variant::gan);
  gan.loss.use_l1 = false;
  gan.loss.lambda = 0.0;

  Trainer a(plain), b(gan);
  // both seed the generator first, so the generators start identical
  CHECK(param_snapshot(a.global_generator()) == param_snapshot(b.global_generator()));
  for (int step = 0; step < 3; ++step) {
    auto la = a.train_step({&data.stacks[0], &data.stacks[1]});
    auto lb = b.train_step({&data.stacks[0], &data.stacks[1]});
    CHECK(la.g_mse == lb.g_mse);
  }
  CHECK(param_snapshot(a.global_generator()) == param_snapshot(b.global_generator()));
}

TEST_CASE("supervised losses decrease over 50 steps on one stack") {
  auto data = tiny_dataset(3, 5);
  TrainConfig cfg = tiny_cfg(Variant::gan);
  cfg.loss.lambda = 0.0;
  cfg.loss.beta = 0.0;
  Trainer trainer(cfg);
  double first = 0, last = 0;
  for (int i = 0; i < 50; ++i) {
    auto losses = trainer.train_step({&data.stacks[0]});
    if (i == 0) first = losses.g_mse;
    last = losses.g_mse;
    CHECK(std::isfinite(losses.d_loss));
  }
  CHECK(last < first);
}

TEST_CASE("roigan_a with an empty roi stream equals the plain gan step") {
  // all-empty masks leave only the full-resolution stream
  auto stacks = gen_phantom_dataset(2, 64, 64, 8, 17);
  for (auto& ps : stacks) std::fill(ps.mask.voxels.begin(), ps.mask.voxels.end(), 0);

  TrainConfig gan_cfg = tiny_cfg(Variant::gan);
  TrainConfig roi_cfg = tiny_cfg(Variant::roigan_a);
  Trainer gan(gan_cfg), roi(roi_cfg);

  // align initial weights: copy the gan trainer's nets into the roigan ones
  {
    auto src_g = gan.global_generator().parameters();
    auto dst_g = roi.global_generator().parameters();
    REQUIRE(src_g.size() == dst_g.size());
    for (std::size_t i = 0; i < src_g.size(); ++i) {
      auto s = src_g[i]->tensor.value();
      auto d = dst_g[i]->tensor.value_mut();
      std::copy(s.begin(), s.end(), d.begin());
    }
    auto src_d = gan.global_discriminator()->parameters();
    auto dst_d = roi.global_discriminator()->parameters();
    REQUIRE(src_d.size() == dst_d.size());
    for (std::size_t i = 0; i < src_d.size(); ++i) {
      auto s = src_d[i]->tensor.value();
      auto d = dst_d[i]->tensor.value_mut();
      std::copy(s.begin(), s.end(), d.begin());
    }
  }
  for (int step = 0; step < 2; ++step) {
    auto la = gan.train_step({&stacks[0], &stacks[1]});
    auto lb = roi.train_step({&stacks[0], &stacks[1]});
    CHECK(std::abs(la.g_mse - lb.g_mse) < 1e-6);
    CHECK(std::abs(la.g_gan - lb.g_gan) < 1e-6);
    CHECK(std::abs(la.d_loss - lb.d_loss) < 1e-6);
  }
}

TEST_CASE("all roigan variants run with both generator kinds") {
  auto data = tiny_dataset(3, 23);
  for (Variant v : {Variant::roigan_a, Variant::roigan_b, Variant::roigan_c}) {
    for (GeneratorKind k : {GeneratorKind::fcnn, GeneratorKind::rfcnn}) {
      Trainer trainer(tiny_cfg(v, k));
      auto losses = trainer.train_step({&data.stacks[0]});
      CHECK(std::isfinite(losses.g_mse));
      CHECK(std::isfinite(losses.d_loss));
      // sharing invariant after the step
      auto a = trainer.local_generator()->decoder_block_params(1);
      auto b = trainer.global_generator().decoder_block_params(1);
      CHECK(a[0]->tensor.node() == b[0]->tensor.node());
    }
  }
}

TEST_CASE("roigan at distinct roi and full resolutions resizes streams") {
  auto data = gen_phantom_dataset(1, 128, 128, 8, 29);
  TrainConfig cfg = tiny_cfg(Variant::roigan_a);
  cfg.input_h = cfg.input_w = 128;
  cfg.roi_h = cfg.roi_w = 64;
  Trainer trainer(cfg);
  auto losses = trainer.train_step({&data[0]});
  CHECK(std::isfinite(losses.g_mse));
  CHECK(std::isfinite(losses.d_loss));
}

TEST_CASE("fit writes history, improves validation dice, reruns identically") {
  auto dir1 = temp_dir("fit1");
  auto dir2 = temp_dir("fit2");
  auto data = tiny_dataset(8, 7);
  TrainConfig cfg = tiny_cfg(Variant::plain);
  cfg.loss.use_gan = false;
  cfg.loss.use_l1 = false;
  cfg.epochs = 10;
  cfg.learning_rate = 1e-3;

  Trainer t1(cfg);
  auto res1 = t1.fit(data, dir1);
  REQUIRE(res1.history.size() == 10);
  CHECK(res1.history.back().val_dice_mean > res1.history.front().val_dice_mean);
  CHECK(res1.best_val_dice >= res1.history.front().val_dice_mean);

  Trainer t2(cfg);
  t2.fit(data, dir2);
  CHECK(file_bytes(dir1 / "history.csv") == file_bytes(dir2 / "history.csv"));
  CHECK(file_bytes(dir1 / "best.ckpt") == file_bytes(dir2 / "best.ckpt"));
  CHECK(file_bytes(dir1 / "last.ckpt") == file_bytes(dir2 / "last.ckpt"));
}

TEST_CASE("fit rejects empty splits") {
  Dataset data = tiny_dataset(4, 9);
  data.manifest.val.clear();
  Trainer trainer(tiny_cfg(Variant::plain, GeneratorKind::fcnn));
  CHECK_THROWS_AS(trainer.fit(data, temp_dir("fit_empty")), TrainError);
}

TEST_CASE("epoch history has one row per epoch") {
  auto data = tiny_dataset(8, 13);
  TrainConfig cfg = tiny_cfg(Variant::plain);
  cfg.loss.use_gan = false;
  cfg.epochs = 1;
  Trainer trainer(cfg);
  auto res = trainer.fit(data, temp_dir("fit_one"));
  REQUIRE(res.history.size() == 1);
  CHECK(res.history[0].epoch == 1);
  CHECK(std::isfinite(res.history[0].val_dice_mean));
}

TEST_CASE("checkpoint round trip and resume-vs-continuous equivalence") {
  auto dir = temp_dir("ckpt");
  auto data = tiny_dataset(4, 19);
  TrainConfig cfg = tiny_cfg(Variant::gan);

  Trainer continuous(cfg);
  Trainer resumable(cfg);
  std::vector<const PhantomStack*> batch{&data.stacks[0], &data.stacks[1]};
  for (int i = 0; i < 2; ++i) {
    continuous.train_step(batch);
    resumable.train_step(batch);
  }
  resumable.save_checkpoint(dir / "mid.ckpt");

  // bitwise save-load-save round trip
  Trainer reloaded(cfg);
  reloaded.load_checkpoint(dir / "mid.ckpt");
  reloaded.save_checkpoint(dir / "mid2.ckpt");
  CHECK(file_bytes(dir / "mid.ckpt") == file_bytes(dir / "mid2.ckpt"));

  // three further steps agree bitwise with the uninterrupted run
  for (int i = 0; i < 3; ++i) {
    continuous.train_step(batch);
    reloaded.train_step(batch);
  }
  CHECK(param_snapshot(continuous.global_generator()) ==
        param_snapshot(reloaded.global_generator()));

  // corrupted magic is rejected
  auto bytes = file_bytes(dir / "mid.ckpt");
  bytes[0] = 'X';
  std::ofstream(dir / "bad.ckpt", std::ios::binary) << bytes;
  Trainer victim(cfg);
  CHECK_THROWS_WITH_AS(victim.load_checkpoint(dir / "bad.ckpt"),
                       doctest::Contains("magic"), IoError);

  // config mismatch is rejected
  TrainConfig other = cfg;
  other.learning_rate = 1e-3;
  Trainer mismatched(other);
  CHECK_THROWS_WITH_AS(mismatched.load_checkpoint(dir / "mid.ckpt"),
                       doctest::Contains("config"), IoError);

  // reconstruction from the embedded config snapshot
  Trainer from_file = Trainer::from_checkpoint(dir / "mid.ckpt");
  CHECK(param_snapshot(from_file.global_generator()) ==
        param_snapshot(resumable.global_generator()));
}

TEST_CASE("the 14-row ablation grid is expressible by config alone") {
  // plain / gan with and without l1, times two generator kinds, plus the
  // three coupled variants times two kinds
  int built = 0;
  for (GeneratorKind k : {GeneratorKind::fcnn, GeneratorKind::rfcnn}) {
    for (bool l1 : {false, true}) {
      for (Variant v : {Variant::plain, Variant::gan}) {
        TrainConfig cfg = tiny_cfg(v, k);
        cfg.loss.use_l1 = l1;
        cfg.loss.use_gan = v != Variant::plain;
        Trainer trainer(cfg);
        ++built;
      }
    }
    for (Variant v : {Variant::roigan_a, Variant::roigan_b, Variant::roigan_c}) {
      TrainConfig cfg = tiny_cfg(v, k);
      cfg.loss.use_l1 = true;
      Trainer trainer(cfg);
      ++built;
    }
  }
  CHECK(built == 14);
}

TEST_CASE("run config rejects unknown keys and round-trips train configs") {
  RunConfig rc;
  CHECK_THROWS_AS(rc.set("no_such_key", "1"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("epochs: 3\n"), ConfigError);

  rc.set("variant", "roigan_b");
  rc.set("generator", "rfcnn");
  rc.set("epochs", "4");
  rc.set("gen_widths", "4,8,8,8,8,8");
  auto cfg = rc.to_train_config();
  CHECK(cfg.variant == Variant::roigan_b);
  CHECK(cfg.generator_kind == GeneratorKind::rfcnn);
  CHECK(cfg.loss.use_gan);  // auto resolves by variant

  const std::string text = to_config_text(cfg);
  auto cfg2 = RunConfig::from_text(text).to_train_config();
  CHECK(to_config_text(cfg2) == text);

  TrainConfig bad;
  bad.variant = Variant::plain;
  bad.loss.use_gan = true;
  CHECK_THROWS_AS(bad.validate(), TrainError);
}
