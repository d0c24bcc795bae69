#pragma once

#include <filesystem>
#include <memory>
#include <optional>

#include "rvseg/data.hpp"
#include "rvseg/losses.hpp"
#include "rvseg/metrics.hpp"
#include "rvseg/nets.hpp"
#include "rvseg/optim.hpp"

namespace rvseg {

class TrainError : public std::runtime_error {
 public:
  explicit TrainError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class Variant { plain, gan, roigan_a, roigan_b, roigan_c };
enum class GeneratorKind { fcnn, rfcnn };

const char* variant_name(Variant v);
const char* generator_kind_name(GeneratorKind k);
Variant variant_from_name(const std::string& name);
GeneratorKind generator_kind_from_name(const std::string& name);

struct TrainConfig {
  Variant variant = Variant::plain;
  GeneratorKind generator_kind = GeneratorKind::fcnn;
  LossConfig loss;
  double learning_rate = 2e-4;
  double adam_beta1 = 0.5, adam_beta2 = 0.999;
  int epochs = 1;
  int batch_stacks = 1;
  std::uint64_t seed = 0;
  std::int64_t input_h = 64, input_w = 64;
  std::int64_t roi_h = 64, roi_w = 64;
  std::int64_t roi_margin = 4;
  std::array<std::int64_t, 6> gen_widths{64, 128, 256, 512, 512, 512};
  std::array<std::int64_t, 5> disc_widths{64, 128, 256, 512, 512};
  double noise_dropout_p = 0.5;
  NoiseMode noise_mode = NoiseMode::dropout;
  double noise_sigma = 0.1;
  std::int64_t gru_kernel = 3;
  bool disc_condition_on_image = false;
  std::set<int> shared_gen_layers{1, 2, 3};
  std::set<int> shared_disc_layers{1, 2, 3};
  // adversarial term in the generator passes of the sequential ROI coupling
  bool roigan_gan_term_in_gen_steps = true;

  void validate() const;
  bool is_roigan() const {
    return variant == Variant::roigan_a || variant == Variant::roigan_b ||
           variant == Variant::roigan_c;
  }
  bool has_discriminator() const { return variant != Variant::plain; }
};

struct StepLosses {
  double d_loss = 0, g_mse = 0, g_gan = 0, g_l1 = 0;
};

struct EpochRow {
  int epoch = 0;
  double train_mse = 0, train_gan_g = 0, train_gan_d = 0, train_l1 = 0;
  double val_dice_mean = 0;
};

struct Dataset {
  std::vector<PhantomStack> stacks;
  DatasetManifest manifest;

  const PhantomStack& by_id(const std::string& id) const;
};

Dataset load_dataset(const std::filesystem::path& dir);

struct FitResult {
  std::vector<EpochRow> history;
  int best_epoch = 0;
  double best_val_dice = 0;
};

void write_history_csv(const std::vector<EpochRow>& history,
                       const std::filesystem::path& path);

// Owns the networks, optimizers and RNG of one training run. One training
// thread mutates state; evaluation helpers run between steps.
class Trainer {
 public:
  explicit Trainer(TrainConfig cfg);

  const TrainConfig& config() const { return cfg_; }

  // One optimizer round over a batch of whole base-to-apex stacks:
  // generator pass(es) first (local then global for the coupled variants),
  // discriminator update(s) last.
  StepLosses train_step(const std::vector<const PhantomStack*>& batch);

  // Epoch loop with per-epoch validation Dice, history rows and
  // best/last checkpoints written under out_dir.
  FitResult fit(const Dataset& data, const std::filesystem::path& out_dir);

  // Eval-mode forward of the (global) generator, thresholded at 0.5.
  MaskStack predict(const SliceStack& stack);
  double mean_dice(const Dataset& data, const std::vector<std::string>& ids);

  void save_checkpoint(const std::filesystem::path& path) const;
  void load_checkpoint(const std::filesystem::path& path);
  static Trainer from_checkpoint(const std::filesystem::path& path);

  Generator<float>& global_generator() { return *global_gen_; }
  Generator<float>* local_generator() { return local_gen_.get(); }
  Discriminator<float>* global_discriminator() { return global_disc_.get(); }
  Discriminator<float>* local_discriminator() { return local_disc_.get(); }
  int epoch() const { return epoch_; }

 private:
  struct RoiBatch {
    Tensor<float> images, masks;  // [S',1,roi_h,roi_w]; undefined when empty
  };
  RoiBatch make_roi_batch(const PhantomStack& stack) const;
  void generator_phase(Generator<float>& gen, Adam<float>& opt,
                       Discriminator<float>* disc_for_term, bool resize_to_full,
                       const std::vector<Tensor<float>>& xs,
                       const std::vector<Tensor<float>>& ys, StepLosses* accum,
                       std::vector<Tensor<float>>& fakes_out);
  double discriminator_phase(Discriminator<float>& disc, Adam<float>& opt,
                             const std::vector<Tensor<float>>& reals,
                             const std::vector<Tensor<float>>& fakes,
                             const std::vector<Tensor<float>>& real_images,
                             const std::vector<Tensor<float>>& fake_images);
  Tensor<float> disc_score(Discriminator<float>& disc, const Tensor<float>& masks,
                           const Tensor<float>& images);

  TrainConfig cfg_;
  Rng train_rng_;
  int epoch_ = 0;
  double best_val_dice_ = -1.0;
  int best_epoch_ = 0;

  std::unique_ptr<Generator<float>> local_gen_;  // coupled variants only
  std::unique_ptr<Generator<float>> global_gen_;
  std::unique_ptr<Discriminator<float>> local_disc_;
  std::unique_ptr<Discriminator<float>> global_disc_;
  std::unique_ptr<Adam<float>> local_gen_opt_, global_gen_opt_;
  std::unique_ptr<Adam<float>> local_disc_opt_, global_disc_opt_;
};

}  // namespace rvseg
