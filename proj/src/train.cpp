#include "rvseg/train.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>

#include "rvseg/checkpoint.hpp"
#include "rvseg/config.hpp"

namespace rvseg {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::plain: return "plain";
    case Variant::gan: return "gan";
    case Variant::roigan_a: return "roigan_a";
    case Variant::roigan_b: return "roigan_b";
    case Variant::roigan_c: return "roigan_c";
  }
  return "?";
}

const char* generator_kind_name(GeneratorKind k) {
  return k == GeneratorKind::fcnn ? "fcnn" : "rfcnn";
}

Variant variant_from_name(const std::string& name) {
  for (Variant v : {Variant::plain, Variant::gan, Variant::roigan_a, Variant::roigan_b,
                    Variant::roigan_c})
    if (name == variant_name(v)) return v;
  throw TrainError("unknown variant '" + name + "'");
}

GeneratorKind generator_kind_from_name(const std::string& name) {
  if (name == "fcnn") return GeneratorKind::fcnn;
  if (name == "rfcnn") return GeneratorKind::rfcnn;
  throw TrainError("unknown generator kind '" + name + "'");
}

void TrainConfig::validate() const {
  loss.validate();
  if (learning_rate <= 0) throw TrainError("learning_rate must be positive");
  if (epochs < 1) throw TrainError("epochs must be at least 1");
  if (batch_stacks < 1) throw TrainError("batch_stacks must be at least 1");
  if (input_h % 64 != 0 || input_w % 64 != 0 || input_h < 64 || input_w < 64)
    throw TrainError("input size must be divisible by 64");
  if (roi_h % 64 != 0 || roi_w % 64 != 0 || roi_h < 64 || roi_w < 64)
    throw TrainError("roi size must be divisible by 64");
  if (roi_margin < 0) throw TrainError("roi_margin must be non-negative");
  if (variant == Variant::plain && loss.use_gan)
    throw TrainError("variant plain has no discriminator; set use_gan=false");
  for (int idx : shared_gen_layers)
    if (idx < 1 || idx > 6)
      throw TrainError("shared generator layer index " + std::to_string(idx) +
                       " outside 1..6");
  for (int idx : shared_disc_layers)
    if (idx < 1 || idx > 5)
      throw TrainError("shared discriminator layer index " + std::to_string(idx) +
                       " outside 1..5");
}

const PhantomStack& Dataset::by_id(const std::string& id) const {
  for (const auto& s : stacks)
    if (s.image.id == id) return s;
  throw TrainError("stack id '" + id + "' not present in the dataset");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset data;
  data.manifest = load_manifest(dir / "manifest.txt");
  auto load_ids = [&](const std::vector<std::string>& ids) {
    for (const auto& id : ids) {
      auto [stack, mask] = stack_io_load(dir / (id + ".rvs"));
      data.stacks.push_back({std::move(stack), std::move(mask)});
    }
  };
  load_ids(data.manifest.train);
  load_ids(data.manifest.val);
  load_ids(data.manifest.test);
  return data;
}

void write_history_csv(const std::vector<EpochRow>& history,
                       const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write history " + path.string());
  f << "epoch,train_mse,train_gan_g,train_gan_d,train_l1,val_dice_mean\n";
  char buf[200];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.epoch, r.train_mse,
                  r.train_gan_g, r.train_gan_d, r.train_l1, r.val_dice_mean);
    f << buf;
  }
  if (!f) throw IoError("write failure on history " + path.string());
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

Trainer::Trainer(TrainConfig cfg)
    : cfg_(std::move(cfg)), train_rng_(Rng::derive(cfg_.seed, 0x7452414e)) {
  cfg_.validate();
  Rng build_rng(cfg_.seed);

  GeneratorSpec gspec;
  gspec.in_channels = 1;
  gspec.block_widths = cfg_.gen_widths;
  gspec.recurrent = cfg_.generator_kind == GeneratorKind::rfcnn;
  gspec.noise_dropout_p = cfg_.noise_dropout_p;
  gspec.noise_mode = cfg_.noise_mode;
  gspec.noise_sigma = cfg_.noise_sigma;
  gspec.gru_kernel = cfg_.gru_kernel;

  // fixed construction order keeps seeded initialization reproducible:
  // local generator, global generator, local discriminator, global one
  if (cfg_.is_roigan()) {
    GeneratorSpec local = gspec;
    local.input_h = cfg_.roi_h;
    local.input_w = cfg_.roi_w;
    local_gen_ = std::make_unique<Generator<float>>(local, build_rng);
  }
  gspec.input_h = cfg_.input_h;
  gspec.input_w = cfg_.input_w;
  global_gen_ = std::make_unique<Generator<float>>(gspec, build_rng);

  if (cfg_.is_roigan()) {
    SharingSpec sharing;
    sharing.generator_shared_layers = cfg_.shared_gen_layers;
    link_shared_parameters(*local_gen_, *global_gen_, sharing);
  }

  if (cfg_.has_discriminator()) {
    DiscriminatorSpec dspec;
    dspec.in_channels = 1;
    dspec.widths = cfg_.disc_widths;
    dspec.condition_on_image = cfg_.disc_condition_on_image;
    if (cfg_.variant == Variant::roigan_b || cfg_.variant == Variant::roigan_c) {
      DiscriminatorSpec local = dspec;
      local.input_h = cfg_.roi_h;
      local.input_w = cfg_.roi_w;
      local_disc_ = std::make_unique<Discriminator<float>>(local, build_rng);
    }
    dspec.input_h = cfg_.input_h;
    dspec.input_w = cfg_.input_w;
    global_disc_ = std::make_unique<Discriminator<float>>(dspec, build_rng);
    if (cfg_.variant == Variant::roigan_c) {
      SharingSpec sharing;
      sharing.discriminator_shared_layers = cfg_.shared_disc_layers;
      link_shared_parameters(*local_disc_, *global_disc_, sharing);
    }
  }

  const auto lr = static_cast<float>(cfg_.learning_rate);
  const auto b1 = static_cast<float>(cfg_.adam_beta1);
  const auto b2 = static_cast<float>(cfg_.adam_beta2);
  if (local_gen_) local_gen_opt_ = std::make_unique<Adam<float>>(local_gen_->parameters(), lr, b1, b2);
  global_gen_opt_ = std::make_unique<Adam<float>>(global_gen_->parameters(), lr, b1, b2);
  if (local_disc_) local_disc_opt_ = std::make_unique<Adam<float>>(local_disc_->parameters(), lr, b1, b2);
  if (global_disc_) global_disc_opt_ = std::make_unique<Adam<float>>(global_disc_->parameters(), lr, b1, b2);
}

Trainer::RoiBatch Trainer::make_roi_batch(const PhantomStack& stack) const {
  std::vector<float> imgs, msks;
  std::int64_t count = 0;
  for (std::int64_t s = 0; s < stack.mask.slices; ++s) {
    const auto box = extract_roi(stack.mask, s, cfg_.roi_margin);
    if (!box) continue;  // empty slices stay out of the local stream
    auto img = crop_resize_image(stack.image.slice(s), stack.image.height,
                                 stack.image.width, *box, cfg_.roi_h, cfg_.roi_w);
    auto msk = crop_resize_mask(stack.mask.slice(s), stack.mask.height, stack.mask.width,
                                *box, cfg_.roi_h, cfg_.roi_w);
    imgs.insert(imgs.end(), img.begin(), img.end());
    for (std::uint8_t v : msk) msks.push_back(static_cast<float>(v));
    ++count;
  }
  RoiBatch out;
  // batch statistics need at least two slices; a thinner stack is skipped
  if (count < 2) return out;
  out.images = Tensor<float>::from_data({count, 1, cfg_.roi_h, cfg_.roi_w}, std::move(imgs));
  out.masks = Tensor<float>::from_data({count, 1, cfg_.roi_h, cfg_.roi_w}, std::move(msks));
  return out;
}

Tensor<float> Trainer::disc_score(Discriminator<float>& disc, const Tensor<float>& masks,
                                  const Tensor<float>& images) {
  if (cfg_.disc_condition_on_image) return disc.forward_conditioned(masks, images, Mode::train);
  return disc.forward(masks, Mode::train);
}

void Trainer::generator_phase(Generator<float>& gen, Adam<float>& opt,
                              Discriminator<float>* disc_for_term, bool resize_to_full,
                              const std::vector<Tensor<float>>& xs,
                              const std::vector<Tensor<float>>& ys, StepLosses* accum,
                              std::vector<Tensor<float>>& fakes_out) {
  gen.zero_grad();
  const auto inv_batch = static_cast<float>(1.0 / static_cast<double>(xs.size()));
  const bool gan_active = cfg_.loss.use_gan && disc_for_term != nullptr &&
                          (!cfg_.is_roigan() || cfg_.roigan_gan_term_in_gen_steps);
  LossConfig loss_cfg = cfg_.loss;
  loss_cfg.use_gan = gan_active;

  for (std::size_t i = 0; i < xs.size(); ++i) {
    Tensor<float> fake = gen.forward(xs[i], Mode::train, &train_rng_);
    auto mse = mse_loss(fake, ys[i]);
    auto l1 = l1_loss(fake, ys[i], static_cast<float>(cfg_.loss.beta));
    Tensor<float> gan_term = Tensor<float>::zeros({1});
    if (gan_active) {
      Tensor<float> dmask = fake, dimg = xs[i];
      if (resize_to_full && (cfg_.roi_h != cfg_.input_h || cfg_.roi_w != cfg_.input_w)) {
        dmask = resize_nearest(fake, cfg_.input_h, cfg_.input_w);
        if (cfg_.disc_condition_on_image)
          dimg = resize_bilinear(xs[i], cfg_.input_h, cfg_.input_w);
      }
      gan_term = gan_loss_generator(disc_score(*disc_for_term, dmask, dimg),
                                    cfg_.loss.literal_generator_loss);
    }
    auto total = total_loss(mse, gan_term, l1, loss_cfg);
    backward(scale(total, inv_batch));
    if (accum) {
      accum->g_mse += mse.item();
      accum->g_l1 += l1.item();
      if (gan_active) accum->g_gan += gan_term.item();
    }
    fakes_out.push_back(detach(fake));
  }
  opt.step();
}

double Trainer::discriminator_phase(Discriminator<float>& disc, Adam<float>& opt,
                                    const std::vector<Tensor<float>>& reals,
                                    const std::vector<Tensor<float>>& fakes,
                                    const std::vector<Tensor<float>>& real_images,
                                    const std::vector<Tensor<float>>& fake_images) {
  disc.zero_grad();
  const auto inv = static_cast<float>(1.0 / static_cast<double>(reals.size()));
  double total = 0;
  for (std::size_t i = 0; i < reals.size(); ++i) {
    auto d_real = disc_score(disc, reals[i], real_images[i]);
    auto d_fake = disc_score(disc, fakes[i], fake_images[i]);
    auto loss = gan_loss_discriminator(d_real, d_fake);
    backward(scale(loss, inv));
    total += loss.item();
  }
  opt.step();
  return total / static_cast<double>(reals.size());
}

StepLosses Trainer::train_step(const std::vector<const PhantomStack*>& batch) {
  if (batch.empty()) throw TrainError("train_step: empty batch");
  StepLosses out;

  std::vector<Tensor<float>> xs_full, ys_full;
  for (const PhantomStack* ps : batch) {
    xs_full.push_back(stack_to_tensor<float>(ps->image));
    ys_full.push_back(mask_to_tensor<float>(ps->mask));
  }

  if (!cfg_.is_roigan()) {
    std::vector<Tensor<float>> fakes;
    generator_phase(*global_gen_, *global_gen_opt_,
                    cfg_.loss.use_gan ? global_disc_.get() : nullptr,
                    /*resize_to_full=*/false, xs_full, ys_full, &out, fakes);
    if (global_disc_)
      out.d_loss = discriminator_phase(*global_disc_, *global_disc_opt_, ys_full, fakes,
                                       xs_full, xs_full);
  } else {
    // sequential coupling: local generator on ROI crops, the shared decoder
    // parameters carry the update into the global generator, global
    // generator pass, then the discriminator step(s)
    std::vector<Tensor<float>> xs_roi, ys_roi;
    for (const PhantomStack* ps : batch) {
      RoiBatch rb = make_roi_batch(*ps);
      if (!rb.images.defined()) continue;
      xs_roi.push_back(rb.images);
      ys_roi.push_back(rb.masks);
    }
    Discriminator<float>* local_term_disc =
        cfg_.variant == Variant::roigan_a ? global_disc_.get() : local_disc_.get();
    std::vector<Tensor<float>> fakes_roi, fakes_full;
    if (!xs_roi.empty())
      generator_phase(*local_gen_, *local_gen_opt_, local_term_disc,
                      /*resize_to_full=*/cfg_.variant == Variant::roigan_a, xs_roi, ys_roi,
                      nullptr, fakes_roi);
    generator_phase(*global_gen_, *global_gen_opt_, global_disc_.get(),
                    /*resize_to_full=*/false, xs_full, ys_full, &out, fakes_full);

    if (cfg_.variant == Variant::roigan_a) {
      std::vector<Tensor<float>> reals = ys_full, fakes = fakes_full;
      std::vector<Tensor<float>> rimgs = xs_full, fimgs = xs_full;
      const bool needs_resize = cfg_.roi_h != cfg_.input_h || cfg_.roi_w != cfg_.input_w;
      for (std::size_t i = 0; i < xs_roi.size(); ++i) {
        auto to_full_mask = [&](const Tensor<float>& t) {
          return needs_resize ? resize_nearest(t, cfg_.input_h, cfg_.input_w) : t;
        };
        reals.push_back(to_full_mask(ys_roi[i]));
        fakes.push_back(to_full_mask(fakes_roi[i]));
        auto img = needs_resize && cfg_.disc_condition_on_image
                       ? resize_bilinear(xs_roi[i], cfg_.input_h, cfg_.input_w)
                       : (needs_resize ? Tensor<float>() : xs_roi[i]);
        if (!img.defined()) img = xs_roi[i];  // only consulted when conditioning
        rimgs.push_back(img);
        fimgs.push_back(img);
      }
      out.d_loss =
          discriminator_phase(*global_disc_, *global_disc_opt_, reals, fakes, rimgs, fimgs);
    } else {
      double d_acc = 0;
      int d_count = 0;
      if (!xs_roi.empty()) {
        d_acc += discriminator_phase(*local_disc_, *local_disc_opt_, ys_roi, fakes_roi,
                                     xs_roi, xs_roi);
        ++d_count;
      }
      d_acc += discriminator_phase(*global_disc_, *global_disc_opt_, ys_full, fakes_full,
                                   xs_full, xs_full);
      ++d_count;
      out.d_loss = d_acc / d_count;
    }
  }

  const auto n = static_cast<double>(batch.size());
  out.g_mse /= n;
  out.g_gan /= n;
  out.g_l1 /= n;
  if (!std::isfinite(out.g_mse) || !std::isfinite(out.g_gan) || !std::isfinite(out.g_l1) ||
      !std::isfinite(out.d_loss))
    throw TrainError("non-finite loss encountered in training step");
  return out;
}

MaskStack Trainer::predict(const SliceStack& stack) {
  auto x = stack_to_tensor<float>(stack);
  auto probs = global_gen_->forward(x, Mode::eval);
  MaskStack out;
  out.id = stack.id;
  out.slices = stack.slices;
  out.height = stack.height;
  out.width = stack.width;
  out.voxels.resize(stack.voxels.size());
  const auto pv = probs.value();
  for (std::size_t i = 0; i < out.voxels.size(); ++i)
    out.voxels[i] = pv[i] >= 0.5f ? 1 : 0;
  return out;
}

double Trainer::mean_dice(const Dataset& data, const std::vector<std::string>& ids) {
  double acc = 0;
  std::int64_t count = 0;
  for (const auto& id : ids) {
    const PhantomStack& ps = data.by_id(id);
    MaskStack pred = predict(ps.image);
    const std::int64_t plane = ps.mask.height * ps.mask.width;
    for (std::int64_t s = 0; s < ps.mask.slices; ++s) {
      acc += dice({pred.slice(s), static_cast<std::size_t>(plane)},
                  {ps.mask.slice(s), static_cast<std::size_t>(plane)});
      ++count;
    }
  }
  if (count == 0) throw TrainError("mean_dice: no slices to evaluate");
  return acc / static_cast<double>(count);
}

FitResult Trainer::fit(const Dataset& data, const std::filesystem::path& out_dir) {
  if (data.manifest.train.empty()) throw TrainError("fit: empty train split");
  if (data.manifest.val.empty()) throw TrainError("fit: empty val split");
  std::filesystem::create_directories(out_dir);

  FitResult res;
  res.best_epoch = best_epoch_;
  res.best_val_dice = best_val_dice_;
  for (int e = epoch_ + 1; e <= cfg_.epochs; ++e) {
    auto ids = data.manifest.train;
    Rng order_rng = Rng::derive(cfg_.seed, 0xE0000u + static_cast<std::uint64_t>(e));
    for (std::size_t i = ids.size(); i > 1; --i)
      std::swap(ids[i - 1], ids[order_rng.uniform_int(i)]);

    StepLosses epoch_acc;
    int batches = 0;
    for (std::size_t off = 0; off < ids.size(); off += cfg_.batch_stacks) {
      std::vector<const PhantomStack*> batch;
      for (std::size_t j = off; j < std::min(ids.size(), off + cfg_.batch_stacks); ++j)
        batch.push_back(&data.by_id(ids[j]));
      StepLosses step = train_step(batch);
      epoch_acc.d_loss += step.d_loss;
      epoch_acc.g_mse += step.g_mse;
      epoch_acc.g_gan += step.g_gan;
      epoch_acc.g_l1 += step.g_l1;
      ++batches;
    }
    EpochRow row;
    row.epoch = e;
    row.train_mse = epoch_acc.g_mse / batches;
    row.train_gan_g = epoch_acc.g_gan / batches;
    row.train_gan_d = epoch_acc.d_loss / batches;
    row.train_l1 = epoch_acc.g_l1 / batches;
    row.val_dice_mean = mean_dice(data, data.manifest.val);
    epoch_ = e;
    res.history.push_back(row);
    if (row.val_dice_mean > best_val_dice_) {
      best_val_dice_ = row.val_dice_mean;
      best_epoch_ = e;
      save_checkpoint(out_dir / "best.ckpt");
    }
    save_checkpoint(out_dir / "last.ckpt");
    write_history_csv(res.history, out_dir / "history.csv");
  }
  res.best_epoch = best_epoch_;
  res.best_val_dice = best_val_dice_;
  return res;
}

// ---------------------------------------------------------------------------
// checkpointing
// ---------------------------------------------------------------------------

namespace {

std::vector<std::uint32_t> shape_u32(const Shape& s) {
  std::vector<std::uint32_t> out;
  for (auto d : s) out.push_back(static_cast<std::uint32_t>(d));
  return out;
}

}  // namespace

struct NetRef {
  std::string prefix;
  std::vector<Parameter<float>*> params;
  std::vector<NamedBuffer<float>> buffers;
  Adam<float>* opt;
};

static std::vector<NetRef> trainer_registry(const TrainConfig& cfg, Generator<float>* local_gen,
                                     Generator<float>* global_gen,
                                     Discriminator<float>* local_disc,
                                     Discriminator<float>* global_disc,
                                     Adam<float>* local_gen_opt, Adam<float>* global_gen_opt,
                                     Adam<float>* local_disc_opt,
                                     Adam<float>* global_disc_opt) {
  std::vector<NetRef> nets;
  const bool roigan = cfg.variant == Variant::roigan_a ||
                      cfg.variant == Variant::roigan_b || cfg.variant == Variant::roigan_c;
  if (local_gen)
    nets.push_back({"local_gen", local_gen->parameters(), local_gen->buffers(), local_gen_opt});
  nets.push_back({roigan ? "global_gen" : "gen", global_gen->parameters(),
                  global_gen->buffers(), global_gen_opt});
  if (local_disc)
    nets.push_back({"local_disc", local_disc->parameters(), local_disc->buffers(),
                    local_disc_opt});
  if (global_disc)
    nets.push_back({cfg.variant == Variant::roigan_b || cfg.variant == Variant::roigan_c
                        ? "global_disc"
                        : "disc",
                    global_disc->parameters(), global_disc->buffers(), global_disc_opt});
  return nets;
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  auto* self = const_cast<Trainer*>(this);
  std::vector<ckpt::Entry> entries;
  entries.push_back(ckpt::make_bytes("meta/config", to_config_text(cfg_)));
  entries.push_back(ckpt::make_i64("meta/epoch", epoch_));
  entries.push_back(ckpt::make_u64("meta/rng", train_rng_.state()));
  entries.push_back(ckpt::make_f64("meta/best_val_dice", {&best_val_dice_, 1}));
  entries.push_back(ckpt::make_i64("meta/best_epoch", best_epoch_));

  auto nets = trainer_registry(cfg_, self->local_gen_.get(), self->global_gen_.get(),
                               self->local_disc_.get(), self->global_disc_.get(),
                               self->local_gen_opt_.get(), self->global_gen_opt_.get(),
                               self->local_disc_opt_.get(), self->global_disc_opt_.get());
  for (auto& net : nets) {
    for (auto* p : net.params)
      entries.push_back(ckpt::make_f32("param/" + net.prefix + "/" + p->name,
                                       p->tensor.value(), shape_u32(p->tensor.shape())));
    for (auto& b : net.buffers)
      entries.push_back(ckpt::make_f32(
          "buffer/" + net.prefix + "/" + b.name, *b.data,
          {static_cast<std::uint32_t>(b.data->size())}));
  }
  for (auto& net : nets) {
    if (!net.opt) continue;
    entries.push_back(ckpt::make_i64("opt/" + net.prefix + "/t", net.opt->step_count()));
    for (auto& slot : net.opt->slots()) {
      const auto shp = shape_u32(slot.param->tensor.shape());
      entries.push_back(
          ckpt::make_f32("opt/" + net.prefix + "/" + slot.param->name + "/m", slot.m, shp));
      entries.push_back(
          ckpt::make_f32("opt/" + net.prefix + "/" + slot.param->name + "/v", slot.v, shp));
    }
  }
  ckpt::write_file(path, entries);
}

void Trainer::load_checkpoint(const std::filesystem::path& path) {
  auto entries = ckpt::read_file(path);
  std::map<std::string, const ckpt::Entry*> index;
  for (const auto& e : entries) index[e.name] = &e;
  std::map<std::string, bool> consumed;
  for (const auto& e : entries) consumed[e.name] = false;

  auto take = [&](const std::string& name) -> const ckpt::Entry& {
    auto it = index.find(name);
    if (it == index.end())
      throw IoError(path.string() + ": missing checkpoint entry " + name);
    consumed[name] = true;
    return *it->second;
  };

  const std::string want_cfg = to_config_text(cfg_);
  const std::string have_cfg = take("meta/config").payload;
  if (have_cfg != want_cfg)
    throw IoError(path.string() +
                  ": checkpoint config does not match this trainer's config");
  epoch_ = static_cast<int>(ckpt::as_i64_scalar(take("meta/epoch")));
  train_rng_.set_state(ckpt::as_u64_scalar(take("meta/rng")));
  best_val_dice_ = ckpt::as_f64_scalar(take("meta/best_val_dice"));
  best_epoch_ = static_cast<int>(ckpt::as_i64_scalar(take("meta/best_epoch")));

  auto nets = trainer_registry(cfg_, local_gen_.get(), global_gen_.get(),
                               local_disc_.get(), global_disc_.get(), local_gen_opt_.get(),
                               global_gen_opt_.get(), local_disc_opt_.get(),
                               global_disc_opt_.get());
  auto fill_f32 = [&](const std::string& name, std::span<float> dst) {
    const auto& e = take(name);
    const auto vals = ckpt::as_f32(e);
    if (vals.size() != dst.size())
      throw IoError(path.string() + ": shape mismatch for entry " + name + " (" +
                    std::to_string(vals.size()) + " vs " + std::to_string(dst.size()) +
                    " values)");
    std::copy(vals.begin(), vals.end(), dst.begin());
  };
  for (auto& net : nets) {
    for (auto* p : net.params)
      fill_f32("param/" + net.prefix + "/" + p->name, p->tensor.value_mut());
    for (auto& b : net.buffers)
      fill_f32("buffer/" + net.prefix + "/" + b.name, *b.data);
  }
  for (auto& net : nets) {
    if (!net.opt) continue;
    net.opt->set_step_count(ckpt::as_i64_scalar(take("opt/" + net.prefix + "/t")));
    for (auto& slot : net.opt->slots()) {
      fill_f32("opt/" + net.prefix + "/" + slot.param->name + "/m", slot.m);
      fill_f32("opt/" + net.prefix + "/" + slot.param->name + "/v", slot.v);
    }
  }
  for (const auto& [name, used] : consumed)
    if (!used)
      throw IoError(path.string() + ": unexpected checkpoint entry " + name);
}

Trainer Trainer::from_checkpoint(const std::filesystem::path& path) {
  auto entries = ckpt::read_file(path);
  const ckpt::Entry* cfg_entry = nullptr;
  for (const auto& e : entries)
    if (e.name == "meta/config") cfg_entry = &e;
  if (!cfg_entry) throw IoError(path.string() + ": missing checkpoint entry meta/config");
  RunConfig rc = RunConfig::from_text(cfg_entry->payload);
  Trainer trainer(rc.to_train_config());
  trainer.load_checkpoint(path);
  return trainer;
}

}  // namespace rvseg
