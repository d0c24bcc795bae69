#include "rvseg/checks.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "rvseg/gradcheck.hpp"
#include "rvseg/losses.hpp"
#include "rvseg/metrics.hpp"
#include "rvseg/train.hpp"

namespace rvseg::checks {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

Tensor<double> rand_tensor(Shape shape, Rng& rng, double lo, double hi,
                           bool requires_grad = true) {
  auto t = Tensor<double>::zeros(std::move(shape), requires_grad);
  for (auto& v : t.value_mut()) v = rng.uniform(lo, hi);
  return t;
}

void add_fd_check(SuiteResult& suite, const std::string& name,
                  const std::function<Tensor<double>()>& loss,
                  const std::vector<Tensor<double>>& leaves, double bound,
                  double step = 1e-5) {
  GradCheckOptions opts;
  opts.step = step;
  const auto rep = gradcheck(loss, leaves, opts);
  suite.lines.push_back({name, rep.max_rel_error < bound,
                         "max rel err " + fmt(rep.max_rel_error) + " (bound " +
                             fmt(bound) + ")"});
}

}  // namespace

double dice_oracle(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  std::int64_t inter = 0, total = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] && b[i]) ++inter;
    total += a[i] + b[i];
  }
  if (total == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

double hausdorff_oracle(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b,
                        std::int64_t h, std::int64_t w, PixelSpacing spacing) {
  std::vector<std::pair<std::int64_t, std::int64_t>> pa, pb;
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x) {
      if (a[y * w + x]) pa.emplace_back(y, x);
      if (b[y * w + x]) pb.emplace_back(y, x);
    }
  if (pa.empty() && pb.empty()) return 0.0;
  if (pa.empty() || pb.empty()) return image_diagonal_mm(h, w, spacing);
  auto directed = [&](const auto& from, const auto& to) {
    double worst = 0;
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) {
        const double dy = static_cast<double>(p.first - q.first) * spacing.row_mm;
        const double dx = static_cast<double>(p.second - q.second) * spacing.col_mm;
        best = std::min(best, dy * dy + dx * dx);
      }
      worst = std::max(worst, best);
    }
    return std::sqrt(worst);
  };
  return std::max(directed(pa, pb), directed(pb, pa));
}

SuiteResult run_grad_suite() {
  SuiteResult suite{"grad", {}, 0};
  const auto t0 = Clock::now();
  Rng rng(20240601);

  {
    auto x = rand_tensor({2, 3, 8, 8}, rng, -1, 1);
    auto w = rand_tensor({4, 3, 3, 3}, rng, -0.5, 0.5);
    auto b = rand_tensor({4}, rng, -0.2, 0.2);
    add_fd_check(suite, "conv2d k3 s2 p1",
                 [&] { return mean(square(conv2d(x, w, b, 2, 1))); }, {x, w, b}, 1e-4);
  }
  {
    auto x = rand_tensor({1, 2, 9, 7}, rng, -1, 1);
    auto w = rand_tensor({3, 2, 4, 4}, rng, -0.5, 0.5);
    auto b = rand_tensor({3}, rng, -0.2, 0.2);
    add_fd_check(suite, "conv2d k4 s2 p1 odd extents",
                 [&] { return mean(square(conv2d(x, w, b, 2, 1))); }, {x, w, b}, 1e-4);
  }
  {
    auto x = rand_tensor({2, 3, 4, 4}, rng, -1, 1);
    auto w = rand_tensor({3, 2, 4, 4}, rng, -0.5, 0.5);
    auto b = rand_tensor({2}, rng, -0.2, 0.2);
    add_fd_check(suite, "conv_transpose2d k4 s2 p1",
                 [&] { return mean(square(conv_transpose2d(x, w, b, 2, 1))); }, {x, w, b},
                 1e-4);
  }
  {
    // adjoint identity over random exact-fit geometries
    double worst = 0;
    int tried = 0;
    Rng arng(77);
    while (tried < 100) {
      const auto c = 1 + static_cast<std::int64_t>(arng.uniform_int(3));
      const auto f = 1 + static_cast<std::int64_t>(arng.uniform_int(3));
      const auto k = 1 + static_cast<std::int64_t>(arng.uniform_int(4));
      const auto s = 1 + static_cast<std::int64_t>(arng.uniform_int(3));
      const auto p = static_cast<std::int64_t>(arng.uniform_int(static_cast<std::uint64_t>(k)));
      const auto steps = 1 + static_cast<std::int64_t>(arng.uniform_int(5));
      const std::int64_t h = k - 2 * p + s * steps;
      if (h < 1 || k > h + 2 * p) continue;
      ++tried;
      const std::int64_t oh = (h + 2 * p - k) / s + 1;
      auto x = rand_tensor({1, c, h, h}, arng, -1, 1, false);
      auto w = rand_tensor({f, c, k, k}, arng, -1, 1, false);
      auto y = rand_tensor({1, f, oh, oh}, arng, -1, 1, false);
      auto dot = [](const Tensor<double>& u, const Tensor<double>& v) {
        double acc = 0;
        for (std::size_t i = 0; i < u.value().size(); ++i)
          acc += u.value()[i] * v.value()[i];
        return acc;
      };
      const double lhs = dot(conv2d(x, w, Tensor<double>(), s, p), y);
      const double rhs = dot(x, conv_transpose2d(y, w, Tensor<double>(), s, p));
      worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
    }
    suite.lines.push_back({"conv/conv_transpose adjoint identity (100 geometries)",
                           worst < 1e-10, "max deviation " + fmt(worst)});
  }
  {
    auto x = rand_tensor({3, 2, 4, 4}, rng, -1, 1);
    auto g = rand_tensor({2}, rng, 0.5, 1.5);
    auto b = rand_tensor({2}, rng, -0.5, 0.5);
    add_fd_check(suite, "batch_norm train mode",
                 [&] {
                   RunningStats<double> rs;
                   rs.init(2);
                   return mean(square(batch_norm(x, g, b, rs, Mode::train)));
                 },
                 {x, g, b}, 1e-4);
  }
  {
    auto x = Tensor<double>::zeros({30}, true);
    Rng arng(5);
    for (auto& v : x.value_mut())
      v = arng.uniform(0.1, 1.5) * (arng.uniform() < 0.5 ? -1.0 : 1.0);
    add_fd_check(suite, "relu", [&] { return mean(square(relu(x))); }, {x}, 1e-4);
    add_fd_check(suite, "leaky_relu(0.2)",
                 [&] { return mean(square(leaky_relu(x, 0.2))); }, {x}, 1e-4);
    add_fd_check(suite, "sigmoid", [&] { return mean(square(sigmoid(x))); }, {x}, 1e-4);
    add_fd_check(suite, "tanh", [&] { return mean(square(tanh_op(x))); }, {x}, 1e-4);
  }
  {
    auto x = rand_tensor({2, 2, 3, 3}, rng, 0.2, 2.0);
    Rng drng(6);
    add_fd_check(suite, "dropout off-path (train p=0, eval identity)",
                 [&] {
                   auto y = dropout(x, 0.0, Mode::train, drng);
                   return mean(square(dropout(y, 0.7, Mode::eval, drng)));
                 },
                 {x}, 1e-4);
  }
  {
    auto x = rand_tensor({2, 2, 3, 3}, rng, 0.2, 2.0);
    auto y = rand_tensor({2, 2, 3, 3}, rng, 0.2, 2.0);
    add_fd_check(suite, "elementwise hadamard/sub/abs/log/concat/crop_pad",
                 [&] {
                   auto h = hadamard(x, y);
                   auto d = abs(sub(x, y));
                   auto lg = log(x);
                   auto cc = concat_channels(h, lg);
                   auto cp = crop_pad(cc, 1, -1, 4, 4);
                   return add(mean(square(cp)), mean(d));
                 },
                 {x, y}, 1e-4);
    add_fd_check(suite, "resize nearest/bilinear",
                 [&] {
                   return add(mean(square(resize_nearest(x, 5, 2))),
                              mean(square(resize_bilinear(y, 7, 5))));
                 },
                 {x, y}, 1e-4);
  }
  {
    ConvGRUCell<double> cell;
    cell.build("gru", 2, 2, 3);
    Rng grng(8);
    auto params = cell.parameters();
    init_parameters(params, grng);
    auto x = rand_tensor({1, 2, 3, 3}, grng, -1, 1, false);
    auto h0 = rand_tensor({1, 2, 3, 3}, grng, -1, 1, false);
    std::vector<Tensor<double>> leaves;
    for (auto* p : params) leaves.push_back(p->tensor);
    add_fd_check(suite, "conv_gru step (nine parameter groups)",
                 [&] { return mean(square(cell.step(x, h0))); }, leaves, 1e-4);
  }
  {
    auto x = rand_tensor({12}, rng, 0.1, 0.9);
    auto y = rand_tensor({12}, rng, 0.1, 0.9);
    auto dr = rand_tensor({6}, rng, 0.1, 0.9);
    auto df = rand_tensor({6}, rng, 0.1, 0.9);
    LossConfig cfg;
    add_fd_check(suite, "losses l1/mse/gan_d/gan_g/total",
                 [&] {
                   auto t = total_loss(mse_loss(x, y), gan_loss_generator(df),
                                       l1_loss(x, y, static_cast<double>(cfg.beta)), cfg);
                   return add(t, gan_loss_discriminator(dr, df));
                 },
                 {x, y, dr, df}, 1e-4);
  }
  {
    GeneratorSpec spec;
    spec.input_h = spec.input_w = 64;
    spec.block_widths = {2, 2, 2, 2, 2, 2};
    spec.noise_dropout_p = 0.0;
    Rng grng(31);
    Generator<double> gen(spec, grng);
    for (auto* p : gen.parameters())
      if (p->kind == ParamKind::conv_weight)
        for (auto& v : p->tensor.value_mut()) v *= 10.0;
    auto x = rand_tensor({2, 1, 64, 64}, grng, 0.0, 1.0, false);
    auto target = rand_tensor({2, 1, 64, 64}, grng, 0.0, 1.0, false);
    std::vector<Tensor<double>> leaves;
    for (auto* p : gen.parameters()) leaves.push_back(p->tensor);
    // h = 1e-6: wider probes straddle LeakyReLU kinks among the tens of
    // thousands of activations, which breaks the quotient, not the gradient
    add_fd_check(suite, "end-to-end fcnn + mse composite",
                 [&] { return mse_loss(gen.forward(x, Mode::train), target); }, leaves,
                 1e-3, 1e-6);
  }

  suite.seconds = seconds_since(t0);
  return suite;
}

SuiteResult run_metrics_suite() {
  SuiteResult suite{"metrics", {}, 0};
  const auto t0 = Clock::now();
  Rng rng(424242);
  const std::int64_t h = 16, w = 16;

  int dice_exact = 0;
  double hd_worst = 0;
  for (int pair = 0; pair < 200; ++pair) {
    std::vector<std::uint8_t> a(h * w, 0), b(h * w, 0);
    // force the empties into the first pairs, then random densities
    const bool a_empty = pair == 0 || pair == 1;
    const bool b_empty = pair == 0 || pair == 2;
    if (!a_empty) {
      const double density = rng.uniform(0.02, 0.6);
      for (auto& v : a) v = rng.uniform() < density ? 1 : 0;
    }
    if (!b_empty) {
      const double density = rng.uniform(0.02, 0.6);
      for (auto& v : b) v = rng.uniform() < density ? 1 : 0;
    }
    PixelSpacing spacing{1.0f, 1.0f};
    if (pair % 2 == 1) spacing = {1.25f, 0.8f};

    const double d_impl = dice(a, b);
    const double d_oracle = dice_oracle(a, b);
    if (d_impl == d_oracle) ++dice_exact;
    const double h_impl = hausdorff(a, b, h, w, spacing);
    const double h_oracle = hausdorff_oracle(a, b, h, w, spacing);
    hd_worst = std::max(hd_worst, std::abs(h_impl - h_oracle));
  }
  suite.lines.push_back({"dice equals brute-force oracle on 200 pairs", dice_exact == 200,
                         std::to_string(dice_exact) + "/200 exact"});
  suite.lines.push_back({"hausdorff within 1e-9 mm of all-pairs oracle on 200 pairs",
                         hd_worst < 1e-9, "max |diff| " + fmt(hd_worst) + " mm"});

  {
    std::vector<std::uint8_t> a(25, 0), b(25, 0);
    a[0] = 1;          // (0,0)
    b[3 * 5 + 4] = 1;  // (3,4)
    const double v = hausdorff(a, b, 5, 5, {1.0f, 1.0f});
    suite.lines.push_back(
        {"hausdorff singleton pair (0,0)-(3,4) = 5 mm", std::abs(v - 5.0) < 1e-12, fmt(v)});
  }
  suite.seconds = seconds_since(t0);
  return suite;
}

SuiteResult run_sharing_suite() {
  SuiteResult suite{"sharing", {}, 0};
  const auto t0 = Clock::now();

  auto stacks = gen_phantom_dataset(1, 64, 64, 8, 99);
  const PhantomStack* batch_stack = &stacks[0];

  for (Variant variant : {Variant::roigan_a, Variant::roigan_b, Variant::roigan_c}) {
    TrainConfig cfg;
    cfg.variant = variant;
    cfg.generator_kind = GeneratorKind::fcnn;
    cfg.gen_widths = {4, 4, 4, 4, 4, 4};
    cfg.disc_widths = {4, 4, 4, 4, 4};
    cfg.seed = 7;
    cfg.noise_dropout_p = 0.5;
    Trainer trainer(cfg);

    bool shared_equal = true, unshared_diverged = false, disc_shared_equal = true;
    for (int step = 0; step < 50; ++step) {
      trainer.train_step({batch_stack});
      for (int idx : cfg.shared_gen_layers) {
        auto a = trainer.local_generator()->decoder_block_params(idx);
        auto b = trainer.global_generator().decoder_block_params(idx);
        for (std::size_t i = 0; i < a.size(); ++i) {
          const auto av = a[i]->tensor.value(), bv = b[i]->tensor.value();
          for (std::size_t j = 0; j < av.size(); ++j)
            shared_equal = shared_equal && av[j] == bv[j];
        }
      }
      if (variant == Variant::roigan_c) {
        for (int idx : cfg.shared_disc_layers) {
          auto a = trainer.local_discriminator()->block_params(idx);
          auto b = trainer.global_discriminator()->block_params(idx);
          for (std::size_t i = 0; i < a.size(); ++i) {
            const auto av = a[i]->tensor.value(), bv = b[i]->tensor.value();
            for (std::size_t j = 0; j < av.size(); ++j)
              disc_shared_equal = disc_shared_equal && av[j] == bv[j];
          }
        }
      }
      auto ua = trainer.local_generator()->decoder_block_params(4);
      auto ub = trainer.global_generator().decoder_block_params(4);
      bool differs = false;
      for (std::size_t i = 0; i < ua.size() && !differs; ++i) {
        const auto av = ua[i]->tensor.value(), bv = ub[i]->tensor.value();
        for (std::size_t j = 0; j < av.size(); ++j)
          if (av[j] != bv[j]) {
            differs = true;
            break;
          }
      }
      unshared_diverged = unshared_diverged || differs;
    }
    const std::string v = variant_name(variant);
    suite.lines.push_back({v + ": shared generator layers exactly equal over 50 steps",
                           shared_equal, ""});
    if (variant == Variant::roigan_c)
      suite.lines.push_back({v + ": shared discriminator layers exactly equal",
                             disc_shared_equal, ""});
    suite.lines.push_back(
        {v + ": unshared layers diverge (witnessed)", unshared_diverged, ""});
  }
  suite.seconds = seconds_since(t0);
  return suite;
}

SuiteResult run_loss_identity_suite() {
  SuiteResult suite{"loss-identities", {}, 0};
  const auto t0 = Clock::now();
  Rng rng(31337);

  {
    auto x = rand_tensor({32}, rng, -2, 2, false);
    const bool l1_zero = l1_loss(x, x, 5e-6).item() == 0.0;
    const bool mse_zero = mse_loss(x, x).item() == 0.0;
    suite.lines.push_back({"l1(x,x) == 0 and mse(x,x) == 0", l1_zero && mse_zero, ""});
  }
  {
    auto half = Tensor<double>::full({8}, 0.5);
    const double v = gan_loss_discriminator(half, half).item();
    suite.lines.push_back({"gan_d(0.5, 0.5) == 2 log 2",
                           std::abs(v - 2.0 * std::log(2.0)) <= 1e-12,
                           "deviation " + fmt(std::abs(v - 2.0 * std::log(2.0)))});
  }
  {
    LossConfig cfg;
    cfg.lambda = 5e-3;
    bool linear = true;
    double worst = 0;
    for (int i = 0; i < 100; ++i) {
      const double m = rng.uniform(0, 4), g = rng.uniform(0, 4), l = rng.uniform(0, 4);
      const double got = total_loss(Tensor<double>::full({1}, m),
                                    Tensor<double>::full({1}, g),
                                    Tensor<double>::full({1}, l), cfg)
                             .item();
      const double want = m + cfg.lambda * g + l;
      worst = std::max(worst, std::abs(got - want));
      linear = linear && std::abs(got - want) <= 1e-12;
    }
    suite.lines.push_back({"total loss linear with coefficients (1, 5e-3, 1) x100",
                           linear, "max deviation " + fmt(worst)});
  }
  suite.seconds = seconds_since(t0);
  return suite;
}

SuiteResult run_gru_suite() {
  SuiteResult suite{"gru", {}, 0};
  const auto t0 = Clock::now();

  {
    Rng rng(55);
    ConvGRUCell<double> cell;
    cell.build("gru", 2, 2, 3);
    auto params = cell.parameters();
    init_parameters(params, rng);
    auto x = rand_tensor({1, 2, 3, 3}, rng, -1, 1, false);
    auto h_prev = rand_tensor({1, 2, 3, 3}, rng, -1, 1, false);

    for (auto& v : cell.b_z.tensor.value_mut()) v = 20.0;
    auto h1 = cell.step(x, h_prev);
    const Tensor<double> none;
    auto cand = tanh_op(
        add(cell.conv_same(hadamard(sigmoid(add(cell.conv_same(h_prev, cell.w_hr, cell.b_r.tensor),
                                                cell.conv_same(x, cell.w_xr, none))),
                                    h_prev),
                           cell.w_h, cell.b.tensor),
            cell.conv_same(x, cell.w_x, none)));
    double worst1 = 0;
    for (std::size_t i = 0; i < h1.value().size(); ++i)
      worst1 = std::max(worst1, std::abs(h1.value()[i] - cand.value()[i]));
    suite.lines.push_back({"update gate +20: h matches candidate within 1e-6",
                           worst1 < 1e-6, "max diff " + fmt(worst1)});

    for (auto& v : cell.b_z.tensor.value_mut()) v = -20.0;
    auto h0 = cell.step(x, h_prev);
    double worst0 = 0;
    for (std::size_t i = 0; i < h0.value().size(); ++i)
      worst0 = std::max(worst0, std::abs(h0.value()[i] - h_prev.value()[i]));
    suite.lines.push_back({"update gate -20: h matches h_prev within 1e-8",
                           worst0 < 1e-8, "max diff " + fmt(worst0)});
  }
  {
    // causality on 20 random stacks through randomly initialized rfcnn nets
    bool prefix_ok = true;
    Rng seed_rng(808);
    for (int trial = 0; trial < 20; ++trial) {
      GeneratorSpec spec;
      spec.input_h = spec.input_w = 64;
      spec.block_widths = {2, 2, 2, 2, 2, 2};
      spec.recurrent = true;
      spec.noise_dropout_p = 0.0;
      Rng rng(seed_rng.next_u64());
      Generator<float> gen(spec, rng);
      for (auto* p : gen.parameters())
        if (p->kind == ParamKind::conv_weight)
          for (auto& v : p->tensor.value_mut()) v *= 10.0f;
      const std::int64_t s_count = 4 + static_cast<std::int64_t>(rng.uniform_int(3));
      auto x = Tensor<float>::zeros({s_count, 1, 64, 64});
      for (auto& v : x.value_mut()) v = static_cast<float>(rng.uniform(0, 1));
      auto y = gen.forward(x, Mode::eval);
      const auto s_perturb =
          1 + static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(s_count - 1)));
      auto x2 = Tensor<float>::from_data(
          {s_count, 1, 64, 64}, {x.value().begin(), x.value().end()});
      const std::int64_t plane = 64 * 64;
      {
        auto vals = x2.value_mut();
        for (std::int64_t i = 0; i < plane; ++i) vals[s_perturb * plane + i] += 0.3f;
      }
      auto y2 = gen.forward(x2, Mode::eval);
      for (std::int64_t i = 0; i < s_perturb * plane; ++i)
        prefix_ok = prefix_ok && y.value()[i] == y2.value()[i];
    }
    suite.lines.push_back(
        {"causality: slices before a perturbation bitwise unchanged (20 stacks)",
         prefix_ok, ""});
  }
  suite.seconds = seconds_since(t0);
  return suite;
}

std::vector<SuiteResult> run_all_suites() {
  return {run_grad_suite(), run_metrics_suite(), run_sharing_suite()};
}

void print_suite(const SuiteResult& suite, std::ostream& os) {
  for (const auto& line : suite.lines)
    os << (line.pass ? "[PASS] " : "[FAIL] ") << suite.suite << ": " << line.name
       << (line.detail.empty() ? "" : " — " + line.detail) << "\n";
  char buf[80];
  std::snprintf(buf, sizeof buf, "suite %s finished in %.2f s\n", suite.suite.c_str(),
                suite.seconds);
  os << buf;
}

}  // namespace rvseg::checks
