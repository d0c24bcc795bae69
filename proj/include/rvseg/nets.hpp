#pragma once

#include <array>
#include <optional>
#include <set>

#include "rvseg/ops.hpp"

namespace rvseg {

enum class ParamKind { conv_weight, bn_gamma, bias };

// Trainable tensor with a stable name path. Two parameters are "shared" when
// their handles point at the same storage node: value and gradient writes
// through either are visible through the other.
template <typename T>
struct Parameter {
  Tensor<T> tensor;
  std::string name;
  ParamKind kind = ParamKind::conv_weight;
};

template <typename T>
struct NamedBuffer {
  std::string name;
  std::vector<T>* data;
};

// conv/deconv weights ~ N(0, 0.02), BN gamma ~ N(1, 0.02), biases 0.
template <typename T>
void init_parameters(const std::vector<Parameter<T>*>& params, Rng& rng) {
  for (Parameter<T>* p : params) {
    auto vals = p->tensor.value_mut();
    switch (p->kind) {
      case ParamKind::conv_weight:
        for (auto& v : vals) v = static_cast<T>(rng.normal(0.0, 0.02));
        break;
      case ParamKind::bn_gamma:
        for (auto& v : vals) v = static_cast<T>(rng.normal(1.0, 0.02));
        break;
      case ParamKind::bias:
        std::fill(vals.begin(), vals.end(), T(0));
        break;
    }
    p->tensor.zero_grad();
  }
}

template <typename T>
std::int64_t parameter_count(const std::vector<Parameter<T>*>& params) {
  std::int64_t n = 0;
  for (const Parameter<T>* p : params) n += p->tensor.numel();
  return n;
}

namespace layers {

template <typename T>
struct Conv2d {
  Parameter<T> weight, bias;
  std::int64_t stride = 1, padding = 0;

  void build(const std::string& prefix, std::int64_t in_ch, std::int64_t out_ch,
             std::int64_t k, std::int64_t s, std::int64_t p) {
    weight = {Tensor<T>::zeros({out_ch, in_ch, k, k}, true), prefix + ".weight",
              ParamKind::conv_weight};
    bias = {Tensor<T>::zeros({out_ch}, true), prefix + ".bias", ParamKind::bias};
    stride = s;
    padding = p;
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    return conv2d(x, weight.tensor, bias.tensor, stride, padding);
  }
};

template <typename T>
struct ConvTranspose2d {
  Parameter<T> weight, bias;
  std::int64_t stride = 1, padding = 0;

  void build(const std::string& prefix, std::int64_t in_ch, std::int64_t out_ch,
             std::int64_t k, std::int64_t s, std::int64_t p) {
    weight = {Tensor<T>::zeros({in_ch, out_ch, k, k}, true), prefix + ".weight",
              ParamKind::conv_weight};
    bias = {Tensor<T>::zeros({out_ch}, true), prefix + ".bias", ParamKind::bias};
    stride = s;
    padding = p;
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    return conv_transpose2d(x, weight.tensor, bias.tensor, stride, padding);
  }
};

template <typename T>
struct BatchNorm2d {
  Parameter<T> gamma, beta;
  RunningStats<T> stats;
  std::string prefix;

  void build(const std::string& pfx, std::int64_t channels) {
    prefix = pfx;
    gamma = {Tensor<T>::zeros({channels}, true), pfx + ".gamma", ParamKind::bn_gamma};
    beta = {Tensor<T>::zeros({channels}, true), pfx + ".beta", ParamKind::bias};
    stats.init(channels);
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    return batch_norm(x, gamma.tensor, beta.tensor, stats, mode);
  }

  void collect_buffers(std::vector<NamedBuffer<T>>& out) {
    out.push_back({prefix + ".running_mean", &stats.mean});
    out.push_back({prefix + ".running_var", &stats.var});
  }
};

}  // namespace layers

// ---------------------------------------------------------------------------
// Conv-GRU cell
// ---------------------------------------------------------------------------

// Gated recurrence over a slice sequence with convolutional gate transforms:
//   r = sigmoid(W_hr * h + W_xr * x + b_r)
//   z = sigmoid(W_hz * h + W_xz * x + b_z)
//   cand = tanh(W_h * (r . h) + W_x * x + b)
//   h' = (1 - z) . h + z . cand
template <typename T>
struct ConvGRUCell {
  Parameter<T> w_hr, w_xr, b_r, w_hz, w_xz, b_z, w_h, w_x, b;
  std::int64_t in_channels = 0, hidden_channels = 0, kernel = 3;

  void build(const std::string& prefix, std::int64_t in_ch, std::int64_t hidden_ch,
             std::int64_t k) {
    in_channels = in_ch;
    hidden_channels = hidden_ch;
    kernel = k;
    auto conv_w = [&](const std::string& n, std::int64_t ci) {
      return Parameter<T>{Tensor<T>::zeros({hidden_ch, ci, k, k}, true), prefix + "." + n,
                          ParamKind::conv_weight};
    };
    auto bias_v = [&](const std::string& n) {
      return Parameter<T>{Tensor<T>::zeros({hidden_ch}, true), prefix + "." + n,
                          ParamKind::bias};
    };
    w_hr = conv_w("w_hr", hidden_ch);
    w_xr = conv_w("w_xr", in_ch);
    b_r = bias_v("b_r");
    w_hz = conv_w("w_hz", hidden_ch);
    w_xz = conv_w("w_xz", in_ch);
    b_z = bias_v("b_z");
    w_h = conv_w("w_h", hidden_ch);
    w_x = conv_w("w_x", in_ch);
    b = bias_v("b");
  }

  std::vector<Parameter<T>*> parameters() {
    return {&w_hr, &w_xr, &b_r, &w_hz, &w_xz, &b_z, &w_h, &w_x, &b};
  }

  // extent-preserving convolution for any kernel parity
  Tensor<T> conv_same(const Tensor<T>& x, const Parameter<T>& w,
                      const Tensor<T>& bias_t) const {
    Tensor<T> y = conv2d(x, w.tensor, bias_t, 1, kernel / 2);
    if (y.dim(2) != x.dim(2) || y.dim(3) != x.dim(3))
      y = crop_pad(y, 0, 0, x.dim(2), x.dim(3));
    return y;
  }

  Tensor<T> step(const Tensor<T>& x, const Tensor<T>& h_prev) const {
    if (x.dim(2) != h_prev.dim(2) || x.dim(3) != h_prev.dim(3) ||
        x.dim(0) != h_prev.dim(0))
      throw TensorError("conv_gru_step: input " + shape_str(x.shape()) +
                        " and hidden state " + shape_str(h_prev.shape()) +
                        " are not aligned");
    const Tensor<T> none;
    auto r = sigmoid(add(conv_same(h_prev, w_hr, b_r.tensor), conv_same(x, w_xr, none)));
    auto z = sigmoid(add(conv_same(h_prev, w_hz, b_z.tensor), conv_same(x, w_xz, none)));
    auto cand =
        tanh_op(add(conv_same(hadamard(r, h_prev), w_h, b.tensor), conv_same(x, w_x, none)));
    return add(hadamard(one_minus(z), h_prev), hadamard(z, cand));
  }
};

// ---------------------------------------------------------------------------
// generator (FCNN / R-FCNN)
// ---------------------------------------------------------------------------

enum class NoiseMode { dropout, gaussian };

struct GeneratorSpec {
  std::int64_t input_h = 256, input_w = 256;
  std::int64_t in_channels = 1;
  std::array<std::int64_t, 6> block_widths{64, 128, 256, 512, 512, 512};
  bool recurrent = false;
  double noise_dropout_p = 0.5;  // applied to decoder blocks 1-3 in train mode
  NoiseMode noise_mode = NoiseMode::dropout;
  double noise_sigma = 0.1;  // used when noise_mode == gaussian
  std::int64_t gru_kernel = 3;

  void validate() const {
    if (input_h < 64 || input_w < 64 || input_h % 64 != 0 || input_w % 64 != 0)
      throw TensorError("generator input size " + std::to_string(input_h) + "x" +
                        std::to_string(input_w) + " must be divisible by 64");
    for (auto wdt : block_widths)
      if (wdt < 1) throw TensorError("generator block widths must be positive");
    if (in_channels < 1) throw TensorError("generator in_channels must be positive");
    if (!(noise_dropout_p >= 0.0 && noise_dropout_p < 1.0))
      throw TensorError("generator noise_dropout_p must lie in [0,1)");
    if (gru_kernel < 1) throw TensorError("generator gru_kernel must be positive");
  }
};

// Six stride-2 encoder blocks (conv -> BN -> ReLU), mirrored decoder
// (deconv -> BN -> LeakyReLU 0.2) with skip concatenations, final deconv to
// one channel + sigmoid. With spec.recurrent, a ConvGRU consumes the
// bottleneck features slice by slice in base-to-apex order.
template <typename T>
class Generator {
 public:
  Generator(GeneratorSpec spec, Rng& rng) : spec_(spec) {
    spec_.validate();
    const auto& w = spec_.block_widths;
    for (int i = 0; i < 6; ++i) {
      const std::string pfx = "enc" + std::to_string(i + 1);
      enc_conv_[i].build(pfx, i == 0 ? spec_.in_channels : w[i - 1], w[i], 4, 2, 1);
      enc_bn_[i].build(pfx + ".bn", w[i]);
    }
    if (spec_.recurrent) gru_.build("gru", w[5], w[5], spec_.gru_kernel);
    const std::array<std::int64_t, 6> dec_in{w[5],         w[4] + w[4], w[3] + w[3],
                                             w[2] + w[2],  w[1] + w[1], w[0] + w[0]};
    const std::array<std::int64_t, 6> dec_out{w[4], w[3], w[2], w[1], w[0], 1};
    for (int i = 0; i < 6; ++i) {
      const std::string pfx = "dec" + std::to_string(i + 1);
      dec_conv_[i].build(pfx, dec_in[i], dec_out[i], 4, 2, 1);
      if (i < 5) dec_bn_[i].build(pfx + ".bn", dec_out[i]);
    }
    init_parameters(parameters(), rng);
  }

  const GeneratorSpec& spec() const { return spec_; }

  // Input [S,1,H,W]; output segmentation probabilities of the same shape.
  // For a recurrent generator the batch dimension is the base-to-apex slice
  // order; otherwise slices are independent.
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng* rng = nullptr) {
    detail::require_4d(x, "generator input");
    if (x.dim(0) < 1) throw TensorError("generator forward: empty slice stack");
    if (x.dim(1) != spec_.in_channels || x.dim(2) != spec_.input_h ||
        x.dim(3) != spec_.input_w)
      throw TensorError("generator forward: input " + shape_str(x.shape()) +
                        " does not match spec " + std::to_string(spec_.in_channels) +
                        "x" + std::to_string(spec_.input_h) + "x" +
                        std::to_string(spec_.input_w));
    std::array<Tensor<T>, 6> skips;
    Tensor<T> cur = x;
    for (int i = 0; i < 6; ++i) {
      cur = relu(enc_bn_[i].forward(enc_conv_[i].forward(cur), mode));
      skips[i] = cur;
    }
    if (spec_.recurrent) {
      const std::int64_t s_count = cur.dim(0);
      Tensor<T> h = Tensor<T>::zeros({1, gru_.hidden_channels, cur.dim(2), cur.dim(3)});
      std::vector<Tensor<T>> hs;
      hs.reserve(static_cast<std::size_t>(s_count));
      for (std::int64_t s = 0; s < s_count; ++s) {
        h = gru_.step(narrow_batch(cur, s, 1), h);
        hs.push_back(h);
      }
      cur = s_count == 1 ? hs[0] : concat_batch(hs);
    }
    for (int i = 0; i < 6; ++i) {
      if (i > 0) cur = concat_channels(cur, skips[5 - i]);
      cur = dec_conv_[i].forward(cur);
      if (i < 5) {
        cur = leaky_relu(dec_bn_[i].forward(cur, mode), T(0.2));
        if (i < 3) cur = apply_noise(cur, mode, rng);
      } else {
        cur = sigmoid(cur);
      }
    }
    return cur;
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    for (int i = 0; i < 6; ++i) {
      out.push_back(&enc_conv_[i].weight);
      out.push_back(&enc_conv_[i].bias);
      out.push_back(&enc_bn_[i].gamma);
      out.push_back(&enc_bn_[i].beta);
    }
    if (spec_.recurrent)
      for (auto* p : gru_.parameters()) out.push_back(p);
    for (int i = 0; i < 6; ++i) {
      out.push_back(&dec_conv_[i].weight);
      out.push_back(&dec_conv_[i].bias);
      if (i < 5) {
        out.push_back(&dec_bn_[i].gamma);
        out.push_back(&dec_bn_[i].beta);
      }
    }
    return out;
  }

  std::vector<NamedBuffer<T>> buffers() {
    std::vector<NamedBuffer<T>> out;
    for (int i = 0; i < 6; ++i) enc_bn_[i].collect_buffers(out);
    for (int i = 0; i < 5; ++i) dec_bn_[i].collect_buffers(out);
    return out;
  }

  // Shareable parameters of decoder block idx (1-based, 1..6).
  std::vector<Parameter<T>*> decoder_block_params(int idx) {
    if (idx < 1 || idx > 6)
      throw TensorError("decoder block index " + std::to_string(idx) +
                        " outside 1..6");
    std::vector<Parameter<T>*> out{&dec_conv_[idx - 1].weight, &dec_conv_[idx - 1].bias};
    if (idx <= 5) {
      out.push_back(&dec_bn_[idx - 1].gamma);
      out.push_back(&dec_bn_[idx - 1].beta);
    }
    return out;
  }

  ConvGRUCell<T>& gru_cell() {
    if (!spec_.recurrent) throw TensorError("generator has no recurrent cell");
    return gru_;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->tensor.zero_grad();
  }

 private:
  Tensor<T> apply_noise(const Tensor<T>& t, Mode mode, Rng* rng) {
    if (mode == Mode::eval) return t;
    const bool active = spec_.noise_mode == NoiseMode::dropout
                            ? spec_.noise_dropout_p > 0.0
                            : spec_.noise_sigma > 0.0;
    if (!active) return t;
    if (!rng)
      throw TensorError("generator forward: train-mode noise requires an rng");
    return spec_.noise_mode == NoiseMode::dropout
               ? dropout(t, spec_.noise_dropout_p, mode, *rng)
               : gaussian_noise(t, spec_.noise_sigma, mode, *rng);
  }

  GeneratorSpec spec_;
  std::array<layers::Conv2d<T>, 6> enc_conv_;
  std::array<layers::BatchNorm2d<T>, 6> enc_bn_;
  std::array<layers::ConvTranspose2d<T>, 6> dec_conv_;
  std::array<layers::BatchNorm2d<T>, 5> dec_bn_;
  ConvGRUCell<T> gru_;
};

template <typename T>
Generator<T> build_generator(const GeneratorSpec& spec, Rng& rng) {
  return Generator<T>(spec, rng);
}

// Per-slice independent segmentation.
template <typename T>
Tensor<T> fcnn_forward(Generator<T>& gen, const Tensor<T>& slice_batch, Mode mode,
                       Rng* rng = nullptr) {
  if (gen.spec().recurrent)
    throw TensorError("fcnn_forward called on a recurrent generator");
  return gen.forward(slice_batch, mode, rng);
}

// Sequence segmentation; slices must be ordered base to apex.
template <typename T>
Tensor<T> rfcnn_forward(Generator<T>& gen, const Tensor<T>& stack, Mode mode,
                        Rng* rng = nullptr) {
  if (!gen.spec().recurrent)
    throw TensorError("rfcnn_forward called on a non-recurrent generator");
  if (!stack.defined() || stack.ndim() != 4 || stack.dim(0) < 1)
    throw TensorError("rfcnn_forward: empty slice stack");
  return gen.forward(stack, mode, rng);
}

// ---------------------------------------------------------------------------
// discriminator
// ---------------------------------------------------------------------------

struct DiscriminatorSpec {
  std::int64_t input_h = 256, input_w = 256;
  std::int64_t in_channels = 1;
  std::array<std::int64_t, 5> widths{64, 128, 256, 512, 512};
  bool condition_on_image = false;  // concat the MRI slice to the mask input

  void validate() const {
    if (input_h < 32 || input_w < 32 || input_h % 32 != 0 || input_w % 32 != 0)
      throw TensorError("discriminator input size must be divisible by 32");
    for (auto w : widths)
      if (w < 1) throw TensorError("discriminator widths must be positive");
  }
};

// Five stride-2 conv -> BN -> LeakyReLU(0.2) blocks, then a full-extent
// convolution and sigmoid producing one probability per item.
template <typename T>
class Discriminator {
 public:
  Discriminator(DiscriminatorSpec spec, Rng& rng) : spec_(spec) {
    spec_.validate();
    const std::int64_t in0 =
        spec_.condition_on_image ? spec_.in_channels + 1 : spec_.in_channels;
    for (int i = 0; i < 5; ++i) {
      const std::string pfx = "blk" + std::to_string(i + 1);
      blk_conv_[i].build(pfx, i == 0 ? in0 : spec_.widths[i - 1], spec_.widths[i], 4, 2, 1);
      blk_bn_[i].build(pfx + ".bn", spec_.widths[i]);
    }
    head_.build("head", spec_.widths[4], 1, spec_.input_h / 32, 1, 0);
    // head kernel is rectangular when H != W
    if (spec_.input_h != spec_.input_w)
      head_.weight.tensor = Tensor<T>::zeros(
          {1, spec_.widths[4], spec_.input_h / 32, spec_.input_w / 32}, true);
    init_parameters(parameters(), rng);
  }

  const DiscriminatorSpec& spec() const { return spec_; }

  // masks [N,C,H,W] with values in [0,1] -> probabilities [N]
  Tensor<T> forward(const Tensor<T>& masks, Mode mode) {
    detail::require_4d(masks, "discriminator input");
    for (T v : masks.value())
      if (!(v >= T(0) && v <= T(1)))
        throw TensorError("discriminator input outside [0,1]: " + std::to_string(v));
    Tensor<T> cur = masks;
    for (int i = 0; i < 5; ++i)
      cur = leaky_relu(blk_bn_[i].forward(blk_conv_[i].forward(cur), mode), T(0.2));
    cur = head_.forward(cur);
    return sigmoid(reshape(cur, Shape{cur.dim(0)}));
  }

  Tensor<T> forward_conditioned(const Tensor<T>& masks, const Tensor<T>& images,
                                Mode mode) {
    if (!spec_.condition_on_image)
      throw TensorError("discriminator not built with condition_on_image");
    return forward(concat_channels(masks, images), mode);
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    for (int i = 0; i < 5; ++i) {
      out.push_back(&blk_conv_[i].weight);
      out.push_back(&blk_conv_[i].bias);
      out.push_back(&blk_bn_[i].gamma);
      out.push_back(&blk_bn_[i].beta);
    }
    out.push_back(&head_.weight);
    out.push_back(&head_.bias);
    return out;
  }

  std::vector<NamedBuffer<T>> buffers() {
    std::vector<NamedBuffer<T>> out;
    for (int i = 0; i < 5; ++i) blk_bn_[i].collect_buffers(out);
    return out;
  }

  // Shareable parameters of conv block idx (1-based, 1..5).
  std::vector<Parameter<T>*> block_params(int idx) {
    if (idx < 1 || idx > 5)
      throw TensorError("discriminator block index " + std::to_string(idx) +
                        " outside 1..5");
    return {&blk_conv_[idx - 1].weight, &blk_conv_[idx - 1].bias,
            &blk_bn_[idx - 1].gamma, &blk_bn_[idx - 1].beta};
  }

  void zero_grad() {
    for (auto* p : parameters()) p->tensor.zero_grad();
  }

 private:
  DiscriminatorSpec spec_;
  std::array<layers::Conv2d<T>, 5> blk_conv_;
  std::array<layers::BatchNorm2d<T>, 5> blk_bn_;
  layers::Conv2d<T> head_;
};

template <typename T>
Tensor<T> discriminator_forward(Discriminator<T>& disc, const Tensor<T>& masks,
                                Mode mode = Mode::train) {
  return disc.forward(masks, mode);
}

// ---------------------------------------------------------------------------
// parameter sharing
// ---------------------------------------------------------------------------

enum class DiscSharing { single, independent, shared };  // ROI-GAN A / B / C

struct SharingSpec {
  std::set<int> generator_shared_layers{1, 2, 3};  // decoder block indices
  DiscSharing discriminator_mode = DiscSharing::single;
  std::set<int> discriminator_shared_layers{1, 2, 3};  // conv block indices
};

namespace detail {

template <typename T>
void link_param_lists(std::vector<Parameter<T>*> src, std::vector<Parameter<T>*> dst,
                      const std::string& layer_name) {
  if (src.size() != dst.size())
    throw TensorError("shared layer " + layer_name + ": parameter count mismatch");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i]->tensor.shape() != dst[i]->tensor.shape())
      throw TensorError("shared layer " + layer_name + ": shape mismatch for " +
                        dst[i]->name + ", " + shape_str(src[i]->tensor.shape()) +
                        " vs " + shape_str(dst[i]->tensor.shape()));
    dst[i]->tensor = src[i]->tensor;  // alias the storage node
  }
}

}  // namespace detail

// After linking, the listed decoder blocks of both generators reference one
// parameter storage: value writes, gradient accumulation and optimizer steps
// through either network act on the same cell.
template <typename T>
void link_shared_parameters(Generator<T>& src, Generator<T>& dst,
                            const SharingSpec& spec) {
  for (int idx : spec.generator_shared_layers)
    detail::link_param_lists<T>(src.decoder_block_params(idx),
                                dst.decoder_block_params(idx),
                                "dec" + std::to_string(idx));
}

template <typename T>
void link_shared_parameters(Discriminator<T>& src, Discriminator<T>& dst,
                            const SharingSpec& spec) {
  for (int idx : spec.discriminator_shared_layers)
    detail::link_param_lists<T>(src.block_params(idx), dst.block_params(idx),
                                "blk" + std::to_string(idx));
}

}  // namespace rvseg
