#pragma once

#include <cstdlib>
#include <thread>

#include "rvseg/rng.hpp"
#include "rvseg/tensor.hpp"

namespace rvseg {

enum class Mode { train, eval };

// Worker-thread cap, read once from ROIGAN_THREADS (default 1 so runs are
// reproducible without any environment setup).
inline int thread_count() {
  static const int n = [] {
    const char* e = std::getenv("ROIGAN_THREADS");
    const int v = e ? std::atoi(e) : 1;
    return v < 1 ? 1 : v;
  }();
  return n;
}

namespace detail {

// Runs fn(begin,end) over a fixed partition of [0,n). Partitioning does not
// depend on scheduling, so results are identical for any thread count.
template <typename Fn>
void parallel_for(std::int64_t n, const Fn& fn) {
  const int threads = thread_count();
  if (threads <= 1 || n <= 1) {
    fn(0, n);
    return;
  }
  const int used = static_cast<int>(std::min<std::int64_t>(threads, n));
  const std::int64_t chunk = (n + used - 1) / used;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(used));
  for (int t = 0; t < used; ++t) {
    const std::int64_t b = t * chunk;
    const std::int64_t e = std::min<std::int64_t>(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  for (auto& th : pool) th.join();
}

// C (M x N) += A (M x K) * B (K x N); row-major, accumulating.
template <typename T>
void gemm_nn_acc(T* c, const T* a, const T* b, std::int64_t m, std::int64_t k,
                 std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::int64_t p = 0; p < k; ++p) {
      const T s = arow[p];
      if (s == T(0)) continue;
      const T* brow = b + p * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += s * brow[j];
    }
  }
}

// C (M x N) += A^T * B with A stored (K x M), B (K x N).
template <typename T>
void gemm_tn_acc(T* c, const T* a, const T* b, std::int64_t m, std::int64_t k,
                 std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::int64_t p = 0; p < k; ++p) {
      const T s = a[p * m + i];
      if (s == T(0)) continue;
      const T* brow = b + p * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += s * brow[j];
    }
  }
}

struct ConvGeom {
  std::int64_t C, H, W;    // image side
  std::int64_t F, kH, kW;  // filters
  std::int64_t stride, pad;
  std::int64_t OH, OW;  // patch-grid side

  std::int64_t ck() const { return C * kH * kW; }
  std::int64_t l() const { return OH * OW; }
};

// Patch matrix in (C*kH*kW) x (OH*OW) layout.
template <typename T>
void im2col(const T* img, const ConvGeom& g, T* col) {
  for (std::int64_t c = 0; c < g.C; ++c) {
    const T* plane = img + c * g.H * g.W;
    for (std::int64_t ki = 0; ki < g.kH; ++ki) {
      for (std::int64_t kj = 0; kj < g.kW; ++kj) {
        T* row = col + ((c * g.kH + ki) * g.kW + kj) * g.l();
        for (std::int64_t oh = 0; oh < g.OH; ++oh) {
          const std::int64_t ih = oh * g.stride - g.pad + ki;
          const bool row_ok = ih >= 0 && ih < g.H;
          for (std::int64_t ow = 0; ow < g.OW; ++ow) {
            const std::int64_t iw = ow * g.stride - g.pad + kj;
            row[oh * g.OW + ow] =
                (row_ok && iw >= 0 && iw < g.W) ? plane[ih * g.W + iw] : T(0);
          }
        }
      }
    }
  }
}

// Patch matrix in (OH*OW) x (C*kH*kW) layout (one contiguous patch per row).
template <typename T>
void im2row(const T* img, const ConvGeom& g, T* rows) {
  const std::int64_t ck = g.ck();
  for (std::int64_t oh = 0; oh < g.OH; ++oh) {
    for (std::int64_t ow = 0; ow < g.OW; ++ow) {
      T* row = rows + (oh * g.OW + ow) * ck;
      for (std::int64_t c = 0; c < g.C; ++c) {
        const T* plane = img + c * g.H * g.W;
        for (std::int64_t ki = 0; ki < g.kH; ++ki) {
          const std::int64_t ih = oh * g.stride - g.pad + ki;
          const bool row_ok = ih >= 0 && ih < g.H;
          for (std::int64_t kj = 0; kj < g.kW; ++kj) {
            const std::int64_t iw = ow * g.stride - g.pad + kj;
            row[(c * g.kH + ki) * g.kW + kj] =
                (row_ok && iw >= 0 && iw < g.W) ? plane[ih * g.W + iw] : T(0);
          }
        }
      }
    }
  }
}

// Scatter-add of a (C*kH*kW) x (OH*OW) patch matrix back into the image.
template <typename T>
void col2im_acc(const T* col, const ConvGeom& g, T* img) {
  for (std::int64_t c = 0; c < g.C; ++c) {
    T* plane = img + c * g.H * g.W;
    for (std::int64_t ki = 0; ki < g.kH; ++ki) {
      for (std::int64_t kj = 0; kj < g.kW; ++kj) {
        const T* row = col + ((c * g.kH + ki) * g.kW + kj) * g.l();
        for (std::int64_t oh = 0; oh < g.OH; ++oh) {
          const std::int64_t ih = oh * g.stride - g.pad + ki;
          if (ih < 0 || ih >= g.H) continue;
          for (std::int64_t ow = 0; ow < g.OW; ++ow) {
            const std::int64_t iw = ow * g.stride - g.pad + kj;
            if (iw < 0 || iw >= g.W) continue;
            plane[ih * g.W + iw] += row[oh * g.OW + ow];
          }
        }
      }
    }
  }
}

template <typename T>
void require_4d(const Tensor<T>& t, const char* what) {
  if (!t.defined() || t.ndim() != 4)
    throw TensorError(std::string(what) + " must be 4-D, got " +
                      (t.defined() ? shape_str(t.shape()) : std::string("<undefined>")));
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw TensorError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                      " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  auto out = detail::make_node<T>(a.shape(), "add");
  const auto av = a.value(), bv = b.value();
  for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = av[i] + bv[i];
  if ((out->requires_grad = a.requires_grad() || b.requires_grad())) {
    out->parents = {a.node(), b.node()};
    Node<T>*ap = a.node().get(), *bp = b.node().get();
    out->backward_fn = [ap, bp](Node<T>& self) {
      if (ap->requires_grad) {
        ap->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) ap->grad[i] += self.grad[i];
      }
      if (bp->requires_grad) {
        bp->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) bp->grad[i] += self.grad[i];
      }
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "sub");
  auto out = detail::make_node<T>(a.shape(), "sub");
  const auto av = a.value(), bv = b.value();
  for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = av[i] - bv[i];
  if ((out->requires_grad = a.requires_grad() || b.requires_grad())) {
    out->parents = {a.node(), b.node()};
    Node<T>*ap = a.node().get(), *bp = b.node().get();
    out->backward_fn = [ap, bp](Node<T>& self) {
      if (ap->requires_grad) {
        ap->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) ap->grad[i] += self.grad[i];
      }
      if (bp->requires_grad) {
        bp->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) bp->grad[i] -= self.grad[i];
      }
    };
  }
  return Tensor<T>(out);
}

// elementwise product
template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "hadamard");
  auto out = detail::make_node<T>(a.shape(), "hadamard");
  const auto av = a.value(), bv = b.value();
  for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = av[i] * bv[i];
  if ((out->requires_grad = a.requires_grad() || b.requires_grad())) {
    out->parents = {a.node(), b.node()};
    Node<T>*ap = a.node().get(), *bp = b.node().get();
    out->backward_fn = [ap, bp](Node<T>& self) {
      if (ap->requires_grad) {
        ap->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          ap->grad[i] += self.grad[i] * bp->value[i];
      }
      if (bp->requires_grad) {
        bp->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          bp->grad[i] += self.grad[i] * ap->value[i];
      }
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return hadamard(a, b);
}

// y = scale * x + shift (covers scale, scalar add, 1-x)
template <typename T>
Tensor<T> affine_scalar(const Tensor<T>& x, T scale, T shift) {
  auto out = detail::make_node<T>(x.shape(), "affine_scalar");
  const auto xv = x.value();
  for (std::size_t i = 0; i < out->value.size(); ++i)
    out->value[i] = scale * xv[i] + shift;
  if ((out->requires_grad = x.requires_grad())) {
    out->parents = {x.node()};
    Node<T>* xp = x.node().get();
    out->backward_fn = [xp, scale](Node<T>& self) {
      xp->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        xp->grad[i] += scale * self.grad[i];
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
  return affine_scalar(x, c, T(0));
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
  return affine_scalar(x, T(1), c);
}

template <typename T>
Tensor<T> one_minus(const Tensor<T>& x) {
  return affine_scalar(x, T(-1), T(1));
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  auto out = detail::make_node<T>(Shape{1}, "sum");
  T acc = T(0);
  for (T v : x.value()) acc += v;
  out->value[0] = acc;
  if ((out->requires_grad = x.requires_grad())) {
    out->parents = {x.node()};
    Node<T>* xp = x.node().get();
    out->backward_fn = [xp](Node<T>& self) {
      xp->ensure_grad();
      const T g = self.grad[0];
      for (auto& gv : xp->grad) gv += g;
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  const T inv_n = T(1) / static_cast<T>(x.numel());
  return scale(sum(x), inv_n);
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  auto out = detail::make_node<T>(x.shape(), "abs");
  const auto xv = x.value();
  for (std::size_t i = 0; i < out->value.size(); ++i)
    out->value[i] = xv[i] < T(0) ? -xv[i] : xv[i];
  if ((out->requires_grad = x.requires_grad())) {
    out->parents = {x.node()};
    Node<T>* xp = x.node().get();
    out->backward_fn = [xp](Node<T>& self) {
      xp->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const T v = xp->value[i];
        // subgradient 0 at v == 0
        xp->grad[i] += v > T(0) ? self.grad[i] : (v < T(0) ? -self.grad[i] : T(0));
      }
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  auto out = detail::make_node<T>(x.shape(), "square");
  const auto xv = x.value();
  for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = xv[i] * xv[i];
  if ((out->requires_grad = x.requires_grad())) {
    out->parents = {x.node()};
    Node<T>* xp = x.node().get();
    out->backward_fn = [xp](Node<T>& self) {
      xp->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        xp->grad[i] += T(2) * xp->value[i] * self.grad[i];
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  auto out = detail::make_node<T>(x.shape(), "log");
  const auto xv = x.value();
  for (std::size_t i = 0; i < out->value.size(); ++i) {
    if (!(xv[i] > T(0)))
      throw TensorError("log of non-positive value " + std::to_string(xv[i]) +
                        " at flat index " + std::to_string(i));
    out->value[i] = std::log(xv[i]);
  }
  if ((out->requires_grad = x.requires_grad())) {
    out->parents = {x.node()};
    Node<T>* xp = x.node().get();
    out->backward_fn = [xp](Node<T>& self) {
      xp->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        xp->grad[i] += self.grad[i] / xp->value[i];
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> clamp_min(const Tensor<T>& x, T lo) {
  auto out = detail::make_node<T>(x.shape(), "clamp_min");
  const auto xv = x.value();
  for (std::size_t i = 0; i < out->value.size(); ++i)
    out->value[i] = xv[i] < lo ? lo : xv[i];
  if ((out->requires_grad = x.requires_grad())) {
    out->parents = {x.node()};
    Node<T>* xp = x.node().get();
    out->backward_fn = [xp, lo](Node<T>& self) {
      xp->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        if (xp->value[i] > lo) xp->grad[i] += self.grad[i];
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_4d(a, "concat_channels lhs");
  detail::require_4d(b, "concat_channels rhs");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw TensorError("concat_channels: non-channel extents differ, " +
                      shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::int64_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  const std::int64_t hw = a.dim(2) * a.dim(3);
  auto out = detail::make_node<T>(Shape{n, ca + cb, a.dim(2), a.dim(3)}, "concat_channels");
  const auto av = a.value(), bv = b.value();
  for (std::int64_t i = 0; i < n; ++i) {
    std::copy_n(av.data() + i * ca * hw, ca * hw, out->value.data() + i * (ca + cb) * hw);
    std::copy_n(bv.data() + i * cb * hw, cb * hw,
                out->value.data() + i * (ca + cb) * hw + ca * hw);
  }
  if ((out->requires_grad = a.requires_grad() || b.requires_grad())) {
    out->parents = {a.node(), b.node()};
    Node<T>*ap = a.node().get(), *bp = b.node().get();
    out->backward_fn = [ap, bp, n, ca, cb, hw](Node<T>& self) {
      for (std::int64_t i = 0; i < n; ++i) {
        const T* g = self.grad.data() + i * (ca + cb) * hw;
        if (ap->requires_grad) {
          ap->ensure_grad();
          T* ga = ap->grad.data() + i * ca * hw;
          for (std::int64_t j = 0; j < ca * hw; ++j) ga[j] += g[j];
        }
        if (bp->requires_grad) {
          bp->ensure_grad();
          T* gb = bp->grad.data() + i * cb * hw;
          for (std::int64_t j = 0; j < cb * hw; ++j) gb[j] += g[ca * hw + j];
        }
      }
    };
  }
  return Tensor<T>(out);
}

// Spatial crop/zero-pad: out(i,j) = x(i+top, j+left) where in bounds, else 0.
// Negative top/left pad instead of crop.
template <typename T>
Tensor<T> crop_pad(const Tensor<T>& x, std::int64_t top, std::int64_t left,
                   std::int64_t out_h, std::int64_t out_w) {
  detail::require_4d(x, "crop_pad input");
  if (out_h < 1 || out_w < 1) throw TensorError("crop_pad: non-positive output size");
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  auto out = detail::make_node<T>(Shape{n, c, out_h, out_w}, "crop_pad");
  std::fill(out->value.begin(), out->value.end(), T(0));
  const auto xv = x.value();
  for (std::int64_t p = 0; p < n * c; ++p) {
    const T* src = xv.data() + p * h * w;
    T* dst = out->value.data() + p * out_h * out_w;
    for (std::int64_t i = 0; i < out_h; ++i) {
      const std::int64_t si = i + top;
      if (si < 0 || si >= h) continue;
      for (std::int64_t j = 0; j < out_w; ++j) {
        const std::int64_t sj = j + left;
        if (sj >= 0 && sj < w) dst[i * out_w + j] = src[si * w + sj];
      }
    }
  }
  if ((out->requires_grad = x.requires_grad())) {
    out->parents = {x.node()};
    Node<T>* xp = x.node().get();
    out->backward_fn = [xp, n, c, h, w, out_h, out_w, top, left](Node<T>& self) {
      xp->ensure_grad();
      for (std::int64_t p = 0; p < n * c; ++p) {
        T* gx = xp->grad.data() + p * h * w;
        const T* g = self.grad.data() + p * out_h * out_w;
        for (std::int64_t i = 0; i < out_h; ++i) {
          const std::int64_t si = i + top;
          if (si < 0 || si >= h) continue;
          for (std::int64_t j = 0; j < out_w; ++j) {
            const std::int64_t sj = j + left;
            if (sj >= 0 && sj < w) gx[si * w + sj] += g[i * out_w + j];
          }
        }
      }
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel_of(shape) != x.numel())
    throw TensorError("reshape: element count mismatch, " + shape_str(x.shape()) +
                      " -> " + shape_str(shape));
  auto out = detail::make_node<T>(std::move(shape), "reshape");
  const auto xv = x.value();
  std::copy(xv.begin(), xv.end(), out->value.begin());
  if ((out->requires_grad = x.requires_grad())) {
    out->parents = {x.node()};
    Node<T>* xp = x.node().get();
    out->backward_fn = [xp](Node<T>& self) {
      xp->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) xp->grad[i] += self.grad[i];
    };
  }
  return Tensor<T>(out);
}

// Value copy with the graph link severed.
template <typename T>
Tensor<T> detach(const Tensor<T>& x) {
  auto out = detail::make_node<T>(x.shape(), "detach");
  const auto xv = x.value();
  std::copy(xv.begin(), xv.end(), out->value.begin());
  return Tensor<T>(out);
}

// Concatenation along the batch dimension.
template <typename T>
Tensor<T> concat_batch(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw TensorError("concat_batch: empty input list");
  detail::require_4d(parts[0], "concat_batch input");
  const std::int64_t c = parts[0].dim(1), h = parts[0].dim(2), w = parts[0].dim(3);
  std::int64_t total = 0;
  bool needs_grad = false;
  for (const auto& p : parts) {
    detail::require_4d(p, "concat_batch input");
    if (p.dim(1) != c || p.dim(2) != h || p.dim(3) != w)
      throw TensorError("concat_batch: item shape " + shape_str(p.shape()) +
                        " differs from " + shape_str(parts[0].shape()));
    total += p.dim(0);
    needs_grad = needs_grad || p.requires_grad();
  }
  auto out = detail::make_node<T>(Shape{total, c, h, w}, "concat_batch");
  std::int64_t off = 0;
  const std::int64_t item = c * h * w;
  for (const auto& p : parts) {
    const auto pv = p.value();
    std::copy(pv.begin(), pv.end(), out->value.begin() + off);
    off += p.numel();
  }
  if ((out->requires_grad = needs_grad)) {
    std::vector<Node<T>*> raw;
    for (const auto& p : parts) {
      out->parents.push_back(p.node());
      raw.push_back(p.node().get());
    }
    out->backward_fn = [raw, item](Node<T>& self) {
      std::int64_t o = 0;
      for (Node<T>* p : raw) {
        const std::int64_t len = p->numel();
        if (p->requires_grad) {
          p->ensure_grad();
          for (std::int64_t i = 0; i < len; ++i) p->grad[i] += self.grad[o + i];
        }
        o += len;
      }
      (void)item;
    };
  }
  return Tensor<T>(out);
}

// Contiguous [start, start+len) range of the batch dimension.
template <typename T>
Tensor<T> narrow_batch(const Tensor<T>& x, std::int64_t start, std::int64_t len) {
  detail::require_4d(x, "narrow_batch input");
  if (start < 0 || len < 1 || start + len > x.dim(0))
    throw TensorError("narrow_batch: range [" + std::to_string(start) + "," +
                      std::to_string(start + len) + ") outside batch of " +
                      std::to_string(x.dim(0)));
  const std::int64_t item = x.dim(1) * x.dim(2) * x.dim(3);
  auto out = detail::make_node<T>(Shape{len, x.dim(1), x.dim(2), x.dim(3)}, "narrow_batch");
  const auto xv = x.value();
  std::copy_n(xv.data() + start * item, len * item, out->value.data());
  if ((out->requires_grad = x.requires_grad())) {
    out->parents = {x.node()};
    Node<T>* xp = x.node().get();
    out->backward_fn = [xp, start, item](Node<T>& self) {
      xp->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        xp->grad[start * item + static_cast<std::int64_t>(i)] += self.grad[i];
    };
  }
  return Tensor<T>(out);
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  auto out = detail::make_node<T>(x.shape(), "relu");
  const auto xv = x.value();
  for (std::size_t i = 0; i < out->value.size(); ++i)
    out->value[i] = xv[i] > T(0) ? xv[i] : T(0);
  if ((out->requires_grad = x.requires_grad())) {
    out->parents = {x.node()};
    Node<T>* xp = x.node().get();
    out->backward_fn = [xp](Node<T>& self) {
      xp->ensure_grad();
      // subgradient 0 at the kink
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        if (xp->value[i] > T(0)) xp->grad[i] += self.grad[i];
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T alpha = T(0.2)) {
  if (!(alpha > T(0) && alpha < T(1)))
    throw TensorError("leaky_relu: alpha must lie in (0,1)");
  auto out = detail::make_node<T>(x.shape(), "leaky_relu");
  const auto xv = x.value();
  for (std::size_t i = 0; i < out->value.size(); ++i)
    out->value[i] = xv[i] > T(0) ? xv[i] : alpha * xv[i];
  if ((out->requires_grad = x.requires_grad())) {
    out->parents = {x.node()};
    Node<T>* xp = x.node().get();
    out->backward_fn = [xp, alpha](Node<T>& self) {
      xp->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        xp->grad[i] += (xp->value[i] > T(0) ? self.grad[i] : alpha * self.grad[i]);
    };
  }
  return Tensor<T>(out);
}

namespace detail {
template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) {
    const T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}
}  // namespace detail

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  auto out = detail::make_node<T>(x.shape(), "sigmoid");
  const auto xv = x.value();
  for (std::size_t i = 0; i < out->value.size(); ++i)
    out->value[i] = detail::stable_sigmoid(xv[i]);
  if ((out->requires_grad = x.requires_grad())) {
    out->parents = {x.node()};
    Node<T>* xp = x.node().get();
    out->backward_fn = [xp](Node<T>& self) {
      xp->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const T y = self.value[i];
        xp->grad[i] += self.grad[i] * y * (T(1) - y);
      }
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> tanh_op(const Tensor<T>& x) {
  auto out = detail::make_node<T>(x.shape(), "tanh");
  const auto xv = x.value();
  for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = std::tanh(xv[i]);
  if ((out->requires_grad = x.requires_grad())) {
    out->parents = {x.node()};
    Node<T>* xp = x.node().get();
    out->backward_fn = [xp](Node<T>& self) {
      xp->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const T y = self.value[i];
        xp->grad[i] += self.grad[i] * (T(1) - y * y);
      }
    };
  }
  return Tensor<T>(out);
}

enum class ActKind { relu, leaky_relu, sigmoid, tanh };

template <typename T>
Tensor<T> activation(ActKind kind, const Tensor<T>& x, T alpha = T(0.2)) {
  switch (kind) {
    case ActKind::relu: return relu(x);
    case ActKind::leaky_relu: return leaky_relu(x, alpha);
    case ActKind::sigmoid: return sigmoid(x);
    case ActKind::tanh: return tanh_op(x);
  }
  throw TensorError("unknown activation kind");
}

// ---------------------------------------------------------------------------
// convolution
// ---------------------------------------------------------------------------

// input [N,C,H,W], weight [F,C,kH,kW], optional bias [F], stride >= 1,
// padding >= 0 -> [N,F,OH,OW] with OH = floor((H+2p-kH)/s)+1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, std::int64_t stride, std::int64_t padding) {
  detail::require_4d(input, "conv2d input");
  detail::require_4d(weight, "conv2d weight");
  if (stride < 1 || padding < 0) throw TensorError("conv2d: invalid stride/padding");
  const std::int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::int64_t f = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != c)
    throw TensorError("conv2d: input channels " + shape_str(input.shape()) +
                      " do not match weight " + shape_str(weight.shape()));
  if (kh > h + 2 * padding || kw > w + 2 * padding)
    throw TensorError("conv2d: kernel " + shape_str(weight.shape()) +
                      " larger than padded input " + shape_str(input.shape()));
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != f))
    throw TensorError("conv2d: bias shape " + shape_str(bias.shape()) +
                      " does not match filter count " + std::to_string(f));
  detail::ConvGeom g{c, h, w, f, kh, kw, stride, padding,
                     (h + 2 * padding - kh) / stride + 1,
                     (w + 2 * padding - kw) / stride + 1};
  auto out = detail::make_node<T>(Shape{n, f, g.OH, g.OW}, "conv2d");
  const std::int64_t ck = g.ck(), l = g.l();
  const T* xv = input.value().data();
  const T* wv = weight.value().data();
  const T* bv = bias.defined() ? bias.value().data() : nullptr;
  detail::parallel_for(n, [&](std::int64_t b0, std::int64_t b1) {
    std::vector<T> col(static_cast<std::size_t>(ck * l));
    for (std::int64_t i = b0; i < b1; ++i) {
      detail::im2col(xv + i * c * h * w, g, col.data());
      T* o = out->value.data() + i * f * l;
      std::fill(o, o + f * l, T(0));
      detail::gemm_nn_acc(o, wv, col.data(), f, ck, l);
      if (bv)
        for (std::int64_t fi = 0; fi < f; ++fi)
          for (std::int64_t j = 0; j < l; ++j) o[fi * l + j] += bv[fi];
    }
  });

  if ((out->requires_grad = detail::any_requires_grad<T>({&input, &weight, &bias}))) {
    out->parents = {input.node(), weight.node()};
    if (bias.defined()) out->parents.push_back(bias.node());
    Node<T>* xp = input.node().get();
    Node<T>* wp = weight.node().get();
    Node<T>* bp = bias.defined() ? bias.node().get() : nullptr;
    out->backward_fn = [xp, wp, bp, g, n](Node<T>& self) {
      const std::int64_t c = g.C, h = g.H, w = g.W, f = g.F;
      const std::int64_t ck = g.ck(), l = g.l();
      std::vector<T> buf(static_cast<std::size_t>(std::max(ck * l, l * ck)));
      if (xp->requires_grad) xp->ensure_grad();
      if (wp->requires_grad) wp->ensure_grad();
      if (bp && bp->requires_grad) bp->ensure_grad();
      for (std::int64_t i = 0; i < n; ++i) {
        const T* go = self.grad.data() + i * f * l;
        if (bp && bp->requires_grad) {
          for (std::int64_t fi = 0; fi < f; ++fi) {
            T acc = T(0);
            for (std::int64_t j = 0; j < l; ++j) acc += go[fi * l + j];
            bp->grad[fi] += acc;
          }
        }
        if (wp->requires_grad) {
          // gW (F x CK) += gout (F x L) * patches(x) (L x CK)
          detail::im2row(xp->value.data() + i * c * h * w, g, buf.data());
          detail::gemm_nn_acc(wp->grad.data(), go, buf.data(), f, l, ck);
        }
        if (xp->requires_grad) {
          // gcol (CK x L) = W^T (CK x F) * gout (F x L), scattered back
          std::fill(buf.begin(), buf.begin() + ck * l, T(0));
          detail::gemm_tn_acc(buf.data(), wp->value.data(), go, ck, f, l);
          detail::col2im_acc(buf.data(), g, xp->grad.data() + i * c * h * w);
        }
      }
    };
  }
  return Tensor<T>(out);
}

// input [N,F,H,W], weight [F,C,kH,kW], optional bias [C] -> [N,C,OH,OW] with
// OH = (H-1)*s - 2p + kH. Exact adjoint of conv2d with the same weight and
// geometry: <conv2d(x,W), y> == <x, conv_transpose2d(y,W)>.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& weight,
                           const Tensor<T>& bias, std::int64_t stride,
                           std::int64_t padding) {
  detail::require_4d(input, "conv_transpose2d input");
  detail::require_4d(weight, "conv_transpose2d weight");
  if (stride < 1 || padding < 0)
    throw TensorError("conv_transpose2d: invalid stride/padding");
  const std::int64_t n = input.dim(0), f = input.dim(1), hi = input.dim(2), wi = input.dim(3);
  const std::int64_t c = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(0) != f)
    throw TensorError("conv_transpose2d: input channels " + shape_str(input.shape()) +
                      " do not match weight " + shape_str(weight.shape()));
  const std::int64_t oh = (hi - 1) * stride - 2 * padding + kh;
  const std::int64_t ow = (wi - 1) * stride - 2 * padding + kw;
  if (oh < 1 || ow < 1)
    throw TensorError("conv_transpose2d: output size would be non-positive for input " +
                      shape_str(input.shape()));
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != c))
    throw TensorError("conv_transpose2d: bias shape " + shape_str(bias.shape()) +
                      " does not match output channels " + std::to_string(c));
  // geometry expressed on the (larger) output image side
  detail::ConvGeom g{c, oh, ow, f, kh, kw, stride, padding, hi, wi};
  auto out = detail::make_node<T>(Shape{n, c, oh, ow}, "conv_transpose2d");
  const std::int64_t ck = g.ck(), l = g.l();
  const T* xv = input.value().data();
  const T* wv = weight.value().data();
  const T* bv = bias.defined() ? bias.value().data() : nullptr;
  detail::parallel_for(n, [&](std::int64_t b0, std::int64_t b1) {
    std::vector<T> col(static_cast<std::size_t>(ck * l));
    for (std::int64_t i = b0; i < b1; ++i) {
      std::fill(col.begin(), col.end(), T(0));
      detail::gemm_tn_acc(col.data(), wv, xv + i * f * l, ck, f, l);
      T* o = out->value.data() + i * c * oh * ow;
      std::fill(o, o + c * oh * ow, T(0));
      detail::col2im_acc(col.data(), g, o);
      if (bv)
        for (std::int64_t ci = 0; ci < c; ++ci)
          for (std::int64_t j = 0; j < oh * ow; ++j) o[ci * oh * ow + j] += bv[ci];
    }
  });

  if ((out->requires_grad = detail::any_requires_grad<T>({&input, &weight, &bias}))) {
    out->parents = {input.node(), weight.node()};
    if (bias.defined()) out->parents.push_back(bias.node());
    Node<T>* xp = input.node().get();
    Node<T>* wp = weight.node().get();
    Node<T>* bp = bias.defined() ? bias.node().get() : nullptr;
    out->backward_fn = [xp, wp, bp, g, n](Node<T>& self) {
      const std::int64_t c = g.C, oh = g.H, ow = g.W, f = g.F;
      const std::int64_t ck = g.ck(), l = g.l();
      std::vector<T> buf(static_cast<std::size_t>(ck * l));
      if (xp->requires_grad) xp->ensure_grad();
      if (wp->requires_grad) wp->ensure_grad();
      if (bp && bp->requires_grad) bp->ensure_grad();
      for (std::int64_t i = 0; i < n; ++i) {
        const T* go = self.grad.data() + i * c * oh * ow;
        if (bp && bp->requires_grad) {
          for (std::int64_t ci = 0; ci < c; ++ci) {
            T acc = T(0);
            for (std::int64_t j = 0; j < oh * ow; ++j) acc += go[ci * oh * ow + j];
            bp->grad[ci] += acc;
          }
        }
        if (xp->requires_grad) {
          // ginput (F x L) += W (F x CK) * patches(gout) (CK x L)
          detail::im2col(go, g, buf.data());
          detail::gemm_nn_acc(xp->grad.data() + i * f * l, wp->value.data(), buf.data(),
                              f, ck, l);
        }
        if (wp->requires_grad) {
          // gW (F x CK) += input (F x L) * patches(gout) (L x CK)
          detail::im2row(go, g, buf.data());
          detail::gemm_nn_acc(wp->grad.data(), xp->value.data() + i * f * l, buf.data(),
                              f, l, ck);
        }
      }
    };
  }
  return Tensor<T>(out);
}

// ---------------------------------------------------------------------------
// batch normalization
// ---------------------------------------------------------------------------

template <typename T>
struct RunningStats {
  std::vector<T> mean, var;
  T momentum = T(0.1);

  void init(std::int64_t channels) {
    mean.assign(static_cast<std::size_t>(channels), T(0));
    var.assign(static_cast<std::size_t>(channels), T(1));
  }
};

// Per-channel normalization over (N,H,W). Train mode uses batch statistics
// (biased variance) and updates the running stats in place; eval mode uses
// the running stats.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     RunningStats<T>& rs, Mode mode, T eps = T(1e-5)) {
  detail::require_4d(x, "batch_norm input");
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (gamma.numel() != c || beta.numel() != c)
    throw TensorError("batch_norm: gamma/beta must have one entry per channel");
  if (static_cast<std::int64_t>(rs.mean.size()) != c)
    throw TensorError("batch_norm: running stats not initialized for " +
                      std::to_string(c) + " channels");
  const std::int64_t m = n * h * w;
  if (mode == Mode::train && m < 2)
    throw TensorError("batch_norm: train mode needs at least 2 elements per channel, got " +
                      std::to_string(m) + " for input " + shape_str(x.shape()));

  auto out = detail::make_node<T>(x.shape(), "batch_norm");
  const auto xv = x.value();
  const auto gv = gamma.value(), bv = beta.value();
  std::vector<T> ch_mean(static_cast<std::size_t>(c)), ch_invstd(static_cast<std::size_t>(c));
  const std::int64_t hw = h * w;
  for (std::int64_t ci = 0; ci < c; ++ci) {
    T mu, var;
    if (mode == Mode::train) {
      T acc = T(0);
      for (std::int64_t i = 0; i < n; ++i) {
        const T* p = xv.data() + (i * c + ci) * hw;
        for (std::int64_t j = 0; j < hw; ++j) acc += p[j];
      }
      mu = acc / static_cast<T>(m);
      T vacc = T(0);
      for (std::int64_t i = 0; i < n; ++i) {
        const T* p = xv.data() + (i * c + ci) * hw;
        for (std::int64_t j = 0; j < hw; ++j) {
          const T d = p[j] - mu;
          vacc += d * d;
        }
      }
      var = vacc / static_cast<T>(m);
      rs.mean[ci] = (T(1) - rs.momentum) * rs.mean[ci] + rs.momentum * mu;
      rs.var[ci] = (T(1) - rs.momentum) * rs.var[ci] + rs.momentum * var;
    } else {
      mu = rs.mean[ci];
      var = rs.var[ci];
    }
    ch_mean[ci] = mu;
    ch_invstd[ci] = T(1) / std::sqrt(var + eps);
    const T k = gv[ci] * ch_invstd[ci];
    const T b = bv[ci] - k * mu;
    for (std::int64_t i = 0; i < n; ++i) {
      const T* p = xv.data() + (i * c + ci) * hw;
      T* o = out->value.data() + (i * c + ci) * hw;
      for (std::int64_t j = 0; j < hw; ++j) o[j] = k * p[j] + b;
    }
  }

  if ((out->requires_grad = detail::any_requires_grad<T>({&x, &gamma, &beta}))) {
    out->parents = {x.node(), gamma.node(), beta.node()};
    Node<T>* xp = x.node().get();
    Node<T>* gp = gamma.node().get();
    Node<T>* bp = beta.node().get();
    const bool train = mode == Mode::train;
    out->backward_fn = [xp, gp, bp, ch_mean, ch_invstd, n, c, hw, m, train](Node<T>& self) {
      if (xp->requires_grad) xp->ensure_grad();
      if (gp->requires_grad) gp->ensure_grad();
      if (bp->requires_grad) bp->ensure_grad();
      for (std::int64_t ci = 0; ci < c; ++ci) {
        const T mu = ch_mean[ci], istd = ch_invstd[ci], gam = gp->value[ci];
        T sum_g = T(0), sum_gx = T(0);
        for (std::int64_t i = 0; i < n; ++i) {
          const T* g = self.grad.data() + (i * c + ci) * hw;
          const T* xd = xp->value.data() + (i * c + ci) * hw;
          for (std::int64_t j = 0; j < hw; ++j) {
            sum_g += g[j];
            sum_gx += g[j] * (xd[j] - mu) * istd;
          }
        }
        if (gp->requires_grad) gp->grad[ci] += sum_gx;
        if (bp->requires_grad) bp->grad[ci] += sum_g;
        if (xp->requires_grad) {
          if (train) {
            const T inv_m = T(1) / static_cast<T>(m);
            for (std::int64_t i = 0; i < n; ++i) {
              const T* g = self.grad.data() + (i * c + ci) * hw;
              const T* xd = xp->value.data() + (i * c + ci) * hw;
              T* gx = xp->grad.data() + (i * c + ci) * hw;
              for (std::int64_t j = 0; j < hw; ++j) {
                const T xhat = (xd[j] - mu) * istd;
                gx[j] += gam * istd * (g[j] - inv_m * sum_g - xhat * inv_m * sum_gx);
              }
            }
          } else {
            const T k = gam * istd;
            for (std::int64_t i = 0; i < n; ++i) {
              const T* g = self.grad.data() + (i * c + ci) * hw;
              T* gx = xp->grad.data() + (i * c + ci) * hw;
              for (std::int64_t j = 0; j < hw; ++j) gx[j] += k * g[j];
            }
          }
        }
      }
    };
  }
  return Tensor<T>(out);
}

// ---------------------------------------------------------------------------
// stochastic regularizers
// ---------------------------------------------------------------------------

// Train mode zeroes each element with probability p and scales survivors by
// 1/(1-p); eval mode (or p == 0) is the identity.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, Mode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw TensorError("dropout: p must lie in [0,1)");
  if (mode == Mode::eval || p == 0.0) return x;
  auto out = detail::make_node<T>(x.shape(), "dropout");
  const T keep_scale = T(1.0 / (1.0 - p));
  auto mask = std::make_shared<std::vector<T>>(out->value.size());
  const auto xv = x.value();
  for (std::size_t i = 0; i < out->value.size(); ++i) {
    (*mask)[i] = rng.uniform() < p ? T(0) : keep_scale;
    out->value[i] = xv[i] * (*mask)[i];
  }
  if ((out->requires_grad = x.requires_grad())) {
    out->parents = {x.node()};
    Node<T>* xp = x.node().get();
    out->backward_fn = [xp, mask](Node<T>& self) {
      xp->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        xp->grad[i] += self.grad[i] * (*mask)[i];
    };
  }
  return Tensor<T>(out);
}

// Additive noise alternative to dropout; identity in eval mode.
template <typename T>
Tensor<T> gaussian_noise(const Tensor<T>& x, double sigma, Mode mode, Rng& rng) {
  if (sigma < 0.0) throw TensorError("gaussian_noise: sigma must be non-negative");
  if (mode == Mode::eval || sigma == 0.0) return x;
  auto out = detail::make_node<T>(x.shape(), "gaussian_noise");
  const auto xv = x.value();
  for (std::size_t i = 0; i < out->value.size(); ++i)
    out->value[i] = xv[i] + static_cast<T>(rng.normal(0.0, sigma));
  if ((out->requires_grad = x.requires_grad())) {
    out->parents = {x.node()};
    Node<T>* xp = x.node().get();
    out->backward_fn = [xp](Node<T>& self) {
      xp->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) xp->grad[i] += self.grad[i];
    };
  }
  return Tensor<T>(out);
}

// ---------------------------------------------------------------------------
// resampling
// ---------------------------------------------------------------------------

namespace detail {
inline std::int64_t nearest_src(std::int64_t i, std::int64_t in_size,
                                std::int64_t out_size) {
  const double src = (static_cast<double>(i) + 0.5) *
                     (static_cast<double>(in_size) / static_cast<double>(out_size));
  auto s = static_cast<std::int64_t>(src);
  return s >= in_size ? in_size - 1 : s;
}
}  // namespace detail

template <typename T>
Tensor<T> resize_nearest(const Tensor<T>& x, std::int64_t out_h, std::int64_t out_w) {
  detail::require_4d(x, "resize_nearest input");
  if (out_h < 1 || out_w < 1) throw TensorError("resize_nearest: invalid target size");
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  auto out = detail::make_node<T>(Shape{n, c, out_h, out_w}, "resize_nearest");
  std::vector<std::int64_t> src_i(static_cast<std::size_t>(out_h)),
      src_j(static_cast<std::size_t>(out_w));
  for (std::int64_t i = 0; i < out_h; ++i) src_i[i] = detail::nearest_src(i, h, out_h);
  for (std::int64_t j = 0; j < out_w; ++j) src_j[j] = detail::nearest_src(j, w, out_w);
  const auto xv = x.value();
  for (std::int64_t p = 0; p < n * c; ++p) {
    const T* src = xv.data() + p * h * w;
    T* dst = out->value.data() + p * out_h * out_w;
    for (std::int64_t i = 0; i < out_h; ++i)
      for (std::int64_t j = 0; j < out_w; ++j)
        dst[i * out_w + j] = src[src_i[i] * w + src_j[j]];
  }
  if ((out->requires_grad = x.requires_grad())) {
    out->parents = {x.node()};
    Node<T>* xp = x.node().get();
    out->backward_fn = [xp, src_i, src_j, n, c, h, w, out_h, out_w](Node<T>& self) {
      xp->ensure_grad();
      for (std::int64_t p = 0; p < n * c; ++p) {
        T* gx = xp->grad.data() + p * h * w;
        const T* g = self.grad.data() + p * out_h * out_w;
        for (std::int64_t i = 0; i < out_h; ++i)
          for (std::int64_t j = 0; j < out_w; ++j)
            gx[src_i[i] * w + src_j[j]] += g[i * out_w + j];
      }
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, std::int64_t out_h, std::int64_t out_w) {
  detail::require_4d(x, "resize_bilinear input");
  if (out_h < 1 || out_w < 1) throw TensorError("resize_bilinear: invalid target size");
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  auto out = detail::make_node<T>(Shape{n, c, out_h, out_w}, "resize_bilinear");

  struct Tap {
    std::int64_t lo, hi;
    T w_lo, w_hi;
  };
  auto taps = [](std::int64_t out_size, std::int64_t in_size) {
    std::vector<Tap> t(static_cast<std::size_t>(out_size));
    const double s = static_cast<double>(in_size) / static_cast<double>(out_size);
    for (std::int64_t i = 0; i < out_size; ++i) {
      double src = (static_cast<double>(i) + 0.5) * s - 0.5;
      if (src < 0) src = 0;
      if (src > static_cast<double>(in_size - 1)) src = static_cast<double>(in_size - 1);
      const auto lo = static_cast<std::int64_t>(src);
      const std::int64_t hi = lo + 1 < in_size ? lo + 1 : lo;
      const T frac = static_cast<T>(src - static_cast<double>(lo));
      t[i] = {lo, hi, T(1) - frac, frac};
    }
    return t;
  };
  const auto ti = taps(out_h, h), tj = taps(out_w, w);
  const auto xv = x.value();
  for (std::int64_t p = 0; p < n * c; ++p) {
    const T* src = xv.data() + p * h * w;
    T* dst = out->value.data() + p * out_h * out_w;
    for (std::int64_t i = 0; i < out_h; ++i)
      for (std::int64_t j = 0; j < out_w; ++j) {
        const Tap &a = ti[i], &b = tj[j];
        dst[i * out_w + j] = a.w_lo * (b.w_lo * src[a.lo * w + b.lo] + b.w_hi * src[a.lo * w + b.hi]) +
                             a.w_hi * (b.w_lo * src[a.hi * w + b.lo] + b.w_hi * src[a.hi * w + b.hi]);
      }
  }
  if ((out->requires_grad = x.requires_grad())) {
    out->parents = {x.node()};
    Node<T>* xp = x.node().get();
    out->backward_fn = [xp, ti, tj, n, c, h, w, out_h, out_w](Node<T>& self) {
      xp->ensure_grad();
      for (std::int64_t p = 0; p < n * c; ++p) {
        T* gx = xp->grad.data() + p * h * w;
        const T* g = self.grad.data() + p * out_h * out_w;
        for (std::int64_t i = 0; i < out_h; ++i)
          for (std::int64_t j = 0; j < out_w; ++j) {
            const Tap &a = ti[i], &b = tj[j];
            const T gg = g[i * out_w + j];
            gx[a.lo * w + b.lo] += a.w_lo * b.w_lo * gg;
            gx[a.lo * w + b.hi] += a.w_lo * b.w_hi * gg;
            gx[a.hi * w + b.lo] += a.w_hi * b.w_lo * gg;
            gx[a.hi * w + b.hi] += a.w_hi * b.w_hi * gg;
          }
      }
    };
  }
  return Tensor<T>(out);
}

}  // namespace rvseg
