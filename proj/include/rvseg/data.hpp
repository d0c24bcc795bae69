#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rvseg/rng.hpp"
#include "rvseg/tensor.hpp"

namespace rvseg {

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct PixelSpacing {
  float row_mm = 1.0f;
  float col_mm = 1.0f;
};

// Ordered base-to-apex sequence of short-axis slices, intensities in [0,1].
struct SliceStack {
  std::string id;
  std::int64_t slices = 0, height = 0, width = 0;
  PixelSpacing spacing;
  std::vector<float> voxels;  // S*H*W row-major

  const float* slice(std::int64_t s) const { return voxels.data() + s * height * width; }
  float* slice(std::int64_t s) { return voxels.data() + s * height * width; }
};

// Binary ground-truth masks matching a SliceStack.
struct MaskStack {
  std::string id;
  std::int64_t slices = 0, height = 0, width = 0;
  std::vector<std::uint8_t> voxels;  // values in {0,1}

  const std::uint8_t* slice(std::int64_t s) const {
    return voxels.data() + s * height * width;
  }
  std::uint8_t* slice(std::int64_t s) { return voxels.data() + s * height * width; }
};

struct PhantomStack {
  SliceStack image;
  MaskStack mask;
};

// Inclusive-exclusive pixel bounds, x = column, y = row.
struct RoiBox {
  std::int64_t slice_index = 0;
  std::int64_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  std::int64_t margin = 0;

  std::int64_t width() const { return x1 - x0; }
  std::int64_t height() const { return y1 - y0; }
};

struct DatasetManifest {
  std::vector<std::string> train, val, test;
  std::array<double, 3> fractions{0.70, 0.15, 0.15};
  std::uint64_t seed = 0;
};

// Synthetic RV-like stacks: a crescent whose area shrinks monotonically from
// base to apex and relaxes towards a circular shape at the apex, with center
// drift, a bright-pool / distractor / background intensity model and additive
// noise. Fully determined by (n_stacks, size, slices_per_stack, seed).
std::vector<PhantomStack> gen_phantom_dataset(int n_stacks, std::int64_t height,
                                              std::int64_t width, int slices_per_stack,
                                              std::uint64_t seed);

// Tight foreground bounding box expanded by margin and clamped to the image;
// empty slices yield nullopt so the caller can skip them in the local stream.
std::optional<RoiBox> extract_roi(const MaskStack& mask, std::int64_t slice_index,
                                  std::int64_t margin);

// Crop then resize. Images are interpolated bilinearly, masks with nearest
// neighbour so they stay binary.
std::vector<float> crop_resize_image(const float* plane, std::int64_t h, std::int64_t w,
                                     const RoiBox& box, std::int64_t target_h,
                                     std::int64_t target_w);
std::vector<std::uint8_t> crop_resize_mask(const std::uint8_t* plane, std::int64_t h,
                                           std::int64_t w, const RoiBox& box,
                                           std::int64_t target_h, std::int64_t target_w);

// Seeded shuffle followed by a contiguous partition; floor counts per split
// with the remainder given to train, then val.
DatasetManifest split_dataset(std::vector<std::string> ids,
                              std::array<double, 3> fractions, std::uint64_t seed);

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

// .rvs container: magic RVSTACK1, u32 version, u32 S/H/W, f32 spacing pair,
// S*H*W little-endian f32 image payload, S*H*W u8 mask payload.
void stack_io_save(const SliceStack& stack, const MaskStack& mask,
                   const std::filesystem::path& path);
std::pair<SliceStack, MaskStack> stack_io_load(const std::filesystem::path& path);

// 8-bit binary PGM (P5) export for external viewing.
void write_pgm(const std::filesystem::path& path, std::int64_t h, std::int64_t w,
               const std::uint8_t* gray);

// Image slice scaled to 8 bits with the mask boundary burned in at full white.
std::vector<std::uint8_t> overlay_boundary(const float* image, const std::uint8_t* mask,
                                           std::int64_t h, std::int64_t w);

template <typename T>
Tensor<T> stack_to_tensor(const SliceStack& s) {
  std::vector<T> data(s.voxels.begin(), s.voxels.end());
  return Tensor<T>::from_data({s.slices, 1, s.height, s.width}, std::move(data));
}

template <typename T>
Tensor<T> mask_to_tensor(const MaskStack& m) {
  std::vector<T> data(m.voxels.begin(), m.voxels.end());
  return Tensor<T>::from_data({m.slices, 1, m.height, m.width}, std::move(data));
}

}  // namespace rvseg
