#include "rvseg/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace rvseg {

namespace {

constexpr char kStackMagic[8] = {'R', 'V', 'S', 'T', 'A', 'C', 'K', '1'};
constexpr std::uint32_t kStackVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32(std::string& out, float f) {
  put_u32(out, std::bit_cast<std::uint32_t>(f));
}

struct Reader {
  std::string bytes;
  std::size_t pos = 0;
  std::string path;

  void need(std::size_t n, const char* what) {
    if (pos + n > bytes.size())
      throw IoError(path + ": truncated " + what + " at byte offset " +
                    std::to_string(pos));
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
};

double smoothstep_noise(Rng& rng) { return rng.uniform(-1.0, 1.0); }

}  // namespace

std::vector<PhantomStack> gen_phantom_dataset(int n_stacks, std::int64_t height,
                                              std::int64_t width, int slices_per_stack,
                                              std::uint64_t seed) {
  if (height < 64 || width < 64 || height % 64 != 0 || width % 64 != 0)
    throw IoError("phantom size " + std::to_string(height) + "x" + std::to_string(width) +
                  " must be divisible by 64");
  if (slices_per_stack < 8 || slices_per_stack > 16)
    throw IoError("slices per stack must lie in [8,16]");
  if (n_stacks < 1) throw IoError("phantom stack count must be positive");

  std::vector<PhantomStack> out;
  out.reserve(static_cast<std::size_t>(n_stacks));
  const double min_extent = static_cast<double>(std::min(height, width));

  for (int k = 0; k < n_stacks; ++k) {
    Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(k));
    PhantomStack ps;
    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "phantom_%04d", k);
    ps.image.id = ps.mask.id = idbuf;
    ps.image.slices = ps.mask.slices = slices_per_stack;
    ps.image.height = ps.mask.height = height;
    ps.image.width = ps.mask.width = width;
    ps.image.spacing = {1.0f, 1.0f};
    ps.image.voxels.assign(static_cast<std::size_t>(slices_per_stack * height * width), 0.f);
    ps.mask.voxels.assign(static_cast<std::size_t>(slices_per_stack * height * width), 0);

    const double r_base = rng.uniform(0.20, 0.28) * min_extent;
    const double apex_ratio = rng.uniform(0.30, 0.45);
    const double inner_ratio = rng.uniform(0.78, 0.92);
    const double theta = rng.uniform(0.0, 6.2831853);
    const double dirx = std::cos(theta), diry = std::sin(theta);
    double cx = width / 2.0 + rng.uniform(-0.08, 0.08) * width;
    double cy = height / 2.0 + rng.uniform(-0.08, 0.08) * height;

    for (int s = 0; s < slices_per_stack; ++s) {
      const double t = slices_per_stack > 1
                           ? static_cast<double>(s) / (slices_per_stack - 1)
                           : 0.0;
      const double r = r_base * (1.0 - (1.0 - apex_ratio) * t);
      const double rho = inner_ratio * r;
      // bite recedes towards the apex so the shape approaches a circle
      const double offset = r * (0.75 + 1.10 * t);
      cx += rng.uniform(-1.5, 1.5);
      cy += rng.uniform(-1.5, 1.5);
      cx = std::clamp(cx, r + 2.0, width - r - 3.0);
      cy = std::clamp(cy, r + 2.0, height - r - 3.0);
      const double ix = cx + offset * dirx;
      const double iy = cy + offset * diry;

      float* img = ps.image.slice(s);
      std::uint8_t* msk = ps.mask.slice(s);
      for (std::int64_t y = 0; y < height; ++y) {
        for (std::int64_t x = 0; x < width; ++x) {
          const double dxo = x - cx, dyo = y - cy;
          const double dxi = x - ix, dyi = y - iy;
          const bool in_outer = dxo * dxo + dyo * dyo <= r * r;
          const bool in_inner = dxi * dxi + dyi * dyi <= rho * rho;
          const bool in_crescent = in_outer && !in_inner;
          double base;
          if (in_crescent)
            base = 0.78;  // blood pool
          else if (in_inner)
            base = 0.60;  // neighbouring-chamber distractor
          else
            base = 0.30;  // background tissue
          const double v = base + 0.06 * smoothstep_noise(rng);
          img[y * width + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
          msk[y * width + x] = in_crescent ? 1 : 0;
        }
      }
    }
    out.push_back(std::move(ps));
  }
  return out;
}

std::optional<RoiBox> extract_roi(const MaskStack& mask, std::int64_t slice_index,
                                  std::int64_t margin) {
  if (slice_index < 0 || slice_index >= mask.slices)
    throw IoError("extract_roi: slice index " + std::to_string(slice_index) +
                  " outside stack of " + std::to_string(mask.slices));
  if (margin < 0) throw IoError("extract_roi: margin must be non-negative");
  const std::uint8_t* m = mask.slice(slice_index);
  std::int64_t min_x = mask.width, max_x = -1, min_y = mask.height, max_y = -1;
  for (std::int64_t y = 0; y < mask.height; ++y)
    for (std::int64_t x = 0; x < mask.width; ++x)
      if (m[y * mask.width + x]) {
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
        min_y = std::min(min_y, y);
        max_y = std::max(max_y, y);
      }
  if (max_x < 0) return std::nullopt;
  RoiBox box;
  box.slice_index = slice_index;
  box.margin = margin;
  box.x0 = std::max<std::int64_t>(0, min_x - margin);
  box.y0 = std::max<std::int64_t>(0, min_y - margin);
  box.x1 = std::min<std::int64_t>(mask.width, max_x + 1 + margin);
  box.y1 = std::min<std::int64_t>(mask.height, max_y + 1 + margin);
  return box;
}

namespace {

void check_box(const RoiBox& box, std::int64_t h, std::int64_t w,
               std::int64_t th, std::int64_t tw) {
  if (box.width() < 1 || box.height() < 1)
    throw IoError("crop_resize: degenerate box " + std::to_string(box.x0) + "," +
                  std::to_string(box.y0) + "," + std::to_string(box.x1) + "," +
                  std::to_string(box.y1));
  if (box.x0 < 0 || box.y0 < 0 || box.x1 > w || box.y1 > h)
    throw IoError("crop_resize: box outside image bounds");
  if (th < 1 || tw < 1) throw IoError("crop_resize: invalid target size");
}

}  // namespace

std::vector<float> crop_resize_image(const float* plane, std::int64_t h, std::int64_t w,
                                     const RoiBox& box, std::int64_t th, std::int64_t tw) {
  check_box(box, h, w, th, tw);
  const std::int64_t ch = box.height(), cw = box.width();
  std::vector<float> out(static_cast<std::size_t>(th * tw));
  const double sy = static_cast<double>(ch) / th, sx = static_cast<double>(cw) / tw;
  for (std::int64_t i = 0; i < th; ++i) {
    double src_y = (i + 0.5) * sy - 0.5;
    src_y = std::clamp(src_y, 0.0, static_cast<double>(ch - 1));
    const auto y_lo = static_cast<std::int64_t>(src_y);
    const std::int64_t y_hi = std::min(y_lo + 1, ch - 1);
    const double fy = src_y - y_lo;
    for (std::int64_t j = 0; j < tw; ++j) {
      double src_x = (j + 0.5) * sx - 0.5;
      src_x = std::clamp(src_x, 0.0, static_cast<double>(cw - 1));
      const auto x_lo = static_cast<std::int64_t>(src_x);
      const std::int64_t x_hi = std::min(x_lo + 1, cw - 1);
      const double fx = src_x - x_lo;
      auto at = [&](std::int64_t yy, std::int64_t xx) {
        return static_cast<double>(plane[(box.y0 + yy) * w + box.x0 + xx]);
      };
      const double v = (1 - fy) * ((1 - fx) * at(y_lo, x_lo) + fx * at(y_lo, x_hi)) +
                       fy * ((1 - fx) * at(y_hi, x_lo) + fx * at(y_hi, x_hi));
      out[i * tw + j] = static_cast<float>(v);
    }
  }
  return out;
}

std::vector<std::uint8_t> crop_resize_mask(const std::uint8_t* plane, std::int64_t h,
                                           std::int64_t w, const RoiBox& box,
                                           std::int64_t th, std::int64_t tw) {
  check_box(box, h, w, th, tw);
  const std::int64_t ch = box.height(), cw = box.width();
  std::vector<std::uint8_t> out(static_cast<std::size_t>(th * tw));
  for (std::int64_t i = 0; i < th; ++i) {
    auto sy = static_cast<std::int64_t>((i + 0.5) * (static_cast<double>(ch) / th));
    sy = std::min(sy, ch - 1);
    for (std::int64_t j = 0; j < tw; ++j) {
      auto sx = static_cast<std::int64_t>((j + 0.5) * (static_cast<double>(cw) / tw));
      sx = std::min(sx, cw - 1);
      out[i * tw + j] = plane[(box.y0 + sy) * w + box.x0 + sx];
    }
  }
  return out;
}

DatasetManifest split_dataset(std::vector<std::string> ids,
                              std::array<double, 3> fractions, std::uint64_t seed) {
  if (ids.size() < 3) throw IoError("split_dataset: need at least 3 stack ids");
  const double total = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(total - 1.0) > 1e-9)
    throw IoError("split_dataset: fractions sum to " + std::to_string(total) +
                  ", expected 1");
  for (double f : fractions)
    if (f < 0) throw IoError("split_dataset: negative fraction");

  Rng rng(seed);
  for (std::size_t i = ids.size(); i > 1; --i)
    std::swap(ids[i - 1], ids[rng.uniform_int(i)]);

  const auto n = static_cast<std::int64_t>(ids.size());
  std::array<std::int64_t, 3> counts{
      static_cast<std::int64_t>(fractions[0] * n),
      static_cast<std::int64_t>(fractions[1] * n),
      static_cast<std::int64_t>(fractions[2] * n)};
  std::int64_t leftover = n - counts[0] - counts[1] - counts[2];
  for (int i = 0; i < 3 && leftover > 0; ++i, --leftover) ++counts[i];

  DatasetManifest m;
  m.fractions = fractions;
  m.seed = seed;
  auto it = ids.begin();
  m.train.assign(it, it + counts[0]);
  it += counts[0];
  m.val.assign(it, it + counts[1]);
  it += counts[1];
  m.test.assign(it, it + counts[2]);
  return m;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write manifest " + path.string());
  for (const auto& id : manifest.train) f << "train\t" << id << "\n";
  for (const auto& id : manifest.val) f << "val\t" << id << "\n";
  for (const auto& id : manifest.test) f << "test\t" << id << "\n";
  if (!f) throw IoError("write failure on manifest " + path.string());
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read manifest " + path.string());
  DatasetManifest m;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw IoError(path.string() + ":" + std::to_string(lineno) +
                    ": expected <split>\\t<stack-id>");
    const std::string split = line.substr(0, tab), id = line.substr(tab + 1);
    if (split == "train")
      m.train.push_back(id);
    else if (split == "val")
      m.val.push_back(id);
    else if (split == "test")
      m.test.push_back(id);
    else
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": unknown split '" +
                    split + "'");
  }
  return m;
}

void stack_io_save(const SliceStack& stack, const MaskStack& mask,
                   const std::filesystem::path& path) {
  if (stack.slices != mask.slices || stack.height != mask.height ||
      stack.width != mask.width)
    throw IoError("stack_io_save: image and mask stacks disagree on shape");
  const std::size_t voxels =
      static_cast<std::size_t>(stack.slices * stack.height * stack.width);
  if (stack.voxels.size() != voxels || mask.voxels.size() != voxels)
    throw IoError("stack_io_save: voxel payload does not match header counts");

  std::string out;
  out.reserve(16 + voxels * 5);
  out.append(kStackMagic, sizeof kStackMagic);
  put_u32(out, kStackVersion);
  put_u32(out, static_cast<std::uint32_t>(stack.slices));
  put_u32(out, static_cast<std::uint32_t>(stack.height));
  put_u32(out, static_cast<std::uint32_t>(stack.width));
  put_f32(out, stack.spacing.row_mm);
  put_f32(out, stack.spacing.col_mm);
  for (float v : stack.voxels) put_f32(out, v);
  for (std::uint8_t v : mask.voxels) {
    if (v > 1) throw IoError("stack_io_save: non-binary mask value");
    out.push_back(static_cast<char>(v));
  }

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failure on " + path.string());
}

std::pair<SliceStack, MaskStack> stack_io_load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  Reader r;
  r.path = path.string();
  r.bytes.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());

  r.need(8, "magic");
  if (std::memcmp(r.bytes.data(), kStackMagic, 8) != 0)
    throw IoError(r.path + ": bad magic at byte offset 0");
  r.pos = 8;
  const std::uint32_t version = r.u32("version");
  if (version != kStackVersion)
    throw IoError(r.path + ": unsupported version " + std::to_string(version) +
                  " at byte offset 8");
  SliceStack stack;
  MaskStack mask;
  stack.slices = r.u32("slice count");
  stack.height = r.u32("height");
  stack.width = r.u32("width");
  stack.spacing.row_mm = r.f32("row spacing");
  stack.spacing.col_mm = r.f32("col spacing");
  if (stack.slices < 1 || stack.height < 1 || stack.width < 1)
    throw IoError(r.path + ": non-positive extent in header");
  const auto voxels = static_cast<std::size_t>(stack.slices * stack.height * stack.width);
  stack.voxels.resize(voxels);
  for (auto& v : stack.voxels) v = r.f32("image payload");
  r.need(voxels, "mask payload");
  mask.slices = stack.slices;
  mask.height = stack.height;
  mask.width = stack.width;
  mask.voxels.resize(voxels);
  for (auto& v : mask.voxels) {
    v = static_cast<std::uint8_t>(r.bytes[r.pos++]);
    if (v > 1)
      throw IoError(r.path + ": non-binary mask byte at offset " + std::to_string(r.pos - 1));
  }
  if (r.pos != r.bytes.size())
    throw IoError(r.path + ": " + std::to_string(r.bytes.size() - r.pos) +
                  " trailing bytes at offset " + std::to_string(r.pos));
  stack.id = mask.id = path.stem().string();
  return {std::move(stack), std::move(mask)};
}

void write_pgm(const std::filesystem::path& path, std::int64_t h, std::int64_t w,
               const std::uint8_t* gray) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << "P5\n" << w << " " << h << "\n255\n";
  f.write(reinterpret_cast<const char*>(gray), h * w);
  if (!f) throw IoError("write failure on " + path.string());
}

std::vector<std::uint8_t> overlay_boundary(const float* image, const std::uint8_t* mask,
                                           std::int64_t h, std::int64_t w) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(h * w));
  for (std::int64_t i = 0; i < h * w; ++i)
    out[i] = static_cast<std::uint8_t>(std::clamp(image[i], 0.0f, 1.0f) * 255.0f);
  auto fg = [&](std::int64_t y, std::int64_t x) {
    return y >= 0 && y < h && x >= 0 && x < w && mask[y * w + x] != 0;
  };
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x)
      if (fg(y, x) && (!fg(y - 1, x) || !fg(y + 1, x) || !fg(y, x - 1) || !fg(y, x + 1)))
        out[y * w + x] = 255;
  return out;
}

}  // namespace rvseg
