#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "rvseg/data.hpp"

using namespace rvseg;
namespace fs = std::filesystem;

namespace {
fs::path temp_dir(const char* name) {
  fs::path p = fs::temp_directory_path() / "rvseg_test" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}
}  // namespace

TEST_CASE("phantom generation is seed-deterministic and binary") {
  auto a = gen_phantom_dataset(3, 64, 64, 10, 77);
  auto b = gen_phantom_dataset(3, 64, 64, 10, 77);
  REQUIRE(a.size() == 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].image.voxels == b[i].image.voxels);
    CHECK(a[i].mask.voxels == b[i].mask.voxels);
    for (float v : a[i].image.voxels) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
    for (std::uint8_t v : a[i].mask.voxels) CHECK(v <= 1);
  }
  auto c = gen_phantom_dataset(3, 64, 64, 10, 78);
  CHECK(a[0].image.voxels != c[0].image.voxels);
  CHECK_THROWS_AS(gen_phantom_dataset(1, 100, 100, 10, 0), IoError);
  CHECK_THROWS_AS(gen_phantom_dataset(1, 64, 64, 4, 0), IoError);
}

TEST_CASE("phantom mask area decreases base to apex for nearly all stacks") {
  auto stacks = gen_phantom_dataset(100, 64, 64, 10, 1234);
  int strictly_decreasing = 0;
  for (const auto& ps : stacks) {
    const std::int64_t plane = ps.mask.height * ps.mask.width;
    bool strict = true;
    std::int64_t prev = -1;
    for (std::int64_t s = 0; s < ps.mask.slices; ++s) {
      std::int64_t area = 0;
      for (std::int64_t i = 0; i < plane; ++i) area += ps.mask.slice(s)[i];
      CHECK(area > 0);
      if (prev >= 0 && area >= prev) strict = false;
      prev = area;
    }
    if (strict) ++strictly_decreasing;
  }
  CHECK(strictly_decreasing >= 90);
}

TEST_CASE("roi extraction is tight, margin-expanded, clamped") {
  MaskStack m;
  m.id = "t";
  m.slices = 1;
  m.height = 32;
  m.width = 32;
  m.voxels.assign(32 * 32, 0);
  m.voxels[10 * 32 + 20] = 1;  // row 10, col 20
  auto box = extract_roi(m, 0, 0);
  REQUIRE(box.has_value());
  CHECK(box->x0 == 20);
  CHECK(box->y0 == 10);
  CHECK(box->x1 == 21);
  CHECK(box->y1 == 11);

  auto wide = extract_roi(m, 0, 4);
  CHECK(wide->x0 == 16);
  CHECK(wide->y0 == 6);
  CHECK(wide->x1 == 25);
  CHECK(wide->y1 == 15);

  std::fill(m.voxels.begin(), m.voxels.end(), 1);
  auto full = extract_roi(m, 0, 3);
  CHECK(full->x0 == 0);
  CHECK(full->y0 == 0);
  CHECK(full->x1 == 32);
  CHECK(full->y1 == 32);

  std::fill(m.voxels.begin(), m.voxels.end(), 0);
  CHECK_FALSE(extract_roi(m, 0, 2).has_value());
}

TEST_CASE("roi boxes contain every foreground pixel on random blobs") {
  Rng rng(55);
  for (int trial = 0; trial < 500; ++trial) {
    MaskStack m;
    m.slices = 1;
    m.height = 24;
    m.width = 24;
    m.voxels.assign(24 * 24, 0);
    const int n = 1 + static_cast<int>(rng.uniform_int(40));
    for (int i = 0; i < n; ++i)
      m.voxels[rng.uniform_int(24 * 24)] = 1;
    const auto margin = static_cast<std::int64_t>(rng.uniform_int(5));
    auto box = extract_roi(m, 0, margin);
    REQUIRE(box.has_value());
    for (std::int64_t y = 0; y < 24; ++y)
      for (std::int64_t x = 0; x < 24; ++x)
        if (m.voxels[y * 24 + x]) {
          CHECK(x >= box->x0);
          CHECK(x < box->x1);
          CHECK(y >= box->y0);
          CHECK(y < box->y1);
        }
  }
}

TEST_CASE("crop_resize: constants stay constant, masks stay binary, identity exact") {
  std::vector<float> img(16 * 16, 0.37f);
  RoiBox box{0, 2, 3, 10, 12, 0};
  auto out = crop_resize_image(img.data(), 16, 16, box, 8, 8);
  for (float v : out) CHECK(v == doctest::Approx(0.37f));

  Rng rng(9);
  std::vector<std::uint8_t> mask(16 * 16);
  for (auto& v : mask) v = rng.uniform() < 0.4 ? 1 : 0;
  auto resized = crop_resize_mask(mask.data(), 16, 16, box, 11, 7);
  for (std::uint8_t v : resized) CHECK(v <= 1);

  RoiBox full{0, 0, 0, 16, 16, 0};
  auto same = crop_resize_mask(mask.data(), 16, 16, full, 16, 16);
  CHECK(same == mask);

  RoiBox degenerate{0, 5, 5, 5, 9, 0};
  CHECK_THROWS_AS(crop_resize_image(img.data(), 16, 16, degenerate, 4, 4), IoError);
}

TEST_CASE("split_dataset follows the remainder rule and partitions ids") {
  std::vector<std::string> ids100;
  for (int i = 0; i < 100; ++i) ids100.push_back("s" + std::to_string(i));
  auto m = split_dataset(ids100, {0.70, 0.15, 0.15}, 3);
  CHECK(m.train.size() == 70);
  CHECK(m.val.size() == 15);
  CHECK(m.test.size() == 15);

  std::vector<std::string> ids10(ids100.begin(), ids100.begin() + 10);
  auto m10 = split_dataset(ids10, {0.70, 0.15, 0.15}, 3);
  CHECK(m10.train.size() == 8);
  CHECK(m10.val.size() == 1);
  CHECK(m10.test.size() == 1);

  auto m10b = split_dataset(ids10, {0.70, 0.15, 0.15}, 3);
  CHECK(m10.train == m10b.train);
  CHECK(m10.val == m10b.val);
  CHECK(m10.test == m10b.test);

  CHECK_THROWS_AS(split_dataset(ids10, {0.5, 0.2, 0.2}, 3), IoError);
  CHECK_THROWS_AS(split_dataset({"a", "b"}, {0.70, 0.15, 0.15}, 3), IoError);

  // disjoint and exhaustive across sizes and seeds
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + static_cast<int>(rng.uniform_int(60));
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) ids.push_back("x" + std::to_string(i));
    auto man = split_dataset(ids, {0.70, 0.15, 0.15}, rng.next_u64());
    std::set<std::string> seen;
    for (const auto& part : {man.train, man.val, man.test})
      for (const auto& id : part) CHECK(seen.insert(id).second);
    CHECK(seen.size() == ids.size());
  }
}

TEST_CASE("rvs stacks round-trip bitwise and reject corruption") {
  auto dir = temp_dir("rvs");
  auto stacks = gen_phantom_dataset(1, 64, 64, 8, 5);
  stacks[0].image.spacing = {1.25f, 0.8f};
  const fs::path p = dir / "phantom_0000.rvs";
  stack_io_save(stacks[0].image, stacks[0].mask, p);
  auto [img, msk] = stack_io_load(p);
  CHECK(img.voxels == stacks[0].image.voxels);
  CHECK(msk.voxels == stacks[0].mask.voxels);
  CHECK(img.spacing.row_mm == 1.25f);
  CHECK(img.spacing.col_mm == 0.8f);
  CHECK(img.id == "phantom_0000");

  // save-load-save byte identity
  const fs::path p2 = dir / "again.rvs";
  stack_io_save(img, msk, p2);
  std::ifstream f1(p, std::ios::binary), f2(p2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), {});
  std::string b2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(b1 == b2);

  // wrong magic
  std::string corrupted = b1;
  corrupted[0] = 'X';
  std::ofstream(dir / "bad.rvs", std::ios::binary) << corrupted;
  CHECK_THROWS_WITH_AS(stack_io_load(dir / "bad.rvs"), doctest::Contains("magic"),
                       IoError);

  // truncation reports a byte offset
  std::ofstream(dir / "short.rvs", std::ios::binary) << b1.substr(0, b1.size() / 2);
  CHECK_THROWS_WITH_AS(stack_io_load(dir / "short.rvs"), doctest::Contains("offset"),
                       IoError);
}

TEST_CASE("manifest save and load round trip") {
  auto dir = temp_dir("manifest");
  DatasetManifest m;
  m.train = {"a", "b"};
  m.val = {"c"};
  m.test = {"d"};
  save_manifest(m, dir / "manifest.txt");
  auto loaded = load_manifest(dir / "manifest.txt");
  CHECK(loaded.train == m.train);
  CHECK(loaded.val == m.val);
  CHECK(loaded.test == m.test);
}

TEST_CASE("pgm export and boundary overlay") {
  auto dir = temp_dir("pgm");
  std::vector<float> img(8 * 8, 0.5f);
  std::vector<std::uint8_t> mask(8 * 8, 0);
  for (int y = 2; y <= 5; ++y)
    for (int x = 2; x <= 5; ++x) mask[y * 8 + x] = 1;
  auto overlay = overlay_boundary(img.data(), mask.data(), 8, 8);
  CHECK(overlay.size() == 64);
  CHECK(overlay[2 * 8 + 2] == 255);   // boundary pixel
  CHECK(overlay[3 * 8 + 3] == 127);   // interior keeps the image value
  CHECK(overlay[0] == 127);           // background keeps the image value

  write_pgm(dir / "o.pgm", 8, 8, overlay.data());
  std::ifstream f(dir / "o.pgm", std::ios::binary);
  std::string head(9, '\0');
  f.read(head.data(), 9);
  CHECK(head == "P5\n8 8\n25");
}
