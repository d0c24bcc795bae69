#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "rvseg/checks.hpp"
#include "rvseg/metrics.hpp"

using namespace rvseg;

namespace {
std::vector<std::uint8_t> random_mask(Rng& rng, int n, double density) {
  std::vector<std::uint8_t> m(n, 0);
  for (auto& v : m) v = rng.uniform() < density ? 1 : 0;
  return m;
}
}  // namespace

TEST_CASE("dice values and conventions") {
  std::vector<std::uint8_t> a(16, 0), b(16, 0);
  CHECK(dice(a, b) == 1.0);  // both empty

  a[0] = a[1] = a[2] = a[3] = 1;
  b[2] = b[3] = b[4] = b[5] = 1;
  CHECK(dice(a, b) == doctest::Approx(0.5));  // |A|=4 |B|=4 inter=2
  CHECK(dice(a, a) == 1.0);

  std::vector<std::uint8_t> c(16, 0);
  c[10] = 1;
  std::vector<std::uint8_t> d(16, 0);
  d[12] = 1;
  CHECK(dice(c, d) == 0.0);  // disjoint, non-empty

  std::vector<std::uint8_t> bad(16, 0);
  bad[3] = 2;
  CHECK_THROWS_AS(dice(bad, a), MetricError);
  CHECK_THROWS_AS(dice(a, std::vector<std::uint8_t>(9, 0)), MetricError);
}

TEST_CASE("dice is symmetric on random pairs") {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    auto a = random_mask(rng, 64, rng.uniform(0, 0.7));
    auto b = random_mask(rng, 64, rng.uniform(0, 0.7));
    CHECK(dice(a, b) == dice(b, a));
  }
}

TEST_CASE("hausdorff values and conventions") {
  std::vector<std::uint8_t> a(25, 0), b(25, 0);
  CHECK(hausdorff(a, b, 5, 5, {1, 1}) == 0.0);  // both empty

  a[0] = 1;
  CHECK(hausdorff(a, b, 5, 5, {1, 1}) ==
        doctest::Approx(image_diagonal_mm(5, 5, {1, 1})));  // one empty

  b[3 * 5 + 4] = 1;  // (3,4) vs (0,0): 3-4-5 triangle
  CHECK(hausdorff(a, b, 5, 5, {1, 1}) == doctest::Approx(5.0));
  CHECK(hausdorff(b, a, 5, 5, {1, 1}) == doctest::Approx(5.0));
  CHECK(hausdorff(a, a, 5, 5, {1, 1}) == 0.0);

  // anisotropic spacing
  CHECK(hausdorff(a, b, 5, 5, {2, 1}) ==
        doctest::Approx(std::sqrt(36.0 + 16.0)));
}

TEST_CASE("hausdorff outlier dominates regardless of argument order") {
  // B is a blob; A is the same blob plus one outlier 10 mm away
  const std::int64_t h = 24, w = 24;
  std::vector<std::uint8_t> blob(h * w, 0);
  for (std::int64_t y = 4; y <= 7; ++y)
    for (std::int64_t x = 4; x <= 7; ++x) blob[y * w + x] = 1;
  auto a = blob;
  a[7 * w + 17] = 1;  // 10 px right of (7,7)
  CHECK(hausdorff(a, blob, h, w, {1, 1}) == doctest::Approx(10.0));
  CHECK(hausdorff(blob, a, h, w, {1, 1}) == doctest::Approx(10.0));
}

TEST_CASE("hausdorff and dice match the brute-force oracles on 200 pairs") {
  Rng rng(424242);
  int exact = 0;
  double worst = 0;
  for (int i = 0; i < 200; ++i) {
    const std::int64_t h = 16, w = 16;
    auto a = random_mask(rng, h * w, i == 0 || i == 1 ? 0.0 : rng.uniform(0.02, 0.6));
    auto b = random_mask(rng, h * w, i == 0 || i == 2 ? 0.0 : rng.uniform(0.02, 0.6));
    PixelSpacing sp = i % 2 ? PixelSpacing{1.25f, 0.8f} : PixelSpacing{1.0f, 1.0f};
    if (dice(a, b) == checks::dice_oracle(a, b)) ++exact;
    worst = std::max(worst,
                     std::abs(hausdorff(a, b, h, w, sp) - checks::hausdorff_oracle(a, b, h, w, sp)));
  }
  CHECK(exact == 200);
  CHECK(worst < 1e-9);
}

TEST_CASE("hausdorff satisfies the triangle inequality on point sets") {
  Rng rng(77);
  const std::int64_t h = 12, w = 12;
  auto nonempty_mask = [&] {
    std::vector<std::uint8_t> m(h * w, 0);
    const int n = 1 + static_cast<int>(rng.uniform_int(6));
    for (int i = 0; i < n; ++i) m[rng.uniform_int(h * w)] = 1;
    return m;
  };
  for (int trial = 0; trial < 100; ++trial) {
    auto a = nonempty_mask(), b = nonempty_mask(), c = nonempty_mask();
    const PixelSpacing sp{1.0f, 1.0f};
    const double ab = hausdorff(a, b, h, w, sp);
    const double bc = hausdorff(b, c, h, w, sp);
    const double ac = hausdorff(a, c, h, w, sp);
    CHECK(ac <= ab + bc + 1e-12);
  }
}

TEST_CASE("region assignment splits stacks into contiguous thirds") {
  auto r12 = assign_regions(12);
  CHECK(std::count(r12.begin(), r12.end(), Region::top) == 4);
  CHECK(std::count(r12.begin(), r12.end(), Region::mid) == 4);
  CHECK(std::count(r12.begin(), r12.end(), Region::low) == 4);
  CHECK(r12.front() == Region::top);
  CHECK(r12.back() == Region::low);

  auto r3 = assign_regions(3);
  CHECK(r3 == std::vector<Region>{Region::top, Region::mid, Region::low});

  auto r10 = assign_regions(10);
  CHECK(std::count(r10.begin(), r10.end(), Region::top) == 4);
  CHECK(std::count(r10.begin(), r10.end(), Region::mid) == 3);
  CHECK(std::count(r10.begin(), r10.end(), Region::low) == 3);

  CHECK_THROWS_AS(assign_regions(2), MetricError);
}

TEST_CASE("area regression matches a hand OLS oracle") {
  std::vector<double> manual{1, 2, 3};
  auto same = area_regression(manual, manual);
  CHECK(same.slope == doctest::Approx(1.0));
  CHECK(same.intercept == doctest::Approx(0.0).scale(1));
  CHECK(same.r == doctest::Approx(1.0));

  std::vector<double> twice{2, 4, 6};
  auto doubled = area_regression(manual, twice);
  CHECK(doubled.slope == doctest::Approx(2.0));
  CHECK(doubled.r == doctest::Approx(1.0));

  // closed-form oracle computed by hand for manual [1,2,3], auto [1.1,1.9,3.2]
  std::vector<double> autos{1.1, 1.9, 3.2};
  auto reg = area_regression(manual, autos);
  const double mx = 2.0, my = (1.1 + 1.9 + 3.2) / 3.0;
  const double sxy = (1 - mx) * (1.1 - my) + (2 - mx) * (1.9 - my) + (3 - mx) * (3.2 - my);
  const double sxx = 2.0;
  const double syy = (1.1 - my) * (1.1 - my) + (1.9 - my) * (1.9 - my) + (3.2 - my) * (3.2 - my);
  CHECK(std::abs(reg.slope - sxy / sxx) < 1e-12);
  CHECK(std::abs(reg.intercept - (my - sxy / sxx * mx)) < 1e-12);
  CHECK(std::abs(reg.r - sxy / std::sqrt(sxx * syy)) < 1e-12);

  CHECK_THROWS_AS(area_regression(std::vector<double>{1, 1, 1}, manual), MetricError);
  CHECK_THROWS_AS(area_regression(std::vector<double>{1, 2}, std::vector<double>{1, 2}),
                  MetricError);
}

TEST_CASE("evaluate_stacks on perfect and degenerate predictors") {
  auto stacks = gen_phantom_dataset(2, 64, 64, 9, 21);
  std::vector<MaskStack> gts{stacks[0].mask, stacks[1].mask};
  std::vector<PixelSpacing> sp{stacks[0].image.spacing, stacks[1].image.spacing};

  // perfect predictor
  auto perfect = evaluate_stacks(gts, gts, sp);
  CHECK(perfect.slices.size() == 18);
  for (const auto& s : perfect.slices) {
    CHECK(s.dice == 1.0);
    CHECK(s.hausdorff_mm == 0.0);
  }
  REQUIRE(perfect.regression.has_value());
  CHECK(perfect.regression->r == doctest::Approx(1.0));
  CHECK(perfect.regression->slope == doctest::Approx(1.0));

  // all-background predictor
  std::vector<MaskStack> empty = gts;
  for (auto& m : empty) std::fill(m.voxels.begin(), m.voxels.end(), 0);
  auto degenerate = evaluate_stacks(empty, gts, sp);
  for (const auto& s : degenerate.slices) {
    CHECK(s.dice == 0.0);
    CHECK(s.hausdorff_mm == doctest::Approx(image_diagonal_mm(64, 64, sp[0])));
    CHECK(s.hd_empty_sentinel);
  }

  // overall mean equals the slice-count weighted mean of regional means
  auto shifted = gts;
  for (auto& m : shifted) {
    std::vector<std::uint8_t> moved(m.voxels.size(), 0);
    for (std::int64_t s = 0; s < m.slices; ++s)
      for (std::int64_t y = 0; y < m.height; ++y)
        for (std::int64_t x = 1; x < m.width; ++x)
          moved[(s * m.height + y) * m.width + x] =
              m.voxels[(s * m.height + y) * m.width + x - 1];
    m.voxels = std::move(moved);
  }
  auto rep = evaluate_stacks(shifted, gts, sp);
  const double weighted =
      (rep.top.di_mean * rep.top.count + rep.mid.di_mean * rep.mid.count +
       rep.low.di_mean * rep.low.count) /
      static_cast<double>(rep.overall.count);
  CHECK(rep.overall.di_mean == doctest::Approx(weighted).epsilon(1e-12));
}

TEST_CASE("report csvs carry the documented schema and footers") {
  auto stacks = gen_phantom_dataset(1, 64, 64, 9, 33);
  std::vector<MaskStack> gts{stacks[0].mask};
  std::vector<PixelSpacing> sp{stacks[0].image.spacing};
  auto rep = evaluate_stacks(gts, gts, sp);

  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "rvseg_test" / "csv";
  fs::create_directories(dir);
  write_report_csvs(rep, dir / "slices.csv", dir / "summary.csv");

  std::ifstream f1(dir / "slices.csv");
  std::string line;
  std::getline(f1, line);
  CHECK(line == "stack_id,slice,region,dice,hd_mm");
  int rows = 0;
  bool footer = false;
  while (std::getline(f1, line)) {
    if (line.rfind("#", 0) == 0)
      footer = true;
    else
      ++rows;
  }
  CHECK(rows == 9);
  CHECK(footer);

  std::ifstream f2(dir / "summary.csv");
  std::getline(f2, line);
  CHECK(line == "region,di_mean,di_sd,hd_mean,hd_sd");
  std::getline(f2, line);
  CHECK(line.rfind("top,", 0) == 0);
}
