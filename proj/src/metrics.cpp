#include "rvseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace rvseg {

namespace {

void require_binary(std::span<const std::uint8_t> m, const char* what) {
  for (std::uint8_t v : m)
    if (v > 1) throw MetricError(std::string(what) + ": non-binary mask value");
}

// 1-D lower envelope of parabolas (Felzenszwalb/Huttenlocher), sample
// positions pos[i], heights f[i]; writes min_j ((pos[i]-pos[j])^2 + f[j]).
void edt_1d(const std::vector<double>& f, const std::vector<double>& pos,
            std::vector<double>& out, std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  constexpr double kInf = std::numeric_limits<double>::infinity();
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = 1; q < n; ++q) {
    if (f[q] == kInf) continue;
    while (true) {
      if (f[v[k]] == kInf) {
        // previous vertex never contributes
        if (k == 0) {
          v[0] = q;
          z[0] = -kInf;
          z[1] = kInf;
          break;
        }
        --k;
        continue;
      }
      const double s = ((f[q] + pos[q] * pos[q]) - (f[v[k]] + pos[v[k]] * pos[v[k]])) /
                       (2 * pos[q] - 2 * pos[v[k]]);
      if (s <= z[k]) {
        --k;
        continue;
      }
      ++k;
      v[k] = q;
      z[k] = s;
      z[k + 1] = kInf;
      break;
    }
  }
  if (f[v[0]] == kInf) {
    std::fill(out.begin(), out.begin() + n, kInf);
    return;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < pos[q]) ++k;
    const double d = pos[q] - pos[v[k]];
    out[q] = d * d + f[v[k]];
  }
}

// Exact squared Euclidean distance in mm^2 from every pixel to the nearest
// foreground pixel of `mask`; infinity when the mask is empty.
std::vector<double> squared_edt(std::span<const std::uint8_t> mask, std::int64_t h,
                                std::int64_t w, PixelSpacing spacing) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> d(static_cast<std::size_t>(h * w));
  for (std::int64_t i = 0; i < h * w; ++i) d[i] = mask[i] ? 0.0 : kInf;

  const std::int64_t max_n = std::max(h, w);
  std::vector<double> f(max_n), out(max_n), pos(max_n), z(max_n + 1);
  std::vector<int> v(max_n);

  // columns (row coordinate scaled by row_mm)
  for (std::int64_t i = 0; i < h; ++i) pos[i] = i * static_cast<double>(spacing.row_mm);
  for (std::int64_t x = 0; x < w; ++x) {
    bool any = false;
    for (std::int64_t y = 0; y < h; ++y) {
      f[y] = d[y * w + x];
      any = any || f[y] != kInf;
    }
    if (!any) continue;
    edt_1d({f.begin(), f.begin() + h}, pos, out, v, z);
    for (std::int64_t y = 0; y < h; ++y) d[y * w + x] = out[y];
  }
  // rows (column coordinate scaled by col_mm)
  for (std::int64_t j = 0; j < w; ++j) pos[j] = j * static_cast<double>(spacing.col_mm);
  for (std::int64_t y = 0; y < h; ++y) {
    bool any = false;
    for (std::int64_t x = 0; x < w; ++x) {
      f[x] = d[y * w + x];
      any = any || f[x] != kInf;
    }
    if (!any) continue;
    edt_1d({f.begin(), f.begin() + w}, pos, out, v, z);
    for (std::int64_t x = 0; x < w; ++x) d[y * w + x] = out[x];
  }
  return d;
}

double directed_hd(std::span<const std::uint8_t> from, const std::vector<double>& edt_sq,
                   std::int64_t n) {
  double worst = 0;
  for (std::int64_t i = 0; i < n; ++i)
    if (from[i]) worst = std::max(worst, edt_sq[i]);
  return std::sqrt(worst);
}

double mean_of(const std::vector<double>& xs) {
  double acc = 0;
  for (double x : xs) acc += x;
  return xs.empty() ? 0.0 : acc / static_cast<double>(xs.size());
}

double sd_of(const std::vector<double>& xs, double mean) {
  if (xs.empty()) return 0.0;
  double acc = 0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(xs.size()));
}

RegionSummary summarize(const std::vector<SliceMetrics>& slices,
                        std::optional<Region> region) {
  std::vector<double> di, hd;
  for (const auto& s : slices) {
    if (region && s.region != *region) continue;
    di.push_back(s.dice);
    hd.push_back(s.hausdorff_mm);
  }
  RegionSummary out;
  out.count = static_cast<std::int64_t>(di.size());
  out.di_mean = mean_of(di);
  out.di_sd = sd_of(di, out.di_mean);
  out.hd_mean = mean_of(hd);
  out.hd_sd = sd_of(hd, out.hd_mean);
  return out;
}

}  // namespace

double dice(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  if (a.size() != b.size())
    throw MetricError("dice: mask sizes differ (" + std::to_string(a.size()) + " vs " +
                      std::to_string(b.size()) + ")");
  require_binary(a, "dice lhs");
  require_binary(b, "dice rhs");
  std::int64_t inter = 0, ca = 0, cb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += a[i] & b[i];
    ca += a[i];
    cb += b[i];
  }
  if (ca + cb == 0) return 1.0;  // both empty
  return 2.0 * static_cast<double>(inter) / static_cast<double>(ca + cb);
}

double image_diagonal_mm(std::int64_t h, std::int64_t w, PixelSpacing spacing) {
  const double dy = static_cast<double>(h - 1) * spacing.row_mm;
  const double dx = static_cast<double>(w - 1) * spacing.col_mm;
  return std::sqrt(dy * dy + dx * dx);
}

double hausdorff(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b,
                 std::int64_t h, std::int64_t w, PixelSpacing spacing) {
  if (a.size() != b.size() || static_cast<std::int64_t>(a.size()) != h * w)
    throw MetricError("hausdorff: mask sizes do not match the stated extent");
  require_binary(a, "hausdorff lhs");
  require_binary(b, "hausdorff rhs");
  const bool a_empty = std::find(a.begin(), a.end(), 1) == a.end();
  const bool b_empty = std::find(b.begin(), b.end(), 1) == b.end();
  if (a_empty && b_empty) return 0.0;
  if (a_empty || b_empty) return image_diagonal_mm(h, w, spacing);
  const auto edt_b = squared_edt(b, h, w, spacing);
  const auto edt_a = squared_edt(a, h, w, spacing);
  return std::max(directed_hd(a, edt_b, h * w), directed_hd(b, edt_a, h * w));
}

std::vector<Region> assign_regions(std::int64_t stack_size) {
  if (stack_size < 3)
    throw MetricError("assign_regions: need at least 3 slices, got " +
                      std::to_string(stack_size));
  const std::int64_t top = (stack_size + 2) / 3;  // ceil(S/3)
  const std::int64_t low = stack_size / 3;        // floor(S/3)
  std::vector<Region> out(static_cast<std::size_t>(stack_size), Region::mid);
  for (std::int64_t i = 0; i < top; ++i) out[i] = Region::top;
  for (std::int64_t i = stack_size - low; i < stack_size; ++i) out[i] = Region::low;
  return out;
}

AreaRegression area_regression(std::span<const double> manual_mm2,
                               std::span<const double> auto_mm2) {
  if (manual_mm2.size() != auto_mm2.size())
    throw MetricError("area_regression: list lengths differ");
  const auto n = static_cast<double>(manual_mm2.size());
  if (manual_mm2.size() < 3) throw MetricError("area_regression: need at least 3 points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < manual_mm2.size(); ++i) {
    mx += manual_mm2[i];
    my += auto_mm2[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < manual_mm2.size(); ++i) {
    const double dx = manual_mm2[i] - mx, dy = auto_mm2[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0)
    throw MetricError("area_regression: manual areas are constant, R undefined");
  AreaRegression reg;
  reg.slope = sxy / sxx;
  reg.intercept = my - reg.slope * mx;
  reg.r = syy == 0 ? (sxy == 0 ? 1.0 : 0.0) : sxy / std::sqrt(sxx * syy);
  return reg;
}

MetricsReport evaluate_stacks(const std::vector<MaskStack>& predictions,
                              const std::vector<MaskStack>& ground_truth,
                              const std::vector<PixelSpacing>& spacing) {
  if (predictions.size() != ground_truth.size() || predictions.size() != spacing.size())
    throw MetricError("evaluate_stacks: stack list lengths differ");
  MetricsReport report;
  std::vector<double> manual_areas, auto_areas;
  for (std::size_t k = 0; k < predictions.size(); ++k) {
    const MaskStack& pred = predictions[k];
    const MaskStack& gt = ground_truth[k];
    if (pred.slices != gt.slices || pred.height != gt.height || pred.width != gt.width)
      throw MetricError("evaluate_stacks: stack " + gt.id + " shape mismatch");
    const auto regions = assign_regions(gt.slices);
    const std::int64_t plane = gt.height * gt.width;
    const double px_mm2 =
        static_cast<double>(spacing[k].row_mm) * static_cast<double>(spacing[k].col_mm);
    for (std::int64_t s = 0; s < gt.slices; ++s) {
      std::span<const std::uint8_t> p{pred.slice(s), static_cast<std::size_t>(plane)};
      std::span<const std::uint8_t> g{gt.slice(s), static_cast<std::size_t>(plane)};
      SliceMetrics m;
      m.stack_id = gt.id;
      m.slice_index = s;
      m.region = regions[static_cast<std::size_t>(s)];
      m.dice = dice(p, g);
      const bool p_empty = std::find(p.begin(), p.end(), 1) == p.end();
      const bool g_empty = std::find(g.begin(), g.end(), 1) == g.end();
      m.hausdorff_mm = hausdorff(p, g, gt.height, gt.width, spacing[k]);
      m.hd_empty_sentinel = p_empty != g_empty;
      report.slices.push_back(std::move(m));
      std::int64_t cp = 0, cg = 0;
      for (std::int64_t i = 0; i < plane; ++i) {
        cp += p[i];
        cg += g[i];
      }
      manual_areas.push_back(static_cast<double>(cg) * px_mm2);
      auto_areas.push_back(static_cast<double>(cp) * px_mm2);
    }
  }
  report.top = summarize(report.slices, Region::top);
  report.mid = summarize(report.slices, Region::mid);
  report.low = summarize(report.slices, Region::low);
  report.overall = summarize(report.slices, std::nullopt);
  bool manual_constant = true;
  for (std::size_t i = 1; i < manual_areas.size(); ++i)
    manual_constant = manual_constant && manual_areas[i] == manual_areas[0];
  if (manual_areas.size() >= 3 && !manual_constant)
    report.regression = area_regression(manual_areas, auto_areas);
  return report;
}

void write_report_csvs(const MetricsReport& report,
                       const std::filesystem::path& per_slice_csv,
                       const std::filesystem::path& summary_csv) {
  {
    std::ofstream f(per_slice_csv, std::ios::binary);
    if (!f) throw IoError("cannot write " + per_slice_csv.string());
    f << "stack_id,slice,region,dice,hd_mm\n";
    char buf[160];
    for (const auto& s : report.slices) {
      std::snprintf(buf, sizeof buf, "%s,%lld,%s,%.6f,%.6f\n", s.stack_id.c_str(),
                    static_cast<long long>(s.slice_index), region_name(s.region), s.dice,
                    s.hausdorff_mm);
      f << buf;
    }
    f << "# conventions: both-empty dice=1.0; hd for exactly-one-empty pair = image "
         "diagonal in mm\n";
  }
  {
    std::ofstream f(summary_csv, std::ios::binary);
    if (!f) throw IoError("cannot write " + summary_csv.string());
    f << "region,di_mean,di_sd,hd_mean,hd_sd\n";
    char buf[160];
    auto row = [&](const char* name, const RegionSummary& s) {
      std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f\n", name, s.di_mean, s.di_sd,
                    s.hd_mean, s.hd_sd);
      f << buf;
    };
    row("top", report.top);
    row("mid", report.mid);
    row("low", report.low);
    row("overall", report.overall);
    if (report.regression) {
      std::snprintf(buf, sizeof buf,
                    "# area_regression slope=%.9g intercept=%.9g r=%.9g\n",
                    report.regression->slope, report.regression->intercept,
                    report.regression->r);
      f << buf;
    } else {
      f << "# area_regression undefined\n";
    }
    f << "# conventions: both-empty dice=1.0; hd for exactly-one-empty pair = image "
         "diagonal in mm; sd is the population standard deviation\n";
  }
}

}  // namespace rvseg
