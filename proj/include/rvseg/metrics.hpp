#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rvseg/data.hpp"

namespace rvseg {

class MetricError : public std::runtime_error {
 public:
  explicit MetricError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class Region { top, mid, low };

inline const char* region_name(Region r) {
  switch (r) {
    case Region::top: return "top";
    case Region::mid: return "mid";
    case Region::low: return "low";
  }
  return "?";
}

// 2|A.B| / (|A| + |B|); 1.0 when both masks are empty.
double dice(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

// Symmetric Hausdorff distance in mm over all foreground pixels, computed
// with an exact Euclidean distance transform. Conventions: both masks empty
// -> 0; exactly one empty -> the image diagonal in mm.
double hausdorff(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b,
                 std::int64_t h, std::int64_t w, PixelSpacing spacing);

double image_diagonal_mm(std::int64_t h, std::int64_t w, PixelSpacing spacing);

// Contiguous thirds base->apex: first ceil(S/3) slices top, last floor(S/3)
// low, remainder mid.
std::vector<Region> assign_regions(std::int64_t stack_size);

struct AreaRegression {
  double slope = 0, intercept = 0, r = 0;
};

// Ordinary least squares auto = slope * manual + intercept; r is the Pearson
// correlation. Errors on length mismatch, fewer than 3 points or constant
// manual areas.
AreaRegression area_regression(std::span<const double> manual_mm2,
                               std::span<const double> auto_mm2);

struct SliceMetrics {
  std::string stack_id;
  std::int64_t slice_index = 0;
  Region region = Region::top;
  double dice = 0;
  double hausdorff_mm = 0;
  bool hd_empty_sentinel = false;  // set when exactly one mask was empty
};

struct RegionSummary {
  std::int64_t count = 0;
  double di_mean = 0, di_sd = 0;
  double hd_mean = 0, hd_sd = 0;
};

struct MetricsReport {
  std::vector<SliceMetrics> slices;
  RegionSummary top, mid, low, overall;
  std::optional<AreaRegression> regression;  // absent when undefined
};

// Per-slice metrics plus regional/overall aggregation and the
// manual-vs-automated area regression for matched prediction/truth stacks.
MetricsReport evaluate_stacks(const std::vector<MaskStack>& predictions,
                              const std::vector<MaskStack>& ground_truth,
                              const std::vector<PixelSpacing>& spacing);

// CSVs: per-slice `stack_id,slice,region,dice,hd_mm` and a summary
// `region,di_mean,di_sd,hd_mean,hd_sd`; conventions recorded as # footers.
void write_report_csvs(const MetricsReport& report,
                       const std::filesystem::path& per_slice_csv,
                       const std::filesystem::path& summary_csv);

}  // namespace rvseg
