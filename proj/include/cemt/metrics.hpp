#pragma once

#include <string>
#include <vector>

#include "cemt/volume.hpp"

namespace cemt {

// Per-case evaluation result. Surface distances are in spacing units.
// degenerate_flag is set when either mask has an empty surface (all-0 or
// all-1); asd/hd95 then hold the finite penalty value (volume diagonal).
struct CaseMetrics {
  double dice = 0.0;
  double jaccard = 0.0;
  double asd = 0.0;
  double hd95 = 0.0;
  bool degenerate_flag = false;
};

struct MetricSummary {
  double mean = 0.0;
  double std_dev = 0.0;  // population standard deviation
  int n = 0;
  int degenerate_count = 0;
};

struct MetricsTable {
  MetricSummary dice, jaccard, asd, hd95;
  std::vector<CaseMetrics> cases;
};

// Overlap ratios on binary masks. Both are 1 when both masks are empty.
double dice(const Volume& a, const Volume& b);
double jaccard(const Volume& a, const Volume& b);

// Symmetric average surface distance: mean over both surface point sets of
// each point's distance to the nearest point of the other surface.
double asd(const Volume& a, const Volume& b);

// 95th percentile (linear interpolation between closest ranks) of the pooled
// directed surface distances in both directions.
double hd95(const Volume& a, const Volume& b);

CaseMetrics evaluate_case(const Volume& pred, const Volume& gt);

// Aggregates every case; degenerate cases are included, not excluded.
MetricsTable aggregate(std::vector<CaseMetrics> cases);

// One CSV row per case, plus a JSON summary {metric: {mean, std, n,
// degenerate_count}}.
std::string metrics_csv(const MetricsTable& table);
std::string metrics_json(const MetricsTable& table);

}  // namespace cemt
