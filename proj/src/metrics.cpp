#include "cemt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cemt/geometry.hpp"

namespace cemt {

namespace {

struct OverlapCounts {
  std::size_t a = 0, b = 0, both = 0;
};

OverlapCounts overlap_counts(const Volume& a, const Volume& b) {
  require_same_shape(a, b, "metrics overlap");
  OverlapCounts c;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool fa = a.data()[i] != 0.0;
    const bool fb = b.data()[i] != 0.0;
    c.a += fa;
    c.b += fb;
    c.both += fa && fb;
  }
  return c;
}

bool degenerate(const Volume& mask) {
  const std::size_t fg = mask.foreground_count();
  return fg == 0 || fg == mask.size();
}

// Finite penalty for degenerate cases: the physical diagonal of the volume.
double volume_diagonal(const Volume& v) {
  double acc = 0.0;
  for (int axis = 0; axis < 3; ++axis) {
    const double len = v.extent()[axis] * v.spacing()[axis];
    acc += len * len;
  }
  return std::sqrt(acc);
}

// Directed surface distances d(p, surface(target)) for every p in
// surface(source), computed by sampling the exact distance field of the
// target surface at the source surface voxels.
std::vector<double> directed_surface_distances(const Volume& source, const Volume& target) {
  const SurfacePointSet src = extract_surface(source);
  const SurfacePointSet tgt = extract_surface(target);

  std::vector<char> seeds(target.size(), 0);
  for (const auto& p : tgt.points) seeds[target.index(p[0], p[1], p[2])] = 1;
  const std::vector<double> d2 = squared_distance_to_seeds(seeds, target.extent(), target.spacing());

  std::vector<double> out;
  out.reserve(src.size());
  for (const auto& p : src.points) out.push_back(std::sqrt(d2[source.index(p[0], p[1], p[2])]));
  return out;
}

// Percentile by linear interpolation between closest ranks: rank = p/100 *
// (n-1) over the sorted values.
double percentile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  const double rank = p / 100.0 * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = static_cast<std::size_t>(std::ceil(rank));
  if (lo == hi) return values[lo];
  const double frac = rank - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

MetricSummary summarize(const std::vector<double>& xs, int degenerate_count) {
  MetricSummary s;
  s.n = static_cast<int>(xs.size());
  s.degenerate_count = degenerate_count;
  if (xs.empty()) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.std_dev = std::sqrt(ss / static_cast<double>(xs.size()));
  return s;
}

void append_summary_json(std::ostringstream& os, const char* name, const MetricSummary& s) {
  os << "\"" << name << "\":{\"mean\":" << s.mean << ",\"std\":" << s.std_dev << ",\"n\":" << s.n
     << ",\"degenerate_count\":" << s.degenerate_count << "}";
}

}  // namespace

double dice(const Volume& a, const Volume& b) {
  const OverlapCounts c = overlap_counts(a, b);
  if (c.a + c.b == 0) return 1.0;
  return 2.0 * static_cast<double>(c.both) / static_cast<double>(c.a + c.b);
}

double jaccard(const Volume& a, const Volume& b) {
  const OverlapCounts c = overlap_counts(a, b);
  const std::size_t uni = c.a + c.b - c.both;
  if (uni == 0) return 1.0;
  return static_cast<double>(c.both) / static_cast<double>(uni);
}

double asd(const Volume& a, const Volume& b) {
  require_same_shape(a, b, "asd");
  if (degenerate(a) || degenerate(b)) return volume_diagonal(a);
  const std::vector<double> ab = directed_surface_distances(a, b);
  const std::vector<double> ba = directed_surface_distances(b, a);
  double sum = 0.0;
  for (double d : ab) sum += d;
  for (double d : ba) sum += d;
  return sum / static_cast<double>(ab.size() + ba.size());
}

double hd95(const Volume& a, const Volume& b) {
  require_same_shape(a, b, "hd95");
  if (degenerate(a) || degenerate(b)) return volume_diagonal(a);
  std::vector<double> pooled = directed_surface_distances(a, b);
  const std::vector<double> ba = directed_surface_distances(b, a);
  pooled.insert(pooled.end(), ba.begin(), ba.end());
  return percentile(std::move(pooled), 95.0);
}

CaseMetrics evaluate_case(const Volume& pred, const Volume& gt) {
  require_same_shape(pred, gt, "evaluate_case");
  CaseMetrics m;
  m.dice = dice(pred, gt);
  m.jaccard = jaccard(pred, gt);
  if (degenerate(pred) || degenerate(gt)) {
    m.degenerate_flag = true;
    m.asd = volume_diagonal(pred);
    m.hd95 = m.asd;
  } else {
    const std::vector<double> pg = directed_surface_distances(pred, gt);
    const std::vector<double> gp = directed_surface_distances(gt, pred);
    double sum = 0.0;
    for (double d : pg) sum += d;
    for (double d : gp) sum += d;
    m.asd = sum / static_cast<double>(pg.size() + gp.size());
    std::vector<double> pooled = pg;
    pooled.insert(pooled.end(), gp.begin(), gp.end());
    m.hd95 = percentile(std::move(pooled), 95.0);
  }
  return m;
}

MetricsTable aggregate(std::vector<CaseMetrics> cases) {
  MetricsTable t;
  std::vector<double> d, j, a, h;
  int degenerate_count = 0;
  for (const CaseMetrics& c : cases) {
    d.push_back(c.dice);
    j.push_back(c.jaccard);
    a.push_back(c.asd);
    h.push_back(c.hd95);
    degenerate_count += c.degenerate_flag ? 1 : 0;
  }
  t.dice = summarize(d, degenerate_count);
  t.jaccard = summarize(j, degenerate_count);
  t.asd = summarize(a, degenerate_count);
  t.hd95 = summarize(h, degenerate_count);
  t.cases = std::move(cases);
  return t;
}

std::string metrics_csv(const MetricsTable& table) {
  std::ostringstream os;
  os.precision(17);
  os << "case,dice,jaccard,asd,hd95,degenerate\n";
  for (std::size_t i = 0; i < table.cases.size(); ++i) {
    const CaseMetrics& c = table.cases[i];
    os << i << "," << c.dice << "," << c.jaccard << "," << c.asd << "," << c.hd95 << ","
       << (c.degenerate_flag ? 1 : 0) << "\n";
  }
  return os.str();
}

std::string metrics_json(const MetricsTable& table) {
  std::ostringstream os;
  os.precision(17);
  os << "{";
  append_summary_json(os, "dice", table.dice);
  os << ",";
  append_summary_json(os, "jaccard", table.jaccard);
  os << ",";
  append_summary_json(os, "asd", table.asd);
  os << ",";
  append_summary_json(os, "hd95", table.hd95);
  os << "}";
  return os.str();
}

}  // namespace cemt
