#include "rlab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace rlab {

double percentile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("percentile of an empty list");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("percentile fraction must lie in [0,1]");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

SummaryStats summarize(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("summarize: empty score list");
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());

  SummaryStats s;
  s.count = sorted.size();
  // Summing the sorted copy keeps the result independent of input order.
  s.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(s.count);
  if (s.count > 1) {
    double ss = 0.0;
    for (double x : sorted) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.count - 1));
  }
  s.min = sorted.front();
  s.max = sorted.back();
  s.p25 = percentile_sorted(sorted, 0.25);
  s.p50 = percentile_sorted(sorted, 0.50);
  s.p75 = percentile_sorted(sorted, 0.75);
  // Rounding in the mean can push it a hair outside [min, max] for constant lists.
  s.mean = std::clamp(s.mean, s.min, s.max);
  return s;
}

std::vector<double> epoch_means(std::span<const double> scores, std::size_t epoch_size) {
  if (epoch_size == 0) throw std::invalid_argument("epoch_means: epoch_size must be >= 1");
  std::vector<double> out;
  for (std::size_t start = 0; start < scores.size(); start += epoch_size) {
    const std::size_t end = std::min(start + epoch_size, scores.size());
    double sum = 0.0;
    for (std::size_t i = start; i < end; ++i) sum += scores[i];
    out.push_back(sum / static_cast<double>(end - start));
  }
  return out;
}

}  // namespace rlab
