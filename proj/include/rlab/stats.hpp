#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace rlab {

struct SummaryStats {
  std::size_t count = 0;
  double mean = 0.0;
  double std = 0.0;  // sample (n-1) standard deviation; 0 for a single score
  double min = 0.0;
  double max = 0.0;
  double p25 = 0.0;
  double p50 = 0.0;
  double p75 = 0.0;
};

/// Throws std::invalid_argument on an empty list.
SummaryStats summarize(std::span<const double> scores);

/// Linear interpolation between closest ranks: position q*(n-1) in the
/// sorted values.
double percentile_sorted(std::span<const double> sorted, double q);

/// Mean of each consecutive block of `epoch_size` scores; a trailing partial
/// block is averaged over what it holds.
std::vector<double> epoch_means(std::span<const double> scores, std::size_t epoch_size);

}  // namespace rlab
