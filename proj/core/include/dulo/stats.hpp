#pragma once

#include <span>
#include <vector>

namespace dulo::stats {

// Average ranks (1-based); tied values share the mean of their rank range.
std::vector<double> average_ranks(std::span<const double> values);

// Spearman rank correlation with average-rank tie handling. Lists must
// have equal length >= 2; returns 0 when either side is constant.
double spearman(std::span<const double> x, std::span<const double> y);

double mean(std::span<const double> values);

// Standard error of the mean (sample stddev / sqrt(n)); 0 for n < 2.
double standard_error(std::span<const double> values);

}  // namespace dulo::stats
