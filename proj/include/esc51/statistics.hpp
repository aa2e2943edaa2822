#pragma once

#include <span>

#include "esc51/run_record.hpp"

namespace esc51 {

/// Mean return over the last ceil(E / 10) of E episodes.
double final_decile_mean(std::span<const double> returns);
double final_decile_mean(const RunRecord& run);

/// Two-sided p-value of the paired Wilcoxon signed-rank test on xs - ys.
///
/// Zero differences are dropped and tied |d| get mid-ranks. Up to
/// kWilcoxonExactLimit nonzero pairs the null distribution over all 2^n sign
/// assignments is counted exactly; above that a tie-corrected normal
/// approximation (no continuity correction) is used. All-zero differences
/// give p = 1.
inline constexpr int kWilcoxonExactLimit = 20;
double wilcoxon_signed_rank(std::span<const double> xs, std::span<const double> ys);

/// 100 * (es - ql) / |ql|; throws for ql == 0.
double improvement_pct(double ql_mean, double es_mean);

double mean(std::span<const double> values);
/// Population (divide-by-n) standard deviation.
double stddev(std::span<const double> values);

}  // namespace esc51
