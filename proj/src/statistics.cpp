#include "esc51/statistics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace esc51 {

double final_decile_mean(std::span<const double> returns) {
    if (returns.empty()) throw std::invalid_argument("final-decile mean needs at least one episode");
    const std::size_t count = (returns.size() + 9) / 10;
    return mean(returns.subspan(returns.size() - count));
}

double final_decile_mean(const RunRecord& run) {
    std::vector<double> returns;
    returns.reserve(run.episodes.size());
    for (const auto& e : run.episodes) returns.push_back(e.ret);
    return final_decile_mean(returns);
}

double wilcoxon_signed_rank(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw std::invalid_argument("Wilcoxon test needs paired samples of equal length");
    if (xs.empty()) throw std::invalid_argument("Wilcoxon test needs at least one pair");

    std::vector<double> diffs;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double d = xs[i] - ys[i];
        if (!std::isfinite(d)) throw std::invalid_argument("Wilcoxon test input is not finite");
        if (d != 0.0) diffs.push_back(d);
    }
    const int n = static_cast<int>(diffs.size());
    if (n == 0) return 1.0;

    // Doubled mid-ranks are integers: a tie group at 1-based positions
    // first..last gets first + last.
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return std::abs(diffs[a]) < std::abs(diffs[b]); });
    std::vector<std::int64_t> rank2(static_cast<std::size_t>(n));
    double tie_term = 0.0;
    for (int i = 0; i < n;) {
        int j = i;
        while (j + 1 < n && std::abs(diffs[order[j + 1]]) == std::abs(diffs[order[i]])) ++j;
        for (int k = i; k <= j; ++k) rank2[order[k]] = (i + 1) + (j + 1);
        const double t = j - i + 1;
        tie_term += t * t * t - t;
        i = j + 1;
    }

    std::int64_t w2 = 0;
    for (int i = 0; i < n; ++i)
        if (diffs[i] > 0.0) w2 += rank2[i];
    const std::int64_t total2 = static_cast<std::int64_t>(n) * (n + 1);

    if (n <= kWilcoxonExactLimit) {
        // counts[s]: number of sign assignments whose positive doubled-rank sum is s
        std::vector<std::uint64_t> counts(static_cast<std::size_t>(total2 + 1), 0);
        counts[0] = 1;
        std::int64_t reach = 0;
        for (int i = 0; i < n; ++i) {
            const std::int64_t r = rank2[i];
            for (std::int64_t s = reach; s >= 0; --s)
                if (counts[s]) counts[s + r] += counts[s];
            reach += r;
        }
        const std::int64_t observed = std::abs(2 * w2 - total2);
        std::uint64_t extreme = 0;
        for (std::int64_t s = 0; s <= total2; ++s)
            if (std::abs(2 * s - total2) >= observed) extreme += counts[s];
        return std::min(1.0, static_cast<double>(extreme) / std::ldexp(1.0, n));
    }

    const double nd = n;
    const double w = 0.5 * static_cast<double>(w2);
    const double expected = nd * (nd + 1.0) / 4.0;
    const double var = nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0 - tie_term / 48.0;
    if (!(var > 0.0)) return 1.0;
    const double z = (w - expected) / std::sqrt(var);
    return std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
}

double improvement_pct(double ql_mean, double es_mean) {
    if (ql_mean == 0.0) throw std::invalid_argument("improvement is undefined for a zero baseline mean");
    return 100.0 * (es_mean - ql_mean) / std::abs(ql_mean);
}

double mean(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("mean of an empty sample");
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double stddev(std::span<const double> values) {
    const double m = mean(values);
    double acc = 0.0;
    for (double v : values) acc += (v - m) * (v - m);
    return std::sqrt(acc / static_cast<double>(values.size()));
}

}  // namespace esc51
