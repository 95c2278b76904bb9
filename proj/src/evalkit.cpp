#include "cptkit/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cptkit {

void RunRecord::validate() const {
    if (n < 1) throw std::invalid_argument("run record " + problem_id + ": n must be >= 1");
    if (c > n) throw std::invalid_argument("run record " + problem_id + ": c > n");
}

double pass_at_k_unbiased(std::size_t n, std::size_t c, std::size_t k) {
    if (n < 1) throw std::invalid_argument("pass_at_k: n must be >= 1");
    if (c > n) throw std::invalid_argument("pass_at_k: c > n");
    if (k < 1 || k > n) throw std::invalid_argument("pass_at_k: k outside [1, n]");
    if (c == 0) return 0.0;
    if (n - c < k) return 1.0; // cannot draw k incorrect answers
    // C(n-c, k)/C(n, k) = prod_{i=0..k-1} (n-c-i)/(n-i)
    double prod = 1.0;
    for (std::size_t i = 0; i < k; ++i)
        prod *= double(n - c - i) / double(n - i);
    return 1.0 - prod;
}

double pass_at_k_empirical(std::span<const RunRecord> records, std::size_t k) {
    if (records.empty()) throw std::invalid_argument("pass_at_k_empirical: no records");
    double sum = 0.0;
    for (const auto& r : records) {
        r.validate();
        if (k > r.n)
            throw std::invalid_argument("pass_at_k_empirical: k > n for problem " +
                                        r.problem_id);
        sum += pass_at_k_unbiased(r.n, r.c, k);
    }
    return sum / double(records.size());
}

void DatasetReport::validate() const {
    for (const double v : {with_ppo_pass1, without_ppo_pass1, without_ppo_pass5})
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument("dataset report " + dataset +
                                        ": value outside [0,1]");
}

double pearson_correlation(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("pearson: need two equal-length series");
    const double n = double(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0)
        throw std::invalid_argument("pearson: zero-variance series");
    return sxy / std::sqrt(sxx * syy);
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
        const double avg = 0.5 * (double(i + 1) + double(j));
        for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
        i = j;
    }
    return ranks;
}

} // namespace

double spearman_correlation(std::span<const double> x, std::span<const double> y) {
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    return pearson_correlation(rx, ry);
}

DeltaAnalysis delta_analysis(std::span<const DatasetReport> reports) {
    DeltaAnalysis out;
    for (const auto& r : reports) {
        r.validate();
        out.rows.push_back({r.dataset, r.without_ppo_pass5 - r.without_ppo_pass1,
                            r.with_ppo_pass1 - r.without_ppo_pass1});
    }
    std::sort(out.rows.begin(), out.rows.end(),
              [](const DeltaRow& a, const DeltaRow& b) { return a.dataset < b.dataset; });

    if (out.rows.size() < 3) {
        out.note = "correlation omitted: fewer than 3 datasets";
        return out;
    }
    std::vector<double> potential, realized;
    for (const auto& row : out.rows) {
        potential.push_back(row.delta_potential);
        realized.push_back(row.delta_realized);
    }
    try {
        out.pearson = pearson_correlation(potential, realized);
        out.spearman = spearman_correlation(potential, realized);
    } catch (const std::invalid_argument&) {
        out.note = "correlation undefined: a delta series has zero variance";
    }
    return out;
}

} // namespace cptkit
