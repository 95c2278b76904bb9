#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cptkit {

// ---------------------------------------------------------------------------
// pass@k estimation
// ---------------------------------------------------------------------------

struct RunRecord {
    std::string problem_id;
    std::size_t n = 0; // inference runs
    std::size_t c = 0; // correct runs

    void validate() const; // n >= 1, c <= n
};

// Unbiased estimator 1 - C(n-c, k)/C(n, k) in stable product form. At k = n
// it reduces exactly to the at-least-one-correct indicator.
double pass_at_k_unbiased(std::size_t n, std::size_t c, std::size_t k);

// Mean of the unbiased estimator over problems. Throws std::invalid_argument
// when k exceeds any record's n.
double pass_at_k_empirical(std::span<const RunRecord> records, std::size_t k);

// ---------------------------------------------------------------------------
// PPO-mechanism delta / correlation analysis
// ---------------------------------------------------------------------------

struct DatasetReport {
    std::string dataset;
    double with_ppo_pass1 = 0.0;
    double without_ppo_pass1 = 0.0;
    double without_ppo_pass5 = 0.0;

    void validate() const; // values in [0,1]
};

struct DeltaRow {
    std::string dataset;
    double delta_potential = 0.0; // pass5(w/o ppo) - pass1(w/o ppo)
    double delta_realized = 0.0;  // pass1(with ppo) - pass1(w/o ppo)
};

struct DeltaAnalysis {
    std::vector<DeltaRow> rows; // dataset order fixed by name sort
    std::optional<double> pearson;
    std::optional<double> spearman;
    std::string note; // why a correlation is absent, when it is
};

// Emits both delta series per dataset plus their Pearson and Spearman
// correlation across datasets. Fewer than 3 datasets: deltas only, with a
// notice. Zero-variance series: correlation reported as undefined.
DeltaAnalysis delta_analysis(std::span<const DatasetReport> reports);

// Exposed for oracle tests.
double pearson_correlation(std::span<const double> x, std::span<const double> y);
double spearman_correlation(std::span<const double> x, std::span<const double> y);

} // namespace cptkit
