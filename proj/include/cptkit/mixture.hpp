#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cptkit {

// ---------------------------------------------------------------------------
// Per-source validation-loss law: L(N, D, r) = E + A/N^alpha
//   + B * r^eta / D^beta + C / (r + epsilon)^gamma
// ---------------------------------------------------------------------------

struct ScalingLawParams {
    double E = 0.0, A = 0.0, B = 0.0, C = 0.0; // >= 0
    double alpha = 0.5, beta = 0.5, gamma = 0.5, eta = 0.5; // > 0
    double epsilon = 1e-3; // small ratio offset, > 0

    void validate() const; // throws std::invalid_argument
};

// Throws std::invalid_argument unless N > 0, D > 0, r in [0,1].
double predict_loss(const ScalingLawParams& p, double N, double D, double r);

// Loss under a fixed token budget with D = r * D_total substituted in.
// r = 0 may legitimately evaluate to +inf (the B-term r^(eta-beta) diverges
// when eta < beta); optimizers treat that as an infeasible point.
double predict_loss_budget(const ScalingLawParams& p, double N, double D_total, double r);

struct LossObservation {
    double N = 0.0; // model parameter count
    double D = 0.0; // source dataset size, tokens
    double r = 0.0; // mixture ratio in [0,1]
    double L = 0.0; // validation loss, nats/token

    void validate() const;
};

// ---------------------------------------------------------------------------
// D-CPT fit (per source)
// ---------------------------------------------------------------------------

struct DcptFitConfig {
    std::size_t num_starts = 64;   // seeded random inits
    std::size_t adam_iters = 3000;
    double adam_lr = 0.02;
    std::size_t polish_iters = 4000; // Nelder-Mead evaluations on the best start
    double huber_delta = 1e-3;       // Huber threshold on log residuals
    double exponent_lo = 0.01;       // search bounds for alpha/beta/gamma/eta
    double exponent_hi = 2.5;
    double epsilon = 1e-3;
    std::uint64_t seed = 0;
};

struct FitStartLog {
    std::size_t start = 0;
    double objective = 0.0;
};

struct DcptFitResult {
    ScalingLawParams params;
    double objective = 0.0; // mean Huber loss on log residuals
    double max_abs_log_residual = 0.0;
    double mean_abs_log_residual = 0.0;
    std::vector<FitStartLog> starts; // per-start convergence log
};

// Minimizes mean Huber(log L_pred - log L_obs); positivity enforced by
// exponential reparameterization, exponents box-bounded. Needs >= 8
// observations spanning >= 2 distinct values of N and of r; throws DataError
// naming the deficient axis otherwise. Deterministic given config.seed.
DcptFitResult fit_dcpt(std::span<const LossObservation> obs, const DcptFitConfig& config);

// ---------------------------------------------------------------------------
// Sigmoid loss -> accuracy map
// ---------------------------------------------------------------------------

struct SigmoidParams {
    double floor_acc = 0.0; // accuracy at infinite loss (random-guess rate)
    double ceil_acc = 1.0;  // asymptotic accuracy
    double k = 1.0;         // slope > 0
    double mid_loss = 0.0;  // midpoint loss L0

    void validate() const;
};

// floor + (ceil - floor) * logistic(-k * (L - L0)); monotone non-increasing
// in L for k > 0.
double predict_accuracy(const SigmoidParams& p, double loss);

struct AccuracyPair {
    double loss = 0.0;
    double accuracy = 0.0; // in [0,1]
};

struct SigmoidFitConfig {
    std::size_t num_starts = 32;
    std::size_t adam_iters = 4000;
    double adam_lr = 0.05;
    std::size_t polish_iters = 4000;
    std::optional<double> pin_floor; // fix floor to the task's guess rate
    double k_min = 1e-6;
    double k_max = 1e4;
    std::uint64_t seed = 0;
};

struct SigmoidFitResult {
    SigmoidParams params;
    double sse = 0.0;
    bool degenerate = false; // constant accuracies; k pinned to k_min
};

// Least squares; needs >= 4 pairs (3 when floor is pinned).
SigmoidFitResult fit_sigmoid(std::span<const AccuracyPair> pairs,
                             const SigmoidFitConfig& config);

// ---------------------------------------------------------------------------
// Mixture-ratio optimization on the simplex
// ---------------------------------------------------------------------------

enum class MixtureObjective { WeightedLoss, WeightedAccuracy };

struct MixturePlan {
    std::vector<double> ratios; // on the simplex within 1e-9
    std::vector<double> predicted_losses;
    std::vector<double> predicted_accuracies; // empty when no sigmoids given
    double objective_value = 0.0;
    std::size_t evaluated = 0; // grid points (grid search only)
};

struct MixtureOptConfig {
    std::size_t num_starts = 16;
    std::size_t iters = 800;
    std::uint64_t seed = 0;
};

// Projected gradient descent with multi-start. WeightedLoss minimizes
// sum w_i * L_i; WeightedAccuracy maximizes sum w_i * Acc_i through the
// fitted sigmoids (required then, one per source). The result is never worse
// than the best multi-start initialization.
MixturePlan optimize_mixture(std::span<const ScalingLawParams> laws, double N,
                             double D_total, MixtureObjective objective,
                             std::span<const double> weights,
                             std::span<const SigmoidParams> sigmoids = {},
                             const MixtureOptConfig& config = {});

// Exhaustive simplex-grid oracle (n <= 4). Deterministic tie-break: the
// lexicographically smallest ratio vector wins.
MixturePlan grid_search_mixture(std::span<const ScalingLawParams> laws, double N,
                                double D_total, MixtureObjective objective,
                                std::span<const double> weights, double resolution,
                                std::span<const SigmoidParams> sigmoids = {});

// All ratio vectors with entries k/m, m = round(1/resolution), summing to 1.
std::vector<std::vector<double>> enumerate_simplex_grid(std::size_t n, double resolution);

// Euclidean projection onto the probability simplex.
std::vector<double> project_to_simplex(std::span<const double> v);

// ---------------------------------------------------------------------------
// Annealing plan
// ---------------------------------------------------------------------------

struct AnnealSchedule {
    double total_tokens = 0.0;
    std::size_t steps = 0;
    double lr_start = 0.0;
    std::vector<double> lrs; // linear to exactly 0 at the final step
    std::vector<std::string> sources;
    std::vector<double> ratios; // upweighted, renormalized to the simplex
};

// lr_t = lr_start * (1 - t/(steps-1)); ratios multiplied by their upweight
// factor (default 1) and renormalized. steps >= 2, factors >= 0.
AnnealSchedule anneal_plan(double lr_start, double total_tokens, std::size_t steps,
                           const std::vector<std::string>& sources,
                           std::span<const double> base_ratios,
                           const std::map<std::string, double>& upweight);

} // namespace cptkit
