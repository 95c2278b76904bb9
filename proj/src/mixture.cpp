#include "cptkit/mixture.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "cptkit/errors.hpp"
#include "cptkit/rng.hpp"

namespace cptkit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

inline double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

inline double huber(double z, double delta) {
    const double a = std::abs(z);
    return a <= delta ? 0.5 * z * z : delta * (a - 0.5 * delta);
}

inline double huber_grad(double z, double delta) {
    if (z > delta) return delta;
    if (z < -delta) return -delta;
    return z;
}

// Deterministic uniform draws (mt19937_64 is standardized; the
// distribution adapters are not, so we map the raw bits ourselves).
struct Uniform {
    std::uint64_t state;
    explicit Uniform(std::uint64_t seed) : state(seed) {}
    double next() { return double(splitmix64(state) >> 11) * 0x1.0p-53; }
    double range(double lo, double hi) { return lo + (hi - lo) * next(); }
};

// -------------------------------------------------------------------------
// Adam over a small dense parameter vector
// -------------------------------------------------------------------------

struct Adam {
    std::vector<double> m, v;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::size_t t = 0;

    explicit Adam(std::size_t dim) : m(dim, 0.0), v(dim, 0.0) {}

    void step(std::vector<double>& x, const std::vector<double>& g, double lr) {
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, double(t));
        const double bc2 = 1.0 - std::pow(beta2, double(t));
        for (std::size_t i = 0; i < x.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            x[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
        }
    }
};

double cosine_lr(double base, std::size_t iter, std::size_t total) {
    const double frac = total <= 1 ? 1.0 : double(iter) / double(total - 1);
    return base * (0.1 + 0.45 * (1.0 + std::cos(3.14159265358979323846 * frac)));
}

// -------------------------------------------------------------------------
// Nelder-Mead (derivative-free polish)
// -------------------------------------------------------------------------

double nelder_mead(const std::function<double(const std::vector<double>&)>& fn,
                   std::vector<double>& x, std::size_t max_evals, double init_step) {
    const std::size_t n = x.size();
    std::vector<std::vector<double>> simplex(n + 1, x);
    std::vector<double> fv(n + 1);
    for (std::size_t i = 0; i < n; ++i) simplex[i + 1][i] += init_step;
    std::size_t evals = 0;
    for (std::size_t i = 0; i <= n; ++i) {
        fv[i] = fn(simplex[i]);
        ++evals;
    }

    while (evals < max_evals) {
        // Order best..worst.
        std::vector<std::size_t> idx(n + 1);
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(),
                  [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        {
            std::vector<std::vector<double>> s2(n + 1);
            std::vector<double> f2(n + 1);
            for (std::size_t i = 0; i <= n; ++i) {
                s2[i] = simplex[idx[i]];
                f2[i] = fv[idx[i]];
            }
            simplex.swap(s2);
            fv.swap(f2);
        }
        if (std::abs(fv[n] - fv[0]) < 1e-15 * (1.0 + std::abs(fv[0]))) break;

        std::vector<double> centroid(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t d = 0; d < n; ++d) centroid[d] += simplex[i][d] / double(n);

        auto blend = [&](double coef) {
            std::vector<double> p(n);
            for (std::size_t d = 0; d < n; ++d)
                p[d] = centroid[d] + coef * (simplex[n][d] - centroid[d]);
            return p;
        };

        auto reflected = blend(-1.0);
        const double fr = fn(reflected);
        ++evals;
        if (fr < fv[0]) {
            auto expanded = blend(-2.0);
            const double fe = fn(expanded);
            ++evals;
            if (fe < fr) {
                simplex[n] = std::move(expanded);
                fv[n] = fe;
            } else {
                simplex[n] = std::move(reflected);
                fv[n] = fr;
            }
        } else if (fr < fv[n - 1]) {
            simplex[n] = std::move(reflected);
            fv[n] = fr;
        } else {
            auto contracted = blend(fr < fv[n] ? -0.5 : 0.5);
            const double fc = fn(contracted);
            ++evals;
            if (fc < std::min(fr, fv[n])) {
                simplex[n] = std::move(contracted);
                fv[n] = fc;
            } else {
                for (std::size_t i = 1; i <= n; ++i) {
                    for (std::size_t d = 0; d < n; ++d)
                        simplex[i][d] = 0.5 * (simplex[i][d] + simplex[0][d]);
                    fv[i] = fn(simplex[i]);
                    ++evals;
                }
            }
        }
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i <= n; ++i)
        if (fv[i] < fv[best]) best = i;
    x = simplex[best];
    return fv[best];
}

} // namespace

// ---------------------------------------------------------------------------
// Scaling law
// ---------------------------------------------------------------------------

void ScalingLawParams::validate() const {
    if (!(E >= 0 && A >= 0 && B >= 0 && C >= 0))
        throw std::invalid_argument("scaling law: E,A,B,C must be >= 0");
    if (!(alpha > 0 && beta > 0 && gamma > 0 && eta > 0))
        throw std::invalid_argument("scaling law: exponents must be > 0");
    if (!(epsilon > 0)) throw std::invalid_argument("scaling law: epsilon must be > 0");
}

double predict_loss(const ScalingLawParams& p, double N, double D, double r) {
    p.validate();
    if (!(N > 0)) throw std::invalid_argument("predict_loss: N must be > 0");
    if (!(D > 0)) throw std::invalid_argument("predict_loss: D must be > 0");
    if (!(r >= 0 && r <= 1)) throw std::invalid_argument("predict_loss: r outside [0,1]");
    return p.E + p.A * std::pow(N, -p.alpha) + p.B * std::pow(r, p.eta) * std::pow(D, -p.beta) +
           p.C * std::pow(r + p.epsilon, -p.gamma);
}

double predict_loss_budget(const ScalingLawParams& p, double N, double D_total, double r) {
    // Same law with D = r * D_total folded in: the B-term becomes
    // B * r^(eta-beta) / D_total^beta.
    return p.E + p.A * std::pow(N, -p.alpha) +
           p.B * std::pow(r, p.eta - p.beta) * std::pow(D_total, -p.beta) +
           p.C * std::pow(r + p.epsilon, -p.gamma);
}

void LossObservation::validate() const {
    if (!(N > 0 && D > 0 && L > 0) || !(r >= 0 && r <= 1))
        throw DataError("loss observation outside its domain");
}

// ---------------------------------------------------------------------------
// D-CPT fit
// ---------------------------------------------------------------------------

namespace {

// Parameter vector layout: [ln E, ln A, ln B, ln C, v_alpha, v_beta, v_gamma,
// v_eta] with exponent = lo + (hi-lo) * sigmoid(v).
struct DcptTransform {
    double lo, hi, epsilon;

    ScalingLawParams params(const std::vector<double>& th) const {
        ScalingLawParams p;
        p.E = std::exp(th[0]);
        p.A = std::exp(th[1]);
        p.B = std::exp(th[2]);
        p.C = std::exp(th[3]);
        p.alpha = lo + (hi - lo) * sigmoid(th[4]);
        p.beta = lo + (hi - lo) * sigmoid(th[5]);
        p.gamma = lo + (hi - lo) * sigmoid(th[6]);
        p.eta = lo + (hi - lo) * sigmoid(th[7]);
        p.epsilon = epsilon;
        return p;
    }
};

struct DcptObjective {
    std::span<const LossObservation> obs;
    DcptTransform tf;
    double delta;

    double value(const std::vector<double>& th) const {
        const ScalingLawParams p = tf.params(th);
        double total = 0.0;
        for (const auto& o : obs) {
            const double L = std::max(
                p.E + p.A * std::pow(o.N, -p.alpha) +
                    (o.r > 0 ? p.B * std::pow(o.r, p.eta) * std::pow(o.D, -p.beta) : 0.0) +
                    p.C * std::pow(o.r + p.epsilon, -p.gamma),
                1e-300);
            total += huber(std::log(L) - std::log(o.L), delta);
        }
        return total / double(obs.size());
    }

    double value_grad(const std::vector<double>& th, std::vector<double>& grad) const {
        const ScalingLawParams p = tf.params(th);
        const double span = tf.hi - tf.lo;
        const double dsa = span * sigmoid(th[4]) * (1.0 - sigmoid(th[4]));
        const double dsb = span * sigmoid(th[5]) * (1.0 - sigmoid(th[5]));
        const double dsg = span * sigmoid(th[6]) * (1.0 - sigmoid(th[6]));
        const double dse = span * sigmoid(th[7]) * (1.0 - sigmoid(th[7]));

        grad.assign(8, 0.0);
        double total = 0.0;
        for (const auto& o : obs) {
            const double tA = p.A * std::pow(o.N, -p.alpha);
            const double tB =
                o.r > 0 ? p.B * std::pow(o.r, p.eta) * std::pow(o.D, -p.beta) : 0.0;
            const double tC = p.C * std::pow(o.r + p.epsilon, -p.gamma);
            const double L = std::max(p.E + tA + tB + tC, 1e-300);
            const double z = std::log(L) - std::log(o.L);
            total += huber(z, delta);
            const double w = huber_grad(z, delta) / L;
            grad[0] += w * p.E;
            grad[1] += w * tA;
            grad[4] += w * (-tA * std::log(o.N)) * dsa;
            if (o.r > 0) {
                grad[2] += w * tB;
                grad[5] += w * (-tB * std::log(o.D)) * dsb;
                grad[7] += w * (tB * std::log(o.r)) * dse;
            }
            grad[3] += w * tC;
            grad[6] += w * (-tC * std::log(o.r + p.epsilon)) * dsg;
        }
        const double inv = 1.0 / double(obs.size());
        for (auto& g : grad) g *= inv;
        return total * inv;
    }
};

void clamp_theta(std::vector<double>& th) {
    for (std::size_t i = 0; i < 4; ++i) th[i] = std::clamp(th[i], -60.0, 60.0);
    for (std::size_t i = 4; i < 8; ++i) th[i] = std::clamp(th[i], -30.0, 30.0);
}

} // namespace

DcptFitResult fit_dcpt(std::span<const LossObservation> obs, const DcptFitConfig& config) {
    if (obs.size() < 8)
        throw DataError("fit_dcpt: need at least 8 observations, got " +
                        std::to_string(obs.size()));
    std::vector<double> ns, rs;
    for (const auto& o : obs) {
        o.validate();
        ns.push_back(o.N);
        rs.push_back(o.r);
    }
    auto distinct = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
        return v.size();
    };
    if (distinct(ns) < 2)
        throw DataError("fit_dcpt: insufficient observation diversity on axis N");
    if (distinct(rs) < 2)
        throw DataError("fit_dcpt: insufficient observation diversity on axis r");

    const DcptTransform tf{config.exponent_lo, config.exponent_hi, config.epsilon};
    const DcptObjective objective{obs, tf, config.huber_delta};

    // Data scales for the initialization.
    double l_min = kInf, l_max = 0.0, log_n = 0.0, log_d = 0.0, r_sum = 0.0;
    for (const auto& o : obs) {
        l_min = std::min(l_min, o.L);
        l_max = std::max(l_max, o.L);
        log_n += std::log(o.N);
        log_d += std::log(o.D);
        r_sum += o.r;
    }
    const double n_med = std::exp(log_n / double(obs.size()));
    const double d_med = std::exp(log_d / double(obs.size()));
    const double r_med = std::max(r_sum / double(obs.size()), 0.01);
    const double spread = std::max({l_max - l_min, 0.1 * l_min, 1e-3});

    DcptFitResult result;
    std::vector<double> best_theta;
    double best_obj = kInf;

    for (std::size_t start = 0; start < config.num_starts; ++start) {
        Uniform uni(mix64(config.seed ^ (0x9e3779b97f4a7c15ULL * (start + 1))));
        const double a0 = uni.range(0.05, 0.95);
        const double b0 = uni.range(0.05, 0.95);
        const double g0 = uni.range(0.05, 0.95);
        const double e0 = uni.range(0.05, 0.95);
        const double alpha0 = config.exponent_lo + (config.exponent_hi - config.exponent_lo) * a0;
        const double beta0 = config.exponent_lo + (config.exponent_hi - config.exponent_lo) * b0;
        const double gamma0 = config.exponent_lo + (config.exponent_hi - config.exponent_lo) * g0;
        const double eta0 = config.exponent_lo + (config.exponent_hi - config.exponent_lo) * e0;

        std::vector<double> th(8);
        th[0] = std::log(std::max(l_min * uni.range(0.2, 0.95), 1e-12));
        th[1] = std::log(std::max(spread * uni.range(0.1, 1.0) * std::pow(n_med, alpha0), 1e-12));
        th[2] = std::log(std::max(spread * uni.range(0.1, 1.0) * std::pow(d_med, beta0) /
                                      std::pow(r_med, eta0),
                                  1e-12));
        th[3] = std::log(std::max(spread * uni.range(0.1, 1.0) * std::pow(r_med + config.epsilon, gamma0),
                                  1e-12));
        th[4] = logit(a0);
        th[5] = logit(b0);
        th[6] = logit(g0);
        th[7] = logit(e0);
        clamp_theta(th);

        Adam adam(8);
        std::vector<double> grad;
        std::vector<double> run_best_theta = th;
        double run_best = kInf;
        for (std::size_t it = 0; it < config.adam_iters; ++it) {
            const double obj = objective.value_grad(th, grad);
            if (obj < run_best) {
                run_best = obj;
                run_best_theta = th;
            }
            adam.step(th, grad, cosine_lr(config.adam_lr, it, config.adam_iters));
            clamp_theta(th);
        }
        const double final_obj = objective.value(th);
        if (final_obj < run_best) {
            run_best = final_obj;
            run_best_theta = th;
        }
        result.starts.push_back({start, run_best});
        if (run_best < best_obj) {
            best_obj = run_best;
            best_theta = run_best_theta;
        }
    }

    // Derivative-free polish on the winning start.
    if (config.polish_iters > 0 && !best_theta.empty()) {
        std::vector<double> th = best_theta;
        const double polished = nelder_mead(
            [&](const std::vector<double>& x) { return objective.value(x); }, th,
            config.polish_iters, 0.05);
        if (polished < best_obj) {
            best_obj = polished;
            best_theta = th;
        }
    }

    result.params = tf.params(best_theta);
    result.objective = best_obj;
    double max_res = 0.0, sum_res = 0.0;
    for (const auto& o : obs) {
        const double pred = predict_loss(result.params, o.N, o.D, o.r);
        const double res = std::abs(std::log(std::max(pred, 1e-300)) - std::log(o.L));
        max_res = std::max(max_res, res);
        sum_res += res;
    }
    result.max_abs_log_residual = max_res;
    result.mean_abs_log_residual = sum_res / double(obs.size());
    return result;
}

// ---------------------------------------------------------------------------
// Sigmoid fit
// ---------------------------------------------------------------------------

void SigmoidParams::validate() const {
    if (!(floor_acc >= 0 && floor_acc < ceil_acc && ceil_acc <= 1))
        throw std::invalid_argument("sigmoid: need 0 <= floor < ceil <= 1");
    if (!(k > 0)) throw std::invalid_argument("sigmoid: k must be > 0");
}

double predict_accuracy(const SigmoidParams& p, double loss) {
    return p.floor_acc + (p.ceil_acc - p.floor_acc) * sigmoid(-p.k * (loss - p.mid_loss));
}

namespace {

struct SigmoidObjective {
    std::span<const AccuracyPair> pairs;
    std::optional<double> pin_floor;
    double k_min, k_max;

    SigmoidParams params(const std::vector<double>& th) const {
        SigmoidParams p;
        p.floor_acc = pin_floor ? *pin_floor : sigmoid(th[0]);
        const double cfrac = sigmoid(th[1]);
        p.ceil_acc = p.floor_acc + (1.0 - p.floor_acc) * cfrac;
        p.k = std::clamp(std::exp(th[2]), k_min, k_max);
        p.mid_loss = th[3];
        return p;
    }

    double value(const std::vector<double>& th) const {
        const SigmoidParams p = params(th);
        double sse = 0.0;
        for (const auto& pr : pairs) {
            const double d = predict_accuracy(p, pr.loss) - pr.accuracy;
            sse += d * d;
        }
        return sse / double(pairs.size());
    }

    double value_grad(const std::vector<double>& th, std::vector<double>& grad) const {
        const double floor = pin_floor ? *pin_floor : sigmoid(th[0]);
        const double cfrac = sigmoid(th[1]);
        const double ceil = floor + (1.0 - floor) * cfrac;
        const double k = std::clamp(std::exp(th[2]), k_min, k_max);
        const double mid = th[3];
        const double dfloor = pin_floor ? 0.0 : sigmoid(th[0]) * (1.0 - sigmoid(th[0]));
        const double dcfrac = cfrac * (1.0 - cfrac);

        grad.assign(4, 0.0);
        double sse = 0.0;
        for (const auto& pr : pairs) {
            const double s = sigmoid(-k * (pr.loss - mid));
            const double pred = floor + (ceil - floor) * s;
            const double r2 = 2.0 * (pred - pr.accuracy);
            sse += (pred - pr.accuracy) * (pred - pr.accuracy);
            // ceil = floor + (1-floor)*cfrac couples both logits.
            grad[0] += r2 * ((1.0 - s) + s * (1.0 - cfrac)) * dfloor;
            grad[1] += r2 * s * (1.0 - floor) * dcfrac;
            grad[2] += r2 * (ceil - floor) * s * (1.0 - s) * (-(pr.loss - mid)) * k;
            grad[3] += r2 * (ceil - floor) * s * (1.0 - s) * k;
        }
        const double inv = 1.0 / double(pairs.size());
        for (auto& g : grad) g *= inv;
        return sse * inv;
    }
};

} // namespace

SigmoidFitResult fit_sigmoid(std::span<const AccuracyPair> pairs,
                             const SigmoidFitConfig& config) {
    const std::size_t min_pairs = config.pin_floor ? 3 : 4;
    if (pairs.size() < min_pairs)
        throw DataError("fit_sigmoid: fewer pairs than parameters (need " +
                        std::to_string(min_pairs) + ")");
    double a_min = 1.0, a_max = 0.0, l_min = kInf, l_max = -kInf;
    for (const auto& p : pairs) {
        if (!(p.accuracy >= 0.0 && p.accuracy <= 1.0))
            throw DataError("fit_sigmoid: accuracy outside [0,1]");
        if (!std::isfinite(p.loss)) throw DataError("fit_sigmoid: non-finite loss");
        a_min = std::min(a_min, p.accuracy);
        a_max = std::max(a_max, p.accuracy);
        l_min = std::min(l_min, p.loss);
        l_max = std::max(l_max, p.loss);
    }

    SigmoidFitResult result;
    if (a_max - a_min < 1e-12) {
        // Constant accuracies: no slope is identifiable. Pin k to its minimum
        // and center a vanishingly thin band on the constant.
        const double a = a_min;
        double lo = std::max(0.0, a - 1e-9), hi = std::min(1.0, a + 1e-9);
        if (hi - lo < 1e-12) {
            if (a < 0.5)
                hi = lo + 1e-9;
            else
                lo = hi - 1e-9;
        }
        result.params.floor_acc = lo;
        result.params.ceil_acc = hi;
        result.params.k = config.k_min;
        result.params.mid_loss = 0.5 * (l_min + l_max);
        result.degenerate = true;
        double sse = 0.0;
        for (const auto& p : pairs) {
            const double d = predict_accuracy(result.params, p.loss) - p.accuracy;
            sse += d * d;
        }
        result.sse = sse;
        return result;
    }

    const SigmoidObjective objective{pairs, config.pin_floor, config.k_min, config.k_max};
    const double l_range = std::max(l_max - l_min, 1e-3);

    std::vector<double> best_theta;
    double best_obj = kInf;
    for (std::size_t start = 0; start < config.num_starts; ++start) {
        Uniform uni(mix64(config.seed ^ (0xd1b54a32d192ed03ULL * (start + 1))));
        const double floor0 =
            config.pin_floor ? *config.pin_floor
                             : std::clamp(uni.range(0.0, a_min), 1e-6, 1.0 - 2e-6);
        const double ceil0 = std::clamp(uni.range(a_max, 1.0), floor0 + 1e-6, 1.0 - 1e-6);
        const double cfrac0 = std::clamp((ceil0 - floor0) / (1.0 - floor0), 1e-6, 1.0 - 1e-6);
        std::vector<double> th(4);
        th[0] = logit(std::clamp(floor0, 1e-6, 1.0 - 1e-6));
        th[1] = logit(cfrac0);
        th[2] = uni.range(std::log(0.5 / l_range), std::log(20.0 / l_range));
        th[3] = uni.range(l_min, l_max);

        Adam adam(4);
        std::vector<double> grad;
        std::vector<double> run_best_theta = th;
        double run_best = kInf;
        for (std::size_t it = 0; it < config.adam_iters; ++it) {
            const double obj = objective.value_grad(th, grad);
            if (obj < run_best) {
                run_best = obj;
                run_best_theta = th;
            }
            adam.step(th, grad, cosine_lr(config.adam_lr, it, config.adam_iters));
            th[0] = std::clamp(th[0], -30.0, 30.0);
            th[1] = std::clamp(th[1], -30.0, 30.0);
            th[2] = std::clamp(th[2], std::log(config.k_min), std::log(config.k_max));
        }
        const double final_obj = objective.value(th);
        if (final_obj < run_best) {
            run_best = final_obj;
            run_best_theta = th;
        }
        if (run_best < best_obj) {
            best_obj = run_best;
            best_theta = run_best_theta;
        }
    }

    if (config.polish_iters > 0) {
        std::vector<double> th = best_theta;
        const double polished = nelder_mead(
            [&](const std::vector<double>& x) { return objective.value(x); }, th,
            config.polish_iters, 0.02);
        if (polished < best_obj) {
            best_obj = polished;
            best_theta = th;
        }
    }

    result.params = objective.params(best_theta);
    result.sse = best_obj * double(pairs.size());
    return result;
}

// ---------------------------------------------------------------------------
// Simplex machinery
// ---------------------------------------------------------------------------

std::vector<double> project_to_simplex(std::span<const double> v) {
    const std::size_t n = v.size();
    std::vector<double> u(v.begin(), v.end());
    std::sort(u.begin(), u.end(), std::greater<>());
    double css = 0.0, tau = 0.0;
    std::size_t rho = 0;
    for (std::size_t i = 0; i < n; ++i) {
        css += u[i];
        const double t = (css - 1.0) / double(i + 1);
        if (u[i] - t > 0) {
            rho = i + 1;
            tau = t;
        }
    }
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = std::max(v[i] - tau, 0.0);
    (void)rho;
    return out;
}

namespace {

struct MixtureProblem {
    std::span<const ScalingLawParams> laws;
    std::span<const SigmoidParams> sigmoids;
    std::span<const double> weights;
    double N, d_total;
    MixtureObjective objective;

    // Internal objective is always minimized; for accuracy it is the
    // negated weighted accuracy.
    double f(std::span<const double> r) const {
        double total = 0.0;
        for (std::size_t i = 0; i < laws.size(); ++i) {
            const double L = predict_loss_budget(laws[i], N, d_total, r[i]);
            if (!std::isfinite(L)) return kInf;
            total += objective == MixtureObjective::WeightedLoss
                         ? weights[i] * L
                         : -weights[i] * predict_accuracy(sigmoids[i], L);
        }
        return total;
    }

    void grad(std::span<const double> r, std::vector<double>& g) const {
        g.assign(laws.size(), 0.0);
        for (std::size_t i = 0; i < laws.size(); ++i) {
            const auto& p = laws[i];
            const double ri = std::max(r[i], 1e-12);
            const double dL =
                p.B * (p.eta - p.beta) * std::pow(ri, p.eta - p.beta - 1.0) *
                    std::pow(d_total, -p.beta) -
                p.gamma * p.C * std::pow(ri + p.epsilon, -p.gamma - 1.0);
            if (objective == MixtureObjective::WeightedLoss) {
                g[i] = weights[i] * dL;
            } else {
                const double L = predict_loss_budget(p, N, d_total, ri);
                const auto& s = sigmoids[i];
                const double sig = sigmoid(-s.k * (L - s.mid_loss));
                const double dacc = (s.ceil_acc - s.floor_acc) * sig * (1.0 - sig) * (-s.k);
                g[i] = -weights[i] * dacc * dL;
            }
        }
    }

    MixturePlan plan(std::vector<double> r, double fval) const {
        MixturePlan plan;
        plan.ratios = std::move(r);
        for (std::size_t i = 0; i < laws.size(); ++i) {
            plan.predicted_losses.push_back(
                predict_loss_budget(laws[i], N, d_total, plan.ratios[i]));
        }
        if (!sigmoids.empty()) {
            for (std::size_t i = 0; i < laws.size(); ++i)
                plan.predicted_accuracies.push_back(
                    predict_accuracy(sigmoids[i], plan.predicted_losses[i]));
        }
        plan.objective_value = objective == MixtureObjective::WeightedLoss ? fval : -fval;
        return plan;
    }
};

void validate_mixture_inputs(std::span<const ScalingLawParams> laws, double N,
                             double D_total, MixtureObjective objective,
                             std::span<const double> weights,
                             std::span<const SigmoidParams> sigmoids) {
    if (laws.size() < 2) throw std::invalid_argument("mixture: need >= 2 sources");
    for (const auto& p : laws) p.validate();
    if (!(N > 0) || !(D_total > 0))
        throw std::invalid_argument("mixture: N and D_total must be > 0");
    if (weights.size() != laws.size())
        throw std::invalid_argument("mixture: one weight per source required");
    double wsum = 0.0;
    for (const double w : weights) {
        if (w < 0) throw std::invalid_argument("mixture: negative weight");
        wsum += w;
    }
    if (wsum == 0.0) throw std::invalid_argument("mixture: all-zero weights");
    if (objective == MixtureObjective::WeightedAccuracy) {
        if (sigmoids.size() != laws.size())
            throw std::invalid_argument(
                "mixture: accuracy objective needs one sigmoid per source");
        for (const auto& s : sigmoids) s.validate();
    }
}

} // namespace

MixturePlan optimize_mixture(std::span<const ScalingLawParams> laws, double N,
                             double D_total, MixtureObjective objective,
                             std::span<const double> weights,
                             std::span<const SigmoidParams> sigmoids,
                             const MixtureOptConfig& config) {
    validate_mixture_inputs(laws, N, D_total, objective, weights, sigmoids);
    const std::size_t n = laws.size();
    const MixtureProblem problem{laws, sigmoids, weights, N, D_total, objective};

    // Start points: uniform, weight-proportional, then Dirichlet(1) draws.
    std::vector<std::vector<double>> starts;
    starts.emplace_back(n, 1.0 / double(n));
    {
        double wsum = 0.0;
        for (const double w : weights) wsum += w;
        std::vector<double> wr(weights.begin(), weights.end());
        for (auto& w : wr) w = std::max(w / wsum, 1e-6);
        double s = std::accumulate(wr.begin(), wr.end(), 0.0);
        for (auto& w : wr) w /= s;
        starts.push_back(std::move(wr));
    }
    Uniform uni(mix64(config.seed ^ 0xa0761d6478bd642fULL));
    while (starts.size() < std::max<std::size_t>(config.num_starts, 2)) {
        std::vector<double> r(n);
        double s = 0.0;
        for (auto& x : r) {
            x = -std::log(std::max(uni.next(), 1e-300));
            s += x;
        }
        for (auto& x : r) x /= s;
        starts.push_back(std::move(r));
    }

    std::vector<double> best_r;
    double best_f = kInf;
    for (const auto& start : starts) {
        std::vector<double> r = start;
        double fr = problem.f(r);
        if (fr < best_f) {
            best_f = fr;
            best_r = r;
        }
        if (!std::isfinite(fr)) continue;

        std::vector<double> g;
        double t = 0.1;
        for (std::size_t it = 0; it < config.iters; ++it) {
            problem.grad(r, g);
            double gnorm2 = 0.0;
            for (const double x : g) gnorm2 += x * x;
            if (gnorm2 < 1e-20) break;

            bool moved = false;
            t = std::min(t * 2.0, 1e6 / (1.0 + std::sqrt(gnorm2)));
            while (t > 1e-14) {
                std::vector<double> cand(n);
                for (std::size_t i = 0; i < n; ++i) cand[i] = r[i] - t * g[i];
                cand = project_to_simplex(cand);
                const double fc = problem.f(cand);
                double step2 = 0.0;
                for (std::size_t i = 0; i < n; ++i)
                    step2 += (cand[i] - r[i]) * (cand[i] - r[i]);
                if (fc < fr - 1e-4 * step2 / std::max(t, 1e-14)) {
                    r = std::move(cand);
                    fr = fc;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if (!moved) break;
        }
        if (fr < best_f) {
            best_f = fr;
            best_r = r;
        }
    }
    return problem.plan(std::move(best_r), best_f);
}

std::vector<std::vector<double>> enumerate_simplex_grid(std::size_t n, double resolution) {
    if (n == 0) throw std::invalid_argument("grid: n == 0");
    if (!(resolution > 0 && resolution <= 1))
        throw std::invalid_argument("grid: resolution outside (0,1]");
    const auto m = static_cast<std::size_t>(std::llround(1.0 / resolution));
    if (m < 1) throw std::invalid_argument("grid: resolution too coarse");

    std::vector<std::vector<double>> points;
    std::vector<std::size_t> k(n, 0);
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t dim,
                                                            std::size_t remaining) {
        if (dim + 1 == n) {
            k[dim] = remaining;
            std::vector<double> r(n);
            for (std::size_t i = 0; i < n; ++i) r[i] = double(k[i]) / double(m);
            points.push_back(std::move(r));
            return;
        }
        for (std::size_t v = 0; v <= remaining; ++v) {
            k[dim] = v;
            rec(dim + 1, remaining - v);
        }
    };
    rec(0, m);
    return points;
}

MixturePlan grid_search_mixture(std::span<const ScalingLawParams> laws, double N,
                                double D_total, MixtureObjective objective,
                                std::span<const double> weights, double resolution,
                                std::span<const SigmoidParams> sigmoids) {
    validate_mixture_inputs(laws, N, D_total, objective, weights, sigmoids);
    if (laws.size() > 4)
        throw std::invalid_argument("grid_search_mixture: n > 4 is combinatorial");
    const MixtureProblem problem{laws, sigmoids, weights, N, D_total, objective};

    const auto points = enumerate_simplex_grid(laws.size(), resolution);
    std::vector<double> best_r;
    double best_f = kInf;
    for (const auto& r : points) {
        const double f = problem.f(r);
        if (f < best_f || (f == best_f && r < best_r)) {
            best_f = f;
            best_r = r;
        }
    }
    MixturePlan plan = problem.plan(best_r, best_f);
    plan.evaluated = points.size();
    return plan;
}

// ---------------------------------------------------------------------------
// Annealing
// ---------------------------------------------------------------------------

AnnealSchedule anneal_plan(double lr_start, double total_tokens, std::size_t steps,
                           const std::vector<std::string>& sources,
                           std::span<const double> base_ratios,
                           const std::map<std::string, double>& upweight) {
    if (steps < 2) throw std::invalid_argument("anneal_plan: steps must be >= 2");
    if (!(lr_start >= 0)) throw std::invalid_argument("anneal_plan: lr_start must be >= 0");
    if (!(total_tokens > 0))
        throw std::invalid_argument("anneal_plan: total_tokens must be > 0");
    if (sources.size() != base_ratios.size())
        throw std::invalid_argument("anneal_plan: sources/ratios size mismatch");
    for (const auto& [tag, factor] : upweight) {
        (void)tag;
        if (!(factor >= 0)) throw std::invalid_argument("anneal_plan: negative upweight");
    }

    AnnealSchedule sched;
    sched.total_tokens = total_tokens;
    sched.steps = steps;
    sched.lr_start = lr_start;
    sched.sources = sources;
    sched.lrs.resize(steps);
    for (std::size_t t = 0; t < steps; ++t)
        sched.lrs[t] = lr_start * (1.0 - double(t) / double(steps - 1));

    sched.ratios.assign(base_ratios.begin(), base_ratios.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < sched.ratios.size(); ++i) {
        if (sched.ratios[i] < 0)
            throw std::invalid_argument("anneal_plan: negative base ratio");
        const auto it = upweight.find(sources[i]);
        if (it != upweight.end()) sched.ratios[i] *= it->second;
        sum += sched.ratios[i];
    }
    if (!(sum > 0)) throw DataError("anneal_plan: upweighting removed all mass");
    for (auto& r : sched.ratios) r /= sum;
    return sched;
}

} // namespace cptkit
