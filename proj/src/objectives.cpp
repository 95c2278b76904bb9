#include "cptkit/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "cptkit/rng.hpp"

namespace cptkit {

namespace {

constexpr double kTiny = 1e-15;

inline double stable_sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// -log(sigmoid(m)) = softplus(-m), computed without overflow.
inline double softplus(double x) {
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

std::vector<double> log_softmax_row(const double* logits, std::size_t v) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < v; ++i) m = std::max(m, logits[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < v; ++i) sum += std::exp(logits[i] - m);
    const double lse = m + std::log(sum);
    std::vector<double> out(v);
    for (std::size_t i = 0; i < v; ++i) out[i] = logits[i] - lse;
    return out;
}

} // namespace

// ---------------------------------------------------------------------------
// Input validation
// ---------------------------------------------------------------------------

void LogitSequence::validate(bool need_targets) const {
    if (T < 1 || V < 1) throw std::invalid_argument("logit sequence: T and V must be >= 1");
    if (logits.size() != T * V)
        throw std::invalid_argument("logit sequence: logits size != T*V");
    for (const double z : logits)
        if (!std::isfinite(z)) throw std::invalid_argument("logit sequence: non-finite logit");
    if (need_targets) {
        if (targets.size() != T)
            throw std::invalid_argument("logit sequence: targets size != T");
        for (const int t : targets)
            if (t < 0 || static_cast<std::size_t>(t) >= V)
                throw std::invalid_argument("logit sequence: target out of [0,V)");
    }
}

void SparseTokenDistribution::validate(std::size_t vocab) const {
    double sum = 0.0;
    std::vector<int> ids;
    ids.reserve(entries.size());
    for (const auto& [id, p] : entries) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab)
            throw std::invalid_argument("sparse distribution: token id out of range");
        if (!(p > 0.0)) throw std::invalid_argument("sparse distribution: probability <= 0");
        ids.push_back(id);
        sum += p;
    }
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
        throw std::invalid_argument("sparse distribution: duplicate token id");
    if (tail_mass < -1e-9)
        throw std::invalid_argument("sparse distribution: negative tail mass");
    if (std::abs(sum + tail_mass - 1.0) > 1e-9)
        throw std::invalid_argument("sparse distribution: masses do not sum to 1");
}

// ---------------------------------------------------------------------------
// Truncation
// ---------------------------------------------------------------------------

namespace {

void check_simplex(std::span<const double> probs) {
    if (probs.empty()) throw std::invalid_argument("truncate: empty probability vector");
    double sum = 0.0;
    for (const double p : probs) {
        if (!(p >= 0.0)) throw std::invalid_argument("truncate: negative probability");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw std::invalid_argument("truncate: probabilities must sum to 1");
}

SparseTokenDistribution build_sparse(std::span<const double> probs,
                                     std::vector<int> chosen, std::size_t k) {
    std::sort(chosen.begin(), chosen.end());
    SparseTokenDistribution out;
    out.k = k;
    double kept = 0.0;
    for (const int id : chosen) {
        out.entries.emplace_back(id, probs[id]);
        kept += probs[id];
    }
    out.tail_mass = std::max(0.0, 1.0 - kept);
    return out;
}

} // namespace

SparseTokenDistribution topk_truncate(std::span<const double> probs, std::size_t k) {
    if (k < 1) throw std::invalid_argument("topk_truncate: k must be >= 1");
    check_simplex(probs);

    std::vector<int> order(probs.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (probs[a] != probs[b]) return probs[a] > probs[b];
        return a < b; // ties break toward the lower token id
    });
    std::vector<int> chosen;
    for (const int id : order) {
        if (chosen.size() >= k || probs[id] <= 0.0) break;
        chosen.push_back(id);
    }
    return build_sparse(probs, std::move(chosen), k);
}

SparseTokenDistribution sample_truncate(std::span<const double> probs, std::size_t k,
                                        std::uint64_t seed) {
    if (k < 1) throw std::invalid_argument("sample_truncate: k must be >= 1");
    check_simplex(probs);

    // Gumbel top-k = sampling without replacement proportional to probability.
    std::uint64_t state = mix64(seed ^ 0x853c49e6748fea9bULL);
    std::vector<std::pair<double, int>> keys;
    keys.reserve(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        const double u = (double(splitmix64(state) >> 11) + 1.0) * 0x1.0p-53;
        keys.emplace_back(std::log(probs[i]) - std::log(-std::log(u)), int(i));
    }
    std::sort(keys.begin(), keys.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<int> chosen;
    for (std::size_t i = 0; i < keys.size() && i < k; ++i) chosen.push_back(keys[i].second);
    return build_sparse(probs, std::move(chosen), k);
}

// ---------------------------------------------------------------------------
// LM loss
// ---------------------------------------------------------------------------

LossGrad lm_loss(const LogitSequence& seq) {
    seq.validate(true);
    LossGrad out;
    out.grad.assign(seq.T * seq.V, 0.0);
    const double inv_t = 1.0 / double(seq.T);
    for (std::size_t t = 0; t < seq.T; ++t) {
        const auto logp = log_softmax_row(seq.logits.data() + t * seq.V, seq.V);
        out.loss -= logp[seq.targets[t]] * inv_t;
        double* g = out.grad.data() + t * seq.V;
        for (std::size_t j = 0; j < seq.V; ++j) g[j] = std::exp(logp[j]) * inv_t;
        g[seq.targets[t]] -= inv_t;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Full-vocabulary KL
// ---------------------------------------------------------------------------

LossGrad kl_loss_full(const LogitSequence& fin, const LogitSequence& ref,
                      KlDirection direction) {
    fin.validate(false);
    ref.validate(false);
    if (fin.T != ref.T || fin.V != ref.V)
        throw std::invalid_argument("kl_loss_full: shape mismatch");

    LossGrad out;
    out.grad.assign(fin.T * fin.V, 0.0);
    const double inv_t = 1.0 / double(fin.T);
    for (std::size_t t = 0; t < fin.T; ++t) {
        const auto logp = log_softmax_row(fin.logits.data() + t * fin.V, fin.V);
        const auto logq = log_softmax_row(ref.logits.data() + t * ref.V, ref.V);
        double* g = out.grad.data() + t * fin.V;
        if (direction == KlDirection::FinToRef) {
            double kl = 0.0;
            for (std::size_t j = 0; j < fin.V; ++j)
                kl += std::exp(logp[j]) * (logp[j] - logq[j]);
            out.loss += kl * inv_t;
            for (std::size_t j = 0; j < fin.V; ++j)
                g[j] = std::exp(logp[j]) * ((logp[j] - logq[j]) - kl) * inv_t;
        } else {
            double kl = 0.0;
            for (std::size_t j = 0; j < fin.V; ++j)
                kl += std::exp(logq[j]) * (logq[j] - logp[j]);
            out.loss += kl * inv_t;
            for (std::size_t j = 0; j < fin.V; ++j)
                g[j] = (std::exp(logp[j]) - std::exp(logq[j])) * inv_t;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Top-k KL
// ---------------------------------------------------------------------------

LossGrad kl_loss_topk(const LogitSequence& fin,
                      std::span<const SparseTokenDistribution> ref,
                      const DomainLossConfig& config) {
    fin.validate(false);
    if (ref.size() != fin.T)
        throw std::invalid_argument("kl_loss_topk: one sparse reference per position");

    LossGrad out;
    out.grad.assign(fin.T * fin.V, 0.0);
    const double inv_t = 1.0 / double(fin.T);

    for (std::size_t t = 0; t < fin.T; ++t) {
        const auto& sparse = ref[t];
        if (sparse.entries.empty())
            throw std::invalid_argument("kl_loss_topk: empty sparse support at position " +
                                        std::to_string(t));
        sparse.validate(fin.V);

        const auto logp = log_softmax_row(fin.logits.data() + t * fin.V, fin.V);
        double* g = out.grad.data() + t * fin.V;

        if (config.tail_mode == TailMode::Renormalize) {
            // Both distributions restricted to the support and renormalized;
            // the restriction of a softmax is the softmax of the restricted
            // logits, so the usual KL gradients apply on the support.
            double m = -std::numeric_limits<double>::infinity();
            for (const auto& [id, q] : sparse.entries)
                m = std::max(m, fin.logits[t * fin.V + id]);
            double zs = 0.0;
            for (const auto& [id, q] : sparse.entries)
                zs += std::exp(fin.logits[t * fin.V + id] - m);
            const double log_zs = m + std::log(zs);
            double qs = 0.0;
            for (const auto& [id, q] : sparse.entries) qs += q;

            if (config.direction == KlDirection::FinToRef) {
                double kl = 0.0;
                for (const auto& [id, q] : sparse.entries) {
                    const double lp = fin.logits[t * fin.V + id] - log_zs;
                    kl += std::exp(lp) * (lp - std::log(q / qs));
                }
                out.loss += kl * inv_t;
                for (const auto& [id, q] : sparse.entries) {
                    const double lp = fin.logits[t * fin.V + id] - log_zs;
                    g[id] = std::exp(lp) * ((lp - std::log(q / qs)) - kl) * inv_t;
                }
            } else {
                double kl = 0.0;
                for (const auto& [id, q] : sparse.entries) {
                    const double lp = fin.logits[t * fin.V + id] - log_zs;
                    kl += (q / qs) * (std::log(q / qs) - lp);
                }
                out.loss += kl * inv_t;
                for (const auto& [id, q] : sparse.entries) {
                    const double lp = fin.logits[t * fin.V + id] - log_zs;
                    g[id] = (std::exp(lp) - q / qs) * inv_t;
                }
            }
            continue;
        }

        // TailBucket: an extra pseudo-token absorbs each side's off-support
        // mass, so no probability is discarded and k = V is exact.
        double s = 0.0;
        for (const auto& [id, q] : sparse.entries) s += std::exp(logp[id]);
        const double p_tail = std::max(0.0, 1.0 - s);
        const double q_tail = std::max(sparse.tail_mass, 0.0);

        if (config.direction == KlDirection::FinToRef) {
            double su = 0.0; // sum over support of P_i * u_i
            double kl = 0.0;
            for (const auto& [id, q] : sparse.entries) {
                const double p = std::exp(logp[id]);
                const double u = logp[id] - std::log(q);
                su += p * u;
                kl += p * u;
            }
            double u_tail = 0.0;
            if (p_tail > kTiny) {
                u_tail = std::log(p_tail) - std::log(std::max(q_tail, 1e-300));
                kl += p_tail * u_tail;
            }
            out.loss += kl * inv_t;

            const double off_support = p_tail > kTiny ? s * u_tail - su : -su;
            for (std::size_t j = 0; j < fin.V; ++j)
                g[j] = std::exp(logp[j]) * off_support * inv_t;
            for (const auto& [id, q] : sparse.entries) {
                const double u = logp[id] - std::log(q);
                const double on_support =
                    p_tail > kTiny ? u - su + (s - 1.0) * u_tail : u - su;
                g[id] = std::exp(logp[id]) * on_support * inv_t;
            }
        } else {
            double kl = 0.0, q_s = 0.0;
            for (const auto& [id, q] : sparse.entries) {
                kl += q * (std::log(q) - logp[id]);
                q_s += q;
            }
            if (q_tail > kTiny)
                kl += q_tail * (std::log(q_tail) - std::log(std::max(p_tail, 1e-300)));
            out.loss += kl * inv_t;

            const double tail_coef =
                (q_tail > kTiny && p_tail > kTiny) ? q_tail / p_tail : 0.0;
            for (std::size_t j = 0; j < fin.V; ++j) {
                const double p = std::exp(logp[j]);
                g[j] = (p * q_s - tail_coef * p * s) * inv_t;
            }
            for (const auto& [id, q] : sparse.entries) {
                const double p = std::exp(logp[id]);
                g[id] = (p * q_s - q - tail_coef * p * (s - 1.0)) * inv_t;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Domain loss
// ---------------------------------------------------------------------------

namespace {

LossGrad combine_financial(LossGrad kl, const LossGrad& lm, double alpha) {
    LossGrad out;
    out.loss = alpha * kl.loss + lm.loss;
    out.grad = std::move(kl.grad);
    for (std::size_t i = 0; i < out.grad.size(); ++i)
        out.grad[i] = alpha * out.grad[i] + lm.grad[i];
    return out;
}

} // namespace

LossGrad domain_loss(DocDomain domain, const LogitSequence& fin, const LogitSequence& ref,
                     const DomainLossConfig& config) {
    if (config.alpha_balance < 0)
        throw std::invalid_argument("domain_loss: alpha_balance must be >= 0");
    LossGrad kl = kl_loss_full(fin, ref, config.direction);
    if (domain == DocDomain::General) return kl;
    return combine_financial(std::move(kl), lm_loss(fin), config.alpha_balance);
}

LossGrad domain_loss(DocDomain domain, const LogitSequence& fin,
                     std::span<const SparseTokenDistribution> ref,
                     const DomainLossConfig& config) {
    if (config.alpha_balance < 0)
        throw std::invalid_argument("domain_loss: alpha_balance must be >= 0");
    LossGrad kl = kl_loss_topk(fin, ref, config);
    if (domain == DocDomain::General) return kl;
    return combine_financial(std::move(kl), lm_loss(fin), config.alpha_balance);
}

// ---------------------------------------------------------------------------
// Reward-model pairwise loss
// ---------------------------------------------------------------------------

RewardPairLoss reward_pair_loss(std::span<const PreferencePairScores> batch) {
    if (batch.empty()) throw std::invalid_argument("reward_pair_loss: empty batch");
    RewardPairLoss out;
    out.grad.resize(batch.size());
    const double inv_n = 1.0 / double(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (!std::isfinite(batch[i].reward_chosen) || !std::isfinite(batch[i].reward_rejected))
            throw std::invalid_argument("reward_pair_loss: non-finite reward");
        const double margin = batch[i].reward_chosen - batch[i].reward_rejected;
        out.loss += softplus(-margin) * inv_n;
        const double d = -(1.0 - stable_sigmoid(margin)) * inv_n;
        out.grad[i] = {d, -d};
    }
    return out;
}

} // namespace cptkit
