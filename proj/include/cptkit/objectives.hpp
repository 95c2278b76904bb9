#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cptkit {

// ---------------------------------------------------------------------------
// Inputs
// ---------------------------------------------------------------------------

// T x V logits (row-major) with next-token targets for the LM loss.
struct LogitSequence {
    std::size_t T = 0;
    std::size_t V = 0;
    std::vector<double> logits;  // size T*V
    std::vector<int> targets;    // size T, each in [0, V)

    void validate(bool need_targets = true) const; // std::invalid_argument
    double logit(std::size_t t, std::size_t v) const { return logits[t * V + v]; }
};

// Top-k slice of a reference distribution plus the off-support tail mass.
struct SparseTokenDistribution {
    std::vector<std::pair<int, double>> entries; // (token id, probability > 0)
    double tail_mass = 0.0;                      // 1 - sum(probabilities)
    std::size_t k = 200;

    void validate(std::size_t vocab) const; // ids unique & < vocab, masses sum to 1
};

// Keeps the k highest-probability tokens (ties break toward the lower token
// id); tail_mass absorbs the remainder. `probs` must lie on the simplex.
SparseTokenDistribution topk_truncate(std::span<const double> probs, std::size_t k);

// Stochastic variant: k distinct tokens sampled without replacement
// proportionally to probability (Gumbel top-k), seeded.
SparseTokenDistribution sample_truncate(std::span<const double> probs, std::size_t k,
                                        std::uint64_t seed);

// ---------------------------------------------------------------------------
// Losses (all values in nats; gradients are w.r.t. the fine-tuned logits)
// ---------------------------------------------------------------------------

struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad; // same shape as the fin logits (T*V)
};

// Mean token negative log-likelihood; gradient (softmax - onehot)/T.
LossGrad lm_loss(const LogitSequence& seq);

enum class KlDirection {
    FinToRef, // KL(P_fin || P_ref): the written order of the objective
    RefToFin, // reverse KL, offered behind this flag
};

// (1/T) sum_t KL over the full vocabulary.
LossGrad kl_loss_full(const LogitSequence& fin, const LogitSequence& ref,
                      KlDirection direction = KlDirection::FinToRef);

enum class TailMode {
    TailBucket,  // pseudo-token absorbs each side's off-support mass (default)
    Renormalize, // both distributions restricted to the support and renormalized
};

struct DomainLossConfig {
    double alpha_balance = 1.0; // weight of the KL part in the financial loss
    std::size_t topk = 200;
    TailMode tail_mode = TailMode::TailBucket;
    KlDirection direction = KlDirection::FinToRef;
};

// KL against per-position sparse reference slices. Both tail modes coincide
// with kl_loss_full when the support covers the whole vocabulary.
LossGrad kl_loss_topk(const LogitSequence& fin,
                      std::span<const SparseTokenDistribution> ref,
                      const DomainLossConfig& config);

enum class DocDomain { General, Financial };

// General documents: pure KL to the reference. Financial documents:
// alpha_balance * KL + LM.
LossGrad domain_loss(DocDomain domain, const LogitSequence& fin,
                     const LogitSequence& ref, const DomainLossConfig& config);
LossGrad domain_loss(DocDomain domain, const LogitSequence& fin,
                     std::span<const SparseTokenDistribution> ref,
                     const DomainLossConfig& config);

// ---------------------------------------------------------------------------
// Reward-model pairwise loss
// ---------------------------------------------------------------------------

struct PreferencePairScores {
    double reward_chosen = 0.0;
    double reward_rejected = 0.0;
};

struct RewardPairLoss {
    double loss = 0.0;
    // d loss / d (chosen_i, rejected_i); the two entries are always opposite.
    std::vector<std::pair<double, double>> grad;
};

// Mean over pairs of -log sigmoid(chosen - rejected). Depends only on the
// margins. Throws std::invalid_argument on an empty batch.
RewardPairLoss reward_pair_loss(std::span<const PreferencePairScores> batch);

} // namespace cptkit
