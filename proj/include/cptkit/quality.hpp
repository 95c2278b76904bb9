#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cptkit/document.hpp"

namespace cptkit {

// Annotation key written by score_document and read by pareto_resample.
inline constexpr const char* kDocumentScoreKey = "document_score";
inline constexpr const char* kLossKey = "loss";

// ---------------------------------------------------------------------------
// Logistic-regression quality classifier over hashed n-gram features
// ---------------------------------------------------------------------------

struct FeatureSpec {
    std::size_t dims_log2 = 18; // 2^18 hashed dimensions
    std::uint64_t hash_seed = 0xfea70001;

    std::size_t dims() const { return std::size_t(1) << dims_log2; }
};

// Sparse (index, value) pairs, L2-normalized. Word unigrams plus character
// trigrams, both hashed into the same space.
std::vector<std::pair<std::uint32_t, float>> featurize(std::string_view text,
                                                       const FeatureSpec& spec);

struct QualityClassifier {
    FeatureSpec spec;
    std::vector<float> weights; // length == spec.dims()
    double bias = 0.0;
};

struct ClassifierTrainConfig {
    FeatureSpec features;
    std::size_t epochs = 40;
    double learning_rate = 0.5;
    double l2 = 1e-6;
    double heldout_fraction = 0.1;
    std::uint64_t seed = 1;
};

struct ClassifierTrainReport {
    double heldout_auc = 0.5;
    std::size_t n_pos_in = 0;
    std::size_t n_neg_in = 0;
    std::size_t n_per_class = 0; // after 1:1 rebalancing
    std::size_t n_train = 0;
    std::size_t n_heldout = 0;
};

struct ClassifierTrainResult {
    QualityClassifier model;
    ClassifierTrainReport report;
};

// Downsamples the larger class to a 1:1 ratio (seeded), holds out 10% for
// the AUC report, and fits by seeded SGD. Deterministic given the seed.
// Throws DataError when either class is empty.
ClassifierTrainResult train_quality_classifier(std::span<const Document> positives,
                                               std::span<const Document> negatives,
                                               const ClassifierTrainConfig& config);

// Logistic of the linear score; always in (0, 1).
double score_document(const QualityClassifier& model, const Document& doc);

// Tie-aware Mann-Whitney AUC (ties count 1/2).
double auc_score(std::span<const double> scores, std::span<const int> labels);

void save_classifier(const std::string& path, const QualityClassifier& model);
QualityClassifier load_classifier(const std::string& path);

// ---------------------------------------------------------------------------
// Pareto resampling
// ---------------------------------------------------------------------------

struct ParetoFilterConfig {
    double alpha = 9.0; // shape > 0
    std::uint64_t seed = 0x9a3e70;
};

// Closed-form retention probability: a Lomax(alpha) draw (support [0, inf),
// CCDF (1+t)^-alpha) exceeds 1 - score. Equals 1 when score >= 1.
// Throws std::invalid_argument for score outside [0,1] or alpha <= 0.
double pareto_retention_probability(double score, double alpha);

struct ParetoResampleResult {
    std::vector<Document> kept;
    std::size_t docs_in = 0;
};

// Keeps each doc independently iff a seeded Lomax draw (keyed by doc id)
// exceeds 1 - document_score. Bitwise reproducible given the seed and
// independent of document order. Throws DataError naming the doc when the
// score annotation is missing.
ParetoResampleResult pareto_resample(std::span<const Document> docs,
                                     const ParetoFilterConfig& config);

// Single-document keep decision (exposed for schedule-independence tests).
bool pareto_keep(std::string_view doc_id, double score, const ParetoFilterConfig& config);

// ---------------------------------------------------------------------------
// Multi-dimension score aggregation
// ---------------------------------------------------------------------------

struct DimensionScoreVector {
    double readability = 0.0;
    double coherence = 0.0;
    double informativeness = 0.0;
    double safety = 0.0;
    double anonymity_degree = 0.0;
    double unattainable_references = 0.0;

    void validate() const; // each in [0,1]
};

inline constexpr std::size_t kNumDimensions = 6;

// Weighted mean with anonymity_degree and unattainable_references inverted
// (1 - x) first, so that higher always means better. Weights must lie on the
// simplex (non-negative, sum 1 within 1e-9).
double aggregate_dimension_scores(const DimensionScoreVector& v,
                                  std::span<const double> weights);

// ---------------------------------------------------------------------------
// Abnormal-loss detection (robust median/MAD rule)
// ---------------------------------------------------------------------------

struct LossAnnotation {
    std::string id;
    std::string source;
    double loss = 0.0; // nats/token, finite, >= 0
};

struct AbnormalLossConfig {
    double k = 3.0;              // |loss - median| > k * MAD flags a doc
    std::size_t min_docs = 20;   // per-source minimum for statistics
    std::size_t sample_size = 10; // flagged docs emitted per source for review
    double mad_floor = 1e-12;    // epsilon floor so identical losses flag nothing
};

struct SourceLossStats {
    std::string source;
    std::size_t n = 0;
    double median = 0.0;
    double mad = 0.0;
    bool flagged = false;
};

struct AbnormalLossReport {
    std::vector<SourceLossStats> sources;            // sorted by source tag
    std::vector<LossAnnotation> flagged_docs;        // sorted by id
    std::vector<std::string> flagged_sources;        // sorted
    std::vector<std::string> skipped_sources;        // too few docs, sorted
    std::map<std::string, std::vector<LossAnnotation>> review_samples;
};

// Output is invariant to annotation order. Sources with fewer than min_docs
// annotations are skipped with a warning entry.
AbnormalLossReport detect_abnormal_loss(std::span<const LossAnnotation> annotations,
                                        const AbnormalLossConfig& config = {});

// ---------------------------------------------------------------------------
// Regex anonymization
// ---------------------------------------------------------------------------

struct AnonymizeRule {
    std::string name;
    std::string pattern; // ECMAScript regex
    std::string replacement;
};

class AnonymizeRuleSet {
public:
    // Compiles all patterns up front; invalid patterns throw DataError here.
    explicit AnonymizeRuleSet(std::vector<AnonymizeRule> rules);

    const std::vector<AnonymizeRule>& rules() const { return rules_; }

    struct Impl;
    const Impl& impl() const { return *impl_; }

private:
    std::vector<AnonymizeRule> rules_;
    std::shared_ptr<const Impl> impl_;
};

struct AnonymizeResult {
    Document doc;
    std::vector<std::size_t> replacements; // per rule, in rule order
};

// Rules are applied in order. Idempotent as long as replacements do not match
// any pattern (true for the shipped defaults).
AnonymizeResult anonymize(const Document& doc, const AnonymizeRuleSet& rules);

// Email, URL, phone, long ID digit runs, bracketed reference citations.
std::vector<AnonymizeRule> default_anonymize_rules();

std::vector<AnonymizeRule> load_anonymize_rules(const std::string& path);
void save_anonymize_rules(const std::string& path, std::span<const AnonymizeRule> rules);

} // namespace cptkit
