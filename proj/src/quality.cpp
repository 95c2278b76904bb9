#include "cptkit/quality.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <regex>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

#include "cptkit/errors.hpp"
#include "cptkit/rng.hpp"
#include "cptkit/utf8.hpp"

namespace cptkit {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Features
// ---------------------------------------------------------------------------

namespace {
constexpr std::uint64_t kWordSalt = 0x77726421;
constexpr std::uint64_t kTrigramSalt = 0x74726921;

inline double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}
} // namespace

std::vector<std::pair<std::uint32_t, float>> featurize(std::string_view text,
                                                       const FeatureSpec& spec) {
    const std::uint32_t mask = static_cast<std::uint32_t>(spec.dims() - 1);
    std::unordered_map<std::uint32_t, float> acc;

    // Word unigrams (whitespace-delimited byte tokens).
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        if (j > i) {
            const std::uint64_t h =
                mix64(spec.hash_seed ^ kWordSalt ^ fnv1a64(text.substr(i, j - i)));
            acc[static_cast<std::uint32_t>(h) & mask] += 1.0f;
        }
        i = j;
    }

    // Character trigrams over code points (covers unsegmented scripts).
    const auto offs = utf8::codepoint_offsets(text);
    if (offs.size() >= 4) { // at least 3 code points
        for (std::size_t k = 0; k + 3 < offs.size(); ++k) {
            const std::string_view tri = text.substr(offs[k], offs[k + 3] - offs[k]);
            const std::uint64_t h = mix64(spec.hash_seed ^ kTrigramSalt ^ fnv1a64(tri));
            acc[static_cast<std::uint32_t>(h) & mask] += 1.0f;
        }
    }

    std::vector<std::pair<std::uint32_t, float>> out(acc.begin(), acc.end());
    std::sort(out.begin(), out.end());
    double norm = 0.0;
    for (const auto& [idx, v] : out) norm += double(v) * double(v);
    if (norm > 0.0) {
        const float inv = static_cast<float>(1.0 / std::sqrt(norm));
        for (auto& [idx, v] : out) v *= inv;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

double auc_score(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size())
        throw std::invalid_argument("auc_score: size mismatch");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Rank sum with average ranks for ties.
    double rank_sum_pos = 0.0;
    std::size_t n_pos = 0, n_neg = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * (double(i + 1) + double(j)); // 1-based
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] == 1) {
                rank_sum_pos += avg_rank;
                ++n_pos;
            } else {
                ++n_neg;
            }
        }
        i = j;
    }
    if (n_pos == 0 || n_neg == 0)
        throw std::invalid_argument("auc_score: needs both classes");
    return (rank_sum_pos - 0.5 * double(n_pos) * double(n_pos + 1)) /
           (double(n_pos) * double(n_neg));
}

namespace {

using SparseVec = std::vector<std::pair<std::uint32_t, float>>;

struct LabeledSet {
    std::vector<SparseVec> x;
    std::vector<int> y;
};

} // namespace

ClassifierTrainResult train_quality_classifier(std::span<const Document> positives,
                                               std::span<const Document> negatives,
                                               const ClassifierTrainConfig& config) {
    if (positives.empty()) throw DataError("train_quality_classifier: empty positive class");
    if (negatives.empty()) throw DataError("train_quality_classifier: empty negative class");

    ClassifierTrainResult result;
    result.model.spec = config.features;
    result.model.weights.assign(config.features.dims(), 0.0f);
    result.report.n_pos_in = positives.size();
    result.report.n_neg_in = negatives.size();

    std::mt19937_64 rng(config.seed);

    // 1:1 class balance by downsampling the larger class.
    const std::size_t per_class = std::min(positives.size(), negatives.size());
    result.report.n_per_class = per_class;
    auto pick = [&](std::span<const Document> docs) {
        std::vector<std::size_t> idx(docs.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(per_class);
        std::sort(idx.begin(), idx.end());
        return idx;
    };
    const auto pos_idx = pick(positives);
    const auto neg_idx = pick(negatives);

    // Stratified held-out split.
    const auto split_point = [&](std::size_t n) {
        const auto h = static_cast<std::size_t>(std::floor(config.heldout_fraction * double(n)));
        return n >= 2 ? std::max<std::size_t>(h, n >= 10 ? 1 : h) : 0;
    };
    const std::size_t heldout_per_class = split_point(per_class);

    LabeledSet train, heldout;
    auto add_class = [&](std::span<const Document> docs,
                         const std::vector<std::size_t>& idx, int label) {
        std::vector<std::size_t> shuffled = idx;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        for (std::size_t k = 0; k < shuffled.size(); ++k) {
            auto& dst = k < heldout_per_class ? heldout : train;
            dst.x.push_back(featurize(docs[shuffled[k]].text, config.features));
            dst.y.push_back(label);
        }
    };
    add_class(positives, pos_idx, 1);
    add_class(negatives, neg_idx, 0);
    result.report.n_train = train.x.size();
    result.report.n_heldout = heldout.x.size();

    // Seeded SGD on the logistic loss.
    auto& w = result.model.weights;
    double& b = result.model.bias;
    std::vector<std::size_t> order(train.x.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        const double lr = config.learning_rate / (1.0 + 0.1 * double(epoch));
        for (const std::size_t s : order) {
            const auto& x = train.x[s];
            double z = b;
            for (const auto& [idx, v] : x) z += double(w[idx]) * double(v);
            const double g = sigmoid(z) - double(train.y[s]);
            for (const auto& [idx, v] : x)
                w[idx] -= static_cast<float>(lr * (g * double(v) + config.l2 * double(w[idx])));
            b -= lr * g;
        }
    }

    // Held-out AUC (falls back to the training set when the split is empty).
    const LabeledSet& eval = heldout.x.empty() ? train : heldout;
    std::vector<double> scores(eval.x.size());
    for (std::size_t s = 0; s < eval.x.size(); ++s) {
        double z = b;
        for (const auto& [idx, v] : eval.x[s]) z += double(w[idx]) * double(v);
        scores[s] = sigmoid(z);
    }
    result.report.heldout_auc = auc_score(scores, eval.y);
    return result;
}

double score_document(const QualityClassifier& model, const Document& doc) {
    if (model.weights.size() != model.spec.dims())
        throw std::invalid_argument("score_document: model weights size mismatch");
    double z = model.bias;
    for (const auto& [idx, v] : featurize(doc.text, model.spec))
        z += double(model.weights[idx]) * double(v);
    return sigmoid(z);
}

void save_classifier(const std::string& path, const QualityClassifier& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    json j;
    j["format"] = "cptkit-quality-classifier";
    j["version"] = 1;
    j["dims_log2"] = model.spec.dims_log2;
    j["hash_seed"] = model.spec.hash_seed;
    j["bias"] = model.bias;
    json w = json::array();
    for (std::size_t i = 0; i < model.weights.size(); ++i) {
        if (model.weights[i] != 0.0f) w.push_back({i, model.weights[i]});
    }
    j["sparse_weights"] = std::move(w);
    out << j.dump() << '\n';
}

QualityClassifier load_classifier(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError(std::string("classifier file: ") + e.what());
    }
    if (j.value("format", "") != "cptkit-quality-classifier")
        throw DataError("classifier file: unrecognized format");
    QualityClassifier model;
    model.spec.dims_log2 = j.at("dims_log2").get<std::size_t>();
    model.spec.hash_seed = j.at("hash_seed").get<std::uint64_t>();
    model.bias = j.at("bias").get<double>();
    model.weights.assign(model.spec.dims(), 0.0f);
    for (const auto& pair : j.at("sparse_weights")) {
        const auto idx = pair.at(0).get<std::size_t>();
        if (idx >= model.weights.size()) throw DataError("classifier file: index out of range");
        model.weights[idx] = pair.at(1).get<float>();
    }
    return model;
}

// ---------------------------------------------------------------------------
// Pareto resampling
// ---------------------------------------------------------------------------

double pareto_retention_probability(double score, double alpha) {
    if (!(alpha > 0.0)) throw std::invalid_argument("pareto: alpha must be > 0");
    if (!(score >= 0.0 && score <= 1.0))
        throw std::invalid_argument("pareto: score outside [0,1]");
    if (score >= 1.0) return 1.0;
    // P(Lomax(alpha) > 1 - score) with CCDF (1+t)^-alpha.
    return std::min(1.0, std::pow(2.0 - score, -alpha));
}

bool pareto_keep(std::string_view doc_id, double score, const ParetoFilterConfig& config) {
    if (!(config.alpha > 0.0)) throw std::invalid_argument("pareto: alpha must be > 0");
    if (score >= 1.0) return true; // threshold <= 0; the draw is non-negative
    CounterRng rng(config.seed, doc_id);
    return lomax_sample(rng.uniform_open0(), config.alpha) > 1.0 - score;
}

ParetoResampleResult pareto_resample(std::span<const Document> docs,
                                     const ParetoFilterConfig& config) {
    ParetoResampleResult result;
    result.docs_in = docs.size();
    for (const auto& doc : docs) {
        const auto it = doc.annotations.find(kDocumentScoreKey);
        if (it == doc.annotations.end())
            throw DataError("pareto_resample: doc " + doc.id + " missing " +
                            kDocumentScoreKey);
        const double score = it->second;
        if (!(score >= 0.0 && score <= 1.0))
            throw DataError("pareto_resample: doc " + doc.id + " score outside [0,1]");
        if (pareto_keep(doc.id, score, config)) result.kept.push_back(doc);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Dimension aggregation
// ---------------------------------------------------------------------------

void DimensionScoreVector::validate() const {
    const double vals[kNumDimensions] = {readability,     coherence,
                                         informativeness, safety,
                                         anonymity_degree, unattainable_references};
    for (const double v : vals)
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument("dimension score outside [0,1]");
}

double aggregate_dimension_scores(const DimensionScoreVector& v,
                                  std::span<const double> weights) {
    v.validate();
    if (weights.size() != kNumDimensions)
        throw std::invalid_argument("aggregate: expected 6 weights");
    double sum = 0.0;
    for (const double w : weights) {
        if (w < 0.0) throw std::invalid_argument("aggregate: negative weight");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("aggregate: weights must sum to 1");

    // Sign-normalize so that higher always means better.
    const double oriented[kNumDimensions] = {
        v.readability,          v.coherence, v.informativeness,
        v.safety,               1.0 - v.anonymity_degree,
        1.0 - v.unattainable_references};
    double out = 0.0;
    for (std::size_t i = 0; i < kNumDimensions; ++i) out += weights[i] * oriented[i];
    return out;
}

// ---------------------------------------------------------------------------
// Abnormal-loss detection
// ---------------------------------------------------------------------------

namespace {

double median_of(std::vector<double> v) {
    const std::size_t n = v.size();
    const std::size_t mid = n / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    if (n % 2 == 1) return v[mid];
    const double hi = v[mid];
    std::nth_element(v.begin(), v.begin() + mid - 1, v.begin() + mid);
    return 0.5 * (v[mid - 1] + hi);
}

} // namespace

AbnormalLossReport detect_abnormal_loss(std::span<const LossAnnotation> annotations,
                                        const AbnormalLossConfig& config) {
    std::map<std::string, std::vector<const LossAnnotation*>> by_source;
    for (const auto& a : annotations) {
        if (!std::isfinite(a.loss) || a.loss < 0.0)
            throw DataError("abnormal_loss: doc " + a.id + " has invalid loss");
        by_source[a.source].push_back(&a);
    }

    AbnormalLossReport report;
    std::vector<double> qualifying_medians;
    std::vector<std::string> qualifying_tags;

    for (const auto& [source, docs] : by_source) {
        if (docs.size() < config.min_docs) {
            report.skipped_sources.push_back(source);
            continue;
        }
        std::vector<double> losses;
        losses.reserve(docs.size());
        for (const auto* d : docs) losses.push_back(d->loss);
        const double med = median_of(losses);
        std::vector<double> dev;
        dev.reserve(losses.size());
        for (const double l : losses) dev.push_back(std::abs(l - med));
        const double mad = median_of(std::move(dev));

        SourceLossStats stats;
        stats.source = source;
        stats.n = docs.size();
        stats.median = med;
        stats.mad = mad;
        report.sources.push_back(stats);
        qualifying_medians.push_back(med);
        qualifying_tags.push_back(source);

        const double cutoff = config.k * std::max(mad, config.mad_floor);
        std::vector<LossAnnotation> flagged_here;
        for (const auto* d : docs)
            if (std::abs(d->loss - med) > cutoff) flagged_here.push_back(*d);
        std::sort(flagged_here.begin(), flagged_here.end(),
                  [](const auto& a, const auto& b) { return a.id < b.id; });
        if (!flagged_here.empty()) {
            auto sample = flagged_here;
            if (sample.size() > config.sample_size) sample.resize(config.sample_size);
            report.review_samples[source] = std::move(sample);
        }
        report.flagged_docs.insert(report.flagged_docs.end(), flagged_here.begin(),
                                   flagged_here.end());
    }

    // Source-level rule over the medians of qualifying sources.
    if (qualifying_medians.size() >= 2) {
        const double gmed = median_of(qualifying_medians);
        std::vector<double> dev;
        dev.reserve(qualifying_medians.size());
        for (const double m : qualifying_medians) dev.push_back(std::abs(m - gmed));
        const double madm = median_of(std::move(dev));
        const double cutoff = config.k * std::max(madm, config.mad_floor);
        for (std::size_t i = 0; i < qualifying_medians.size(); ++i) {
            if (std::abs(qualifying_medians[i] - gmed) > cutoff) {
                report.flagged_sources.push_back(qualifying_tags[i]);
                for (auto& s : report.sources)
                    if (s.source == qualifying_tags[i]) s.flagged = true;
            }
        }
    }

    std::sort(report.flagged_docs.begin(), report.flagged_docs.end(),
              [](const auto& a, const auto& b) { return a.id < b.id; });
    std::sort(report.flagged_sources.begin(), report.flagged_sources.end());
    std::sort(report.skipped_sources.begin(), report.skipped_sources.end());
    return report;
}

// ---------------------------------------------------------------------------
// Anonymization
// ---------------------------------------------------------------------------

struct AnonymizeRuleSet::Impl {
    std::vector<std::regex> compiled;
};

AnonymizeRuleSet::AnonymizeRuleSet(std::vector<AnonymizeRule> rules)
    : rules_(std::move(rules)) {
    auto impl = std::make_shared<Impl>();
    for (const auto& rule : rules_) {
        try {
            impl->compiled.emplace_back(rule.pattern, std::regex::ECMAScript);
        } catch (const std::regex_error& e) {
            throw DataError("anonymize rule '" + rule.name + "': " + e.what());
        }
    }
    impl_ = std::move(impl);
}

AnonymizeResult anonymize(const Document& doc, const AnonymizeRuleSet& rules) {
    AnonymizeResult result;
    result.doc = doc;
    result.replacements.assign(rules.rules().size(), 0);
    const auto& compiled = rules.impl().compiled;
    for (std::size_t i = 0; i < compiled.size(); ++i) {
        const auto begin = std::sregex_iterator(result.doc.text.begin(),
                                                result.doc.text.end(), compiled[i]);
        const auto count = std::distance(begin, std::sregex_iterator());
        if (count == 0) continue;
        result.replacements[i] = static_cast<std::size_t>(count);
        result.doc.text =
            std::regex_replace(result.doc.text, compiled[i], rules.rules()[i].replacement);
    }
    return result;
}

std::vector<AnonymizeRule> default_anonymize_rules() {
    return {
        {"url", R"(https?://[^\s<>"']+)", "<URL>"},
        {"email", R"([A-Za-z0-9._%+\-]+@[A-Za-z0-9.\-]+\.[A-Za-z]{2,})", "<EMAIL>"},
        {"reference", R"(\[\d+(?:\s*[,\-]\s*\d+)*\])", "<REF>"},
        {"id_number", R"(\b\d{15,19}[Xx]?\b)", "<ID>"},
        {"phone", R"(\+?\d{1,4}[-. ]\(?\d{2,4}\)?[-. ]\d{3,4}[-. ]?\d{0,4}\b)", "<PHONE>"},
        {"titled_name", R"(\b(?:Mr|Mrs|Ms|Dr|Prof)\.\s+[A-Z][a-z]+)", "<NAME>"},
    };
}

std::vector<AnonymizeRule> load_anonymize_rules(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError(std::string("anonymize rules: ") + e.what());
    }
    if (!j.is_array()) throw DataError("anonymize rules: expected a JSON array");
    std::vector<AnonymizeRule> rules;
    for (const auto& item : j) {
        rules.push_back({item.at("name").get<std::string>(),
                         item.at("pattern").get<std::string>(),
                         item.at("replacement").get<std::string>()});
    }
    return rules;
}

void save_anonymize_rules(const std::string& path, std::span<const AnonymizeRule> rules) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    json j = json::array();
    for (const auto& r : rules)
        j.push_back({{"name", r.name}, {"pattern", r.pattern}, {"replacement", r.replacement}});
    out << j.dump(2) << '\n';
}

} // namespace cptkit
