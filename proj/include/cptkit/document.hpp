#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cptkit {

// The atomic corpus unit. Flows through every pipeline stage as JSONL.
struct Document {
    std::string id;
    std::optional<std::string> url;
    std::string source; // source tag, e.g. "general/web", "financial/news"
    std::optional<std::int64_t> timestamp_ms; // UTC epoch milliseconds
    std::string text;
    std::map<std::string, double> annotations; // quality score, loss, dim scores
};

enum class DomainClass { General, Financial };

std::string_view to_string(DomainClass d);
DomainClass domain_class_from_string(std::string_view s);

struct SourceRegistry {
    struct Entry {
        std::string tag;
        DomainClass domain = DomainClass::General;
        double dedup_threshold = 0.8; // in (0, 1]
        double target_weight = 0.0;   // >= 0
    };
    std::vector<Entry> entries;

    const Entry* find(std::string_view tag) const;
    // Throws DataError on duplicate tags, thresholds outside (0,1], or
    // negative weights.
    void validate() const;

    static SourceRegistry with_default_thresholds(const std::vector<std::string>& tags);
};

// Rule-based cleanup thresholds. Char counts are Unicode code points.
struct HeuristicRuleSet {
    std::size_t min_doc_chars = 10;
    std::size_t max_doc_chars = 1000000;
    double min_avg_sentence_chars = 5.0;
    double max_avg_sentence_chars = 2000.0;
    double max_non_alnum_fraction = 0.4;
    // Script classes ("latin", "cjk", "other"); empty list allows everything.
    // The toolkit does not ship a language-ID model, so "language" here is
    // the dominant script class of the text.
    std::vector<std::string> allowed_scripts;

    void validate() const; // min <= max for bounded pairs, fraction in [0,1]
};

enum class FilterReason {
    None,
    TooShort,
    TooLong,
    AvgSentenceTooShort,
    AvgSentenceTooLong,
    TooManyNonAlnum,
    LanguageNotAllowed,
};

std::string_view to_string(FilterReason r);

struct FilterDecision {
    bool keep = true;
    FilterReason reason = FilterReason::None;
};

} // namespace cptkit
