#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cptkit/document.hpp"

namespace cptkit {

// ---------------------------------------------------------------------------
// JSONL ingestion / serialization
//
// One document per line, UTF-8, fields: id, url, source, timestamp (RFC 3339),
// text, annotations. Optional fields are omitted when absent.
// ---------------------------------------------------------------------------

struct LineError {
    std::size_t line_no = 0; // 1-based
    std::string message;
};

struct IngestResult {
    std::vector<Document> docs;
    std::vector<LineError> errors;
};

// Streaming reader. Malformed lines are recorded with their line number and
// skipped; an unreadable file throws DataError.
class JsonlReader {
public:
    explicit JsonlReader(const std::string& path);
    ~JsonlReader();
    JsonlReader(JsonlReader&&) noexcept;
    JsonlReader& operator=(JsonlReader&&) noexcept;

    // Next valid document, or nullopt at end of file.
    std::optional<Document> next();

    const std::vector<LineError>& errors() const { return errors_; }
    std::size_t lines_read() const { return line_no_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::vector<LineError> errors_;
    std::size_t line_no_ = 0;
};

IngestResult read_jsonl(const std::string& path);
void write_jsonl(const std::string& path, std::span<const Document> docs);

std::string document_to_json_line(const Document& doc);
Document document_from_json_line(std::string_view line); // throws DataError

// RFC 3339 timestamps. Parsing accepts 'Z' or a numeric offset and up to
// millisecond precision; formatting always emits UTC ('Z').
std::optional<std::int64_t> parse_rfc3339_ms(std::string_view s);
std::string format_rfc3339_ms(std::int64_t epoch_ms);

// ---------------------------------------------------------------------------
// Heuristic filtering
// ---------------------------------------------------------------------------

struct SentenceStats {
    std::size_t count = 0;       // number of non-empty sentences
    std::size_t total_chars = 0; // code points across sentences (trimmed)
    double avg() const { return count == 0 ? 0.0 : double(total_chars) / double(count); }
};

// Sentences end at {. ! ? 。 ！ ？} followed by whitespace or end of text.
// Each sentence is trimmed of surrounding whitespace before counting.
SentenceStats sentence_stats(std::string_view text);

// Dominant script class of the text: "latin", "cjk" or "other".
std::string script_class(std::string_view text);

// Pure: same (doc, rules) always gives the same decision. The reason names
// the first violated rule in a fixed order (length, sentence length,
// non-alphanumeric fraction, script). Boundary values pass (inclusive).
FilterDecision heuristic_filter(const Document& doc, const HeuristicRuleSet& rules);

// ---------------------------------------------------------------------------
// Corpus statistics
// ---------------------------------------------------------------------------

struct CorpusStats {
    std::uint64_t docs = 0;
    std::uint64_t total_chars = 0; // code points
    std::map<std::string, std::uint64_t> per_source;

    double approx_tokens(double chars_per_token = 3.5) const {
        return static_cast<double>(total_chars) / chars_per_token;
    }

    void add(const Document& doc);
    // Associative and commutative, so shard results merge in any order.
    void merge(const CorpusStats& other);
};

CorpusStats corpus_stats(std::span<const Document> docs);

} // namespace cptkit
