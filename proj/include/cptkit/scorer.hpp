#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cptkit/document.hpp"
#include "cptkit/quality.hpp"

namespace cptkit {

// Integration seam for an external multi-dimension scoring model. The wire
// protocol is line-delimited JSON: one request {id, text} per line in, one
// response {id, readability, coherence, informativeness, safety,
// anonymity_degree, unattainable_references} per line out.

class Scorer {
public:
    virtual ~Scorer() = default;

    struct Response {
        std::string id;
        DimensionScoreVector scores;
    };

    // Scores a batch. Throws DataError on transport or protocol failure.
    virtual std::vector<Response> score(std::span<const Document> docs) = 0;
};

// Runs `command` through /bin/sh with the request JSONL on stdin and reads
// the response JSONL from stdout. A nonzero exit status is a failure.
class CommandScorer final : public Scorer {
public:
    explicit CommandScorer(std::string command) : command_(std::move(command)) {}
    std::vector<Response> score(std::span<const Document> docs) override;

private:
    std::string command_;
};

// POSTs the request JSONL to `url` (e.g. "http://127.0.0.1:8080/score") and
// parses the response body as JSONL.
class HttpScorer final : public Scorer {
public:
    explicit HttpScorer(std::string url) : url_(std::move(url)) {}
    std::vector<Response> score(std::span<const Document> docs) override;

private:
    std::string url_;
};

// In-process scorer for tests.
class FunctionScorer final : public Scorer {
public:
    using Fn = std::function<std::optional<DimensionScoreVector>(const Document&)>;
    explicit FunctionScorer(Fn fn) : fn_(std::move(fn)) {}
    std::vector<Response> score(std::span<const Document> docs) override;

private:
    Fn fn_;
};

struct ScorerApplyResult {
    std::vector<Document> docs;           // all input docs; scored ones annotated
    std::vector<std::string> missing_ids; // docs the scorer did not answer for
    bool aborted = false;                 // scorer failed mid-batch
    std::string error;
    std::size_t annotated = 0;
};

// Merges the six dimension scores into doc.annotations. A scorer failure
// aborts the batch: the result carries whatever was annotated before the
// failure plus the abort reason (partial-result manifest).
ScorerApplyResult external_scorer_apply(std::span<const Document> docs, Scorer& scorer);

// Parses one response line; throws DataError on malformed input or scores
// outside [0,1].
Scorer::Response parse_scorer_response_line(std::string_view line);
std::string scorer_request_line(const Document& doc);

} // namespace cptkit
