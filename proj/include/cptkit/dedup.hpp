#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cptkit/document.hpp"

namespace cptkit {

// ---------------------------------------------------------------------------
// MinHash
// ---------------------------------------------------------------------------

struct MinHashParams {
    std::size_t num_permutations = 128;
    std::size_t shingle_size = 5; // character (code point) n-gram width
    std::uint64_t seed = 0x5eed0001;
};

struct MinHashSignature {
    std::vector<std::uint64_t> values; // length == num_permutations
    std::size_t num_permutations = 0;
    std::size_t shingle_size = 0;
    std::uint64_t seed = 0;

    bool compatible(const MinHashSignature& other) const {
        return num_permutations == other.num_permutations &&
               shingle_size == other.shingle_size && seed == other.seed;
    }
};

// Precomputed permutation coefficients; reuse across documents.
class MinHasher {
public:
    explicit MinHasher(const MinHashParams& params);

    MinHashSignature signature(std::string_view text) const;
    const MinHashParams& params() const { return params_; }

    // 64-bit hashes of the character shingles of `text` (with duplicates).
    // Texts shorter than shingle_size hash as a single whole-text shingle.
    static std::vector<std::uint64_t> shingle_hashes(std::string_view text,
                                                     std::size_t shingle_size);

private:
    MinHashParams params_;
    std::vector<std::uint64_t> mul_; // odd multipliers
    std::vector<std::uint64_t> add_;
};

// Fraction of positions where the minima agree. Throws std::invalid_argument
// on incompatible parameters.
double jaccard_estimate(const MinHashSignature& a, const MinHashSignature& b);

// Exact Jaccard of the two texts' character-shingle sets (test oracle).
double exact_shingle_jaccard(std::string_view a, std::string_view b,
                             std::size_t shingle_size);

// ---------------------------------------------------------------------------
// LSH banding
// ---------------------------------------------------------------------------

struct LshParams {
    std::size_t bands = 16;
    std::size_t rows_per_band = 8; // bands * rows_per_band == num_permutations
};

// ---------------------------------------------------------------------------
// URL-level dedup: retain the latest version of each page
// ---------------------------------------------------------------------------

struct UrlDedupResult {
    std::vector<Document> docs;                 // survivors, input order
    std::vector<std::string> removed_ids;       // input order
    std::size_t docs_without_url = 0;
};

// Per distinct url exactly one document survives: max timestamp, ties go to
// the last input position. Docs without a url pass through untouched.
UrlDedupResult url_dedup(std::span<const Document> docs);

// ---------------------------------------------------------------------------
// Document-level dedup: global MinHash + LSH with per-source thresholds
// ---------------------------------------------------------------------------

struct DuplicateCluster {
    std::string survivor_id;
    std::vector<std::string> removed_ids;
    double mean_estimated_jaccard = 0.0;
};

struct DocumentDedupResult {
    std::vector<Document> docs; // survivors, input order
    std::vector<DuplicateCluster> clusters;
    std::size_t removed = 0;
};

struct DocumentDedupParams {
    MinHashParams minhash;
    LshParams lsh;
};

// Candidate pairs come from LSH band collisions; a pair merges when the
// estimated Jaccard reaches the stricter of the two documents' source
// thresholds. The earliest-ingested document of each cluster survives.
// Candidate pairs are resolved in canonical (index) order, so the outcome
// does not depend on any parallel build schedule.
DocumentDedupResult document_dedup(std::span<const Document> docs,
                                   const SourceRegistry& registry,
                                   const DocumentDedupParams& params);

// ---------------------------------------------------------------------------
// Line-level dedup within consecutive buckets
// ---------------------------------------------------------------------------

struct LineDedupConfig {
    std::size_t bucket_size = 10000; // documents per bucket
    std::size_t max_occurrences = 6; // strictly more than this is removed
};

struct LineDedupResult {
    std::vector<Document> docs;
    std::vector<std::string> dropped_doc_ids; // emptied by line removal
    std::size_t lines_removed = 0;
};

// Within each consecutive bucket of bucket_size documents, a line (after
// trailing-whitespace strip) occurring more than max_occurrences times is
// removed from every document in the bucket. Blank lines are never removed.
LineDedupResult line_dedup(std::span<const Document> docs, const LineDedupConfig& config);

// ---------------------------------------------------------------------------
// Reports & signature cache
// ---------------------------------------------------------------------------

// One cluster per line: {survivor_id, removed_ids, mean_estimated_jaccard}.
void write_cluster_report(const std::string& path,
                          std::span<const DuplicateCluster> clusters);

struct SignatureCache {
    MinHashParams params;
    std::vector<std::pair<std::string, MinHashSignature>> entries;
};

// JSONL cache with a versioned header line carrying the MinHash parameters.
void save_signature_cache(const std::string& path, const SignatureCache& cache);
SignatureCache load_signature_cache(const std::string& path);

} // namespace cptkit
