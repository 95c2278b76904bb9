#include "cptkit/dedup.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

#include "cptkit/errors.hpp"
#include "cptkit/rng.hpp"
#include "cptkit/utf8.hpp"

namespace cptkit {

using nlohmann::json;

// ---------------------------------------------------------------------------
// MinHash
// ---------------------------------------------------------------------------

MinHasher::MinHasher(const MinHashParams& params) : params_(params) {
    if (params_.num_permutations == 0) throw std::invalid_argument("num_permutations == 0");
    if (params_.shingle_size == 0) throw std::invalid_argument("shingle_size == 0");
    std::uint64_t state = params_.seed;
    mul_.resize(params_.num_permutations);
    add_.resize(params_.num_permutations);
    for (std::size_t i = 0; i < params_.num_permutations; ++i) {
        mul_[i] = splitmix64(state) | 1ULL; // odd multiplier
        add_[i] = splitmix64(state);
    }
}

std::vector<std::uint64_t> MinHasher::shingle_hashes(std::string_view text,
                                                     std::size_t shingle_size) {
    const auto offs = utf8::codepoint_offsets(text);
    const std::size_t n_cp = offs.size() - 1;
    std::vector<std::uint64_t> hashes;
    if (n_cp < shingle_size) {
        hashes.push_back(mix64(fnv1a64(text)));
        return hashes;
    }
    hashes.reserve(n_cp - shingle_size + 1);
    for (std::size_t i = 0; i + shingle_size <= n_cp; ++i) {
        const std::string_view sh = text.substr(offs[i], offs[i + shingle_size] - offs[i]);
        hashes.push_back(mix64(fnv1a64(sh)));
    }
    return hashes;
}

MinHashSignature MinHasher::signature(std::string_view text) const {
    MinHashSignature sig;
    sig.num_permutations = params_.num_permutations;
    sig.shingle_size = params_.shingle_size;
    sig.seed = params_.seed;
    sig.values.assign(params_.num_permutations,
                      std::numeric_limits<std::uint64_t>::max());

    const auto hashes = shingle_hashes(text, params_.shingle_size);
    const std::size_t p = params_.num_permutations;
    for (const std::uint64_t x : hashes) {
        for (std::size_t j = 0; j < p; ++j) {
            const std::uint64_t v = mul_[j] * x + add_[j];
            if (v < sig.values[j]) sig.values[j] = v;
        }
    }
    return sig;
}

double jaccard_estimate(const MinHashSignature& a, const MinHashSignature& b) {
    if (!a.compatible(b))
        throw std::invalid_argument("jaccard_estimate: incompatible signatures");
    if (a.values.size() != a.num_permutations || b.values.size() != b.num_permutations)
        throw std::invalid_argument("jaccard_estimate: malformed signature");
    std::size_t agree = 0;
    for (std::size_t i = 0; i < a.values.size(); ++i)
        if (a.values[i] == b.values[i]) ++agree;
    return static_cast<double>(agree) / static_cast<double>(a.values.size());
}

double exact_shingle_jaccard(std::string_view a, std::string_view b,
                             std::size_t shingle_size) {
    auto sa = MinHasher::shingle_hashes(a, shingle_size);
    auto sb = MinHasher::shingle_hashes(b, shingle_size);
    std::sort(sa.begin(), sa.end());
    sa.erase(std::unique(sa.begin(), sa.end()), sa.end());
    std::sort(sb.begin(), sb.end());
    sb.erase(std::unique(sb.begin(), sb.end()), sb.end());
    std::size_t inter = 0, i = 0, j = 0;
    while (i < sa.size() && j < sb.size()) {
        if (sa[i] == sb[j]) {
            ++inter;
            ++i;
            ++j;
        } else if (sa[i] < sb[j]) {
            ++i;
        } else {
            ++j;
        }
    }
    const std::size_t uni = sa.size() + sb.size() - inter;
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// ---------------------------------------------------------------------------
// URL dedup
// ---------------------------------------------------------------------------

UrlDedupResult url_dedup(std::span<const Document> docs) {
    UrlDedupResult result;
    std::unordered_map<std::string, std::size_t> best; // url -> input index
    std::vector<bool> keep(docs.size(), true);

    for (std::size_t i = 0; i < docs.size(); ++i) {
        const auto& doc = docs[i];
        if (!doc.url) {
            ++result.docs_without_url;
            continue;
        }
        const std::int64_t ts =
            doc.timestamp_ms.value_or(std::numeric_limits<std::int64_t>::min());
        auto it = best.find(*doc.url);
        if (it == best.end()) {
            best.emplace(*doc.url, i);
            continue;
        }
        const auto& prev = docs[it->second];
        const std::int64_t prev_ts =
            prev.timestamp_ms.value_or(std::numeric_limits<std::int64_t>::min());
        if (ts >= prev_ts) { // ties go to the later input position
            keep[it->second] = false;
            it->second = i;
        } else {
            keep[i] = false;
        }
    }
    for (std::size_t i = 0; i < docs.size(); ++i) {
        if (keep[i])
            result.docs.push_back(docs[i]);
        else
            result.removed_ids.push_back(docs[i].id);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Document dedup
// ---------------------------------------------------------------------------

namespace {

// Union-find where the representative is always the smallest index, making
// "earliest ingested survives" fall out of the structure itself.
struct MinUnionFind {
    std::vector<std::uint32_t> parent;
    explicit MinUnionFind(std::size_t n) : parent(n) {
        std::iota(parent.begin(), parent.end(), 0u);
    }
    std::uint32_t find(std::uint32_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    void unite(std::uint32_t a, std::uint32_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (a < b)
            parent[b] = a;
        else
            parent[a] = b;
    }
};

std::uint64_t band_hash(const MinHashSignature& sig, std::size_t band,
                        std::size_t rows) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ (band * 0x9e3779b97f4a7c15ULL);
    for (std::size_t r = 0; r < rows; ++r) {
        h ^= sig.values[band * rows + r];
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace

DocumentDedupResult document_dedup(std::span<const Document> docs,
                                   const SourceRegistry& registry,
                                   const DocumentDedupParams& params) {
    if (params.lsh.bands * params.lsh.rows_per_band != params.minhash.num_permutations)
        throw std::invalid_argument("bands * rows_per_band != num_permutations");

    const std::size_t n = docs.size();
    std::vector<double> thresholds(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto* entry = registry.find(docs[i].source);
        if (!entry)
            throw DataError("document_dedup: unknown source '" + docs[i].source +
                            "' for doc " + docs[i].id);
        thresholds[i] = entry->dedup_threshold;
    }

    const MinHasher hasher(params.minhash);
    std::vector<MinHashSignature> sigs;
    sigs.reserve(n);
    for (const auto& doc : docs) sigs.push_back(hasher.signature(doc.text));

    // LSH band buckets -> candidate pairs.
    std::vector<std::pair<std::uint32_t, std::uint32_t>> candidates;
    for (std::size_t b = 0; b < params.lsh.bands; ++b) {
        std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> buckets;
        buckets.reserve(n * 2);
        for (std::size_t i = 0; i < n; ++i)
            buckets[band_hash(sigs[i], b, params.lsh.rows_per_band)].push_back(
                static_cast<std::uint32_t>(i));
        for (const auto& [key, members] : buckets) {
            (void)key;
            if (members.size() < 2) continue;
            for (std::size_t a = 0; a < members.size(); ++a)
                for (std::size_t c = a + 1; c < members.size(); ++c)
                    candidates.emplace_back(members[a], members[c]);
        }
    }
    // Canonical order before cluster resolution keeps the result independent
    // of bucket iteration order.
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    MinUnionFind uf(n);
    for (const auto& [i, j] : candidates) {
        const double thr = std::max(thresholds[i], thresholds[j]);
        if (jaccard_estimate(sigs[i], sigs[j]) >= thr) uf.unite(i, j);
    }

    std::unordered_map<std::uint32_t, std::vector<std::uint32_t>> groups;
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::uint32_t root = uf.find(i);
        if (root != i) groups[root].push_back(i);
    }

    DocumentDedupResult result;
    std::vector<bool> keep(n, true);
    std::vector<std::uint32_t> roots;
    roots.reserve(groups.size());
    for (const auto& [root, members] : groups) {
        (void)members;
        roots.push_back(root);
    }
    std::sort(roots.begin(), roots.end());
    for (const std::uint32_t root : roots) {
        const auto& members = groups[root];
        DuplicateCluster cluster;
        cluster.survivor_id = docs[root].id;
        double sum = 0.0;
        for (const std::uint32_t m : members) {
            keep[m] = false;
            cluster.removed_ids.push_back(docs[m].id);
            sum += jaccard_estimate(sigs[root], sigs[m]);
        }
        cluster.mean_estimated_jaccard = sum / static_cast<double>(members.size());
        result.clusters.push_back(std::move(cluster));
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (keep[i])
            result.docs.push_back(docs[i]);
        else
            ++result.removed;
    }
    return result;
}

// ---------------------------------------------------------------------------
// Line dedup
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (true) {
        const std::size_t nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            lines.push_back(text.substr(start));
            break;
        }
        lines.push_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

std::string_view strip_trailing_ws(std::string_view s) {
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

} // namespace

LineDedupResult line_dedup(std::span<const Document> docs, const LineDedupConfig& config) {
    if (config.bucket_size < 1) throw std::invalid_argument("bucket_size < 1");
    if (config.max_occurrences < 1) throw std::invalid_argument("max_occurrences < 1");

    LineDedupResult result;
    const std::size_t n = docs.size();
    for (std::size_t begin = 0; begin < n; begin += config.bucket_size) {
        const std::size_t end = std::min(begin + config.bucket_size, n);

        std::unordered_map<std::string, std::size_t> counts;
        std::vector<std::vector<std::string_view>> doc_lines(end - begin);
        for (std::size_t i = begin; i < end; ++i) {
            doc_lines[i - begin] = split_lines(docs[i].text);
            for (const auto line : doc_lines[i - begin]) {
                const auto key = strip_trailing_ws(line);
                if (!key.empty()) ++counts[std::string(key)];
            }
        }

        for (std::size_t i = begin; i < end; ++i) {
            const auto& lines = doc_lines[i - begin];
            std::string rebuilt;
            rebuilt.reserve(docs[i].text.size());
            bool first = true, changed = false;
            for (const auto line : lines) {
                const auto key = strip_trailing_ws(line);
                if (!key.empty()) {
                    auto it = counts.find(std::string(key));
                    if (it != counts.end() && it->second > config.max_occurrences) {
                        ++result.lines_removed;
                        changed = true;
                        continue;
                    }
                }
                if (!first) rebuilt.push_back('\n');
                rebuilt.append(line);
                first = false;
            }
            if (!changed) {
                result.docs.push_back(docs[i]);
            } else if (rebuilt.empty()) {
                result.dropped_doc_ids.push_back(docs[i].id);
            } else {
                Document doc = docs[i];
                doc.text = std::move(rebuilt);
                result.docs.push_back(std::move(doc));
            }
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Reports & signature cache
// ---------------------------------------------------------------------------

void write_cluster_report(const std::string& path,
                          std::span<const DuplicateCluster> clusters) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    for (const auto& c : clusters) {
        json j;
        j["survivor_id"] = c.survivor_id;
        j["removed_ids"] = c.removed_ids;
        j["mean_estimated_jaccard"] = c.mean_estimated_jaccard;
        out << j.dump() << '\n';
    }
}

namespace {
constexpr const char* kCacheFormat = "cptkit-minhash-cache";
constexpr int kCacheVersion = 1;
} // namespace

void save_signature_cache(const std::string& path, const SignatureCache& cache) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    json header;
    header["format"] = kCacheFormat;
    header["version"] = kCacheVersion;
    header["num_permutations"] = cache.params.num_permutations;
    header["shingle_size"] = cache.params.shingle_size;
    header["seed"] = cache.params.seed;
    out << header.dump() << '\n';
    for (const auto& [id, sig] : cache.entries) {
        json j;
        j["id"] = id;
        j["values"] = sig.values;
        out << j.dump() << '\n';
    }
}

SignatureCache load_signature_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("signature cache: empty file");
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        throw DataError(std::string("signature cache: bad header: ") + e.what());
    }
    if (header.value("format", "") != kCacheFormat ||
        header.value("version", 0) != kCacheVersion)
        throw DataError("signature cache: unrecognized format/version");

    SignatureCache cache;
    cache.params.num_permutations = header.at("num_permutations").get<std::size_t>();
    cache.params.shingle_size = header.at("shingle_size").get<std::size_t>();
    cache.params.seed = header.at("seed").get<std::uint64_t>();

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError("signature cache line " + std::to_string(line_no) + ": " +
                            e.what());
        }
        MinHashSignature sig;
        sig.num_permutations = cache.params.num_permutations;
        sig.shingle_size = cache.params.shingle_size;
        sig.seed = cache.params.seed;
        sig.values = j.at("values").get<std::vector<std::uint64_t>>();
        if (sig.values.size() != sig.num_permutations)
            throw DataError("signature cache line " + std::to_string(line_no) +
                            ": value count mismatch");
        cache.entries.emplace_back(j.at("id").get<std::string>(), std::move(sig));
    }
    return cache;
}

} // namespace cptkit
