#include "cptkit/scorer.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <unistd.h>

#include <httplib.h>
#include <json.hpp>

#include "cptkit/errors.hpp"
#include "cptkit/rng.hpp"

namespace cptkit {

namespace fs = std::filesystem;
using nlohmann::json;

std::string scorer_request_line(const Document& doc) {
    json j;
    j["id"] = doc.id;
    j["text"] = doc.text;
    return j.dump();
}

Scorer::Response parse_scorer_response_line(std::string_view line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw DataError(std::string("scorer response: invalid JSON: ") + e.what());
    }
    Scorer::Response r;
    r.id = j.at("id").get<std::string>();
    auto dim = [&](const char* key) {
        if (!j.contains(key) || !j[key].is_number())
            throw DataError("scorer response for " + r.id + ": missing " + key);
        const double v = j[key].get<double>();
        if (!(v >= 0.0 && v <= 1.0))
            throw DataError("scorer response for " + r.id + ": " + key + " outside [0,1]");
        return v;
    };
    r.scores.readability = dim("readability");
    r.scores.coherence = dim("coherence");
    r.scores.informativeness = dim("informativeness");
    r.scores.safety = dim("safety");
    r.scores.anonymity_degree = dim("anonymity_degree");
    r.scores.unattainable_references = dim("unattainable_references");
    return r;
}

// ---------------------------------------------------------------------------
// CommandScorer
// ---------------------------------------------------------------------------

namespace {

fs::path unique_tmp(const char* stem) {
    static std::atomic<std::uint64_t> counter{0};
    const std::uint64_t tag =
        mix64(static_cast<std::uint64_t>(::getpid()) ^ (counter.fetch_add(1) << 32) ^
              static_cast<std::uint64_t>(std::chrono::steady_clock::now()
                                             .time_since_epoch()
                                             .count()));
    return fs::temp_directory_path() / (std::string(stem) + std::to_string(tag));
}

struct TmpFileGuard {
    fs::path path;
    ~TmpFileGuard() {
        std::error_code ec;
        fs::remove(path, ec);
    }
};

std::string shell_quote(const fs::path& p) { return "'" + p.string() + "'"; }

} // namespace

std::vector<Scorer::Response> CommandScorer::score(std::span<const Document> docs) {
    TmpFileGuard req{unique_tmp("cptkit_scorer_req_")};
    TmpFileGuard resp{unique_tmp("cptkit_scorer_resp_")};
    {
        std::ofstream out(req.path, std::ios::binary);
        if (!out) throw DataError("scorer: cannot write " + req.path.string());
        for (const auto& doc : docs) out << scorer_request_line(doc) << '\n';
    }
    const std::string cmd =
        command_ + " < " + shell_quote(req.path) + " > " + shell_quote(resp.path);
    const int rc = std::system(cmd.c_str());
    if (rc != 0)
        throw DataError("scorer command failed (status " + std::to_string(rc) + ")");

    std::ifstream in(resp.path, std::ios::binary);
    if (!in) throw DataError("scorer: cannot read " + resp.path.string());
    std::vector<Response> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        out.push_back(parse_scorer_response_line(line));
    }
    return out;
}

// ---------------------------------------------------------------------------
// HttpScorer
// ---------------------------------------------------------------------------

std::vector<Scorer::Response> HttpScorer::score(std::span<const Document> docs) {
    // Split "http://host:port/path".
    std::string rest = url_;
    const std::string scheme = "http://";
    if (rest.rfind(scheme, 0) != 0)
        throw DataError("scorer url must start with http://: " + url_);
    rest = rest.substr(scheme.size());
    const auto slash = rest.find('/');
    const std::string hostport = slash == std::string::npos ? rest : rest.substr(0, slash);
    const std::string path = slash == std::string::npos ? "/" : rest.substr(slash);

    std::string body;
    for (const auto& doc : docs) {
        body += scorer_request_line(doc);
        body += '\n';
    }

    httplib::Client client(("http://" + hostport).c_str());
    client.set_read_timeout(60, 0);
    auto res = client.Post(path.c_str(), body, "application/x-ndjson");
    if (!res)
        throw DataError("scorer http request failed: " + httplib::to_string(res.error()));
    if (res->status != 200)
        throw DataError("scorer http status " + std::to_string(res->status));

    std::vector<Response> out;
    std::istringstream in(res->body);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        out.push_back(parse_scorer_response_line(line));
    }
    return out;
}

std::vector<Scorer::Response> FunctionScorer::score(std::span<const Document> docs) {
    std::vector<Response> out;
    for (const auto& doc : docs) {
        if (auto scores = fn_(doc)) out.push_back({doc.id, *scores});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Batch application
// ---------------------------------------------------------------------------

ScorerApplyResult external_scorer_apply(std::span<const Document> docs, Scorer& scorer) {
    constexpr std::size_t kChunk = 256;
    ScorerApplyResult result;
    result.docs.assign(docs.begin(), docs.end());

    std::unordered_map<std::string, std::size_t> index;
    index.reserve(docs.size());
    for (std::size_t i = 0; i < docs.size(); ++i) index[docs[i].id] = i;

    std::vector<bool> annotated(docs.size(), false);
    for (std::size_t begin = 0; begin < docs.size(); begin += kChunk) {
        const std::size_t end = std::min(begin + kChunk, docs.size());
        std::vector<Scorer::Response> responses;
        try {
            responses = scorer.score(docs.subspan(begin, end - begin));
        } catch (const std::exception& e) {
            result.aborted = true;
            result.error = e.what();
            break;
        }
        for (const auto& r : responses) {
            const auto it = index.find(r.id);
            if (it == index.end()) continue; // response for an unknown id
            auto& doc = result.docs[it->second];
            doc.annotations["readability"] = r.scores.readability;
            doc.annotations["coherence"] = r.scores.coherence;
            doc.annotations["informativeness"] = r.scores.informativeness;
            doc.annotations["safety"] = r.scores.safety;
            doc.annotations["anonymity_degree"] = r.scores.anonymity_degree;
            doc.annotations["unattainable_references"] = r.scores.unattainable_references;
            annotated[it->second] = true;
        }
    }
    for (std::size_t i = 0; i < docs.size(); ++i) {
        if (annotated[i])
            ++result.annotated;
        else
            result.missing_ids.push_back(docs[i].id);
    }
    return result;
}

} // namespace cptkit
