#include "cptkit/corpus.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "cptkit/errors.hpp"
#include "cptkit/utf8.hpp"

namespace cptkit {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Domain / reason enums
// ---------------------------------------------------------------------------

std::string_view to_string(DomainClass d) {
    return d == DomainClass::General ? "general" : "financial";
}

DomainClass domain_class_from_string(std::string_view s) {
    if (s == "general") return DomainClass::General;
    if (s == "financial") return DomainClass::Financial;
    throw DataError("unknown domain class: " + std::string(s));
}

std::string_view to_string(FilterReason r) {
    switch (r) {
        case FilterReason::None: return "none";
        case FilterReason::TooShort: return "too_short";
        case FilterReason::TooLong: return "too_long";
        case FilterReason::AvgSentenceTooShort: return "avg_sentence_too_short";
        case FilterReason::AvgSentenceTooLong: return "avg_sentence_too_long";
        case FilterReason::TooManyNonAlnum: return "too_many_non_alnum";
        case FilterReason::LanguageNotAllowed: return "language_not_allowed";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------
// SourceRegistry
// ---------------------------------------------------------------------------

const SourceRegistry::Entry* SourceRegistry::find(std::string_view tag) const {
    for (const auto& e : entries) {
        if (e.tag == tag) return &e;
    }
    return nullptr;
}

void SourceRegistry::validate() const {
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        if (e.tag.empty()) throw DataError("source registry: empty tag");
        if (!(e.dedup_threshold > 0.0 && e.dedup_threshold <= 1.0))
            throw DataError("source registry: dedup_threshold out of (0,1] for " + e.tag);
        if (e.target_weight < 0.0)
            throw DataError("source registry: negative target_weight for " + e.tag);
        for (std::size_t j = i + 1; j < entries.size(); ++j) {
            if (entries[j].tag == e.tag)
                throw DataError("source registry: duplicate tag " + e.tag);
        }
    }
}

SourceRegistry SourceRegistry::with_default_thresholds(const std::vector<std::string>& tags) {
    SourceRegistry reg;
    for (const auto& tag : tags) {
        Entry e;
        e.tag = tag;
        e.domain = tag.rfind("financial", 0) == 0 ? DomainClass::Financial
                                                  : DomainClass::General;
        const bool examlike = tag.find("exam") != std::string::npos ||
                              tag.find("question") != std::string::npos ||
                              tag.find("qa") != std::string::npos;
        // Exam/QA material legitimately repeats question stems, so it gets a
        // stricter near-duplicate threshold.
        e.dedup_threshold = (e.domain == DomainClass::Financial && examlike) ? 0.9 : 0.8;
        reg.entries.push_back(std::move(e));
    }
    return reg;
}

void HeuristicRuleSet::validate() const {
    if (min_doc_chars > max_doc_chars)
        throw DataError("heuristics: min_doc_chars > max_doc_chars");
    if (min_avg_sentence_chars > max_avg_sentence_chars)
        throw DataError("heuristics: min_avg_sentence_chars > max_avg_sentence_chars");
    if (!(max_non_alnum_fraction >= 0.0 && max_non_alnum_fraction <= 1.0))
        throw DataError("heuristics: max_non_alnum_fraction outside [0,1]");
}

// ---------------------------------------------------------------------------
// RFC 3339 timestamps
// ---------------------------------------------------------------------------

namespace {

// Days since 1970-01-01 for a proleptic Gregorian date.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const auto yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const auto doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp < 10 ? mp + 3 : mp - 9;
    y += m <= 2;
}

bool parse_uint(std::string_view s, std::size_t& pos, int digits, int& out) {
    if (pos + digits > s.size()) return false;
    int v = 0;
    for (int i = 0; i < digits; ++i) {
        const char c = s[pos + i];
        if (c < '0' || c > '9') return false;
        v = v * 10 + (c - '0');
    }
    pos += digits;
    out = v;
    return true;
}

} // namespace

std::optional<std::int64_t> parse_rfc3339_ms(std::string_view s) {
    std::size_t pos = 0;
    int year, month, day, hour, minute, second;
    if (!parse_uint(s, pos, 4, year)) return std::nullopt;
    if (pos >= s.size() || s[pos] != '-') return std::nullopt;
    ++pos;
    if (!parse_uint(s, pos, 2, month)) return std::nullopt;
    if (pos >= s.size() || s[pos] != '-') return std::nullopt;
    ++pos;
    if (!parse_uint(s, pos, 2, day)) return std::nullopt;
    if (pos >= s.size() || (s[pos] != 'T' && s[pos] != 't' && s[pos] != ' ')) return std::nullopt;
    ++pos;
    if (!parse_uint(s, pos, 2, hour)) return std::nullopt;
    if (pos >= s.size() || s[pos] != ':') return std::nullopt;
    ++pos;
    if (!parse_uint(s, pos, 2, minute)) return std::nullopt;
    if (pos >= s.size() || s[pos] != ':') return std::nullopt;
    ++pos;
    if (!parse_uint(s, pos, 2, second)) return std::nullopt;
    if (month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 || minute > 59 ||
        second > 60)
        return std::nullopt;

    std::int64_t ms = 0;
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        std::int64_t frac = 0, scale = 100;
        std::size_t digits = 0;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
            if (digits < 3) frac += (s[pos] - '0') * scale, scale /= 10;
            ++digits;
            ++pos;
        }
        if (digits == 0) return std::nullopt;
        ms = frac;
    }

    std::int64_t offset_min = 0;
    if (pos >= s.size()) return std::nullopt;
    if (s[pos] == 'Z' || s[pos] == 'z') {
        ++pos;
    } else if (s[pos] == '+' || s[pos] == '-') {
        const int sign = s[pos] == '-' ? -1 : 1;
        ++pos;
        int oh, om;
        if (!parse_uint(s, pos, 2, oh)) return std::nullopt;
        if (pos >= s.size() || s[pos] != ':') return std::nullopt;
        ++pos;
        if (!parse_uint(s, pos, 2, om)) return std::nullopt;
        offset_min = sign * (oh * 60 + om);
    } else {
        return std::nullopt;
    }
    if (pos != s.size()) return std::nullopt;

    const std::int64_t days = days_from_civil(year, static_cast<unsigned>(month),
                                              static_cast<unsigned>(day));
    std::int64_t secs = days * 86400 + hour * 3600 + minute * 60 + second;
    secs -= offset_min * 60;
    return secs * 1000 + ms;
}

std::string format_rfc3339_ms(std::int64_t epoch_ms) {
    std::int64_t secs = epoch_ms / 1000;
    std::int64_t ms = epoch_ms % 1000;
    if (ms < 0) {
        ms += 1000;
        secs -= 1;
    }
    std::int64_t days = secs / 86400;
    std::int64_t rem = secs % 86400;
    if (rem < 0) {
        rem += 86400;
        days -= 1;
    }
    std::int64_t y;
    unsigned m, d;
    civil_from_days(days, y, m, d);
    const int hour = static_cast<int>(rem / 3600);
    const int minute = static_cast<int>((rem % 3600) / 60);
    const int second = static_cast<int>(rem % 60);
    char buf[40];
    if (ms != 0) {
        std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02uT%02d:%02d:%02d.%03lldZ",
                      static_cast<long long>(y), m, d, hour, minute, second,
                      static_cast<long long>(ms));
    } else {
        std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02uT%02d:%02d:%02dZ",
                      static_cast<long long>(y), m, d, hour, minute, second);
    }
    return buf;
}

// ---------------------------------------------------------------------------
// JSONL
// ---------------------------------------------------------------------------

std::string document_to_json_line(const Document& doc) {
    json j;
    j["id"] = doc.id;
    j["source"] = doc.source;
    j["text"] = doc.text;
    if (doc.url) j["url"] = *doc.url;
    if (doc.timestamp_ms) j["timestamp"] = format_rfc3339_ms(*doc.timestamp_ms);
    if (!doc.annotations.empty()) {
        json a = json::object();
        for (const auto& [k, v] : doc.annotations) a[k] = v;
        j["annotations"] = a;
    }
    return j.dump();
}

Document document_from_json_line(std::string_view line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw DataError(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw DataError("record is not a JSON object");

    Document doc;
    if (!j.contains("id") || !j["id"].is_string() || j["id"].get<std::string>().empty())
        throw DataError("missing or empty 'id'");
    doc.id = j["id"].get<std::string>();
    if (!j.contains("source") || !j["source"].is_string() ||
        j["source"].get<std::string>().empty())
        throw DataError("missing or empty 'source'");
    doc.source = j["source"].get<std::string>();
    if (!j.contains("text") || !j["text"].is_string())
        throw DataError("missing 'text'");
    doc.text = j["text"].get<std::string>();
    if (j.contains("url")) {
        if (!j["url"].is_string()) throw DataError("'url' is not a string");
        doc.url = j["url"].get<std::string>();
    }
    if (j.contains("timestamp")) {
        if (!j["timestamp"].is_string()) throw DataError("'timestamp' is not a string");
        auto ts = parse_rfc3339_ms(j["timestamp"].get<std::string>());
        if (!ts) throw DataError("'timestamp' is not RFC 3339");
        doc.timestamp_ms = *ts;
    }
    if (j.contains("annotations")) {
        if (!j["annotations"].is_object()) throw DataError("'annotations' is not an object");
        for (auto it = j["annotations"].begin(); it != j["annotations"].end(); ++it) {
            if (!it.value().is_number())
                throw DataError("annotation '" + it.key() + "' is not a number");
            doc.annotations[it.key()] = it.value().get<double>();
        }
    }
    return doc;
}

struct JsonlReader::Impl {
    std::ifstream in;
};

JsonlReader::JsonlReader(const std::string& path) : impl_(new Impl) {
    impl_->in.open(path, std::ios::binary);
    if (!impl_->in) throw DataError("cannot open " + path);
}

JsonlReader::~JsonlReader() = default;
JsonlReader::JsonlReader(JsonlReader&&) noexcept = default;
JsonlReader& JsonlReader::operator=(JsonlReader&&) noexcept = default;

std::optional<Document> JsonlReader::next() {
    std::string line;
    while (std::getline(impl_->in, line)) {
        ++line_no_;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        try {
            if (line.empty()) throw DataError("empty line");
            return document_from_json_line(line);
        } catch (const DataError& e) {
            errors_.push_back({line_no_, e.what()});
        }
    }
    return std::nullopt;
}

IngestResult read_jsonl(const std::string& path) {
    JsonlReader reader(path);
    IngestResult result;
    while (auto doc = reader.next()) result.docs.push_back(std::move(*doc));
    result.errors = reader.errors();
    return result;
}

void write_jsonl(const std::string& path, std::span<const Document> docs) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    for (const auto& doc : docs) out << document_to_json_line(doc) << '\n';
}

// ---------------------------------------------------------------------------
// Heuristic filter
// ---------------------------------------------------------------------------

namespace {

bool is_sentence_terminator(char32_t cp) {
    return cp == U'.' || cp == U'!' || cp == U'?' || cp == 0x3002 /* 。 */ ||
           cp == 0xFF01 /* ！ */ || cp == 0xFF1F /* ？ */;
}

} // namespace

SentenceStats sentence_stats(std::string_view text) {
    std::vector<char32_t> cps;
    cps.reserve(text.size());
    std::size_t pos = 0;
    while (pos < text.size()) cps.push_back(utf8::next(text, pos));

    SentenceStats stats;
    auto flush = [&](std::size_t begin, std::size_t end) { // [begin, end)
        while (begin < end && utf8::is_space(cps[begin])) ++begin;
        while (end > begin && utf8::is_space(cps[end - 1])) --end;
        if (end > begin) {
            ++stats.count;
            stats.total_chars += end - begin;
        }
    };

    std::size_t seg_start = 0;
    for (std::size_t i = 0; i < cps.size(); ++i) {
        if (is_sentence_terminator(cps[i]) &&
            (i + 1 == cps.size() || utf8::is_space(cps[i + 1]))) {
            flush(seg_start, i + 1);
            seg_start = i + 1;
        }
    }
    flush(seg_start, cps.size());
    return stats;
}

std::string script_class(std::string_view text) {
    std::size_t latin = 0, cjk = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const char32_t cp = utf8::next(text, pos);
        if ((cp >= U'A' && cp <= U'Z') || (cp >= U'a' && cp <= U'z'))
            ++latin;
        else if (utf8::is_cjk(cp))
            ++cjk;
    }
    if (latin == 0 && cjk == 0) return "other";
    return cjk > latin ? "cjk" : "latin";
}

FilterDecision heuristic_filter(const Document& doc, const HeuristicRuleSet& rules) {
    std::size_t chars = 0, non_alnum = 0;
    std::size_t pos = 0;
    while (pos < doc.text.size()) {
        const char32_t cp = utf8::next(doc.text, pos);
        ++chars;
        if (!utf8::is_alnum_like(cp) && !utf8::is_space(cp)) ++non_alnum;
    }

    if (chars < rules.min_doc_chars) return {false, FilterReason::TooShort};
    if (chars > rules.max_doc_chars) return {false, FilterReason::TooLong};

    const SentenceStats sent = sentence_stats(doc.text);
    const double avg = sent.avg();
    if (avg < rules.min_avg_sentence_chars)
        return {false, FilterReason::AvgSentenceTooShort};
    if (avg > rules.max_avg_sentence_chars)
        return {false, FilterReason::AvgSentenceTooLong};

    const double frac = chars == 0 ? 0.0 : double(non_alnum) / double(chars);
    if (frac > rules.max_non_alnum_fraction)
        return {false, FilterReason::TooManyNonAlnum};

    if (!rules.allowed_scripts.empty()) {
        const std::string cls = script_class(doc.text);
        if (std::find(rules.allowed_scripts.begin(), rules.allowed_scripts.end(), cls) ==
            rules.allowed_scripts.end())
            return {false, FilterReason::LanguageNotAllowed};
    }
    return {true, FilterReason::None};
}

// ---------------------------------------------------------------------------
// Stats
// ---------------------------------------------------------------------------

void CorpusStats::add(const Document& doc) {
    ++docs;
    total_chars += utf8::count_codepoints(doc.text);
    ++per_source[doc.source];
}

void CorpusStats::merge(const CorpusStats& other) {
    docs += other.docs;
    total_chars += other.total_chars;
    for (const auto& [k, v] : other.per_source) per_source[k] += v;
}

CorpusStats corpus_stats(std::span<const Document> docs) {
    CorpusStats stats;
    for (const auto& doc : docs) stats.add(doc);
    return stats;
}

} // namespace cptkit
