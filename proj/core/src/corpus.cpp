#include "wukong/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "wukong/unicode.hpp"

namespace wukong::corpus {

using nlohmann::json;

namespace {

std::string format_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

// Filename-like captions: a bare stem of word characters plus an image file
// extension ("000.jpg", "IMG_1234.PNG"). Such strings describe the file, not
// the image.
bool looks_like_image_filename(std::string_view s) {
    auto dot = s.rfind('.');
    if (dot == std::string_view::npos || dot == 0) return false;
    std::string ext = uni::ascii_lower(s.substr(dot + 1));
    static const char* kExts[] = {"jpg", "jpeg", "png", "gif", "bmp", "webp"};
    if (std::none_of(std::begin(kExts), std::end(kExts),
                     [&](const char* e) { return ext == e; }))
        return false;
    std::string_view stem = s.substr(0, dot);
    return std::all_of(stem.begin(), stem.end(), [](char c) {
        return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
               c == '_' || c == '-';
    });
}

}  // namespace

void FilterConfig::validate() const {
    if (min_dim <= 0) throw std::invalid_argument("min_dim must be positive");
    if (max_aspect < 1.0) throw std::invalid_argument("max_aspect must be at least 1");
    if (min_cjk_chars == 0) throw std::invalid_argument("min_cjk_chars must be positive");
    if (max_cjk_chars <= min_cjk_chars)
        throw std::invalid_argument("max_cjk_chars must exceed min_cjk_chars");
    if (max_text_frequency == 0) throw std::invalid_argument("max_text_frequency must be positive");
    if (keyword_cap == 0) throw std::invalid_argument("keyword_cap must be positive");
    if (person_token.empty()) throw std::invalid_argument("person_token must be non-empty");
}

const char* to_string(RejectStage s) {
    switch (s) {
        case RejectStage::image_size: return "image_size";
        case RejectStage::image_aspect: return "image_aspect";
        case RejectStage::cjk_count: return "cjk_count";
        case RejectStage::meaningless: return "meaningless";
        case RejectStage::frequency: return "frequency";
        case RejectStage::sensitive: return "sensitive";
        case RejectStage::keyword_cap: return "keyword_cap";
    }
    return "unknown";
}

Lexicon Lexicon::parse(std::string_view text) {
    if (!uni::is_valid_utf8(text)) throw std::runtime_error("lexicon is not valid UTF-8");
    Lexicon lex;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? nl : nl - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        std::string_view entry = uni::trim(line);
        if (!entry.empty() && entry.front() != '#') lex.entries.emplace_back(entry);
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    return lex;
}

Lexicon Lexicon::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open lexicon file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse(buf.str());
    } catch (const std::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

std::size_t cjk_char_count(std::string_view caption) {
    std::size_t n = 0;
    for (char32_t cp : uni::decode_utf8(caption))
        if (uni::is_cjk(cp)) ++n;
    return n;
}

bool is_meaningless_caption(std::string_view caption) {
    std::string_view t = uni::trim(caption);
    if (t.empty()) return true;
    if (looks_like_image_filename(t)) return true;
    auto cps = uni::decode_utf8(t);
    return std::all_of(cps.begin(), cps.end(), [](char32_t cp) {
        return uni::is_digit(cp) || uni::is_punctuation(cp) || uni::is_whitespace(cp);
    });
}

std::optional<std::string> find_sensitive(std::string_view caption, const Lexicon& sensitive) {
    for (const auto& w : sensitive.entries) {
        if (!w.empty() && caption.find(w) != std::string_view::npos) return w;
    }
    return std::nullopt;
}

std::string redact_names(std::string_view caption, const Lexicon& names,
                         std::string_view person_token) {
    if (names.entries.empty()) return std::string(caption);
    // Longest entry first at each position gives maximal matches.
    std::vector<std::string_view> sorted(names.entries.begin(), names.entries.end());
    std::sort(sorted.begin(), sorted.end(),
              [](std::string_view a, std::string_view b) { return a.size() > b.size(); });
    std::string out;
    out.reserve(caption.size());
    std::size_t i = 0;
    while (i < caption.size()) {
        std::string_view rest = caption.substr(i);
        const std::string_view* hit = nullptr;
        for (const auto& name : sorted) {
            if (!name.empty() && rest.substr(0, name.size()) == name) {
                hit = &name;
                break;
            }
        }
        if (hit) {
            out += person_token;
            i += hit->size();
        } else {
            out += caption[i];
            ++i;
        }
    }
    return out;
}

std::optional<Rejection> image_filter(const ImageTextRecord& rec, const FilterConfig& cfg) {
    if (rec.width <= cfg.min_dim || rec.height <= cfg.min_dim) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "width=%lld height=%lld min_dim=%lld",
                      static_cast<long long>(rec.width), static_cast<long long>(rec.height),
                      static_cast<long long>(cfg.min_dim));
        return Rejection{RejectStage::image_size, buf};
    }
    const double lo = static_cast<double>(std::min(rec.width, rec.height));
    const double hi = static_cast<double>(std::max(rec.width, rec.height));
    const double aspect = hi / lo;
    if (aspect > cfg.max_aspect) {
        return Rejection{RejectStage::image_aspect,
                         "aspect=" + format_double(aspect) + " max_aspect=" + format_double(cfg.max_aspect)};
    }
    return std::nullopt;
}

namespace {

// The meaningless rule runs before the CJK count so that captions like
// "000.jpg" are reported for what they are rather than for their incidental
// lack of ideographs.
std::optional<Rejection> caption_shape_check(std::string_view caption, const FilterConfig& cfg) {
    if (is_meaningless_caption(caption))
        return Rejection{RejectStage::meaningless, "caption is empty, filename-like, or digits/punctuation only"};
    const std::size_t n = cjk_char_count(caption);
    if (n < cfg.min_cjk_chars || n >= cfg.max_cjk_chars) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "cjk_chars=%zu allowed=[%zu,%zu)", n, cfg.min_cjk_chars,
                      cfg.max_cjk_chars);
        return Rejection{RejectStage::cjk_count, buf};
    }
    return std::nullopt;
}

std::optional<Rejection> sensitive_check(std::string_view caption, const Lexicon& sensitive) {
    if (auto word = find_sensitive(caption, sensitive))
        return Rejection{RejectStage::sensitive, "sensitive_word=" + *word};
    return std::nullopt;
}

}  // namespace

TextFilterResult text_filter(const ImageTextRecord& rec, const FilterConfig& cfg,
                             const Lexicon& sensitive, const Lexicon& names) {
    if (auto r = caption_shape_check(rec.caption, cfg)) return {r, {}};
    if (auto r = sensitive_check(rec.caption, sensitive)) return {r, {}};
    return {std::nullopt, redact_names(rec.caption, names, cfg.person_token)};
}

std::string FrequencyTable::normalize_caption(std::string_view caption) {
    return uni::nfc(uni::trim(caption));
}

void FrequencyTable::add(std::string_view caption) { ++counts_[normalize_caption(caption)]; }

void FrequencyTable::merge(const FrequencyTable& other) {
    for (const auto& [k, v] : other.counts_) counts_[k] += v;
}

std::uint64_t FrequencyTable::count(std::string_view caption) const {
    auto it = counts_.find(normalize_caption(caption));
    return it == counts_.end() ? 0 : it->second;
}

ParsedLine parse_record(std::string_view line, std::size_t line_no) {
    auto fail = [line_no](const std::string& msg) {
        ParsedLine p;
        p.error = "line " + std::to_string(line_no) + ": " + msg;
        return p;
    };
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) return fail("invalid JSON");
    if (!j.is_object()) return fail("record is not a JSON object");

    ImageTextRecord rec;
    rec.raw = line;
    if (!j.contains("id") || !j["id"].is_string() || j["id"].get<std::string>().empty())
        return fail("missing or empty string field 'id'");
    rec.id = j["id"].get<std::string>();
    if (!j.contains("caption") || !j["caption"].is_string())
        return fail("missing string field 'caption'");
    rec.caption = j["caption"].get<std::string>();
    for (const char* dim : {"width", "height"}) {
        if (!j.contains(dim) || !j[dim].is_number_integer())
            return fail(std::string("missing integer field '") + dim + "'");
        auto v = j[dim].get<std::int64_t>();
        if (v < 1) return fail(std::string("field '") + dim + "' must be at least 1");
        (dim[0] == 'w' ? rec.width : rec.height) = v;
    }
    if (j.contains("url") && j["url"].is_string()) rec.url = j["url"].get<std::string>();
    if (j.contains("keyword") && j["keyword"].is_string())
        rec.keyword = j["keyword"].get<std::string>();

    ParsedLine p;
    p.record = std::move(rec);
    return p;
}

std::string serialize_kept(const ImageTextRecord& rec, std::string_view caption) {
    json j = json::parse(rec.raw);
    j["caption"] = std::string(caption);
    return j.dump();
}

std::string serialize_rejection(const RejectionLogEntry& entry) {
    json j;
    j["id"] = entry.id;
    if (entry.stage) j["stage"] = to_string(*entry.stage);
    j["reason"] = entry.reason;
    return j.dump();
}

FrequencyTable frequency_pass(std::istream& in) {
    FrequencyTable t;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (uni::trim(line).empty()) continue;
        auto p = parse_record(line, line_no);
        if (p.record) t.add(p.record->caption);
    }
    return t;
}

FrequencyTable frequency_pass(const std::vector<std::string>& lines) {
    FrequencyTable t;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (uni::trim(lines[i]).empty()) continue;
        auto p = parse_record(lines[i], i + 1);
        if (p.record) t.add(p.record->caption);
    }
    return t;
}

PipelineStats run_pipeline(std::istream& in, std::ostream& kept, std::ostream& rejects,
                           const FilterConfig& cfg, const Lexicon& sensitive, const Lexicon& names,
                           const FrequencyTable& freq) {
    cfg.validate();
    PipelineStats stats;
    std::unordered_map<std::string, std::size_t> kept_per_keyword;
    std::string line;
    std::size_t line_no = 0;

    auto reject = [&](const std::string& id, std::optional<RejectStage> stage,
                      const std::string& reason) {
        rejects << serialize_rejection({id, stage, reason}) << '\n';
        ++stats.rejected;
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (uni::trim(line).empty()) continue;
        ++stats.input;
        auto parsed = parse_record(line, line_no);
        if (!parsed.record) {
            reject("", std::nullopt, parsed.error);
            ++stats.parse_errors;
            continue;
        }
        const ImageTextRecord& rec = *parsed.record;

        if (auto r = image_filter(rec, cfg)) {
            reject(rec.id, r->stage, r->reason);
            continue;
        }
        if (auto r = caption_shape_check(rec.caption, cfg)) {
            reject(rec.id, r->stage, r->reason);
            continue;
        }
        const auto count = freq.count(rec.caption);
        if (count > cfg.max_text_frequency) {
            char buf[96];
            std::snprintf(buf, sizeof buf, "caption_count=%llu max_text_frequency=%zu",
                          static_cast<unsigned long long>(count), cfg.max_text_frequency);
            reject(rec.id, RejectStage::frequency, buf);
            continue;
        }
        if (auto r = sensitive_check(rec.caption, sensitive)) {
            reject(rec.id, r->stage, r->reason);
            continue;
        }
        if (rec.keyword) {
            auto& used = kept_per_keyword[*rec.keyword];
            if (used >= cfg.keyword_cap) {
                char buf[160];
                std::snprintf(buf, sizeof buf, "keyword=%s keyword_cap=%zu", rec.keyword->c_str(),
                              cfg.keyword_cap);
                reject(rec.id, RejectStage::keyword_cap, buf);
                continue;
            }
            ++used;
        }
        kept << serialize_kept(rec, redact_names(rec.caption, names, cfg.person_token)) << '\n';
        ++stats.kept;
    }
    return stats;
}

CorpusStats aggregate_stats(const std::vector<std::size_t>& tokens_per_caption,
                            std::uint64_t unique_tokens) {
    CorpusStats s;
    s.pair_count = tokens_per_caption.size();
    s.unique_tokens = unique_tokens;
    if (tokens_per_caption.empty()) return s;

    const double n = static_cast<double>(tokens_per_caption.size());
    double sum = 0.0;
    for (auto c : tokens_per_caption) sum += static_cast<double>(c);
    s.tokens_mean = sum / n;

    double sq = 0.0;
    for (auto c : tokens_per_caption) {
        const double d = static_cast<double>(c) - s.tokens_mean;
        sq += d * d;
    }
    s.tokens_std = std::sqrt(sq / n);

    std::vector<std::size_t> sorted = tokens_per_caption;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = sorted.size();
    s.tokens_median = (m % 2 == 1)
                          ? static_cast<double>(sorted[m / 2])
                          : (static_cast<double>(sorted[m / 2 - 1]) + static_cast<double>(sorted[m / 2])) / 2.0;
    return s;
}

std::string stats_to_json(const CorpusStats& s) {
    json j;
    j["pair_count"] = s.pair_count;
    j["unique_tokens"] = s.unique_tokens;
    j["tokens_per_caption"] = {{"mean", s.tokens_mean}, {"std", s.tokens_std}, {"median", s.tokens_median}};
    return j.dump();
}

}  // namespace wukong::corpus
