#include "wukong/tokenizer.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "wukong/unicode.hpp"

namespace wukong::tokenizer {

namespace {

constexpr std::string_view kCls = "[CLS]";
constexpr std::string_view kSep = "[SEP]";
constexpr std::string_view kUnk = "[UNK]";
constexpr std::string_view kPad = "[PAD]";

}  // namespace

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
    Vocab v;
    v.tokens = std::move(tokens);
    v.index.reserve(v.tokens.size());
    for (std::size_t i = 0; i < v.tokens.size(); ++i) {
        const std::string& tok = v.tokens[i];
        if (tok.empty()) throw std::runtime_error("vocab: empty token at line " + std::to_string(i + 1));
        if (!uni::is_valid_utf8(tok))
            throw std::runtime_error("vocab: invalid UTF-8 at line " + std::to_string(i + 1));
        if (!v.index.emplace(tok, static_cast<std::int32_t>(i)).second)
            throw std::runtime_error("vocab: duplicate token '" + tok + "'");
    }
    auto find_special = [&](std::string_view name) {
        auto it = v.index.find(std::string(name));
        if (it == v.index.end())
            throw std::runtime_error("vocab: missing required token " + std::string(name));
        return it->second;
    };
    v.cls_id = find_special(kCls);
    v.sep_id = find_special(kSep);
    v.unk_id = find_special(kUnk);
    v.pad_id = find_special(kPad);
    return v;
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open vocab file: " + path);
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        tokens.push_back(line);
    }
    // A trailing newline yields one final empty entry; drop it.
    if (!tokens.empty() && tokens.back().empty()) tokens.pop_back();
    try {
        return from_tokens(std::move(tokens));
    } catch (const std::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

std::optional<std::int32_t> Vocab::lookup(std::string_view token) const {
    auto it = index.find(std::string(token));
    if (it == index.end()) return std::nullopt;
    return it->second;
}

std::string cjk_space(std::string_view text) {
    auto cps = uni::decode_utf8(text);
    std::string out;
    out.reserve(text.size() + cps.size());
    for (std::size_t i = 0; i < cps.size(); ++i) {
        if (i > 0) {
            const char32_t prev = cps[i - 1];
            const char32_t cur = cps[i];
            const bool boundary = uni::is_cjk(prev) || uni::is_cjk(cur);
            if (boundary && !uni::is_whitespace(prev) && !uni::is_whitespace(cur)) out += ' ';
        }
        uni::append_utf8(out, cps[i]);
    }
    return out;
}

std::vector<std::string> pretokenize(std::string_view text, Granularity granularity) {
    const std::string spaced =
        granularity == Granularity::character ? cjk_space(text) : std::string(text);

    std::vector<std::string> words;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            words.push_back(std::move(cur));
            cur.clear();
        }
    };
    for (char32_t cp : uni::decode_utf8(spaced)) {
        if (uni::is_whitespace(cp)) {
            flush();
        } else if (uni::is_punctuation(cp)) {
            // Punctuation stands alone, as in standard WordPiece preprocessing.
            flush();
            std::string p;
            uni::append_utf8(p, cp);
            words.push_back(std::move(p));
        } else {
            uni::append_utf8(cur, cp);
        }
    }
    flush();

    std::vector<std::string> out;
    out.reserve(words.size());
    for (const auto& w : words) {
        std::string norm = uni::strip_accents(uni::ascii_lower(w));
        if (!norm.empty()) out.push_back(std::move(norm));
    }
    return out;
}

namespace {

// Greedy longest-match-first decomposition of one word; empty result means
// "no full tokenization exists" and the caller emits [UNK].
std::vector<std::int32_t> greedy_pieces(const std::string& word, const Vocab& vocab) {
    const auto cps = uni::decode_utf8(word);
    std::vector<std::int32_t> pieces;
    std::size_t start = 0;
    while (start < cps.size()) {
        std::int32_t found = -1;
        std::size_t found_end = 0;
        for (std::size_t end = cps.size(); end > start; --end) {
            std::string sub = start > 0 ? "##" : "";
            for (std::size_t k = start; k < end; ++k) uni::append_utf8(sub, cps[k]);
            if (auto id = vocab.lookup(sub)) {
                found = *id;
                found_end = end;
                break;
            }
        }
        if (found < 0) return {};
        pieces.push_back(found);
        start = found_end;
    }
    return pieces;
}

}  // namespace

std::vector<std::int32_t> wordpiece_tokenize(std::string_view spaced, const Vocab& vocab) {
    std::vector<std::int32_t> ids;
    std::string cur;
    auto take = [&] {
        if (cur.empty()) return;
        auto pieces = greedy_pieces(cur, vocab);
        if (pieces.empty())
            ids.push_back(vocab.unk_id);
        else
            ids.insert(ids.end(), pieces.begin(), pieces.end());
        cur.clear();
    };
    for (char32_t cp : uni::decode_utf8(spaced)) {
        if (uni::is_whitespace(cp)) {
            take();
        } else {
            uni::append_utf8(cur, cp);
        }
    }
    take();
    return ids;
}

TokenSequence encode(std::string_view text, const Vocab& vocab, std::size_t max_len,
                     Granularity granularity) {
    if (max_len < 3) throw std::invalid_argument("encode: max_len must be at least 3");

    std::string joined;
    for (const auto& w : pretokenize(text, granularity)) {
        if (!joined.empty()) joined += ' ';
        joined += w;
    }
    std::vector<std::int32_t> pieces = wordpiece_tokenize(joined, vocab);
    if (pieces.size() > max_len - 2) pieces.resize(max_len - 2);

    TokenSequence seq;
    seq.ids.assign(max_len, vocab.pad_id);
    seq.mask.assign(max_len, 0);
    seq.cls_pos = 0;
    seq.ids[0] = vocab.cls_id;
    for (std::size_t i = 0; i < pieces.size(); ++i) seq.ids[i + 1] = pieces[i];
    seq.sep_pos = pieces.size() + 1;
    seq.ids[seq.sep_pos] = vocab.sep_id;
    for (std::size_t i = 0; i <= seq.sep_pos; ++i) seq.mask[i] = 1;
    return seq;
}

}  // namespace wukong::tokenizer
