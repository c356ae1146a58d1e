#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace wukong::tokenizer {

// Token ids are line numbers of the vocab file (0-based). The four control
// tokens must be present.
struct Vocab {
    std::vector<std::string> tokens;
    std::unordered_map<std::string, std::int32_t> index;
    std::int32_t cls_id = -1;
    std::int32_t sep_id = -1;
    std::int32_t unk_id = -1;
    std::int32_t pad_id = -1;

    static Vocab load(const std::string& path);
    static Vocab from_tokens(std::vector<std::string> tokens);  // same checks, from memory

    std::size_t size() const { return tokens.size(); }
    std::optional<std::int32_t> lookup(std::string_view token) const;
};

// Sequence sizes of the published full-scale configurations, for reference;
// desk-scale runs shrink them freely.
inline constexpr std::size_t kDefaultMaxLen = 32;
inline constexpr std::size_t kCharVocabSize = 21128;   // character-grained vocab
inline constexpr std::size_t kWordVocabSize = 65328;   // word-grained vocab

// Fixed-length encoded caption: [CLS] tokens... [SEP] [PAD]...
struct TokenSequence {
    std::vector<std::int32_t> ids;       // length max_len
    std::vector<std::uint8_t> mask;      // 1 for [CLS]..[SEP], 0 for padding
    std::size_t cls_pos = 0;
    std::size_t sep_pos = 0;

    std::size_t max_len() const { return ids.size(); }
    // Tokens between [CLS] and [SEP].
    std::size_t real_token_count() const { return sep_pos == 0 ? 0 : sep_pos - 1; }
};

// Inserts spaces so every CJK ideograph stands alone: "a蜂b" -> "a 蜂 b".
// Existing whitespace is preserved up to collapsing around insertions;
// idempotent.
std::string cjk_space(std::string_view text);

// Whitespace-splits `spaced` and greedily matches each word against the
// vocab, longest piece first, "##" prefix for continuations; a word with no
// full tokenization becomes a single [UNK]. `spaced` must already be
// CJK-spaced/lowercased as desired — this routine does byte-level matching
// only.
std::vector<std::int32_t> wordpiece_tokenize(std::string_view spaced, const Vocab& vocab);

enum class Granularity {
    character,  // CJK-space the text first (default)
    word,       // trust the caller's pre-segmentation; suits word-level vocabs
};

// Full caption pipeline: optional CJK spacing, punctuation isolation, ASCII
// lowercasing, accent stripping, WordPiece, then [CLS]/[SEP] framing with
// truncation to max_len - 2 real tokens and [PAD] fill. max_len must be >= 3.
TokenSequence encode(std::string_view text, const Vocab& vocab,
                     std::size_t max_len = kDefaultMaxLen,
                     Granularity granularity = Granularity::character);

// The normalization applied by encode() before WordPiece, exposed for tests
// and corpus statistics: returns the final space-separated word list.
std::vector<std::string> pretokenize(std::string_view text, Granularity granularity);

}  // namespace wukong::tokenizer
