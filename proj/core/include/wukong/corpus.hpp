#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace wukong::corpus {

// One line of the image-text JSONL corpus. `raw` holds the original line so
// that kept-output serialization can preserve fields this struct does not
// model.
struct ImageTextRecord {
    std::string id;
    std::optional<std::string> url;
    std::string caption;
    std::int64_t width = 0;
    std::int64_t height = 0;
    std::optional<std::string> keyword;
    std::string raw;
};

struct FilterConfig {
    std::int64_t min_dim = 200;        // both sides must exceed this
    double max_aspect = 3.0;           // max(w,h)/min(w,h) must not exceed this
    std::size_t min_cjk_chars = 1;     // inclusive
    std::size_t max_cjk_chars = 32;    // exclusive
    std::size_t max_text_frequency = 10;  // captions seen more often are dropped
    std::size_t keyword_cap = 1000;    // kept pairs per source keyword
    std::string person_token = "〈人名〉";  // 〈人名〉

    // Throws std::invalid_argument on non-positive dimensions/caps or
    // max_aspect < 1.
    void validate() const;
};

enum class RejectStage {
    image_size,
    image_aspect,
    cjk_count,
    meaningless,
    frequency,
    sensitive,
    keyword_cap,
};

const char* to_string(RejectStage s);

// `stage` is empty for records that could not be parsed at all; those carry
// only a line-level reason.
struct RejectionLogEntry {
    std::string id;
    std::optional<RejectStage> stage;
    std::string reason;
};

// A word list loaded from a UTF-8 text file: one entry per line, blank lines
// and lines starting with '#' ignored. Used for both the sensitive-word list
// and the person-name lexicon.
struct Lexicon {
    std::vector<std::string> entries;

    static Lexicon load(const std::string& path);          // throws on IO/encoding errors
    static Lexicon parse(std::string_view text);           // same rules, from memory
};

struct Rejection {
    RejectStage stage;
    std::string reason;
};

// --- individual checks ------------------------------------------------------

std::size_t cjk_char_count(std::string_view caption);

// True for captions that carry no text signal: empty/whitespace-only, or
// consisting solely of digits, punctuation and whitespace (e.g. "000.jpg").
bool is_meaningless_caption(std::string_view caption);

// First sensitive word occurring in the caption (byte-substring match),
// scanning the lexicon in file order.
std::optional<std::string> find_sensitive(std::string_view caption, const Lexicon& sensitive);

// Replaces person names with `person_token`, leftmost match first and the
// longest lexicon entry at each position. The token never overlaps a name, so
// the result contains no lexicon entry.
std::string redact_names(std::string_view caption, const Lexicon& names, std::string_view person_token);

// Dimension and aspect-ratio checks; empty result means "keep".
std::optional<Rejection> image_filter(const ImageTextRecord& rec, const FilterConfig& cfg);

// Text-side checks minus the corpus-wide frequency rule: meaningless caption,
// CJK character count, sensitive words; survivors get names redacted.
struct TextFilterResult {
    std::optional<Rejection> rejection;
    std::string transformed;  // caption after redaction; empty when rejected
};
TextFilterResult text_filter(const ImageTextRecord& rec, const FilterConfig& cfg,
                             const Lexicon& sensitive, const Lexicon& names);

// --- caption frequency ------------------------------------------------------

// Exact caption occurrence counts keyed by NFC-normalized, trimmed text.
// Counting is a separate pass over the raw input so that shard merging is
// associative and order-independent.
class FrequencyTable {
public:
    static std::string normalize_caption(std::string_view caption);

    void add(std::string_view caption);
    void merge(const FrequencyTable& other);
    std::uint64_t count(std::string_view caption) const;
    std::size_t distinct() const { return counts_.size(); }

    bool operator==(const FrequencyTable&) const = default;

private:
    std::unordered_map<std::string, std::uint64_t> counts_;
};

// --- pipeline ---------------------------------------------------------------

struct ParsedLine {
    std::optional<ImageTextRecord> record;  // empty on parse failure
    std::string error;                      // filled on parse failure
};

// Parses one JSONL line; required fields: id, caption (strings), width,
// height (positive integers); optional: url, keyword (strings). Unknown
// fields are preserved via ImageTextRecord::raw.
ParsedLine parse_record(std::string_view line, std::size_t line_no);

// Serializes a record for the kept output: the original line with the caption
// replaced by `caption`, keys sorted, compact separators. Deterministic, so
// re-running the pipeline on its own output is byte-stable.
std::string serialize_kept(const ImageTextRecord& rec, std::string_view caption);

std::string serialize_rejection(const RejectionLogEntry& entry);

// Counts every parseable record in the stream (including ones that later fail
// image checks), matching the corpus-wide nature of the frequency rule.
FrequencyTable frequency_pass(std::istream& in);
FrequencyTable frequency_pass(const std::vector<std::string>& lines);

struct PipelineStats {
    std::uint64_t input = 0;   // total lines
    std::uint64_t kept = 0;
    std::uint64_t rejected = 0;  // includes parse failures
    std::uint64_t parse_errors = 0;
};

// Runs all filter stages over `in`, writing kept records to `kept` and one
// JSONL rejection entry per dropped line to `rejects`. Stage order:
// image_size, image_aspect, meaningless, cjk_count, frequency, sensitive,
// keyword_cap; the first failing stage wins. `freq` must come from
// frequency_pass over the same input.
PipelineStats run_pipeline(std::istream& in, std::ostream& kept, std::ostream& rejects,
                           const FilterConfig& cfg, const Lexicon& sensitive, const Lexicon& names,
                           const FrequencyTable& freq);

// --- corpus statistics ------------------------------------------------------

struct CorpusStats {
    std::uint64_t pair_count = 0;
    std::uint64_t unique_tokens = 0;
    double tokens_mean = 0.0;
    double tokens_std = 0.0;  // population standard deviation
    double tokens_median = 0.0;
};

// Aggregates per-caption token counts; callers supply counts produced by the
// tokenizer (already excluding sequence-control and padding tokens).
CorpusStats aggregate_stats(const std::vector<std::size_t>& tokens_per_caption,
                            std::uint64_t unique_tokens);

std::string stats_to_json(const CorpusStats& s);

// Published statistics of the full-scale hundred-million-pair dataset this
// pipeline models, kept for documentation and sanity checks; the desk-scale
// pipeline does not reproduce them.
inline constexpr std::uint64_t kReferencePairCount = 101'483'885;
inline constexpr std::uint64_t kReferenceUniqueTokens = 20'442;
inline constexpr double kReferenceTokensMean = 22.0;
inline constexpr double kReferenceTokensStd = 7.0;
inline constexpr double kReferenceTokensMedian = 24.0;

}  // namespace wukong::corpus
