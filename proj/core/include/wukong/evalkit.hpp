#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "wukong/align.hpp"
#include "wukong/embedding.hpp"
#include "wukong/matrix.hpp"
#include "wukong/model.hpp"
#include "wukong/tokenizer.hpp"

namespace wukong::evalkit {

using wukong::EmbeddingSet;
using wukong::Mat;

inline const std::vector<std::size_t> kDefaultKs = {1, 5, 10};

// --- prompt ensembling --------------------------------------------------------

struct PromptSet {
    std::vector<std::string> templates;  // each contains exactly one "{}"

    static PromptSet load(const std::string& path);  // one template per line
    static PromptSet parse(std::istream& in);
    void validate() const;  // throws std::invalid_argument
    std::string fill(std::size_t i, const std::string& class_name) const;
};

// One row per class: encode every filled template to its unit-norm global
// text feature, average over the (deduplicated) prompt set, re-normalize.
Mat<float> class_embeddings(const std::vector<std::string>& class_names, const PromptSet& prompts,
                            const model::ModelParams<float>& params,
                            const tokenizer::Vocab& vocab);

// Top-1 accuracy in percent. Rows of image_embeds and class_matrix must be
// unit-norm; prediction is the argmax inner product with ties resolved toward
// the lower class index. Throws std::invalid_argument on shape mismatch or
// out-of-range labels.
double zero_shot_classify(const Mat<float>& image_embeds, const Mat<float>& class_matrix,
                          const std::vector<std::size_t>& labels);

// --- retrieval ------------------------------------------------------------------

// Positive candidate rows per query row for one retrieval direction.
struct DirectionGt {
    std::vector<std::vector<std::uint32_t>> positives;
};

// JSONL {"query_id": row, "positives": [rows...]}; lines for the same query
// merge. Every query row in [0, n_queries) must end up with at least one
// positive.
DirectionGt parse_direction_gt(std::istream& in, std::size_t n_queries,
                               std::size_t n_candidates);
DirectionGt load_direction_gt(const std::string& path, std::size_t n_queries,
                              std::size_t n_candidates);

struct RetrievalGroundTruth {
    std::optional<DirectionGt> i2t;  // image query -> text rows
    std::optional<DirectionGt> t2i;  // text query -> image rows

    // Throws std::invalid_argument when no direction is present, a query has
    // no positives, or both directions exist but disagree as inverses.
    void validate(std::size_t n_images, std::size_t n_texts) const;

    static RetrievalGroundTruth identity(std::size_t n);  // row i <-> row i, both ways
};

struct RetrievalReport {
    std::vector<std::size_t> ks;
    std::vector<double> i2t;  // percentages parallel to ks; empty when absent
    std::vector<double> t2i;
    double mean_recall = 0.0;  // arithmetic mean of every reported recall
};

// Ranks candidates per query from precomputed directed score matrices
// (s_image: n_img x n_txt, s_text: n_txt x n_img); ties rank the lower
// candidate index first. A query scores at K when any positive lands in the
// top K.
RetrievalReport retrieval_from_scores(const Mat<float>& s_image, const Mat<float>& s_text,
                                      const RetrievalGroundTruth& gt,
                                      const std::vector<std::size_t>& ks = kDefaultKs);

// Global-feature path: rows are unit-norm embeddings, scores are inner
// products.
RetrievalReport retrieval_eval(const Mat<float>& img_embeds, const Mat<float>& txt_embeds,
                               const RetrievalGroundTruth& gt,
                               const std::vector<std::size_t>& ks = kDefaultKs);

// Token-level path: projected embedding sets scored in the given similarity
// mode (image queries rank by the image-side score, text queries by the
// text-side score).
RetrievalReport retrieval_eval(const std::vector<EmbeddingSet<float>>& img,
                               const std::vector<EmbeddingSet<float>>& txt,
                               const RetrievalGroundTruth& gt, align::SimilarityMode mode,
                               const std::vector<std::size_t>& ks = kDefaultKs);

// --- report helpers -------------------------------------------------------------

// Arithmetic mean of per-dataset percentages; throws std::invalid_argument on
// an empty list.
double report_average(const std::vector<double>& scores);

// Fixed-point decimal rendering ("58.5", "43.72") for stable report output.
std::string format_fixed(double value, int decimals);

}  // namespace wukong::evalkit
