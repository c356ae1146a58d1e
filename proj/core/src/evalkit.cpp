#include "wukong/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

namespace wukong::evalkit {

// --- prompt ensembling --------------------------------------------------------

PromptSet PromptSet::parse(std::istream& in) {
    PromptSet out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        out.templates.push_back(line);
    }
    out.validate();
    return out;
}

PromptSet PromptSet::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("prompts: cannot open: " + path);
    return parse(in);
}

void PromptSet::validate() const {
    if (templates.empty()) throw std::invalid_argument("prompts: empty set");
    for (const auto& t : templates) {
        std::size_t count = 0;
        for (std::size_t pos = t.find("{}"); pos != std::string::npos;
             pos = t.find("{}", pos + 2))
            ++count;
        if (count != 1)
            throw std::invalid_argument("prompts: template must contain exactly one {}: " + t);
    }
}

std::string PromptSet::fill(std::size_t i, const std::string& class_name) const {
    std::string t = templates.at(i);
    return t.replace(t.find("{}"), 2, class_name);
}

Mat<float> class_embeddings(const std::vector<std::string>& class_names, const PromptSet& prompts,
                            const model::ModelParams<float>& params,
                            const tokenizer::Vocab& vocab) {
    prompts.validate();
    if (class_names.empty()) throw std::invalid_argument("class_embeddings: no classes");

    // The ensemble is over the *set* of prompts: duplicate templates count once.
    std::vector<std::size_t> unique;
    {
        std::unordered_set<std::string> seen;
        for (std::size_t i = 0; i < prompts.templates.size(); ++i)
            if (seen.insert(prompts.templates[i]).second) unique.push_back(i);
    }

    const std::size_t d = params.cfg.embed_dim;
    Mat<float> out(class_names.size(), d);
    std::vector<double> mean(d);
    for (std::size_t c = 0; c < class_names.size(); ++c) {
        std::fill(mean.begin(), mean.end(), 0.0);
        for (const std::size_t i : unique) {
            const std::string caption = prompts.fill(i, class_names[c]);
            const auto seq = tokenizer::encode(caption, vocab, params.cfg.text.max_len);
            const Mat<float> feat = params.global_text_feature(seq);
            for (std::size_t j = 0; j < d; ++j) mean[j] += static_cast<double>(feat[0][j]);
        }
        double sq = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            mean[j] /= static_cast<double>(unique.size());
            sq += mean[j] * mean[j];
        }
        const double norm = std::sqrt(sq);
        if (!(norm > 0.0))
            throw std::domain_error("class_embeddings: prompt embeddings cancel for class " +
                                    class_names[c]);
        for (std::size_t j = 0; j < d; ++j) out[c][j] = static_cast<float>(mean[j] / norm);
    }
    return out;
}

double zero_shot_classify(const Mat<float>& image_embeds, const Mat<float>& class_matrix,
                          const std::vector<std::size_t>& labels) {
    if (image_embeds.rows() == 0) throw std::invalid_argument("zero_shot: no images");
    if (image_embeds.cols() != class_matrix.cols() || class_matrix.rows() == 0)
        throw std::invalid_argument("zero_shot: embedding width mismatch");
    if (labels.size() != image_embeds.rows())
        throw std::invalid_argument("zero_shot: one label per image required");
    for (const auto l : labels)
        if (l >= class_matrix.rows()) throw std::invalid_argument("zero_shot: label out of range");

    std::size_t correct = 0;
    for (std::size_t i = 0; i < image_embeds.rows(); ++i) {
        std::size_t best = 0;
        float best_score = dot(image_embeds[i], class_matrix[0], image_embeds.cols());
        for (std::size_t c = 1; c < class_matrix.rows(); ++c) {
            const float s = dot(image_embeds[i], class_matrix[c], image_embeds.cols());
            if (s > best_score) {
                best_score = s;
                best = c;
            }
        }
        correct += (best == labels[i]);
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(image_embeds.rows());
}

// --- retrieval ------------------------------------------------------------------

DirectionGt parse_direction_gt(std::istream& in, std::size_t n_queries,
                               std::size_t n_candidates) {
    DirectionGt out;
    out.positives.assign(n_queries, {});
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        const std::string where = "ground truth: line " + std::to_string(line_no);
        if (j.is_discarded()) throw std::invalid_argument(where + ": invalid JSON");
        if (!j.is_object() || !j.contains("query_id") ||
            !j["query_id"].is_number_unsigned() || !j.contains("positives") ||
            !j["positives"].is_array())
            throw std::invalid_argument(where + ": expected {query_id, positives: [...]}");
        const std::uint64_t q = j["query_id"].get<std::uint64_t>();
        if (q >= n_queries) throw std::invalid_argument(where + ": query_id out of range");
        for (const auto& p : j["positives"]) {
            if (!p.is_number_unsigned())
                throw std::invalid_argument(where + ": positives must be row indices");
            const std::uint64_t c = p.get<std::uint64_t>();
            if (c >= n_candidates)
                throw std::invalid_argument(where + ": positive index out of range");
            out.positives[q].push_back(static_cast<std::uint32_t>(c));
        }
    }
    for (auto& v : out.positives) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    }
    return out;
}

DirectionGt load_direction_gt(const std::string& path, std::size_t n_queries,
                              std::size_t n_candidates) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("ground truth: cannot open: " + path);
    return parse_direction_gt(in, n_queries, n_candidates);
}

void RetrievalGroundTruth::validate(std::size_t n_images, std::size_t n_texts) const {
    if (!i2t && !t2i)
        throw std::invalid_argument("ground truth: at least one direction required");
    const auto check = [](const DirectionGt& d, std::size_t n_queries, std::size_t n_candidates,
                          const char* name) {
        if (d.positives.size() != n_queries)
            throw std::invalid_argument(std::string("ground truth: ") + name +
                                        " query count mismatch");
        for (std::size_t q = 0; q < d.positives.size(); ++q) {
            if (d.positives[q].empty())
                throw std::invalid_argument(std::string("ground truth: ") + name + " query " +
                                            std::to_string(q) + " has empty ground truth");
            for (const auto c : d.positives[q])
                if (c >= n_candidates)
                    throw std::invalid_argument(std::string("ground truth: ") + name +
                                                " positive out of range");
        }
    };
    if (i2t) check(*i2t, n_images, n_texts, "i2t");
    if (t2i) check(*t2i, n_texts, n_images, "t2i");
    if (i2t && t2i) {
        DirectionGt inverse;
        inverse.positives.assign(n_texts, {});
        for (std::size_t q = 0; q < n_images; ++q)
            for (const auto c : i2t->positives[q])
                inverse.positives[c].push_back(static_cast<std::uint32_t>(q));
        for (auto& v : inverse.positives) std::sort(v.begin(), v.end());
        if (inverse.positives != t2i->positives)
            throw std::invalid_argument("ground truth: directions are not mutual inverses");
    }
}

RetrievalGroundTruth RetrievalGroundTruth::identity(std::size_t n) {
    DirectionGt d;
    d.positives.resize(n);
    for (std::size_t i = 0; i < n; ++i) d.positives[i] = {static_cast<std::uint32_t>(i)};
    RetrievalGroundTruth gt;
    gt.i2t = d;
    gt.t2i = std::move(d);
    return gt;
}

namespace {

std::vector<double> direction_recalls(const Mat<float>& scores, const DirectionGt& gt,
                                      const std::vector<std::size_t>& ks) {
    std::vector<std::size_t> hits(ks.size(), 0);
    for (std::size_t q = 0; q < scores.rows(); ++q) {
        std::size_t best_rank = scores.cols();
        for (const auto p : gt.positives[q]) {
            const float sp = scores[q][p];
            std::size_t rank = 0;
            for (std::size_t j = 0; j < scores.cols(); ++j) {
                if (j == p) continue;
                rank += (scores[q][j] > sp || (scores[q][j] == sp && j < p));
            }
            best_rank = std::min(best_rank, rank);
        }
        for (std::size_t ki = 0; ki < ks.size(); ++ki) hits[ki] += (best_rank < ks[ki]);
    }
    std::vector<double> out(ks.size());
    for (std::size_t ki = 0; ki < ks.size(); ++ki)
        out[ki] = 100.0 * static_cast<double>(hits[ki]) / static_cast<double>(scores.rows());
    return out;
}

}  // namespace

RetrievalReport retrieval_from_scores(const Mat<float>& s_image, const Mat<float>& s_text,
                                      const RetrievalGroundTruth& gt,
                                      const std::vector<std::size_t>& ks) {
    if (ks.empty()) throw std::invalid_argument("retrieval: no K values");
    const std::size_t n_images = s_image.rows();
    const std::size_t n_texts = s_text.rows();
    if (n_images == 0 || n_texts == 0)
        throw std::invalid_argument("retrieval: empty candidate or query set");
    if (s_image.cols() != n_texts || s_text.cols() != n_images)
        throw std::invalid_argument("retrieval: score matrices are not transposable shapes");
    gt.validate(n_images, n_texts);

    RetrievalReport report;
    report.ks = ks;
    if (gt.i2t) report.i2t = direction_recalls(s_image, *gt.i2t, ks);
    if (gt.t2i) report.t2i = direction_recalls(s_text, *gt.t2i, ks);
    std::vector<double> all;
    all.insert(all.end(), report.i2t.begin(), report.i2t.end());
    all.insert(all.end(), report.t2i.begin(), report.t2i.end());
    report.mean_recall = report_average(all);
    return report;
}

RetrievalReport retrieval_eval(const Mat<float>& img_embeds, const Mat<float>& txt_embeds,
                               const RetrievalGroundTruth& gt,
                               const std::vector<std::size_t>& ks) {
    if (img_embeds.cols() != txt_embeds.cols())
        throw std::invalid_argument("retrieval: embedding width mismatch");
    Mat<float> s_image(img_embeds.rows(), txt_embeds.rows());
    Mat<float> s_text(txt_embeds.rows(), img_embeds.rows());
    for (std::size_t i = 0; i < img_embeds.rows(); ++i)
        for (std::size_t j = 0; j < txt_embeds.rows(); ++j) {
            const float s = dot(img_embeds[i], txt_embeds[j], img_embeds.cols());
            s_image[i][j] = s;
            s_text[j][i] = s;
        }
    return retrieval_from_scores(s_image, s_text, gt, ks);
}

RetrievalReport retrieval_eval(const std::vector<EmbeddingSet<float>>& img,
                               const std::vector<EmbeddingSet<float>>& txt,
                               const RetrievalGroundTruth& gt, align::SimilarityMode mode,
                               const std::vector<std::size_t>& ks) {
    const auto sims = model::batch_similarities(img, txt, mode);
    return retrieval_from_scores(sims.s_image, sims.s_text, gt, ks);
}

// --- report helpers -------------------------------------------------------------

double report_average(const std::vector<double>& scores) {
    if (scores.empty()) throw std::invalid_argument("report_average: empty list");
    double sum = 0.0;
    for (const double s : scores) sum += s;
    return sum / static_cast<double>(scores.size());
}

std::string format_fixed(double value, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
    return buf;
}

}  // namespace wukong::evalkit
