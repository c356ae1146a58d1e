// wukong: corpus filtering, tokenization, contrastive tuning and evaluation
// as deterministic, scriptable subcommands. Machine-readable results go to
// stdout; logs and the resolved configuration echo go to stderr.

#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wukong/align.hpp"
#include "wukong/corpus.hpp"
#include "wukong/embedding.hpp"
#include "wukong/evalkit.hpp"
#include "wukong/loss.hpp"
#include "wukong/model.hpp"
#include "wukong/tokenizer.hpp"
#include "wukong/train.hpp"

namespace {

using nlohmann::json;
namespace align = wukong::align;
namespace corpus = wukong::corpus;
namespace evalkit = wukong::evalkit;
namespace model = wukong::model;
namespace tokenizer = wukong::tokenizer;
namespace train = wukong::train;
using wukong::EmbeddingKind;
using wukong::EmbeddingSet;
using wukong::Mat;
using wukong::WkebFile;

// Exit codes: 0 success, 1 environment/IO failure, 2 data error.
int run_guarded(const std::function<int()>& fn) {
    try {
        return fn();
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

tokenizer::Granularity granularity_from_string(const std::string& s) {
    if (s == "character") return tokenizer::Granularity::character;
    if (s == "word") return tokenizer::Granularity::word;
    throw std::invalid_argument("unknown granularity: " + s);
}

std::vector<std::string> read_nonblank_lines(const std::string& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(std::string(what) + ": cannot open: " + path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        out.push_back(line);
    }
    return out;
}

std::vector<std::size_t> read_labels(const std::string& path) {
    const auto lines = read_nonblank_lines(path, "labels");
    std::vector<std::size_t> out;
    out.reserve(lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i) {
        try {
            std::size_t pos = 0;
            const unsigned long v = std::stoul(lines[i], &pos);
            if (pos != lines[i].size()) throw std::invalid_argument("trailing characters");
            out.push_back(v);
        } catch (const std::exception&) {
            throw std::invalid_argument("labels: line " + std::to_string(i + 1) +
                                        ": expected a non-negative integer");
        }
    }
    return out;
}

// Sequence-level rows of every item, L2-normalized.
Mat<float> global_feature_rows(const WkebFile& file, EmbeddingKind kind) {
    Mat<float> out(file.n_items(), file.header.dim);
    for (std::size_t i = 0; i < file.n_items(); ++i) {
        const Mat<float> row = align::image_global_row(file.item(i, kind));
        const float n = wukong::l2_norm(row[0], row.cols());
        if (!(n > 0))
            throw std::domain_error("item " + std::to_string(i) + " has a zero global row");
        for (std::size_t j = 0; j < row.cols(); ++j) out[i][j] = row[0][j] / n;
    }
    return out;
}

std::vector<EmbeddingSet<float>> normalized_sets(const WkebFile& file, EmbeddingKind kind) {
    std::vector<EmbeddingSet<float>> out(file.n_items());
    for (std::size_t i = 0; i < file.n_items(); ++i)
        out[i] = align::normalize_rows(file.item(i, kind));
    return out;
}

std::vector<EmbeddingSet<float>> single_row_sets(const Mat<float>& rows) {
    std::vector<EmbeddingSet<float>> out(rows.rows());
    for (std::size_t i = 0; i < rows.rows(); ++i) {
        Mat<float> one(1, rows.cols());
        for (std::size_t j = 0; j < rows.cols(); ++j) one[0][j] = rows[i][j];
        out[i].data = std::move(one);
        out[i].mask = {1};
    }
    return out;
}

std::vector<EmbeddingSet<float>> projected_image_sets(const model::ModelParams<float>& params,
                                                      const WkebFile& file) {
    std::vector<EmbeddingSet<float>> out(file.n_items());
    for (std::size_t i = 0; i < file.n_items(); ++i)
        out[i] = params.image_forward(file.item(i)).projected;
    return out;
}

std::vector<EmbeddingSet<float>> projected_text_sets(const model::ModelParams<float>& params,
                                                     const std::vector<train::Caption>& captions,
                                                     const tokenizer::Vocab& vocab) {
    std::vector<EmbeddingSet<float>> out(captions.size());
    for (std::size_t i = 0; i < captions.size(); ++i) {
        const auto seq = tokenizer::encode(captions[i].text, vocab, params.cfg.text.max_len);
        out[i] = params.text_forward(seq, false).projected;
    }
    return out;
}

json recalls_json(const std::vector<double>& recalls) {
    json arr = json::array();
    for (const double r : recalls) arr.push_back(r);
    return arr;
}

// --- subcommand options -----------------------------------------------------

struct FilterOpts {
    std::string input, output, rejects, names, sensitive;
    std::uint32_t min_dim = 200;
    double max_aspect = 3.0;
    std::uint32_t min_cjk = 1, max_cjk = 32;
    std::uint64_t max_freq = 10;
    std::uint64_t keyword_cap = 1000;
    std::string person_token = "〈人名〉";
    std::uint64_t max_errors = 0;
};

struct StatsOpts {
    std::string input, vocab;
    std::string granularity = "character";
};

struct TokenizeOpts {
    std::string input, text, vocab;
    std::size_t max_len = tokenizer::kDefaultMaxLen;
    std::string granularity = "character";
};

struct TrainOpts {
    std::string images, captions, vocab, out, log, resume;
    std::string mode = "global";
    std::size_t layers = 2, heads = 2, width = 64, max_len = 32;
    std::size_t embed_dim = 64, image_dim = 0, n_prime = align::kReducedTokensBase,
                reducer_mid = 0;
    std::size_t batch = 32, epochs = 20, steps = 0, warmup = 0, validate_every = 0;
    double peak_lr = 1e-3, weight_decay = 0.0, beta1 = 0.9, beta2 = 0.999, eps = 1e-2;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
};

struct EvalRetrievalOpts {
    std::string image_embeds, text_embeds, captions, checkpoint, vocab;
    std::string gt_i2t, gt_t2i;
    std::string mode = "global";
    std::vector<std::size_t> ks = evalkit::kDefaultKs;
};

struct EvalZeroshotOpts {
    std::string image_embeds, classes, prompts, labels, checkpoint, vocab;
};

struct ScoreOpts {
    std::string image_embeds, text_embeds, captions, checkpoint, vocab;
    std::string mode = "global";
};

struct AlignMapOpts {
    std::string image_embeds, caption, checkpoint, vocab, text_embeds;
    std::size_t index = 0, text_index = 0;
};

// --- subcommands ------------------------------------------------------------

int cmd_filter(const FilterOpts& o) {
    corpus::FilterConfig cfg;
    cfg.min_dim = o.min_dim;
    cfg.max_aspect = o.max_aspect;
    cfg.min_cjk_chars = o.min_cjk;
    cfg.max_cjk_chars = o.max_cjk;
    cfg.max_text_frequency = o.max_freq;
    cfg.keyword_cap = o.keyword_cap;
    cfg.person_token = o.person_token;
    cfg.validate();

    corpus::Lexicon sensitive, names;
    if (!o.sensitive.empty()) sensitive = corpus::Lexicon::load(o.sensitive);
    if (!o.names.empty()) names = corpus::Lexicon::load(o.names);

    corpus::FrequencyTable freq;
    {
        std::ifstream in(o.input);
        if (!in) throw std::runtime_error("filter: cannot open: " + o.input);
        freq = corpus::frequency_pass(in);
    }
    std::ifstream in(o.input);
    if (!in) throw std::runtime_error("filter: cannot open: " + o.input);
    std::ofstream kept(o.output);
    if (!kept) throw std::runtime_error("filter: cannot open for writing: " + o.output);
    std::ofstream rejects(o.rejects);
    if (!rejects) throw std::runtime_error("filter: cannot open for writing: " + o.rejects);

    const auto stats = corpus::run_pipeline(in, kept, rejects, cfg, sensitive, names, freq);
    kept.flush();
    rejects.flush();
    if (!kept || !rejects) throw std::runtime_error("filter: write failed");

    json out{{"input", stats.input},
             {"kept", stats.kept},
             {"rejected", stats.rejected},
             {"parse_errors", stats.parse_errors}};
    std::cout << out.dump() << '\n';
    if (stats.parse_errors > o.max_errors) {
        std::cerr << "error: " << stats.parse_errors << " parse errors exceed --max-errors "
                  << o.max_errors << '\n';
        return 2;
    }
    return 0;
}

int cmd_stats(const StatsOpts& o) {
    const auto vocab = tokenizer::Vocab::load(o.vocab);
    const auto granularity = granularity_from_string(o.granularity);
    const auto captions = train::load_captions(o.input);

    std::vector<std::size_t> per_caption;
    per_caption.reserve(captions.size());
    std::unordered_set<std::int32_t> unique;
    for (const auto& c : captions) {
        const auto words = tokenizer::pretokenize(c.text, granularity);
        std::string spaced;
        for (const auto& w : words) {
            if (!spaced.empty()) spaced += ' ';
            spaced += w;
        }
        const auto ids = tokenizer::wordpiece_tokenize(spaced, vocab);
        per_caption.push_back(ids.size());
        unique.insert(ids.begin(), ids.end());
    }
    const auto stats = corpus::aggregate_stats(per_caption, unique.size());
    std::cout << corpus::stats_to_json(stats) << '\n';
    return 0;
}

int cmd_tokenize(const TokenizeOpts& o) {
    const auto vocab = tokenizer::Vocab::load(o.vocab);
    const auto granularity = granularity_from_string(o.granularity);

    const auto emit = [&](const std::string& id, const std::string& text) {
        const auto seq = tokenizer::encode(text, vocab, o.max_len, granularity);
        json pieces = json::array(), ids = json::array(), mask = json::array();
        for (const auto t : seq.ids) {
            ids.push_back(t);
            pieces.push_back(vocab.tokens.at(static_cast<std::size_t>(t)));
        }
        for (const auto m : seq.mask) mask.push_back(static_cast<int>(m));
        json out{{"ids", ids}, {"pieces", pieces}, {"mask", mask}, {"sep_pos", seq.sep_pos}};
        if (!id.empty()) out["id"] = id;
        std::cout << out.dump() << '\n';
    };

    if (!o.text.empty()) {
        emit("", o.text);
        return 0;
    }
    if (o.input.empty())
        throw std::invalid_argument("tokenize: pass --input JSONL or --text CAPTION");
    for (const auto& c : train::load_captions(o.input)) emit(c.id, c.text);
    return 0;
}

int cmd_train(const TrainOpts& o, bool mode_given, bool image_dim_given) {
    const WkebFile images = WkebFile::read(o.images);
    const auto captions = train::load_captions(o.captions);
    const auto vocab = tokenizer::Vocab::load(o.vocab);

    model::ModelParams<float> params;
    train::LambState<float> opt;
    if (!o.resume.empty()) {
        model::OptState os;
        params = model::load_checkpoint(o.resume, &os);
        if (mode_given && align::similarity_mode_from_string(o.mode) != params.cfg.mode)
            throw std::invalid_argument("train: --mode differs from the resumed checkpoint");
        if (!os.tensors.empty()) {
            auto refs = train::collect_params(params);
            opt = train::from_opt_state(refs, os);
        }
    } else {
        model::ModelConfig mc;
        mc.text.n_layers = o.layers;
        mc.text.n_heads = o.heads;
        mc.text.width = o.width;
        mc.text.max_len = o.max_len;
        mc.text.vocab_size = vocab.tokens.size();
        mc.image_dim = image_dim_given ? o.image_dim : images.header.dim;
        mc.embed_dim = o.embed_dim;
        mc.mode = align::similarity_mode_from_string(o.mode);
        mc.reduced_tokens = o.n_prime;
        mc.reducer_mid = o.reducer_mid;
        std::mt19937_64 rng(o.seed);
        params.init(mc, rng);
    }
    if (params.cfg.image_dim != images.header.dim)
        throw std::invalid_argument("train: embedding file width " +
                                    std::to_string(images.header.dim) +
                                    " differs from model image_dim " +
                                    std::to_string(params.cfg.image_dim));

    train::TrainConfig tc;
    tc.batch_size = o.batch;
    tc.epochs = o.epochs;
    tc.max_steps = o.steps;
    tc.peak_lr = o.peak_lr;
    tc.warmup_steps = o.warmup;
    tc.weight_decay = o.weight_decay;
    tc.lamb_beta1 = o.beta1;
    tc.lamb_beta2 = o.beta2;
    tc.lamb_eps = o.eps;
    tc.similarity_mode = params.cfg.mode;
    tc.n_prime = params.cfg.reduced_tokens;
    tc.seed = o.seed;
    tc.validate_every = o.validate_every;

    std::ofstream log_file;
    std::ostream* log_stream = nullptr;
    if (!o.log.empty()) {
        log_file.open(o.log);
        if (!log_file) throw std::runtime_error("train: cannot open for writing: " + o.log);
        log_stream = &log_file;
    }

    const auto result = train::lit_train(images, captions, vocab, tc, params, opt, log_stream);

    auto refs = train::collect_params(params);
    const auto os = train::to_opt_state(refs, opt);
    model::save_checkpoint(o.out, params, &os);

    json out{{"steps", result.steps},
             {"checkpoint", o.out},
             {"loss_first", result.log.empty() ? 0.0 : result.log.front().loss},
             {"loss_last", result.log.empty() ? 0.0 : result.log.back().loss},
             {"val_loss", result.final_validation.loss},
             {"val_r_at_1", result.final_validation.r_at_1},
             {"tau", static_cast<double>(params.tau())}};
    std::cout << out.dump() << '\n';
    return 0;
}

int cmd_eval_retrieval(const EvalRetrievalOpts& o) {
    const WkebFile img = WkebFile::read(o.image_embeds);
    evalkit::RetrievalReport report;
    std::string mode_name;
    std::size_t n_texts = 0;

    if (!o.checkpoint.empty()) {
        if (o.captions.empty() || o.vocab.empty())
            throw std::invalid_argument(
                "eval-retrieval: --checkpoint needs --captions and --vocab");
        const auto params = model::load_checkpoint(o.checkpoint);
        const auto captions = train::load_captions(o.captions);
        const auto vocab = tokenizer::Vocab::load(o.vocab);
        const auto img_sets = projected_image_sets(params, img);
        const auto txt_sets = projected_text_sets(params, captions, vocab);
        n_texts = txt_sets.size();
        evalkit::RetrievalGroundTruth gt;
        if (!o.gt_i2t.empty())
            gt.i2t = evalkit::load_direction_gt(o.gt_i2t, img.n_items(), n_texts);
        if (!o.gt_t2i.empty())
            gt.t2i = evalkit::load_direction_gt(o.gt_t2i, n_texts, img.n_items());
        report = evalkit::retrieval_eval(img_sets, txt_sets, gt, params.cfg.mode, o.ks);
        mode_name = align::to_string(params.cfg.mode);
    } else {
        if (o.text_embeds.empty())
            throw std::invalid_argument("eval-retrieval: pass --text-embeds or --checkpoint");
        const WkebFile txt = WkebFile::read(o.text_embeds);
        n_texts = txt.n_items();
        evalkit::RetrievalGroundTruth gt;
        if (!o.gt_i2t.empty())
            gt.i2t = evalkit::load_direction_gt(o.gt_i2t, img.n_items(), n_texts);
        if (!o.gt_t2i.empty())
            gt.t2i = evalkit::load_direction_gt(o.gt_t2i, n_texts, img.n_items());
        const auto mode = align::similarity_mode_from_string(o.mode);
        mode_name = o.mode;
        if (mode == align::SimilarityMode::global) {
            report = evalkit::retrieval_eval(global_feature_rows(img, EmbeddingKind::image),
                                             global_feature_rows(txt, EmbeddingKind::text), gt,
                                             o.ks);
        } else {
            // Without a checkpoint, reduced-mode files must already hold
            // reduced tokens; the scoring kernel is then the token-wise one.
            report = evalkit::retrieval_eval(normalized_sets(img, EmbeddingKind::image),
                                             normalized_sets(txt, EmbeddingKind::text), gt, mode,
                                             o.ks);
        }
    }

    json out{{"mode", mode_name},
             {"n_images", img.n_items()},
             {"n_texts", n_texts},
             {"ks", report.ks},
             {"mean_recall", report.mean_recall},
             {"mean_recall_printed", evalkit::format_fixed(report.mean_recall, 1)}};
    if (!report.i2t.empty()) out["i2t"] = recalls_json(report.i2t);
    if (!report.t2i.empty()) out["t2i"] = recalls_json(report.t2i);
    std::cout << out.dump() << '\n';
    std::cerr << "mean recall: " << evalkit::format_fixed(report.mean_recall, 1) << '\n';
    return 0;
}

int cmd_eval_zeroshot(const EvalZeroshotOpts& o) {
    const auto params = model::load_checkpoint(o.checkpoint);
    const auto vocab = tokenizer::Vocab::load(o.vocab);
    const auto class_names = read_nonblank_lines(o.classes, "classes");
    if (class_names.empty()) throw std::invalid_argument("classes: empty list");
    const auto prompts = evalkit::PromptSet::load(o.prompts);
    const auto labels = read_labels(o.labels);
    const WkebFile img = WkebFile::read(o.image_embeds);

    const Mat<float> class_matrix = evalkit::class_embeddings(class_names, prompts, params, vocab);
    Mat<float> feats(img.n_items(), params.cfg.embed_dim);
    for (std::size_t i = 0; i < img.n_items(); ++i) {
        const Mat<float> row = params.global_image_feature(img.item(i));
        for (std::size_t j = 0; j < row.cols(); ++j) feats[i][j] = row[0][j];
    }
    const double acc = evalkit::zero_shot_classify(feats, class_matrix, labels);

    json out{{"n_images", img.n_items()},
             {"n_classes", class_names.size()},
             {"n_prompts", prompts.templates.size()},
             {"top1_accuracy", acc},
             {"top1_accuracy_printed", evalkit::format_fixed(acc, 2)}};
    std::cout << out.dump() << '\n';
    std::cerr << "top-1 accuracy: " << evalkit::format_fixed(acc, 2) << '\n';
    return 0;
}

int cmd_score(const ScoreOpts& o) {
    const WkebFile img = WkebFile::read(o.image_embeds);
    std::vector<EmbeddingSet<float>> img_sets, txt_sets;
    std::string mode_name;

    if (!o.checkpoint.empty()) {
        if (o.captions.empty() || o.vocab.empty())
            throw std::invalid_argument("score: --checkpoint needs --captions and --vocab");
        const auto params = model::load_checkpoint(o.checkpoint);
        const auto captions = train::load_captions(o.captions);
        const auto vocab = tokenizer::Vocab::load(o.vocab);
        img_sets = projected_image_sets(params, img);
        txt_sets = projected_text_sets(params, captions, vocab);
        mode_name = align::to_string(params.cfg.mode);
    } else {
        if (o.text_embeds.empty())
            throw std::invalid_argument("score: pass --text-embeds or --checkpoint");
        const WkebFile txt = WkebFile::read(o.text_embeds);
        const auto mode = align::similarity_mode_from_string(o.mode);
        mode_name = o.mode;
        if (mode == align::SimilarityMode::global) {
            img_sets = single_row_sets(global_feature_rows(img, EmbeddingKind::image));
            txt_sets = single_row_sets(global_feature_rows(txt, EmbeddingKind::text));
        } else {
            img_sets = normalized_sets(img, EmbeddingKind::image);
            txt_sets = normalized_sets(txt, EmbeddingKind::text);
        }
    }

    const auto sims =
        model::batch_similarities(img_sets, txt_sets, align::SimilarityMode::tokenwise);
    json si = json::array(), st = json::array();
    for (std::size_t i = 0; i < sims.s_image.rows(); ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < sims.s_image.cols(); ++j)
            row.push_back(static_cast<double>(sims.s_image[i][j]));
        si.push_back(std::move(row));
    }
    for (std::size_t i = 0; i < sims.s_text.rows(); ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < sims.s_text.cols(); ++j)
            row.push_back(static_cast<double>(sims.s_text[i][j]));
        st.push_back(std::move(row));
    }
    json out{{"mode", mode_name},
             {"n_images", img_sets.size()},
             {"n_texts", txt_sets.size()},
             {"s_image", si},
             {"s_text", st}};
    std::cout << out.dump() << '\n';
    return 0;
}

int cmd_align_map(const AlignMapOpts& o) {
    const WkebFile img = WkebFile::read(o.image_embeds);
    if (o.index >= img.n_items())
        throw std::invalid_argument("align-map: --index out of range");
    const EmbeddingSet<float> raw = img.item(o.index);

    EmbeddingSet<float> img_set, txt_set;
    json token_info;
    if (!o.checkpoint.empty()) {
        if (o.caption.empty() || o.vocab.empty())
            throw std::invalid_argument("align-map: --checkpoint needs --caption and --vocab");
        const auto params = model::load_checkpoint(o.checkpoint);
        const auto vocab = tokenizer::Vocab::load(o.vocab);
        const auto seq = tokenizer::encode(o.caption, vocab, params.cfg.text.max_len);
        // Word-patch alignment always works on the unreduced token grid.
        img_set = align::l2_project(raw, params.image_head);
        EmbeddingSet<float> enc = params.text.forward(seq);
        enc.mask = model::text_content_mask(seq);
        txt_set = align::l2_project(enc, params.text_head);
        json pieces = json::array();
        for (const auto t : seq.ids) pieces.push_back(vocab.tokens.at(static_cast<std::size_t>(t)));
        token_info = std::move(pieces);
    } else {
        if (o.text_embeds.empty())
            throw std::invalid_argument("align-map: pass --text-embeds or --checkpoint");
        const WkebFile txt = WkebFile::read(o.text_embeds);
        if (o.text_index >= txt.n_items())
            throw std::invalid_argument("align-map: --text-index out of range");
        img_set = align::normalize_rows(raw);
        txt_set = align::normalize_rows(txt.item(o.text_index, EmbeddingKind::text));
    }

    const Mat<std::int32_t> map = align::word_patch_alignment(img_set, txt_set);
    json rows = json::array();
    for (std::size_t r = 0; r < map.rows(); ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < map.cols(); ++c) row.push_back(map[r][c]);
        rows.push_back(std::move(row));
    }
    json out{{"h", map.rows()}, {"w", map.cols()}, {"map", rows}};
    if (!token_info.is_null()) out["pieces"] = token_info;
    std::cout << out.dump() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Image-text contrastive pipeline: corpus filtering, tokenization, "
                 "LiT-style tuning over frozen image embeddings, and evaluation."};
    app.require_subcommand(1);

    FilterOpts fo;
    auto* filter = app.add_subcommand(
        "filter", "Filter a JSONL web corpus through the image/text rule cascade");
    filter->set_config("--config");
    filter->add_option("--input", fo.input, "Input JSONL records")->required();
    filter->add_option("--output", fo.output, "Kept records (JSONL)")->required();
    filter->add_option("--rejects", fo.rejects, "Rejection log (JSONL)")->required();
    filter->add_option("--names", fo.names, "Person-name lexicon for redaction");
    filter->add_option("--sensitive", fo.sensitive, "Sensitive-word lexicon");
    filter->add_option("--min-dim", fo.min_dim, "Both image sides must exceed this");
    filter->add_option("--max-aspect", fo.max_aspect, "Maximum side ratio");
    filter->add_option("--min-cjk", fo.min_cjk, "Minimum CJK characters (inclusive)");
    filter->add_option("--max-cjk", fo.max_cjk, "Maximum CJK characters (exclusive)");
    filter->add_option("--max-freq", fo.max_freq, "Maximum caption frequency");
    filter->add_option("--keyword-cap", fo.keyword_cap, "Kept records per keyword");
    filter->add_option("--person-token", fo.person_token, "Replacement for person names");
    filter->add_option("--max-errors", fo.max_errors, "Parse errors tolerated before exit 2");

    StatsOpts so;
    auto* stats = app.add_subcommand("stats", "Token statistics of a filtered JSONL corpus");
    stats->set_config("--config");
    stats->add_option("--input", so.input, "JSONL records with id and caption")->required();
    stats->add_option("--vocab", so.vocab, "Vocabulary file, one token per line")->required();
    stats->add_option("--granularity", so.granularity, "character or word")
        ->check(CLI::IsMember({"character", "word"}));

    TokenizeOpts to;
    auto* tok = app.add_subcommand("tokenize", "Encode captions to fixed-length id sequences");
    tok->set_config("--config");
    tok->add_option("--input", to.input, "JSONL records with id and caption");
    tok->add_option("--text", to.text, "Single caption to encode");
    tok->add_option("--vocab", to.vocab, "Vocabulary file")->required();
    tok->add_option("--max-len", to.max_len, "Sequence length including [CLS]/[SEP]");
    tok->add_option("--granularity", to.granularity, "character or word")
        ->check(CLI::IsMember({"character", "word"}));

    TrainOpts tro;
    auto* tr = app.add_subcommand(
        "train", "Contrastive tuning of the text tower against frozen image embeddings");
    tr->set_config("--config");
    tr->add_option("--images", tro.images, "Frozen image embeddings (WKEB)")->required();
    tr->add_option("--captions", tro.captions, "JSONL {id, caption}, row-aligned")->required();
    tr->add_option("--vocab", tro.vocab, "Vocabulary file")->required();
    tr->add_option("--out", tro.out, "Checkpoint output path")->required();
    tr->add_option("--log", tro.log, "Per-step JSONL log path");
    tr->add_option("--resume", tro.resume, "Checkpoint to resume from");
    auto* mode_opt = tr->add_option("--mode", tro.mode, "global, tokenwise, or reduced")
                         ->check(CLI::IsMember({"global", "tokenwise", "reduced"}));
    tr->add_option("--layers", tro.layers, "Text encoder depth");
    tr->add_option("--heads", tro.heads, "Attention heads");
    tr->add_option("--width", tro.width, "Text encoder width");
    tr->add_option("--max-len", tro.max_len, "Text sequence length");
    tr->add_option("--embed-dim", tro.embed_dim, "Shared space width");
    auto* idim_opt = tr->add_option("--image-dim", tro.image_dim,
                                    "Image embedding width (default: from the WKEB header)");
    tr->add_option("--n-prime", tro.n_prime, "Reduced token count (reduced mode)");
    tr->add_option("--reducer-mid", tro.reducer_mid, "Reducer hidden width (0: image-dim)");
    tr->add_option("--batch", tro.batch, "Batch size");
    tr->add_option("--epochs", tro.epochs, "Training epochs");
    tr->add_option("--steps", tro.steps, "Exact step count (overrides --epochs)");
    tr->add_option("--peak-lr,--lr", tro.peak_lr, "Peak learning rate");
    tr->add_option("--warmup", tro.warmup, "Linear warmup steps");
    tr->add_option("--weight-decay", tro.weight_decay, "Decoupled weight decay");
    tr->add_option("--beta1", tro.beta1, "First-moment decay");
    tr->add_option("--beta2", tro.beta2, "Second-moment decay");
    tr->add_option("--eps", tro.eps, "Optimizer epsilon");
    tr->add_option("--seed", tro.seed, "RNG seed (init + shuffling)");
    tr->add_option("--validate-every", tro.validate_every,
                   "Validation cadence in steps (0: once per epoch)");
    tr->add_option("--threads", tro.threads, "Worker threads (current build runs serially)");

    EvalRetrievalOpts ero;
    auto* er = app.add_subcommand("eval-retrieval", "Bidirectional Recall@K / Mean Recall");
    er->set_config("--config");
    er->add_option("--image-embeds", ero.image_embeds, "Image embeddings (WKEB)")->required();
    er->add_option("--text-embeds", ero.text_embeds, "Text embeddings (WKEB)");
    er->add_option("--captions", ero.captions, "JSONL captions (with --checkpoint)");
    er->add_option("--checkpoint", ero.checkpoint, "Model checkpoint");
    er->add_option("--vocab", ero.vocab, "Vocabulary file (with --checkpoint)");
    er->add_option("--gt-i2t", ero.gt_i2t, "Image-to-text ground truth (JSONL)");
    er->add_option("--gt-t2i", ero.gt_t2i, "Text-to-image ground truth (JSONL)");
    er->add_option("--mode", ero.mode, "Scoring mode for raw embedding files")
        ->check(CLI::IsMember({"global", "tokenwise", "reduced"}));
    er->add_option("--ks", ero.ks, "Recall cutoffs")->delimiter(',');

    EvalZeroshotOpts ezo;
    auto* ez = app.add_subcommand("eval-zeroshot",
                                  "Prompt-ensemble zero-shot classification accuracy");
    ez->set_config("--config");
    ez->add_option("--image-embeds", ezo.image_embeds, "Image embeddings (WKEB)")->required();
    ez->add_option("--classes", ezo.classes, "Class names, one per line")->required();
    ez->add_option("--prompts", ezo.prompts, "Prompt templates with one {} each")->required();
    ez->add_option("--labels", ezo.labels, "One class index per image row")->required();
    ez->add_option("--checkpoint", ezo.checkpoint, "Model checkpoint")->required();
    ez->add_option("--vocab", ezo.vocab, "Vocabulary file")->required();

    ScoreOpts sco;
    auto* sc = app.add_subcommand("score", "Pairwise similarities between embedding files");
    sc->set_config("--config");
    sc->add_option("--image-embeds", sco.image_embeds, "Image embeddings (WKEB)")->required();
    sc->add_option("--text-embeds", sco.text_embeds, "Text embeddings (WKEB)");
    sc->add_option("--captions", sco.captions, "JSONL captions (with --checkpoint)");
    sc->add_option("--checkpoint", sco.checkpoint, "Model checkpoint");
    sc->add_option("--vocab", sco.vocab, "Vocabulary file (with --checkpoint)");
    sc->add_option("--mode", sco.mode, "global, tokenwise, or reduced")
        ->check(CLI::IsMember({"global", "tokenwise", "reduced"}));

    AlignMapOpts amo;
    auto* am = app.add_subcommand("align-map",
                                  "Best-matching text position for every image grid cell");
    am->set_config("--config");
    am->add_option("--image-embeds", amo.image_embeds, "Image embeddings (WKEB, with grid)")
        ->required();
    am->add_option("--index", amo.index, "Image item index");
    am->add_option("--caption", amo.caption, "Caption (with --checkpoint)");
    am->add_option("--checkpoint", amo.checkpoint, "Model checkpoint");
    am->add_option("--vocab", amo.vocab, "Vocabulary file (with --checkpoint)");
    am->add_option("--text-embeds", amo.text_embeds, "Text embeddings (WKEB)");
    am->add_option("--text-index", amo.text_index, "Text item index");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    CLI::App* sub = app.get_subcommands().front();
    std::cerr << "# resolved config: " << sub->get_name() << '\n';
    std::istringstream cfg_lines(sub->config_to_str(true, false));
    for (std::string line; std::getline(cfg_lines, line);)
        if (!line.empty()) std::cerr << "#   " << line << '\n';

    if (sub == filter) return run_guarded([&] { return cmd_filter(fo); });
    if (sub == stats) return run_guarded([&] { return cmd_stats(so); });
    if (sub == tok) return run_guarded([&] { return cmd_tokenize(to); });
    if (sub == tr)
        return run_guarded(
            [&] { return cmd_train(tro, mode_opt->count() > 0, idim_opt->count() > 0); });
    if (sub == er) return run_guarded([&] { return cmd_eval_retrieval(ero); });
    if (sub == ez) return run_guarded([&] { return cmd_eval_zeroshot(ezo); });
    if (sub == sc) return run_guarded([&] { return cmd_score(sco); });
    if (sub == am) return run_guarded([&] { return cmd_align_map(amo); });
    return 2;
}
