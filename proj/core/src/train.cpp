#include "wukong/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "wukong/loss.hpp"

namespace wukong::train {

namespace {
constexpr double kPi = 3.141592653589793238462643383279502884;
}

void TrainConfig::validate() const {
    if (batch_size == 0) throw std::invalid_argument("train config: batch_size must be positive");
    if (epochs == 0 && max_steps == 0)
        throw std::invalid_argument("train config: epochs or max_steps must be positive");
    if (!(lamb_beta1 > 0.0 && lamb_beta1 < 1.0) || !(lamb_beta2 > 0.0 && lamb_beta2 < 1.0))
        throw std::invalid_argument("train config: betas must lie in (0, 1)");
    if (!(lamb_eps > 0.0)) throw std::invalid_argument("train config: eps must be positive");
    if (!(peak_lr >= 0.0) || !std::isfinite(peak_lr))
        throw std::invalid_argument("train config: peak_lr must be finite and non-negative");
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay))
        throw std::invalid_argument("train config: weight_decay must be finite and non-negative");
}

double lr_schedule(std::size_t step, std::size_t warmup_steps, std::size_t total_steps,
                   double peak_lr) {
    if (step > total_steps) throw std::invalid_argument("lr_schedule: step beyond total_steps");
    if (warmup_steps > 0 && step < warmup_steps)
        return peak_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
    if (total_steps <= warmup_steps) return step == warmup_steps ? peak_lr : 0.0;
    const double t = static_cast<double>(step - warmup_steps) /
                     static_cast<double>(total_steps - warmup_steps);
    return peak_lr * 0.5 * (1.0 + std::cos(kPi * t));
}

double lr_schedule(std::size_t step, std::size_t total_steps, const TrainConfig& cfg) {
    return lr_schedule(step, cfg.warmup_steps, total_steps, cfg.peak_lr);
}

// --- LAMB -------------------------------------------------------------------

template <typename T>
std::vector<ParamRef<T>> collect_params(model::ModelParams<T>& params) {
    std::vector<ParamRef<T>> out;
    params.visit_params([&](const std::string& name, Mat<T>* value, Mat<T>* grad, bool decay) {
        out.push_back(ParamRef<T>{name, value, grad, decay});
    });
    return out;
}

template <typename T>
void LambState<T>::init(const std::vector<ParamRef<T>>& params) {
    step = 0;
    slots.clear();
    slots.reserve(params.size());
    for (const auto& p : params)
        slots.push_back(LambSlot<T>{Mat<T>(p.value->rows(), p.value->cols()),
                                    Mat<T>(p.value->rows(), p.value->cols())});
}

template <typename T>
void lamb_step(const std::vector<ParamRef<T>>& params, LambState<T>& state, double lr,
               const TrainConfig& cfg) {
    if (state.empty()) state.init(params);
    if (state.slots.size() != params.size())
        throw std::invalid_argument("lamb_step: optimizer state does not match parameter list");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (state.slots[i].m.rows() != params[i].value->rows() ||
            state.slots[i].m.cols() != params[i].value->cols())
            throw std::invalid_argument("lamb_step: state shape mismatch for " + params[i].name);
        const Mat<T>& g = *params[i].grad;
        for (std::size_t k = 0; k < g.size(); ++k)
            if (!std::isfinite(static_cast<double>(g.data()[k])))
                throw std::domain_error("lamb_step: non-finite gradient in " + params[i].name);
    }

    const std::uint64_t t = state.step + 1;
    const double bc1 = 1.0 - std::pow(cfg.lamb_beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.lamb_beta2, static_cast<double>(t));

    std::vector<double> u;
    for (std::size_t i = 0; i < params.size(); ++i) {
        Mat<T>& p = *params[i].value;
        const Mat<T>& g = *params[i].grad;
        LambSlot<T>& slot = state.slots[i];
        const double wd = params[i].weight_decay ? cfg.weight_decay : 0.0;

        u.assign(p.size(), 0.0);
        double p_sq = 0.0, u_sq = 0.0;
        for (std::size_t k = 0; k < p.size(); ++k) {
            const double gk = static_cast<double>(g.data()[k]);
            const double m = cfg.lamb_beta1 * static_cast<double>(slot.m.data()[k]) +
                             (1.0 - cfg.lamb_beta1) * gk;
            const double v = cfg.lamb_beta2 * static_cast<double>(slot.v.data()[k]) +
                             (1.0 - cfg.lamb_beta2) * gk * gk;
            slot.m.data()[k] = static_cast<T>(m);
            slot.v.data()[k] = static_cast<T>(v);
            const double m_hat = m / bc1;
            const double v_hat = v / bc2;
            const double pk = static_cast<double>(p.data()[k]);
            const double uk = m_hat / (std::sqrt(v_hat) + cfg.lamb_eps) + wd * pk;
            u[k] = uk;
            p_sq += pk * pk;
            u_sq += uk * uk;
        }
        const double p_norm = std::sqrt(p_sq);
        const double u_norm = std::sqrt(u_sq);
        const double phi = (p_norm > 0.0 && u_norm > 0.0) ? p_norm / u_norm : 1.0;
        for (std::size_t k = 0; k < p.size(); ++k)
            p.data()[k] = static_cast<T>(static_cast<double>(p.data()[k]) - lr * phi * u[k]);
    }
    state.step = t;
}

model::OptState to_opt_state(const std::vector<ParamRef<float>>& params,
                             const LambState<float>& state) {
    if (state.slots.size() != params.size())
        throw std::invalid_argument("optimizer state does not match parameter list");
    model::OptState out;
    out.step = state.step;
    for (std::size_t i = 0; i < params.size(); ++i) {
        out.tensors.emplace_back("opt.m." + params[i].name, state.slots[i].m);
        out.tensors.emplace_back("opt.v." + params[i].name, state.slots[i].v);
    }
    return out;
}

LambState<float> from_opt_state(const std::vector<ParamRef<float>>& params,
                                const model::OptState& opt) {
    std::unordered_map<std::string, const Mat<float>*> by_name;
    for (const auto& [name, value] : opt.tensors) by_name.emplace(name, &value);
    LambState<float> state;
    state.step = opt.step;
    state.slots.reserve(params.size());
    for (const auto& p : params) {
        auto m = by_name.find("opt.m." + p.name);
        auto v = by_name.find("opt.v." + p.name);
        if (m == by_name.end() || v == by_name.end())
            throw std::invalid_argument("optimizer state missing slots for " + p.name);
        if (m->second->rows() != p.value->rows() || m->second->cols() != p.value->cols() ||
            v->second->rows() != p.value->rows() || v->second->cols() != p.value->cols())
            throw std::invalid_argument("optimizer state shape mismatch for " + p.name);
        state.slots.push_back(LambSlot<float>{*m->second, *v->second});
    }
    return state;
}

// --- data -------------------------------------------------------------------

std::vector<Caption> parse_captions(std::istream& in) {
    std::vector<Caption> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw std::invalid_argument("captions: line " + std::to_string(line_no) +
                                        ": invalid JSON");
        if (!j.is_object() || !j.contains("id") || !j["id"].is_string() ||
            !j.contains("caption") || !j["caption"].is_string())
            throw std::invalid_argument("captions: line " + std::to_string(line_no) +
                                        ": expected object with string id and caption");
        Caption c{j["id"].get<std::string>(), j["caption"].get<std::string>()};
        if (c.id.empty())
            throw std::invalid_argument("captions: line " + std::to_string(line_no) +
                                        ": empty id");
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<Caption> load_captions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("captions: cannot open: " + path);
    return parse_captions(in);
}

// --- the loop -----------------------------------------------------------------

namespace {

void check_pairing(const WkebFile& images, const std::vector<Caption>& captions) {
    if (images.n_items() == 0 || captions.empty())
        throw std::invalid_argument("empty dataset: no image-caption pairs");
    if (images.n_items() != captions.size())
        throw std::invalid_argument(
            "id mismatch between embeddings and captions: " + std::to_string(images.n_items()) +
            " embeddings vs " + std::to_string(captions.size()) + " captions");
    std::unordered_set<std::string> seen;
    for (const auto& c : captions)
        if (!seen.insert(c.id).second)
            throw std::invalid_argument(
                "id mismatch between embeddings and captions: duplicate caption id '" + c.id +
                "'");
}

struct PairScores {
    loss::BatchSimilarities<float> sims;
    std::vector<align::TokenwiseCache<float>> caches;
};

double top1_accuracy(const Mat<float>& scores) {
    // Row k is a query whose positive candidate is column k; ties rank the
    // lower column first.
    std::size_t hits = 0;
    for (std::size_t k = 0; k < scores.rows(); ++k) {
        const float own = scores[k][k];
        bool top = true;
        for (std::size_t j = 0; j < scores.cols() && top; ++j) {
            if (j == k) continue;
            if (scores[k][j] > own || (scores[k][j] == own && j < k)) top = false;
        }
        hits += top;
    }
    return static_cast<double>(hits) / static_cast<double>(scores.rows());
}

}  // namespace

ValidationResult validate(const model::ModelParams<float>& params, const WkebFile& images,
                          const std::vector<Caption>& captions, const tokenizer::Vocab& vocab) {
    check_pairing(images, captions);
    const std::size_t n = images.n_items();
    std::vector<EmbeddingSet<float>> img(n), txt(n);
    for (std::size_t i = 0; i < n; ++i) {
        img[i] = params.image_forward(images.item(i)).projected;
        const auto seq = tokenizer::encode(captions[i].text, vocab, params.cfg.text.max_len);
        txt[i] = params.text_forward(seq, false).projected;
    }
    const auto sims = model::batch_similarities(img, txt, params.cfg.mode);
    const auto res =
        loss::contrastive_loss(sims, loss::Temperature<float>{params.log_tau[0][0]});
    ValidationResult out;
    out.loss = static_cast<double>(res.value);
    out.r_at_1_i2t = top1_accuracy(sims.s_image);
    out.r_at_1_t2i = top1_accuracy(sims.s_text);
    out.r_at_1 = 0.5 * (out.r_at_1_i2t + out.r_at_1_t2i);
    return out;
}

TrainResult lit_train(const WkebFile& images, const std::vector<Caption>& captions,
                      const tokenizer::Vocab& vocab, const TrainConfig& cfg,
                      model::ModelParams<float>& params, LambState<float>& opt,
                      std::ostream* log_stream) {
    cfg.validate();
    check_pairing(images, captions);
    if (params.cfg.mode != cfg.similarity_mode)
        throw std::invalid_argument("train config similarity_mode differs from the model's");

    const std::size_t n = images.n_items();
    const std::size_t b = std::min(cfg.batch_size, n);
    const std::size_t steps_per_epoch = (n + b - 1) / b;
    const std::size_t total =
        cfg.max_steps ? cfg.max_steps : cfg.epochs * steps_per_epoch;
    if (cfg.warmup_steps > total)
        throw std::invalid_argument("train config: warmup_steps exceeds total steps");
    const std::size_t validate_every = cfg.validate_every ? cfg.validate_every : steps_per_epoch;

    std::vector<tokenizer::TokenSequence> seqs(n);
    std::vector<EmbeddingSet<float>> raw(n);
    for (std::size_t i = 0; i < n; ++i) {
        seqs[i] = tokenizer::encode(captions[i].text, vocab, params.cfg.text.max_len);
        raw[i] = images.item(i);
    }

    auto refs = collect_params(params);
    if (opt.empty()) opt.init(refs);

    TrainResult out;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    std::size_t s = 0;
    for (std::uint64_t epoch = 0; s < total; ++epoch) {
        std::mt19937_64 shuffle_rng(cfg.seed ^ (0x9e3779b97f4a7c15ULL * (epoch + 1)));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        for (std::size_t start = 0; start < n && s < total; start += b, ++s) {
            const std::size_t bn = std::min(b, n - start);
            params.zero_grads();

            std::vector<model::ImageForward<float>> ifwd(bn);
            std::vector<model::TextForward<float>> tfwd(bn);
            std::vector<EmbeddingSet<float>> iproj(bn), tproj(bn);
            for (std::size_t k = 0; k < bn; ++k) {
                const std::size_t idx = order[start + k];
                ifwd[k] = params.image_forward(raw[idx]);
                tfwd[k] = params.text_forward(seqs[idx], true);
                iproj[k] = ifwd[k].projected;
                tproj[k] = tfwd[k].projected;
            }

            std::vector<align::TokenwiseCache<float>> caches;
            const auto sims = model::batch_similarities(iproj, tproj, params.cfg.mode, &caches);
            const auto res =
                loss::contrastive_loss(sims, loss::Temperature<float>{params.log_tau[0][0]});
            const double tau_fwd = static_cast<double>(params.tau());

            params.g_log_tau[0][0] += res.grad_log_tau;
            std::vector<Mat<float>> dimg(bn), dtxt(bn);
            for (std::size_t k = 0; k < bn; ++k) {
                dimg[k] = Mat<float>(iproj[k].n_tokens(), iproj[k].dim());
                dtxt[k] = Mat<float>(tproj[k].n_tokens(), tproj[k].dim());
            }
            for (std::size_t i = 0; i < bn; ++i)
                for (std::size_t j = 0; j < bn; ++j)
                    align::tokenwise_similarity_backward(
                        iproj[i], tproj[j], caches[i * bn + j], res.grad_s_image[i][j],
                        res.grad_s_text[j][i], dimg[i], dtxt[j]);
            for (std::size_t k = 0; k < bn; ++k) {
                params.image_backward(ifwd[k], dimg[k]);
                params.text_backward(tfwd[k], dtxt[k]);
            }

            const double lr = lr_schedule(s, total, cfg);
            lamb_step(refs, opt, lr, cfg);
            params.clamp_tau();

            const StepLog entry{s, lr, static_cast<double>(res.value), tau_fwd};
            out.log.push_back(entry);
            if (log_stream) {
                nlohmann::json j{{"step", entry.step},
                                 {"lr", entry.lr},
                                 {"loss", entry.loss},
                                 {"tau", entry.tau}};
                *log_stream << j.dump() << '\n';
            }

            if ((s + 1) % validate_every == 0 && s + 1 < total) {
                const auto val = validate(params, images, captions, vocab);
                if (log_stream) {
                    nlohmann::json j{{"step", s},
                                     {"val_loss", val.loss},
                                     {"val_r_at_1", val.r_at_1},
                                     {"val_r_at_1_i2t", val.r_at_1_i2t},
                                     {"val_r_at_1_t2i", val.r_at_1_t2i}};
                    *log_stream << j.dump() << '\n';
                }
            }
        }
    }

    out.steps = s;
    out.final_validation = validate(params, images, captions, vocab);
    if (log_stream) {
        const auto& val = out.final_validation;
        nlohmann::json j{{"step", s == 0 ? 0 : s - 1},
                         {"val_loss", val.loss},
                         {"val_r_at_1", val.r_at_1},
                         {"val_r_at_1_i2t", val.r_at_1_i2t},
                         {"val_r_at_1_t2i", val.r_at_1_t2i}};
        *log_stream << j.dump() << '\n';
    }
    return out;
}

template std::vector<ParamRef<float>> collect_params(model::ModelParams<float>&);
template std::vector<ParamRef<double>> collect_params(model::ModelParams<double>&);
template struct LambState<float>;
template struct LambState<double>;
template void lamb_step(const std::vector<ParamRef<float>>&, LambState<float>&, double,
                        const TrainConfig&);
template void lamb_step(const std::vector<ParamRef<double>>&, LambState<double>&, double,
                        const TrainConfig&);

}  // namespace wukong::train
