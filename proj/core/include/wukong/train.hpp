#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "wukong/align.hpp"
#include "wukong/matrix.hpp"
#include "wukong/model.hpp"
#include "wukong/tokenizer.hpp"

namespace wukong::train {

using wukong::Mat;

// Published full-scale optimizer settings; desk-scale runs override freely.
struct TrainConfig {
    std::size_t batch_size = 32;
    std::size_t epochs = 20;
    double peak_lr = 1e-3;
    std::size_t warmup_steps = 0;
    double weight_decay = 0.0;
    double lamb_beta1 = 0.9;
    double lamb_beta2 = 0.999;
    double lamb_eps = 1e-2;
    align::SimilarityMode similarity_mode = align::SimilarityMode::global;
    std::size_t n_prime = align::kReducedTokensBase;
    std::uint64_t seed = 0;
    std::size_t max_steps = 0;       // 0: epochs * ceil(n / batch_size)
    std::size_t validate_every = 0;  // steps; 0: once per epoch

    void validate() const;  // throws std::invalid_argument
};

// Piecewise schedule: linear 0 -> peak over warmup_steps, then half-cosine
// peak -> 0 over the remaining steps.
double lr_schedule(std::size_t step, std::size_t warmup_steps, std::size_t total_steps,
                   double peak_lr);
double lr_schedule(std::size_t step, std::size_t total_steps, const TrainConfig& cfg);

// --- LAMB -------------------------------------------------------------------

template <typename T>
struct ParamRef {
    std::string name;
    Mat<T>* value = nullptr;
    Mat<T>* grad = nullptr;
    bool weight_decay = false;  // false: excluded from decay
};

template <typename T>
std::vector<ParamRef<T>> collect_params(model::ModelParams<T>& params);

template <typename T>
struct LambSlot {
    Mat<T> m, v;
};

template <typename T>
struct LambState {
    std::uint64_t step = 0;  // completed steps
    std::vector<LambSlot<T>> slots;

    void init(const std::vector<ParamRef<T>>& params);
    bool empty() const { return slots.empty(); }
};

// One layerwise-adaptive update: bias-corrected moments, u = m_hat /
// (sqrt(v_hat) + eps) + wd * p on decayed tensors, trust ratio phi =
// ||p|| / ||u|| (1 when either norm is zero), p -= lr * phi * u. A non-finite
// gradient aborts before mutating anything (std::domain_error naming the
// tensor).
template <typename T>
void lamb_step(const std::vector<ParamRef<T>>& params, LambState<T>& state, double lr,
               const TrainConfig& cfg);

// Checkpoint bridging: slots become "opt.m.<param>" / "opt.v.<param>" tensors.
model::OptState to_opt_state(const std::vector<ParamRef<float>>& params,
                             const LambState<float>& state);
LambState<float> from_opt_state(const std::vector<ParamRef<float>>& params,
                                const model::OptState& opt);

// --- data -------------------------------------------------------------------

struct Caption {
    std::string id;
    std::string text;
};

// JSONL {id, caption}; blank lines skipped. Malformed lines raise
// std::invalid_argument with the line number; unreadable files raise
// std::runtime_error.
std::vector<Caption> load_captions(const std::string& path);
std::vector<Caption> parse_captions(std::istream& in);

// --- the loop -----------------------------------------------------------------

struct StepLog {
    std::size_t step = 0;
    double lr = 0;
    double loss = 0;
    double tau = 0;
};

struct ValidationResult {
    double loss = 0;
    double r_at_1 = 0;  // mean of the two directions
    double r_at_1_i2t = 0;
    double r_at_1_t2i = 0;
};

struct TrainResult {
    std::size_t steps = 0;
    std::vector<StepLog> log;
    ValidationResult final_validation;
};

// Forward-only full-set contrastive loss and in-batch R@1 (both directions,
// ties broken toward the lower index like everywhere else).
ValidationResult validate(const model::ModelParams<float>& params, const WkebFile& images,
                          const std::vector<Caption>& captions, const tokenizer::Vocab& vocab);

// Contrastive tuning against frozen image embeddings: per step, sample a
// batch, run both sides forward in the configured similarity mode, apply the
// temperature-scaled symmetric loss, backpropagate into the text tower, both
// heads, the reducer and the temperature, then take one LAMB step under the
// warmup+cosine schedule. Captions pair with embedding rows positionally;
// counts must match and ids must be unique. Per-step JSONL lines {step, lr,
// loss, tau} (plus periodic validation lines) go to log_stream when given.
TrainResult lit_train(const WkebFile& images, const std::vector<Caption>& captions,
                      const tokenizer::Vocab& vocab, const TrainConfig& cfg,
                      model::ModelParams<float>& params, LambState<float>& opt,
                      std::ostream* log_stream = nullptr);

}  // namespace wukong::train
