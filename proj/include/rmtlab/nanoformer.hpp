#pragma once

// A small encoder-decoder transformer in 64-bit floating point with
// hand-written backpropagation.
//
// Architecture: learned token + position embeddings, pre-norm residual blocks
// (LayerNorm -> sublayer -> add), multi-head self-attention (causal in the
// decoder), encoder-decoder cross-attention, GELU feed-forward, a final
// LayerNorm on each stack and an untied output projection.
//
// Parameter count, with D = dim, F = ffn_mult * D, Vs/Vt the vocabularies and
// Ls/Lt the maximum lengths:
//   embeddings      (Vs + Ls + Vt + Lt) * D
//   encoder layer   4D^2 + 4D  (attention)  + 2DF + F + D (ffn) + 4D (two norms)
//   decoder layer   8D^2 + 8D  (two attns)  + 2DF + F + D (ffn) + 6D (three norms)
//   final norms     4D
//   output          D * Vt + Vt

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace rmtlab::nanoformer {

struct ModelConfig {
    std::size_t enc_layers = 2;
    std::size_t dec_layers = 1;
    std::size_t dim = 64;
    std::size_t heads = 4;
    std::size_t ffn_mult = 4;
    std::size_t src_vocab = 0;
    std::size_t tgt_vocab = 0;
    std::size_t max_src_len = 0;
    std::size_t max_tgt_len = 0;  // decoder positions: target tokens + 1
    std::uint64_t seed = 0;

    std::size_t head_dim() const { return dim / heads; }
    void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct TrainConfig {
    double lr_max = 1e-4;
    std::size_t batch = 64;
    std::size_t warmup_steps = 10000;
    double cosine_period = 4'000'000;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t max_steps = 0;
    std::size_t eval_every = 0;  // in steps; 0 disables periodic evaluation
    double clip_norm = 0.0;      // global gradient-norm clip; 0 disables

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Linear warmup to lr_max, then 0.5 * lr_max * (1 + cos(2 pi (step - warmup) / period)).
double lr_schedule(std::size_t step, const TrainConfig& cfg);

struct TensorInfo {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
};

struct AttnIdx {
    std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
};
struct NormIdx {
    std::size_t gain, bias;
};
struct FfnIdx {
    std::size_t w1, b1, w2, b2;
};
struct EncoderLayerIdx {
    NormIdx norm1;
    AttnIdx attn;
    NormIdx norm2;
    FfnIdx ffn;
};
struct DecoderLayerIdx {
    NormIdx norm1;
    AttnIdx self_attn;
    NormIdx norm2;
    AttnIdx cross_attn;
    NormIdx norm3;
    FfnIdx ffn;
};

// Offsets of every tensor inside the flat parameter vector, in declaration order.
struct Layout {
    std::size_t src_tok = 0, src_pos = 0, tgt_tok = 0, tgt_pos = 0;
    std::vector<EncoderLayerIdx> encoder;
    NormIdx encoder_norm{};
    std::vector<DecoderLayerIdx> decoder;
    NormIdx decoder_norm{};
    std::size_t out_w = 0, out_b = 0;
    std::vector<TensorInfo> tensors;
    std::size_t total = 0;
};

Layout make_layout(const ModelConfig& cfg);

class Model {
public:
    // Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero, norm
    // gains one; deterministic in cfg.seed.
    explicit Model(const ModelConfig& cfg);

    const ModelConfig& config() const noexcept { return cfg_; }
    const Layout& layout() const noexcept { return layout_; }
    std::span<double> params() noexcept { return params_; }
    std::span<const double> params() const noexcept { return params_; }
    std::size_t param_count() const noexcept { return params_.size(); }

private:
    ModelConfig cfg_;
    Layout layout_;
    std::vector<double> params_;
};

// One training pair; tgt excludes <bos>/<eos>.
struct Example {
    std::vector<int> src;
    std::vector<int> tgt;
};

// Padded batch. dec_in = <bos> tgt..., labels = tgt... <eos>; padding is kPad
// and padded label positions are excluded from the loss.
struct Batch {
    std::size_t size = 0;
    std::size_t src_len = 0;
    std::size_t tgt_len = 0;
    std::vector<int> src;
    std::vector<int> dec_in;
    std::vector<int> labels;
};

Batch make_batch(std::span<const Example> examples, const ModelConfig& cfg);

// Mean token cross-entropy over non-pad label positions.
double forward_loss(const Model& model, const Batch& batch);
// Same loss; `grad` (param_count entries) is overwritten with d loss / d params.
double loss_and_grad(const Model& model, const Batch& batch, std::span<double> grad);
// Decoder logits, batch.size * tgt_len * tgt_vocab, row-major.
std::vector<double> decoder_logits(const Model& model, const Batch& batch);

struct AdamState {
    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
    std::vector<double> m;
    std::vector<double> v;
    std::size_t t = 0;
};

// Exact gradients, Adam update at lr_schedule(step). Throws TrainingDivergence
// on a non-finite loss or gradient, leaving the parameters untouched.
double train_step(Model& model, AdamState& opt, const Batch& batch, std::size_t step,
                  const TrainConfig& cfg);

// Argmax decoding until <eos> (not included) or max_len tokens.
std::vector<int> greedy_decode(const Model& model, std::span<const int> src, std::size_t max_len);
std::vector<std::vector<int>> greedy_decode_batch(const Model& model,
                                                  std::span<const std::vector<int>> srcs,
                                                  std::size_t max_len);

struct Checkpoint {
    ModelConfig config;
    std::size_t step = 0;
    nlohmann::json meta;
    std::vector<double> params;
};

// File layout: the line "RMTLAB-CKPT 1\n", a little-endian u64 header length,
// the JSON header {config, tensors:[{name, shape}], step, param_count, meta},
// then param_count little-endian IEEE-754 doubles.
void save_checkpoint(const std::filesystem::path& path, const Model& model, std::size_t step,
                     const nlohmann::json& meta = nlohmann::json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);
Model model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace rmtlab::nanoformer
