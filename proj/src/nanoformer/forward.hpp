#pragma once

// Activation caches shared by the forward pass, backward pass and decoder.

#include <span>
#include <vector>

#include "rmtlab/nanoformer.hpp"

namespace rmtlab::nanoformer::detail {

struct Shape {
    std::size_t dim, heads, ffn, vocab;
};

struct NormCache {
    std::size_t rows = 0;
    std::vector<double> xhat, out, rstd;
};

struct AttnCache {
    std::size_t tq = 0, tk = 0, batch = 0;
    bool causal = false;
    std::vector<double> q, k, v, probs, ctx;
};

struct FfnCache {
    std::vector<double> pre, cdf, act;
};

struct EncoderLayerCache {
    NormCache norm1;
    AttnCache attn;
    NormCache norm2;
    FfnCache ffn;
};

struct DecoderLayerCache {
    NormCache norm1;
    AttnCache self_attn;
    NormCache norm2;
    AttnCache cross_attn;
    NormCache norm3;
    FfnCache ffn;
};

struct EncoderState {
    std::size_t batch = 0, src_len = 0;
    std::vector<char> key_valid;
    std::vector<double> x0;
    std::vector<EncoderLayerCache> layers;
    NormCache final_norm;  // out is the memory read by cross-attention
};

struct DecoderState {
    std::size_t tgt_len = 0;
    std::vector<double> x0;
    std::vector<DecoderLayerCache> layers;
    NormCache final_norm;
    std::vector<double> logits;
};

void norm_forward(const double* x, std::size_t rows, std::size_t d, const double* gain,
                  const double* bias, NormCache& c);
void norm_backward(const NormCache& c, std::size_t d, const double* gain, const double* dy,
                   double* dx, double* dgain, double* dbias);
void attention_forward(const double* xq, std::size_t tq, const double* xkv, std::size_t tk,
                       std::size_t batch, const AttnIdx& idx, const double* P, const Shape& s,
                       bool causal, const std::vector<char>* key_valid, AttnCache& c, double* y);
void attention_backward(const AttnCache& c, const double* xq, const double* xkv, const AttnIdx& idx,
                        const double* P, double* G, const Shape& s, const double* dy, double* dxq,
                        double* dxkv);
void ffn_forward(const double* x, std::size_t rows, const FfnIdx& idx, const double* P,
                 const Shape& s, FfnCache& c, double* y);
void ffn_backward(const FfnCache& c, const double* x, std::size_t rows, const FfnIdx& idx,
                  const double* P, double* G, const Shape& s, const double* dy, double* dx);

Shape shape_of(const ModelConfig& cfg);

EncoderState encode(const Model& model, std::span<const int> src, std::size_t batch,
                    std::size_t src_len);
DecoderState decode(const Model& model, const EncoderState& enc, std::span<const int> dec_in,
                    std::size_t tgt_len);
double cross_entropy(const std::vector<double>& logits, std::span<const int> labels,
                     std::size_t vocab, std::vector<double>* dlogits);
void backward(const Model& model, const Batch& batch, const EncoderState& enc,
              const DecoderState& dec, const std::vector<double>& dlogits, std::span<double> grad);

}  // namespace rmtlab::nanoformer::detail
