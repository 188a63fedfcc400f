#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>

#include <omp.h>

#include "forward.hpp"
#include "rmtlab/codec.hpp"
#include "rmtlab/error.hpp"
#include "rmtlab/kernels.hpp"
#include "rmtlab/rng.hpp"

namespace rmtlab::nanoformer {

void ModelConfig::validate() const {
    if (enc_layers < 1 || dec_layers < 1) throw PreconditionError("need at least one layer per stack");
    if (dim == 0 || heads == 0 || dim % heads != 0)
        throw PreconditionError("dim must be a positive multiple of heads");
    if (ffn_mult == 0) throw PreconditionError("ffn_mult must be positive");
    if (src_vocab < 3 || tgt_vocab < 3) throw PreconditionError("vocabularies must hold the special tokens");
    if (max_src_len == 0 || max_tgt_len == 0) throw PreconditionError("maximum lengths must be positive");
}

nlohmann::json to_json(const ModelConfig& c) {
    return {{"enc_layers", c.enc_layers}, {"dec_layers", c.dec_layers}, {"dim", c.dim},
            {"heads", c.heads},           {"ffn_mult", c.ffn_mult},     {"src_vocab", c.src_vocab},
            {"tgt_vocab", c.tgt_vocab},   {"max_src_len", c.max_src_len},
            {"max_tgt_len", c.max_tgt_len}, {"seed", c.seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.enc_layers = j.value("enc_layers", c.enc_layers);
    c.dec_layers = j.value("dec_layers", c.dec_layers);
    c.dim = j.value("dim", c.dim);
    c.heads = j.value("heads", c.heads);
    c.ffn_mult = j.value("ffn_mult", c.ffn_mult);
    c.src_vocab = j.value("src_vocab", c.src_vocab);
    c.tgt_vocab = j.value("tgt_vocab", c.tgt_vocab);
    c.max_src_len = j.value("max_src_len", c.max_src_len);
    c.max_tgt_len = j.value("max_tgt_len", c.max_tgt_len);
    c.seed = j.value("seed", c.seed);
    return c;
}

Layout make_layout(const ModelConfig& cfg) {
    cfg.validate();
    Layout L;
    const std::size_t D = cfg.dim;
    const std::size_t F = cfg.ffn_mult * D;
    auto add = [&](std::string name, std::vector<std::size_t> shape) {
        std::size_t size = 1;
        for (auto s : shape) size *= s;
        L.tensors.push_back({std::move(name), std::move(shape), L.total, size});
        L.total += size;
        return L.tensors.back().offset;
    };
    auto norm = [&](const std::string& p) { return NormIdx{add(p + ".gain", {D}), add(p + ".bias", {D})}; };
    auto attn = [&](const std::string& p) {
        AttnIdx a{};
        a.wq = add(p + ".wq", {D, D});
        a.bq = add(p + ".bq", {D});
        a.wk = add(p + ".wk", {D, D});
        a.bk = add(p + ".bk", {D});
        a.wv = add(p + ".wv", {D, D});
        a.bv = add(p + ".bv", {D});
        a.wo = add(p + ".wo", {D, D});
        a.bo = add(p + ".bo", {D});
        return a;
    };
    auto ffn = [&](const std::string& p) {
        return FfnIdx{add(p + ".w1", {D, F}), add(p + ".b1", {F}), add(p + ".w2", {F, D}),
                      add(p + ".b2", {D})};
    };

    L.src_tok = add("src_tok_emb", {cfg.src_vocab, D});
    L.src_pos = add("src_pos_emb", {cfg.max_src_len, D});
    for (std::size_t l = 0; l < cfg.enc_layers; ++l) {
        const std::string p = "enc" + std::to_string(l);
        EncoderLayerIdx e{};
        e.norm1 = norm(p + ".norm1");
        e.attn = attn(p + ".attn");
        e.norm2 = norm(p + ".norm2");
        e.ffn = ffn(p + ".ffn");
        L.encoder.push_back(e);
    }
    L.encoder_norm = norm("enc.norm");
    L.tgt_tok = add("tgt_tok_emb", {cfg.tgt_vocab, D});
    L.tgt_pos = add("tgt_pos_emb", {cfg.max_tgt_len, D});
    for (std::size_t l = 0; l < cfg.dec_layers; ++l) {
        const std::string p = "dec" + std::to_string(l);
        DecoderLayerIdx d{};
        d.norm1 = norm(p + ".norm1");
        d.self_attn = attn(p + ".self_attn");
        d.norm2 = norm(p + ".norm2");
        d.cross_attn = attn(p + ".cross_attn");
        d.norm3 = norm(p + ".norm3");
        d.ffn = ffn(p + ".ffn");
        L.decoder.push_back(d);
    }
    L.decoder_norm = norm("dec.norm");
    L.out_w = add("out.w", {D, cfg.tgt_vocab});
    L.out_b = add("out.b", {cfg.tgt_vocab});
    return L;
}

Model::Model(const ModelConfig& cfg) : cfg_(cfg), layout_(make_layout(cfg)), params_(layout_.total, 0.0) {
    for (std::size_t t = 0; t < layout_.tensors.size(); ++t) {
        const auto& info = layout_.tensors[t];
        double* p = params_.data() + info.offset;
        const bool is_gain = info.name.ends_with(".gain");
        if (info.shape.size() == 1) {
            std::fill(p, p + info.size, is_gain ? 1.0 : 0.0);
            continue;
        }
        const double fan_in = static_cast<double>(info.shape[0]);
        const double fan_out = static_cast<double>(info.shape[1]);
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        CounterRng rng(cfg.seed, t, 7);
        for (std::size_t i = 0; i < info.size; ++i) p[i] = rng.uniform(-limit, limit);
    }
}

namespace detail {

namespace {

constexpr double kNormEps = 1e-5;

void linear_forward(const double* x, std::size_t rows, std::size_t in, std::size_t out,
                    const double* w, const double* b, double* y) {
    kernels::gemm_nn(rows, out, in, x, w, y, false);
    for (std::size_t r = 0; r < rows; ++r) {
        double* yr = y + r * out;
        for (std::size_t j = 0; j < out; ++j) yr[j] += b[j];
    }
}

// dx += dy W^T (when dx != nullptr), dW += x^T dy, db += colsum(dy).
void linear_backward(const double* x, std::size_t rows, std::size_t in, std::size_t out,
                     const double* w, const double* dy, double* dx, double* dw, double* db) {
    if (dx) kernels::gemm_nt(rows, in, out, dy, w, dx, true);
    kernels::gemm_tn(rows, out, in, x, dy, dw, true);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* dyr = dy + r * out;
        for (std::size_t j = 0; j < out; ++j) db[j] += dyr[j];
    }
}

double normal_cdf(double x) { return 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 * 0.5)); }

// d/dx x*cdf(x), given cdf(x) from the forward pass.
double gelu_grad(double x, double cdf) {
    const double pdf = std::exp(-0.5 * x * x) * (std::numbers::inv_sqrtpi * std::numbers::sqrt2 * 0.5);
    return cdf + x * pdf;
}

}  // namespace

void norm_forward(const double* x, std::size_t rows, std::size_t d, const double* gain,
                  const double* bias, NormCache& c) {
    c.rows = rows;
    c.xhat.resize(rows * d);
    c.out.resize(rows * d);
    c.rstd.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x + r * d;
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += xr[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= static_cast<double>(d);
        const double rstd = 1.0 / std::sqrt(var + kNormEps);
        c.rstd[r] = rstd;
        double* xh = c.xhat.data() + r * d;
        double* o = c.out.data() + r * d;
        for (std::size_t j = 0; j < d; ++j) {
            xh[j] = (xr[j] - mean) * rstd;
            o[j] = xh[j] * gain[j] + bias[j];
        }
    }
}

void norm_backward(const NormCache& c, std::size_t d, const double* gain, const double* dy,
                   double* dx, double* dgain, double* dbias) {
    std::vector<double> dxh(d);
    for (std::size_t r = 0; r < c.rows; ++r) {
        const double* dyr = dy + r * d;
        const double* xh = c.xhat.data() + r * d;
        double mean_dxh = 0.0, mean_dxh_xh = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            dxh[j] = dyr[j] * gain[j];
            mean_dxh += dxh[j];
            mean_dxh_xh += dxh[j] * xh[j];
            dgain[j] += dyr[j] * xh[j];
            dbias[j] += dyr[j];
        }
        mean_dxh /= static_cast<double>(d);
        mean_dxh_xh /= static_cast<double>(d);
        double* dxr = dx + r * d;
        for (std::size_t j = 0; j < d; ++j)
            dxr[j] += c.rstd[r] * (dxh[j] - mean_dxh - xh[j] * mean_dxh_xh);
    }
}

void attention_forward(const double* xq, std::size_t tq, const double* xkv, std::size_t tk,
                       std::size_t batch, const AttnIdx& idx, const double* P, const Shape& s,
                       bool causal, const std::vector<char>* key_valid, AttnCache& c,
                       double* y) {
    const std::size_t D = s.dim, H = s.heads, dh = D / H;
    const std::size_t rq = batch * tq, rk = batch * tk;
    c.tq = tq;
    c.tk = tk;
    c.batch = batch;
    c.causal = causal;
    c.q.resize(rq * D);
    c.k.resize(rk * D);
    c.v.resize(rk * D);
    c.ctx.assign(rq * D, 0.0);
    c.probs.assign(batch * H * tq * tk, 0.0);
    linear_forward(xq, rq, D, D, P + idx.wq, P + idx.bq, c.q.data());
    linear_forward(xkv, rk, D, D, P + idx.wk, P + idx.bk, c.k.data());
    linear_forward(xkv, rk, D, D, P + idx.wv, P + idx.bv, c.v.data());
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    const auto nb = static_cast<std::int64_t>(batch);
#pragma omp parallel for num_threads(kernels::threads()) schedule(static)
    for (std::int64_t bb = 0; bb < nb; ++bb) {
        const auto b = static_cast<std::size_t>(bb);
        std::vector<double> sc(tk);
        for (std::size_t h = 0; h < H; ++h) {
            for (std::size_t t = 0; t < tq; ++t) {
                const double* qt = c.q.data() + (b * tq + t) * D + h * dh;
                const std::size_t jmax = causal ? std::min(t + 1, tk) : tk;
                double mx = -std::numeric_limits<double>::infinity();
                for (std::size_t j = 0; j < jmax; ++j) {
                    if (key_valid && !(*key_valid)[b * tk + j]) continue;
                    const double* kj = c.k.data() + (b * tk + j) * D + h * dh;
                    double dot = 0.0;
                    for (std::size_t e = 0; e < dh; ++e) dot += qt[e] * kj[e];
                    sc[j] = dot * scale;
                    mx = std::max(mx, sc[j]);
                }
                double* pr = c.probs.data() + ((b * H + h) * tq + t) * tk;
                double sum = 0.0;
                for (std::size_t j = 0; j < jmax; ++j) {
                    if (key_valid && !(*key_valid)[b * tk + j]) continue;
                    pr[j] = std::exp(sc[j] - mx);
                    sum += pr[j];
                }
                if (sum == 0.0) continue;
                double* ct = c.ctx.data() + (b * tq + t) * D + h * dh;
                for (std::size_t j = 0; j < jmax; ++j) {
                    if (pr[j] == 0.0) continue;
                    pr[j] /= sum;
                    const double* vj = c.v.data() + (b * tk + j) * D + h * dh;
                    for (std::size_t e = 0; e < dh; ++e) ct[e] += pr[j] * vj[e];
                }
            }
        }
    }
    linear_forward(c.ctx.data(), rq, D, D, P + idx.wo, P + idx.bo, y);
}

void attention_backward(const AttnCache& c, const double* xq, const double* xkv, const AttnIdx& idx,
                        const double* P, double* G, const Shape& s, const double* dy, double* dxq,
                        double* dxkv) {
    const std::size_t D = s.dim, H = s.heads, dh = D / H;
    const std::size_t tq = c.tq, tk = c.tk, batch = c.batch;
    const std::size_t rq = batch * tq, rk = batch * tk;
    std::vector<double> dctx(rq * D, 0.0);
    linear_backward(c.ctx.data(), rq, D, D, P + idx.wo, dy, dctx.data(), G + idx.wo, G + idx.bo);

    std::vector<double> dq(rq * D, 0.0), dk(rk * D, 0.0), dv(rk * D, 0.0);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const auto nb = static_cast<std::int64_t>(batch);
#pragma omp parallel for num_threads(kernels::threads()) schedule(static)
    for (std::int64_t bb = 0; bb < nb; ++bb) {
        const auto b = static_cast<std::size_t>(bb);
        std::vector<double> dp(tk);
        for (std::size_t h = 0; h < H; ++h) {
            for (std::size_t t = 0; t < tq; ++t) {
                const double* pr = c.probs.data() + ((b * H + h) * tq + t) * tk;
                const double* dct = dctx.data() + (b * tq + t) * D + h * dh;
                const double* qt = c.q.data() + (b * tq + t) * D + h * dh;
                double* dqt = dq.data() + (b * tq + t) * D + h * dh;
                const std::size_t jmax = c.causal ? std::min(t + 1, tk) : tk;
                double weighted = 0.0;
                for (std::size_t j = 0; j < jmax; ++j) {
                    if (pr[j] == 0.0) {
                        dp[j] = 0.0;
                        continue;
                    }
                    const double* vj = c.v.data() + (b * tk + j) * D + h * dh;
                    double* dvj = dv.data() + (b * tk + j) * D + h * dh;
                    double d = 0.0;
                    for (std::size_t e = 0; e < dh; ++e) {
                        d += dct[e] * vj[e];
                        dvj[e] += pr[j] * dct[e];
                    }
                    dp[j] = d;
                    weighted += pr[j] * d;
                }
                for (std::size_t j = 0; j < jmax; ++j) {
                    if (pr[j] == 0.0) continue;
                    const double ds = pr[j] * (dp[j] - weighted) * scale;
                    const double* kj = c.k.data() + (b * tk + j) * D + h * dh;
                    double* dkj = dk.data() + (b * tk + j) * D + h * dh;
                    for (std::size_t e = 0; e < dh; ++e) {
                        dqt[e] += ds * kj[e];
                        dkj[e] += ds * qt[e];
                    }
                }
            }
        }
    }
    linear_backward(xq, rq, D, D, P + idx.wq, dq.data(), dxq, G + idx.wq, G + idx.bq);
    linear_backward(xkv, rk, D, D, P + idx.wk, dk.data(), dxkv, G + idx.wk, G + idx.bk);
    linear_backward(xkv, rk, D, D, P + idx.wv, dv.data(), dxkv, G + idx.wv, G + idx.bv);
}

void ffn_forward(const double* x, std::size_t rows, const FfnIdx& idx, const double* P,
                 const Shape& s, FfnCache& c, double* y) {
    const std::size_t D = s.dim, F = s.ffn;
    c.pre.resize(rows * F);
    c.cdf.resize(rows * F);
    c.act.resize(rows * F);
    linear_forward(x, rows, D, F, P + idx.w1, P + idx.b1, c.pre.data());
    for (std::size_t i = 0; i < c.pre.size(); ++i) {
        c.cdf[i] = normal_cdf(c.pre[i]);
        c.act[i] = c.pre[i] * c.cdf[i];
    }
    linear_forward(c.act.data(), rows, F, D, P + idx.w2, P + idx.b2, y);
}

void ffn_backward(const FfnCache& c, const double* x, std::size_t rows, const FfnIdx& idx,
                  const double* P, double* G, const Shape& s, const double* dy, double* dx) {
    const std::size_t D = s.dim, F = s.ffn;
    std::vector<double> dact(rows * F, 0.0);
    linear_backward(c.act.data(), rows, F, D, P + idx.w2, dy, dact.data(), G + idx.w2, G + idx.b2);
    for (std::size_t i = 0; i < dact.size(); ++i) dact[i] *= gelu_grad(c.pre[i], c.cdf[i]);
    linear_backward(x, rows, D, F, P + idx.w1, dact.data(), dx, G + idx.w1, G + idx.b1);
}

Shape shape_of(const ModelConfig& cfg) {
    return {cfg.dim, cfg.heads, cfg.ffn_mult * cfg.dim, cfg.tgt_vocab};
}

void check_tokens(std::span<const int> ids, std::size_t vocab) {
    for (int id : ids)
        if (id < 0 || static_cast<std::size_t>(id) >= vocab)
            throw PreconditionError("token id " + std::to_string(id) + " outside model vocabulary");
}

EncoderState encode(const Model& model, std::span<const int> src, std::size_t batch,
                    std::size_t src_len) {
    const auto& cfg = model.config();
    const auto& L = model.layout();
    const double* P = model.params().data();
    const Shape s = shape_of(cfg);
    const std::size_t D = cfg.dim, R = batch * src_len;
    if (src_len > cfg.max_src_len) throw PreconditionError("source longer than max_src_len");
    check_tokens(src, cfg.src_vocab);

    EncoderState st;
    st.batch = batch;
    st.src_len = src_len;
    st.key_valid.resize(R);
    for (std::size_t i = 0; i < R; ++i) st.key_valid[i] = src[i] != codec::kPad;
    st.x0.resize(R * D);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t t = 0; t < src_len; ++t) {
            const double* tok = P + L.src_tok + static_cast<std::size_t>(src[b * src_len + t]) * D;
            const double* pos = P + L.src_pos + t * D;
            double* x = st.x0.data() + (b * src_len + t) * D;
            for (std::size_t j = 0; j < D; ++j) x[j] = tok[j] + pos[j];
        }

    std::vector<double> x = st.x0, tmp(R * D);
    st.layers.resize(cfg.enc_layers);
    for (std::size_t l = 0; l < cfg.enc_layers; ++l) {
        auto& lc = st.layers[l];
        const auto& idx = L.encoder[l];
        norm_forward(x.data(), R, D, P + idx.norm1.gain, P + idx.norm1.bias, lc.norm1);
        attention_forward(lc.norm1.out.data(), src_len, lc.norm1.out.data(), src_len, batch, idx.attn,
                          P, s, false, &st.key_valid, lc.attn, tmp.data());
        for (std::size_t i = 0; i < R * D; ++i) x[i] += tmp[i];
        norm_forward(x.data(), R, D, P + idx.norm2.gain, P + idx.norm2.bias, lc.norm2);
        ffn_forward(lc.norm2.out.data(), R, idx.ffn, P, s, lc.ffn, tmp.data());
        for (std::size_t i = 0; i < R * D; ++i) x[i] += tmp[i];
    }
    norm_forward(x.data(), R, D, P + L.encoder_norm.gain, P + L.encoder_norm.bias, st.final_norm);
    return st;
}

DecoderState decode(const Model& model, const EncoderState& enc, std::span<const int> dec_in,
                    std::size_t tgt_len) {
    const auto& cfg = model.config();
    const auto& L = model.layout();
    const double* P = model.params().data();
    const Shape s = shape_of(cfg);
    const std::size_t D = cfg.dim, V = cfg.tgt_vocab, batch = enc.batch, R = batch * tgt_len;
    if (tgt_len > cfg.max_tgt_len) throw PreconditionError("target longer than max_tgt_len");
    check_tokens(dec_in, V);

    DecoderState st;
    st.tgt_len = tgt_len;
    st.x0.resize(R * D);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t t = 0; t < tgt_len; ++t) {
            const double* tok = P + L.tgt_tok + static_cast<std::size_t>(dec_in[b * tgt_len + t]) * D;
            const double* pos = P + L.tgt_pos + t * D;
            double* x = st.x0.data() + (b * tgt_len + t) * D;
            for (std::size_t j = 0; j < D; ++j) x[j] = tok[j] + pos[j];
        }

    const double* mem = enc.final_norm.out.data();
    std::vector<double> x = st.x0, tmp(R * D);
    st.layers.resize(cfg.dec_layers);
    for (std::size_t l = 0; l < cfg.dec_layers; ++l) {
        auto& lc = st.layers[l];
        const auto& idx = L.decoder[l];
        norm_forward(x.data(), R, D, P + idx.norm1.gain, P + idx.norm1.bias, lc.norm1);
        attention_forward(lc.norm1.out.data(), tgt_len, lc.norm1.out.data(), tgt_len, batch,
                          idx.self_attn, P, s, true, nullptr, lc.self_attn, tmp.data());
        for (std::size_t i = 0; i < R * D; ++i) x[i] += tmp[i];
        norm_forward(x.data(), R, D, P + idx.norm2.gain, P + idx.norm2.bias, lc.norm2);
        attention_forward(lc.norm2.out.data(), tgt_len, mem, enc.src_len, batch, idx.cross_attn, P, s,
                          false, &enc.key_valid, lc.cross_attn, tmp.data());
        for (std::size_t i = 0; i < R * D; ++i) x[i] += tmp[i];
        norm_forward(x.data(), R, D, P + idx.norm3.gain, P + idx.norm3.bias, lc.norm3);
        ffn_forward(lc.norm3.out.data(), R, idx.ffn, P, s, lc.ffn, tmp.data());
        for (std::size_t i = 0; i < R * D; ++i) x[i] += tmp[i];
    }
    norm_forward(x.data(), R, D, P + L.decoder_norm.gain, P + L.decoder_norm.bias, st.final_norm);
    st.logits.resize(R * V);
    linear_forward(st.final_norm.out.data(), R, D, V, P + L.out_w, P + L.out_b, st.logits.data());
    return st;
}

double cross_entropy(const std::vector<double>& logits, std::span<const int> labels, std::size_t vocab,
                     std::vector<double>* dlogits) {
    const std::size_t rows = labels.size();
    std::size_t count = 0;
    for (int l : labels) count += l != codec::kPad ? 1 : 0;
    if (count == 0) throw PreconditionError("batch has no target tokens");
    const double inv = 1.0 / static_cast<double>(count);
    std::vector<double> row_loss(rows, 0.0);
    if (dlogits) dlogits->resize(rows * vocab);

    const auto nr = static_cast<std::int64_t>(rows);
#pragma omp parallel for num_threads(kernels::threads()) schedule(static)
    for (std::int64_t rr = 0; rr < nr; ++rr) {
        const auto r = static_cast<std::size_t>(rr);
        const int label = labels[r];
        double* dr = dlogits ? dlogits->data() + r * vocab : nullptr;
        if (label == codec::kPad) {
            if (dr) std::fill(dr, dr + vocab, 0.0);
            continue;
        }
        const double* lr = logits.data() + r * vocab;
        const double mx = *std::max_element(lr, lr + vocab);
        double sum = 0.0;
        if (dr) {
            for (std::size_t j = 0; j < vocab; ++j) sum += (dr[j] = std::exp(lr[j] - mx));
            const double f = inv / sum;
            for (std::size_t j = 0; j < vocab; ++j) dr[j] *= f;
            dr[label] -= inv;
        } else {
            for (std::size_t j = 0; j < vocab; ++j) sum += std::exp(lr[j] - mx);
        }
        row_loss[r] = mx + std::log(sum) - lr[label];
    }
    // Summing in sorted order makes the loss independent of example order.
    std::sort(row_loss.begin(), row_loss.end());
    double total = 0.0;
    for (double x : row_loss) total += x;
    return total * inv;
}

void backward(const Model& model, const Batch& batch, const EncoderState& enc, const DecoderState& dec,
              const std::vector<double>& dlogits, std::span<double> grad) {
    const auto& cfg = model.config();
    const auto& L = model.layout();
    const double* P = model.params().data();
    double* G = grad.data();
    const Shape s = shape_of(cfg);
    const std::size_t D = cfg.dim, V = cfg.tgt_vocab;
    const std::size_t Rd = batch.size * batch.tgt_len, Re = batch.size * batch.src_len;

    std::vector<double> dx(Rd * D, 0.0);
    linear_backward(dec.final_norm.out.data(), Rd, D, V, P + L.out_w, dlogits.data(), nullptr, G + L.out_w,
                    G + L.out_b);
    {
        std::vector<double> dh(Rd * D, 0.0);
        kernels::gemm_nt(Rd, D, V, dlogits.data(), P + L.out_w, dh.data(), false);
        norm_backward(dec.final_norm, D, P + L.decoder_norm.gain, dh.data(), dx.data(),
                      G + L.decoder_norm.gain, G + L.decoder_norm.bias);
    }

    std::vector<double> dmem(Re * D, 0.0), dsub(Rd * D);
    const double* mem = enc.final_norm.out.data();
    for (std::size_t l = cfg.dec_layers; l-- > 0;) {
        const auto& lc = dec.layers[l];
        const auto& idx = L.decoder[l];
        // x_out = x_mid2 + ffn(norm3(x_mid2))
        std::fill(dsub.begin(), dsub.end(), 0.0);
        ffn_backward(lc.ffn, lc.norm3.out.data(), Rd, idx.ffn, P, G, s, dx.data(), dsub.data());
        norm_backward(lc.norm3, D, P + idx.norm3.gain, dsub.data(), dx.data(), G + idx.norm3.gain,
                      G + idx.norm3.bias);
        // x_mid2 = x_mid1 + cross(norm2(x_mid1), mem)
        std::fill(dsub.begin(), dsub.end(), 0.0);
        attention_backward(lc.cross_attn, lc.norm2.out.data(), mem, idx.cross_attn, P, G, s, dx.data(),
                           dsub.data(), dmem.data());
        norm_backward(lc.norm2, D, P + idx.norm2.gain, dsub.data(), dx.data(), G + idx.norm2.gain,
                      G + idx.norm2.bias);
        // x_mid1 = x_in + self(norm1(x_in))
        std::fill(dsub.begin(), dsub.end(), 0.0);
        attention_backward(lc.self_attn, lc.norm1.out.data(), lc.norm1.out.data(), idx.self_attn, P, G, s,
                           dx.data(), dsub.data(), dsub.data());
        norm_backward(lc.norm1, D, P + idx.norm1.gain, dsub.data(), dx.data(), G + idx.norm1.gain,
                      G + idx.norm1.bias);
    }
    for (std::size_t b = 0; b < batch.size; ++b)
        for (std::size_t t = 0; t < batch.tgt_len; ++t) {
            const double* d = dx.data() + (b * batch.tgt_len + t) * D;
            double* gt = G + L.tgt_tok + static_cast<std::size_t>(batch.dec_in[b * batch.tgt_len + t]) * D;
            double* gp = G + L.tgt_pos + t * D;
            for (std::size_t j = 0; j < D; ++j) {
                gt[j] += d[j];
                gp[j] += d[j];
            }
        }

    std::vector<double> ex(Re * D, 0.0), esub(Re * D);
    norm_backward(enc.final_norm, D, P + L.encoder_norm.gain, dmem.data(), ex.data(),
                  G + L.encoder_norm.gain, G + L.encoder_norm.bias);
    for (std::size_t l = cfg.enc_layers; l-- > 0;) {
        const auto& lc = enc.layers[l];
        const auto& idx = L.encoder[l];
        std::fill(esub.begin(), esub.end(), 0.0);
        ffn_backward(lc.ffn, lc.norm2.out.data(), Re, idx.ffn, P, G, s, ex.data(), esub.data());
        norm_backward(lc.norm2, D, P + idx.norm2.gain, esub.data(), ex.data(), G + idx.norm2.gain,
                      G + idx.norm2.bias);
        std::fill(esub.begin(), esub.end(), 0.0);
        attention_backward(lc.attn, lc.norm1.out.data(), lc.norm1.out.data(), idx.attn, P, G, s, ex.data(),
                           esub.data(), esub.data());
        norm_backward(lc.norm1, D, P + idx.norm1.gain, esub.data(), ex.data(), G + idx.norm1.gain,
                      G + idx.norm1.bias);
    }
    for (std::size_t b = 0; b < batch.size; ++b)
        for (std::size_t t = 0; t < batch.src_len; ++t) {
            const double* d = ex.data() + (b * batch.src_len + t) * D;
            double* gt = G + L.src_tok + static_cast<std::size_t>(batch.src[b * batch.src_len + t]) * D;
            double* gp = G + L.src_pos + t * D;
            for (std::size_t j = 0; j < D; ++j) {
                gt[j] += d[j];
                gp[j] += d[j];
            }
        }
}

}  // namespace detail

Batch make_batch(std::span<const Example> examples, const ModelConfig& cfg) {
    if (examples.empty()) throw PreconditionError("empty batch");
    Batch b;
    b.size = examples.size();
    for (const auto& e : examples) {
        b.src_len = std::max(b.src_len, e.src.size());
        b.tgt_len = std::max(b.tgt_len, e.tgt.size() + 1);
    }
    if (b.src_len > cfg.max_src_len) throw PreconditionError("source longer than max_src_len");
    if (b.tgt_len > cfg.max_tgt_len) throw PreconditionError("target longer than max_tgt_len");
    b.src.assign(b.size * b.src_len, codec::kPad);
    b.dec_in.assign(b.size * b.tgt_len, codec::kPad);
    b.labels.assign(b.size * b.tgt_len, codec::kPad);
    for (std::size_t i = 0; i < b.size; ++i) {
        const auto& e = examples[i];
        if (e.src.empty()) throw PreconditionError("empty source sequence");
        std::copy(e.src.begin(), e.src.end(), b.src.begin() + static_cast<long>(i * b.src_len));
        b.dec_in[i * b.tgt_len] = codec::kBos;
        for (std::size_t t = 0; t < e.tgt.size(); ++t) {
            b.dec_in[i * b.tgt_len + t + 1] = e.tgt[t];
            b.labels[i * b.tgt_len + t] = e.tgt[t];
        }
        b.labels[i * b.tgt_len + e.tgt.size()] = codec::kEos;
    }
    return b;
}

double forward_loss(const Model& model, const Batch& batch) {
    const auto enc = detail::encode(model, batch.src, batch.size, batch.src_len);
    const auto dec = detail::decode(model, enc, batch.dec_in, batch.tgt_len);
    return detail::cross_entropy(dec.logits, batch.labels, model.config().tgt_vocab, nullptr);
}

double loss_and_grad(const Model& model, const Batch& batch, std::span<double> grad) {
    if (grad.size() != model.param_count()) throw PreconditionError("gradient buffer size mismatch");
    std::fill(grad.begin(), grad.end(), 0.0);
    const auto enc = detail::encode(model, batch.src, batch.size, batch.src_len);
    const auto dec = detail::decode(model, enc, batch.dec_in, batch.tgt_len);
    std::vector<double> dlogits;
    const double loss = detail::cross_entropy(dec.logits, batch.labels, model.config().tgt_vocab, &dlogits);
    detail::backward(model, batch, enc, dec, dlogits, grad);
    return loss;
}

std::vector<double> decoder_logits(const Model& model, const Batch& batch) {
    const auto enc = detail::encode(model, batch.src, batch.size, batch.src_len);
    return detail::decode(model, enc, batch.dec_in, batch.tgt_len).logits;
}

}  // namespace rmtlab::nanoformer
