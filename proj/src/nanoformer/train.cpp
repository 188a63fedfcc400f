#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "forward.hpp"
#include "rmtlab/codec.hpp"
#include "rmtlab/error.hpp"

namespace rmtlab::nanoformer {

void TrainConfig::validate() const {
    if (warmup_steps < 1) throw PreconditionError("warmup_steps must be at least 1");
    if (!(cosine_period > 0.0)) throw PreconditionError("cosine_period must be positive");
    if (batch < 1) throw PreconditionError("batch must be positive");
    if (!(lr_max >= 0.0)) throw PreconditionError("lr_max must be non-negative");
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"lr_max", c.lr_max},       {"batch", c.batch},         {"warmup_steps", c.warmup_steps},
            {"cosine_period", c.cosine_period}, {"beta1", c.beta1}, {"beta2", c.beta2},
            {"epsilon", c.epsilon},     {"max_steps", c.max_steps}, {"eval_every", c.eval_every},
            {"clip_norm", c.clip_norm}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.lr_max = j.value("lr_max", c.lr_max);
    c.batch = j.value("batch", c.batch);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.cosine_period = j.value("cosine_period", c.cosine_period);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    return c;
}

double lr_schedule(std::size_t step, const TrainConfig& cfg) {
    if (step < cfg.warmup_steps)
        return cfg.lr_max * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
    const double phase = static_cast<double>(step - cfg.warmup_steps) / cfg.cosine_period;
    return 0.5 * cfg.lr_max * (1.0 + std::cos(2.0 * std::numbers::pi * phase));
}

double train_step(Model& model, AdamState& opt, const Batch& batch, std::size_t step,
                  const TrainConfig& cfg) {
    auto params = model.params();
    if (opt.m.size() != params.size()) throw PreconditionError("optimizer state does not match model");
    std::vector<double> grad(params.size());
    const double loss = loss_and_grad(model, batch, grad);
    double sq = 0.0;
    for (double g : grad) sq += g * g;
    if (!std::isfinite(loss) || !std::isfinite(sq))
        throw TrainingDivergence("non-finite loss or gradient at step " + std::to_string(step));
    double scale = 1.0;
    if (cfg.clip_norm > 0.0) {
        const double norm = std::sqrt(sq);
        if (norm > cfg.clip_norm) scale = cfg.clip_norm / norm;
    }

    const double lr = lr_schedule(step, cfg);
    ++opt.t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(opt.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(opt.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i] * scale;
        opt.m[i] = cfg.beta1 * opt.m[i] + (1.0 - cfg.beta1) * g;
        opt.v[i] = cfg.beta2 * opt.v[i] + (1.0 - cfg.beta2) * g * g;
        const double mhat = opt.m[i] / bc1;
        const double vhat = opt.v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
    return loss;
}

std::vector<std::vector<int>> greedy_decode_batch(const Model& model,
                                                  std::span<const std::vector<int>> srcs,
                                                  std::size_t max_len) {
    const auto& cfg = model.config();
    const std::size_t B = srcs.size();
    std::vector<std::vector<int>> out(B);
    if (B == 0 || max_len == 0) return out;
    max_len = std::min(max_len, cfg.max_tgt_len);

    std::size_t S = 0;
    for (const auto& s : srcs) S = std::max(S, s.size());
    std::vector<int> src(B * S, codec::kPad);
    for (std::size_t b = 0; b < B; ++b) std::copy(srcs[b].begin(), srcs[b].end(), src.begin() + static_cast<long>(b * S));
    const auto enc = detail::encode(model, src, B, S);

    const std::size_t V = cfg.tgt_vocab;
    std::vector<char> done(B, 0);
    std::size_t remaining = B;
    for (std::size_t step = 0; step < max_len && remaining > 0; ++step) {
        const std::size_t T = step + 1;
        std::vector<int> dec_in(B * T, codec::kPad);
        for (std::size_t b = 0; b < B; ++b) {
            dec_in[b * T] = codec::kBos;
            for (std::size_t t = 0; t < out[b].size() && t + 1 < T; ++t) dec_in[b * T + t + 1] = out[b][t];
        }
        const auto dec = detail::decode(model, enc, dec_in, T);
        for (std::size_t b = 0; b < B; ++b) {
            if (done[b]) continue;
            const double* row = dec.logits.data() + (b * T + step) * V;
            const int best = static_cast<int>(std::max_element(row, row + V) - row);
            if (best == codec::kEos) {
                done[b] = 1;
                --remaining;
            } else {
                out[b].push_back(best);
            }
        }
    }
    return out;
}

std::vector<int> greedy_decode(const Model& model, std::span<const int> src, std::size_t max_len) {
    std::vector<std::vector<int>> one{std::vector<int>(src.begin(), src.end())};
    return greedy_decode_batch(model, one, max_len).front();
}

namespace {

constexpr std::string_view kMagic = "RMTLAB-CKPT 1\n";

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model, std::size_t step,
                     const nlohmann::json& meta) {
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& t : model.layout().tensors) tensors.push_back({{"name", t.name}, {"shape", t.shape}});
    const nlohmann::json header{{"config", to_json(model.config())},
                                {"tensors", tensors},
                                {"step", step},
                                {"param_count", model.param_count()},
                                {"meta", meta}};
    const std::string text = header.dump();
    const std::uint64_t len = text.size();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    out.write(kMagic.data(), static_cast<std::streamsize>(kMagic.size()));
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    const auto p = model.params();
    out.write(reinterpret_cast<const char*>(p.data()), static_cast<std::streamsize>(p.size() * sizeof(double)));
    if (!out) throw Error("checkpoint write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint " + path.string());
    std::string magic(kMagic.size(), '\0');
    in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
    if (!in || magic != kMagic) throw Error(path.string() + " is not a checkpoint");
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    if (!in || len > (1u << 26)) throw Error("corrupt checkpoint header in " + path.string());
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw Error("truncated checkpoint header in " + path.string());

    Checkpoint ck;
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
        ck.config = model_config_from_json(header.at("config"));
        ck.step = header.at("step").get<std::size_t>();
        ck.meta = header.value("meta", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("bad checkpoint header: ") + e.what());
    }
    const Layout layout = make_layout(ck.config);
    const auto& tensors = header.at("tensors");
    if (tensors.size() != layout.tensors.size() || header.at("param_count").get<std::size_t>() != layout.total)
        throw Error("checkpoint tensor table does not match its config");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (tensors[i].at("name").get<std::string>() != layout.tensors[i].name ||
            tensors[i].at("shape").get<std::vector<std::size_t>>() != layout.tensors[i].shape)
            throw Error("checkpoint tensor " + layout.tensors[i].name + " has an unexpected shape");
    }
    ck.params.resize(layout.total);
    in.read(reinterpret_cast<char*>(ck.params.data()),
            static_cast<std::streamsize>(ck.params.size() * sizeof(double)));
    if (!in) throw Error("truncated parameter blob in " + path.string());
    if (in.peek() != std::char_traits<char>::eof()) throw Error("trailing bytes in " + path.string());
    return ck;
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
    Model m(ckpt.config);
    if (ckpt.params.size() != m.param_count()) throw Error("checkpoint parameter count mismatch");
    std::copy(ckpt.params.begin(), ckpt.params.end(), m.params().begin());
    return m;
}

}  // namespace rmtlab::nanoformer
