// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any fails.

#include <malloc.h>
#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "rmtlab/codec.hpp"
#include "rmtlab/datagen.hpp"
#include "rmtlab/ensembles.hpp"
#include "rmtlab/error.hpp"
#include "rmtlab/evalkit.hpp"
#include "rmtlab/kernels.hpp"
#include "rmtlab/nanoformer.hpp"
#include "rmtlab/oodlab.hpp"
#include "rmtlab/rng.hpp"

using namespace rmtlab;
using ensembles::Kind;

namespace {

// Tolerances.
constexpr std::size_t kCondDraws = 10000;
constexpr double kCondRelTol = 0.15;
constexpr double kMpRelTol = 0.30;
constexpr std::size_t kPositiveDraws = 100000;
constexpr double kPositiveSigmas = 3.0;
constexpr std::size_t kFidelityDraws = 1000;
constexpr double kFidelityTau = 0.05;
constexpr double kMaxDotBound = 1e-9;
constexpr double kCorruptAngle = 0.2;
constexpr double kCorruptScale = 1.2;
constexpr std::size_t kRoundTrips = 1000000;
constexpr double kCodecRelErr = 5e-3;
constexpr std::size_t kFuzzStrings = 100000;
constexpr double kGradRelErr = 1e-4;
constexpr std::size_t kGradParams = 200;
constexpr double kOverfitLoss = 0.05;
constexpr std::size_t kOverfitSteps = 2000;
constexpr std::size_t kLearnSampleBudget = 2000000;
constexpr double kLearnCpuSeconds = 30 * 60;
constexpr double kLearnTarget = 0.80;
constexpr double kGridExpected = 25.0;
constexpr double kGridBand = 10.0;

int g_workers = 1;
int g_failures = 0;

void report(int id, bool pass, const std::string& detail) {
    std::printf("criterion %d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

// 1 ----------------------------------------------------------------------

void condition_numbers() {
    struct Row {
        Kind kind;
        double median;
    };
    const Row rows[] = {{Kind::semicircle, 9.4}, {Kind::uniform, 6.3},         {Kind::gaussian, 9.0},
                        {Kind::laplace, 14.1},   {Kind::abs_semicircle, 9.5}, {Kind::abs_laplace, 14.3}};
    bool pass = true;
    std::string detail;
    for (const auto& r : rows) {
        ensembles::EnsembleConfig cfg;
        cfg.kind = r.kind;
        cfg.n = 5;
        cfg.seed = 1;
        const auto q = ensembles::condition_stats(cfg, kCondDraws, g_workers);
        const bool ok = std::abs(q.median - r.median) <= kCondRelTol * r.median;
        pass &= ok;
        detail += std::string(ensembles::name(r.kind)) + "=" + fmt("%.2f", q.median) + " ";
    }
    ensembles::EnsembleConfig mp;
    mp.kind = Kind::marchenko_pastur;
    mp.n = 5;
    mp.seed = 1;
    const auto q = ensembles::condition_stats(mp, kCondDraws, g_workers);
    pass &= std::abs(q.median - 190.0) <= kMpRelTol * 190.0;
    pass &= std::abs(q.p90 - 5293.0) <= kMpRelTol * 5293.0;
    detail += "marchenko_pastur median=" + fmt("%.0f", q.median) + " p90=" + fmt("%.0f", q.p90);
    report(1, pass, detail);
}

// 2 ----------------------------------------------------------------------

void positive_fractions() {
    bool pass = true;
    std::string detail;
    for (std::size_t n : {8u, 10u}) {
        ensembles::EnsembleConfig cfg;
        cfg.kind = Kind::gaussian;
        cfg.n = n;
        cfg.seed = 2;
        const double f = ensembles::positive_fraction(cfg, kPositiveDraws, g_workers);
        const double p = std::ldexp(1.0, -static_cast<int>(n));
        const double sd = std::sqrt(p * (1 - p) / static_cast<double>(kPositiveDraws));
        pass &= std::abs(f - p) <= kPositiveSigmas * sd;
        detail += "n=" + std::to_string(n) + " " + fmt("%.5f", f) + " (2^-n " + fmt("%.5f", p) + ", sd " +
                  fmt("%.5f", sd) + ") ";
    }
    report(2, pass, detail);
}

// 3 ----------------------------------------------------------------------

void metric_fidelity() {
    evalkit::ToleranceConfig tol;
    tol.tau = kFidelityTau;
    std::vector<evalkit::EvalRecord> exact(kFidelityDraws), corrupt(kFidelityDraws);
    std::vector<double> max_dot(kFidelityDraws);
    const auto& kinds = ensembles::table_kinds();
#pragma omp parallel for schedule(dynamic, 16) num_threads(g_workers)
    for (std::size_t i = 0; i < kFidelityDraws; ++i) {
        ensembles::EnsembleConfig cfg;
        cfg.kind = kinds[i % kinds.size()];
        cfg.n = 5;
        cfg.seed = 3;
        const auto m = linalg::SymMatrix::checked(ensembles::sample_matrix(cfg, i));
        const auto e = linalg::eig_sym(m);
        exact[i] = evalkit::eval_diagonalization(m, e.spectrum.values(), e.vectors, tol);
        max_dot[i] = evalkit::max_successive_dot(e.vectors);

        // Rotate two eigenvector columns, then stretch the column of the largest |eigenvalue|.
        auto rot = linalg::Matrix::identity(5);
        rot(1, 1) = rot(3, 3) = std::cos(kCorruptAngle);
        rot(1, 3) = -std::sin(kCorruptAngle);
        rot(3, 1) = std::sin(kCorruptAngle);
        auto h = e.vectors * rot;
        const auto vals = e.spectrum.values();
        const std::size_t big =
            std::abs(vals.front()) >= std::abs(vals.back()) ? 0 : vals.size() - 1;
        for (std::size_t r = 0; r < 5; ++r) h(r, big) *= kCorruptScale;
        corrupt[i] = evalkit::eval_diagonalization(m, vals, h, tol);
    }
    const auto good = evalkit::verifier_report(exact, tol);
    const auto bad = evalkit::verifier_report(corrupt, tol);
    const double worst_dot = *std::max_element(max_dot.begin(), max_dot.end());
    std::size_t predicted = 0, flagged = 0;
    for (const auto& r : exact) predicted += evalkit::predict_success(r, tol) ? 1 : 0;
    for (const auto& r : corrupt) flagged += !r.success && !evalkit::predict_success(r, tol) ? 1 : 0;
    const bool pass = good.accuracy == 1.0 && *good.unit_norm_rate == 1.0 && worst_dot < kMaxDotBound &&
                      predicted == kFidelityDraws && flagged == kFidelityDraws && *bad.agreement == 1.0;
    report(3, pass,
           "exact: accuracy " + fmt("%.4f", good.accuracy) + " unit-norm " + fmt("%.4f", *good.unit_norm_rate) +
               " max_dot " + fmt("%.2e", worst_dot) + " predicted " + std::to_string(predicted) +
               "; corrupted: flagged " + std::to_string(flagged) + " agreement " + fmt("%.4f", *bad.agreement));
}

// 4 ----------------------------------------------------------------------

std::string random_token(CounterRng& rng, codec::Scheme scheme) {
    const double u = rng.uniform();
    if (u < 0.7) {
        const int id = static_cast<int>(rng.uniform() * static_cast<double>(codec::vocab_size(scheme)));
        return codec::surface(scheme, id);
    }
    static const char kChars[] = "+-ME0123456789FV|x ";
    std::string s;
    const int len = 1 + static_cast<int>(rng.uniform() * 6);
    for (int i = 0; i < len; ++i) s += kChars[static_cast<int>(rng.uniform() * (sizeof kChars - 1))];
    return s;
}

void codec_checks() {
    std::size_t bad_p = 0, bad_f = 0;
    double worst = 0.0;
#pragma omp parallel for reduction(+ : bad_p, bad_f) reduction(max : worst) num_threads(g_workers)
    for (std::size_t i = 0; i < kRoundTrips; ++i) {
        CounterRng rng(4, i, 0);
        const double x = rng.uniform(-10.0, 10.0);
        if (x == 0.0) continue;
        const double p = codec::decode_value_p1000(codec::encode_value_p1000(x));
        const double f = codec::decode_value_fp15(codec::encode_value_fp15(x));
        const double ep = std::abs(p - x) / std::abs(x), ef = std::abs(f - x) / std::abs(x);
        bad_p += ep > kCodecRelErr ? 1 : 0;
        bad_f += ef > kCodecRelErr ? 1 : 0;
        worst = std::max({worst, ep, ef});
    }

    std::size_t structured = 0, accepted = 0, crashes = 0;
    const codec::Task tasks[] = {codec::Task::eigenvalues, codec::Task::diagonalization, codec::Task::inversion};
    for (std::size_t i = 0; i < kFuzzStrings; ++i) {
        CounterRng rng(5, i, 0);
        const auto scheme = i % 2 ? codec::Scheme::FP15 : codec::Scheme::P1000;
        std::string text;
        const int len = static_cast<int>(rng.uniform() * 30);
        for (int k = 0; k < len; ++k) text += (k ? " " : "") + random_token(rng, scheme);
        try {
            const auto seq = codec::parse_sequence(scheme, text);
            if (rng.uniform() < 0.5) codec::decode_input(seq);
            else codec::decode_target(tasks[i % 3], seq.ids, 2 + i % 3, scheme);
            ++accepted;
        } catch (const DecodeError&) {
            ++structured;
        } catch (...) {
            ++crashes;
        }
    }
    const bool pass = bad_p == 0 && bad_f == 0 && crashes == 0 && structured + accepted == kFuzzStrings;
    report(4, pass,
           "round trips: " + std::to_string(kRoundTrips) + " x 2, worst rel err " + fmt("%.2e", worst) +
               "; fuzz: " + std::to_string(structured) + " decode errors, " + std::to_string(accepted) +
               " accepted, " + std::to_string(crashes) + " other exceptions");
}

// 5 ----------------------------------------------------------------------

double gradient_check() {
    nanoformer::ModelConfig c;
    c.enc_layers = c.dec_layers = 2;
    c.dim = 16;
    c.heads = 2;
    c.ffn_mult = 4;
    c.src_vocab = 30;
    c.tgt_vocab = 25;
    c.max_src_len = 10;
    c.max_tgt_len = 8;
    c.seed = 6;
    nanoformer::Model m(c);
    CounterRng rng(6, 0, 0);
    for (auto& p : m.params()) p += rng.uniform(-0.05, 0.05);
    std::vector<nanoformer::Example> ex(4);
    for (auto& e : ex) {
        for (int k = 0; k < 8; ++k) e.src.push_back(3 + static_cast<int>(rng.uniform() * 27));
        for (int k = 0; k < 5; ++k) e.tgt.push_back(3 + static_cast<int>(rng.uniform() * 22));
    }
    ex[1].src.resize(5);
    ex[2].tgt.resize(3);
    const auto batch = nanoformer::make_batch(ex, c);
    std::vector<double> grad(m.param_count());
    nanoformer::loss_and_grad(m, batch, grad);

    // Every tensor is sampled, then the rest of the quota is drawn uniformly.
    std::vector<std::size_t> idx;
    for (const auto& t : m.layout().tensors) idx.push_back(t.offset + static_cast<std::size_t>(rng.uniform() * t.size));
    while (idx.size() < kGradParams) idx.push_back(static_cast<std::size_t>(rng.uniform() * m.param_count()));

    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t i : idx) {
        const double saved = m.params()[i];
        m.params()[i] = saved + h;
        const double up = nanoformer::forward_loss(m, batch);
        m.params()[i] = saved - h;
        const double down = nanoformer::forward_loss(m, batch);
        m.params()[i] = saved;
        const double fd = (up - down) / (2 * h);
        const double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-6});
        worst = std::max(worst, std::abs(fd - grad[i]) / denom);
    }
    return worst;
}

void training_checks() {
    const double worst = gradient_check();

    datagen::DatasetSpec spec;
    spec.ensemble.kind = Kind::semicircle;
    spec.ensemble.n = 2;
    spec.ensemble.seed = 7;
    std::vector<nanoformer::Example> ex;
    for (std::uint64_t i = 0; i < 8; ++i) ex.push_back(oodlab::to_example(datagen::example_for_index(spec, i)));
    const auto mcfg = oodlab::model_config_for({}, spec.task, 2, spec.input_scheme, spec.target_scheme);
    nanoformer::Model model(mcfg);
    nanoformer::AdamState opt(model.param_count());
    nanoformer::TrainConfig tc;
    tc.lr_max = 1e-3;
    tc.warmup_steps = 1;
    tc.cosine_period = 1e18;
    const auto batch = nanoformer::make_batch(ex, mcfg);
    std::size_t reached = 0;
    double loss = 0.0;
    for (std::size_t s = 1; s <= kOverfitSteps && !reached; ++s) {
        loss = nanoformer::train_step(model, opt, batch, s, tc);
        if (loss < kOverfitLoss) reached = s;
    }
    report(5, worst < kGradRelErr && reached > 0,
           "finite differences over " + std::to_string(kGradParams) + " parameters: max rel err " +
               fmt("%.2e", worst) + "; overfit 8 examples: " +
               (reached ? "loss " + fmt("%.4f", loss) + " at step " + std::to_string(reached)
                        : "loss " + fmt("%.4f", loss) + " after " + std::to_string(kOverfitSteps) + " steps"));
}

// 6 ----------------------------------------------------------------------

oodlab::ExperimentBase toy_base(std::uint64_t seed) {
    oodlab::ExperimentBase b;
    b.task = codec::Task::eigenvalues;
    b.n = 2;
    b.model.enc_layers = 2;
    b.model.dec_layers = 1;
    b.model.dim = 64;
    b.model.heads = 4;
    b.train.lr_max = 5e-4;
    b.train.batch = 64;
    b.train.warmup_steps = 500;
    b.train.cosine_period = 20000;
    b.train.clip_norm = 1.0;
    b.seed = seed;
    return b;
}

void learnability() {
    oodlab::CurveSpec spec;
    static_cast<oodlab::ExperimentBase&>(spec) = toy_base(11);
    spec.train_kind = spec.eval_kind = Kind::semicircle;
    spec.test_count = 500;
    spec.target_accuracy = kLearnTarget;
    spec.train.max_steps = kLearnSampleBudget / spec.train.batch;
    spec.train.eval_every = 1000;

    const auto mcfg = oodlab::model_config_for(spec.model, spec.task, spec.n, spec.input_scheme, spec.target_scheme);
    nanoformer::Model model(mcfg);
    const auto probe = oodlab::make_held_out(oodlab::test_spec_for(spec, spec.eval_kind), g_workers);
    auto final_spec = oodlab::test_spec_for(spec, spec.eval_kind);
    final_spec.ensemble.seed = mix64(final_spec.ensemble.seed + 1);
    final_spec.count = 2000;
    const auto final_set = oodlab::make_held_out(final_spec, g_workers);

    const double cpu0 = cpu_seconds();
    bool out_of_time = false;
    oodlab::TrainHooks hooks;
    hooks.log_every = 0;
    hooks.evaluate = [&](std::size_t, std::size_t) {
        return oodlab::evaluate_model(model, probe, spec.tol, g_workers).accuracy;
    };
    hooks.stop = [&](std::size_t, std::size_t, double acc) {
        out_of_time = cpu_seconds() - cpu0 > kLearnCpuSeconds;
        return acc >= kLearnTarget || out_of_time;
    };
    kernels::set_threads(g_workers);
    const auto res = oodlab::train_streaming(model, oodlab::train_spec_for(spec, spec.train_kind), spec.train, hooks,
                                             g_workers);
    const double cpu = cpu_seconds() - cpu0;
    const double acc = oodlab::evaluate_model(model, final_set, spec.tol, g_workers).accuracy;
    const bool pass = !res.diverged && acc >= kLearnTarget && res.samples <= kLearnSampleBudget &&
                      cpu <= kLearnCpuSeconds + 120.0;
    report(6, pass,
           "held-out accuracy " + fmt("%.4f", acc) + " on 2000 fresh problems after " + std::to_string(res.samples) +
               " examples, " + fmt("%.1f", cpu / 60.0) + " CPU-min" + (out_of_time ? " (time budget hit)" : "") +
               (res.diverged ? " diverged: " + res.error : ""));
}

// 7 ----------------------------------------------------------------------

oodlab::GridSpec toy_grid(std::uint64_t seed, std::size_t samples) {
    oodlab::GridSpec g;
    static_cast<oodlab::ExperimentBase&>(g) = toy_base(seed);
    g.train_kinds = {Kind::gaussian, Kind::abs_laplace};
    g.test_kinds = {Kind::gaussian, Kind::abs_laplace};
    g.test_count = 1000;
    g.samples_per_cell = samples;
    return g;
}

void grid_check() {
    const auto spec = toy_grid(12, 640000);
    const auto r = oodlab::run_grid(spec, g_workers);
    std::printf("%s", oodlab::emit_table(r, oodlab::TableFormat::markdown).c_str());
    const auto& a = r.accuracy;
    const bool complete = a[0][0] && a[0][1] && a[1][0] && a[1][1];
    const double pos_on_sym = complete ? *a[1][0] : -1, sym_on_pos = complete ? *a[0][1] : -1;
    const bool pass =
        complete && std::abs(pos_on_sym - kGridExpected) <= kGridBand && sym_on_pos > pos_on_sym;
    report(7, pass,
           "abs_laplace->gaussian " + fmt("%.1f", pos_on_sym) + "% (expected " + fmt("%.0f", kGridExpected) +
               " +-" + fmt("%.0f", kGridBand) + "), gaussian->abs_laplace " + fmt("%.1f", sym_on_pos) + "%");
}

// 8 ----------------------------------------------------------------------

void determinism() {
    namespace fs = std::filesystem;
    const auto root = fs::temp_directory_path() / "rmtlab_acceptance";
    fs::remove_all(root);
    datagen::DatasetSpec ds;
    ds.task = codec::Task::diagonalization;
    ds.ensemble.kind = Kind::laplace;
    ds.ensemble.n = 5;
    ds.ensemble.seed = 8;
    ds.count = 20000;
    const auto h1 = datagen::build_dataset(ds, root / "w1", 1).sha256;
    const auto h8 = datagen::build_dataset(ds, root / "w8", 8).sha256;
    fs::remove_all(root);

    auto g = toy_grid(13, 64 * 20);
    g.model.dim = 32;
    g.test_count = 200;
    const auto r1 = oodlab::report_content(oodlab::run_grid(g, 1));
    const auto r8 = oodlab::report_content(oodlab::run_grid(g, 8));
    report(8, h1 == h8 && r1 == r8,
           std::string("dataset sha256 ") + (h1 == h8 ? "identical" : "differs") + " (" + h1.substr(0, 16) +
               "...), grid report " + (r1 == r8 ? "identical" : "differs") + " at workers 1 and 8");
}

}  // namespace

int main() {
    mallopt(M_MMAP_THRESHOLD, 1 << 28);
    mallopt(M_TRIM_THRESHOLD, 1 << 29);
    g_workers = std::max(1, omp_get_max_threads());
    std::printf("workers: %d\n", g_workers);

    const std::vector<std::function<void()>> checks{condition_numbers, positive_fractions, metric_fidelity,
                                                    codec_checks,      training_checks,    learnability,
                                                    grid_check,        determinism};
    for (std::size_t i = 0; i < checks.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            checks[i]();
        } catch (const std::exception& e) {
            report(static_cast<int>(i + 1), false, std::string("exception: ") + e.what());
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("  (%.1f s)\n", s);
    }
    std::printf("%s: %d of 8 criteria failed\n", g_failures ? "FAIL" : "PASS", g_failures);
    return g_failures ? 1 : 0;
}
