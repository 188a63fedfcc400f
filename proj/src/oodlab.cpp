#include "rmtlab/oodlab.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include <omp.h>

#include "rmtlab/error.hpp"
#include "rmtlab/kernels.hpp"
#include "rmtlab/rng.hpp"

namespace rmtlab::oodlab {

namespace {

using nanoformer::Example;

constexpr std::size_t kEvalChunk = 256;

std::string fmt_full(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::uint64_t kind_salt(ensembles::Kind kind) {
    return static_cast<std::uint64_t>(kind) + 1;
}

std::vector<Example> stream_examples(const datagen::DatasetSpec& spec, std::uint64_t begin,
                                     std::size_t count, int workers) {
    std::vector<Example> out(count);
    const auto total = static_cast<std::int64_t>(count);
#pragma omp parallel for num_threads(std::max(workers, 1)) schedule(static)
    for (std::int64_t k = 0; k < total; ++k)
        out[static_cast<std::size_t>(k)] =
            to_example(datagen::example_for_index(spec, begin + static_cast<std::uint64_t>(k)));
    return out;
}

nlohmann::json kinds_json(const std::vector<ensembles::Kind>& kinds) {
    nlohmann::json a = nlohmann::json::array();
    for (auto k : kinds) a.push_back(ensembles::name(k));
    return a;
}

std::vector<ensembles::Kind> kinds_from_json(const nlohmann::json& a) {
    std::vector<ensembles::Kind> out;
    for (const auto& k : a) out.push_back(ensembles::parse_kind(k.get<std::string>()));
    return out;
}

void base_from_json(const nlohmann::json& j, ExperimentBase& e) {
    e.task = codec::parse_task(j.value("task", std::string("eigenvalues")));
    e.n = j.value("n", e.n);
    e.input_scheme = codec::parse_scheme(j.value("input_scheme", std::string("P1000")));
    e.target_scheme = codec::parse_scheme(j.value("target_scheme", std::string("P1000")));
    e.sigma = j.value("sigma", e.sigma);
    if (j.contains("spectrum_scale") && !j.at("spectrum_scale").is_null())
        e.spectrum_scale = j.at("spectrum_scale").get<double>();
    if (j.contains("model")) e.model = nanoformer::model_config_from_json(j.at("model"));
    if (j.contains("train")) e.train = nanoformer::train_config_from_json(j.at("train"));
    e.test_count = j.value("test_count", e.test_count);
    e.tol.tau = j.value("tau", e.tol.tau);
    e.seed = j.at("seed").get<std::uint64_t>();
}

nlohmann::json base_to_json(const ExperimentBase& e) {
    nlohmann::json j{{"task", codec::name(e.task)},
                     {"n", e.n},
                     {"input_scheme", codec::name(e.input_scheme)},
                     {"target_scheme", codec::name(e.target_scheme)},
                     {"sigma", e.sigma},
                     {"spectrum_scale", nullptr},
                     {"model", nanoformer::to_json(e.model)},
                     {"train", nanoformer::to_json(e.train)},
                     {"test_count", e.test_count},
                     {"tau", e.tol.tau},
                     {"seed", e.seed}};
    if (e.spectrum_scale) j["spectrum_scale"] = *e.spectrum_scale;
    return j;
}

nlohmann::json opt_json(const std::optional<double>& x) {
    return x ? nlohmann::json(*x) : nlohmann::json(nullptr);
}

nlohmann::json report_json(const evalkit::VerifierReport& r) {
    nlohmann::json j{{"count", r.count},
                     {"successes", r.successes},
                     {"malformed", r.malformed},
                     {"accuracy", r.accuracy},
                     {"precision_on_success", opt_json(r.precision_on_success)},
                     {"recall_on_failure", opt_json(r.recall_on_failure)},
                     {"agreement", opt_json(r.agreement)},
                     {"eig_correct_rate", opt_json(r.eig_correct_rate)},
                     {"unit_norm_rate", opt_json(r.unit_norm_rate)},
                     {"inverse_within_tau_rate", opt_json(r.inverse_within_tau_rate)}};
    return j;
}

}  // namespace

nanoformer::ModelConfig model_config_for(nanoformer::ModelConfig base, codec::Task task, std::size_t n,
                                         codec::Scheme input_scheme, codec::Scheme target_scheme) {
    base.src_vocab = codec::vocab_size(input_scheme);
    base.tgt_vocab = codec::vocab_size(target_scheme);
    base.max_src_len = 1 + codec::tokens_per_value(input_scheme) * n * n;
    base.max_tgt_len = codec::target_token_count(task, n, target_scheme) + 1;
    base.validate();
    return base;
}

Example to_example(const datagen::DatasetRecord& rec) { return {rec.input.ids, rec.target.ids}; }

HeldOutSet make_held_out(const datagen::DatasetSpec& spec, int workers) {
    HeldOutSet h;
    h.spec = spec;
    h.inputs.resize(spec.count);
    h.examples.resize(spec.count);
    const auto total = static_cast<std::int64_t>(spec.count);
#pragma omp parallel for num_threads(std::max(workers, 1)) schedule(static)
    for (std::int64_t k = 0; k < total; ++k) {
        const auto i = static_cast<std::size_t>(k);
        const auto rec = datagen::example_for_index(spec, i);
        h.inputs[i] = ensembles::sample_matrix(spec.ensemble, i, rec.retries);
        h.examples[i] = to_example(rec);
    }
    return h;
}

EvalResult evaluate_model(const nanoformer::Model& model, const HeldOutSet& held_out,
                          const evalkit::ToleranceConfig& tol, int workers) {
    const std::size_t count = held_out.examples.size();
    const auto& spec = held_out.spec;
    const std::size_t max_len =
        codec::target_token_count(spec.task, spec.ensemble.n, spec.target_scheme) + 1;
    EvalResult res;
    res.records.resize(count);
    const auto chunks = static_cast<std::int64_t>((count + kEvalChunk - 1) / kEvalChunk);
#pragma omp parallel for num_threads(std::max(workers, 1)) schedule(dynamic, 1)
    for (std::int64_t c = 0; c < chunks; ++c) {
        const std::size_t begin = static_cast<std::size_t>(c) * kEvalChunk;
        const std::size_t end = std::min(count, begin + kEvalChunk);
        std::vector<std::vector<int>> srcs;
        for (std::size_t i = begin; i < end; ++i) srcs.push_back(held_out.examples[i].src);
        const auto outs = nanoformer::greedy_decode_batch(model, srcs, max_len);
        for (std::size_t i = begin; i < end; ++i)
            res.records[i] = evalkit::evaluate_output(spec.task, held_out.inputs[i], outs[i - begin],
                                                      spec.target_scheme, tol);
    }
    std::size_t ok = 0;
    for (const auto& r : res.records) ok += r.success ? 1 : 0;
    res.accuracy = count ? static_cast<double>(ok) / static_cast<double>(count) : 0.0;
    return res;
}

namespace {

template <typename NextBatch>
TrainResult train_loop(nanoformer::Model& model, const nanoformer::TrainConfig& cfg,
                       const TrainHooks& hooks, NextBatch&& next_batch) {
    cfg.validate();
    TrainResult res;
    nanoformer::AdamState opt(model.param_count());
    double loss_sum = 0.0;
    std::size_t loss_n = 0;
    try {
        for (std::size_t s = 0; s < cfg.max_steps; ++s) {
            const std::size_t step = s + 1;
            const nanoformer::Batch batch = next_batch(s);
            const double loss = nanoformer::train_step(model, opt, batch, step, cfg);
            res.steps = step;
            res.samples += batch.size;
            res.last_loss = loss;
            loss_sum += loss;
            ++loss_n;
            const bool eval_now = cfg.eval_every > 0 && hooks.evaluate && step % cfg.eval_every == 0;
            const bool log_now = hooks.log_every > 0 && step % hooks.log_every == 0;
            if (eval_now || log_now) {
                LogRow row{step, nanoformer::lr_schedule(step, cfg), loss_sum / static_cast<double>(loss_n),
                           std::nullopt};
                loss_sum = 0.0;
                loss_n = 0;
                if (eval_now) row.eval_accuracy = hooks.evaluate(step, res.samples);
                res.log.push_back(row);
                if (eval_now && hooks.stop && hooks.stop(step, res.samples, *row.eval_accuracy)) break;
            }
        }
    } catch (const TrainingDivergence& e) {
        res.diverged = true;
        res.error = e.what();
    }
    return res;
}

}  // namespace

TrainResult train_streaming(nanoformer::Model& model, const datagen::DatasetSpec& train_spec,
                            const nanoformer::TrainConfig& cfg, const TrainHooks& hooks, int workers) {
    train_spec.validate();
    return train_loop(model, cfg, hooks, [&](std::size_t s) {
        const auto examples = stream_examples(train_spec, s * cfg.batch, cfg.batch, workers);
        return nanoformer::make_batch(examples, model.config());
    });
}

TrainResult train_on_examples(nanoformer::Model& model, const std::vector<Example>& data,
                              const nanoformer::TrainConfig& cfg, const TrainHooks& hooks) {
    if (data.empty()) throw PreconditionError("no training examples");
    return train_loop(model, cfg, hooks, [&](std::size_t s) {
        std::vector<Example> batch;
        for (std::size_t k = 0; k < cfg.batch; ++k) batch.push_back(data[(s * cfg.batch + k) % data.size()]);
        return nanoformer::make_batch(batch, model.config());
    });
}

void write_log_csv(std::ostream& out, const std::vector<LogRow>& log) {
    out << "step,lr,loss,eval_accuracy\n";
    for (const auto& r : log) {
        out << r.step << ',' << fmt_full(r.lr) << ',' << fmt_full(r.loss) << ',';
        if (r.eval_accuracy) out << fmt_full(*r.eval_accuracy);
        out << '\n';
    }
}

std::uint64_t train_seed(std::uint64_t grid_seed, ensembles::Kind kind) {
    return mix64(mix64(grid_seed ^ 0x747261696eULL) + kind_salt(kind));
}

std::uint64_t test_seed(std::uint64_t grid_seed, ensembles::Kind kind) {
    return mix64(mix64(grid_seed ^ 0x74657374ULL) + kind_salt(kind));
}

namespace {

datagen::DatasetSpec spec_for(const ExperimentBase& e, ensembles::Kind kind, std::uint64_t seed,
                              std::size_t count) {
    datagen::DatasetSpec s;
    s.task = e.task;
    s.ensemble.kind = kind;
    s.ensemble.n = e.n;
    s.ensemble.sigma = e.sigma;
    s.ensemble.seed = seed;
    s.ensemble.spectrum_scale = e.spectrum_scale;
    s.input_scheme = e.input_scheme;
    s.target_scheme = e.target_scheme;
    s.count = count;
    s.validate();
    return s;
}

}  // namespace

datagen::DatasetSpec train_spec_for(const ExperimentBase& e, ensembles::Kind kind) {
    return spec_for(e, kind, train_seed(e.seed, kind), 0);
}

datagen::DatasetSpec test_spec_for(const ExperimentBase& e, ensembles::Kind kind) {
    return spec_for(e, kind, test_seed(e.seed, kind), e.test_count);
}

void GridSpec::validate() const {
    if (train_kinds.empty() || test_kinds.empty()) throw PreconditionError("grid needs train and test kinds");
    if (test_count < 100) throw PreconditionError("grid test_count must be at least 100");
    if (samples_per_cell < train.batch) throw PreconditionError("samples_per_cell smaller than one batch");
    tol.validate();
    for (auto k : train_kinds) train_spec_for(*this, k);
    for (auto k : test_kinds) test_spec_for(*this, k);
}

GridReport run_grid(const GridSpec& spec, int workers) {
    spec.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const auto mcfg = model_config_for(spec.model, spec.task, spec.n, spec.input_scheme, spec.target_scheme);
    nanoformer::TrainConfig tcfg = spec.train;
    tcfg.max_steps = spec.samples_per_cell / tcfg.batch;

    std::vector<HeldOutSet> tests;
    for (auto kind : spec.test_kinds) tests.push_back(make_held_out(test_spec_for(spec, kind), workers));

    const std::size_t rows = spec.train_kinds.size(), cols = spec.test_kinds.size();
    GridReport rep;
    rep.train_kinds = spec.train_kinds;
    rep.test_kinds = spec.test_kinds;
    rep.accuracy.assign(rows, std::vector<std::optional<double>>(cols));
    rep.cells.assign(rows, std::vector<std::optional<evalkit::VerifierReport>>(cols));
    rep.row_errors.assign(rows, "");
    rep.final_loss.assign(rows, 0.0);

    // Rows are independent; with several workers each row trains on its own
    // thread and the kernels inside it run single-threaded.
    const int row_threads = std::max(1, std::min<int>(workers, static_cast<int>(rows)));
    const int inner = row_threads > 1 ? 1 : workers;
    const int saved_threads = kernels::threads();
    kernels::set_threads(inner);
#pragma omp parallel for num_threads(row_threads) schedule(dynamic, 1)
    for (std::int64_t rr = 0; rr < static_cast<std::int64_t>(rows); ++rr) {
        const auto r = static_cast<std::size_t>(rr);
        nanoformer::Model model(mcfg);
        const auto result = train_streaming(model, train_spec_for(spec, spec.train_kinds[r]), tcfg, {}, inner);
        rep.final_loss[r] = result.last_loss;
        if (result.diverged) {
            rep.row_errors[r] = result.error;
            continue;
        }
        for (std::size_t c = 0; c < cols; ++c) {
            const auto ev = evaluate_model(model, tests[c], spec.tol, inner);
            rep.accuracy[r][c] = 100.0 * ev.accuracy;
            rep.cells[r][c] = evalkit::verifier_report(ev.records, spec.tol);
        }
    }
    kernels::set_threads(saved_threads);
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

void CurveSpec::validate() const {
    if (test_count < 1) throw PreconditionError("curve needs a held-out set");
    if (train.eval_every == 0) throw PreconditionError("learning curves need train.eval_every > 0");
    if (!(target_accuracy >= 0.0 && target_accuracy <= 1.0))
        throw PreconditionError("target accuracy must lie in [0, 1]");
    tol.validate();
}

CurveResult learning_curve(const CurveSpec& spec, int workers) {
    spec.validate();
    const auto mcfg = model_config_for(spec.model, spec.task, spec.n, spec.input_scheme, spec.target_scheme);
    const HeldOutSet eval_set = make_held_out(test_spec_for(spec, spec.eval_kind), workers);
    nanoformer::Model model(mcfg);
    const int saved_threads = kernels::threads();
    kernels::set_threads(workers);

    CurveResult res;
    res.budget_samples = spec.train.max_steps * spec.train.batch;
    TrainHooks hooks;
    hooks.log_every = 0;
    hooks.evaluate = [&](std::size_t, std::size_t samples) {
        const double acc = evaluate_model(model, eval_set, spec.tol, workers).accuracy;
        res.points.emplace_back(samples, acc);
        return acc;
    };
    hooks.stop = [&](std::size_t, std::size_t samples, double acc) {
        if (acc >= spec.target_accuracy && !res.samples_to_target) res.samples_to_target = samples;
        return res.samples_to_target.has_value();
    };
    const auto result = train_streaming(model, train_spec_for(spec, spec.train_kind), spec.train, hooks, workers);
    kernels::set_threads(saved_threads);
    if (result.diverged) throw TrainingDivergence(result.error);
    res.final_accuracy = res.points.empty() ? evaluate_model(model, eval_set, spec.tol, workers).accuracy
                                            : res.points.back().second;
    return res;
}

ConditionTable condition_table(const std::vector<ensembles::Kind>& kinds, std::size_t n, std::size_t count,
                               std::uint64_t seed, int workers) {
    ConditionTable t;
    t.n = n;
    t.kinds = kinds;
    for (auto kind : kinds) {
        ensembles::EnsembleConfig cfg;
        cfg.kind = kind;
        cfg.n = n;
        cfg.seed = seed;
        t.rows.push_back(ensembles::condition_stats(cfg, count, workers));
    }
    return t;
}

std::string emit_table(const GridReport& report, TableFormat format) {
    std::ostringstream o;
    const std::string dash = "—";
    if (format == TableFormat::csv) {
        o << "train\\test";
        for (auto k : report.test_kinds) o << ',' << ensembles::name(k);
        o << '\n';
        for (std::size_t r = 0; r < report.train_kinds.size(); ++r) {
            o << ensembles::name(report.train_kinds[r]);
            for (const auto& cell : report.accuracy[r]) o << ',' << (cell ? fmt_full(*cell) : dash);
            o << '\n';
        }
        return o.str();
    }
    o << "| train \\ test |";
    for (auto k : report.test_kinds) o << ' ' << ensembles::name(k) << " |";
    o << "\n|---|";
    for (std::size_t c = 0; c < report.test_kinds.size(); ++c) o << "---:|";
    o << '\n';
    for (std::size_t r = 0; r < report.train_kinds.size(); ++r) {
        o << "| " << ensembles::name(report.train_kinds[r]) << " |";
        for (const auto& cell : report.accuracy[r]) {
            o << ' ';
            if (cell) o << static_cast<long>(std::lround(*cell));
            else o << dash;
            o << " |";
        }
        o << '\n';
    }
    return o.str();
}

std::string emit_table(const ConditionTable& table, TableFormat format) {
    std::ostringstream o;
    if (format == TableFormat::csv) {
        o << "kind,median,q3,p90\n";
        for (std::size_t i = 0; i < table.kinds.size(); ++i)
            o << ensembles::name(table.kinds[i]) << ',' << fmt_full(table.rows[i].median) << ','
              << fmt_full(table.rows[i].q3) << ',' << fmt_full(table.rows[i].p90) << '\n';
        return o.str();
    }
    auto cell = [](double x) {
        char buf[32];
        std::snprintf(buf, sizeof buf, x >= 100.0 ? "%.0f" : "%.1f", x);
        return std::string(buf);
    };
    o << "| kind | median | third quartile | 90th percentile |\n|---|---:|---:|---:|\n";
    for (std::size_t i = 0; i < table.kinds.size(); ++i)
        o << "| " << ensembles::name(table.kinds[i]) << " | " << cell(table.rows[i].median) << " | "
          << cell(table.rows[i].q3) << " | " << cell(table.rows[i].p90) << " |\n";
    return o.str();
}

std::vector<std::vector<std::optional<double>>> parse_markdown_grid(const std::string& text) {
    std::vector<std::vector<std::optional<double>>> out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (lineno <= 2 || line.empty()) continue;  // header and alignment rows
        std::vector<std::string> cells;
        std::size_t pos = 1;
        while (pos < line.size()) {
            const auto bar = line.find('|', pos);
            if (bar == std::string::npos) break;
            std::string c = line.substr(pos, bar - pos);
            const auto a = c.find_first_not_of(' ');
            const auto b = c.find_last_not_of(' ');
            cells.push_back(a == std::string::npos ? "" : c.substr(a, b - a + 1));
            pos = bar + 1;
        }
        std::vector<std::optional<double>> row;
        for (std::size_t i = 1; i < cells.size(); ++i)
            row.push_back(cells[i] == "—" ? std::nullopt : std::optional<double>(std::stod(cells[i])));
        out.push_back(row);
    }
    return out;
}

GridSpec grid_spec_from_json(const nlohmann::json& j) {
    try {
        GridSpec g;
        base_from_json(j, g);
        g.train_kinds = kinds_from_json(j.at("train_kinds"));
        g.test_kinds = kinds_from_json(j.at("test_kinds"));
        g.samples_per_cell = j.at("samples_per_cell").get<std::size_t>();
        return g;
    } catch (const nlohmann::json::exception& e) {
        throw PreconditionError(std::string("bad grid config: ") + e.what());
    }
}

CurveSpec curve_spec_from_json(const nlohmann::json& j) {
    try {
        CurveSpec c;
        base_from_json(j, c);
        c.train_kind = ensembles::parse_kind(j.at("train_kind").get<std::string>());
        c.eval_kind = ensembles::parse_kind(j.value("eval_kind", j.at("train_kind").get<std::string>()));
        c.target_accuracy = j.value("target_accuracy", c.target_accuracy);
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw PreconditionError(std::string("bad curve config: ") + e.what());
    }
}

nlohmann::json to_json(const GridSpec& spec) {
    auto j = base_to_json(spec);
    j["train_kinds"] = kinds_json(spec.train_kinds);
    j["test_kinds"] = kinds_json(spec.test_kinds);
    j["samples_per_cell"] = spec.samples_per_cell;
    return j;
}

nlohmann::json to_json(const CurveSpec& spec) {
    auto j = base_to_json(spec);
    j["train_kind"] = ensembles::name(spec.train_kind);
    j["eval_kind"] = ensembles::name(spec.eval_kind);
    j["target_accuracy"] = spec.target_accuracy;
    return j;
}

nlohmann::json report_content(const GridReport& report) {
    nlohmann::json acc = nlohmann::json::array();
    nlohmann::json cells = nlohmann::json::array();
    for (std::size_t r = 0; r < report.accuracy.size(); ++r) {
        nlohmann::json arow = nlohmann::json::array(), crow = nlohmann::json::array();
        for (std::size_t c = 0; c < report.accuracy[r].size(); ++c) {
            arow.push_back(opt_json(report.accuracy[r][c]));
            crow.push_back(report.cells[r][c] ? report_json(*report.cells[r][c]) : nlohmann::json(nullptr));
        }
        acc.push_back(arow);
        cells.push_back(crow);
    }
    return {{"train_kinds", kinds_json(report.train_kinds)},
            {"test_kinds", kinds_json(report.test_kinds)},
            {"accuracy", acc},
            {"cells", cells},
            {"row_errors", report.row_errors},
            {"final_loss", report.final_loss}};
}

nlohmann::json run_manifest(const GridSpec& spec, const GridReport& report) {
    nlohmann::json seeds = nlohmann::json::object();
    for (auto k : spec.train_kinds) seeds["train"][std::string(ensembles::name(k))] = train_seed(spec.seed, k);
    for (auto k : spec.test_kinds) seeds["test"][std::string(ensembles::name(k))] = test_seed(spec.seed, k);
    auto content = report_content(report);
    return {{"spec", to_json(spec)},
            {"derived_seeds", seeds},
            {"report", content},
            {"report_sha256", datagen::sha256_hex(content.dump())},
            {"seconds", report.seconds}};
}

}  // namespace rmtlab::oodlab
