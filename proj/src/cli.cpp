#include "rmtlab/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rmtlab/codec.hpp"
#include "rmtlab/datagen.hpp"
#include "rmtlab/ensembles.hpp"
#include "rmtlab/error.hpp"
#include "rmtlab/evalkit.hpp"
#include "rmtlab/kernels.hpp"
#include "rmtlab/nanoformer.hpp"
#include "rmtlab/oodlab.hpp"

namespace rmtlab::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

template <typename Parse>
CLI::Validator parses_as(Parse parse, std::string label) {
    return CLI::Validator(
        [parse](std::string& s) {
            try {
                parse(s);
                return std::string();
            } catch (const std::exception& e) {
                return std::string(e.what());
            }
        },
        std::move(label));
}

const auto kKindCheck = parses_as([](const std::string& s) { ensembles::parse_kind(s); }, "KIND");
const auto kTaskCheck = parses_as([](const std::string& s) { codec::parse_task(s); }, "TASK");
const auto kSchemeCheck = parses_as([](const std::string& s) { codec::parse_scheme(s); }, "SCHEME");

std::string fmt(double x, const char* f = "%.6g") {
    char buf[48];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

void print_matrix(std::ostream& out, const linalg::Matrix& m) {
    for (std::size_t i = 0; i < m.n(); ++i) {
        out << ' ';
        for (std::size_t j = 0; j < m.n(); ++j) out << ' ' << fmt(m(i, j));
        out << '\n';
    }
}

void echo_run(std::ostream& out, const std::string& command, json args) {
    args["command"] = command;
    out << "# run " << args.dump() << '\n';
}

json read_json_file(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw Error("cannot open " + p.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw PreconditionError(p.string() + ": " + e.what());
    }
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + p.string());
    out << text;
    if (!out) throw Error("write failed for " + p.string());
}

// gen ---------------------------------------------------------------------

struct GenArgs {
    std::string task = "eigenvalues", kind = "semicircle", in_scheme = "P1000", out_scheme = "P1000";
    std::size_t n = 0, count = 0;
    std::uint64_t seed = 0;
    double sigma = ensembles::kDefaultSigma;
    std::optional<double> spectrum_scale;
    std::string out_dir;
    int workers = 1;
};

int run_gen(const GenArgs& a, std::ostream& out) {
    datagen::DatasetSpec spec;
    spec.task = codec::parse_task(a.task);
    spec.ensemble.kind = ensembles::parse_kind(a.kind);
    spec.ensemble.n = a.n;
    spec.ensemble.sigma = a.sigma;
    spec.ensemble.seed = a.seed;
    spec.ensemble.spectrum_scale = a.spectrum_scale;
    spec.input_scheme = codec::parse_scheme(a.in_scheme);
    spec.target_scheme = codec::parse_scheme(a.out_scheme);
    spec.count = a.count;
    spec.validate();
    echo_run(out, "gen", {{"spec", datagen::to_json(spec)}, {"out", a.out_dir}, {"workers", a.workers}});
    const auto manifest = datagen::build_dataset(spec, a.out_dir, a.workers);
    out << datagen::to_json(manifest).dump(2) << '\n';
    return kOk;
}

// stats -------------------------------------------------------------------

struct StatsArgs {
    std::vector<std::string> kinds;
    std::size_t n = 0, count = 0;
    std::uint64_t seed = 0;
    double sigma = ensembles::kDefaultSigma;
    bool cond = false, positive = false;
    std::string format = "markdown";
    int workers = 1;
};

int run_stats(const StatsArgs& a, std::ostream& out) {
    std::vector<ensembles::Kind> kinds;
    for (const auto& k : a.kinds) {
        if (k == "all") kinds.insert(kinds.end(), ensembles::table_kinds().begin(), ensembles::table_kinds().end());
        else kinds.push_back(ensembles::parse_kind(k));
    }
    echo_run(out, "stats",
             {{"kinds", a.kinds}, {"n", a.n}, {"count", a.count}, {"seed", a.seed}, {"sigma", a.sigma},
              {"mode", a.positive ? "positive-fraction" : "cond"}, {"workers", a.workers}});
    if (a.positive) {
        out << "kind,n,count,positive_fraction,two_pow_minus_n\n";
        for (auto kind : kinds) {
            ensembles::EnsembleConfig cfg{kind, a.n, a.sigma, a.seed, std::nullopt};
            const double f = ensembles::positive_fraction(cfg, a.count, a.workers);
            out << ensembles::name(kind) << ',' << a.n << ',' << a.count << ',' << fmt(f, "%.17g") << ','
                << fmt(std::ldexp(1.0, -static_cast<int>(a.n)), "%.17g") << '\n';
        }
        return kOk;
    }
    ensembles::EnsembleConfig base{kinds.front(), a.n, a.sigma, a.seed, std::nullopt};
    oodlab::ConditionTable table;
    table.n = a.n;
    table.kinds = kinds;
    for (auto kind : kinds) {
        base.kind = kind;
        table.rows.push_back(ensembles::condition_stats(base, a.count, a.workers));
    }
    out << oodlab::emit_table(table, a.format == "csv" ? oodlab::TableFormat::csv : oodlab::TableFormat::markdown);
    return kOk;
}

// encode / decode ---------------------------------------------------------

struct EncodeArgs {
    std::string scheme = "P1000", target_scheme;
    std::string task;
    std::size_t n = 0;
    std::vector<double> values;
};

int run_encode(const EncodeArgs& a, std::ostream& out) {
    if (a.values.size() != a.n * a.n)
        throw PreconditionError("expected " + std::to_string(a.n * a.n) + " values, got " +
                                std::to_string(a.values.size()));
    const linalg::Matrix m(a.n, a.values);
    const auto scheme = codec::parse_scheme(a.scheme);
    out << codec::encode_input(m, scheme).to_string();
    if (!a.task.empty()) {
        const auto task = codec::parse_task(a.task);
        const auto tscheme = a.target_scheme.empty() ? scheme : codec::parse_scheme(a.target_scheme);
        out << " | " << codec::encode_target(codec::solve(task, m), tscheme).to_string();
    }
    out << '\n';
    return kOk;
}

struct DecodeArgs {
    std::string line, task, in_scheme, out_scheme;
};

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

codec::Scheme guess_scheme(const std::string& text, std::size_t skip) {
    std::istringstream in(text);
    std::string tok;
    for (std::size_t i = 0; i <= skip && in >> tok;) ++i;
    return !tok.empty() && tok[0] == 'F' ? codec::Scheme::FP15 : codec::Scheme::P1000;
}

int run_decode(DecodeArgs a, std::istream& in, std::ostream& out) {
    if (a.line.empty()) std::getline(in, a.line);
    const auto bar = a.line.find('|');
    const std::string input = trim(a.line.substr(0, bar));
    const auto in_scheme = a.in_scheme.empty() ? guess_scheme(input, 1) : codec::parse_scheme(a.in_scheme);
    const auto m = codec::decode_input(codec::parse_sequence(in_scheme, input));
    out << "matrix (n=" << m.n() << "):\n";
    print_matrix(out, m);
    if (bar == std::string::npos) return kOk;

    const std::string target = trim(a.line.substr(bar + 1));
    const auto t_scheme = a.out_scheme.empty() ? guess_scheme(target, 0) : codec::parse_scheme(a.out_scheme);
    const auto seq = codec::parse_sequence(t_scheme, target);
    codec::Task task;
    if (!a.task.empty()) {
        task = codec::parse_task(a.task);
    } else {
        const std::size_t values = seq.size() / codec::tokens_per_value(t_scheme), n = m.n();
        if (values == n) task = codec::Task::eigenvalues;
        else if (values == n + n * n) task = codec::Task::diagonalization;
        else if (values == n * n) task = codec::Task::inversion;
        else throw DecodeError(seq.size(), "target length matches no task for n=" + std::to_string(n));
    }
    const auto sol = codec::decode_target(task, seq.ids, m.n(), t_scheme);
    if (task != codec::Task::inversion) {
        out << "eigenvalues:";
        for (double x : sol.spectrum()) out << ' ' << fmt(x);
        out << '\n';
    }
    if (task == codec::Task::diagonalization) {
        out << "eigenvectors (columns):\n";
        print_matrix(out, sol.matrix());
    } else if (task == codec::Task::inversion) {
        out << "inverse:\n";
        print_matrix(out, sol.matrix());
    }
    return kOk;
}

// train -------------------------------------------------------------------

struct TrainArgs {
    std::string data, spec, config, checkpoint, log;
    std::size_t max_steps = 0;
    std::uint64_t seed = 0;
    std::optional<double> lr, period, clip;
    std::optional<std::size_t> batch, warmup;
    int workers = 1;
};

int run_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
    if (a.data.empty() == a.spec.empty()) throw CLI::ValidationError("exactly one of --data or --spec is required");
    nanoformer::ModelConfig mbase;
    nanoformer::TrainConfig tcfg;
    if (!a.config.empty()) {
        const json j = read_json_file(a.config);
        if (j.contains("model")) mbase = nanoformer::model_config_from_json(j.at("model"));
        if (j.contains("train")) tcfg = nanoformer::train_config_from_json(j.at("train"));
    }
    if (a.lr) tcfg.lr_max = *a.lr;
    if (a.batch) tcfg.batch = *a.batch;
    if (a.warmup) tcfg.warmup_steps = *a.warmup;
    if (a.period) tcfg.cosine_period = *a.period;
    if (a.clip) tcfg.clip_norm = *a.clip;
    tcfg.max_steps = a.max_steps;
    tcfg.validate();
    mbase.seed = a.seed;

    datagen::DatasetSpec spec;
    std::vector<nanoformer::Example> examples;
    if (!a.data.empty()) {
        const auto records = datagen::read_dataset(a.data);
        spec = datagen::read_manifest(a.data).spec;
        for (const auto& r : records) examples.push_back(oodlab::to_example(r));
    } else {
        spec = datagen::spec_from_json(read_json_file(a.spec));
        spec.validate();
    }
    const auto mcfg = oodlab::model_config_for(mbase, spec.task, spec.ensemble.n, spec.input_scheme,
                                               spec.target_scheme);
    json run{{"data", a.data},       {"spec", datagen::to_json(spec)}, {"model", nanoformer::to_json(mcfg)},
             {"train", nanoformer::to_json(tcfg)}, {"checkpoint", a.checkpoint}, {"workers", a.workers}};
    echo_run(out, "train", run);

    kernels::set_threads(a.workers);
    nanoformer::Model model(mcfg);
    oodlab::TrainHooks hooks;
    const auto result = a.data.empty() ? oodlab::train_streaming(model, spec, tcfg, hooks, a.workers)
                                       : oodlab::train_on_examples(model, examples, tcfg, hooks);
    if (!a.log.empty()) {
        std::ofstream log(a.log, std::ios::trunc);
        if (!log) throw Error("cannot write " + a.log);
        oodlab::write_log_csv(log, result.log);
    }
    if (result.diverged) {
        err << "error: " << result.error << '\n';
        return kDomainError;
    }
    nanoformer::save_checkpoint(a.checkpoint, model, result.steps, run);
    out << json{{"steps", result.steps}, {"samples", result.samples}, {"last_loss", result.last_loss}}.dump()
        << '\n';
    return kOk;
}

// eval / verify -----------------------------------------------------------

struct EvalArgs {
    std::string data, checkpoint, csv;
    double tau = 0.05;
    int workers = 1;
};

int run_eval(const EvalArgs& a, std::ostream& out) {
    const auto manifest = datagen::read_manifest(a.data);
    const auto records = datagen::read_dataset(a.data);
    const auto model = nanoformer::model_from_checkpoint(nanoformer::load_checkpoint(a.checkpoint));
    const auto& spec = manifest.spec;
    const auto want = oodlab::model_config_for(model.config(), spec.task, spec.ensemble.n, spec.input_scheme,
                                               spec.target_scheme);
    if (want.src_vocab != model.config().src_vocab || want.tgt_vocab != model.config().tgt_vocab ||
        want.max_src_len > model.config().max_src_len || want.max_tgt_len > model.config().max_tgt_len)
        throw PreconditionError("checkpoint was trained for a different task or encoding");
    evalkit::ToleranceConfig tol;
    tol.tau = a.tau;
    tol.validate();
    echo_run(out, "eval", {{"data", a.data}, {"checkpoint", a.checkpoint}, {"tau", a.tau}, {"csv", a.csv},
                           {"workers", a.workers}});

    // Inputs are regenerated from the manifest so scoring uses exact matrices.
    auto held = oodlab::make_held_out(spec, a.workers);
    for (std::size_t i = 0; i < records.size(); ++i)
        if (held.examples[i].src != records[i].input.ids)
            throw DatasetError(i + 1, "input does not match the manifest's generator");
    kernels::set_threads(a.workers);
    const auto res = oodlab::evaluate_model(model, held, tol, a.workers);
    if (!a.csv.empty()) {
        std::ofstream csv(a.csv, std::ios::trunc);
        if (!csv) throw Error("cannot write " + a.csv);
        evalkit::write_csv(csv, res.records);
    }
    out << evalkit::format_report(evalkit::verifier_report(res.records, tol), tol);
    return kOk;
}

struct VerifyArgs {
    std::string csv, task;
    double tau = 0.05;
};

int run_verify(const VerifyArgs& a, std::ostream& out) {
    std::ifstream in(a.csv);
    if (!in) throw Error("cannot open " + a.csv);
    const auto records = evalkit::read_csv(in);
    const auto task = codec::parse_task(a.task);
    for (std::size_t i = 0; i < records.size(); ++i)
        if (records[i].task != task)
            throw DatasetError(i + 2, "record task " + std::string(codec::name(records[i].task)) +
                                                   " does not match --task");
    evalkit::ToleranceConfig tol;
    tol.tau = a.tau;
    tol.validate();
    echo_run(out, "verify", {{"eval_csv", a.csv}, {"task", a.task}, {"tau", a.tau}});
    out << evalkit::format_report(evalkit::verifier_report(records, tol), tol);
    return kOk;
}

// grid / curve ------------------------------------------------------------

struct GridArgs {
    std::string config, report, csv, manifest;
    int workers = 1;
};

int run_grid(const GridArgs& a, std::ostream& out) {
    const auto spec = oodlab::grid_spec_from_json(read_json_file(a.config));
    spec.validate();
    echo_run(out, "grid", {{"config", oodlab::to_json(spec)}, {"report", a.report}, {"workers", a.workers}});
    const auto report = oodlab::run_grid(spec, a.workers);
    const auto md = oodlab::emit_table(report, oodlab::TableFormat::markdown);
    write_text(a.report, md);
    if (!a.csv.empty()) write_text(a.csv, oodlab::emit_table(report, oodlab::TableFormat::csv));
    const auto manifest = oodlab::run_manifest(spec, report);
    if (!a.manifest.empty()) write_text(a.manifest, manifest.dump(2) + "\n");
    out << md;
    for (std::size_t r = 0; r < report.row_errors.size(); ++r)
        if (!report.row_errors[r].empty())
            out << "row " << ensembles::name(report.train_kinds[r]) << " failed: " << report.row_errors[r] << '\n';
    out << "report_sha256 " << manifest.at("report_sha256").get<std::string>() << '\n';
    return kOk;
}

struct CurveArgs {
    std::string config, log;
    std::optional<double> target;
    int workers = 1;
};

int run_curve(const CurveArgs& a, std::ostream& out) {
    auto spec = oodlab::curve_spec_from_json(read_json_file(a.config));
    if (a.target) spec.target_accuracy = *a.target;
    spec.validate();
    echo_run(out, "curve", {{"config", oodlab::to_json(spec)}, {"workers", a.workers}});
    const auto res = oodlab::learning_curve(spec, a.workers);
    json points = json::array();
    for (const auto& [s, acc] : res.points) points.push_back({s, acc});
    if (!a.log.empty()) {
        std::ostringstream csv;
        csv << "samples,accuracy\n";
        for (const auto& [s, acc] : res.points) csv << s << ',' << fmt(acc, "%.17g") << '\n';
        write_text(a.log, csv.str());
    }
    out << json{{"samples_to_target", res.samples_to_target ? json(*res.samples_to_target) : json(nullptr)},
                {"final_accuracy", res.final_accuracy},
                {"budget_samples", res.budget_samples},
                {"points", points}}
               .dump()
        << '\n';
    return kOk;
}

}  // namespace

int parse_and_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Random-matrix datasets, a small seq2seq transformer, and out-of-distribution evaluation."};
    app.name("rmtlab");
    app.require_subcommand(1, 1);

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "Generate a dataset directory (data.txt + manifest.json)");
    g->add_option("--task", gen.task, "eigenvalues | diagonalization | inversion")->check(kTaskCheck)->capture_default_str();
    g->add_option("--kind", gen.kind, "Ensemble kind")->check(kKindCheck)->capture_default_str();
    g->add_option("--n", gen.n, "Matrix dimension")->required()->check(CLI::Range(2, 16));
    g->add_option("--count", gen.count, "Number of records")->required();
    g->add_option("--seed", gen.seed, "Dataset seed")->required();
    g->add_option("--in-scheme", gen.in_scheme, "P1000 | FP15")->check(kSchemeCheck)->capture_default_str();
    g->add_option("--out-scheme", gen.out_scheme, "P1000 | FP15")->check(kSchemeCheck)->capture_default_str();
    g->add_option("--sigma", gen.sigma, "Coefficient standard deviation")->capture_default_str();
    g->add_option("--spectrum-scale", gen.spectrum_scale, "Scale of replacement spectra (default sigma*sqrt(n))");
    g->add_option("--out", gen.out_dir, "Output directory")->required();
    g->add_option("--workers", gen.workers, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();

    StatsArgs stats;
    auto* s = app.add_subcommand("stats", "Condition-number quantiles or positive-definite fractions");
    s->add_option("--kind", stats.kinds, "Ensemble kind(s), or 'all' for the condition table")
        ->required()
        ->check(CLI::IsMember({"all"}) | kKindCheck);
    s->add_option("--n", stats.n, "Matrix dimension")->required()->check(CLI::Range(2, 16));
    s->add_option("--count", stats.count, "Draws per kind")->required();
    s->add_option("--seed", stats.seed, "Sampling seed")->required();
    s->add_option("--sigma", stats.sigma, "Coefficient standard deviation")->capture_default_str();
    auto* cond_flag = s->add_flag("--cond", stats.cond, "Median, third quartile and 90th percentile of cond(M)");
    s->add_flag("--positive-fraction", stats.positive, "Fraction of positive-definite draws")->excludes(cond_flag);
    s->add_option("--format", stats.format, "markdown | csv")->check(CLI::IsMember({"markdown", "csv"}))->capture_default_str();
    s->add_option("--workers", stats.workers, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();

    EncodeArgs enc;
    auto* e = app.add_subcommand("encode", "Encode a row-major matrix (and optionally its solution)");
    e->add_option("--n", enc.n, "Matrix dimension")->required()->check(CLI::Range(2, 16));
    e->add_option("--scheme", enc.scheme, "Input scheme")->check(kSchemeCheck)->capture_default_str();
    e->add_option("--task", enc.task, "Also encode the solution of this task")->check(kTaskCheck);
    e->add_option("--target-scheme", enc.target_scheme, "Target scheme (default: input scheme)")->check(kSchemeCheck);
    e->add_option("values", enc.values, "n*n coefficients, row-major")->required();

    DecodeArgs dec;
    auto* d = app.add_subcommand("decode", "Decode one 'input | target' line (stdin when omitted)");
    d->add_option("line", dec.line, "Token line");
    d->add_option("--task", dec.task, "Target task (inferred from length when omitted)")->check(kTaskCheck);
    d->add_option("--in-scheme", dec.in_scheme, "Input scheme (inferred when omitted)")->check(kSchemeCheck);
    d->add_option("--out-scheme", dec.out_scheme, "Target scheme (inferred when omitted)")->check(kSchemeCheck);

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train a model on a dataset directory or a streamed dataset spec");
    auto* data_opt = t->add_option("--data", tr.data, "Dataset directory")->check(CLI::ExistingDirectory);
    t->add_option("--spec", tr.spec, "Dataset spec JSON, streamed")->check(CLI::ExistingFile)->excludes(data_opt);
    t->add_option("--config", tr.config, "JSON with 'model' and 'train' sections")->check(CLI::ExistingFile);
    t->add_option("--checkpoint", tr.checkpoint, "Output checkpoint path")->required();
    t->add_option("--max-steps", tr.max_steps, "Optimizer steps")->required();
    t->add_option("--seed", tr.seed, "Model initialization seed")->required();
    t->add_option("--lr", tr.lr, "Peak learning rate");
    t->add_option("--batch", tr.batch, "Batch size");
    t->add_option("--warmup", tr.warmup, "Warmup steps");
    t->add_option("--period", tr.period, "Cosine period in steps");
    t->add_option("--clip", tr.clip, "Global gradient-norm clip (0 disables)");
    t->add_option("--log", tr.log, "Training log CSV");
    t->add_option("--workers", tr.workers, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();

    EvalArgs ev;
    auto* v = app.add_subcommand("eval", "Score a checkpoint on a dataset directory");
    v->add_option("--data", ev.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    v->add_option("--checkpoint", ev.checkpoint, "Checkpoint")->required()->check(CLI::ExistingFile);
    v->add_option("--tau", ev.tau, "Relative L1 tolerance")->capture_default_str();
    v->add_option("--csv", ev.csv, "Per-example CSV output");
    v->add_option("--workers", ev.workers, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();

    VerifyArgs ver;
    auto* f = app.add_subcommand("verify", "Verifier statistics from a per-example CSV");
    f->add_option("--eval-csv", ver.csv, "CSV written by eval")->required()->check(CLI::ExistingFile);
    f->add_option("--task", ver.task, "Task of the records")->required()->check(kTaskCheck);
    f->add_option("--tau", ver.tau, "Relative L1 tolerance")->capture_default_str();

    GridArgs grid;
    auto* gr = app.add_subcommand("grid", "Train one model per row and score every test column");
    gr->add_option("--config", grid.config, "Grid JSON")->required()->check(CLI::ExistingFile);
    gr->add_option("--report", grid.report, "Markdown report output")->required();
    gr->add_option("--csv", grid.csv, "Full-precision CSV output");
    gr->add_option("--manifest", grid.manifest, "Run manifest JSON output");
    gr->add_option("--workers", grid.workers, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();

    CurveArgs curve;
    auto* c = app.add_subcommand("curve", "Examples needed to reach a target accuracy");
    c->add_option("--config", curve.config, "Curve JSON")->required()->check(CLI::ExistingFile);
    c->add_option("--target", curve.target, "Target accuracy in [0, 1]")->check(CLI::Range(0.0, 1.0));
    c->add_option("--log", curve.log, "Curve points CSV");
    c->add_option("--workers", curve.workers, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& pe) {
        const int code = app.exit(pe, out, err);
        return code == 0 ? kOk : kUsageError;
    }

    try {
        if (*g) return run_gen(gen, out);
        if (*s) return run_stats(stats, out);
        if (*e) return run_encode(enc, out);
        if (*d) return run_decode(dec, std::cin, out);
        if (*t) return run_train(tr, out, err);
        if (*v) return run_eval(ev, out);
        if (*f) return run_verify(ver, out);
        if (*gr) return run_grid(grid, out);
        if (*c) return run_curve(curve, out);
    } catch (const CLI::Error& ue) {
        err << "usage error: " << ue.what() << '\n';
        return kUsageError;
    } catch (const Error& de) {
        err << "error: " << de.what() << '\n';
        return kDomainError;
    } catch (const fs::filesystem_error& fe) {
        err << "error: " << fe.what() << '\n';
        return kDomainError;
    }
    return kUsageError;
}

}  // namespace rmtlab::cli
