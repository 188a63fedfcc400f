#include "rmtlab/evalkit.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "rmtlab/error.hpp"

namespace rmtlab::evalkit {

namespace {

using linalg::Matrix;

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string fmt(const std::optional<double>& x) { return x ? fmt(*x) : std::string{}; }

std::optional<double> parse_opt(const std::string& s, std::size_t line) {
    if (s.empty()) return std::nullopt;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) throw DatasetError(line, "bad number '" + s + "'");
    return v;
}

bool parse_flag(const std::string& s, std::size_t line) {
    if (s == "1") return true;
    if (s == "0") return false;
    throw DatasetError(line, "bad flag '" + s + "'");
}

double rate(std::size_t hits, std::size_t total) {
    return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

MeanStd mean_std(const std::vector<double>& xs) {
    MeanStd m;
    m.count = xs.size();
    for (double x : xs) m.mean += x;
    m.mean /= static_cast<double>(xs.size());
    for (double x : xs) m.std += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(m.std / static_cast<double>(xs.size()));
    return m;
}

}  // namespace

void ToleranceConfig::validate() const {
    if (!(tau > 0.0)) throw PreconditionError("tau must be positive");
    if (!(norm_lo > 0.0 && norm_lo <= 1.0 && norm_hi >= 1.0))
        throw PreconditionError("norm band must bracket 1");
    for (double a : angle_thresholds)
        if (!(a > 0.0)) throw PreconditionError("angle thresholds must be positive");
    if (!(cond_h_threshold > 0.0 && cond_m_threshold > 0.0 && eig_rel_threshold > 0.0))
        throw PreconditionError("verifier thresholds must be positive");
}

EvalRecord eval_eigenvalues(std::span<const double> pred, const linalg::Spectrum& truth,
                            const ToleranceConfig& tol) {
    if (pred.size() != truth.size()) throw PreconditionError("eigenvalue count mismatch");
    EvalRecord r;
    r.task = codec::Task::eigenvalues;
    r.residual = linalg::rel_l1(pred, truth.values());
    r.eig_rel_err = r.residual;
    r.success = r.residual < tol.tau;
    return r;
}

double max_successive_dot(const Matrix& h) {
    const std::size_t n = h.n();
    auto dot_rows = [&](std::size_t a, std::size_t b, bool rows) {
        double d = 0.0, na = 0.0, nb = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double x = rows ? h(a, k) : h(k, a);
            const double y = rows ? h(b, k) : h(k, b);
            d += x * y;
            na += x * x;
            nb += y * y;
        }
        if (na == 0.0 || nb == 0.0) throw DegenerateError("zero row or column");
        return std::abs(d) / (std::sqrt(na) * std::sqrt(nb));
    };
    double best = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        best = std::max(best, dot_rows(i, i + 1, true));
        best = std::max(best, dot_rows(i, i + 1, false));
    }
    return best;
}

std::pair<double, double> row_col_norm_range(const Matrix& h) {
    const std::size_t n = h.n();
    double lo = kInf, hi = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double r = 0.0, c = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            r += h(i, k) * h(i, k);
            c += h(k, i) * h(k, i);
        }
        r = std::sqrt(r);
        c = std::sqrt(c);
        lo = std::min({lo, r, c});
        hi = std::max({hi, r, c});
    }
    return {lo, hi};
}

EvalRecord eval_diagonalization(const linalg::SymMatrix& m, std::span<const double> pred_spectrum,
                                const Matrix& pred_h, const ToleranceConfig& tol) {
    if (pred_h.n() != m.n() || pred_spectrum.size() != m.n())
        throw PreconditionError("diagonalization shape mismatch");
    EvalRecord r;
    r.task = codec::Task::diagonalization;
    r.residual = linalg::l1_norm(pred_spectrum) == 0.0
                     ? kInf
                     : linalg::diagonalization_residual(m, pred_spectrum, pred_h);
    r.success = r.residual < tol.tau;
    r.cond_h = linalg::cond(pred_h);
    r.cond_m = linalg::cond(m);
    try {
        r.max_dot = max_successive_dot(pred_h);
    } catch (const DegenerateError&) {
    }
    const auto [lo, hi] = row_col_norm_range(pred_h);
    r.min_norm = lo;
    r.max_norm = hi;
    const auto truth = linalg::eig_sym(m).spectrum;
    r.eig_rel_err = linalg::rel_l1(pred_spectrum, truth.values());
    return r;
}

EvalRecord eval_inversion(const Matrix& m, const Matrix& pred, const ToleranceConfig& tol) {
    if (pred.n() != m.n()) throw PreconditionError("inversion shape mismatch");
    EvalRecord r;
    r.task = codec::Task::inversion;
    const Matrix product = pred * m;
    r.residual = linalg::rel_l1(product, Matrix::identity(m.n()));
    r.success = r.residual < tol.tau;
    r.cond_m = linalg::cond(m);
    try {
        r.inv_distance = linalg::rel_l1(pred, linalg::invert(m));
    } catch (const SingularMatrixError&) {
        r.inverse_failed = true;
    }
    return r;
}

EvalRecord malformed_record(codec::Task task, std::optional<double> cond_m) {
    EvalRecord r;
    r.task = task;
    r.malformed = true;
    r.success = false;
    r.residual = kInf;
    r.cond_m = cond_m;
    return r;
}

EvalRecord evaluate_output(codec::Task task, const Matrix& input, std::span<const int> output_ids,
                           codec::Scheme target_scheme, const ToleranceConfig& tol) {
    codec::Solution sol;
    try {
        sol = codec::decode_target(task, output_ids, input.n(), target_scheme);
    } catch (const DecodeError&) {
        return malformed_record(task, linalg::cond(input));
    }
    switch (task) {
        case codec::Task::eigenvalues: {
            const auto truth = linalg::eig_sym(linalg::SymMatrix::checked(input)).spectrum;
            auto r = eval_eigenvalues(sol.spectrum(), truth, tol);
            r.cond_m = linalg::cond(input);
            return r;
        }
        case codec::Task::diagonalization:
            return eval_diagonalization(linalg::SymMatrix::checked(input), sol.spectrum(),
                                        sol.matrix(), tol);
        case codec::Task::inversion:
            return eval_inversion(input, sol.matrix(), tol);
    }
    throw PreconditionError("unknown task");
}

bool predict_success_from_output(const Matrix& pred_h, const ToleranceConfig& tol) {
    return linalg::cond(pred_h) < tol.cond_h_threshold;
}

bool predict_success_from_input(const Matrix& m, const ToleranceConfig& tol) {
    return linalg::cond(m) < tol.cond_m_threshold;
}

bool predict_success(const EvalRecord& rec, const ToleranceConfig& tol) {
    switch (rec.task) {
        case codec::Task::diagonalization:
            return rec.cond_h && *rec.cond_h < tol.cond_h_threshold;
        case codec::Task::inversion:
            return rec.cond_m && *rec.cond_m < tol.cond_m_threshold;
        case codec::Task::eigenvalues:
            break;
    }
    throw PreconditionError("the eigenvalue task has no success verifier");
}

VerifierReport verifier_report(std::span<const EvalRecord> records, const ToleranceConfig& tol) {
    if (records.empty()) throw DegenerateError("verifier_report needs at least one record");
    VerifierReport rep;
    rep.task = records.front().task;
    rep.count = records.size();
    for (const auto& r : records) {
        if (r.task != rep.task) throw PreconditionError("verifier_report needs a single task");
        rep.successes += r.success ? 1 : 0;
        rep.malformed += r.malformed ? 1 : 0;
    }
    rep.accuracy = rate(rep.successes, rep.count);
    const std::size_t failures = rep.count - rep.successes;

    if (rep.task != codec::Task::eigenvalues) {
        std::size_t agree = 0, succ_hit = 0, fail_hit = 0;
        std::vector<double> cond_s, cond_f;
        for (const auto& r : records) {
            const bool predicted = predict_success(r, tol);
            agree += predicted == r.success ? 1 : 0;
            if (r.success) succ_hit += predicted ? 1 : 0;
            else fail_hit += predicted ? 0 : 1;
            const auto& c = rep.task == codec::Task::diagonalization ? r.cond_h : r.cond_m;
            if (c && std::isfinite(*c)) (r.success ? cond_s : cond_f).push_back(*c);
        }
        rep.agreement = rate(agree, rep.count);
        if (rep.successes) rep.precision_on_success = rate(succ_hit, rep.successes);
        if (failures) rep.recall_on_failure = rate(fail_hit, failures);
        if (!cond_s.empty()) rep.cond_success = mean_std(cond_s);
        if (!cond_f.empty()) rep.cond_failure = mean_std(cond_f);
    }

    if (rep.task != codec::Task::inversion) {
        std::size_t hits = 0;
        for (const auto& r : records)
            hits += r.eig_rel_err && *r.eig_rel_err < tol.eig_rel_threshold ? 1 : 0;
        rep.eig_correct_rate = rate(hits, rep.count);
    }
    if (rep.task == codec::Task::diagonalization) {
        std::size_t unit = 0;
        std::array<std::size_t, 3> angle{};
        for (const auto& r : records) {
            if (r.min_norm && r.max_norm && *r.min_norm >= tol.norm_lo && *r.max_norm <= tol.norm_hi)
                ++unit;
            if (r.max_dot) {
                const double deviation = std::asin(std::min(*r.max_dot, 1.0));
                for (std::size_t k = 0; k < angle.size(); ++k)
                    angle[k] += deviation < tol.angle_thresholds[k] ? 1 : 0;
            }
        }
        rep.unit_norm_rate = rate(unit, rep.count);
        for (std::size_t k = 0; k < angle.size(); ++k) rep.angle_rates[k] = rate(angle[k], rep.count);
    }
    if (rep.task == codec::Task::inversion) {
        std::size_t hits = 0;
        for (const auto& r : records) hits += r.inv_distance && *r.inv_distance < tol.tau ? 1 : 0;
        rep.inverse_within_tau_rate = rate(hits, rep.count);
    }
    return rep;
}

std::string csv_header() {
    return "task,success,malformed,residual,cond_h,cond_m,max_dot,eig_rel_err,min_norm,max_norm,"
           "inv_distance";
}

std::string to_csv_row(const EvalRecord& r) {
    std::string s(codec::name(r.task));
    s += r.success ? ",1" : ",0";
    s += r.malformed ? ",1," : ",0,";
    s += fmt(r.residual);
    for (const auto* v : {&r.cond_h, &r.cond_m, &r.max_dot, &r.eig_rel_err, &r.min_norm,
                          &r.max_norm, &r.inv_distance}) {
        s += ',';
        s += fmt(*v);
    }
    return s;
}

void write_csv(std::ostream& out, std::span<const EvalRecord> records) {
    out << csv_header() << '\n';
    for (const auto& r : records) out << to_csv_row(r) << '\n';
}

std::vector<EvalRecord> read_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != csv_header())
        throw DatasetError(1, "missing or unexpected eval CSV header");
    std::vector<EvalRecord> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        if (cells.size() != 11) throw DatasetError(lineno, "expected 11 columns");
        EvalRecord r;
        try {
            r.task = codec::parse_task(cells[0]);
        } catch (const PreconditionError& e) {
            throw DatasetError(lineno, e.what());
        }
        r.success = parse_flag(cells[1], lineno);
        r.malformed = parse_flag(cells[2], lineno);
        r.residual = parse_opt(cells[3], lineno).value_or(kInf);
        r.cond_h = parse_opt(cells[4], lineno);
        r.cond_m = parse_opt(cells[5], lineno);
        r.max_dot = parse_opt(cells[6], lineno);
        r.eig_rel_err = parse_opt(cells[7], lineno);
        r.min_norm = parse_opt(cells[8], lineno);
        r.max_norm = parse_opt(cells[9], lineno);
        r.inv_distance = parse_opt(cells[10], lineno);
        r.inverse_failed = r.task == codec::Task::inversion && !r.malformed && !r.inv_distance;
        out.push_back(r);
    }
    return out;
}

std::string format_report(const VerifierReport& r, const ToleranceConfig& tol) {
    std::ostringstream o;
    auto pct = [](double x) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * x);
        return std::string(buf);
    };
    o << "task: " << codec::name(r.task) << "\n";
    o << "records: " << r.count << " (malformed " << r.malformed << ")\n";
    o << "accuracy (tau=" << tol.tau << "): " << pct(r.accuracy) << "\n";
    if (r.agreement) {
        const double thr = r.task == codec::Task::diagonalization ? tol.cond_h_threshold
                                                                  : tol.cond_m_threshold;
        o << "verifier rule: cond < " << thr << "\n";
        o << "  agreement: " << pct(*r.agreement) << "\n";
        if (r.precision_on_success) o << "  successes predicted: " << pct(*r.precision_on_success) << "\n";
        if (r.recall_on_failure) o << "  failures predicted: " << pct(*r.recall_on_failure) << "\n";
        if (r.cond_success)
            o << "  cond over successes: mean " << r.cond_success->mean << " std " << r.cond_success->std << "\n";
        if (r.cond_failure)
            o << "  cond over failures: mean " << r.cond_failure->mean << " std " << r.cond_failure->std << "\n";
    }
    if (r.eig_correct_rate)
        o << "eigenvalues within " << pct(tol.eig_rel_threshold) << ": " << pct(*r.eig_correct_rate) << "\n";
    if (r.unit_norm_rate)
        o << "rows/columns with norm in [" << tol.norm_lo << ", " << tol.norm_hi
          << "]: " << pct(*r.unit_norm_rate) << "\n";
    for (std::size_t k = 0; k < r.angle_rates.size(); ++k)
        if (r.angle_rates[k])
            o << "angles within " << tol.angle_thresholds[k] << " rad of pi/2: " << pct(*r.angle_rates[k]) << "\n";
    if (r.inverse_within_tau_rate)
        o << "||P - M^-1|| / ||M^-1|| < tau: " << pct(*r.inverse_within_tau_rate) << "\n";
    return o.str();
}

}  // namespace rmtlab::evalkit
