#pragma once

// Task metrics, learned-property probes and condition-number verifiers.
//
// All norms are elementwise L1. Success is `residual < tau` (strict).

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rmtlab/codec.hpp"
#include "rmtlab/linalg.hpp"

namespace rmtlab::evalkit {

struct ToleranceConfig {
    double tau = 0.05;
    double norm_lo = 0.99;
    double norm_hi = 1.01;
    std::array<double, 3> angle_thresholds{0.1, 0.05, 0.03};  // radians
    double cond_h_threshold = 1.045;
    double cond_m_threshold = 62.0;
    double eig_rel_threshold = 0.01;

    void validate() const;
};

struct EvalRecord {
    codec::Task task = codec::Task::eigenvalues;
    bool success = false;
    bool malformed = false;
    double residual = 0.0;
    std::optional<double> cond_h;
    std::optional<double> cond_m;
    std::optional<double> max_dot;
    std::optional<double> eig_rel_err;
    std::optional<double> min_norm;
    std::optional<double> max_norm;
    std::optional<double> inv_distance;
    bool inverse_failed = false;  // reference inverse unavailable (singular input)
};

EvalRecord eval_eigenvalues(std::span<const double> pred, const linalg::Spectrum& truth,
                            const ToleranceConfig& tol = {});
EvalRecord eval_diagonalization(const linalg::SymMatrix& m, std::span<const double> pred_spectrum,
                                const linalg::Matrix& pred_h, const ToleranceConfig& tol = {});
EvalRecord eval_inversion(const linalg::Matrix& m, const linalg::Matrix& pred,
                          const ToleranceConfig& tol = {});
// Scored failure for output that does not decode.
EvalRecord malformed_record(codec::Task task, std::optional<double> cond_m = std::nullopt);

// Scores a decoded-or-not model output against the exact input matrix.
EvalRecord evaluate_output(codec::Task task, const linalg::Matrix& input,
                           std::span<const int> output_ids, codec::Scheme target_scheme,
                           const ToleranceConfig& tol = {});

// Largest |cos| between successive normalized rows and successive normalized
// columns (no wrap-around). Throws DegenerateError on a zero row or column.
double max_successive_dot(const linalg::Matrix& h);

// Smallest and largest L2 norm over all rows and columns.
std::pair<double, double> row_col_norm_range(const linalg::Matrix& h);

// Diagonalization: cond(predicted H) < cond_h_threshold.
// Inversion: cond(input M) < cond_m_threshold, decidable before the model runs.
bool predict_success_from_output(const linalg::Matrix& pred_h, const ToleranceConfig& tol = {});
bool predict_success_from_input(const linalg::Matrix& m, const ToleranceConfig& tol = {});
bool predict_success(const EvalRecord& rec, const ToleranceConfig& tol = {});

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
    std::size_t count = 0;
};

struct VerifierReport {
    codec::Task task = codec::Task::eigenvalues;
    std::size_t count = 0;
    std::size_t successes = 0;
    std::size_t malformed = 0;
    double accuracy = 0.0;

    // Verifier statistics; empty for the eigenvalue task, which has no verifier.
    std::optional<double> precision_on_success;  // share of successes predicted as success
    std::optional<double> recall_on_failure;     // share of failures predicted as failure
    std::optional<double> agreement;             // share of records predicted correctly
    std::optional<MeanStd> cond_success;
    std::optional<MeanStd> cond_failure;

    std::optional<double> eig_correct_rate;
    std::optional<double> unit_norm_rate;
    std::array<std::optional<double>, 3> angle_rates;  // per ToleranceConfig::angle_thresholds
    std::optional<double> inverse_within_tau_rate;
};

VerifierReport verifier_report(std::span<const EvalRecord> records, const ToleranceConfig& tol = {});

// Fixed column order:
// task,success,malformed,residual,cond_h,cond_m,max_dot,eig_rel_err,min_norm,max_norm,inv_distance
std::string csv_header();
std::string to_csv_row(const EvalRecord& r);
void write_csv(std::ostream& out, std::span<const EvalRecord> records);
std::vector<EvalRecord> read_csv(std::istream& in);

std::string format_report(const VerifierReport& r, const ToleranceConfig& tol = {});

}  // namespace rmtlab::evalkit
