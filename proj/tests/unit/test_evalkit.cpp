#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "helpers.hpp"
#include "rmtlab/ensembles.hpp"
#include "rmtlab/error.hpp"
#include "rmtlab/evalkit.hpp"

using namespace rmtlab;
using namespace rmtlab::evalkit;
using linalg::Matrix;

namespace {

std::vector<double> scaled(std::span<const double> v, double s) {
    std::vector<double> out(v.begin(), v.end());
    for (auto& x : out) x *= s;
    return out;
}

Matrix scale_column(Matrix h, std::size_t col, double s) {
    for (std::size_t i = 0; i < h.n(); ++i) h(i, col) *= s;
    return h;
}

}  // namespace

TEST(Tolerance, Defaults) {
    ToleranceConfig t;
    EXPECT_EQ(t.tau, 0.05);
    EXPECT_EQ(t.cond_h_threshold, 1.045);
    EXPECT_EQ(t.cond_m_threshold, 62.0);
    EXPECT_NO_THROW(t.validate());
    t.norm_lo = 1.001;
    EXPECT_THROW(t.validate(), PreconditionError);
    t = {};
    t.tau = 0;
    EXPECT_THROW(t.validate(), PreconditionError);
}

TEST(Eigenvalues, Examples) {
    const linalg::Spectrum truth(std::vector<double>{4.0, 2.0, 1.0});
    auto r = eval_eigenvalues(truth.values(), truth);
    EXPECT_TRUE(r.success);
    EXPECT_EQ(r.residual, 0.0);

    r = eval_eigenvalues(scaled(truth.values(), 1.05), truth);
    EXPECT_NEAR(r.residual, 0.05, 1e-15);
    EXPECT_FALSE(eval_eigenvalues(scaled(truth.values(), 1.0500001), truth).success);
    EXPECT_TRUE(eval_eigenvalues(scaled(truth.values(), 1.0499999), truth).success);

    r = eval_eigenvalues(scaled(truth.values(), 1.009), truth);
    EXPECT_LT(*r.eig_rel_err, ToleranceConfig{}.eig_rel_threshold);
    EXPECT_THROW(eval_eigenvalues(std::vector<double>{1.0}, truth), PreconditionError);
}

TEST(Eigenvalues, Homogeneity) {
    for (std::uint64_t s = 0; s < 200; ++s) {
        const auto truth = linalg::eig_sym(testing_util::random_sym(4, s)).spectrum;
        EXPECT_TRUE(eval_eigenvalues(scaled(truth.values(), 1.049), truth).success);
        EXPECT_FALSE(eval_eigenvalues(scaled(truth.values(), 1.051), truth).success);
        EXPECT_TRUE(eval_eigenvalues(scaled(truth.values(), 0.951), truth).success);
    }
}

TEST(Diagonalization, ExactOutputSucceeds) {
    ToleranceConfig tol;
    for (auto kind : ensembles::table_kinds()) {
        ensembles::EnsembleConfig cfg;
        cfg.kind = kind;
        cfg.seed = 4;
        for (std::uint64_t i = 0; i < 100; ++i) {
            const auto m = linalg::SymMatrix::checked(ensembles::sample_matrix(cfg, i));
            const auto e = linalg::eig_sym(m);
            const auto r = eval_diagonalization(m, e.spectrum.values(), e.vectors, tol);
            ASSERT_TRUE(r.success);
            EXPECT_LT(r.residual, 1e-9);
            EXPECT_LT(*r.max_dot, 1e-9);
            EXPECT_NEAR(*r.cond_h, 1.0, 1e-9);
            EXPECT_TRUE(predict_success(r, tol));
        }
    }
}

TEST(Diagonalization, IdentityHFails) {
    const auto m = linalg::SymMatrix::checked(Matrix(2, {2.0, 1.0, 1.0, 3.0}));
    const std::vector<double> diag{2.0, 3.0};
    const auto r = eval_diagonalization(m, diag, Matrix::identity(2));
    EXPECT_FALSE(r.success);
    EXPECT_DOUBLE_EQ(r.residual, 2.0 / 5.0);
    EXPECT_EQ(*r.max_dot, 0.0);
}

TEST(Diagonalization, ScaledColumnNorms) {
    const auto m = testing_util::random_sym(4, 8);
    const auto e = linalg::eig_sym(m);
    const auto r = eval_diagonalization(m, e.spectrum.values(), scale_column(e.vectors, 2, 1.2));
    EXPECT_NEAR(*r.max_norm, 1.2, 1e-12);
    EXPECT_GT(*r.max_norm, ToleranceConfig{}.norm_hi);
    EXPECT_NEAR(*r.cond_h, 1.2, 1e-9);
}

TEST(Diagonalization, ShapeMismatch) {
    const auto m = testing_util::random_sym(3, 1);
    EXPECT_THROW(eval_diagonalization(m, std::vector<double>{1, 2}, Matrix::identity(3)), PreconditionError);
    EXPECT_THROW(eval_diagonalization(m, std::vector<double>{1, 2, 3}, Matrix::identity(2)), PreconditionError);
}

TEST(Inversion, Examples) {
    const auto m = testing_util::random_matrix(4, 3, -10, 10);
    const auto inv = linalg::invert(m);
    auto r = eval_inversion(m, inv);
    EXPECT_TRUE(r.success);
    EXPECT_LT(r.residual, 1e-9);
    EXPECT_LT(*r.inv_distance, 1e-12);

    r = eval_inversion(m, 1.05 * inv);
    EXPECT_NEAR(*r.inv_distance, 0.05, 1e-12);
    EXPECT_NEAR(r.residual, 0.05, 1e-9);

    const Matrix ill = Matrix::diagonal(std::vector<double>{1.0, 1e-6});
    r = eval_inversion(ill, Matrix::diagonal(std::vector<double>{1.0, 0.0}));
    EXPECT_NEAR(*r.inv_distance, 1e6 / (1e6 + 1), 1e-12);
    EXPECT_NEAR(r.residual, 0.5, 1e-12);
    EXPECT_FALSE(r.success);
    EXPECT_NEAR(*r.cond_m, 1e6, 1e-3);
}

TEST(Inversion, SingularInputIsFlagged) {
    const Matrix sing(2, {1.0, 2.0, 2.0, 4.0});
    const auto r = eval_inversion(sing, Matrix::identity(2));
    EXPECT_TRUE(r.inverse_failed);
    EXPECT_FALSE(r.inv_distance.has_value());
}

TEST(SuccessiveDot, Examples) {
    EXPECT_EQ(max_successive_dot(Matrix::identity(5)), 0.0);
    const auto q = linalg::eig_sym(testing_util::random_sym(6, 2)).vectors;
    EXPECT_LT(max_successive_dot(q), 1e-12);

    const double a = std::numbers::pi / 2 - 0.03;
    const Matrix h(2, {1.0, 0.0, std::cos(a), std::sin(a)});
    EXPECT_NEAR(max_successive_dot(h), 0.029996, 5e-7);
    EXPECT_NEAR(max_successive_dot(h), std::sin(0.03), 1e-12);

    EXPECT_THROW(max_successive_dot(Matrix(2, {1.0, 0.0, 0.0, 0.0})), DegenerateError);
}

TEST(SuccessiveDot, NoWrapAround) {
    // Rows 0 and 2 are parallel but not successive.
    const Matrix h(3, {1, 0, 0, 0, 1, 0, 1, 0, 1e-3});
    EXPECT_LT(max_successive_dot(h), 1e-2);
}

TEST(SuccessiveDot, RotationMonotoneAndCondInvariant) {
    const auto hq = linalg::eig_sym(testing_util::random_sym(5, 12)).vectors;
    const auto h = scale_column(hq, 0, 1.1);
    const double base_cond = linalg::cond(h);
    for (std::size_t plane = 0; plane + 1 < 5; ++plane) {
        double prev = -1.0;
        for (int k = 0; k <= 30; ++k) {
            const double theta = 0.01 * k;
            // Column p+1 tilts toward column p by theta.
            auto r = Matrix::identity(5);
            r(plane, plane + 1) = std::sin(theta);
            r(plane + 1, plane + 1) = std::cos(theta);
            const auto hr = hq * r;
            const double d = max_successive_dot(hr);
            EXPECT_GE(d, prev - 1e-12);
            prev = d;
            const auto rot = h * testing_util::plane_rotation(5, plane, plane + 1, theta);
            EXPECT_NEAR(linalg::cond(rot), base_cond, 1e-9 * base_cond);
        }
    }
}

TEST(Predict, Thresholds) {
    EXPECT_TRUE(predict_success_from_output(Matrix::identity(3)));
    EXPECT_FALSE(predict_success_from_output(Matrix::diagonal(std::vector<double>{1.0, 1.28})));
    EXPECT_TRUE(predict_success_from_input(Matrix::diagonal(std::vector<double>{15.8, 1.0})));
    EXPECT_FALSE(predict_success_from_input(Matrix::diagonal(std::vector<double>{640.5, 1.0})));
    EXPECT_FALSE(predict_success_from_input(Matrix::diagonal(std::vector<double>{62.0, 1.0})));

    EvalRecord eig;
    EXPECT_THROW(predict_success(eig), PreconditionError);
}

TEST(Predict, InversionUsesInputOnly) {
    const auto m = testing_util::random_matrix(3, 9, -10, 10);
    const bool expected = predict_success_from_input(m);
    for (double s : {0.5, 1.0, 2.0}) {
        const auto r = eval_inversion(m, s * linalg::invert(m));
        EXPECT_EQ(predict_success(r), expected);
    }
}

TEST(Report, ConstructedFixture) {
    std::vector<EvalRecord> recs;
    for (int i = 0; i < 100; ++i) {
        EvalRecord r;
        r.task = codec::Task::diagonalization;
        r.success = i < 90;
        r.residual = r.success ? 0.01 : 0.2;
        r.cond_h = r.success ? 1.01 : 1.28;
        r.min_norm = 1.0;
        r.max_norm = r.success ? 1.0 : 1.28;
        r.max_dot = r.success ? 0.0 : 0.2;
        r.eig_rel_err = r.success ? 0.001 : 0.1;
        recs.push_back(r);
    }
    const auto rep = verifier_report(recs);
    EXPECT_EQ(rep.count, 100u);
    EXPECT_DOUBLE_EQ(rep.accuracy, 0.9);
    EXPECT_DOUBLE_EQ(*rep.agreement, 1.0);
    EXPECT_DOUBLE_EQ(*rep.recall_on_failure, 1.0);
    EXPECT_DOUBLE_EQ(*rep.precision_on_success, 1.0);
    EXPECT_NEAR(rep.cond_success->mean, 1.01, 1e-12);
    EXPECT_NEAR(rep.cond_failure->mean, 1.28, 1e-12);
    EXPECT_NEAR(rep.cond_failure->std, 0.0, 1e-12);
    EXPECT_DOUBLE_EQ(*rep.unit_norm_rate, 0.9);
    EXPECT_DOUBLE_EQ(*rep.eig_correct_rate, 0.9);
    EXPECT_DOUBLE_EQ(*rep.angle_rates[2], 0.9);

    std::reverse(recs.begin(), recs.end());
    const auto rev = verifier_report(recs);
    EXPECT_EQ(rev.agreement, rep.agreement);
    EXPECT_EQ(rev.cond_success->mean, rep.cond_success->mean);
}

TEST(Report, ExactOutputsAndCorruption) {
    ensembles::EnsembleConfig cfg;
    cfg.kind = ensembles::Kind::semicircle;
    cfg.seed = 21;
    std::vector<EvalRecord> good, bad;
    for (std::uint64_t i = 0; i < 300; ++i) {
        const auto m = linalg::SymMatrix::checked(ensembles::sample_matrix(cfg, i));
        const auto e = linalg::eig_sym(m);
        good.push_back(eval_diagonalization(m, e.spectrum.values(), e.vectors));
        const auto h = scale_column(e.vectors * testing_util::plane_rotation(5, 1, 3, 0.2), 0, 1.2);
        bad.push_back(eval_diagonalization(m, e.spectrum.values(), h));
    }
    const auto g = verifier_report(good);
    EXPECT_EQ(g.accuracy, 1.0);
    EXPECT_EQ(*g.unit_norm_rate, 1.0);
    EXPECT_EQ(*g.eig_correct_rate, 1.0);
    EXPECT_EQ(*g.agreement, 1.0);
    EXPECT_FALSE(g.recall_on_failure.has_value());
    const auto b = verifier_report(bad);
    EXPECT_EQ(b.accuracy, 0.0);
    EXPECT_EQ(*b.agreement, 1.0);
    EXPECT_EQ(*b.unit_norm_rate, 0.0);
    EXPECT_FALSE(b.precision_on_success.has_value());
}

TEST(Report, Errors) {
    EXPECT_THROW(verifier_report(std::vector<EvalRecord>{}), DegenerateError);
    std::vector<EvalRecord> mixed(2);
    mixed[1].task = codec::Task::inversion;
    EXPECT_THROW(verifier_report(mixed), PreconditionError);
    const auto eig = verifier_report(std::vector<EvalRecord>(3));
    EXPECT_FALSE(eig.agreement.has_value());
}

TEST(Malformed, OutputsScoreAsFailures) {
    const auto m = linalg::SymMatrix::checked(Matrix(2, {2, 1, 1, 3}));
    const std::vector<int> junk{5, 6, 7};
    for (auto task : {codec::Task::eigenvalues, codec::Task::diagonalization, codec::Task::inversion}) {
        const auto r = evaluate_output(task, m, junk, codec::Scheme::P1000);
        EXPECT_TRUE(r.malformed);
        EXPECT_FALSE(r.success);
        if (task == codec::Task::diagonalization) {
            EXPECT_FALSE(predict_success(r));
        }
    }
    const auto ok = codec::encode_target(codec::solve(codec::Task::eigenvalues, m), codec::Scheme::FP15);
    const auto r = evaluate_output(codec::Task::eigenvalues, m, ok.ids, codec::Scheme::FP15);
    EXPECT_FALSE(r.malformed);
    EXPECT_TRUE(r.success);
}

TEST(Csv, RoundTrip) {
    std::vector<EvalRecord> recs;
    const auto m = testing_util::random_sym(3, 5);
    const auto e = linalg::eig_sym(m);
    recs.push_back(eval_diagonalization(m, e.spectrum.values(), e.vectors));
    recs.push_back(eval_inversion(m, linalg::invert(m)));
    recs.push_back(eval_eigenvalues(scaled(e.spectrum.values(), 1.1), e.spectrum));
    recs.push_back(malformed_record(codec::Task::inversion, 3.0));
    std::stringstream ss;
    write_csv(ss, recs);
    EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')), csv_header());
    const auto back = read_csv(ss);
    ASSERT_EQ(back.size(), recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) EXPECT_EQ(to_csv_row(back[i]), to_csv_row(recs[i]));
    EXPECT_EQ(back[1].inv_distance, recs[1].inv_distance);
    EXPECT_EQ(back[0].cond_h, recs[0].cond_h);

    std::stringstream bad(csv_header() + "\neigenvalues,2,0,1,,,,,,,\n");
    try {
        read_csv(bad);
        FAIL();
    } catch (const DatasetError& ex) {
        EXPECT_EQ(ex.line(), 2u);
    }
}
