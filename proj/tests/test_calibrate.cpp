#include <gtest/gtest.h>

#include "nirfda/calibrate.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace nirfda;
using fixture::kind_of;

namespace {

Eigen::MatrixXd unaugmented_block(const ConcentrationMatrix& Y) {
    Eigen::MatrixXd M(Y.samples(), Y.analyte_count() + 1);
    M.col(0).setOnes();
    M.rightCols(Y.analyte_count()) = Y.values();
    return M;
}

Eigen::VectorXd stacked_rows(const Eigen::MatrixXd& W) {
    Eigen::VectorXd v(W.size());
    for (Eigen::Index i = 0; i < W.rows(); ++i) v.segment(i * W.cols(), W.cols()) = W.row(i).transpose();
    return v;
}

double rel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

/// Full block-diagonal covariance of the stacked data rows, built entry by entry.
Eigen::MatrixXd dense_covariance(const ConcentrationMatrix& Y, const Eigen::VectorXd& grid,
                                 const Eigen::VectorXd& sigma2, const Eigen::VectorXd& phi) {
    const Eigen::Index I = Y.samples(), T = grid.size();
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(I * T, I * T);
    for (Eigen::Index i = 0; i < I; ++i) {
        for (Eigen::Index a = 0; a < T; ++a) {
            for (Eigen::Index b = 0; b < T; ++b) {
                double v = 0.0;
                for (Eigen::Index l = 0; l < Y.analyte_count(); ++l) {
                    const double y = Y.values()(i, l);
                    v += y * y * sigma2(l) * std::exp(-phi(l) * std::abs(grid(a) - grid(b)));
                }
                S(i * T + a, i * T + b) = v;
            }
        }
    }
    return S;
}

} // namespace

TEST(Ols, RecoversCoefficientsOnNoiselessData) {
    for (bool closed : {false, true}) {
        std::mt19937_64 rng(closed ? 2 : 1);
        const auto p = fixture::problem(rng, 15, 50, 9, 3, 0.0, closed);
        const CalibrationModel model = fit_ols(assemble_design(p.spectra, p.Y, p.kv));
        EXPECT_LT(rel(model.coefficients, p.C), 1e-8) << "closed=" << closed;
        EXPECT_EQ(model.closed, closed);
    }
}

TEST(Ols, MatchesDenseNormalEquations) {
    std::mt19937_64 rng(3);
    const auto p = fixture::problem(rng, 3, 10, 5, 1, 0.3, false);
    const AggregatedDesign d = assemble_design(p.spectra, p.Y, p.kv);
    const CalibrationModel model = fit_ols(d);

    Eigen::MatrixXd M(4, 2);
    M << 1, p.Y.values()(0, 0),
         1, p.Y.values()(1, 0),
         1, p.Y.values()(2, 0),
         0, 1;
    Eigen::MatrixXd B(10, 5);
    for (Eigen::Index n = 0; n < 10; ++n) {
        for (int k = 0; k < 5; ++k) B(n, k) = oracle::bspline(p.kv.knots(), k, 4, p.spectra.grid()(n));
    }
    const Eigen::MatrixXd X = oracle::kron(M, B);
    Eigen::VectorXd w = Eigen::VectorXd::Zero(40);
    w.head(30) = stacked_rows(p.spectra.absorbance());
    const Eigen::VectorXd beta = oracle::normal_equations(X, w);
    EXPECT_LT(rel(stack_coefficients(model.coefficients), beta), 1e-10);
}

TEST(Ols, BaselineOnlyWithOrthonormalBasisIsProjection) {
    std::mt19937_64 rng(4);
    const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(fixture::gaussian(rng, 12, 4)).householderQ();
    AggregatedDesign d;
    d.basis = make_knots(0.0, 1.0, 4);
    d.basis_design = Q.leftCols(4);
    d.concentration_block = Eigen::MatrixXd::Zero(2, 1);
    d.concentration_block(0, 0) = 1.0;
    d.response = Eigen::MatrixXd::Zero(2, 12);
    d.response.row(0) = fixture::gaussian(rng, 1, 12);
    const CalibrationModel model = fit_ols(d);
    EXPECT_LT((model.coefficients.row(0).transpose() - d.basis_design.transpose() * d.response.row(0).transpose())
                  .cwiseAbs()
                  .maxCoeff(),
              1e-12);
}

TEST(Ols, ResidualOrthogonality) {
    for (int seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(100 + seed);
        const auto p = fixture::problem(rng, 8, 40, 8, 3, 0.5, seed % 2 == 0);
        const AggregatedDesign d = assemble_design(p.spectra, p.Y, p.kv);
        const CalibrationModel model = fit_ols(d);
        const Eigen::MatrixXd X = d.dense_design();
        const Eigen::VectorXd w = d.stacked_response();
        const Eigen::VectorXd g = X.transpose() * (w - X * stack_coefficients(model.coefficients));
        EXPECT_LT(g.cwiseAbs().maxCoeff() / (X.norm() * w.norm()), 1e-8);
    }
}

TEST(Ols, TooFewWavelengthsForTheBasis) {
    std::mt19937_64 rng(5);
    const auto p = fixture::problem(rng, 5, 10, 6, 2, 0.1, false);
    EXPECT_EQ(kind_of([&] { fit_ols(assemble_design(p.spectra, p.Y, make_knots(350, 750, 14))); }),
              ErrorKind::singular_design);
}

TEST(Penalized, LambdaZeroIsOls) {
    std::mt19937_64 rng(6);
    const auto p = fixture::problem(rng, 10, 60, 12, 3, 0.4, true);
    const AggregatedDesign d = assemble_design(p.spectra, p.Y, p.kv);
    const CalibrationModel a = fit_ols(d);
    const CalibrationModel b = fit_penalized(d, penalty_matrix(p.kv), 0.0);
    EXPECT_LT(rel(b.coefficients, a.coefficients), 1e-10);
}

TEST(Penalized, NormalEquationsHold) {
    for (int seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(200 + seed);
        const auto p = fixture::problem(rng, 6, 40, 10, 2, 0.5, seed % 2 == 1);
        const AggregatedDesign d = assemble_design(p.spectra, p.Y, p.kv);
        const Eigen::MatrixXd R = penalty_matrix(p.kv);
        const double lambda = std::pow(10.0, seed % 7);
        const CalibrationModel model = fit_penalized(d, R, lambda);
        const Eigen::MatrixXd X = d.dense_design();
        const Eigen::VectorXd w = d.stacked_response();
        const Eigen::MatrixXd P = lambda * oracle::kron(Eigen::MatrixXd::Identity(3, 3), R);
        const Eigen::MatrixXd N = X.transpose() * X + P;
        const Eigen::VectorXd g = N * stack_coefficients(model.coefficients) - X.transpose() * w;
        EXPECT_LT(g.cwiseAbs().maxCoeff() / (N.norm() * stack_coefficients(model.coefficients).norm() +
                                            (X.transpose() * w).norm()),
                  1e-8);
    }
}

TEST(Penalized, LargeLambdaFlattensCurves) {
    std::mt19937_64 rng(7);
    const Eigen::VectorXd grid = fixture::linspace(0.0, 1.0, 50);
    const KnotVector kv = make_knots(0.0, 1.0, 14);
    const Eigen::MatrixXd Y = fixture::concentrations(rng, 10, 2, false);
    const SpectraSet s(grid, fixture::gaussian(rng, 10, 50));
    const AggregatedDesign d = assemble_design(s, ConcentrationMatrix(Y), kv);
    const Eigen::MatrixXd R = penalty_matrix(kv);
    const Eigen::MatrixXd D2 = design_matrix(kv, grid, 2);
    const Eigen::MatrixXd rough = D2 * fit_penalized(d, R, 0.0).coefficients.transpose();
    const Eigen::MatrixXd flat = D2 * fit_penalized(d, R, 1e12).coefficients.transpose();
    for (Eigen::Index l = 0; l < 3; ++l) {
        EXPECT_LT(flat.col(l).cwiseAbs().maxCoeff(), 1e-6 * rough.col(l).cwiseAbs().maxCoeff());
    }
}

TEST(Penalized, ContinuousInLambda) {
    std::mt19937_64 rng(8);
    const auto p = fixture::problem(rng, 8, 40, 10, 2, 0.5, false);
    const AggregatedDesign d = assemble_design(p.spectra, p.Y, p.kv);
    const PenalizedSystem sys(d, penalty_matrix(p.kv));
    for (double lambda : {0.0, 1.0, 1e3}) {
        const Eigen::MatrixXd c0 = sys.coefficients(lambda);
        const double e = 1e-6;
        const double slope1 = (sys.coefficients(lambda + e) - c0).norm() / e;
        const double slope2 = (sys.coefficients(lambda + 2 * e) - c0).norm() / (2 * e);
        EXPECT_TRUE(std::isfinite(slope1));
        EXPECT_NEAR(slope1, slope2, 1e-2 * std::max(slope2, 1e-12) + 1e-6);
    }
}

TEST(Penalized, NegativeLambdaRejected) {
    std::mt19937_64 rng(9);
    const auto p = fixture::problem(rng, 5, 30, 8, 2, 0.1, false);
    const AggregatedDesign d = assemble_design(p.spectra, p.Y, p.kv);
    EXPECT_EQ(kind_of([&] { fit_penalized(d, penalty_matrix(p.kv), -1.0); }), ErrorKind::invalid_parameter);
}

TEST(Gcv, TraceIdentities) {
    std::mt19937_64 rng(10);
    const auto p = fixture::problem(rng, 4, 30, 8, 2, 0.5, false);
    const AggregatedDesign d = assemble_design(p.spectra, p.Y, p.kv);
    const Eigen::MatrixXd R = penalty_matrix(p.kv);
    const PenalizedSystem sys(d, R);
    EXPECT_NEAR(sys.hat_trace(0.0), 24.0, 1e-8);

    const Eigen::MatrixXd X = d.dense_design();
    const Eigen::MatrixXd P = oracle::kron(Eigen::MatrixXd::Identity(3, 3), R);
    for (double lambda : {1e-3, 1.0, 1e3, 1e6}) {
        const Eigen::MatrixXd H = X * (X.transpose() * X + lambda * P).ldlt().solve(X.transpose());
        EXPECT_NEAR(sys.hat_trace(lambda), H.diagonal().sum(), 1e-6);
    }
}

TEST(Gcv, SelectionMatchesBruteForce) {
    std::mt19937_64 rng(11);
    const auto p = fixture::problem(rng, 6, 40, 12, 2, 0.8, true);
    const AggregatedDesign d = assemble_design(p.spectra, p.Y, p.kv);
    const Eigen::MatrixXd R = penalty_matrix(p.kv);
    const Eigen::MatrixXd X = d.dense_design();
    const Eigen::VectorXd w = d.stacked_response();
    const Eigen::MatrixXd P = oracle::kron(Eigen::MatrixXd::Identity(3, 3), R);
    const double n = static_cast<double>(w.size());

    const std::vector<double> grid = log_grid(1e-2, 1e8, 21);
    double best = std::numeric_limits<double>::infinity(), best_lambda = 0.0, prev_rss = -1.0;
    for (double lambda : grid) {
        const Eigen::MatrixXd A = (X.transpose() * X + lambda * P).ldlt().solve(X.transpose());
        const Eigen::VectorXd fitted = X * (A * w);
        const double rss = (w - fitted).squaredNorm();
        const double tr = (X * A).trace();
        const double score = n * rss / ((n - tr) * (n - tr));
        EXPECT_NEAR(gcv_score(d, R, lambda), score, 1e-8 * score);
        EXPECT_GE(rss, prev_rss - 1e-9 * rss);
        prev_rss = rss;
        if (score < best) {
            best = score;
            best_lambda = lambda;
        }
    }
    EXPECT_DOUBLE_EQ(select_lambda(d, R, grid), best_lambda);
    EXPECT_DOUBLE_EQ(select_lambda(d, R, {42.0}), 42.0);
    EXPECT_EQ(kind_of([&] { select_lambda(d, R, {}); }), ErrorKind::invalid_parameter);
}

TEST(Gcv, TiesGoToTheLargerLambda) {
    std::mt19937_64 rng(12);
    const auto p = fixture::problem(rng, 6, 40, 8, 2, 0.5, false);
    const AggregatedDesign d = assemble_design(p.spectra, p.Y, p.kv);
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(8, 8);  // GCV then ignores lambda
    EXPECT_DOUBLE_EQ(select_lambda(d, zero, {1.0, 100.0, 10.0}), 100.0);
}

TEST(Gcv, DegenerateWhenTraceReachesObservations) {
    // I = 1, m = 1, K = T: n = (I + 1) T = (m + 1) K = p.
    std::mt19937_64 rng(13);
    const auto p = fixture::problem(rng, 1, 6, 6, 1, 0.1, false);
    const AggregatedDesign d = assemble_design(p.spectra, p.Y, p.kv);
    EXPECT_EQ(kind_of([&] { gcv_score(d, penalty_matrix(p.kv), 0.0); }), ErrorKind::degenerate_gcv);
}

TEST(Gls, MatchesWhitenedOls) {
    std::mt19937_64 rng(14);
    const auto p = fixture::problem(rng, 3, 10, 5, 1, 0.3, false);
    CovarianceModel cov;
    cov.sigma2 = Eigen::VectorXd::Constant(1, 2.0);
    cov.phi = Eigen::VectorXd::Constant(1, 0.02);
    const CalibrationModel model = fit_gls(p.spectra, p.Y, p.kv, cov);

    const Eigen::MatrixXd S = dense_covariance(p.Y, p.spectra.grid(), cov.sigma2, cov.phi);
    const Eigen::MatrixXd L = S.llt().matrixL();
    const Eigen::MatrixXd X = oracle::kron(unaugmented_block(p.Y), p.B);
    const Eigen::MatrixXd Xw = L.triangularView<Eigen::Lower>().solve(X);
    const Eigen::VectorXd ww = L.triangularView<Eigen::Lower>().solve(stacked_rows(p.spectra.absorbance()));
    const Eigen::VectorXd beta = Xw.colPivHouseholderQr().solve(ww);
    EXPECT_LT(rel(stack_coefficients(model.coefficients), beta), 1e-10);
}

TEST(Gls, ScalarCovarianceIsOls) {
    // Rows of Y on a circle give every sample the same block sigma2 r^2 I
    // once phi is large enough to zero the off-diagonal terms.
    std::mt19937_64 rng(15);
    const Eigen::Index I = 7, T = 40;
    Eigen::MatrixXd Y(I, 2);
    for (Eigen::Index i = 0; i < I; ++i) {
        const double a = 0.2 + 0.18 * static_cast<double>(i);
        Y(i, 0) = 0.8 * std::cos(a);
        Y(i, 1) = 0.8 * std::sin(a);
    }
    const Eigen::VectorXd grid = fixture::linspace(350.0, 750.0, T);
    const KnotVector kv = make_knots(350.0, 750.0, 9);
    const SpectraSet s(grid, fixture::gaussian(rng, I, T) + Eigen::MatrixXd::Constant(I, T, 3.0));
    const ConcentrationMatrix Yc(Y);
    CovarianceModel cov;
    cov.sigma2 = Eigen::VectorXd::Constant(2, 3.0);
    cov.phi = Eigen::VectorXd::Constant(2, 1e3);

    const CalibrationModel gls = fit_gls(s, Yc, kv, cov);
    const Eigen::MatrixXd X = oracle::kron(unaugmented_block(Yc), design_matrix(kv, grid));
    const Eigen::VectorXd beta = oracle::normal_equations(X, stacked_rows(s.absorbance()));
    EXPECT_LT(rel(stack_coefficients(gls.coefficients), beta), 1e-8);

    const CalibrationModel augmented = fit_gls(s, Yc, kv, cov, GlsOptions{true, 1.0});
    const CalibrationModel ols = fit_ols(assemble_design(s, Yc, kv));
    EXPECT_LT(rel(augmented.coefficients, ols.coefficients), 1e-8);
}

TEST(Gls, ClosedSamplesNeedTheAugmentedVariant) {
    std::mt19937_64 rng(16);
    const auto p = fixture::problem(rng, 10, 40, 8, 3, 0.1, true);
    CovarianceModel cov;
    cov.sigma2 = Eigen::VectorXd::Constant(3, 1.0);
    cov.phi = Eigen::VectorXd::Constant(3, 0.1);
    EXPECT_EQ(kind_of([&] { fit_gls(p.spectra, p.Y, p.kv, cov); }), ErrorKind::singular_design);
    const CalibrationModel model = fit_gls(p.spectra, p.Y, p.kv, cov, GlsOptions{true, 1.0});
    EXPECT_TRUE(model.closed);
    cov.sigma2(1) = -1.0;
    EXPECT_EQ(kind_of([&] { fit_gls(p.spectra, p.Y, p.kv, cov, GlsOptions{true, 1.0}); }),
              ErrorKind::invalid_parameter);
}

TEST(Gls, BeatsOlsUnderStrongCorrelation) {
    // Gauss-Markov: with the true covariance, GLS has the smaller error.
    const Eigen::Index I = 15, T = 41;
    const Eigen::VectorXd grid = fixture::linspace(350.0, 750.0, T);
    const KnotVector kv = make_knots(350.0, 750.0, 8);
    const Eigen::MatrixXd B = design_matrix(kv, grid);
    std::mt19937_64 rng(17);
    Eigen::MatrixXd Y(I, 1);
    for (Eigen::Index i = 0; i < I; ++i) Y(i, 0) = 0.3 + 1.4 * static_cast<double>(i) / (I - 1);
    const ConcentrationMatrix Yc(Y);
    Eigen::MatrixXd C = fixture::gaussian(rng, 2, 8);
    C.row(0).array() += 5.0;
    CovarianceModel cov;
    cov.sigma2 = Eigen::VectorXd::Constant(1, 4.0);
    cov.phi = Eigen::VectorXd::Constant(1, 0.01);
    const Eigen::MatrixXd S = dense_covariance(Yc, grid, cov.sigma2, cov.phi);
    const Eigen::MatrixXd L = S.llt().matrixL();
    const Eigen::MatrixXd X = oracle::kron(unaugmented_block(Yc), B);
    const Eigen::VectorXd beta = stack_coefficients(C);

    double err_gls = 0.0, err_ols = 0.0;
    for (int r = 0; r < 50; ++r) {
        const Eigen::VectorXd w = X * beta + L * fixture::gaussian(rng, I * T, 1);
        Eigen::MatrixXd W(I, T);
        for (Eigen::Index i = 0; i < I; ++i) W.row(i) = w.segment(i * T, T).transpose();
        const SpectraSet s(grid, W);
        err_gls += (stack_coefficients(fit_gls(s, Yc, kv, cov).coefficients) - beta).squaredNorm();
        err_ols += (oracle::normal_equations(X, w) - beta).squaredNorm();
    }
    EXPECT_LT(err_gls, err_ols);
}

TEST(Covariance, RecoversExponentialParameters) {
    const Eigen::Index I = 40, T = 81;
    const Eigen::VectorXd grid = fixture::linspace(350.0, 750.0, T);
    const KnotVector kv = make_knots(350.0, 750.0, 14);
    std::mt19937_64 rng(18);
    Eigen::MatrixXd Y(I, 1);
    for (Eigen::Index i = 0; i < I; ++i) Y(i, 0) = 0.6 + 0.8 * static_cast<double>(i) / (I - 1);
    const ConcentrationMatrix Yc(Y);
    const double sigma2 = 4.0, phi = 0.05;
    Eigen::MatrixXd E(T, T);
    for (Eigen::Index a = 0; a < T; ++a) {
        for (Eigen::Index b = 0; b < T; ++b) E(a, b) = sigma2 * std::exp(-phi * std::abs(grid(a) - grid(b)));
    }
    const Eigen::MatrixXd L = E.llt().matrixL();
    Eigen::MatrixXd W(I, T);
    for (Eigen::Index i = 0; i < I; ++i) {
        W.row(i) = (Eigen::VectorXd::Constant(T, 10.0) + Y(i, 0) * L * fixture::gaussian(rng, T, 1)).transpose();
    }
    const SpectraSet s(grid, W);
    const AggregatedDesign d = assemble_design(s, Yc, kv);
    const CovarianceModel cov = fit_covariance(ols_residuals(d, fit_ols(d)), Yc, grid);
    EXPECT_NEAR(cov.sigma2(0), sigma2, 0.25 * sigma2);
    EXPECT_NEAR(cov.phi(0), phi, 0.3 * phi);
    EXPECT_FALSE(cov.clipped);

    EXPECT_EQ(kind_of([&] { fit_covariance(Eigen::MatrixXd::Zero(I, T), Yc, grid); }),
              ErrorKind::degenerate_covariance);
}

TEST(Covariance, NnlsMatchesActiveSetOracle) {
    // Tiny problem checked against exhaustive search over active sets.
    std::mt19937_64 rng(19);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::MatrixXd A = fixture::gaussian(rng, 8, 3);
        const Eigen::VectorXd y = fixture::gaussian(rng, 8, 1);
        const Eigen::VectorXd x = detail::nnls_gram(A.transpose() * A, A.transpose() * y);
        double best = std::numeric_limits<double>::infinity();
        for (int mask = 0; mask < 8; ++mask) {
            std::vector<Eigen::Index> cols;
            for (Eigen::Index j = 0; j < 3; ++j) {
                if (mask & (1 << j)) cols.push_back(j);
            }
            Eigen::VectorXd cand = Eigen::VectorXd::Zero(3);
            if (!cols.empty()) {
                Eigen::MatrixXd As(8, static_cast<Eigen::Index>(cols.size()));
                for (std::size_t k = 0; k < cols.size(); ++k) As.col(static_cast<Eigen::Index>(k)) = A.col(cols[k]);
                const Eigen::VectorXd z = As.colPivHouseholderQr().solve(y);
                if ((z.array() < 0.0).any()) continue;
                for (std::size_t k = 0; k < cols.size(); ++k) cand(cols[k]) = z(static_cast<Eigen::Index>(k));
            }
            best = std::min(best, (A * cand - y).squaredNorm());
        }
        EXPECT_TRUE((x.array() >= 0.0).all());
        EXPECT_NEAR((A * x - y).squaredNorm(), best, 1e-10 * (1.0 + best));
    }
}

TEST(Calibrate, ConfiguredMethods) {
    std::mt19937_64 rng(20);
    const auto p = fixture::problem(rng, 12, 81, 14, 3, 0.3, true);
    FitConfig cfg;
    cfg.K = 14;
    const CalibrationModel k = calibrate(p.spectra, p.Y, cfg);
    EXPECT_EQ(k.method, Method::ols_k);
    EXPECT_EQ(k.basis.size(), 14);

    cfg.method = Method::ols_ss;
    const CalibrationModel ss = calibrate(p.spectra, p.Y, cfg);
    EXPECT_EQ(ss.basis.size(), 83);
    EXPECT_GT(ss.lambda, 0.0);
    EXPECT_TRUE(ss.diagnostics.gcv.has_value());
    cfg.lambda = 330.0;
    EXPECT_DOUBLE_EQ(calibrate(p.spectra, p.Y, cfg).lambda, 330.0);

    cfg.method = Method::gls_k;
    cfg.gls_augmented = true;
    const CalibrationModel gls = calibrate(p.spectra, p.Y, cfg);
    ASSERT_TRUE(gls.covariance.has_value());
    EXPECT_EQ(gls.covariance->sigma2.size(), 3);
    const FitConfig pinned = pin_for_folds(cfg, gls);
    ASSERT_TRUE(pinned.covariance.has_value());
    EXPECT_EQ(pinned.covariance->phi, gls.covariance->phi);
}
