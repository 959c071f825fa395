/**
 * @file predict.hpp
 * @brief Concentration prediction from fitted curves, leave-one-out
 * jackknife standard deviations, confidence intervals, and standard error of
 * prediction (SEP).
 */
#pragma once

#include <cmath>
#include <concepts>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nirfda/calibrate.hpp"
#include "nirfda/errors.hpp"
#include "nirfda/model.hpp"

namespace nirfda {

struct Prediction {
    Eigen::MatrixXd y_hat;            ///< J x m
    Eigen::VectorXd residual_norm;    ///< ||W* - theta_0 - A y_hat|| per sample
    std::vector<bool> out_of_simplex; ///< some estimate outside [0, 1]
};

/// Per-sample least squares W*_j ~ theta_0 + A y_j on the prediction grid,
/// y_j = (A'A)^{-1} A' (W*_j - theta_0). For a model calibrated on closed
/// samples A has the null vector 1, and the solution is taken subject to
/// sum(y_j) = 1 instead. Estimates are never clipped.
inline Prediction predict_concentrations(const CalibrationModel& model, const SpectraSet& spectra) {
    const Eigen::MatrixXd curves = model.curves(spectra.grid_span());
    const Eigen::Index m = model.analyte_count();
    const Eigen::MatrixXd A = curves.rightCols(m);
    const Eigen::MatrixXd centred = spectra.absorbance().transpose().colwise() - curves.col(0);  // T x J
    const Eigen::Index J = spectra.samples();
    Prediction out;
    if (!model.closed) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
        qr.setThreshold(1e-10);
        if (qr.rank() < m) {
            fail(ErrorKind::degenerate_analytes, "analyte curves are linearly dependent on the prediction grid (rank " +
                                                     std::to_string(qr.rank()) + " < " + std::to_string(m) + ")");
        }
        out.y_hat = qr.solve(centred).transpose();
    } else {
        // y = 1/m + N z with N an orthonormal basis of the complement of 1.
        const Eigen::VectorXd y0 = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
        out.y_hat = y0.transpose().replicate(J, 1);
        if (m > 1) {
            const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(Eigen::MatrixXd::Ones(m, 1)).householderQ();
            const Eigen::MatrixXd N = Q.rightCols(m - 1);
            Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A * N);
            qr.setThreshold(1e-10);
            if (qr.rank() < m - 1) {
                fail(ErrorKind::degenerate_analytes,
                     "analyte curves leave the closed concentrations unidentified on the prediction grid (rank " +
                         std::to_string(qr.rank()) + " < " + std::to_string(m - 1) + ")");
            }
            const Eigen::MatrixXd z = qr.solve(centred.colwise() - A * y0);
            out.y_hat += (N * z).transpose();
        }
    }
    out.residual_norm = (centred - A * out.y_hat.transpose()).colwise().norm().transpose();
    out.out_of_simplex.resize(static_cast<std::size_t>(J));
    for (Eigen::Index j = 0; j < J; ++j) {
        out.out_of_simplex[static_cast<std::size_t>(j)] =
            (out.y_hat.row(j).array() < 0.0).any() || (out.y_hat.row(j).array() > 1.0).any();
    }
    return out;
}

inline Eigen::MatrixXd predict_matrix(const CalibrationModel& model, const SpectraSet& spectra) {
    return predict_concentrations(model, spectra).y_hat;
}

/// A fit function usable by the jackknife harness: it maps calibration data
/// to a model for which `predict_matrix(model, spectra)` is defined.
template <class F>
concept Calibrator = requires(const F& f, const SpectraSet& s, const ConcentrationMatrix& y) {
    { predict_matrix(f(s, y), s) } -> std::convertible_to<Eigen::MatrixXd>;
};

/// S_l = sqrt((1/I) sum_i (y_{i,l} - yhat^{(-i)}_{i,l})^2), where
/// fold(i) returns the prediction of sample i from a model fitted without it.
/// Folds are accumulated in index order.
template <class FoldPredict>
Eigen::VectorXd jackknife_from_folds(const Eigen::MatrixXd& Y, FoldPredict&& fold) {
    const Eigen::Index I = Y.rows();
    if (I < 3) fail(ErrorKind::insufficient_samples, "jackknife needs I >= 3");
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(Y.cols());
    for (Eigen::Index i = 0; i < I; ++i) {
        Eigen::RowVectorXd y_hat;
        try {
            y_hat = fold(i);
        } catch (const Error& e) {
            fail(ErrorKind::fold_failure, "fold " + std::to_string(i + 1) + " failed: " +
                                              std::string(e.category()) + ": " + e.what());
        }
        sum += (Y.row(i) - y_hat).array().square().matrix().transpose();
    }
    return (sum / static_cast<double>(I)).cwiseSqrt();
}

/// Method-agnostic leave-one-out harness.
template <Calibrator Fit>
Eigen::VectorXd jackknife_sd(const SpectraSet& spectra, const ConcentrationMatrix& Y, const Fit& fit) {
    if (spectra.samples() != Y.samples()) fail(ErrorKind::shape, "spectra and concentrations disagree on I");
    return jackknife_from_folds(Y.values(), [&](Eigen::Index i) -> Eigen::RowVectorXd {
        const auto model = fit(spectra.without(i), Y.without(i));
        return predict_matrix(model, spectra.select({i})).row(0);
    });
}

/// Jackknife for the functional estimators. Lambda and the covariance model
/// are taken from the full-data fit unless the config asks for per-fold
/// reselection; GLS folds reuse the whitened per-sample terms.
inline Eigen::VectorXd jackknife_sd(const SpectraSet& spectra, const ConcentrationMatrix& Y,
                                    const FitConfig& cfg) {
    if (spectra.samples() != Y.samples()) fail(ErrorKind::shape, "spectra and concentrations disagree on I");
    if (Y.samples() < 3) fail(ErrorKind::insufficient_samples, "jackknife needs I >= 3");
    const CalibrationModel full = calibrate(spectra, Y, cfg);
    const FitConfig pinned = pin_for_folds(cfg, full);

    if (cfg.method == Method::gls_k && !cfg.reselect_per_fold) {
        const detail::GlsTerms terms = detail::build_gls_terms(
            spectra, Y, knots_for(pinned, spectra), *full.covariance,
            GlsOptions{pinned.gls_augmented, pinned.constraint_weight});
        return jackknife_from_folds(Y.values(), [&](Eigen::Index i) -> Eigen::RowVectorXd {
            if (pinned.gls_augmented) {
                require_full_column_rank(augmented_concentrations(Y.without(i).values(), pinned.constraint_weight),
                                         ErrorKind::collinear_concentrations, "augmented concentration matrix");
            }
            const CalibrationModel model = detail::gls_model(terms, detail::solve_gls(terms, i));
            return predict_matrix(model, spectra.select({i})).row(0);
        });
    }
    return jackknife_sd(spectra, Y, [&](const SpectraSet& s, const ConcentrationMatrix& y) {
        return calibrate(s, y, pinned);
    });
}

struct Intervals {
    Eigen::MatrixXd lower;
    Eigen::MatrixXd upper;
};

/// y_hat +/- c S_l, elementwise.
inline Intervals confidence_intervals(const Eigen::MatrixXd& y_hat, const Eigen::VectorXd& S, double c = 1.96) {
    if (!(c > 0.0)) fail(ErrorKind::invalid_parameter, "interval multiplier c must be positive");
    if (S.size() != y_hat.cols()) fail(ErrorKind::shape, "one standard deviation per analyte is required");
    if ((S.array() < 0.0).any()) fail(ErrorKind::invalid_parameter, "standard deviations must be >= 0");
    const Eigen::RowVectorXd half = c * S.transpose();
    return {y_hat.rowwise() - half, y_hat.rowwise() + half};
}

struct SepReport {
    Eigen::VectorXd per_component;
    double overall = 0.0;
    Eigen::Index J = 0;
    Eigen::Index m = 0;
};

/// SEP_l = sqrt(sum_j r_{j,l}^2 / (J-1)); overall = sqrt(sum r^2 / (mJ-1)).
inline SepReport sep(const Eigen::MatrixXd& y_true, const Eigen::MatrixXd& y_hat) {
    if (y_true.rows() != y_hat.rows() || y_true.cols() != y_hat.cols()) {
        fail(ErrorKind::shape, "truth and prediction tables differ in shape");
    }
    const Eigen::Index J = y_true.rows(), m = y_true.cols();
    if (J < 2) fail(ErrorKind::insufficient_samples, "SEP needs at least two prediction samples");
    const Eigen::ArrayXXd r2 = (y_true - y_hat).array().square();
    SepReport out;
    out.J = J;
    out.m = m;
    out.per_component = (r2.colwise().sum() / static_cast<double>(J - 1)).sqrt().matrix().transpose();
    out.overall = std::sqrt(r2.sum() / static_cast<double>(m * J - 1));
    return out;
}

} // namespace nirfda
