/**
 * @file baselines.hpp
 * @brief Classical multivariate calibration: MLR, PCR and PLS (NIPALS PLS2).
 *
 * Spectra and concentrations are mean-centred before fitting; the model keeps
 * the means so prediction is y_mean + (w - w_mean) b. These methods treat the
 * T wavelengths as unrelated variables and so cannot predict on a different
 * grid than the one they were trained on.
 */
#pragma once

#include <cmath>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "nirfda/errors.hpp"
#include "nirfda/model.hpp"

namespace nirfda {

enum class MultivariateMethod { mlr, pcr, pls };

constexpr std::string_view to_string(MultivariateMethod m) noexcept {
    switch (m) {
    case MultivariateMethod::mlr: return "MLR";
    case MultivariateMethod::pcr: return "PCR";
    case MultivariateMethod::pls: return "PLS";
    }
    return "?";
}

struct FixedComponents {
    int count = 3;
};

/// Smallest component count whose principal components explain at least
/// `fraction` of the centred spectral variance. PLS uses the count PCR
/// would pick on the same data.
struct VarianceFraction {
    double fraction = 0.9;
};

using ComponentSelector = std::variant<FixedComponents, VarianceFraction>;

struct MultivariateModel {
    MultivariateMethod method = MultivariateMethod::mlr;
    Eigen::MatrixXd coefficients;   ///< T x m
    Eigen::RowVectorXd intercept;   ///< y_mean - w_mean b
    Eigen::RowVectorXd w_mean;
    Eigen::RowVectorXd y_mean;
    Eigen::VectorXd grid;
    int components = 0;
    double explained_fraction = 1.0;
    std::vector<std::string> analytes;
};

namespace detail {

struct Centred {
    Eigen::MatrixXd X, Y;
    Eigen::RowVectorXd x_mean, y_mean;
};

inline Centred centre(const SpectraSet& spectra, const ConcentrationMatrix& Y) {
    if (spectra.samples() != Y.samples()) fail(ErrorKind::shape, "spectra and concentrations disagree on I");
    if (spectra.samples() < 2) fail(ErrorKind::insufficient_samples, "multivariate fits need I >= 2");
    Centred c;
    c.x_mean = spectra.absorbance().colwise().mean();
    c.y_mean = Y.values().colwise().mean();
    c.X = spectra.absorbance().rowwise() - c.x_mean;
    c.Y = Y.values().rowwise() - c.y_mean;
    if (!(c.X.cwiseAbs().maxCoeff() > 0.0)) fail(ErrorKind::degenerate_spectra, "spectra are constant across samples");
    return c;
}

inline MultivariateModel finish(MultivariateMethod method, const SpectraSet& spectra, const ConcentrationMatrix& Y,
                                const Centred& c, Eigen::MatrixXd coef) {
    MultivariateModel model;
    model.method = method;
    model.coefficients = std::move(coef);
    model.w_mean = c.x_mean;
    model.y_mean = c.y_mean;
    model.intercept = c.y_mean - c.x_mean * model.coefficients;
    model.grid = spectra.grid();
    model.analytes = Y.analytes();
    return model;
}

inline double rank_tolerance(const Eigen::VectorXd& singular_values, Eigen::Index rows, Eigen::Index cols) {
    if (singular_values.size() == 0) return 0.0;
    return singular_values(0) * static_cast<double>(std::max(rows, cols)) * 1e-12;
}

} // namespace detail

/// Smallest p with (l_1 + ... + l_p) / sum(l) >= q for eigenvalues sorted
/// in decreasing order.
inline int components_for_fraction(const Eigen::VectorXd& eigenvalues, double q) {
    if (!(q > 0.0 && q < 1.0)) fail(ErrorKind::invalid_parameter, "variance fraction must lie in (0, 1)");
    const double total = eigenvalues.sum();
    if (!(total > 0.0)) fail(ErrorKind::degenerate_spectra, "spectral variance is zero");
    double cumulative = 0.0;
    for (Eigen::Index p = 0; p < eigenvalues.size(); ++p) {
        cumulative += eigenvalues(p);
        if (cumulative / total >= q - 1e-12) return static_cast<int>(p + 1);
    }
    return static_cast<int>(eigenvalues.size());
}

/// Minimum-norm least squares of centred Y on centred spectra.
inline MultivariateModel fit_mlr(const SpectraSet& spectra, const ConcentrationMatrix& Y) {
    const detail::Centred c = detail::centre(spectra, Y);
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(c.X);
    MultivariateModel model = detail::finish(MultivariateMethod::mlr, spectra, Y, c, cod.solve(c.Y));
    model.components = static_cast<int>(cod.rank());
    return model;
}

/// Principal directions of the centred spectra (right singular vectors) and
/// the matching singular values, truncated at numerical rank.
struct PrincipalAxes {
    Eigen::MatrixXd directions;  ///< T x rank
    Eigen::VectorXd singular_values;
    Eigen::MatrixXd left;        ///< I x rank
    [[nodiscard]] Eigen::VectorXd variances() const { return singular_values.array().square().matrix(); }
};

inline PrincipalAxes principal_axes(const Eigen::MatrixXd& X) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& s = svd.singularValues();
    const double tol = detail::rank_tolerance(s, X.rows(), X.cols());
    Eigen::Index rank = 0;
    while (rank < s.size() && s(rank) > tol) ++rank;
    return {svd.matrixV().leftCols(rank), s.head(rank), svd.matrixU().leftCols(rank)};
}

inline int resolve_components(const ComponentSelector& selector, const PrincipalAxes& axes) {
    const auto rank = static_cast<int>(axes.singular_values.size());
    int p = 0;
    if (const auto* fixed = std::get_if<FixedComponents>(&selector)) {
        p = fixed->count;
        if (p < 1) fail(ErrorKind::invalid_components, "component count must be >= 1");
    } else {
        p = components_for_fraction(axes.variances(), std::get<VarianceFraction>(selector).fraction);
    }
    if (p > rank) {
        fail(ErrorKind::invalid_components, "requested " + std::to_string(p) +
                                                " components but the centred spectra have rank " +
                                                std::to_string(rank));
    }
    return p;
}

inline MultivariateModel fit_pcr(const SpectraSet& spectra, const ConcentrationMatrix& Y,
                                 const ComponentSelector& selector) {
    const detail::Centred c = detail::centre(spectra, Y);
    const PrincipalAxes axes = principal_axes(c.X);
    const int p = resolve_components(selector, axes);
    // Scores U_p S_p are orthogonal, so the regression on them is diagonal.
    const Eigen::MatrixXd Vp = axes.directions.leftCols(p);
    const Eigen::VectorXd inv_s = axes.singular_values.head(p).cwiseInverse();
    Eigen::MatrixXd coef = Vp * inv_s.asDiagonal() * (axes.left.leftCols(p).transpose() * c.Y);
    MultivariateModel model = detail::finish(MultivariateMethod::pcr, spectra, Y, c, std::move(coef));
    model.components = p;
    const Eigen::VectorXd var = axes.variances();
    model.explained_fraction = var.head(p).sum() / var.sum();
    return model;
}

/// Score and weight vectors of a PLS fit, kept for inspection.
struct PlsFactors {
    Eigen::MatrixXd weights;   ///< T x p
    Eigen::MatrixXd scores;    ///< I x p
    Eigen::MatrixXd loadings;  ///< T x p
    Eigen::MatrixXd y_loadings;///< m x p
};

inline constexpr int nipals_max_iterations = 500;
inline constexpr double nipals_tolerance = 1e-10;

/// NIPALS PLS2 with deflation of both blocks.
inline PlsFactors nipals_pls(Eigen::MatrixXd X, Eigen::MatrixXd Y, int components) {
    const Eigen::Index T = X.cols(), m = Y.cols(), I = X.rows();
    PlsFactors f;
    f.weights.resize(T, components);
    f.scores.resize(I, components);
    f.loadings.resize(T, components);
    f.y_loadings.resize(m, components);
    const double scale = X.norm() * std::max(Y.norm(), 1e-300);
    int extracted = 0;
    for (int a = 0; a < components; ++a) {
        // Start at the inner loop's fixed point, the leading right singular
        // vector of X'Y; plain power iteration stalls when the top singular
        // values are nearly tied.
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(X.transpose() * Y, Eigen::ComputeThinV);
        Eigen::VectorXd u = Y * svd.matrixV().col(0);
        Eigen::VectorXd t_old = Eigen::VectorXd::Zero(I);
        Eigen::VectorXd w, t, c;
        bool converged = false, exhausted = false;
        for (int it = 0; it < nipals_max_iterations; ++it) {
            w = X.transpose() * u;
            const double wn = w.norm();
            if (!(wn > 1e-14 * scale)) {
                exhausted = true;
                break;
            }
            w /= wn;
            t = X * w;
            c = Y.transpose() * t / t.squaredNorm();
            u = Y * c / c.squaredNorm();
            if ((t - t_old).norm() <= nipals_tolerance * t.norm()) {
                converged = true;
                break;
            }
            t_old = t;
        }
        if (exhausted) break;  // residual Y orthogonal to X: no further directions
        if (!converged) {
            fail(ErrorKind::convergence, "NIPALS did not converge for component " + std::to_string(a + 1));
        }
        const Eigen::VectorXd p = X.transpose() * t / t.squaredNorm();
        X -= t * p.transpose();
        Y -= t * c.transpose();
        f.weights.col(a) = w;
        f.scores.col(a) = t;
        f.loadings.col(a) = p;
        f.y_loadings.col(a) = c;
        ++extracted;
    }
    f.weights.conservativeResize(T, extracted);
    f.scores.conservativeResize(I, extracted);
    f.loadings.conservativeResize(T, extracted);
    f.y_loadings.conservativeResize(m, extracted);
    return f;
}

inline MultivariateModel fit_pls(const SpectraSet& spectra, const ConcentrationMatrix& Y,
                                 const ComponentSelector& selector) {
    const detail::Centred c = detail::centre(spectra, Y);
    const PrincipalAxes axes = principal_axes(c.X);
    const int p = resolve_components(selector, axes);
    const PlsFactors f = nipals_pls(c.X, c.Y, p);
    if (f.weights.cols() == 0) fail(ErrorKind::degenerate_spectra, "no PLS component could be extracted");
    // b = W (P'W)^{-1} C'
    const Eigen::MatrixXd PtW = f.loadings.transpose() * f.weights;
    Eigen::MatrixXd coef = f.weights * PtW.partialPivLu().solve(f.y_loadings.transpose());
    MultivariateModel model = detail::finish(MultivariateMethod::pls, spectra, Y, c, std::move(coef));
    model.components = static_cast<int>(f.weights.cols());
    const double total = c.X.squaredNorm();
    double explained = 0.0;
    for (Eigen::Index a = 0; a < f.scores.cols(); ++a) {
        explained += f.scores.col(a).squaredNorm() * f.loadings.col(a).squaredNorm();
    }
    model.explained_fraction = explained / total;
    return model;
}

inline Eigen::MatrixXd predict_multivariate(const MultivariateModel& model, const SpectraSet& spectra) {
    if (spectra.wavelengths() != model.grid.size() ||
        (spectra.grid() - model.grid).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + model.grid.cwiseAbs().maxCoeff())) {
        fail(ErrorKind::grid_mismatch, "multivariate models only predict on their training grid (" +
                                           std::to_string(model.grid.size()) + " wavelengths)");
    }
    return (spectra.absorbance() * model.coefficients).rowwise() + model.intercept;
}

inline Eigen::MatrixXd predict_matrix(const MultivariateModel& model, const SpectraSet& spectra) {
    return predict_multivariate(model, spectra);
}

} // namespace nirfda
