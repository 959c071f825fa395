/**
 * @file calibrate.hpp
 * @brief Calibration estimators: ordinary least squares on a fixed basis,
 * penalized least squares with GCV-selected smoothing, and generalized least
 * squares under a fitted exponential covariance model.
 *
 * The expanded design is a Kronecker product M (x) B. Least squares on it
 * factorizes: the OLS solution is M^+ W (B^+)' from two small QR
 * factorizations, and the penalized normal equations
 *
 *     M'M C G + lambda C R = M' W B,      G = B'B,
 *
 * decouple after an eigendecomposition of M'M and a simultaneous
 * diagonalization of (G, R). Both routes are checked in the tests against
 * dense solves of the materialized system.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nirfda/basis.hpp"
#include "nirfda/errors.hpp"
#include "nirfda/model.hpp"

namespace nirfda {

namespace detail {

inline double constraint_max_abs(const Eigen::MatrixXd& C, const Eigen::MatrixXd& B) {
    if (C.rows() <= 1) return 0.0;
    const Eigen::VectorXd sum_coef = C.bottomRows(C.rows() - 1).colwise().sum().transpose();
    return (B * sum_coef).cwiseAbs().maxCoeff();
}

inline double kronecker_rss(const AggregatedDesign& d, const Eigen::MatrixXd& C) {
    return (d.response - d.concentration_block * C * d.basis_design.transpose()).squaredNorm();
}

inline CalibrationModel make_model(const AggregatedDesign& d, Eigen::MatrixXd C, Method method,
                                   double lambda) {
    CalibrationModel model;
    model.basis = d.basis;
    model.coefficients = std::move(C);
    model.method = method;
    model.lambda = lambda;
    model.analytes = d.analytes;
    model.diagnostics.constraint_max_abs =
        constraint_max_abs(model.coefficients, d.basis_design);
    model.closed = is_closed(d.concentration_block.topRows(d.samples()).rightCols(d.analyte_count()));
    return model;
}

} // namespace detail

/// Ordinary least squares on the expanded system.
inline CalibrationModel fit_ols(const AggregatedDesign& design) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_m(design.concentration_block);
    qr_m.setThreshold(1e-10);
    if (qr_m.rank() < design.concentration_block.cols()) {
        fail(ErrorKind::singular_design, "concentration block (1 | Y; 0 | 1') is rank deficient");
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_b(design.basis_design);
    qr_b.setThreshold(1e-10);
    if (qr_b.rank() < design.basis_design.cols()) {
        fail(ErrorKind::singular_design,
             "basis block is rank deficient: " + std::to_string(design.wavelengths()) +
                 " wavelengths cannot identify " + std::to_string(design.basis_size()) + " B-splines");
    }
    // (M (x) B)^+ = M^+ (x) B^+, so C = M^+ W (B^+)'.
    const Eigen::MatrixXd left = qr_m.solve(design.response);              // (m+1) x T
    Eigen::MatrixXd C = qr_b.solve(left.transpose()).transpose();          // (m+1) x K

    CalibrationModel model = detail::make_model(design, std::move(C), Method::ols_k, 0.0);
    const double n = static_cast<double>(design.observations());
    const double p = static_cast<double>(design.parameters());
    model.diagnostics.rss = detail::kronecker_rss(design, model.coefficients);
    model.diagnostics.hat_trace = p;
    if (n > p) model.diagnostics.gcv = n * model.diagnostics.rss / ((n - p) * (n - p));
    return model;
}

/// Penalized least squares in closed form for any lambda >= 0.
///
/// Built once per design; every lambda afterwards costs O((m+1) K^2).
class PenalizedSystem {
public:
    PenalizedSystem(const AggregatedDesign& design, const Eigen::MatrixXd& R) : design_(&design) {
        const Eigen::Index K = design.basis_size();
        if (R.rows() != K || R.cols() != K) {
            fail(ErrorKind::shape, "penalty matrix is " + std::to_string(R.rows()) + "x" +
                                       std::to_string(R.cols()) + ", basis has K=" + std::to_string(K));
        }
        const Eigen::MatrixXd& M = design.concentration_block;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_m(M.transpose() * M);
        mode_weights_ = es_m.eigenvalues().cwiseMax(0.0);
        mode_vectors_ = es_m.eigenvectors();
        if (mode_weights_.minCoeff() <= 1e-12 * mode_weights_.maxCoeff()) {
            fail(ErrorKind::singular_design, "concentration block (1 | Y; 0 | 1') is rank deficient");
        }

        const Eigen::MatrixXd G = design.basis_design.transpose() * design.basis_design;
        const double r_trace = R.trace();
        const double scale = r_trace > 0.0 ? G.trace() / r_trace : 1.0;
        const Eigen::MatrixXd S = G + scale * R;
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(G, S);
        if (ges.info() != Eigen::Success) {
            fail(ErrorKind::singular_design, "basis Gram and penalty share a null direction");
        }
        V_ = ges.eigenvectors();
        fit_weights_ = (V_.transpose() * G * V_).diagonal().cwiseMax(0.0);
        penalty_weights_ = (V_.transpose() * R * V_).diagonal().cwiseMax(0.0);

        rhs_ = mode_vectors_.transpose() * (M.transpose() * design.response * design.basis_design) * V_;
    }

    [[nodiscard]] Eigen::MatrixXd coefficients(double lambda) const {
        check_lambda(lambda);
        Eigen::MatrixXd Z(rhs_.rows(), rhs_.cols());
        for (Eigen::Index j = 0; j < rhs_.rows(); ++j) {
            for (Eigen::Index k = 0; k < rhs_.cols(); ++k) {
                Z(j, k) = rhs_(j, k) / denominator(j, k, lambda);
            }
        }
        return mode_vectors_ * Z * V_.transpose();
    }

    /// tr H(lambda) = tr((X'X + lambda I (x) R)^{-1} X'X).
    [[nodiscard]] double hat_trace(double lambda) const {
        check_lambda(lambda);
        double tr = 0.0;
        for (Eigen::Index j = 0; j < mode_weights_.size(); ++j) {
            for (Eigen::Index k = 0; k < fit_weights_.size(); ++k) {
                tr += mode_weights_(j) * fit_weights_(k) / denominator(j, k, lambda);
            }
        }
        return tr;
    }

    [[nodiscard]] double rss(const Eigen::MatrixXd& C) const { return detail::kronecker_rss(*design_, C); }

    [[nodiscard]] double gcv(double lambda) const {
        const double n = static_cast<double>(design_->observations());
        const double tr = hat_trace(lambda);
        if (!(n - tr > 1e-9 * n)) {
            fail(ErrorKind::degenerate_gcv, "trace of the hat matrix (" + std::to_string(tr) +
                                                ") reaches the number of observations");
        }
        const double r = rss(coefficients(lambda));
        return n * r / ((n - tr) * (n - tr));
    }

    [[nodiscard]] const AggregatedDesign& design() const noexcept { return *design_; }

private:
    [[nodiscard]] double denominator(Eigen::Index j, Eigen::Index k, double lambda) const {
        return mode_weights_(j) * fit_weights_(k) + lambda * penalty_weights_(k);
    }

    void check_lambda(double lambda) const {
        if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
            fail(ErrorKind::invalid_parameter, "lambda must be finite and >= 0");
        }
        // The solve is diagonal, so only a denominator that vanishes on its
        // own scale makes the system singular.
        bool singular = false;
        for (Eigen::Index j = 0; j < mode_weights_.size(); ++j) {
            for (Eigen::Index k = 0; k < fit_weights_.size(); ++k) {
                const double own = mode_weights_(j) + lambda * penalty_weights_(k);
                if (!(denominator(j, k, lambda) > 1e-13 * own)) singular = true;
            }
        }
        if (singular) {
            fail(ErrorKind::singular_design,
                 lambda == 0.0 ? "unpenalized system is singular (more B-splines than the grid identifies)"
                               : "penalized system is singular");
        }
    }

    const AggregatedDesign* design_;
    Eigen::VectorXd mode_weights_;
    Eigen::MatrixXd mode_vectors_;
    Eigen::MatrixXd V_;
    Eigen::VectorXd fit_weights_;
    Eigen::VectorXd penalty_weights_;
    Eigen::MatrixXd rhs_;
};

/// Minimizes ||W+ - X+ beta||^2 + lambda beta' (I_{m+1} (x) R) beta.
/// All m+1 coefficient blocks, the baseline included, carry the penalty.
inline CalibrationModel fit_penalized(const PenalizedSystem& system, double lambda) {
    const AggregatedDesign& d = system.design();
    CalibrationModel model = detail::make_model(d, system.coefficients(lambda), Method::ols_ss, lambda);
    model.diagnostics.rss = system.rss(model.coefficients);
    model.diagnostics.hat_trace = system.hat_trace(lambda);
    const double n = static_cast<double>(d.observations());
    const double tr = model.diagnostics.hat_trace;
    if (n - tr > 1e-9 * n) model.diagnostics.gcv = n * model.diagnostics.rss / ((n - tr) * (n - tr));
    return model;
}

inline CalibrationModel fit_penalized(const AggregatedDesign& design, const Eigen::MatrixXd& R, double lambda) {
    if (!(lambda >= 0.0)) fail(ErrorKind::invalid_parameter, "lambda must be >= 0");
    return fit_penalized(PenalizedSystem(design, R), lambda);
}

/// n RSS(lambda) / (n - tr H(lambda))^2 with n = I T + T.
inline double gcv_score(const AggregatedDesign& design, const Eigen::MatrixXd& R, double lambda) {
    return PenalizedSystem(design, R).gcv(lambda);
}

/// GCV minimizer over a candidate grid; ties go to the larger lambda.
inline double select_lambda(const PenalizedSystem& system, const std::vector<double>& grid) {
    if (grid.empty()) fail(ErrorKind::invalid_parameter, "lambda grid is empty");
    std::vector<double> scores;
    scores.reserve(grid.size());
    for (double lambda : grid) {
        if (!(lambda > 0.0)) fail(ErrorKind::invalid_parameter, "lambda grid values must be positive");
        scores.push_back(system.gcv(lambda));
    }
    const double best = *std::min_element(scores.begin(), scores.end());
    const double tie = best * (1.0 + 1e-12);
    double chosen = -1.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (scores[i] <= tie) chosen = std::max(chosen, grid[i]);
    }
    return chosen;
}

inline double select_lambda(const AggregatedDesign& design, const Eigen::MatrixXd& R,
                            const std::vector<double>& grid) {
    return select_lambda(PenalizedSystem(design, R), grid);
}

inline std::vector<double> log_grid(double lo, double hi, int points) {
    if (!(lo > 0.0 && hi > lo) || points < 1) fail(ErrorKind::invalid_parameter, "invalid log grid");
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(points));
    if (points == 1) return {lo};
    const double a = std::log10(lo), b = std::log10(hi);
    for (int i = 0; i < points; ++i) out.push_back(std::pow(10.0, a + (b - a) * i / (points - 1)));
    return out;
}

/// 1e-4 .. 1e8, four points per decade.
inline std::vector<double> default_lambda_grid() { return log_grid(1e-4, 1e8, 49); }

// ---------------------------------------------------------------------------
// Covariance model fitting
// ---------------------------------------------------------------------------

struct CovarianceFitOptions {
    double phi_min = 1e-4;
    double phi_max = 10.0;
    int phi_points = 50;
    int max_sweeps = 20;
    bool refine = true;  ///< golden-section polish of each phi between grid neighbours
};

/// Empirical covariogram: one row per sample, one column per distinct lag.
struct Covariogram {
    Eigen::VectorXd lags;
    Eigen::MatrixXd values;  ///< I x lags
    Eigen::VectorXd counts;  ///< pairs per lag
};

inline Covariogram empirical_covariogram(const Eigen::MatrixXd& residuals, const Eigen::VectorXd& grid) {
    const Eigen::Index T = grid.size();
    if (residuals.cols() != T) fail(ErrorKind::shape, "residual columns do not match the grid");
    const double range = grid(T - 1) - grid(0);
    std::map<long long, Eigen::Index> bins;
    std::vector<double> lag_values;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
    std::vector<Eigen::Index> pair_bin;
    for (Eigen::Index a = 0; a < T; ++a) {
        for (Eigen::Index b = a; b < T; ++b) {
            const double lag = grid(b) - grid(a);
            const auto key = static_cast<long long>(std::llround(lag / range * 1e9));
            auto [it, inserted] = bins.try_emplace(key, static_cast<Eigen::Index>(lag_values.size()));
            if (inserted) lag_values.push_back(lag);
            pairs.emplace_back(a, b);
            pair_bin.push_back(it->second);
        }
    }
    Covariogram cg;
    const auto nb = static_cast<Eigen::Index>(lag_values.size());
    cg.lags = Eigen::Map<const Eigen::VectorXd>(lag_values.data(), nb);
    cg.values = Eigen::MatrixXd::Zero(residuals.rows(), nb);
    cg.counts = Eigen::VectorXd::Zero(nb);
    for (std::size_t q = 0; q < pairs.size(); ++q) {
        const auto [a, b] = pairs[q];
        cg.values.col(pair_bin[q]) += residuals.col(a).cwiseProduct(residuals.col(b));
        cg.counts(pair_bin[q]) += 1.0;
    }
    for (Eigen::Index d = 0; d < nb; ++d) cg.values.col(d) /= cg.counts(d);
    return cg;
}

namespace detail {

/// Lawson-Hanson active set for min 0.5 x'Qx - b'x subject to x >= 0.
inline Eigen::VectorXd nnls_gram(const Eigen::MatrixXd& Q, const Eigen::VectorXd& b) {
    const Eigen::Index n = b.size();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    std::vector<bool> active(static_cast<std::size_t>(n), false);
    const double tol = 1e-12 * std::max(1.0, b.cwiseAbs().maxCoeff());

    auto solve_passive = [&](Eigen::VectorXd& z) {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (active[static_cast<std::size_t>(j)]) idx.push_back(j);
        }
        z.setZero(n);
        if (idx.empty()) return;
        const auto p = static_cast<Eigen::Index>(idx.size());
        Eigen::MatrixXd Qp(p, p);
        Eigen::VectorXd bp(p);
        for (Eigen::Index r = 0; r < p; ++r) {
            bp(r) = b(idx[r]);
            for (Eigen::Index c = 0; c < p; ++c) Qp(r, c) = Q(idx[r], idx[c]);
        }
        const Eigen::VectorXd zp = Qp.ldlt().solve(bp);
        for (Eigen::Index r = 0; r < p; ++r) z(idx[r]) = zp(r);
    };

    for (int outer = 0; outer < 3 * static_cast<int>(n) + 10; ++outer) {
        const Eigen::VectorXd w = b - Q * x;
        Eigen::Index pick = -1;
        double best = tol;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (!active[static_cast<std::size_t>(j)] && w(j) > best) {
                best = w(j);
                pick = j;
            }
        }
        if (pick < 0) break;
        active[static_cast<std::size_t>(pick)] = true;
        Eigen::VectorXd z;
        for (int inner = 0; inner < 3 * static_cast<int>(n) + 10; ++inner) {
            solve_passive(z);
            bool feasible = true;
            double alpha = 1.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (active[static_cast<std::size_t>(j)] && z(j) <= 0.0) {
                    feasible = false;
                    const double denom = x(j) - z(j);
                    if (denom > 0.0) alpha = std::min(alpha, x(j) / denom);
                }
            }
            if (feasible) {
                x = z;
                break;
            }
            x += alpha * (z - x);
            for (Eigen::Index j = 0; j < n; ++j) {
                if (active[static_cast<std::size_t>(j)] && x(j) <= 1e-15) {
                    active[static_cast<std::size_t>(j)] = false;
                    x(j) = 0.0;
                }
            }
        }
    }
    return x;
}

/// Least-squares fit of the covariogram for fixed decay rates.
class CovariogramObjective {
public:
    CovariogramObjective(const Covariogram& cg, const Eigen::MatrixXd& Y)
        : lags_(cg.lags), y2_(Y.array().square().matrix()) {
        y2_gram_ = y2_.transpose() * y2_;                // m x m
        weighted_values_ = cg.values.transpose() * y2_;  // lags x m
        total_ = cg.values.squaredNorm();
    }

    /// Returns the objective value and writes the NNLS variances.
    double evaluate(const Eigen::VectorXd& phi, Eigen::VectorXd& sigma2) const {
        const Eigen::Index m = phi.size();
        Eigen::MatrixXd E(lags_.size(), m);
        for (Eigen::Index l = 0; l < m; ++l) E.col(l) = (-phi(l) * lags_.array()).exp().matrix();
        const Eigen::MatrixXd lag_gram = E.transpose() * E;
        const Eigen::MatrixXd Q = y2_gram_.cwiseProduct(lag_gram);
        Eigen::VectorXd b(m);
        for (Eigen::Index l = 0; l < m; ++l) b(l) = E.col(l).dot(weighted_values_.col(l));
        sigma2 = nnls_gram(Q, b);
        return total_ - 2.0 * sigma2.dot(b) + sigma2.dot(Q * sigma2);
    }

private:
    Eigen::VectorXd lags_;
    Eigen::MatrixXd y2_;
    Eigen::MatrixXd y2_gram_;
    Eigen::MatrixXd weighted_values_;
    double total_ = 0.0;
};

} // namespace detail

inline constexpr double covariance_floor = 1e-12;

/// Fits (sigma2_l, phi_l) to the per-sample empirical covariograms of
/// calibration residuals by least squares.
///
/// Decay rates are searched on a log grid (common rate first, then
/// coordinate sweeps per analyte, then a golden-section polish); for each
/// candidate the variances solve a nonnegative linear least-squares problem.
inline CovarianceModel fit_covariance(const Eigen::MatrixXd& residuals, const ConcentrationMatrix& Y,
                                      const Eigen::VectorXd& grid, const CovarianceFitOptions& opt = {}) {
    if (residuals.rows() != Y.samples()) fail(ErrorKind::shape, "residual rows do not match concentrations");
    if (residuals.rows() < 2) fail(ErrorKind::insufficient_samples, "covariance fit needs I >= 2");
    if (!(residuals.cwiseAbs().maxCoeff() > 0.0)) {
        fail(ErrorKind::degenerate_covariance, "residuals are identically zero");
    }
    if (opt.phi_points < 2 || !(opt.phi_min > 0.0 && opt.phi_max > opt.phi_min)) {
        fail(ErrorKind::invalid_parameter, "invalid decay-rate search grid");
    }
    const Covariogram cg = empirical_covariogram(residuals, grid);
    const detail::CovariogramObjective objective(cg, Y.values());
    const std::vector<double> phis = log_grid(opt.phi_min, opt.phi_max, opt.phi_points);
    const Eigen::Index m = Y.analyte_count();

    Eigen::VectorXd sigma2;
    std::vector<std::size_t> pos(static_cast<std::size_t>(m), 0);
    auto phi_of = [&](const std::vector<std::size_t>& p) {
        Eigen::VectorXd phi(m);
        for (Eigen::Index l = 0; l < m; ++l) phi(l) = phis[p[static_cast<std::size_t>(l)]];
        return phi;
    };

    double best = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < phis.size(); ++g) {
        std::vector<std::size_t> p(static_cast<std::size_t>(m), g);
        const double f = objective.evaluate(phi_of(p), sigma2);
        if (f < best) {
            best = f;
            pos = p;
        }
    }
    if (m > 1) {
        for (int sweep = 0; sweep < opt.max_sweeps; ++sweep) {
            bool changed = false;
            for (Eigen::Index l = 0; l < m; ++l) {
                auto trial = pos;
                for (std::size_t g = 0; g < phis.size(); ++g) {
                    trial[static_cast<std::size_t>(l)] = g;
                    const double f = objective.evaluate(phi_of(trial), sigma2);
                    if (f < best * (1.0 - 1e-14)) {
                        best = f;
                        pos[static_cast<std::size_t>(l)] = g;
                        changed = true;
                    }
                }
            }
            if (!changed) break;
        }
    }

    Eigen::VectorXd phi = phi_of(pos);
    if (opt.refine) {
        const double golden = 0.5 * (std::sqrt(5.0) - 1.0);
        for (int pass = 0; pass < 2; ++pass) {
            for (Eigen::Index l = 0; l < m; ++l) {
                const std::size_t g = pos[static_cast<std::size_t>(l)];
                double a = std::log(phis[g > 0 ? g - 1 : g]);
                double b = std::log(phis[std::min(g + 1, phis.size() - 1)]);
                auto f = [&](double log_phi) {
                    Eigen::VectorXd trial = phi;
                    trial(l) = std::exp(log_phi);
                    return objective.evaluate(trial, sigma2);
                };
                double c = b - golden * (b - a), d = a + golden * (b - a);
                double fc = f(c), fd = f(d);
                for (int it = 0; it < 40; ++it) {
                    if (fc < fd) {
                        b = d; d = c; fd = fc;
                        c = b - golden * (b - a);
                        fc = f(c);
                    } else {
                        a = c; c = d; fc = fd;
                        d = a + golden * (b - a);
                        fd = f(d);
                    }
                }
                const double candidate = std::exp(0.5 * (a + b));
                Eigen::VectorXd trial = phi;
                trial(l) = candidate;
                const double fv = objective.evaluate(trial, sigma2);
                if (fv < best) {
                    best = fv;
                    phi = trial;
                }
            }
        }
    }

    CovarianceModel model;
    objective.evaluate(phi, sigma2);
    model.phi = phi;
    model.sigma2 = sigma2;
    for (Eigen::Index l = 0; l < m; ++l) {
        if (!(model.sigma2(l) > covariance_floor)) {
            model.sigma2(l) = covariance_floor;
            model.clipped = true;
        }
    }
    return model;
}

// ---------------------------------------------------------------------------
// Generalized least squares
// ---------------------------------------------------------------------------

struct GlsOptions {
    /// Keep the constraint rows (with covariance equal to the mean data-row
    /// variance). Required for closed samples, where (1 | Y) is singular.
    bool augmented = false;
    double constraint_weight = 1.0;
};

namespace detail {

/// Whitened per-sample pieces of the GLS normal equations. Stored separately
/// so a leave-one-out refit only subtracts one sample.
struct GlsTerms {
    KnotVector basis;
    Eigen::MatrixXd B;
    Eigen::MatrixXd M;                     ///< I x (m+1) rows (1, y_i)
    std::vector<Eigen::MatrixXd> gram;     ///< B' S_i^{-1} B
    std::vector<Eigen::VectorXd> rhs;      ///< B' S_i^{-1} W_i
    Eigen::MatrixXd constraint_normal;     ///< empty unless augmented
    std::vector<std::string> analytes;
    CovarianceModel covariance;
    Eigen::MatrixXd W;
    Eigen::VectorXd grid;
};

inline GlsTerms build_gls_terms(const SpectraSet& spectra, const ConcentrationMatrix& Y, const KnotVector& kv,
                                const CovarianceModel& cov, const GlsOptions& opt) {
    if (spectra.samples() != Y.samples()) fail(ErrorKind::shape, "spectra and concentrations disagree on I");
    const Eigen::Index m = Y.analyte_count();
    if (cov.sigma2.size() != m || cov.phi.size() != m) {
        fail(ErrorKind::shape, "covariance model must have one (sigma2, phi) pair per analyte");
    }
    if (!((cov.sigma2.array() > 0.0).all() && (cov.phi.array() > 0.0).all())) {
        fail(ErrorKind::invalid_parameter, "covariance parameters must be positive");
    }
    GlsTerms t;
    t.basis = kv;
    t.grid = spectra.grid();
    t.B = design_matrix(kv, spectra.grid_span());
    require_full_column_rank(t.B, ErrorKind::singular_design, "basis block");
    const Eigen::Index I = spectra.samples();
    t.M.resize(I, m + 1);
    t.M.col(0).setOnes();
    t.M.rightCols(m) = Y.values();
    if (opt.augmented) {
        require_full_column_rank(augmented_concentrations(Y.values(), opt.constraint_weight),
                                 ErrorKind::collinear_concentrations, "augmented concentration matrix");
    } else if (Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(t.M).setThreshold(1e-10).rank() < m + 1) {
        fail(ErrorKind::singular_design,
             "(1 | Y) is rank deficient (closed samples?); use the augmented GLS variant");
    }

    const double jitter = 1e-8 * cov.sigma2.mean();
    double mean_variance = 0.0;
    t.gram.reserve(static_cast<std::size_t>(I));
    t.rhs.reserve(static_cast<std::size_t>(I));
    for (Eigen::Index i = 0; i < I; ++i) {
        Eigen::MatrixXd S = cov.block(Y.values().row(i), spectra.grid());
        mean_variance += S.diagonal().mean() / static_cast<double>(I);
        Eigen::LLT<Eigen::MatrixXd> llt(S);
        if (llt.info() != Eigen::Success) {
            S.diagonal().array() += jitter;
            llt.compute(S);
            if (llt.info() != Eigen::Success) {
                fail(ErrorKind::covariance_conditioning,
                     "covariance block of sample " + std::to_string(i + 1) +
                         " is not positive definite even after jitter");
            }
        }
        const Eigen::MatrixXd Z = llt.matrixL().solve(t.B);
        const Eigen::VectorXd w = llt.matrixL().solve(spectra.absorbance().row(i).transpose());
        t.gram.push_back(Z.transpose() * Z);
        t.rhs.push_back(Z.transpose() * w);
    }
    if (opt.augmented) {
        Eigen::VectorXd c = Eigen::VectorXd::Constant(m + 1, opt.constraint_weight);
        c(0) = 0.0;
        const Eigen::MatrixXd G = t.B.transpose() * t.B / mean_variance;
        const Eigen::Index K = kv.size();
        t.constraint_normal = Eigen::MatrixXd::Zero((m + 1) * K, (m + 1) * K);
        for (Eigen::Index a = 0; a <= m; ++a) {
            for (Eigen::Index b = 0; b <= m; ++b) t.constraint_normal.block(a * K, b * K, K, K) = c(a) * c(b) * G;
        }
    }
    t.analytes = Y.analytes();
    t.covariance = cov;
    t.W = spectra.absorbance();
    return t;
}

/// Solves the GLS normal equations, optionally leaving one sample out.
inline Eigen::MatrixXd solve_gls(const GlsTerms& t, Eigen::Index exclude = -1) {
    const Eigen::Index blocks = t.M.cols();
    const Eigen::Index K = t.B.cols();
    Eigen::MatrixXd N = t.constraint_normal.size() > 0 ? t.constraint_normal
                                                        : Eigen::MatrixXd::Zero(blocks * K, blocks * K);
    Eigen::VectorXd r = Eigen::VectorXd::Zero(blocks * K);
    for (Eigen::Index i = 0; i < t.M.rows(); ++i) {
        if (i == exclude) continue;
        for (Eigen::Index a = 0; a < blocks; ++a) {
            r.segment(a * K, K) += t.M(i, a) * t.rhs[static_cast<std::size_t>(i)];
            for (Eigen::Index b = 0; b < blocks; ++b) {
                N.block(a * K, b * K, K, K) += (t.M(i, a) * t.M(i, b)) * t.gram[static_cast<std::size_t>(i)];
            }
        }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(N);
    if (llt.info() != Eigen::Success) fail(ErrorKind::singular_design, "GLS normal equations are singular");
    return unstack_coefficients(llt.solve(r), blocks);
}

inline CalibrationModel gls_model(const GlsTerms& t, Eigen::MatrixXd C) {
    CalibrationModel model;
    model.basis = t.basis;
    model.coefficients = std::move(C);
    model.method = Method::gls_k;
    model.analytes = t.analytes;
    model.covariance = t.covariance;
    const Eigen::MatrixXd fitted = t.M * model.coefficients * t.B.transpose();
    model.diagnostics.rss = (t.W - fitted).squaredNorm();
    model.diagnostics.hat_trace = static_cast<double>(model.coefficients.size());
    model.diagnostics.constraint_max_abs = constraint_max_abs(model.coefficients, t.B);
    model.closed = is_closed(t.M.rightCols(t.M.cols() - 1));
    return model;
}

} // namespace detail

/// beta = (X' S^{-1} X)^{-1} X' S^{-1} W with block-diagonal S (one T x T
/// block per sample built from the covariance model and that sample's
/// concentrations), solved through per-sample Cholesky whitening.
inline CalibrationModel fit_gls(const SpectraSet& spectra, const ConcentrationMatrix& Y, const KnotVector& kv,
                                const CovarianceModel& cov, const GlsOptions& opt = {}) {
    const detail::GlsTerms terms = detail::build_gls_terms(spectra, Y, kv, cov, opt);
    return detail::gls_model(terms, detail::solve_gls(terms));
}

// ---------------------------------------------------------------------------
// Configured fitting
// ---------------------------------------------------------------------------

struct FitConfig {
    Method method = Method::ols_k;
    int K = 14;
    std::optional<double> lambda;  ///< fixed smoothing parameter; GCV over lambda_grid when empty
    std::vector<double> lambda_grid = default_lambda_grid();
    std::optional<CovarianceModel> covariance;  ///< GLS; estimated from OLS residuals when empty
    CovarianceFitOptions covariance_options;
    bool gls_augmented = false;
    double constraint_weight = 1.0;
    bool reselect_per_fold = false;
};

inline KnotVector knots_for(const FitConfig& cfg, const SpectraSet& spectra) {
    if (cfg.method == Method::ols_ss) return make_knots_from_sites(spectra.grid_span());
    return make_knots(spectra.grid()(0), spectra.grid()(spectra.wavelengths() - 1), cfg.K);
}

/// Residual curves W_i - fitted_i of an OLS-K fit, used to estimate the
/// covariance model.
inline Eigen::MatrixXd ols_residuals(const AggregatedDesign& design, const CalibrationModel& model) {
    const Eigen::Index I = design.samples();
    const Eigen::MatrixXd fitted =
        design.concentration_block.topRows(I) * model.coefficients * design.basis_design.transpose();
    return design.response.topRows(I) - fitted;
}

inline CalibrationModel calibrate(const SpectraSet& spectra, const ConcentrationMatrix& Y, const FitConfig& cfg) {
    const KnotVector kv = knots_for(cfg, spectra);
    switch (cfg.method) {
    case Method::ols_k:
        return fit_ols(assemble_design(spectra, Y, kv, cfg.constraint_weight));
    case Method::ols_ss: {
        const AggregatedDesign design = assemble_design(spectra, Y, kv, cfg.constraint_weight);
        const PenalizedSystem system(design, penalty_matrix(kv));
        const double lambda = cfg.lambda ? *cfg.lambda : select_lambda(system, cfg.lambda_grid);
        return fit_penalized(system, lambda);
    }
    case Method::gls_k: {
        CovarianceModel cov;
        if (cfg.covariance) {
            cov = *cfg.covariance;
        } else {
            const AggregatedDesign design = assemble_design(spectra, Y, kv, cfg.constraint_weight);
            const CalibrationModel ols = fit_ols(design);
            cov = fit_covariance(ols_residuals(design, ols), Y, spectra.grid(), cfg.covariance_options);
        }
        return fit_gls(spectra, Y, kv, cov, GlsOptions{cfg.gls_augmented, cfg.constraint_weight});
    }
    }
    fail(ErrorKind::invalid_parameter, "unknown method");
}

/// Pins the data-driven choices of a full-data fit (lambda, covariance) so
/// that leave-one-out refits reuse them, unless per-fold reselection is on.
inline FitConfig pin_for_folds(FitConfig cfg, const CalibrationModel& full_fit) {
    if (cfg.reselect_per_fold) return cfg;
    if (cfg.method == Method::ols_ss) cfg.lambda = full_fit.lambda;
    if (cfg.method == Method::gls_k && full_fit.covariance) cfg.covariance = full_fit.covariance;
    return cfg;
}

} // namespace nirfda
