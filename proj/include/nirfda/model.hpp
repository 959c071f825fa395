/**
 * @file model.hpp
 * @brief Aggregated Beer-Lambert data model.
 *
 * A spectrum W_i(t) is the baseline curve theta_0 plus the analyte curves
 * theta_l weighted by concentrations y_{i,l}, plus noise. Every curve is a
 * B-spline expansion with coefficients beta_{l,k}; the coefficient matrix
 * has the baseline in row 0 and one analyte per following row.
 *
 * Stacking convention shared by every module: the response vector is
 * sample-major, wavelength-minor (W_1(t_1), ..., W_1(t_T), W_2(t_1), ...).
 */
#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nirfda/basis.hpp"
#include "nirfda/errors.hpp"

namespace nirfda {

enum class SpectraRole { calibration, prediction };

/// Wavelength grid plus an I x T matrix of absorbances (one sample per row).
class SpectraSet {
public:
    SpectraSet() = default;

    SpectraSet(Eigen::VectorXd grid, Eigen::MatrixXd absorbance,
               SpectraRole role = SpectraRole::calibration, std::vector<std::string> ids = {})
        : grid_(std::move(grid)), absorbance_(std::move(absorbance)), role_(role), ids_(std::move(ids)) {
        if (grid_.size() < 2) fail(ErrorKind::shape, "spectra need at least two wavelengths");
        if (absorbance_.rows() < 1) fail(ErrorKind::shape, "spectra need at least one sample");
        if (absorbance_.cols() != grid_.size()) {
            fail(ErrorKind::shape, "absorbance has " + std::to_string(absorbance_.cols()) +
                                       " columns but the grid has " + std::to_string(grid_.size()) +
                                       " points");
        }
        for (Eigen::Index n = 1; n < grid_.size(); ++n) {
            if (!(grid_(n) > grid_(n - 1))) {
                fail(ErrorKind::invalid_grid, "wavelengths must be strictly increasing (index " +
                                                  std::to_string(n) + ")");
            }
        }
        if (!absorbance_.allFinite()) fail(ErrorKind::shape, "absorbance contains non-finite values");
        if (ids_.empty()) {
            for (Eigen::Index i = 0; i < absorbance_.rows(); ++i) ids_.push_back("s" + std::to_string(i + 1));
        }
        if (static_cast<Eigen::Index>(ids_.size()) != absorbance_.rows()) {
            fail(ErrorKind::shape, "sample id count does not match absorbance rows");
        }
    }

    [[nodiscard]] const Eigen::VectorXd& grid() const noexcept { return grid_; }
    [[nodiscard]] std::span<const double> grid_span() const noexcept {
        return {grid_.data(), static_cast<std::size_t>(grid_.size())};
    }
    [[nodiscard]] const Eigen::MatrixXd& absorbance() const noexcept { return absorbance_; }
    [[nodiscard]] SpectraRole role() const noexcept { return role_; }
    [[nodiscard]] const std::vector<std::string>& ids() const noexcept { return ids_; }
    [[nodiscard]] Eigen::Index samples() const noexcept { return absorbance_.rows(); }
    [[nodiscard]] Eigen::Index wavelengths() const noexcept { return grid_.size(); }

    [[nodiscard]] SpectraSet select(const std::vector<Eigen::Index>& rows) const {
        Eigen::MatrixXd sub(static_cast<Eigen::Index>(rows.size()), wavelengths());
        std::vector<std::string> ids;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            sub.row(static_cast<Eigen::Index>(r)) = absorbance_.row(rows[r]);
            ids.push_back(ids_[static_cast<std::size_t>(rows[r])]);
        }
        return {grid_, std::move(sub), role_, std::move(ids)};
    }

    [[nodiscard]] SpectraSet without(Eigen::Index sample) const {
        std::vector<Eigen::Index> rows;
        for (Eigen::Index i = 0; i < samples(); ++i) {
            if (i != sample) rows.push_back(i);
        }
        return select(rows);
    }

private:
    Eigen::VectorXd grid_;
    Eigen::MatrixXd absorbance_;
    SpectraRole role_ = SpectraRole::calibration;
    std::vector<std::string> ids_;
};

/// I x m concentrations measured by a reference method.
class ConcentrationMatrix {
public:
    ConcentrationMatrix() = default;

    explicit ConcentrationMatrix(Eigen::MatrixXd values, std::vector<std::string> analytes = {})
        : values_(std::move(values)), analytes_(std::move(analytes)) {
        if (!values_.allFinite()) fail(ErrorKind::shape, "concentrations contain non-finite values");
        if (analytes_.empty()) {
            for (Eigen::Index l = 0; l < values_.cols(); ++l) analytes_.push_back("y" + std::to_string(l + 1));
        }
        if (static_cast<Eigen::Index>(analytes_.size()) != values_.cols()) {
            fail(ErrorKind::shape, "analyte label count does not match concentration columns");
        }
    }

    [[nodiscard]] const Eigen::MatrixXd& values() const noexcept { return values_; }
    [[nodiscard]] const std::vector<std::string>& analytes() const noexcept { return analytes_; }
    [[nodiscard]] Eigen::Index samples() const noexcept { return values_.rows(); }
    [[nodiscard]] Eigen::Index analyte_count() const noexcept { return values_.cols(); }
    /// Negative concentrations are allowed but flagged.
    [[nodiscard]] bool has_negative() const noexcept { return (values_.array() < 0.0).any(); }

    [[nodiscard]] ConcentrationMatrix select(const std::vector<Eigen::Index>& rows) const {
        Eigen::MatrixXd sub(static_cast<Eigen::Index>(rows.size()), analyte_count());
        for (std::size_t r = 0; r < rows.size(); ++r) sub.row(static_cast<Eigen::Index>(r)) = values_.row(rows[r]);
        return ConcentrationMatrix(std::move(sub), analytes_);
    }

    [[nodiscard]] ConcentrationMatrix without(Eigen::Index sample) const {
        std::vector<Eigen::Index> rows;
        for (Eigen::Index i = 0; i < samples(); ++i) {
            if (i != sample) rows.push_back(i);
        }
        return select(rows);
    }

private:
    Eigen::MatrixXd values_;
    std::vector<std::string> analytes_;
};

enum class Method { ols_k, ols_ss, gls_k };

constexpr std::string_view to_string(Method m) noexcept {
    switch (m) {
    case Method::ols_k: return "OLS-K";
    case Method::ols_ss: return "OLS-SS";
    case Method::gls_k: return "GLS-K";
    }
    return "?";
}

struct FitDiagnostics {
    double rss = 0.0;
    std::optional<double> gcv;
    double hat_trace = 0.0;
    double constraint_max_abs = 0.0;
};

/// Exponential-decay covariance per analyte:
/// Sigma_i(s, t) = sum_l y_{i,l}^2 sigma2_l exp(-phi_l |t - s|).
struct CovarianceModel {
    Eigen::VectorXd sigma2;
    Eigen::VectorXd phi;
    bool clipped = false;  ///< some sigma2 hit the positivity floor

    [[nodiscard]] Eigen::MatrixXd block(const Eigen::RowVectorXd& y, const Eigen::VectorXd& grid) const {
        const Eigen::Index T = grid.size();
        Eigen::MatrixXd S = Eigen::MatrixXd::Zero(T, T);
        for (Eigen::Index l = 0; l < sigma2.size(); ++l) {
            const double w = y(l) * y(l) * sigma2(l);
            if (w == 0.0) continue;
            for (Eigen::Index a = 0; a < T; ++a) {
                for (Eigen::Index b = 0; b <= a; ++b) {
                    const double v = w * std::exp(-phi(l) * std::abs(grid(a) - grid(b)));
                    S(a, b) += v;
                    if (a != b) S(b, a) += v;
                }
            }
        }
        return S;
    }
};

/// Fitted baseline and analyte curves.
struct CalibrationModel {
    KnotVector basis;
    Eigen::MatrixXd coefficients;  ///< (m+1) x K, row 0 = baseline
    Method method = Method::ols_k;
    double lambda = 0.0;
    std::vector<std::string> analytes;
    FitDiagnostics diagnostics;
    std::optional<CovarianceModel> covariance;
    /// Calibration rows all summed to one. The fit then pins the analyte
    /// curves to sum exactly to zero, so prediction imposes the same closure.
    bool closed = false;

    [[nodiscard]] Eigen::Index analyte_count() const noexcept { return coefficients.rows() - 1; }

    /// T x (m+1) matrix of curve values, column 0 = baseline.
    [[nodiscard]] Eigen::MatrixXd curves(std::span<const double> grid) const {
        return design_matrix(basis, grid) * coefficients.transpose();
    }
    [[nodiscard]] Eigen::MatrixXd curves(const Eigen::VectorXd& grid) const {
        return curves(std::span<const double>(grid.data(), static_cast<std::size_t>(grid.size())));
    }
};

/// Expanded least-squares system for calibration.
///
/// The dense design X+ = M (x) B is never formed by the solvers; they work on
/// the Kronecker factors. M is (1 | Y) with the constraint row (0 | w 1')
/// appended, and the response has T zeros appended (the last row of
/// `response`).
struct AggregatedDesign {
    Eigen::MatrixXd concentration_block;  ///< M, (I+1) x (m+1)
    Eigen::MatrixXd basis_design;         ///< B, T x K
    Eigen::MatrixXd response;             ///< (I+1) x T, last row zero
    KnotVector basis;
    Eigen::VectorXd grid;
    std::vector<std::string> analytes;
    double constraint_weight = 1.0;

    [[nodiscard]] Eigen::Index samples() const noexcept { return concentration_block.rows() - 1; }
    [[nodiscard]] Eigen::Index wavelengths() const noexcept { return basis_design.rows(); }
    [[nodiscard]] Eigen::Index basis_size() const noexcept { return basis_design.cols(); }
    [[nodiscard]] Eigen::Index analyte_count() const noexcept { return concentration_block.cols() - 1; }
    [[nodiscard]] Eigen::Index observations() const noexcept { return response.size(); }
    [[nodiscard]] Eigen::Index parameters() const noexcept {
        return concentration_block.cols() * basis_design.cols();
    }

    /// X+ materialized: ((I+1) T) x ((m+1) K).
    [[nodiscard]] Eigen::MatrixXd dense_design() const {
        const Eigen::Index T = wavelengths(), K = basis_size();
        Eigen::MatrixXd X(concentration_block.rows() * T, concentration_block.cols() * K);
        for (Eigen::Index i = 0; i < concentration_block.rows(); ++i) {
            for (Eigen::Index l = 0; l < concentration_block.cols(); ++l) {
                X.block(i * T, l * K, T, K) = concentration_block(i, l) * basis_design;
            }
        }
        return X;
    }

    /// W+ stacked sample-major.
    [[nodiscard]] Eigen::VectorXd stacked_response() const {
        Eigen::VectorXd w(response.size());
        for (Eigen::Index i = 0; i < response.rows(); ++i) {
            w.segment(i * response.cols(), response.cols()) = response.row(i).transpose();
        }
        return w;
    }
};

/// Every row of Y sums to one.
inline bool is_closed(const Eigen::MatrixXd& Y, double tol = 1e-9) {
    return Y.rows() > 0 && ((Y.rowwise().sum().array() - 1.0).abs() <= tol).all();
}

/// Flattens a coefficient matrix into the stacked parameter vector
/// (baseline block first, K entries per block).
inline Eigen::VectorXd stack_coefficients(const Eigen::MatrixXd& C) {
    Eigen::VectorXd v(C.size());
    for (Eigen::Index l = 0; l < C.rows(); ++l) v.segment(l * C.cols(), C.cols()) = C.row(l).transpose();
    return v;
}

inline Eigen::MatrixXd unstack_coefficients(const Eigen::VectorXd& v, Eigen::Index blocks) {
    const Eigen::Index K = v.size() / blocks;
    Eigen::MatrixXd C(blocks, K);
    for (Eigen::Index l = 0; l < blocks; ++l) C.row(l) = v.segment(l * K, K).transpose();
    return C;
}

/// (1 | Y) with the constraint row (0 | w 1') appended.
inline Eigen::MatrixXd augmented_concentrations(const Eigen::MatrixXd& Y, double constraint_weight) {
    const Eigen::Index I = Y.rows(), m = Y.cols();
    Eigen::MatrixXd M(I + 1, m + 1);
    M.topLeftCorner(I, 1).setOnes();
    M.topRightCorner(I, m) = Y;
    M(I, 0) = 0.0;
    M.bottomRightCorner(1, m).setConstant(constraint_weight);
    return M;
}

inline void require_full_column_rank(const Eigen::MatrixXd& A, ErrorKind kind, const std::string& what) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    qr.setThreshold(1e-10);
    if (qr.rank() < A.cols()) {
        fail(kind, what + " is rank deficient (rank " + std::to_string(qr.rank()) + " < " +
                       std::to_string(A.cols()) + ")");
    }
}

/// Builds X+ and W+. The rank requirement is checked on the augmented
/// concentration block: closed samples make (1 | Y) itself singular, and the
/// appended constraint row is what restores identifiability.
inline AggregatedDesign assemble_design(const SpectraSet& spectra, const ConcentrationMatrix& Y,
                                        const KnotVector& kv, double constraint_weight = 1.0) {
    if (spectra.samples() != Y.samples()) {
        fail(ErrorKind::shape, "spectra have " + std::to_string(spectra.samples()) +
                                   " samples but concentrations have " + std::to_string(Y.samples()));
    }
    if (!(constraint_weight > 0.0) || !std::isfinite(constraint_weight)) {
        fail(ErrorKind::invalid_parameter, "constraint weight must be positive");
    }
    AggregatedDesign d;
    d.concentration_block = augmented_concentrations(Y.values(), constraint_weight);
    require_full_column_rank(d.concentration_block, ErrorKind::collinear_concentrations,
                             "augmented concentration matrix (1 | Y; 0 | 1')");
    d.basis_design = design_matrix(kv, spectra.grid_span());
    d.response = Eigen::MatrixXd::Zero(spectra.samples() + 1, spectra.wavelengths());
    d.response.topRows(spectra.samples()) = spectra.absorbance();
    d.basis = kv;
    d.grid = spectra.grid();
    d.analytes = Y.analytes();
    d.constraint_weight = constraint_weight;
    return d;
}

/// theta_0(grid) + sum_l y_l theta_l(grid).
inline Eigen::VectorXd eval_model(const CalibrationModel& model, const Eigen::VectorXd& y,
                                  std::span<const double> grid) {
    if (y.size() != model.analyte_count()) {
        fail(ErrorKind::shape, "expected " + std::to_string(model.analyte_count()) +
                                   " concentrations, got " + std::to_string(y.size()));
    }
    Eigen::VectorXd weights(y.size() + 1);
    weights << 1.0, y;
    return model.curves(grid) * weights;
}

inline Eigen::VectorXd eval_model(const CalibrationModel& model, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& grid) {
    return eval_model(model, y, std::span<const double>(grid.data(), static_cast<std::size_t>(grid.size())));
}

/// sum_l theta_l(t_n): how far the fit is from the sum-to-zero restriction.
inline Eigen::VectorXd constraint_residual(const CalibrationModel& model, std::span<const double> grid) {
    const Eigen::MatrixXd curves = model.curves(grid);
    if (curves.cols() <= 1) return Eigen::VectorXd::Zero(curves.rows());
    return curves.rightCols(curves.cols() - 1).rowwise().sum();
}

inline Eigen::VectorXd constraint_residual(const CalibrationModel& model, const Eigen::VectorXd& grid) {
    return constraint_residual(model, std::span<const double>(grid.data(), static_cast<std::size_t>(grid.size())));
}

} // namespace nirfda
