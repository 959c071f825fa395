// Small synthetic calibration problems with known coefficients.
#pragma once

#include <random>

#include <Eigen/Dense>

#include "nirfda/basis.hpp"
#include "nirfda/errors.hpp"
#include "nirfda/model.hpp"

namespace fixture {

template <class F>
nirfda::ErrorKind kind_of(F&& f) {
    try {
        f();
    } catch (const nirfda::Error& e) {
        return e.kind();
    }
    return nirfda::ErrorKind::usage;  // sentinel: nothing thrown
}

inline Eigen::VectorXd linspace(double a, double b, Eigen::Index n) { return Eigen::VectorXd::LinSpaced(n, a, b); }

inline Eigen::MatrixXd gaussian(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double sd = 1.0) {
    std::normal_distribution<double> n(0.0, sd);
    Eigen::MatrixXd M(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        for (Eigen::Index j = 0; j < c; ++j) M(i, j) = n(rng);
    }
    return M;
}

inline Eigen::MatrixXd concentrations(std::mt19937_64& rng, Eigen::Index I, Eigen::Index m, bool closed) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    Eigen::MatrixXd Y(I, m);
    for (Eigen::Index i = 0; i < I; ++i) {
        for (Eigen::Index l = 0; l < m; ++l) Y(i, l) = u(rng);
        if (closed) Y.row(i) /= Y.row(i).sum();
    }
    return Y;
}

struct Problem {
    nirfda::SpectraSet spectra;
    nirfda::ConcentrationMatrix Y;
    nirfda::KnotVector kv;
    Eigen::MatrixXd C;  ///< true coefficients, analyte rows sum to zero
    Eigen::MatrixXd B;
};

/// W = (1 | Y) C B' + noise, with the analyte coefficient rows summing to
/// zero so the noiseless data also satisfy the constraint rows.
inline Problem problem(std::mt19937_64& rng, Eigen::Index I, Eigen::Index T, int K, Eigen::Index m, double noise,
                       bool closed) {
    Problem p;
    const Eigen::VectorXd grid = linspace(350.0, 750.0, T);
    p.kv = nirfda::make_knots(350.0, 750.0, K);
    p.B = nirfda::design_matrix(p.kv, grid);
    p.C = gaussian(rng, m + 1, K);
    p.C.row(0).array() += 5.0;
    if (m > 0) {
        const Eigen::RowVectorXd mean = p.C.bottomRows(m).colwise().mean();
        p.C.bottomRows(m).rowwise() -= mean;
    }
    const Eigen::MatrixXd Y = concentrations(rng, I, m, closed);
    Eigen::MatrixXd M(I, m + 1);
    M.col(0).setOnes();
    M.rightCols(m) = Y;
    Eigen::MatrixXd W = M * p.C * p.B.transpose();
    if (noise > 0.0) W += gaussian(rng, I, T, noise);
    p.spectra = nirfda::SpectraSet(grid, W);
    p.Y = nirfda::ConcentrationMatrix(Y);
    return p;
}

} // namespace fixture
