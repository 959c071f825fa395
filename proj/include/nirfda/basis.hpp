/**
 * @file basis.hpp
 * @brief B-spline bases on a knot sequence: evaluation by the Cox-de Boor
 * recurrence, design matrices, and the second-derivative roughness penalty.
 *
 * Knot sequences carry boundary knots with full multiplicity (order r), so
 * every basis interpolates at the domain ends. Evaluation outside [A, B]
 * throws; there is no extrapolation.
 */
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nirfda/errors.hpp"

namespace nirfda {

inline constexpr int cubic_order = 4;

/// Knot sequence xi_1 <= ... <= xi_{K+r} for K B-splines of order r.
class KnotVector {
public:
    KnotVector() = default;

    KnotVector(std::vector<double> knots, int order) : knots_(std::move(knots)), order_(order) {
        validate();
    }

    [[nodiscard]] int order() const noexcept { return order_; }
    [[nodiscard]] int degree() const noexcept { return order_ - 1; }
    [[nodiscard]] int size() const noexcept { return static_cast<int>(knots_.size()) - order_; }
    [[nodiscard]] const std::vector<double>& knots() const noexcept { return knots_; }
    [[nodiscard]] double lower() const { return knots_[static_cast<std::size_t>(order_ - 1)]; }
    [[nodiscard]] double upper() const { return knots_[static_cast<std::size_t>(size())]; }

    [[nodiscard]] bool contains(double t) const noexcept {
        const double tol = 1e-12 * (upper() - lower());
        return t >= lower() - tol && t <= upper() + tol;
    }

    /// Index s with xi_s <= t < xi_{s+1} (0-based), restricted to the
    /// basis domain; t == upper maps to the last nonempty span.
    [[nodiscard]] int find_span(double t) const {
        const int K = size();
        if (t >= upper()) {
            int s = K - 1;
            while (s > order_ - 1 && knots_[s] >= knots_[s + 1]) --s;
            return s;
        }
        if (t <= lower()) {
            int s = order_ - 1;
            while (s < K - 1 && knots_[s + 1] <= knots_[s]) ++s;
            return s;
        }
        auto first = knots_.begin() + (order_ - 1);
        auto last = knots_.begin() + K + 1;
        auto it = std::upper_bound(first, last, t);
        return static_cast<int>(it - knots_.begin()) - 1;
    }

    friend bool operator==(const KnotVector&, const KnotVector&) = default;

private:
    void validate() const {
        if (order_ < 1) fail(ErrorKind::invalid_basis, "order must be >= 1");
        const int K = size();
        if (K < order_) {
            fail(ErrorKind::invalid_basis, "need K >= order (K=" + std::to_string(K) +
                                               ", order=" + std::to_string(order_) + ")");
        }
        for (std::size_t i = 1; i < knots_.size(); ++i) {
            if (!(knots_[i] >= knots_[i - 1])) {
                fail(ErrorKind::invalid_basis, "knots must be nondecreasing (index " +
                                                   std::to_string(i) + ")");
            }
        }
        std::size_t run = 1;
        for (std::size_t i = 1; i < knots_.size(); ++i) {
            run = knots_[i] == knots_[i - 1] ? run + 1 : 1;
            if (run > static_cast<std::size_t>(order_)) {
                fail(ErrorKind::invalid_basis, "knot multiplicity exceeds order at index " +
                                                   std::to_string(i));
            }
        }
        if (!(upper() > lower())) fail(ErrorKind::invalid_domain, "empty basis domain");
    }

    std::vector<double> knots_;
    int order_ = cubic_order;
};

/// Uniform interior knots on [a, b] with boundary multiplicity r.
inline KnotVector make_knots(double a, double b, int K, int order = cubic_order) {
    if (K < order) {
        fail(ErrorKind::invalid_basis, "K=" + std::to_string(K) + " is smaller than order " +
                                           std::to_string(order));
    }
    if (!(a < b)) fail(ErrorKind::invalid_domain, "domain requires A < B");
    std::vector<double> knots;
    knots.reserve(static_cast<std::size_t>(K + order));
    knots.insert(knots.end(), static_cast<std::size_t>(order), a);
    const int interior = K - order;
    for (int j = 1; j <= interior; ++j) {
        knots.push_back(a + (b - a) * static_cast<double>(j) / static_cast<double>(interior + 1));
    }
    knots.insert(knots.end(), static_cast<std::size_t>(order), b);
    return KnotVector(std::move(knots), order);
}

/// Smoothing-spline knots: every observation site becomes a knot.
inline KnotVector make_knots_from_sites(std::span<const double> sites, int order = cubic_order) {
    if (sites.size() < 2) fail(ErrorKind::invalid_grid, "need at least two sites");
    for (std::size_t i = 1; i < sites.size(); ++i) {
        if (!(sites[i] > sites[i - 1])) {
            fail(ErrorKind::invalid_grid, "sites must be strictly increasing (index " +
                                              std::to_string(i) + ")");
        }
    }
    std::vector<double> knots;
    knots.reserve(sites.size() + 2 * static_cast<std::size_t>(order - 1));
    knots.insert(knots.end(), static_cast<std::size_t>(order), sites.front());
    knots.insert(knots.end(), sites.begin() + 1, sites.end() - 1);
    knots.insert(knots.end(), static_cast<std::size_t>(order), sites.back());
    return KnotVector(std::move(knots), order);
}

namespace detail {

/// Nonzero basis functions and their derivatives on one span
/// (de Boor recurrence, derivative form of Piegl & Tiller A2.3).
/// Returns ders(d, j) = D^d B_{span-p+j}(t), j = 0..p.
inline Eigen::MatrixXd basis_derivatives(const KnotVector& kv, int span, double t, int nderiv) {
    const int p = kv.degree();
    const auto& U = kv.knots();
    Eigen::MatrixXd ndu(p + 1, p + 1);
    std::vector<double> left(static_cast<std::size_t>(p + 1)), right(static_cast<std::size_t>(p + 1));
    ndu(0, 0) = 1.0;
    for (int j = 1; j <= p; ++j) {
        left[j] = t - U[span + 1 - j];
        right[j] = U[span + j] - t;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            ndu(j, r) = right[r + 1] + left[j - r];
            const double temp = ndu(r, j - 1) / ndu(j, r);
            ndu(r, j) = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu(j, j) = saved;
    }

    const int n = std::min(nderiv, p);
    Eigen::MatrixXd ders = Eigen::MatrixXd::Zero(nderiv + 1, p + 1);
    for (int j = 0; j <= p; ++j) ders(0, j) = ndu(j, p);

    Eigen::MatrixXd a(2, p + 1);
    for (int r = 0; r <= p; ++r) {
        int s1 = 0, s2 = 1;
        a.setZero();
        a(0, 0) = 1.0;
        for (int k = 1; k <= n; ++k) {
            double d = 0.0;
            const int rk = r - k, pk = p - k;
            if (r >= k) {
                a(s2, 0) = a(s1, 0) / ndu(pk + 1, rk);
                d = a(s2, 0) * ndu(rk, pk);
            }
            const int j1 = rk >= -1 ? 1 : -rk;
            const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
            for (int j = j1; j <= j2; ++j) {
                a(s2, j) = (a(s1, j) - a(s1, j - 1)) / ndu(pk + 1, rk + j);
                d += a(s2, j) * ndu(rk + j, pk);
            }
            if (r <= pk) {
                a(s2, k) = -a(s1, k - 1) / ndu(pk + 1, r);
                d += a(s2, k) * ndu(r, pk);
            }
            ders(k, r) = d;
            std::swap(s1, s2);
        }
    }
    double factor = p;
    for (int k = 1; k <= n; ++k) {
        ders.row(k) *= factor;
        factor *= (p - k);
    }
    return ders;
}

inline double clamp_to_domain(const KnotVector& kv, double t) {
    if (!std::isfinite(t) || !kv.contains(t)) {
        fail(ErrorKind::domain, "t=" + std::to_string(t) + " outside basis domain [" +
                                    std::to_string(kv.lower()) + ", " +
                                    std::to_string(kv.upper()) + "]");
    }
    return std::clamp(t, kv.lower(), kv.upper());
}

inline void check_grid(std::span<const double> grid) {
    for (std::size_t i = 1; i < grid.size(); ++i) {
        if (!(grid[i] > grid[i - 1])) {
            fail(ErrorKind::invalid_grid, "grid must be strictly increasing (index " +
                                              std::to_string(i) + ")");
        }
    }
}

} // namespace detail

/// (B_1(t), ..., B_K(t)) or its derivative of the given order.
inline Eigen::VectorXd eval_basis(const KnotVector& kv, double t, int derivative = 0) {
    t = detail::clamp_to_domain(kv, t);
    const int span = kv.find_span(t);
    const Eigen::MatrixXd ders = detail::basis_derivatives(kv, span, t, derivative);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(kv.size());
    const int p = kv.degree();
    for (int j = 0; j <= p; ++j) out(span - p + j) = ders(derivative, j);
    return out;
}

/// T x K matrix with row n = eval_basis(kv, grid[n]).
inline Eigen::MatrixXd design_matrix(const KnotVector& kv, std::span<const double> grid,
                                     int derivative = 0) {
    detail::check_grid(grid);
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(grid.size()), kv.size());
    const int p = kv.degree();
    for (std::size_t n = 0; n < grid.size(); ++n) {
        const double t = detail::clamp_to_domain(kv, grid[n]);
        const int span = kv.find_span(t);
        const Eigen::MatrixXd ders = detail::basis_derivatives(kv, span, t, derivative);
        for (int j = 0; j <= p; ++j) B(static_cast<Eigen::Index>(n), span - p + j) = ders(derivative, j);
    }
    return B;
}

inline Eigen::MatrixXd design_matrix(const KnotVector& kv, const Eigen::VectorXd& grid,
                                     int derivative = 0) {
    return design_matrix(kv, std::span<const double>(grid.data(), static_cast<std::size_t>(grid.size())),
                         derivative);
}

/// R(i, j) = integral of D^2 B_i * D^2 B_j over the basis domain.
///
/// D^2 of a cubic B-spline is linear on each knot span, so the two-point
/// Gauss rule per span integrates the products exactly.
inline Eigen::MatrixXd penalty_matrix(const KnotVector& kv) {
    if (kv.order() != cubic_order) {
        fail(ErrorKind::unsupported_order, "penalty requires cubic splines (order 4), got order " +
                                               std::to_string(kv.order()));
    }
    const int K = kv.size();
    const int p = kv.degree();
    const auto& U = kv.knots();
    const double g = 1.0 / std::sqrt(3.0);
    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(K, K);
    for (int s = p; s < K; ++s) {
        const double a = U[s], b = U[s + 1];
        if (!(b > a)) continue;
        const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
        for (double node : {-g, g}) {
            const Eigen::MatrixXd ders = detail::basis_derivatives(kv, s, mid + half * node, 2);
            const Eigen::VectorXd d2 = ders.row(2).transpose();
            R.block(s - p, s - p, p + 1, p + 1).noalias() += half * (d2 * d2.transpose());
        }
    }
    return 0.5 * (R + R.transpose());
}

/// Knot averages (xi_{k+1} + ... + xi_{k+r-1}) / (r-1): the coefficients that
/// reproduce the identity function t exactly.
inline Eigen::VectorXd knot_averages(const KnotVector& kv) {
    const int K = kv.size();
    const int p = kv.degree();
    Eigen::VectorXd out(K);
    for (int k = 0; k < K; ++k) {
        double sum = 0.0;
        for (int j = 1; j <= p; ++j) sum += kv.knots()[k + j];
        out(k) = p > 0 ? sum / p : kv.knots()[k];
    }
    return out;
}

} // namespace nirfda
