/**
 * @file simulate.hpp
 * @brief Synthetic aggregated spectra and the simulation experiments:
 * jackknife standard-deviation studies and the bias/variance study.
 *
 * Randomness flows through seeded sub-streams keyed by (seed, purpose,
 * replicate, index), so every result is reproducible and independent of the
 * number of worker threads. Concentrations are drawn once per seed and held
 * fixed across replicates; a larger sample extends a smaller one with the
 * same seed (the first I rows coincide).
 */
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "nirfda/baselines.hpp"
#include "nirfda/calibrate.hpp"
#include "nirfda/errors.hpp"
#include "nirfda/model.hpp"
#include "nirfda/predict.hpp"

namespace nirfda {

using Rng = std::mt19937_64;

/// Independent generator for (seed, purpose, a, b).
inline Rng substream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t a = 0, std::uint64_t b = 0) {
    auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
    auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
    std::seed_seq seq{lo(seed), hi(seed), lo(purpose), hi(purpose), lo(a), hi(a), lo(b), hi(b)};
    return Rng(seq);
}

namespace stream_purpose {
inline constexpr std::uint64_t concentrations = 1;
inline constexpr std::uint64_t calibration_noise = 2;
inline constexpr std::uint64_t prediction_noise = 3;
} // namespace stream_purpose

struct Bump {
    double center = 0.0;
    double width = 1.0;   ///< Gaussian standard deviation (nm)
    double height = 0.0;
};

/// True curves as sums of Gaussian bumps over a linear baseline.
struct AnalyteCurveSpec {
    double baseline_level = 10.0;
    double baseline_slope = 0.0;  ///< per nm, relative to the grid start
    std::vector<std::vector<Bump>> analytes;
    bool project_sum_to_zero = true;

    [[nodiscard]] Eigen::Index analyte_count() const noexcept { return static_cast<Eigen::Index>(analytes.size()); }

    /// T x (m+1) matrix, column 0 = baseline.
    [[nodiscard]] Eigen::MatrixXd evaluate(const Eigen::VectorXd& grid) const {
        const Eigen::Index T = grid.size(), m = analyte_count();
        Eigen::MatrixXd out(T, m + 1);
        out.col(0) = (baseline_level + baseline_slope * (grid.array() - grid(0))).matrix();
        for (Eigen::Index l = 0; l < m; ++l) {
            Eigen::ArrayXd col = Eigen::ArrayXd::Zero(T);
            for (const Bump& b : analytes[static_cast<std::size_t>(l)]) {
                col += b.height * (-0.5 * ((grid.array() - b.center) / b.width).square()).exp();
            }
            out.col(l + 1) = col.matrix();
        }
        if (project_sum_to_zero && m > 0) {
            const Eigen::VectorXd mean = out.rightCols(m).rowwise().mean();
            out.rightCols(m).colwise() -= mean;
        }
        return out;
    }

    /// Three analytes with one peak each (450, 550, 650 nm) of unequal
    /// area, over a flat baseline.
    static AnalyteCurveSpec defaults() {
        AnalyteCurveSpec s;
        s.analytes = {
            {{450.0, 60.0, 24.0}},
            {{550.0, 20.0, 32.0}},
            {{650.0, 40.0, 24.0}},
        };
        return s;
    }
};

inline constexpr double weak_correlation_phi = 0.5;
inline constexpr double strong_correlation_phi = 0.002;

struct SimConfig {
    double start = 350.0;
    double end = 750.0;
    double step = 5.0;
    int I = 20;
    double alpha = 1.0;
    double sigma2 = 4.0;
    double phi = weak_correlation_phi;
    AnalyteCurveSpec curves = AnalyteCurveSpec::defaults();
    std::uint64_t seed = 1;

    [[nodiscard]] int m() const noexcept { return static_cast<int>(curves.analytes.size()); }
    [[nodiscard]] bool strongly_correlated() const noexcept { return phi < 0.05; }

    [[nodiscard]] Eigen::VectorXd grid() const {
        const auto T = static_cast<Eigen::Index>(std::floor((end - start) / step + 1e-9)) + 1;
        Eigen::VectorXd g(T);
        for (Eigen::Index n = 0; n < T; ++n) g(n) = start + step * static_cast<double>(n);
        return g;
    }

    void validate() const {
        if (!(step > 0.0) || !(end > start)) fail(ErrorKind::invalid_parameter, "grid needs step > 0 and end > start");
        if (m() < 1) fail(ErrorKind::invalid_parameter, "at least one analyte curve is required");
        if (I < m() + 1) fail(ErrorKind::invalid_parameter, "need I >= m + 1");
        if (!(alpha > 0.0)) fail(ErrorKind::invalid_parameter, "Dirichlet alpha must be positive");
        if (!(sigma2 > 0.0) || !(phi > 0.0)) fail(ErrorKind::invalid_parameter, "noise needs sigma2 > 0 and phi > 0");
    }
};

/// Rows on the simplex from normalized Gamma(alpha_l, 1) draws.
inline Eigen::MatrixXd sample_dirichlet(Rng& rng, Eigen::Index I, const Eigen::VectorXd& alpha) {
    if (alpha.size() < 1 || !(alpha.array() > 0.0).all()) fail(ErrorKind::invalid_parameter, "alpha must be positive");
    Eigen::MatrixXd Y(I, alpha.size());
    for (Eigen::Index i = 0; i < I; ++i) {
        for (Eigen::Index l = 0; l < alpha.size(); ++l) {
            std::gamma_distribution<double> gamma(alpha(l), 1.0);
            Y(i, l) = gamma(rng);
        }
        Y.row(i) /= Y.row(i).sum();
    }
    return Y;
}

inline Eigen::MatrixXd sample_dirichlet(Rng& rng, Eigen::Index I, Eigen::Index m, double alpha) {
    return sample_dirichlet(rng, I, Eigen::VectorXd::Constant(m, alpha));
}

/// Mean-zero Gaussian process on a grid with covariance
/// sigma2 exp(-phi |s - t|), sampled through a Cholesky factor.
class GaussianProcess {
public:
    GaussianProcess(const Eigen::VectorXd& grid, double sigma2, double phi) {
        if (!(sigma2 > 0.0) || !(phi > 0.0)) fail(ErrorKind::invalid_parameter, "need sigma2 > 0 and phi > 0");
        const Eigen::Index T = grid.size();
        Eigen::MatrixXd C(T, T);
        for (Eigen::Index a = 0; a < T; ++a) {
            for (Eigen::Index b = 0; b < T; ++b) C(a, b) = sigma2 * std::exp(-phi * std::abs(grid(a) - grid(b)));
        }
        Eigen::LLT<Eigen::MatrixXd> llt(C);
        if (llt.info() != Eigen::Success) {
            C.diagonal().array() += 1e-10 * sigma2;
            llt.compute(C);
            if (llt.info() != Eigen::Success) {
                fail(ErrorKind::covariance_conditioning, "exponential covariance is not positive definite");
            }
        }
        L_ = llt.matrixL();
    }

    [[nodiscard]] Eigen::VectorXd draw(Rng& rng) const {
        std::normal_distribution<double> normal;
        Eigen::VectorXd z(L_.rows());
        for (Eigen::Index n = 0; n < z.size(); ++n) z(n) = normal(rng);
        return L_ * z;
    }

private:
    Eigen::MatrixXd L_;
};

inline Eigen::VectorXd sample_gp(Rng& rng, const Eigen::VectorXd& grid, double sigma2, double phi) {
    return GaussianProcess(grid, sigma2, phi).draw(rng);
}

struct SimulatedData {
    SpectraSet spectra;
    ConcentrationMatrix Y;
    Eigen::MatrixXd curves;  ///< true curves, T x (m+1)
    Eigen::MatrixXd noise;   ///< I x T
};

inline std::vector<std::string> analyte_names(int m) {
    std::vector<std::string> names;
    for (int l = 1; l <= m; ++l) names.push_back("analyte" + std::to_string(l));
    return names;
}

/// The fixed calibration concentrations for a seed.
inline ConcentrationMatrix draw_concentrations(const SimConfig& cfg) {
    Rng rng = substream(cfg.seed, stream_purpose::concentrations);
    return ConcentrationMatrix(sample_dirichlet(rng, cfg.I, cfg.m(), cfg.alpha), analyte_names(cfg.m()));
}

/// Spectra for given concentrations with fresh noise for one replicate.
inline SimulatedData draw_spectra(const SimConfig& cfg, const ConcentrationMatrix& Y, const GaussianProcess& gp,
                                  std::uint64_t replicate) {
    const Eigen::VectorXd grid = cfg.grid();
    SimulatedData d;
    d.curves = cfg.curves.evaluate(grid);
    const Eigen::Index I = Y.samples(), T = grid.size();
    d.noise.resize(I, T);
    Eigen::MatrixXd W(I, T);
    Eigen::VectorXd weights(Y.analyte_count() + 1);
    for (Eigen::Index i = 0; i < I; ++i) {
        Rng rng = substream(cfg.seed, stream_purpose::calibration_noise, replicate, static_cast<std::uint64_t>(i));
        d.noise.row(i) = gp.draw(rng).transpose();
        weights << 1.0, Y.values().row(i).transpose();
        W.row(i) = (d.curves * weights).transpose() + d.noise.row(i);
    }
    d.spectra = SpectraSet(grid, std::move(W), SpectraRole::calibration);
    d.Y = Y;
    return d;
}

inline SimulatedData generate_dataset(const SimConfig& cfg, std::uint64_t replicate = 0) {
    cfg.validate();
    const GaussianProcess gp(cfg.grid(), cfg.sigma2, cfg.phi);
    return draw_spectra(cfg, draw_concentrations(cfg), gp, replicate);
}

// ---------------------------------------------------------------------------
// Study harnesses
// ---------------------------------------------------------------------------

enum class StudyMethod { ols_k, gls_k, ols_ss, mlr, pcr_o, pcr_p, pls_o, pls_p };

constexpr std::string_view to_string(StudyMethod m) noexcept {
    switch (m) {
    case StudyMethod::ols_k: return "OLS-K";
    case StudyMethod::gls_k: return "GLS-K";
    case StudyMethod::ols_ss: return "OLS-SS";
    case StudyMethod::mlr: return "MLR";
    case StudyMethod::pcr_o: return "PCR-o";
    case StudyMethod::pcr_p: return "PCR-p";
    case StudyMethod::pls_o: return "PLS-o";
    case StudyMethod::pls_p: return "PLS-p";
    }
    return "?";
}

inline StudyMethod parse_study_method(std::string_view name) {
    for (StudyMethod m : {StudyMethod::ols_k, StudyMethod::gls_k, StudyMethod::ols_ss, StudyMethod::mlr,
                          StudyMethod::pcr_o, StudyMethod::pcr_p, StudyMethod::pls_o, StudyMethod::pls_p}) {
        std::string a(to_string(m)), b(name);
        std::transform(a.begin(), a.end(), a.begin(), [](unsigned char c) { return std::tolower(c); });
        std::transform(b.begin(), b.end(), b.begin(), [](unsigned char c) { return std::tolower(c); });
        if (a == b) return m;
    }
    fail(ErrorKind::invalid_parameter, "unknown study method '" + std::string(name) + "'");
}

inline std::vector<StudyMethod> all_study_methods() {
    return {StudyMethod::ols_k, StudyMethod::gls_k, StudyMethod::ols_ss, StudyMethod::mlr,
            StudyMethod::pcr_o, StudyMethod::pcr_p, StudyMethod::pls_o, StudyMethod::pls_p};
}

inline bool is_functional(StudyMethod m) noexcept {
    return m == StudyMethod::ols_k || m == StudyMethod::gls_k || m == StudyMethod::ols_ss;
}

struct StudyOptions {
    int K = 14;
    int oracle_components = 3;
    double variance_fraction = 0.9;
    std::vector<double> lambda_grid = default_lambda_grid();
    int jobs = 1;
};

inline FitConfig functional_config(StudyMethod m, const StudyOptions& opt) {
    FitConfig cfg;
    cfg.K = opt.K;
    cfg.lambda_grid = opt.lambda_grid;
    switch (m) {
    case StudyMethod::ols_k: cfg.method = Method::ols_k; break;
    case StudyMethod::ols_ss: cfg.method = Method::ols_ss; break;
    case StudyMethod::gls_k:
        cfg.method = Method::gls_k;
        cfg.gls_augmented = true;  // simulated samples are closed
        break;
    default: fail(ErrorKind::invalid_parameter, "not a functional method");
    }
    return cfg;
}

inline ComponentSelector selector_for(StudyMethod m, const StudyOptions& opt) {
    if (m == StudyMethod::pcr_o || m == StudyMethod::pls_o) return FixedComponents{opt.oracle_components};
    return VarianceFraction{opt.variance_fraction};
}

/// Fits one study method and returns its concentration predictor.
inline std::function<Eigen::MatrixXd(const SpectraSet&)> fit_study_method(StudyMethod m, const SpectraSet& s,
                                                                           const ConcentrationMatrix& Y,
                                                                           const StudyOptions& opt) {
    if (is_functional(m)) {
        auto model = std::make_shared<CalibrationModel>(calibrate(s, Y, functional_config(m, opt)));
        return [model](const SpectraSet& x) { return predict_matrix(*model, x); };
    }
    std::shared_ptr<MultivariateModel> model;
    switch (m) {
    case StudyMethod::mlr: model = std::make_shared<MultivariateModel>(fit_mlr(s, Y)); break;
    case StudyMethod::pcr_o:
    case StudyMethod::pcr_p: model = std::make_shared<MultivariateModel>(fit_pcr(s, Y, selector_for(m, opt))); break;
    default: model = std::make_shared<MultivariateModel>(fit_pls(s, Y, selector_for(m, opt))); break;
    }
    return [model](const SpectraSet& x) { return predict_matrix(*model, x); };
}

inline Eigen::VectorXd study_jackknife(StudyMethod m, const SpectraSet& s, const ConcentrationMatrix& Y,
                                       const StudyOptions& opt) {
    switch (m) {
    case StudyMethod::ols_k:
    case StudyMethod::gls_k:
    case StudyMethod::ols_ss: return jackknife_sd(s, Y, functional_config(m, opt));
    case StudyMethod::mlr:
        return jackknife_sd(s, Y, [](const SpectraSet& a, const ConcentrationMatrix& b) { return fit_mlr(a, b); });
    case StudyMethod::pcr_o:
    case StudyMethod::pcr_p: {
        const ComponentSelector sel = selector_for(m, opt);
        return jackknife_sd(s, Y, [sel](const SpectraSet& a, const ConcentrationMatrix& b) { return fit_pcr(a, b, sel); });
    }
    case StudyMethod::pls_o:
    case StudyMethod::pls_p: {
        const ComponentSelector sel = selector_for(m, opt);
        return jackknife_sd(s, Y, [sel](const SpectraSet& a, const ConcentrationMatrix& b) { return fit_pls(a, b, sel); });
    }
    }
    fail(ErrorKind::invalid_parameter, "unknown study method");
}

/// Sample quantile with linear interpolation between order statistics.
inline double quantile(std::vector<double> v, double q) {
    if (v.empty()) return std::nan("");
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double median(const std::vector<double>& v) { return quantile(v, 0.5); }
inline double iqr(const std::vector<double>& v) { return quantile(v, 0.75) - quantile(v, 0.25); }

/// Runs body(r) for r in [0, count) on up to `jobs` threads.
template <class Body>
void parallel_for(int count, int jobs, Body&& body) {
    jobs = std::max(1, std::min(jobs, count));
    if (jobs == 1) {
        for (int r = 0; r < count; ++r) body(r);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> workers;
    for (int w = 0; w < jobs; ++w) {
        workers.emplace_back([&] {
            for (int r = next++; r < count; r = next++) body(r);
        });
    }
    for (auto& t : workers) t.join();
}

struct MethodSummary {
    StudyMethod method = StudyMethod::ols_k;
    bool skipped = false;                 ///< not applicable to this scenario
    int failures = 0;
    std::vector<std::string> failure_messages;
    Eigen::MatrixXd values;               ///< successful replicates x m
    Eigen::VectorXd median;               ///< per component
    Eigen::VectorXd iqr;
    double overall_median = std::nan("");
    double overall_iqr = std::nan("");
};

struct JackknifeStudy {
    SimConfig config;
    int replicates = 0;
    Eigen::MatrixXd concentrations;
    std::vector<MethodSummary> methods;

    [[nodiscard]] const MethodSummary& get(StudyMethod m) const {
        for (const auto& s : methods) {
            if (s.method == m) return s;
        }
        fail(ErrorKind::invalid_parameter, "method not in study: " + std::string(to_string(m)));
    }
};

inline void summarize(MethodSummary& s, const std::vector<Eigen::VectorXd>& rows, Eigen::Index m) {
    s.values.resize(static_cast<Eigen::Index>(rows.size()), m);
    for (std::size_t r = 0; r < rows.size(); ++r) s.values.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
    s.median = Eigen::VectorXd::Constant(m, std::nan(""));
    s.iqr = Eigen::VectorXd::Constant(m, std::nan(""));
    std::vector<double> pooled;
    for (Eigen::Index l = 0; l < m; ++l) {
        std::vector<double> col(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) col[r] = rows[r](l);
        pooled.insert(pooled.end(), col.begin(), col.end());
        if (!col.empty()) {
            s.median(l) = median(col);
            s.iqr(l) = iqr(col);
        }
    }
    if (!pooled.empty()) {
        s.overall_median = median(pooled);
        s.overall_iqr = iqr(pooled);
    }
}

/// Jackknife standard deviations over replicates with fresh noise and fixed
/// concentrations; GLS-K runs only under strong correlation.
inline JackknifeStudy run_jackknife_study(const SimConfig& cfg, const std::vector<StudyMethod>& methods,
                                          int replicates, const StudyOptions& opt = {}) {
    cfg.validate();
    if (replicates < 1) fail(ErrorKind::invalid_parameter, "replicates must be >= 1");
    const ConcentrationMatrix Y = draw_concentrations(cfg);
    const GaussianProcess gp(cfg.grid(), cfg.sigma2, cfg.phi);
    const auto nm = methods.size();

    // results[r][k]: S vector or empty on failure / skip
    std::vector<std::vector<Eigen::VectorXd>> results(static_cast<std::size_t>(replicates),
                                                      std::vector<Eigen::VectorXd>(nm));
    std::vector<std::vector<std::string>> errors(static_cast<std::size_t>(replicates), std::vector<std::string>(nm));
    parallel_for(replicates, opt.jobs, [&](int r) {
        const SimulatedData data = draw_spectra(cfg, Y, gp, static_cast<std::uint64_t>(r));
        for (std::size_t k = 0; k < nm; ++k) {
            if (methods[k] == StudyMethod::gls_k && !cfg.strongly_correlated()) continue;
            try {
                results[static_cast<std::size_t>(r)][k] = study_jackknife(methods[k], data.spectra, Y, opt);
            } catch (const Error& e) {
                errors[static_cast<std::size_t>(r)][k] = std::string(e.category()) + ": " + e.what();
            }
        }
    });

    JackknifeStudy study;
    study.config = cfg;
    study.replicates = replicates;
    study.concentrations = Y.values();
    for (std::size_t k = 0; k < nm; ++k) {
        MethodSummary s;
        s.method = methods[k];
        s.skipped = methods[k] == StudyMethod::gls_k && !cfg.strongly_correlated();
        std::vector<Eigen::VectorXd> rows;
        for (int r = 0; r < replicates; ++r) {
            const auto& v = results[static_cast<std::size_t>(r)][k];
            if (v.size() > 0) {
                rows.push_back(v);
            } else if (!s.skipped) {
                ++s.failures;
                s.failure_messages.push_back("replicate " + std::to_string(r) + ": " +
                                             errors[static_cast<std::size_t>(r)][k]);
            }
        }
        summarize(s, rows, cfg.m());
        study.methods.push_back(std::move(s));
    }
    return study;
}

/// Rows of the default prediction concentrations for the bias/variance study.
inline Eigen::MatrixXd default_prediction_targets() {
    Eigen::MatrixXd Y(4, 3);
    Y << 0.4, 0.1, 0.5,
         0.2, 0.3, 0.5,
         0.1, 0.4, 0.5,
         0.5, 0.4, 0.1;
    return Y;
}

struct BiasVarianceOptions {
    int learning_sets = 40;
    int replicates = 5;  ///< prediction curves per target row and learning set
    Eigen::MatrixXd targets = default_prediction_targets();
    StudyOptions study;
};

struct BiasVarianceRow {
    StudyMethod method = StudyMethod::ols_k;
    Eigen::VectorXd bias2;     ///< per component, summed over sets, targets and replicates
    Eigen::VectorXd variance;
    double bias2_total = 0.0;
    double variance_total = 0.0;
    int failures = 0;
    long terms = 0;            ///< summands per component
};

struct BiasVarianceStudy {
    SimConfig config;
    BiasVarianceOptions options;
    std::vector<BiasVarianceRow> rows;

    [[nodiscard]] const BiasVarianceRow& get(StudyMethod m) const {
        for (const auto& r : rows) {
            if (r.method == m) return r;
        }
        fail(ErrorKind::invalid_parameter, "method not in study: " + std::string(to_string(m)));
    }
};

/// For learning set g, target row r and replicate h:
///   V_c  = sum (yhat_{grh,c} - mean_h yhat_{gr.,c})^2
///   B2_c = sum (y*_{r,c}     - mean_h yhat_{gr.,c})^2
inline BiasVarianceStudy run_bias_variance_study(const SimConfig& cfg, const std::vector<StudyMethod>& methods,
                                                 const BiasVarianceOptions& opt = {}) {
    cfg.validate();
    if (opt.learning_sets < 1 || opt.replicates < 1) fail(ErrorKind::invalid_parameter, "need >= 1 set and replicate");
    if (opt.targets.cols() != cfg.m()) fail(ErrorKind::shape, "prediction targets need one column per analyte");
    const ConcentrationMatrix Y = draw_concentrations(cfg);
    const Eigen::VectorXd grid = cfg.grid();
    const GaussianProcess gp(grid, cfg.sigma2, cfg.phi);
    const Eigen::MatrixXd curves = cfg.curves.evaluate(grid);
    const Eigen::Index R = opt.targets.rows(), H = opt.replicates, m = cfg.m();
    const auto nm = methods.size();

    struct Partial {
        Eigen::VectorXd bias2, variance;
        bool ok = false;
    };
    std::vector<std::vector<Partial>> partial(static_cast<std::size_t>(opt.learning_sets), std::vector<Partial>(nm));

    parallel_for(opt.learning_sets, opt.study.jobs, [&](int g) {
        const SimulatedData cal = draw_spectra(cfg, Y, gp, static_cast<std::uint64_t>(g));
        Eigen::MatrixXd W(R * H, grid.size());
        Eigen::VectorXd weights(m + 1);
        for (Eigen::Index r = 0; r < R; ++r) {
            weights << 1.0, opt.targets.row(r).transpose();
            for (Eigen::Index h = 0; h < H; ++h) {
                Rng rng = substream(cfg.seed, stream_purpose::prediction_noise, static_cast<std::uint64_t>(g),
                                    static_cast<std::uint64_t>(r * H + h));
                W.row(r * H + h) = (curves * weights + gp.draw(rng)).transpose();
            }
        }
        const SpectraSet pred(grid, W, SpectraRole::prediction);
        for (std::size_t k = 0; k < nm; ++k) {
            try {
                const auto predictor = fit_study_method(methods[k], cal.spectra, Y, opt.study);
                const Eigen::MatrixXd y_hat = predictor(pred);
                Partial p;
                p.bias2 = Eigen::VectorXd::Zero(m);
                p.variance = Eigen::VectorXd::Zero(m);
                for (Eigen::Index r = 0; r < R; ++r) {
                    const Eigen::MatrixXd block = y_hat.middleRows(r * H, H);
                    const Eigen::RowVectorXd mean = block.colwise().mean();
                    p.variance += (block.rowwise() - mean).array().square().colwise().sum().matrix().transpose();
                    p.bias2 += static_cast<double>(H) * (opt.targets.row(r) - mean).array().square().matrix().transpose();
                }
                p.ok = true;
                partial[static_cast<std::size_t>(g)][k] = std::move(p);
            } catch (const Error&) {
            }
        }
    });

    BiasVarianceStudy study;
    study.config = cfg;
    study.options = opt;
    for (std::size_t k = 0; k < nm; ++k) {
        BiasVarianceRow row;
        row.method = methods[k];
        row.bias2 = Eigen::VectorXd::Zero(m);
        row.variance = Eigen::VectorXd::Zero(m);
        for (int g = 0; g < opt.learning_sets; ++g) {
            const Partial& p = partial[static_cast<std::size_t>(g)][k];
            if (!p.ok) {
                ++row.failures;
                continue;
            }
            row.bias2 += p.bias2;
            row.variance += p.variance;
            row.terms += static_cast<long>(R * H);
        }
        row.bias2_total = row.bias2.sum();
        row.variance_total = row.variance.sum();
        study.rows.push_back(std::move(row));
    }
    return study;
}

} // namespace nirfda
