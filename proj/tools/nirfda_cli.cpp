// nirfda command-line tool.
//
// Exit status: 0 on success, 2 on usage errors, 1 on any other failure with
// a single line `error: <category>: <message>` on stderr.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nirfda/nirfda.hpp"

namespace fs = std::filesystem;
using namespace nirfda;

namespace {

bool verbose() {
    const char* v = std::getenv("NIRFDA_VERBOSE");
    return v != nullptr && *v != '\0' && std::string(v) != "0";
}

void log(const std::string& msg) {
    if (verbose()) std::cerr << "nirfda: " << msg << "\n";
}

void warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Shared options
// ---------------------------------------------------------------------------

struct DataArgs {
    std::string spectra;
    std::string concentrations;
    bool transpose = false;
};

void add_data_options(CLI::App* app, DataArgs& d) {
    app->add_option("--spectra", d.spectra, "Calibration spectra CSV (wavelength,<id>...)")->required()->check(CLI::ExistingFile);
    app->add_option("--concentrations", d.concentrations, "Concentrations CSV (id,<analyte>...)")->required()->check(CLI::ExistingFile);
    app->add_flag("--transpose", d.transpose, "Spectra file is sample-by-wavelength");
}

struct RunConfig {
    std::string method = "ols-k";
    int K = 14;
    std::string lambda = "gcv";
    std::string lambda_grid;
    bool gls_augmented = false;
    double constraint_weight = 1.0;
    bool reselect_per_fold = false;
    std::optional<int> components;
    std::optional<double> variance_fraction;
};

void add_fit_options(CLI::App* app, RunConfig& r, bool multivariate_methods) {
    std::vector<std::string> methods{"ols-k", "ols-ss", "gls-k"};
    if (multivariate_methods) methods.insert(methods.end(), {"mlr", "pcr", "pls"});
    app->add_option("--method", r.method, "Estimator")->check(CLI::IsMember(methods))->capture_default_str();
    app->add_option("--K", r.K, "Number of cubic B-splines (ols-k, gls-k)")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--lambda", r.lambda, "Smoothing parameter for ols-ss: a number >= 0 or 'gcv'")->capture_default_str();
    app->add_option("--lambda-grid", r.lambda_grid, "GCV search grid 'lo,hi,points' (log-spaced)");
    app->add_flag("--gls-augmented", r.gls_augmented, "Include the sum-to-zero rows in GLS (needed for closed samples)");
    app->add_option("--constraint-weight", r.constraint_weight, "Weight of the sum-to-zero rows")->check(CLI::PositiveNumber);
    if (multivariate_methods) {
        app->add_flag("--reselect-per-fold", r.reselect_per_fold, "Reselect lambda / covariance inside every fold");
        app->add_option("--components", r.components, "Fixed component count (pcr, pls)")->check(CLI::PositiveNumber);
        app->add_option("--variance-fraction", r.variance_fraction, "Component count explaining this variance fraction (pcr, pls)")
            ->check(CLI::Range(0.0, 1.0));
    }
}

bool is_functional(const std::string& method) { return method == "ols-k" || method == "ols-ss" || method == "gls-k"; }

Method functional_method(const std::string& s) {
    if (s == "ols-k") return Method::ols_k;
    if (s == "ols-ss") return Method::ols_ss;
    return Method::gls_k;
}

std::vector<double> parse_lambda_grid(const std::string& spec) {
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) parts.push_back(item);
    if (parts.size() != 3) throw UsageError("--lambda-grid expects 'lo,hi,points'");
    try {
        return log_grid(std::stod(parts[0]), std::stod(parts[1]), std::stoi(parts[2]));
    } catch (const std::invalid_argument&) {
        throw UsageError("--lambda-grid expects numbers");
    }
}

FitConfig make_fit_config(const RunConfig& r) {
    FitConfig cfg;
    cfg.method = functional_method(r.method);
    cfg.K = r.K;
    cfg.gls_augmented = r.gls_augmented;
    cfg.constraint_weight = r.constraint_weight;
    cfg.reselect_per_fold = r.reselect_per_fold;
    if (r.lambda != "gcv") {
        if (!r.lambda_grid.empty()) throw UsageError("give either --lambda <value> or --lambda-grid, not both");
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(r.lambda, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != r.lambda.size() || !(v >= 0.0)) throw UsageError("--lambda must be 'gcv' or a number >= 0");
        cfg.lambda = v;
    } else if (!r.lambda_grid.empty()) {
        cfg.lambda_grid = parse_lambda_grid(r.lambda_grid);
    }
    return cfg;
}

ComponentSelector make_selector(const RunConfig& r) {
    if (r.components && r.variance_fraction) throw UsageError("give either --components or --variance-fraction, not both");
    if (r.components) return FixedComponents{*r.components};
    return VarianceFraction{r.variance_fraction.value_or(0.9)};
}

MultivariateModel fit_multivariate(const std::string& method, const SpectraSet& s, const ConcentrationMatrix& Y,
                                   const ComponentSelector& sel) {
    if (method == "mlr") return fit_mlr(s, Y);
    if (method == "pcr") return fit_pcr(s, Y, sel);
    return fit_pls(s, Y, sel);
}

struct Loaded {
    SpectraSet spectra;
    ConcentrationMatrix Y;
};

Loaded load_data(const DataArgs& d) {
    Loaded out;
    out.spectra = load_spectra(d.spectra, d.transpose);
    const LoadedConcentrations c = load_concentrations(d.concentrations, out.spectra);
    if (c.has_negative) warn("negative concentrations in " + d.concentrations);
    out.Y = c.Y;
    log("loaded " + std::to_string(out.spectra.samples()) + " samples x " + std::to_string(out.spectra.wavelengths()) +
        " wavelengths, " + std::to_string(out.Y.analyte_count()) + " analytes");
    return out;
}

/// Settings needed to refit a saved model, stored next to it in the model file.
nlohmann::json fit_record(const RunConfig& r) {
    nlohmann::json j{{"method", r.method},
                     {"K", r.K},
                     {"gls_augmented", r.gls_augmented},
                     {"constraint_weight", r.constraint_weight},
                     {"reselect_per_fold", r.reselect_per_fold}};
    if (r.components) j["components"] = *r.components;
    if (r.variance_fraction) j["variance_fraction"] = *r.variance_fraction;
    return j;
}

RunConfig run_config_from_record(const nlohmann::json& j, const AnyModel& model) {
    RunConfig r;
    r.method = j.at("method").get<std::string>();
    r.K = j.at("K").get<int>();
    r.gls_augmented = j.at("gls_augmented").get<bool>();
    r.constraint_weight = j.at("constraint_weight").get<double>();
    r.reselect_per_fold = j.at("reselect_per_fold").get<bool>();
    if (j.contains("components")) r.components = j["components"].get<int>();
    if (j.contains("variance_fraction")) r.variance_fraction = j["variance_fraction"].get<double>();
    if (const auto* m = std::get_if<CalibrationModel>(&model); m && m->method == Method::ols_ss) {
        r.lambda = format_double(m->lambda);
    }
    return r;
}

Eigen::VectorXd jackknife(const RunConfig& r, const Loaded& data) {
    if (is_functional(r.method)) return jackknife_sd(data.spectra, data.Y, make_fit_config(r));
    const ComponentSelector sel = make_selector(r);
    const std::string method = r.method;
    return jackknife_sd(data.spectra, data.Y, [&](const SpectraSet& s, const ConcentrationMatrix& y) {
        return fit_multivariate(method, s, y, sel);
    });
}

Eigen::VectorXd dense_grid(const KnotVector& kv, int points) {
    return Eigen::VectorXd::LinSpaced(points, kv.lower(), kv.upper());
}

void save_model_with_fit(const fs::path& path, const AnyModel& model, const RunConfig& r) {
    nlohmann::json j = model_to_json(model);
    j["fit"] = fit_record(r);
    write_text(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

struct CalibrateArgs {
    DataArgs data;
    RunConfig run;
    std::string model_out;
    std::string curves_out;
    int curve_points = 401;
};

void run_calibrate(const CalibrateArgs& a) {
    const Loaded data = load_data(a.data);
    const CalibrationModel model = calibrate(data.spectra, data.Y, make_fit_config(a.run));
    log(std::string(to_string(model.method)) + " fitted, lambda=" + format_double(model.lambda) +
        ", rss=" + format_double(model.diagnostics.rss));
    save_model_with_fit(a.model_out, model, a.run);
    if (!a.curves_out.empty()) write_text(a.curves_out, curves_to_csv(model, dense_grid(model.basis, a.curve_points)));
}

struct BaselinesArgs {
    DataArgs data;
    RunConfig run;
    std::string model_out;
};

void run_baselines(const BaselinesArgs& a) {
    const Loaded data = load_data(a.data);
    const MultivariateModel model = fit_multivariate(a.run.method, data.spectra, data.Y, make_selector(a.run));
    log(std::string(to_string(model.method)) + " fitted with " + std::to_string(model.components) + " components");
    save_model_with_fit(a.model_out, model, a.run);
}

struct JackknifeArgs {
    DataArgs data;
    RunConfig run;
    std::string out;
};

void run_jackknife(const JackknifeArgs& a) {
    const Loaded data = load_data(a.data);
    const Eigen::VectorXd S = jackknife(a.run, data);
    write_text(a.out, sd_to_csv(S, data.Y.analytes()));
}

struct PredictArgs {
    std::string model;
    std::string spectra;
    bool transpose = false;
    std::string sd;
    bool jackknife = false;
    std::string cal_spectra;
    std::string cal_concentrations;
    bool cal_transpose = false;
    double c = 1.96;
    std::string out;
};

void run_predict(const PredictArgs& a) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text(a.model));
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::parse, a.model + ": " + e.what());
    }
    const AnyModel model = model_from_json(j);
    const SpectraSet spectra = load_spectra(a.spectra, a.transpose, SpectraRole::prediction);
    const std::vector<std::string>& analytes =
        std::visit([](const auto& m) -> const std::vector<std::string>& { return m.analytes; }, model);

    Eigen::VectorXd S;
    if (a.jackknife) {
        if (a.cal_spectra.empty() || a.cal_concentrations.empty()) {
            throw UsageError("--jackknife needs --cal-spectra and --cal-concentrations");
        }
        if (!j.contains("fit")) fail(ErrorKind::parse, a.model + ": no fit settings recorded; use --sd");
        const RunConfig r = run_config_from_record(j.at("fit"), model);
        const Loaded cal = load_data({a.cal_spectra, a.cal_concentrations, a.cal_transpose});
        S = jackknife(r, cal);
    } else {
        S = load_sd(a.sd, analytes);
    }

    Prediction p;
    if (const auto* fm = std::get_if<CalibrationModel>(&model)) {
        p = predict_concentrations(*fm, spectra);
    } else {
        p.y_hat = predict_multivariate(std::get<MultivariateModel>(model), spectra);
        p.residual_norm = Eigen::VectorXd::Zero(p.y_hat.rows());
        p.out_of_simplex.resize(static_cast<std::size_t>(p.y_hat.rows()));
        for (Eigen::Index r = 0; r < p.y_hat.rows(); ++r) {
            p.out_of_simplex[static_cast<std::size_t>(r)] =
                (p.y_hat.row(r).array() < 0.0).any() || (p.y_hat.row(r).array() > 1.0).any();
        }
    }
    const Intervals iv = confidence_intervals(p.y_hat, S, a.c);
    write_text(a.out, predictions_to_csv(spectra.ids(), analytes, p.y_hat, &iv, &p));
}

struct SepArgs {
    std::string truth;
    std::string predictions;
    std::string out;
};

void run_sep(const SepArgs& a) {
    const IdTable truth = id_table_from_csv(read_csv(a.truth));
    const IdTable pred = id_table_from_csv(read_csv(a.predictions));
    Eigen::MatrixXd y_true = truth.values;
    Eigen::MatrixXd y_hat(truth.values.rows(), truth.values.cols());
    const Eigen::MatrixXd aligned = align_rows(pred, truth.ids, a.predictions);
    for (std::size_t c = 0; c < truth.columns.size(); ++c) {
        const auto it = std::find(pred.columns.begin(), pred.columns.end(), truth.columns[c]);
        if (it == pred.columns.end()) {
            fail(ErrorKind::alignment, a.predictions + ": no column for analyte '" + truth.columns[c] + "'");
        }
        y_hat.col(static_cast<Eigen::Index>(c)) = aligned.col(it - pred.columns.begin());
    }
    write_text(a.out, sep_to_csv(sep(y_true, y_hat), truth.columns));
}

struct SimulateArgs {
    std::string scenario = "weak";
    std::optional<double> phi;
    int I = 20;
    double sigma2 = 4.0;
    double alpha = 1.0;
    std::uint64_t seed = 1;
    int K = 14;
    int jobs = 1;
    // dataset
    int replicate = 0;
    std::string out_spectra;
    std::string out_concentrations;
    std::string out_truth;
    // studies
    int replicates = 200;
    int learning_sets = 40;
    int prediction_replicates = 5;
    std::vector<std::string> methods;
    std::string out_dir;
};

SimConfig sim_config(const SimulateArgs& a) {
    SimConfig c;
    c.I = a.I;
    c.sigma2 = a.sigma2;
    c.alpha = a.alpha;
    c.seed = a.seed;
    c.phi = a.phi ? *a.phi : (a.scenario == "strong" ? strong_correlation_phi : weak_correlation_phi);
    c.validate();
    return c;
}

std::vector<StudyMethod> study_methods(const std::vector<std::string>& names, std::vector<StudyMethod> fallback) {
    if (names.empty()) return fallback;
    std::vector<StudyMethod> out;
    for (const auto& n : names) {
        try {
            out.push_back(parse_study_method(n));
        } catch (const Error& e) {
            throw UsageError(e.what());
        }
    }
    return out;
}

void run_simulate_dataset(const SimulateArgs& a) {
    const SimConfig c = sim_config(a);
    const SimulatedData d = generate_dataset(c, static_cast<std::uint64_t>(a.replicate));
    save_spectra(a.out_spectra, d.spectra);
    write_text(a.out_concentrations, concentrations_to_csv(d.Y, d.spectra.ids()));
    if (!a.out_truth.empty()) {
        std::string out = "t,theta0";
        for (const auto& n : d.Y.analytes()) out += "," + n;
        out += "\n";
        for (Eigen::Index n = 0; n < d.curves.rows(); ++n) {
            out += format_double(d.spectra.grid()(n));
            for (Eigen::Index k = 0; k < d.curves.cols(); ++k) out += "," + format_double(d.curves(n, k));
            out += "\n";
        }
        write_text(a.out_truth, out);
    }
}

void run_simulate_jackknife(const SimulateArgs& a) {
    const SimConfig c = sim_config(a);
    StudyOptions opt;
    opt.K = a.K;
    opt.jobs = a.jobs;
    const auto methods = study_methods(a.methods, all_study_methods());
    log("jackknife study: " + std::to_string(a.replicates) + " replicates, phi=" + format_double(c.phi));
    const JackknifeStudy s = run_jackknife_study(c, methods, a.replicates, opt);
    fs::create_directories(a.out_dir);
    write_text(fs::path(a.out_dir) / "jackknife_summary.csv", jackknife_study_to_csv(s));
    write_text(fs::path(a.out_dir) / "jackknife_values.csv", jackknife_values_to_csv(s));
    write_text(fs::path(a.out_dir) / "manifest.json", jackknife_manifest(s).dump(2) + "\n");
    for (const auto& m : s.methods) {
        if (m.failures > 0) warn(std::string(to_string(m.method)) + ": " + std::to_string(m.failures) + " replicate(s) failed");
    }
}

void run_simulate_bias_variance(const SimulateArgs& a) {
    const SimConfig c = sim_config(a);
    BiasVarianceOptions opt;
    opt.learning_sets = a.learning_sets;
    opt.replicates = a.prediction_replicates;
    opt.study.K = a.K;
    opt.study.jobs = a.jobs;
    const auto methods = study_methods(a.methods, {StudyMethod::ols_k, StudyMethod::ols_ss, StudyMethod::mlr,
                                                   StudyMethod::pcr_p, StudyMethod::pls_p});
    log("bias/variance study: " + std::to_string(a.learning_sets) + " learning sets, phi=" + format_double(c.phi));
    const BiasVarianceStudy s = run_bias_variance_study(c, methods, opt);
    fs::create_directories(a.out_dir);
    write_text(fs::path(a.out_dir) / "bias_variance.csv", bias_variance_to_csv(s));
    write_text(fs::path(a.out_dir) / "manifest.json", bias_variance_manifest(s).dump(2) + "\n");
    for (const auto& r : s.rows) {
        if (r.failures > 0) warn(std::string(to_string(r.method)) + ": " + std::to_string(r.failures) + " learning set(s) failed");
    }
}

void add_sim_options(CLI::App* app, SimulateArgs& a) {
    app->add_option("--scenario", a.scenario, "Noise correlation: weak (phi=0.5) or strong (phi=0.002)")
        ->check(CLI::IsMember({"weak", "strong"}))
        ->capture_default_str();
    app->add_option("--phi", a.phi, "Explicit noise decay rate (overrides --scenario)")->check(CLI::PositiveNumber);
    app->add_option("--I", a.I, "Calibration samples")->capture_default_str();
    app->add_option("--sigma2", a.sigma2, "Noise variance")->capture_default_str();
    app->add_option("--alpha", a.alpha, "Dirichlet parameter")->capture_default_str();
    app->add_option("--seed", a.seed, "Random seed")->capture_default_str();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Functional calibration and prediction for aggregated NIR spectra"};
    app.require_subcommand(1);

    CalibrateArgs cal;
    auto* c_cmd = app.add_subcommand("calibrate", "Fit baseline and analyte curves");
    add_data_options(c_cmd, cal.data);
    add_fit_options(c_cmd, cal.run, false);
    c_cmd->add_option("--model", cal.model_out, "Output model file (JSON)")->required();
    c_cmd->add_option("--curves", cal.curves_out, "Output curve table on a dense grid (CSV)");
    c_cmd->add_option("--curve-points", cal.curve_points, "Points in the curve table")->check(CLI::Range(2, 1000000));

    BaselinesArgs base;
    base.run.method = "pls";
    auto* b_cmd = app.add_subcommand("baselines", "Fit MLR, PCR or PLS");
    add_data_options(b_cmd, base.data);
    b_cmd->add_option("--method", base.run.method, "Baseline method")->check(CLI::IsMember({"mlr", "pcr", "pls"}))->capture_default_str();
    b_cmd->add_option("--components", base.run.components, "Fixed component count")->check(CLI::PositiveNumber);
    b_cmd->add_option("--variance-fraction", base.run.variance_fraction, "Component count explaining this variance fraction (default 0.9)")
        ->check(CLI::Range(0.0, 1.0));
    b_cmd->add_option("--model", base.model_out, "Output model file (JSON)")->required();

    JackknifeArgs jk;
    auto* j_cmd = app.add_subcommand("jackknife", "Leave-one-out standard deviations");
    add_data_options(j_cmd, jk.data);
    add_fit_options(j_cmd, jk.run, true);
    j_cmd->add_option("--out", jk.out, "Output CSV (analyte,sd)")->required();

    PredictArgs pr;
    auto* p_cmd = app.add_subcommand("predict", "Predict concentrations with intervals");
    p_cmd->add_option("--model", pr.model, "Model file from calibrate or baselines")->required()->check(CLI::ExistingFile);
    p_cmd->add_option("--spectra", pr.spectra, "Spectra to predict")->required()->check(CLI::ExistingFile);
    p_cmd->add_flag("--transpose", pr.transpose, "Spectra file is sample-by-wavelength");
    auto* sd_opt = p_cmd->add_option("--sd", pr.sd, "Standard deviations (analyte,sd)")->check(CLI::ExistingFile);
    auto* jk_flag = p_cmd->add_flag("--jackknife", pr.jackknife, "Compute standard deviations from calibration data");
    sd_opt->excludes(jk_flag);
    p_cmd->add_option("--cal-spectra", pr.cal_spectra, "Calibration spectra for --jackknife")->check(CLI::ExistingFile);
    p_cmd->add_option("--cal-concentrations", pr.cal_concentrations, "Calibration concentrations for --jackknife")
        ->check(CLI::ExistingFile);
    p_cmd->add_flag("--cal-transpose", pr.cal_transpose, "Calibration spectra are sample-by-wavelength");
    p_cmd->add_option("--c", pr.c, "Interval multiplier")->capture_default_str();
    p_cmd->add_option("--out", pr.out, "Output predictions CSV")->required();

    SepArgs sp;
    auto* s_cmd = app.add_subcommand("sep", "Standard error of prediction");
    s_cmd->add_option("--truth", sp.truth, "Reference concentrations (id,<analyte>...)")->required()->check(CLI::ExistingFile);
    s_cmd->add_option("--predictions", sp.predictions, "Predictions CSV")->required()->check(CLI::ExistingFile);
    s_cmd->add_option("--out", sp.out, "Output CSV (component,sep)")->required();

    SimulateArgs sim;
    auto* sim_cmd = app.add_subcommand("simulate", "Synthetic data and simulation studies");
    sim_cmd->require_subcommand(1);
    auto* ds_cmd = sim_cmd->add_subcommand("dataset", "Write one synthetic calibration set");
    add_sim_options(ds_cmd, sim);
    ds_cmd->add_option("--replicate", sim.replicate, "Noise replicate index")->capture_default_str();
    ds_cmd->add_option("--out-spectra", sim.out_spectra, "Output spectra CSV")->required();
    ds_cmd->add_option("--out-concentrations", sim.out_concentrations, "Output concentrations CSV")->required();
    ds_cmd->add_option("--out-truth", sim.out_truth, "Output true curves CSV");

    auto* js_cmd = sim_cmd->add_subcommand("jackknife-study", "Median and IQR of jackknife SDs over replicates");
    add_sim_options(js_cmd, sim);
    js_cmd->add_option("--replicates", sim.replicates, "Noise replicates")->check(CLI::PositiveNumber)->capture_default_str();
    js_cmd->add_option("--methods", sim.methods, "Methods (default: all)")->delimiter(',');
    js_cmd->add_option("--K", sim.K, "B-splines for OLS-K and GLS-K")->capture_default_str();
    js_cmd->add_option("--jobs", sim.jobs, "Worker threads")->check(CLI::PositiveNumber);
    js_cmd->add_option("--out-dir", sim.out_dir, "Output directory")->required();

    auto* bv_cmd = sim_cmd->add_subcommand("bias-variance", "Squared bias and variability of predictions");
    add_sim_options(bv_cmd, sim);
    bv_cmd->add_option("--learning-sets", sim.learning_sets, "Independent calibration sets")->check(CLI::PositiveNumber)->capture_default_str();
    bv_cmd->add_option("--prediction-replicates", sim.prediction_replicates, "Prediction curves per target row")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    bv_cmd->add_option("--methods", sim.methods, "Methods (default: OLS-K,OLS-SS,MLR,PCR-p,PLS-p)")->delimiter(',');
    bv_cmd->add_option("--K", sim.K, "B-splines for OLS-K")->capture_default_str();
    bv_cmd->add_option("--jobs", sim.jobs, "Worker threads")->check(CLI::PositiveNumber);
    bv_cmd->add_option("--out-dir", sim.out_dir, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << e.what() << "\n";
        return 2;
    }

    try {
        if (c_cmd->parsed()) run_calibrate(cal);
        else if (b_cmd->parsed()) run_baselines(base);
        else if (j_cmd->parsed()) run_jackknife(jk);
        else if (p_cmd->parsed()) {
            if (!pr.jackknife && pr.sd.empty()) throw UsageError("predict needs --sd or --jackknife");
            run_predict(pr);
        } else if (s_cmd->parsed()) run_sep(sp);
        else if (ds_cmd->parsed()) run_simulate_dataset(sim);
        else if (js_cmd->parsed()) run_simulate_jackknife(sim);
        else if (bv_cmd->parsed()) run_simulate_bias_variance(sim);
    } catch (const UsageError& e) {
        std::cerr << "error: usage: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.category() << ": " << e.what() << "\n";
        return 1;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: parse: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
