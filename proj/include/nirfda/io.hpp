/**
 * @file io.hpp
 * @brief File formats: wide CSV spectra, concentration tables, JSON model
 * files and the CSV/JSON outputs of the command-line tool.
 *
 * All text output uses ',' as delimiter, LF line endings, '.' as decimal
 * point and 17 significant digits, so a write/read cycle is lossless.
 */
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "nirfda/baselines.hpp"
#include "nirfda/basis.hpp"
#include "nirfda/errors.hpp"
#include "nirfda/model.hpp"
#include "nirfda/predict.hpp"
#include "nirfda/simulate.hpp"

namespace nirfda {

inline constexpr int model_schema_version = 1;

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

struct CsvTable {
    std::string source;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> lines;  ///< 1-based file line of each row
};

namespace detail {

inline std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

[[noreturn]] inline void parse_error(const CsvTable& t, std::size_t line, std::size_t column, const std::string& msg) {
    fail(ErrorKind::parse, t.source + ": line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + msg);
}

inline double parse_cell(const CsvTable& t, std::size_t row, std::size_t col) {
    const std::string& s = t.rows[row][col];
    const std::size_t line = t.lines[row];
    if (s.empty()) parse_error(t, line, col + 1, "missing value");
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        parse_error(t, line, col + 1, "not a number: '" + s + "'");
    }
    if (used != s.size()) parse_error(t, line, col + 1, "not a number: '" + s + "'");
    if (!std::isfinite(v)) parse_error(t, line, col + 1, "non-finite value");
    return v;
}

} // namespace detail

inline CsvTable parse_csv(std::istream& in, const std::string& source) {
    CsvTable t;
    t.source = source;
    std::string line;
    std::size_t number = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++number;
        if (detail::trim(line).empty()) continue;
        auto cells = detail::split_line(line);
        if (!have_header) {
            if (!cells.empty() && cells[0].size() >= 3 && cells[0].compare(0, 3, "\xEF\xBB\xBF") == 0) {
                cells[0].erase(0, 3);
            }
            t.header = std::move(cells);
            have_header = true;
            continue;
        }
        if (cells.size() != t.header.size()) {
            detail::parse_error(t, number, std::min(cells.size(), t.header.size()) + 1,
                                "expected " + std::to_string(t.header.size()) + " cells, found " +
                                    std::to_string(cells.size()));
        }
        t.rows.push_back(std::move(cells));
        t.lines.push_back(number);
    }
    if (!have_header) fail(ErrorKind::parse, source + ": empty file");
    return t;
}

inline CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open " + path.string());
    return parse_csv(in, path.string());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write " + path.string());
    out << text;
    if (!out) fail(ErrorKind::io, "write failed for " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// Spectra
// ---------------------------------------------------------------------------

/// Wide layout: header `wavelength,<id>...`, one row per wavelength. With
/// `transpose`, header `id,<wavelength>...` and one row per sample.
inline SpectraSet spectra_from_table(const CsvTable& t, bool transpose = false,
                                     SpectraRole role = SpectraRole::calibration) {
    if (t.header.size() < 2) fail(ErrorKind::parse, t.source + ": need a label column and at least one data column");
    const std::size_t ncols = t.header.size() - 1;
    const std::size_t nrows = t.rows.size();
    Eigen::VectorXd grid;
    Eigen::MatrixXd W;
    std::vector<std::string> ids;
    if (!transpose) {
        grid.resize(static_cast<Eigen::Index>(nrows));
        W.resize(static_cast<Eigen::Index>(ncols), static_cast<Eigen::Index>(nrows));
        ids.assign(t.header.begin() + 1, t.header.end());
        for (std::size_t r = 0; r < nrows; ++r) {
            grid(static_cast<Eigen::Index>(r)) = detail::parse_cell(t, r, 0);
            if (r > 0 && !(grid(static_cast<Eigen::Index>(r)) > grid(static_cast<Eigen::Index>(r - 1)))) {
                detail::parse_error(t, t.lines[r], 1, "wavelengths must be strictly increasing (duplicate or out of order)");
            }
            for (std::size_t c = 0; c < ncols; ++c) {
                W(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(r)) = detail::parse_cell(t, r, c + 1);
            }
        }
    } else {
        grid.resize(static_cast<Eigen::Index>(ncols));
        W.resize(static_cast<Eigen::Index>(nrows), static_cast<Eigen::Index>(ncols));
        for (std::size_t c = 0; c < ncols; ++c) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(t.header[c + 1], &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != t.header[c + 1].size()) {
                fail(ErrorKind::parse, t.source + ": line 1, column " + std::to_string(c + 2) + ": not a wavelength: '" +
                                           t.header[c + 1] + "'");
            }
            grid(static_cast<Eigen::Index>(c)) = v;
            if (c > 0 && !(v > grid(static_cast<Eigen::Index>(c - 1)))) {
                fail(ErrorKind::parse, t.source + ": line 1, column " + std::to_string(c + 2) +
                                           ": wavelengths must be strictly increasing (duplicate or out of order)");
            }
        }
        for (std::size_t r = 0; r < nrows; ++r) {
            ids.push_back(t.rows[r][0]);
            for (std::size_t c = 0; c < ncols; ++c) {
                W(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = detail::parse_cell(t, r, c + 1);
            }
        }
    }
    try {
        return SpectraSet(std::move(grid), std::move(W), role, std::move(ids));
    } catch (const Error& e) {
        fail(ErrorKind::parse, t.source + ": " + e.what());
    }
}

inline SpectraSet load_spectra(const std::filesystem::path& path, bool transpose = false,
                               SpectraRole role = SpectraRole::calibration) {
    return spectra_from_table(read_csv(path), transpose, role);
}

inline std::string spectra_to_csv(const SpectraSet& s) {
    std::string out = "wavelength";
    for (const auto& id : s.ids()) out += "," + id;
    out += "\n";
    for (Eigen::Index n = 0; n < s.wavelengths(); ++n) {
        out += format_double(s.grid()(n));
        for (Eigen::Index i = 0; i < s.samples(); ++i) out += "," + format_double(s.absorbance()(i, n));
        out += "\n";
    }
    return out;
}

inline void save_spectra(const std::filesystem::path& path, const SpectraSet& s) { write_text(path, spectra_to_csv(s)); }

// ---------------------------------------------------------------------------
// Tables keyed by sample id (concentrations, predictions)
// ---------------------------------------------------------------------------

struct IdTable {
    std::vector<std::string> ids;
    std::vector<std::string> columns;
    Eigen::MatrixXd values;
};

inline IdTable id_table_from_csv(const CsvTable& t) {
    if (t.header.size() < 2) fail(ErrorKind::parse, t.source + ": need an id column and at least one value column");
    IdTable out;
    out.columns.assign(t.header.begin() + 1, t.header.end());
    out.values.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(out.columns.size()));
    std::map<std::string, std::size_t> seen;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const std::string& id = t.rows[r][0];
        if (id.empty()) detail::parse_error(t, t.lines[r], 1, "missing sample id");
        if (!seen.emplace(id, r).second) detail::parse_error(t, t.lines[r], 1, "duplicate sample id '" + id + "'");
        out.ids.push_back(id);
        for (std::size_t c = 0; c < out.columns.size(); ++c) {
            out.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = detail::parse_cell(t, r, c + 1);
        }
    }
    return out;
}

/// Rows of `table` reordered to follow `order`; every id must appear in both.
inline Eigen::MatrixXd align_rows(const IdTable& table, const std::vector<std::string>& order, const std::string& what) {
    std::map<std::string, Eigen::Index> index;
    for (std::size_t r = 0; r < table.ids.size(); ++r) index.emplace(table.ids[r], static_cast<Eigen::Index>(r));
    if (table.ids.size() != order.size()) {
        for (const auto& id : table.ids) {
            if (std::find(order.begin(), order.end(), id) == order.end()) {
                fail(ErrorKind::alignment, what + ": sample '" + id + "' is not present in the spectra");
            }
        }
    }
    Eigen::MatrixXd out(static_cast<Eigen::Index>(order.size()), table.values.cols());
    for (std::size_t j = 0; j < order.size(); ++j) {
        const auto it = index.find(order[j]);
        if (it == index.end()) fail(ErrorKind::alignment, what + ": no row for sample '" + order[j] + "'");
        out.row(static_cast<Eigen::Index>(j)) = table.values.row(it->second);
    }
    return out;
}

struct LoadedConcentrations {
    ConcentrationMatrix Y;
    bool has_negative = false;
};

/// Header `id,<analyte>...`; rows are realigned to the spectra column order.
inline LoadedConcentrations load_concentrations(const std::filesystem::path& path, const SpectraSet& spectra) {
    const IdTable t = id_table_from_csv(read_csv(path));
    LoadedConcentrations out;
    out.Y = ConcentrationMatrix(align_rows(t, spectra.ids(), path.string()), t.columns);
    out.has_negative = out.Y.has_negative();
    return out;
}

inline std::string concentrations_to_csv(const ConcentrationMatrix& Y, const std::vector<std::string>& ids) {
    std::string out = "id";
    for (const auto& a : Y.analytes()) out += "," + a;
    out += "\n";
    for (Eigen::Index i = 0; i < Y.samples(); ++i) {
        out += ids[static_cast<std::size_t>(i)];
        for (Eigen::Index l = 0; l < Y.analyte_count(); ++l) out += "," + format_double(Y.values()(i, l));
        out += "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

using AnyModel = std::variant<CalibrationModel, MultivariateModel>;

namespace detail {

inline nlohmann::json matrix_json(const Eigen::MatrixXd& M) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline nlohmann::json vector_json(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

inline Eigen::MatrixXd json_matrix(const nlohmann::json& j, Eigen::Index cols_if_empty = 0) {
    const auto rows = static_cast<Eigen::Index>(j.size());
    const Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(j.at(0).size()) : cols_if_empty;
    Eigen::MatrixXd M(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = j.at(static_cast<std::size_t>(r));
        if (static_cast<Eigen::Index>(row.size()) != cols) fail(ErrorKind::parse, "ragged matrix in model file");
        for (Eigen::Index c = 0; c < cols; ++c) M(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
    return M;
}

inline Eigen::VectorXd json_vector(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Method parse_method(const std::string& s) {
    for (Method m : {Method::ols_k, Method::ols_ss, Method::gls_k}) {
        if (s == to_string(m)) return m;
    }
    fail(ErrorKind::parse, "unknown functional method '" + s + "' in model file");
}

inline MultivariateMethod parse_multivariate_method(const std::string& s) {
    for (MultivariateMethod m : {MultivariateMethod::mlr, MultivariateMethod::pcr, MultivariateMethod::pls}) {
        if (s == to_string(m)) return m;
    }
    fail(ErrorKind::parse, "unknown multivariate method '" + s + "' in model file");
}

} // namespace detail

inline nlohmann::json model_to_json(const CalibrationModel& m) {
    nlohmann::json j;
    j["schema_version"] = model_schema_version;
    j["kind"] = "functional";
    j["method"] = std::string(to_string(m.method));
    j["basis"] = {{"order", m.basis.order()}, {"knots", m.basis.knots()}};
    j["coefficients"] = detail::matrix_json(m.coefficients);
    j["lambda"] = m.lambda;
    j["analytes"] = m.analytes;
    j["closed"] = m.closed;
    nlohmann::json d;
    d["rss"] = m.diagnostics.rss;
    d["gcv"] = m.diagnostics.gcv ? nlohmann::json(*m.diagnostics.gcv) : nlohmann::json(nullptr);
    d["hat_trace"] = m.diagnostics.hat_trace;
    d["constraint_max_abs"] = m.diagnostics.constraint_max_abs;
    j["diagnostics"] = d;
    if (m.covariance) {
        j["covariance"] = {{"sigma2", detail::vector_json(m.covariance->sigma2)},
                           {"phi", detail::vector_json(m.covariance->phi)},
                           {"clipped", m.covariance->clipped}};
    }
    return j;
}

inline nlohmann::json model_to_json(const MultivariateModel& m) {
    nlohmann::json j;
    j["schema_version"] = model_schema_version;
    j["kind"] = "multivariate";
    j["method"] = std::string(to_string(m.method));
    j["grid"] = detail::vector_json(m.grid);
    j["coefficients"] = detail::matrix_json(m.coefficients);
    j["intercept"] = detail::vector_json(m.intercept.transpose());
    j["w_mean"] = detail::vector_json(m.w_mean.transpose());
    j["y_mean"] = detail::vector_json(m.y_mean.transpose());
    j["components"] = m.components;
    j["explained_fraction"] = m.explained_fraction;
    j["analytes"] = m.analytes;
    return j;
}

inline nlohmann::json model_to_json(const AnyModel& m) {
    return std::visit([](const auto& x) { return model_to_json(x); }, m);
}

inline AnyModel model_from_json(const nlohmann::json& j) {
    try {
        const int version = j.at("schema_version").get<int>();
        if (version != model_schema_version) {
            fail(ErrorKind::parse, "unsupported model schema_version " + std::to_string(version));
        }
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "functional") {
            CalibrationModel m;
            m.method = detail::parse_method(j.at("method").get<std::string>());
            m.basis = KnotVector(j.at("basis").at("knots").get<std::vector<double>>(), j.at("basis").at("order").get<int>());
            m.coefficients = detail::json_matrix(j.at("coefficients"));
            if (m.coefficients.cols() != m.basis.size() || m.coefficients.rows() < 2) {
                fail(ErrorKind::parse, "coefficient matrix does not match the basis");
            }
            m.lambda = j.at("lambda").get<double>();
            m.analytes = j.at("analytes").get<std::vector<std::string>>();
            m.closed = j.at("closed").get<bool>();
            const auto& d = j.at("diagnostics");
            m.diagnostics.rss = d.at("rss").get<double>();
            if (!d.at("gcv").is_null()) m.diagnostics.gcv = d.at("gcv").get<double>();
            m.diagnostics.hat_trace = d.at("hat_trace").get<double>();
            m.diagnostics.constraint_max_abs = d.at("constraint_max_abs").get<double>();
            if (j.contains("covariance")) {
                CovarianceModel c;
                c.sigma2 = detail::json_vector(j["covariance"].at("sigma2"));
                c.phi = detail::json_vector(j["covariance"].at("phi"));
                c.clipped = j["covariance"].at("clipped").get<bool>();
                m.covariance = std::move(c);
            }
            return m;
        }
        if (kind == "multivariate") {
            MultivariateModel m;
            m.method = detail::parse_multivariate_method(j.at("method").get<std::string>());
            m.grid = detail::json_vector(j.at("grid"));
            m.analytes = j.at("analytes").get<std::vector<std::string>>();
            m.coefficients = detail::json_matrix(j.at("coefficients"), static_cast<Eigen::Index>(m.analytes.size()));
            m.intercept = detail::json_vector(j.at("intercept")).transpose();
            m.w_mean = detail::json_vector(j.at("w_mean")).transpose();
            m.y_mean = detail::json_vector(j.at("y_mean")).transpose();
            m.components = j.at("components").get<int>();
            m.explained_fraction = j.at("explained_fraction").get<double>();
            if (m.coefficients.rows() != m.grid.size()) fail(ErrorKind::parse, "coefficients do not match the grid");
            return m;
        }
        fail(ErrorKind::parse, "unknown model kind '" + kind + "'");
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::parse, std::string("malformed model file: ") + e.what());
    }
}

inline void save_model(const std::filesystem::path& path, const AnyModel& m) {
    write_text(path, model_to_json(m).dump(2) + "\n");
}

inline AnyModel load_model(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text(path));
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::parse, path.string() + ": " + e.what());
    }
    return model_from_json(j);
}

// ---------------------------------------------------------------------------
// Result tables
// ---------------------------------------------------------------------------

/// `t,theta0,<analyte>...` on the given grid.
inline std::string curves_to_csv(const CalibrationModel& m, const Eigen::VectorXd& grid) {
    const Eigen::MatrixXd C = m.curves(grid);
    std::string out = "t,theta0";
    for (const auto& a : m.analytes) out += "," + a;
    out += "\n";
    for (Eigen::Index n = 0; n < grid.size(); ++n) {
        out += format_double(grid(n));
        for (Eigen::Index c = 0; c < C.cols(); ++c) out += "," + format_double(C(n, c));
        out += "\n";
    }
    return out;
}

/// `analyte,sd`.
inline std::string sd_to_csv(const Eigen::VectorXd& S, const std::vector<std::string>& analytes) {
    std::string out = "analyte,sd\n";
    for (Eigen::Index l = 0; l < S.size(); ++l) out += analytes[static_cast<std::size_t>(l)] + "," + format_double(S(l)) + "\n";
    return out;
}

inline Eigen::VectorXd load_sd(const std::filesystem::path& path, const std::vector<std::string>& analytes) {
    const CsvTable t = read_csv(path);
    if (t.header.size() != 2) fail(ErrorKind::parse, path.string() + ": expected header 'analyte,sd'");
    Eigen::VectorXd S = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(analytes.size()), std::nan(""));
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto it = std::find(analytes.begin(), analytes.end(), t.rows[r][0]);
        if (it == analytes.end()) {
            fail(ErrorKind::alignment, path.string() + ": line " + std::to_string(t.lines[r]) +
                                           ": analyte '" + t.rows[r][0] + "' is not in the model");
        }
        S(it - analytes.begin()) = detail::parse_cell(t, r, 1);
    }
    for (std::size_t l = 0; l < analytes.size(); ++l) {
        if (std::isnan(S(static_cast<Eigen::Index>(l)))) {
            fail(ErrorKind::alignment, path.string() + ": no standard deviation for analyte '" + analytes[l] + "'");
        }
    }
    return S;
}

/// `id,<a>...,<a>_lower,<a>_upper...[,out_of_simplex,residual_norm]`.
inline std::string predictions_to_csv(const std::vector<std::string>& ids, const std::vector<std::string>& analytes,
                                      const Eigen::MatrixXd& y_hat, const Intervals* intervals = nullptr,
                                      const Prediction* detail = nullptr) {
    std::string out = "id";
    for (const auto& a : analytes) out += "," + a;
    if (intervals) {
        for (const auto& a : analytes) out += "," + a + "_lower," + a + "_upper";
    }
    if (detail) out += ",out_of_simplex,residual_norm";
    out += "\n";
    for (Eigen::Index j = 0; j < y_hat.rows(); ++j) {
        out += ids[static_cast<std::size_t>(j)];
        for (Eigen::Index l = 0; l < y_hat.cols(); ++l) out += "," + format_double(y_hat(j, l));
        if (intervals) {
            for (Eigen::Index l = 0; l < y_hat.cols(); ++l) {
                out += "," + format_double(intervals->lower(j, l)) + "," + format_double(intervals->upper(j, l));
            }
        }
        if (detail) {
            out += std::string(",") + (detail->out_of_simplex[static_cast<std::size_t>(j)] ? "1" : "0") + "," +
                   format_double(detail->residual_norm(j));
        }
        out += "\n";
    }
    return out;
}

/// `component,sep` with one row per analyte and a final `overall` row.
inline std::string sep_to_csv(const SepReport& r, const std::vector<std::string>& analytes) {
    std::string out = "component,sep\n";
    for (Eigen::Index l = 0; l < r.per_component.size(); ++l) {
        out += analytes[static_cast<std::size_t>(l)] + "," + format_double(r.per_component(l)) + "\n";
    }
    out += "overall," + format_double(r.overall) + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Simulation outputs
// ---------------------------------------------------------------------------

inline nlohmann::json sim_config_json(const SimConfig& c) {
    nlohmann::json curves = nlohmann::json::array();
    for (const auto& analyte : c.curves.analytes) {
        nlohmann::json bumps = nlohmann::json::array();
        for (const Bump& b : analyte) bumps.push_back({{"center", b.center}, {"width", b.width}, {"height", b.height}});
        curves.push_back(std::move(bumps));
    }
    return {{"grid", {{"start", c.start}, {"end", c.end}, {"step", c.step}}},
            {"I", c.I},
            {"m", c.m()},
            {"alpha", c.alpha},
            {"sigma2", c.sigma2},
            {"phi", c.phi},
            {"seed", c.seed},
            {"curves",
             {{"baseline_level", c.curves.baseline_level},
              {"baseline_slope", c.curves.baseline_slope},
              {"project_sum_to_zero", c.curves.project_sum_to_zero},
              {"analytes", curves}}}};
}

/// `method,component,median,iqr,successes,failures`.
inline std::string jackknife_study_to_csv(const JackknifeStudy& s) {
    std::string out = "method,component,median,iqr,successes,failures\n";
    const auto names = analyte_names(s.config.m());
    for (const auto& m : s.methods) {
        if (m.skipped) continue;
        const std::string tail = "," + std::to_string(m.values.rows()) + "," + std::to_string(m.failures) + "\n";
        for (Eigen::Index l = 0; l < m.median.size(); ++l) {
            out += std::string(to_string(m.method)) + "," + names[static_cast<std::size_t>(l)] + "," +
                   format_double(m.median(l)) + "," + format_double(m.iqr(l)) + tail;
        }
        out += std::string(to_string(m.method)) + ",overall," + format_double(m.overall_median) + "," +
               format_double(m.overall_iqr) + tail;
    }
    return out;
}

/// `method,replicate_row,<analyte>...` with every successful S vector.
inline std::string jackknife_values_to_csv(const JackknifeStudy& s) {
    std::string out = "method,row";
    for (const auto& a : analyte_names(s.config.m())) out += "," + a;
    out += "\n";
    for (const auto& m : s.methods) {
        for (Eigen::Index r = 0; r < m.values.rows(); ++r) {
            out += std::string(to_string(m.method)) + "," + std::to_string(r);
            for (Eigen::Index l = 0; l < m.values.cols(); ++l) out += "," + format_double(m.values(r, l));
            out += "\n";
        }
    }
    return out;
}

inline nlohmann::json jackknife_manifest(const JackknifeStudy& s) {
    nlohmann::json methods = nlohmann::json::array();
    for (const auto& m : s.methods) {
        methods.push_back({{"method", std::string(to_string(m.method))},
                           {"skipped", m.skipped},
                           {"successes", m.values.rows()},
                           {"failures", m.failures},
                           {"failure_messages", m.failure_messages}});
    }
    return {{"study", "jackknife"},
            {"config", sim_config_json(s.config)},
            {"replicates", s.replicates},
            {"concentrations", detail::matrix_json(s.concentrations)},
            {"methods", methods}};
}

/// `method,component,bias2,variance,terms,failures`.
inline std::string bias_variance_to_csv(const BiasVarianceStudy& s) {
    std::string out = "method,component,bias2,variance,terms,failures\n";
    const auto names = analyte_names(s.config.m());
    for (const auto& r : s.rows) {
        const std::string tail = "," + std::to_string(r.terms) + "," + std::to_string(r.failures) + "\n";
        for (Eigen::Index l = 0; l < r.bias2.size(); ++l) {
            out += std::string(to_string(r.method)) + "," + names[static_cast<std::size_t>(l)] + "," +
                   format_double(r.bias2(l)) + "," + format_double(r.variance(l)) + tail;
        }
        out += std::string(to_string(r.method)) + ",total," + format_double(r.bias2_total) + "," +
               format_double(r.variance_total) + tail;
    }
    return out;
}

inline nlohmann::json bias_variance_manifest(const BiasVarianceStudy& s) {
    nlohmann::json methods = nlohmann::json::array();
    for (const auto& r : s.rows) {
        methods.push_back({{"method", std::string(to_string(r.method))}, {"failures", r.failures}, {"terms", r.terms}});
    }
    return {{"study", "bias_variance"},
            {"config", sim_config_json(s.config)},
            {"learning_sets", s.options.learning_sets},
            {"replicates", s.options.replicates},
            {"targets", detail::matrix_json(s.options.targets)},
            {"concentrations", detail::matrix_json(draw_concentrations(s.config).values())},
            {"methods", methods}};
}

} // namespace nirfda
