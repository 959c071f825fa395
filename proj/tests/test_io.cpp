#include <chrono>
#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>

#include "nirfda/nirfda.hpp"
#include "fixtures.hpp"

using namespace nirfda;
using fixture::kind_of;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        path_ = fs::temp_directory_path() /
                ("nirfda_io_" + std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    [[nodiscard]] fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

CsvTable table(const std::string& text) {
    std::istringstream in(text);
    return parse_csv(in, "inline.csv");
}

std::string error_text(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return std::string(e.category()) + ": " + e.what();
    }
    return "";
}

} // namespace

TEST(Spectra, WideAndTransposedLayoutsAgree) {
    const SpectraSet wide = spectra_from_table(table("wavelength,a,b\n400,1.5,2\n405,1.25,3\n410,1,4\n"));
    const SpectraSet tall = spectra_from_table(table("id,400,405,410\na,1.5,1.25,1\nb,2,3,4\n"), true);
    EXPECT_EQ(wide.grid(), tall.grid());
    EXPECT_EQ(wide.absorbance(), tall.absorbance());
    EXPECT_EQ(wide.ids(), (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(wide.absorbance()(1, 2), 4.0);
}

TEST(Spectra, ByteIdenticalRoundTrip) {
    TempDir dir;
    std::mt19937_64 rng(1);
    const SpectraSet s(fixture::linspace(350.0, 750.0, 17), fixture::gaussian(rng, 4, 17), SpectraRole::calibration,
                       {"s1", "s2", "s3", "s4"});
    save_spectra(dir / "a.csv", s);
    const SpectraSet back = load_spectra(dir / "a.csv");
    EXPECT_EQ(back.absorbance(), s.absorbance());
    EXPECT_EQ(back.grid(), s.grid());
    save_spectra(dir / "b.csv", back);
    EXPECT_EQ(read_text(dir / "a.csv"), read_text(dir / "b.csv"));
}

TEST(Spectra, ParseErrorsNameTheLine) {
    const std::string dup = error_text([] { spectra_from_table(table("wavelength,a\n400,1\n400,2\n")); });
    EXPECT_NE(dup.find("parse"), std::string::npos);
    EXPECT_NE(dup.find("line 3"), std::string::npos) << dup;
    EXPECT_NE(dup.find("strictly increasing"), std::string::npos);

    const std::string missing = error_text([] { spectra_from_table(table("wavelength,a,b\n400,1,\n")); });
    EXPECT_NE(missing.find("line 2, column 3"), std::string::npos) << missing;
    const std::string word = error_text([] { spectra_from_table(table("wavelength,a\n400,abc\n")); });
    EXPECT_NE(word.find("not a number"), std::string::npos) << word;
    const std::string ragged = error_text([] { table("wavelength,a\n400,1,2\n"); });
    EXPECT_NE(ragged.find("line 2"), std::string::npos) << ragged;
    EXPECT_EQ(kind_of([] { load_spectra("/nonexistent/x.csv"); }), ErrorKind::io);
}

TEST(Spectra, TecatorSizedFileLoadsQuickly) {
    TempDir dir;
    std::mt19937_64 rng(2);
    const SpectraSet s(fixture::linspace(850.0, 1050.0, 100), fixture::gaussian(rng, 240, 100));
    save_spectra(dir / "t.csv", s);
    const auto start = std::chrono::steady_clock::now();
    const SpectraSet back = load_spectra(dir / "t.csv");
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    EXPECT_EQ(back.samples(), 240);
    EXPECT_LT(seconds, 1.0);
}

TEST(Concentrations, RealignedToSpectraOrder) {
    TempDir dir;
    const SpectraSet s = spectra_from_table(table("wavelength,a,b,c\n1,1,2,3\n2,4,5,6\n"));
    write_text(dir / "y.csv", "id,x,y\nc,0.3,0.7\na,0.1,0.9\nb,-0.2,1.2\n");
    const LoadedConcentrations y = load_concentrations(dir / "y.csv", s);
    EXPECT_DOUBLE_EQ(y.Y.values()(0, 0), 0.1);
    EXPECT_DOUBLE_EQ(y.Y.values()(2, 1), 0.7);
    EXPECT_TRUE(y.has_negative);
    EXPECT_EQ(y.Y.analytes(), (std::vector<std::string>{"x", "y"}));

    write_text(dir / "extra.csv", "id,x\na,1\nb,1\nc,1\nd,1\n");
    EXPECT_EQ(kind_of([&] { load_concentrations(dir / "extra.csv", s); }), ErrorKind::alignment);
    write_text(dir / "short.csv", "id,x\na,1\nb,1\n");
    EXPECT_EQ(kind_of([&] { load_concentrations(dir / "short.csv", s); }), ErrorKind::alignment);
    write_text(dir / "dup.csv", "id,x\na,1\na,1\nc,1\n");
    EXPECT_EQ(kind_of([&] { load_concentrations(dir / "dup.csv", s); }), ErrorKind::parse);
}

TEST(Models, FunctionalRoundTrip) {
    TempDir dir;
    SimConfig sim;
    sim.seed = 3;
    const SimulatedData d = generate_dataset(sim);
    FitConfig cfg;
    cfg.method = Method::gls_k;
    cfg.gls_augmented = true;
    const CalibrationModel model = calibrate(d.spectra, d.Y, cfg);
    save_model(dir / "m.json", model);
    const auto back = std::get<CalibrationModel>(load_model(dir / "m.json"));
    EXPECT_EQ(back.coefficients, model.coefficients);
    EXPECT_EQ(back.basis.knots(), model.basis.knots());
    EXPECT_TRUE(back.closed);
    ASSERT_TRUE(back.covariance.has_value());
    EXPECT_EQ(back.covariance->phi, model.covariance->phi);
    const SimulatedData fresh = draw_spectra(sim, d.Y, GaussianProcess(sim.grid(), 4.0, 0.5), 9);
    EXPECT_LT((predict_matrix(back, fresh.spectra) - predict_matrix(model, fresh.spectra)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Models, MultivariateRoundTrip) {
    TempDir dir;
    SimConfig sim;
    sim.seed = 4;
    const SimulatedData d = generate_dataset(sim);
    const MultivariateModel model = fit_pls(d.spectra, d.Y, VarianceFraction{0.9});
    save_model(dir / "m.json", model);
    const auto back = std::get<MultivariateModel>(load_model(dir / "m.json"));
    EXPECT_EQ(back.components, model.components);
    EXPECT_LT((predict_matrix(back, d.spectra) - predict_matrix(model, d.spectra)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Models, RejectsUnknownSchema) {
    TempDir dir;
    write_text(dir / "v2.json", R"({"schema_version": 2, "kind": "functional"})");
    EXPECT_EQ(kind_of([&] { load_model(dir / "v2.json"); }), ErrorKind::parse);
    write_text(dir / "bad.json", "{not json");
    EXPECT_EQ(kind_of([&] { load_model(dir / "bad.json"); }), ErrorKind::parse);
    write_text(dir / "partial.json", R"({"schema_version": 1, "kind": "multivariate"})");
    EXPECT_EQ(kind_of([&] { load_model(dir / "partial.json"); }), ErrorKind::parse);
}

TEST(Tables, StandardDeviationsAndSep) {
    TempDir dir;
    Eigen::Vector2d S(0.0125, 0.5);
    write_text(dir / "sd.csv", sd_to_csv(S, {"fat", "water"}));
    EXPECT_EQ(load_sd(dir / "sd.csv", {"water", "fat"}), Eigen::Vector2d(0.5, 0.0125));
    EXPECT_EQ(kind_of([&] { load_sd(dir / "sd.csv", {"fat", "protein"}); }), ErrorKind::alignment);

    Eigen::MatrixXd truth(2, 1), pred(2, 1);
    truth << 0.5, 0.5;
    pred << 0.4, 0.6;
    const std::string text = sep_to_csv(sep(truth, pred), {"fat"});
    EXPECT_EQ(text.substr(0, 14), "component,sep\n");
    EXPECT_NE(text.find("\noverall,"), std::string::npos);
}
