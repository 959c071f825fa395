// Simulate a calibration set, fit the three functional estimators, and
// predict a fresh set of spectra with jackknife intervals.
#include <iostream>

#include "nirfda/nirfda.hpp"

int main() {
    using namespace nirfda;
    SimConfig cfg;
    cfg.seed = 7;
    const SimulatedData cal = generate_dataset(cfg);

    SimConfig test_cfg = cfg;
    test_cfg.seed = 8;
    test_cfg.I = 5;
    const SimulatedData test = generate_dataset(test_cfg);

    for (Method m : {Method::ols_k, Method::ols_ss, Method::gls_k}) {
        FitConfig fc;
        fc.method = m;
        fc.gls_augmented = true;
        const CalibrationModel model = calibrate(cal.spectra, cal.Y, fc);
        const Eigen::VectorXd S = jackknife_sd(cal.spectra, cal.Y, fc);
        const Eigen::MatrixXd y_hat = predict_matrix(model, test.spectra);
        const SepReport r = sep(test.Y.values(), y_hat);
        std::cout << to_string(m) << "  lambda=" << model.lambda << "  S=" << S.transpose()
                  << "  SEP=" << r.overall << "\n";
    }
    return 0;
}
