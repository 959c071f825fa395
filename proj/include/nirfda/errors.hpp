#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nirfda {

/// Failure categories. The CLI prints the category name as the first token of
/// its single-line error report, so names are part of the external interface.
enum class ErrorKind {
    invalid_basis,
    invalid_domain,
    domain,
    invalid_grid,
    unsupported_order,
    shape,
    collinear_concentrations,
    singular_design,
    invalid_parameter,
    degenerate_gcv,
    degenerate_covariance,
    covariance_conditioning,
    degenerate_analytes,
    fold_failure,
    insufficient_samples,
    degenerate_spectra,
    invalid_components,
    convergence,
    grid_mismatch,
    parse,
    alignment,
    io,
    usage,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::invalid_basis: return "invalid-basis";
    case ErrorKind::invalid_domain: return "invalid-domain";
    case ErrorKind::domain: return "domain";
    case ErrorKind::invalid_grid: return "invalid-grid";
    case ErrorKind::unsupported_order: return "unsupported-order";
    case ErrorKind::shape: return "shape";
    case ErrorKind::collinear_concentrations: return "collinear-concentrations";
    case ErrorKind::singular_design: return "singular-design";
    case ErrorKind::invalid_parameter: return "invalid-parameter";
    case ErrorKind::degenerate_gcv: return "degenerate-gcv";
    case ErrorKind::degenerate_covariance: return "degenerate-covariance";
    case ErrorKind::covariance_conditioning: return "covariance-conditioning";
    case ErrorKind::degenerate_analytes: return "degenerate-analytes";
    case ErrorKind::fold_failure: return "fold-failure";
    case ErrorKind::insufficient_samples: return "insufficient-samples";
    case ErrorKind::degenerate_spectra: return "degenerate-spectra";
    case ErrorKind::invalid_components: return "invalid-components";
    case ErrorKind::convergence: return "convergence";
    case ErrorKind::grid_mismatch: return "grid-mismatch";
    case ErrorKind::parse: return "parse";
    case ErrorKind::alignment: return "alignment";
    case ErrorKind::io: return "io";
    case ErrorKind::usage: return "usage";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }
    [[nodiscard]] std::string_view category() const noexcept { return to_string(kind_); }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

} // namespace nirfda
