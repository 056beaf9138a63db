#pragma once

#include <stdexcept>
#include <string>

namespace robba {

// Failure taxonomy. Every throw site picks a stable code; the CLI maps codes
// to exit statuses and to the "error" field of its JSON output, so the names
// here are part of the external interface.
enum class errc {
    parse_error,
    precision_exhausted,
    zero_at_precision,
    not_a_unit,
    window_empty,
    window_overflow,
    uncertified_window,
    leading_coeff_not_unit,
    bad_calibration,
    jmax_exceeded,
    no_contraction,
    not_invertible_at_precision,
    lambda_is_unit,
    no_unit_leading_entry,
    degree_stuck,
};

inline const char* errc_name(errc c) {
    switch (c) {
        case errc::parse_error: return "ParseError";
        case errc::precision_exhausted: return "PrecisionExhausted";
        case errc::zero_at_precision: return "ZeroAtPrecision";
        case errc::not_a_unit: return "NotAUnit";
        case errc::window_empty: return "WindowEmpty";
        case errc::window_overflow: return "WindowOverflow";
        case errc::uncertified_window: return "UncertifiedWindow";
        case errc::leading_coeff_not_unit: return "LeadingCoeffNotUnit";
        case errc::bad_calibration: return "BadCalibration";
        case errc::jmax_exceeded: return "JMaxExceeded";
        case errc::no_contraction: return "NoContraction";
        case errc::not_invertible_at_precision: return "NotInvertibleAtPrecision";
        case errc::lambda_is_unit: return "LambdaIsUnit";
        case errc::no_unit_leading_entry: return "NoUnitLeadingEntry";
        case errc::degree_stuck: return "DegreeStuck";
    }
    return "UnknownError";
}

class error : public std::runtime_error {
public:
    error(errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    errc code() const noexcept { return code_; }
    const char* code_name() const noexcept { return errc_name(code_); }

private:
    errc code_;
};

[[noreturn]] inline void fail(errc c, const std::string& msg) { throw error(c, msg); }

}  // namespace robba
