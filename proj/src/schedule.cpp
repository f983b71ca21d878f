#include "p3seg/schedule.hpp"

#include <cmath>

#include "p3seg/errors.hpp"

namespace p3seg {

CurveKind curve_from_string(const std::string& name) {
    if (name == "exponential" || name == "exp") return CurveKind::exponential;
    if (name == "linear") return CurveKind::linear;
    if (name == "step") return CurveKind::step;
    if (name == "late_spike") return CurveKind::late_spike;
    if (name == "constant") return CurveKind::constant;
    throw config_error("unknown curve kind: " + name);
}

std::string curve_to_string(CurveKind kind) {
    switch (kind) {
        case CurveKind::exponential: return "exponential";
        case CurveKind::linear: return "linear";
        case CurveKind::step: return "step";
        case CurveKind::late_spike: return "late_spike";
        case CurveKind::constant: return "constant";
    }
    return "exponential";
}

ScheduleParams solve_curve(long period_T, double lower, double upper, CurveKind curve) {
    if (period_T < 2) throw config_error("period_T must be >= 2");
    if (!(lower > 0.0 && lower < 1.0)) throw config_error("lower bound must be in (0,1)");
    if (!(upper > lower && upper <= 1.0))
        throw config_error("invalid bounds: need lower < upper <= 1");

    ScheduleParams p;
    p.period_T = period_T;
    p.lower_bound = lower;
    p.upper_bound = upper;
    p.curve = curve;
    p.gamma = lower - 1.0;
    const double arg = upper - p.gamma; // = upper - lower + 1 > 1 here
    if (arg <= 1.0) throw config_error("invalid bounds: curve logarithm nonpositive");
    p.S = static_cast<double>(period_T) / std::log(arg);
    return p;
}

double alpha_at(const ScheduleParams& p, long iter) {
    const long t = iter % p.period_T;
    const double frac = static_cast<double>(t) / static_cast<double>(p.period_T);
    const double span = p.upper_bound - p.lower_bound;
    switch (p.curve) {
        case CurveKind::exponential:
            return std::exp(static_cast<double>(t) / p.S) + p.gamma;
        case CurveKind::linear:
            return p.lower_bound + span * frac;
        case CurveKind::step:
            return t * 2 < p.period_T ? p.lower_bound : p.upper_bound;
        case CurveKind::late_spike:
            // stays near the lower bound and rises sharply late in the cycle
            return p.lower_bound + span * std::pow(frac, 8.0);
        case CurveKind::constant:
            return 0.5 * (p.lower_bound + p.upper_bound);
    }
    return p.lower_bound;
}

double lambda_at(const RampParams& r, long iter) {
    if (iter < 0) throw config_error("lambda_at: iter must be nonnegative");
    if (iter > r.max_iter) iter = r.max_iter;
    double rem = 1.0 - static_cast<double>(iter) / static_cast<double>(r.max_iter);
    if (r.lambda_squared) rem *= rem;
    return r.base_weight * std::exp(-5.0 * rem);
}

double lr_factor_at(const RampParams& r, long iter) {
    if (iter < 0 || iter >= r.max_iter)
        throw config_error("lr_factor_at: iter must be in [0, max_iter)");
    const double rem = 1.0 - static_cast<double>(iter) / static_cast<double>(r.max_iter);
    return std::pow(rem, r.lr_exponent);
}

} // namespace p3seg
