#pragma once

#include <cstdint>
#include <string>

namespace p3seg {

// Shape of the per-cycle interpolation-ratio curve. `exponential` is the
// solved exp(iter/S) + gamma curve; the others exist for ablation runs.
enum class CurveKind {
    exponential,
    linear,
    step,
    late_spike,
    constant,
};

CurveKind curve_from_string(const std::string& name); // config_error on unknown name
std::string curve_to_string(CurveKind kind);

// State of the periodic interpolation-ratio curve alpha(iter).
//
// The exponential curve is alpha1(t) = exp(t/S) + gamma on t in [0, T),
// with gamma and S solved so that alpha1(0) = lower and alpha1(T) = upper.
struct ScheduleParams {
    long period_T = 0;
    double lower_bound = 0.0;
    double upper_bound = 0.0;
    double gamma = 0.0;
    double S = 0.0;
    CurveKind curve = CurveKind::exponential;
};

// Solve the curve's boundary conditions: gamma = lower - 1 and
// S = T / ln(upper - gamma). Throws config_error when the bounds are
// degenerate (upper <= lower makes the logarithm nonpositive).
ScheduleParams solve_curve(long period_T, double lower, double upper,
                           CurveKind curve = CurveKind::exponential);

// alpha(iter) = alpha1(iter mod T). Cycles are half-open [0, T), so
// iter = k*T restarts exactly at the lower bound.
double alpha_at(const ScheduleParams& p, long iter);

// Time-varying loss weight and learning-rate factor.
struct RampParams {
    long max_iter = 1;
    double base_weight = 0.1;
    double lr_exponent = 0.9;
    bool lambda_squared = false; // squared-exponent variant of the ramp
};

// lambda(iter) = base * exp(-5 * (1 - iter/max_iter)), iter clamped to
// max_iter. With lambda_squared the exponent term is squared.
double lambda_at(const RampParams& r, long iter);

// Polynomial decay (1 - iter/max_iter)^lr_exponent, strictly decreasing.
double lr_factor_at(const RampParams& r, long iter);

} // namespace p3seg
