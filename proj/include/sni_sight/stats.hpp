#pragma once

#include <span>

namespace sni_sight::stats {

/// Regularized incomplete beta I_x(a, b), continued-fraction evaluation
/// (modified Lentz), relative accuracy about 1e-12 for the arguments used here.
double regularized_incomplete_beta(double a, double b, double x);

/// Student-t cumulative distribution P(T <= t) with df degrees of freedom.
double student_t_cdf(double t, double df);

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
    double df = 0.0;
    double mean_difference = 0.0;
    bool degenerate_variance = false;  // all differences equal and nonzero: p reported as 0
};

/// Two-sided paired t-test on a - b. All-zero differences give t = 0, p = 1.
/// Throws LengthMismatch or TooFewPairs (fewer than 2).
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace sni_sight::stats
