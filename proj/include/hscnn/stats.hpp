#pragma once

#include <vector>

namespace hscnn {

double student_t_cdf(double t, double df);

/// Inverse of student_t_cdf for p in (0, 1).
double student_t_quantile(double p, double df);

/// I_x(a, b).
double regularized_incomplete_beta(double a, double b, double x);

struct PairedTestResult {
    std::vector<double> differences; // a_i - b_i
    double mean_difference = 0.0;
    double sd_difference = 0.0; // sample SD
    double standard_error = 0.0;
    double t = 0.0;
    int df = 0;
    double p_value = 1.0; // two-sided
    double confidence = 0.95;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

/// Paired t-test on a - b. Zero spread with zero mean gives t = 0 and p = 1;
/// zero spread with a nonzero mean gives an infinite t and p = 0.
PairedTestResult paired_ttest(const std::vector<double>& a, const std::vector<double>& b,
                              double confidence = 0.95);

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0; // sample SD; 0 for a single value
};

/// Bit-identical for any permutation of `values`.
MeanSd mean_sd(std::vector<double> values);

} // namespace hscnn
