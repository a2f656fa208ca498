#include "hscnn/stats.hpp"
#include "hscnn/common.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace hscnn {

double regularized_incomplete_beta(double a, double b, double x)
{
    if (!(a > 0.0 && b > 0.0 && x >= 0.0 && x <= 1.0))
        throw NumericError("incomplete beta arguments out of range");
    return boost::math::ibeta(a, b, x);
}

double student_t_cdf(double t, double df)
{
    if (!(df > 0.0))
        throw NumericError("degrees of freedom must be positive");
    if (std::isinf(t))
        return t > 0 ? 1.0 : 0.0;
    // P(T <= -|t|) = I_{df/(df+t^2)}(df/2, 1/2) / 2
    const double tail = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
    return t > 0.0 ? 1.0 - tail : tail;
}

double student_t_quantile(double p, double df)
{
    if (!(p > 0.0 && p < 1.0))
        throw NumericError("quantile probability must lie in (0, 1)");
    if (!(df > 0.0))
        throw NumericError("degrees of freedom must be positive");
    return boost::math::quantile(boost::math::students_t_distribution<double>(df), p);
}

MeanSd mean_sd(std::vector<double> values)
{
    if (values.empty())
        throw DataError("mean of an empty list");
    // summing in sorted order makes the result independent of input order
    std::sort(values.begin(), values.end());
    MeanSd r;
    if (values.front() == values.back())
        return {values.front(), 0.0};
    for (double v : values)
        r.mean += v;
    r.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values)
            ss += (v - r.mean) * (v - r.mean);
        r.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return r;
}

PairedTestResult paired_ttest(const std::vector<double>& a, const std::vector<double>& b, double confidence)
{
    if (a.size() != b.size())
        throw DataError("paired t-test needs equal lengths, got " + std::to_string(a.size()) + " and " +
                        std::to_string(b.size()));
    if (a.size() < 2)
        throw DataError("paired t-test needs at least two pairs");
    if (!(confidence > 0.0 && confidence < 1.0))
        throw ConfigError("confidence level must lie in (0, 1)");

    PairedTestResult r;
    r.confidence = confidence;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!std::isfinite(a[i]) || !std::isfinite(b[i]))
            throw NumericError("paired t-test input is not finite");
        r.differences.push_back(a[i] - b[i]);
    }
    const MeanSd d = mean_sd(r.differences);
    const auto n = static_cast<double>(r.differences.size());
    r.mean_difference = d.mean;
    r.sd_difference = d.sd;
    r.standard_error = d.sd / std::sqrt(n);
    r.df = static_cast<int>(r.differences.size()) - 1;

    if (r.standard_error == 0.0) {
        r.t = d.mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), d.mean);
        r.p_value = d.mean == 0.0 ? 1.0 : 0.0;
        r.ci_low = r.ci_high = d.mean;
        return r;
    }
    r.t = d.mean / r.standard_error;
    r.p_value = 2.0 * student_t_cdf(-std::abs(r.t), r.df);
    const double q = student_t_quantile(0.5 + confidence / 2.0, r.df);
    r.ci_low = d.mean - q * r.standard_error;
    r.ci_high = d.mean + q * r.standard_error;
    return r;
}

} // namespace hscnn
