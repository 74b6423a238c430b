#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace pdmplab {

inline double mean(const std::vector<double>& xs) {
    if (xs.empty()) throw std::invalid_argument("mean of an empty sample");
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

// standard error of the mean (sample standard deviation / sqrt(n))
inline double standard_error(const std::vector<double>& xs) {
    const std::size_t n = xs.size();
    if (n < 2) return 0.0;
    const double m = mean(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
}

inline double median(std::vector<double> xs) {
    if (xs.empty()) throw std::invalid_argument("median of an empty sample");
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return (n % 2 == 1) ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slopeSE = 0.0;
    double ciLo = 0.0;  // 95% confidence bounds
    double ciHi = 0.0;
    int pointsUsed = 0;
};

// Weighted least squares for log(y) vs log(x). Weights are 1/selog^2 with
// selog = se/y, the delta-method standard error of log(y). A zero se falls
// back to a small floor so deterministic points keep a finite weight.
inline SlopeFit fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y,
                                 const std::vector<double>& se) {
    const std::size_t n = x.size();
    if (y.size() != n || se.size() != n) {
        throw std::invalid_argument("slope fit: mismatched input lengths");
    }
    if (n < 2) throw std::invalid_argument("slope fit: need at least two points");
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) {
            throw std::invalid_argument("slope fit: inputs must be positive for logs");
        }
        const double lx = std::log(x[i]);
        const double ly = std::log(y[i]);
        const double selog = std::max(se[i] / y[i], 1e-9);
        const double w = 1.0 / (selog * selog);
        sw += w;
        sx += w * lx;
        sy += w * ly;
        sxx += w * lx * lx;
        sxy += w * lx * ly;
    }
    const double det = sw * sxx - sx * sx;
    if (!(det > 0.0)) throw std::invalid_argument("slope fit: degenerate abscissae");
    SlopeFit fit;
    fit.slope = (sw * sxy - sx * sy) / det;
    fit.intercept = (sxx * sy - sx * sxy) / det;
    fit.slopeSE = std::sqrt(sw / det);
    const double z = 1.959963984540054;
    fit.ciLo = fit.slope - z * fit.slopeSE;
    fit.ciHi = fit.slope + z * fit.slopeSE;
    fit.pointsUsed = static_cast<int>(n);
    return fit;
}

}  // namespace pdmplab
