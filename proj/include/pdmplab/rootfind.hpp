#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>

namespace pdmplab {

// Safeguarded bisection/secant root finder on [lo, hi].
// Requires f(lo) and f(hi) with opposite (or zero) signs; returns a point
// within tol of the root. The secant step is accepted only when it stays
// inside the current bracket, otherwise the step falls back to bisection.
template <class F>
double find_root(F&& f, double lo, double hi, double flo, double fhi, double tol) {
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if ((flo > 0.0) == (fhi > 0.0))
        throw std::invalid_argument("find_root: endpoints do not bracket a root");
    for (int it = 0; it < 200 && (hi - lo) > tol; ++it) {
        double mid = 0.5 * (lo + hi);
        const double denom = fhi - flo;
        // secant on even iterations only: with wildly asymmetric endpoint
        // values plain false position keeps the stale endpoint and stalls,
        // so every other step is forced bisection (width halves per pair)
        if (denom != 0.0 && (it & 1) == 0) {
            const double sec = lo - flo * (hi - lo) / denom;
            // keep the secant proposal strictly interior
            if (sec > lo + 0.25 * tol && sec < hi - 0.25 * tol) mid = sec;
        }
        const double fm = f(mid);
        if (fm == 0.0) return mid;
        if ((fm > 0.0) == (flo > 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
    }
    return 0.5 * (lo + hi);
}

template <class F>
double find_root(F&& f, double lo, double hi, double tol) {
    return find_root(f, lo, hi, f(lo), f(hi), tol);
}

}  // namespace pdmplab
