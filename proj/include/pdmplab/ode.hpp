#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <utility>

#include "pdmplab/potentials.hpp"

namespace pdmplab {

struct Dp54Options {
    double relTol = 1e-10;
    double absTol = 1e-12;
    double initialStep = 1e-3;
    double maxStep = std::numeric_limits<double>::infinity();
};

// Dormand-Prince 5(4) embedded pair with FSAL and step-size control. The
// caller drives the loop one accepted step at a time; `dense` interpolates
// inside the last accepted step (cubic Hermite), which is exact whenever the
// right-hand side is constant along the step.
class Dp54Stepper {
  public:
    using Rhs = std::function<Vec(double, const Vec&)>;

    Dp54Stepper(Rhs rhs, double t0, Vec y0, Dp54Options opt = {})
        : rhs_(std::move(rhs)), opt_(opt), t_(t0), y_(std::move(y0)) {
        f_ = rhs_(t_, y_);
        h_ = opt_.initialStep;
        prevT_ = t_;
        prevY_ = y_;
        prevF_ = f_;
    }

    double t() const { return t_; }
    const Vec& y() const { return y_; }
    double prevT() const { return prevT_; }
    const Vec& prevY() const { return prevY_; }
    std::uint64_t steps() const { return steps_; }
    std::uint64_t rejects() const { return rejects_; }

    // One accepted step, clamped so t never passes tMax. Returns false when
    // already at (or numerically beyond) tMax.
    bool step(double tMax) {
        const double scale = std::max(1.0, std::abs(t_));
        if (tMax - t_ <= 1e-15 * scale) return false;
        double h = std::min({h_, opt_.maxStep, tMax - t_});
        Vec k[7];
        k[0] = f_;
        for (int attempt = 0; attempt < 60; ++attempt) {
            Vec ynew;
            for (int i = 1; i < 7; ++i) {
                Vec yi = y_;
                for (int j = 0; j < i; ++j) {
                    if (kA[i][j] != 0.0) yi += (h * kA[i][j]) * k[j];
                }
                k[i] = rhs_(t_ + kC[i] * h, yi);
                if (i == 6) ynew = yi;  // row 7 of A equals the 5th-order weights
            }
            double err = 0.0;
            for (int c = 0; c < y_.size(); ++c) {
                double e = 0.0;
                for (int i = 0; i < 7; ++i) e += kE[i] * k[i][c];
                e *= h;
                const double sc =
                    opt_.absTol + opt_.relTol * std::max(std::abs(y_[c]), std::abs(ynew[c]));
                err += (e / sc) * (e / sc);
            }
            err = std::sqrt(err / std::max<int>(1, static_cast<int>(y_.size())));
            const double factor =
                std::clamp(0.9 * std::pow(std::max(err, 1e-16), -0.2), 0.2, 5.0);
            if (err <= 1.0) {
                prevT_ = t_;
                prevY_ = y_;
                prevF_ = f_;
                stepH_ = h;
                const bool clamped = (t_ + h >= tMax - 1e-15 * scale);
                t_ = clamped ? tMax : t_ + h;
                y_ = std::move(ynew);
                f_ = k[6];  // FSAL
                h_ = std::min(h * factor, opt_.maxStep);
                steps_ += 1;
                return true;
            }
            rejects_ += 1;
            h *= factor;
            // underflow only counts when error control drove h down; a step
            // clamped to a tiny remaining span is taken as-is above
            if (h < 1e-13 * scale) throw std::runtime_error("dp54: step size underflow");
        }
        throw std::runtime_error("dp54: too many rejected step attempts");
    }

    // Hermite interpolation at s in [prevT, t].
    Vec dense(double s) const {
        const double h = stepH_ > 0.0 ? stepH_ : (t_ - prevT_);
        if (!(h > 0.0)) return y_;
        const double th = std::clamp((s - prevT_) / h, 0.0, 1.0);
        const double u = 1.0 - th;
        // cubic Hermite in terms of endpoint values and slopes
        return (u * u * (1.0 + 2.0 * th)) * prevY_ + (th * th * (3.0 - 2.0 * th)) * y_ +
               (h * th * u) * (u * prevF_ - th * f_);
    }

    // Integrate exactly to tTarget, optionally observing accepted endpoints.
    void advance_to(double tTarget, const std::function<void(double, const Vec&)>& observe = {}) {
        while (step(tTarget)) {
            if (observe) observe(t_, y_);
        }
    }

  private:
    static constexpr double kC[7] = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
    static constexpr double kA[7][6] = {
        {},
        {1.0 / 5},
        {3.0 / 40, 9.0 / 40},
        {44.0 / 45, -56.0 / 15, 32.0 / 9},
        {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
        {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
        {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
    };
    // 5th-order minus 4th-order weights
    static constexpr double kE[7] = {35.0 / 384 - 5179.0 / 57600,
                                     0.0,
                                     500.0 / 1113 - 7571.0 / 16695,
                                     125.0 / 192 - 393.0 / 640,
                                     -2187.0 / 6784 + 92097.0 / 339200,
                                     11.0 / 84 - 187.0 / 2100,
                                     -1.0 / 40};

    Rhs rhs_;
    Dp54Options opt_;
    double t_;
    Vec y_;
    Vec f_;
    double h_;
    double prevT_;
    Vec prevY_;
    Vec prevF_;
    double stepH_ = 0.0;
    std::uint64_t steps_ = 0;
    std::uint64_t rejects_ = 0;
};

}  // namespace pdmplab
