#pragma once

#include <memory>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "pdmplab/rng.hpp"

namespace pdmplab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Evaluation at (or too near) a point where the object is undefined,
// e.g. the gradient direction at the minimiser.
class SingularityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SamplingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Convex target U with derivatives and a unique minimiser.
// Implementations must be pure and stateless: safe for concurrent use.
class Potential {
public:
    virtual ~Potential() = default;

    virtual Eigen::Index dim() const = 0;
    virtual double value(const Vec& x) const = 0;
    virtual Vec grad(const Vec& x) const = 0;
    virtual Mat hess(const Vec& x) const = 0;
    virtual Vec minimiser() const = 0;
    // true iff hess(x) is the same matrix for every x
    virtual bool quadratic() const = 0;

    double min_value() const { return value(minimiser()); }
};

using PotentialPtr = std::shared_ptr<const Potential>;

// U(x) = x' P x / 2 with P symmetric positive definite.
class GaussianPotential final : public Potential {
public:
    explicit GaussianPotential(Mat precision);

    Eigen::Index dim() const override { return precision_.rows(); }
    double value(const Vec& x) const override { return 0.5 * x.dot(precision_ * x); }
    Vec grad(const Vec& x) const override { return precision_ * x; }
    Mat hess(const Vec&) const override { return precision_; }
    Vec minimiser() const override { return Vec::Zero(precision_.rows()); }
    bool quadratic() const override { return true; }

    const Mat& precision() const { return precision_; }

private:
    Mat precision_;
};

// U(x) = (x' P x / 2)^(betaTail/2) with betaTail > 1.
// Subquadratic growth for betaTail < 2, superquadratic for betaTail > 2;
// C^1 everywhere, smooth away from the minimiser.
class PowerExponentialPotential final : public Potential {
public:
    PowerExponentialPotential(Mat precision, double betaTail);

    Eigen::Index dim() const override { return precision_.rows(); }
    double value(const Vec& x) const override;
    Vec grad(const Vec& x) const override;
    Mat hess(const Vec& x) const override;
    Vec minimiser() const override { return Vec::Zero(precision_.rows()); }
    bool quadratic() const override { return betaTail_ == 2.0; }

    double beta_tail() const { return betaTail_; }

private:
    Mat precision_;
    double betaTail_;
};

// Returns the potential with U_eps(x) = U(x)/eps; same minimiser, same dim.
// Nested scalings are flattened so composition is exact.
PotentialPtr scaled_potential(PotentialPtr p, double eps);

// Energy geometry around the minimiser: the target level set
// L = {U <= U(x*) + gamma} and the band B = {gamma <= U - U(x*) <= 1/gamma}.
struct BandSpec {
    double gamma;

    explicit BandSpec(double g) : gamma(g) {
        if (!(g > 0.0)) throw std::domain_error("BandSpec: gamma must be > 0");
    }

    double level(const Potential& p) const { return p.min_value() + gamma; }
    double upper(const Potential& p) const { return p.min_value() + 1.0 / gamma; }
};

// Inclusive membership: U(x) <= U(x*) + gamma.
bool in_level_set(const BandSpec& b, const Potential& p, const Vec& x);
bool in_band(const BandSpec& b, const Potential& p, const Vec& x);

// One rejection-sampled point with U(x*)+gamma <= U(x) <= U(x*)+1/gamma.
// Throws SamplingError if 1e6 consecutive proposals all miss the band.
Vec sample_band_point(const Potential& p, const BandSpec& b, RngStream& rng);

struct BandBounds {
    double etaLo = 0.0;    // min |grad U| over sampled band points
    double etaHi = 0.0;    // max |grad U|
    double kappaLo = 0.0;  // min Hessian eigenvalue
    double kappaHi = 0.0;  // max Hessian eigenvalue
};

// Monte Carlo bounds over the band; with a fixed stream the estimates from a
// larger sample extend those from a smaller one, so bounds only tighten.
BandBounds estimate_band_bounds(const Potential& p, const BandSpec& b,
                                long samples, RngStream& rng);

}  // namespace pdmplab
