#include "pdmplab/potentials.hpp"

#include <cmath>

#include "pdmplab/rootfind.hpp"

namespace pdmplab {

namespace {

void require_spd(const Mat& m, const char* what) {
    if (m.rows() != m.cols() || m.rows() == 0)
        throw std::domain_error(std::string(what) + ": matrix must be square and nonempty");
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
        throw std::domain_error(std::string(what) + ": matrix must be symmetric");
    Eigen::LLT<Mat> llt(m);
    if (llt.info() != Eigen::Success)
        throw std::domain_error(std::string(what) + ": matrix must be positive definite");
}

}  // namespace

GaussianPotential::GaussianPotential(Mat precision) : precision_(std::move(precision)) {
    require_spd(precision_, "GaussianPotential");
}

PowerExponentialPotential::PowerExponentialPotential(Mat precision, double betaTail)
    : precision_(std::move(precision)), betaTail_(betaTail) {
    require_spd(precision_, "PowerExponentialPotential");
    if (!(betaTail_ > 1.0))
        throw std::domain_error("PowerExponentialPotential: betaTail must be > 1");
}

double PowerExponentialPotential::value(const Vec& x) const {
    const double q = 0.5 * x.dot(precision_ * x);
    return q == 0.0 ? 0.0 : std::pow(q, 0.5 * betaTail_);
}

Vec PowerExponentialPotential::grad(const Vec& x) const {
    const Vec px = precision_ * x;
    const double q = 0.5 * x.dot(px);
    // continuous extension: |grad| ~ q^{(betaTail-1)/2} -> 0 as x -> x*
    if (q == 0.0) return Vec::Zero(x.size());
    return (0.5 * betaTail_ * std::pow(q, 0.5 * betaTail_ - 1.0)) * px;
}

Mat PowerExponentialPotential::hess(const Vec& x) const {
    if (betaTail_ == 2.0) return precision_;
    if (betaTail_ < 2.0 && x.norm() < 1e-10)
        throw SingularityError("PowerExponentialPotential::hess: Hessian blows up at the minimiser");
    const Vec px = precision_ * x;
    const double q = 0.5 * x.dot(px);
    if (q == 0.0) return Mat::Zero(x.size(), x.size());
    const double h = 0.5 * betaTail_;
    return h * std::pow(q, h - 1.0) * precision_ +
           h * (h - 1.0) * std::pow(q, h - 2.0) * (px * px.transpose());
}

namespace {

class ScaledPotential final : public Potential {
public:
    ScaledPotential(PotentialPtr base, double invEps) : base_(std::move(base)), invEps_(invEps) {}

    Eigen::Index dim() const override { return base_->dim(); }
    double value(const Vec& x) const override { return invEps_ * base_->value(x); }
    Vec grad(const Vec& x) const override { return invEps_ * base_->grad(x); }
    Mat hess(const Vec& x) const override { return invEps_ * base_->hess(x); }
    Vec minimiser() const override { return base_->minimiser(); }
    bool quadratic() const override { return base_->quadratic(); }

    const PotentialPtr& base() const { return base_; }
    double inv_eps() const { return invEps_; }

private:
    PotentialPtr base_;
    double invEps_;
};

}  // namespace

PotentialPtr scaled_potential(PotentialPtr p, double eps) {
    if (!(eps > 0.0)) throw std::domain_error("scaled_potential: eps must be > 0");
    if (!p) throw std::invalid_argument("scaled_potential: null potential");
    if (auto s = std::dynamic_pointer_cast<const ScaledPotential>(p))
        return std::make_shared<ScaledPotential>(s->base(), s->inv_eps() / eps);
    return std::make_shared<ScaledPotential>(std::move(p), 1.0 / eps);
}

bool in_level_set(const BandSpec& b, const Potential& p, const Vec& x) {
    return p.value(x) <= b.level(p);
}

bool in_band(const BandSpec& b, const Potential& p, const Vec& x) {
    const double u = p.value(x);
    return u >= b.level(p) && u <= b.upper(p);
}

namespace {

// Radius at which U(x* + r u) reaches the band's upper level along a ray;
// U is strictly increasing in r away from the minimiser, so the bracket
// grows geometrically and bisection finishes the job.
double outer_radius(const Potential& p, const Vec& u, double target) {
    const Vec x0 = p.minimiser();
    double hi = 1.0;
    for (int it = 0; it < 400 && p.value(x0 + hi * u) < target; ++it) hi *= 2.0;
    auto f = [&](double r) { return p.value(x0 + r * u) - target; };
    return find_root(f, 0.0, hi, 1e-9 * hi);
}

}  // namespace

Vec sample_band_point(const Potential& p, const BandSpec& b, RngStream& rng) {
    const Eigen::Index n = p.dim();
    const Vec x0 = p.minimiser();
    // proposal scale: typical outer-band radius probed along a few directions
    double r = 0.0;
    for (int k = 0; k < 4; ++k) {
        Vec u = rng.normal_vector(n);
        u.normalize();
        r = std::max(r, outer_radius(p, u, b.upper(p)));
    }
    const double sigma = r / std::sqrt(static_cast<double>(n));
    for (long trial = 0; trial < 1000000; ++trial) {
        const Vec x = x0 + sigma * rng.normal_vector(n);
        if (in_band(b, p, x)) return x;
    }
    throw SamplingError("sample_band_point: no band point in 1e6 proposals");
}

BandBounds estimate_band_bounds(const Potential& p, const BandSpec& b,
                                long samples, RngStream& rng) {
    if (samples <= 0) throw SamplingError("estimate_band_bounds: samples must be positive");
    BandBounds out;
    bool first = true;
    Eigen::SelfAdjointEigenSolver<Mat> eig;
    for (long i = 0; i < samples; ++i) {
        const Vec x = sample_band_point(p, b, rng);
        const double g = p.grad(x).norm();
        eig.compute(p.hess(x), Eigen::EigenvaluesOnly);
        const double lo = eig.eigenvalues().minCoeff();
        const double hi = eig.eigenvalues().maxCoeff();
        if (first) {
            out = {g, g, lo, hi};
            first = false;
        } else {
            out.etaLo = std::min(out.etaLo, g);
            out.etaHi = std::max(out.etaHi, g);
            out.kappaLo = std::min(out.kappaLo, lo);
            out.kappaHi = std::max(out.kappaHi, hi);
        }
    }
    return out;
}

}  // namespace pdmplab
