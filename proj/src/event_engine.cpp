#include "pdmplab/event_engine.hpp"

#include <algorithm>
#include <cmath>

namespace pdmplab {

double exact_affine_event_time(double a, double b, double mass) {
    if (!(b > 0.0)) throw ConvexityViolation("exact_affine_event_time: slope must be > 0");
    if (!(mass >= 0.0)) throw std::domain_error("exact_affine_event_time: negative mass");
    if (a >= 0.0) {
        // stable root of a t + b t^2 / 2 = mass
        return 2.0 * mass / (a + std::sqrt(a * a + 2.0 * b * mass));
    }
    // rate is negative until -a/b; all mass accumulates past that point
    return -a / b + std::sqrt(2.0 * mass / b);
}

std::optional<double> affine_event_time(double a, double b, double mass) {
    if (mass == 0.0) return 0.0;
    if (b > 0.0) return exact_affine_event_time(a, b, mass);
    if (b == 0.0) {
        if (a <= 0.0) return std::nullopt;
        return mass / a;
    }
    // decreasing rate: finite total positive mass a^2 / (2|b|)
    if (a <= 0.0) return std::nullopt;
    const double total = -0.5 * a * a / b;
    if (mass >= total) return std::nullopt;
    return 2.0 * mass / (a + std::sqrt(a * a + 2.0 * b * mass));
}

FirstEventResult exact_affine_event_work(const RaySpec& ray, double u, CostCounters& c) {
    if (!(u > 0.0 && u < 1.0))
        throw std::domain_error("first_event_exact_affine: u must lie in (0,1)");
    if (!ray.p->quadratic())
        throw std::domain_error("first_event_exact_affine: requires a constant Hessian");
    const double a = ray.rate(0.0);
    const double b = ray.rate_slope(0.0);
    if (!(b > 0.0)) throw ConvexityViolation("first_event_exact_affine: v' hess v must be > 0");
    // one candidate, one derivative evaluation, always accepted
    c.candidates += 1;
    c.derivEvals += 1;
    const double t = exact_affine_event_time(a, b, ray.eps * (-std::log(u)));
    return {t, a + b * t};
}

FirstEventResult first_event_exact_affine(const RaySpec& ray, double u, CostCounters& c) {
    FirstEventResult r = exact_affine_event_work(ray, u, c);
    c.acceptedJumps += 1;
    return r;
}

FirstEventResult thin_event_work(const RateProbe& probe, double eps, const EnvelopeConfig& cfg,
                                 double vnorm, double horizon, CostCounters& c, RngStream& rng) {
    if (!(eps > 0.0)) throw std::domain_error("thin_event_work: eps must be > 0");
    const double end = std::min(horizon, cfg.hardHorizon);
    if (!(end > 0.0)) return {std::nullopt, 0.0};
    double delta = cfg.window;
    if (delta <= 0.0) delta = 0.1 * std::sqrt(eps) / std::max(vnorm, 1e-300);

    double tk = 0.0;
    while (tk < end) {
        const double wlen = std::min(delta, end - tk);
        c.windows += 1;
        c.derivEvals += cfg.windowCost;

        const double a0 = probe.rate(tk);
        const double s0 = probe.slope(tk);
        if (probe.convex && !(s0 > 0.0))
            throw ConvexityViolation("thin_event_work: rate slope must be > 0 on a convex ray");
        double aEnv = a0 + cfg.margin;
        double bEnv = (1.0 + cfg.curvatureSlack) * (probe.convex ? s0 : std::abs(s0));
        if (cfg.strategy == EnvelopeStrategy::constant) {
            aEnv = std::max(0.0, aEnv + bEnv * wlen);
            bEnv = 0.0;
        }

        // candidate times paced by the envelope; leftover exponential mass at
        // a window boundary is discarded (memorylessness keeps this exact)
        double s = 0.0;
        while (true) {
            const double mass = eps * rng.exponential();
            const auto ds = affine_event_time(aEnv + bEnv * s, bEnv, mass);
            if (!ds || s + *ds > wlen) break;
            s += *ds;
            const double tc = tk + s;
            c.candidates += 1;
            c.derivEvals += cfg.candidateCost;
            const double lam = probe.rate(tc);
            const double lamEnv = std::max(0.0, aEnv + bEnv * s);
            if (lam > lamEnv * (1.0 + 1e-9) + 1e-12)
                throw EnvelopeViolation("thin_event_work: envelope fell below the rate");
            if (rng.uniform() * lamEnv <= std::max(0.0, lam)) return {tc, lam};
        }
        tk += wlen;
    }
    return {std::nullopt, 0.0};
}

namespace {

RateProbe ray_probe(const RaySpec& ray) {
    return RateProbe{
        [&ray](double t) { return ray.rate(t); },
        [&ray](double t) { return ray.rate_slope(t); },
        true,
    };
}

}  // namespace

FirstEventResult first_event_thinning(const RaySpec& ray, const EnvelopeConfig& cfg,
                                      double horizon, CostCounters& c, RngStream& rng) {
    FirstEventResult r = thin_event_work(ray_probe(ray), ray.eps, cfg, ray.v.norm(), horizon, c, rng);
    if (r.time) c.acceptedJumps += 1;
    return r;
}

CostSandwich cost_sandwich_report(const std::vector<CostCounters>& runs) {
    if (runs.empty()) throw UndefinedRatio("cost_sandwich_report: zero runs");
    CostSandwich out;
    bool any = false;
    for (const auto& r : runs) {
        if (r.acceptedJumps == 0) continue;
        const double ratio =
            static_cast<double>(r.derivEvals) / static_cast<double>(r.acceptedJumps);
        if (!any) {
            out.ratioLow = out.ratioHigh = ratio;
            any = true;
        } else {
            out.ratioLow = std::min(out.ratioLow, ratio);
            out.ratioHigh = std::max(out.ratioHigh, ratio);
        }
    }
    if (!any) throw UndefinedRatio("cost_sandwich_report: no run produced an accepted jump");
    return out;
}

}  // namespace pdmplab
