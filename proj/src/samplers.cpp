#include "pdmplab/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pdmplab/rootfind.hpp"

namespace pdmplab {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vec unit_gradient(const Potential& p, const Vec& x) {
    Vec g = p.grad(x);
    const double gn = g.norm();
    if (!(gn > 0.0)) {
        throw SingularityError("gradient vanishes; reflection/update direction undefined");
    }
    return g / gn;
}

// Next reflection time for a rate t -> (v' grad U(x + t v))_+ / eps, within
// [0, cap]. Exact inversion on quadratic targets, thinning otherwise. Only
// work counters are touched; the caller books the jump if it survives.
std::optional<std::pair<double, double>> plan_bounce(const Potential& p, const Vec& x,
                                                     const Vec& v, double eps, double cap,
                                                     const EnvelopeConfig& cfg, CostCounters& c,
                                                     RngStream& rng) {
    if (!(cap > 0.0)) return std::nullopt;
    if (p.quadratic()) {
        const double a = v.dot(p.grad(x));
        const double b = v.dot(p.hess(x) * v);
        const double mass = eps * rng.exponential(1.0);
        c.candidates += 1;
        c.derivEvals += 1;
        const auto t = affine_event_time(a, b, mass);
        if (t && *t <= cap) return std::make_pair(*t, std::max(0.0, a + b * *t));
        return std::nullopt;
    }
    RateProbe probe{[&](double t) { return v.dot(p.grad(x + t * v)); },
                    [&](double t) {
                        const Vec y = x + t * v;
                        return v.dot(p.hess(y) * v);
                    },
                    true};
    auto ev = thin_event_work(probe, eps, cfg, v.norm(), cap, c, rng);
    if (!ev.time) return std::nullopt;
    return std::make_pair(*ev.time, ev.rateAtEvent);
}

// First flip across the per-coordinate clocks i -> (v_i dU/dx_i)_+ / eps;
// ties resolve to the lowest index. The running best time caps later clocks.
std::optional<std::pair<double, int>> plan_flip(const Potential& p, const Vec& x, const Vec& v,
                                                double eps, double cap, const EnvelopeConfig& cfg,
                                                CostCounters& c, RngStream& rng) {
    const int n = static_cast<int>(x.size());
    double bestT = kInf;
    int bestI = -1;
    if (p.quadratic()) {
        const Vec g = p.grad(x);
        const Vec hv = p.hess(x) * v;
        c.candidates += 1;
        c.derivEvals += 1;
        for (int i = 0; i < n; ++i) {
            const double a = v[i] * g[i];
            const double b = v[i] * hv[i];
            const double mass = eps * rng.exponential(1.0);
            const auto t = affine_event_time(a, b, mass);
            if (t && *t <= cap && *t < bestT) {
                bestT = *t;
                bestI = i;
            }
        }
    } else {
        for (int i = 0; i < n; ++i) {
            RateProbe probe{[&, i](double t) { return v[i] * p.grad(x + t * v)[i]; },
                            [&, i](double t) {
                                const Vec y = x + t * v;
                                return v[i] * (p.hess(y) * v)[i];
                            },
                            false};
            const double horizon = std::min(cap, bestT);
            if (!(horizon > 0.0)) break;
            auto ev = thin_event_work(probe, eps, cfg, v.norm(), horizon, c, rng);
            if (ev.time && *ev.time < bestT) {
                bestT = *ev.time;
                bestI = i;
            }
        }
    }
    if (bestI < 0) return std::nullopt;
    return std::make_pair(bestT, bestI);
}

void apply_fec_update(const Potential& p, PdmpState& s, RngStream& rng) {
    s.v = fec_update_velocity(p, s.x, rng);
}

int draw_coordinate_axis(const Vec& g, RngStream& rng) {
    const double total = g.cwiseAbs().sum();
    if (!(total > 0.0)) {
        throw SingularityError("all partial derivatives vanish; axis selection undefined");
    }
    const double u = rng.uniform() * total;
    double acc = 0.0;
    for (int i = 0; i < g.size(); ++i) {
        acc += std::abs(g[i]);
        if (u <= acc) return i;
    }
    return static_cast<int>(g.size()) - 1;
}

void apply_coordinate_switch(const Potential& p, PdmpState& s, RngStream& rng, int& axisOut) {
    const Vec g = p.grad(s.x);
    const int m = draw_coordinate_axis(g, rng);
    s.v.setZero();
    s.v[m] = (g[m] > 0.0) ? -1.0 : 1.0;
    axisOut = m;
}

// First s in [0, smax] with U(x + s v) = level, given U(x) > level. Along a
// ray U is convex, so the sublevel segment is an interval; we bracket its
// left edge between 0 and the 1-D minimiser of U.
std::optional<double> level_crossing(const Potential& p, const Vec& x, const Vec& v, double lam0,
                                     double smax, double level) {
    if (lam0 >= 0.0 || !(smax > 0.0)) return std::nullopt;
    double smin = smax;
    const double lamEnd = v.dot(p.grad(x + smax * v));
    if (lamEnd > 0.0) {
        if (p.quadratic()) {
            const double b = v.dot(p.hess(x) * v);
            smin = std::clamp(-lam0 / b, 0.0, smax);
        } else {
            smin = find_root([&](double s) { return v.dot(p.grad(x + s * v)); }, 0.0, smax, lam0,
                             lamEnd, 1e-12 * smax);
        }
    }
    if (p.value(x + smin * v) > level) return std::nullopt;
    auto f = [&](double s) { return p.value(x + s * v) - level; };
    const double f0 = f(0.0);
    // rounding can leave a flight start a hair below the level; that is a hit
    // at s = 0, not a bracketing failure
    if (f0 <= 0.0) return 0.0;
    return find_root(f, 0.0, smin, f0, f(smin), 1e-10);
}

// First s in [0, smax] with U(x + s v) = upper, given U(x) <= upper. Convexity
// puts the segment maximum at an endpoint, so only the far end needs checking.
std::optional<double> upper_crossing(const Potential& p, const Vec& x, const Vec& v, double smax,
                                     double upper) {
    if (!(smax > 0.0)) return std::nullopt;
    auto f = [&](double s) { return p.value(x + s * v) - upper; };
    const double fEnd = f(smax);
    if (fEnd < 0.0) return std::nullopt;
    const double f0 = f(0.0);
    if (f0 >= 0.0) return 0.0;
    return find_root(f, 0.0, smax, f0, fEnd, 1e-10);
}

// integral of |a + b s| over [0, send]
double abs_affine_integral(double a, double b, double send) {
    auto F = [&](double s) { return a * s + 0.5 * b * s * s; };
    if (b != 0.0) {
        const double z = -a / b;
        if (z > 0.0 && z < send) return std::abs(F(send) - 2.0 * F(z));
    }
    return std::abs(F(send));
}

double abs_rate_over_flight(const Potential& p, const Vec& x, const Vec& v, double send) {
    if (!(send > 0.0)) return 0.0;
    if (p.quadratic()) {
        return abs_affine_integral(v.dot(p.grad(x)), v.dot(p.hess(x) * v), send);
    }
    // composite Simpson; |v' grad U| is piecewise smooth with at most one kink
    const int m = 128;
    const double h = send / m;
    double acc = 0.0;
    auto f = [&](double s) { return std::abs(v.dot(p.grad(x + s * v))); };
    for (int k = 0; k < m; ++k) {
        const double s0 = k * h;
        acc += h / 6.0 * (f(s0) + 4.0 * f(s0 + 0.5 * h) + f(s0 + h));
    }
    return acc;
}

}  // namespace

Vec reflect(const Potential& p, const Vec& x, const Vec& v) {
    const Vec n = unit_gradient(p, x);
    return v - 2.0 * n * n.dot(v);
}

Vec fec_update_velocity(const Potential& p, const Vec& x, RngStream& rng) {
    const int n = static_cast<int>(x.size());
    const Vec nrm = unit_gradient(p, x);
    const double xi = rng.rayleigh();
    Vec w = rng.normal_vector(n);
    return -xi * nrm + (w - nrm * nrm.dot(w));
}

Vec initial_velocity(SamplerKind kind, const Potential& p, const Vec& x, RngStream& rng) {
    const int n = p.dim();
    switch (kind) {
        case SamplerKind::bps:
        case SamplerKind::fec:
            return rng.normal_vector(n);
        case SamplerKind::zigzag: {
            Vec v(n);
            for (int i = 0; i < n; ++i) v[i] = rng.sign();
            return v;
        }
        case SamplerKind::coordinate: {
            const Vec g = p.grad(x);
            const int m = draw_coordinate_axis(g, rng);
            Vec v = Vec::Zero(n);
            v[m] = (g[m] > 0.0) ? -1.0 : 1.0;
            return v;
        }
    }
    throw std::logic_error("unknown sampler kind");
}

EventRecord bps_step(PdmpState& s, const Potential& p, double rho, const EnvelopeConfig& cfg,
                     CostCounters& c, RngStream& rng) {
    const double dtR = (rho > 0.0) ? rng.exponential(rho) : kInf;
    const double cap = std::min(dtR, cfg.hardHorizon);
    const auto plan = plan_bounce(p, s.x, s.v, s.eps, cap, cfg, c, rng);
    if (!plan && !(dtR < cfg.hardHorizon)) {
        throw std::runtime_error("bps_step: no event within the hard horizon");
    }
    const double dt = plan ? plan->first : dtR;
    s.x += dt * s.v;
    s.t += dt;
    EventRecord rec;
    rec.time = s.t;
    rec.vPre = s.v;
    if (plan) {
        s.v = reflect(p, s.x, s.v);
        rec.kind = EventKind::bounce;
        c.acceptedJumps += 1;
    } else {
        s.v = rng.normal_vector(static_cast<int>(s.x.size()));
        rec.kind = EventKind::refresh;
        c.refreshJumps += 1;
    }
    rec.vPost = s.v;
    return rec;
}

EventRecord fec_step(PdmpState& s, const Potential& p, const EnvelopeConfig& cfg, CostCounters& c,
                     RngStream& rng) {
    const auto plan = plan_bounce(p, s.x, s.v, s.eps, cfg.hardHorizon, cfg, c, rng);
    if (!plan) throw std::runtime_error("fec_step: no event within the hard horizon");
    s.x += plan->first * s.v;
    s.t += plan->first;
    EventRecord rec;
    rec.time = s.t;
    rec.kind = EventKind::fecUpdate;
    rec.vPre = s.v;
    apply_fec_update(p, s, rng);
    c.acceptedJumps += 1;
    rec.vPost = s.v;
    return rec;
}

EventRecord zigzag_step(PdmpState& s, const Potential& p, const EnvelopeConfig& cfg,
                        CostCounters& c, RngStream& rng) {
    const auto plan = plan_flip(p, s.x, s.v, s.eps, cfg.hardHorizon, cfg, c, rng);
    if (!plan) throw std::runtime_error("zigzag_step: no event within the hard horizon");
    s.x += plan->first * s.v;
    s.t += plan->first;
    EventRecord rec;
    rec.time = s.t;
    rec.kind = EventKind::zzFlip;
    rec.coordinate = plan->second;
    rec.vPre = s.v;
    s.v[plan->second] = -s.v[plan->second];
    c.acceptedJumps += 1;
    rec.vPost = s.v;
    return rec;
}

EventRecord coordinate_step(PdmpState& s, const Potential& p, const EnvelopeConfig& cfg,
                            CostCounters& c, RngStream& rng) {
    const auto plan = plan_bounce(p, s.x, s.v, s.eps, cfg.hardHorizon, cfg, c, rng);
    if (!plan) throw std::runtime_error("coordinate_step: no event within the hard horizon");
    s.x += plan->first * s.v;
    s.t += plan->first;
    EventRecord rec;
    rec.time = s.t;
    rec.kind = EventKind::csSwitch;
    rec.vPre = s.v;
    apply_coordinate_switch(p, s, rng, rec.coordinate);
    c.acceptedJumps += 1;
    rec.vPost = s.v;
    return rec;
}

RunResult run_until_hit(SamplerKind kind, const Potential& p, const BandSpec& band, const Vec& x0,
                        const std::optional<Vec>& v0, double eps, const RefreshPolicy& refresh,
                        const RunOptions& opt, RngStream& rng) {
    const int n = p.dim();
    if (x0.size() != n) throw std::invalid_argument("run_until_hit: x0 has wrong dimension");
    const double level = band.level(p);
    const double upper = band.upper(p);
    if (p.value(x0) <= level) {
        throw std::invalid_argument("run_until_hit: start point already inside the level set");
    }
    if (kind != SamplerKind::bps && refresh.kind != RefreshPolicy::Kind::none) {
        throw std::invalid_argument("run_until_hit: refresh applies to the bouncy sampler only");
    }
    for (std::size_t i = 1; i < refresh.schedule.size(); ++i) {
        if (!(refresh.schedule[i].first > refresh.schedule[i - 1].first)) {
            throw std::invalid_argument("run_until_hit: refresh schedule not strictly increasing");
        }
    }

    PdmpState s;
    s.x = x0;
    s.t = 0.0;
    s.eps = eps;
    s.kind = kind;
    if (v0) {
        if (v0->size() != n) throw std::invalid_argument("run_until_hit: v0 has wrong dimension");
        s.v = *v0;
        if (kind == SamplerKind::zigzag) {
            for (int i = 0; i < n; ++i) {
                if (std::abs(std::abs((*v0)[i]) - 1.0) > 0.0) {
                    throw std::invalid_argument("run_until_hit: zig-zag velocity must be +-1");
                }
            }
        }
        if (kind == SamplerKind::coordinate) {
            int nz = 0;
            for (int i = 0; i < n; ++i) {
                if ((*v0)[i] != 0.0) {
                    ++nz;
                    if (std::abs((*v0)[i]) != 1.0) {
                        throw std::invalid_argument(
                            "run_until_hit: coordinate velocity must be a signed axis");
                    }
                }
            }
            if (nz != 1) {
                throw std::invalid_argument(
                    "run_until_hit: coordinate velocity must be a signed axis");
            }
        }
    } else {
        s.v = initial_velocity(kind, p, x0, rng);
    }

    RunResult res;
    res.flipPerCoord.assign(static_cast<std::size_t>(n), 0);
    std::size_t schedIdx = 0;

    auto record_event = [&](EventKind k, int coord, const Vec& vPre) {
        if (!opt.recordEvents || res.events.size() >= opt.maxRecordedEvents) return;
        EventRecord rec;
        rec.time = s.t;
        rec.kind = k;
        rec.coordinate = coord;
        rec.vPre = vPre;
        rec.vPost = s.v;
        res.events.push_back(std::move(rec));
    };

    // scheduled refresh at t = 0 replaces the start velocity
    while (refresh.kind == RefreshPolicy::Kind::schedule && schedIdx < refresh.schedule.size() &&
           refresh.schedule[schedIdx].first <= 0.0) {
        const Vec vPre = s.v;
        s.v = refresh.schedule[schedIdx].second;
        ++schedIdx;
        res.refreshes += 1;
        res.counters.refreshJumps += 1;
        record_event(EventKind::refresh, -1, vPre);
    }

    double nextSample = 0.0;
    auto emit_samples = [&](double t0, const Vec& xFlight, const Vec& vFlight, double dt) {
        if (!(opt.stride > 0.0)) return;
        while (nextSample <= t0 + dt + 1e-15 * std::max(1.0, std::abs(t0))) {
            const double sOff = nextSample - t0;
            if (sOff < -1e-12) {
                nextSample += opt.stride;
                continue;
            }
            res.samples.push_back({nextSample, xFlight + std::max(0.0, sOff) * vFlight, vFlight});
            nextSample += opt.stride;
        }
    };

    while (true) {
        const double remaining = opt.horizon - s.t;
        if (!(remaining > 0.0)) break;

        double dtR = kInf;
        if (refresh.kind == RefreshPolicy::Kind::poisson && refresh.rho > 0.0) {
            dtR = rng.exponential(refresh.rho);
        } else if (refresh.kind == RefreshPolicy::Kind::schedule &&
                   schedIdx < refresh.schedule.size()) {
            dtR = refresh.schedule[schedIdx].first - s.t;
        }
        const double cap = std::min(remaining, dtR);

        std::optional<double> planDt;
        int planCoord = -1;
        EventKind planKind = EventKind::bounce;
        switch (kind) {
            case SamplerKind::bps: {
                auto pl = plan_bounce(p, s.x, s.v, eps, cap, opt.envelope, res.counters, rng);
                if (pl) planDt = pl->first;
                planKind = EventKind::bounce;
                break;
            }
            case SamplerKind::fec: {
                auto pl = plan_bounce(p, s.x, s.v, eps, cap, opt.envelope, res.counters, rng);
                if (pl) planDt = pl->first;
                planKind = EventKind::fecUpdate;
                break;
            }
            case SamplerKind::coordinate: {
                auto pl = plan_bounce(p, s.x, s.v, eps, cap, opt.envelope, res.counters, rng);
                if (pl) planDt = pl->first;
                planKind = EventKind::csSwitch;
                break;
            }
            case SamplerKind::zigzag: {
                auto pl = plan_flip(p, s.x, s.v, eps, cap, opt.envelope, res.counters, rng);
                if (pl) {
                    planDt = pl->first;
                    planCoord = pl->second;
                }
                planKind = EventKind::zzFlip;
                break;
            }
        }

        const double dtFlight = planDt ? *planDt : cap;

        // within-flight boundary crossings
        std::optional<double> sHit;
        std::optional<double> sExit;
        if (opt.stopOnLevelHit || opt.stopOnBandExit) {
            const double lam0 = s.v.dot(p.grad(s.x));
            if (opt.stopOnLevelHit) sHit = level_crossing(p, s.x, s.v, lam0, dtFlight, level);
            if (opt.stopOnBandExit && in_band(band, p, s.x)) {
                sExit = upper_crossing(p, s.x, s.v, sHit ? *sHit : dtFlight, upper);
            }
        }
        if (sExit && (!sHit || *sExit <= *sHit)) {
            emit_samples(s.t, s.x, s.v, *sExit);
            if (opt.trackAbsRateIntegral) {
                res.absRateIntegral += abs_rate_over_flight(p, s.x, s.v, *sExit);
            }
            s.x += *sExit * s.v;
            s.t += *sExit;
            res.bandExited = true;
            res.bandExitTime = s.t;
            break;
        }
        if (sHit) {
            emit_samples(s.t, s.x, s.v, *sHit);
            if (opt.trackAbsRateIntegral) {
                res.absRateIntegral += abs_rate_over_flight(p, s.x, s.v, *sHit);
            }
            s.x += *sHit * s.v;
            s.t += *sHit;
            res.hit = true;
            res.hitTime = s.t;
            break;
        }

        emit_samples(s.t, s.x, s.v, dtFlight);
        if (opt.trackAbsRateIntegral) {
            res.absRateIntegral += abs_rate_over_flight(p, s.x, s.v, dtFlight);
        }
        s.x += dtFlight * s.v;
        s.t += dtFlight;

        if (planDt) {
            const Vec vPre = s.v;
            switch (kind) {
                case SamplerKind::bps:
                    s.v = reflect(p, s.x, s.v);
                    res.bounces += 1;
                    break;
                case SamplerKind::fec:
                    apply_fec_update(p, s, rng);
                    res.bounces += 1;
                    break;
                case SamplerKind::zigzag:
                    s.v[planCoord] = -s.v[planCoord];
                    res.flips += 1;
                    res.flipPerCoord[static_cast<std::size_t>(planCoord)] += 1;
                    break;
                case SamplerKind::coordinate:
                    apply_coordinate_switch(p, s, rng, planCoord);
                    res.switches += 1;
                    break;
            }
            res.counters.acceptedJumps += 1;
            record_event(planKind, planCoord, vPre);
        } else if (dtR < remaining) {
            const Vec vPre = s.v;
            if (refresh.kind == RefreshPolicy::Kind::poisson) {
                s.v = rng.normal_vector(n);
            } else {
                s.v = refresh.schedule[schedIdx].second;
                ++schedIdx;
            }
            res.refreshes += 1;
            res.counters.refreshJumps += 1;
            record_event(EventKind::refresh, -1, vPre);
            if (opt.stopAtFirstRefresh) break;
        } else {
            break;  // horizon reached
        }
    }

    res.state = s;
    return res;
}

}  // namespace pdmplab
