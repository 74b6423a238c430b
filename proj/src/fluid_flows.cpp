#include "pdmplab/fluid_flows.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pdmplab/ode.hpp"
#include "pdmplab/rootfind.hpp"

namespace pdmplab {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSingularBall = 1e-8;

void push_point(FlowTrajectory& traj, const FlowOptions& opt, double t, Vec x, Vec v,
                FlowMarker marker = FlowMarker::none, int coord = -1) {
    if (traj.points.size() >= opt.maxPoints) {
        throw std::runtime_error("flow trajectory exceeded the point budget");
    }
    traj.points.push_back({t, std::move(x), std::move(v), marker, coord});
}

// Emits forced grid samples with positions linear in t (valid on straight
// pieces; curved pieces pass a callable instead).
struct GridSampler {
    double stride;
    double next = 0.0;
    explicit GridSampler(double s) : stride(s) {}

    template <class PosFn, class VelFn>
    void emit(FlowTrajectory& traj, const FlowOptions& opt, double tEnd, PosFn&& pos,
              VelFn&& vel) {
        if (!(stride > 0.0)) return;
        while (next <= tEnd + 1e-12 * std::max(1.0, std::abs(tEnd))) {
            push_point(traj, opt, next, pos(next), vel(next));
            next += stride;
        }
    }
};

// smallest positive root of U(x + t v) = level along a convex ray, given
// U(x) > level; quadratic targets in closed form, otherwise bracketed
std::optional<double> ray_level_crossing(const Potential& p, const Vec& x, const Vec& v,
                                         double tMax, double level) {
    if (!(tMax > 0.0)) return std::nullopt;
    const double a = v.dot(p.grad(x));
    if (a >= 0.0) return std::nullopt;
    if (p.quadratic()) {
        const double b = v.dot(p.hess(x) * v);
        const double c0 = p.value(x) - level;
        const double disc = a * a - 2.0 * b * c0;
        if (disc < 0.0) return std::nullopt;
        const double t = 2.0 * c0 / (-a + std::sqrt(disc));
        if (t >= 0.0 && t <= tMax) return t;
        return std::nullopt;
    }
    double smin = tMax;
    const double lamEnd = v.dot(p.grad(x + tMax * v));
    if (lamEnd > 0.0) {
        smin = find_root([&](double s) { return v.dot(p.grad(x + s * v)); }, 0.0, tMax, a, lamEnd,
                         1e-12 * tMax);
    }
    auto f = [&](double s) { return p.value(x + s * v) - level; };
    const double fmin = f(smin);
    if (fmin > 0.0) return std::nullopt;
    return find_root(f, 0.0, smin, f(0.0), fmin, 1e-12);
}

// shared steepest-descent integrator for the high-refresh and RWM limits
FlowTrajectory descend_flow(const Potential& p, const Vec& x0, double speed, double gamma,
                            const FlowOptions& opt) {
    if (!(speed > 0.0)) throw std::invalid_argument("descent flow: speed must be positive");
    const double level = p.min_value() + gamma;
    if (p.value(x0) <= level) {
        throw std::invalid_argument("descent flow: start point already inside the level set");
    }
    auto rhs = [&p, speed](double, const Vec& x) -> Vec {
        Vec g = p.grad(x);
        const double gn = g.norm();
        if (!(gn > 0.0)) throw SingularityError("descent flow reached a critical point");
        return (-speed / gn) * g;
    };
    Dp54Options iopt;
    iopt.relTol = opt.tol;
    iopt.absTol = opt.tol * 1e-2;
    iopt.initialStep = 1e-3;
    Dp54Stepper stepper(rhs, 0.0, x0, iopt);

    FlowTrajectory traj;
    GridSampler grid(opt.sampleStride);
    push_point(traj, opt, 0.0, x0, rhs(0.0, x0));
    grid.next = grid.stride;  // t = 0 already recorded

    const double horizon = 1e7;
    while (stepper.t() < horizon) {
        double tNext = (opt.sampleStride > 0.0) ? std::min(grid.next, horizon) : horizon;
        if (tNext <= stepper.t()) {
            grid.next += grid.stride;
            continue;
        }
        if (!stepper.step(tNext)) {
            if (opt.sampleStride > 0.0 && tNext < horizon) {
                grid.next += grid.stride;
                continue;
            }
            break;
        }
        const double u1 = p.value(stepper.y());
        if (u1 <= level) {
            auto f = [&](double s) { return p.value(stepper.dense(s)) - level; };
            const double tStar = find_root(f, stepper.prevT(), stepper.t(), f(stepper.prevT()),
                                           f(stepper.t()), 1e-12);
            Vec xStar = stepper.dense(tStar);
            push_point(traj, opt, tStar, xStar, rhs(tStar, xStar), FlowMarker::levelSetHit);
            traj.terminal = FlowTerminal::levelSetHit;
            traj.hitTime = tStar;
            traj.pathLength = speed * tStar;
            return traj;
        }
        grid.emit(
            traj, opt, stepper.t(), [&](double s) { return stepper.dense(s); },
            [&](double s) { return rhs(s, stepper.dense(s)); });
        push_point(traj, opt, stepper.t(), stepper.y(), rhs(stepper.t(), stepper.y()));
    }
    traj.terminal = FlowTerminal::horizon;
    traj.pathLength = speed * stepper.t();
    return traj;
}

struct SnapOutcome {
    double tEnd;
    Vec x;
    Vec v;
    bool singular = false;
};

// tangential transport from (x0, v0) at absolute time t0 up to tEnd, pushing
// accepted steps and grid samples into traj
SnapOutcome run_snapping(const Potential& p, const Vec& x0, const Vec& v0, double t0, double tEnd,
                         FlowTrajectory& traj, GridSampler& grid, const FlowOptions& opt,
                         double& pathLength) {
    const int n = p.dim();
    const Vec xStar = p.minimiser();
    auto rhs = [&p, n](double, const Vec& y) -> Vec {
        Vec x = y.head(n);
        Vec v = y.tail(n);
        Vec g = p.grad(x);
        const double g2 = g.squaredNorm();
        if (!(g2 > 0.0)) throw SingularityError("snapping flow reached a critical point");
        const double coef = v.dot(p.hess(x) * v) / g2;
        Vec dy(2 * n);
        dy.head(n) = v;
        dy.tail(n) = -coef * g;
        return dy;
    };
    Vec y0(2 * n);
    y0.head(n) = x0;
    y0.tail(n) = v0;
    Dp54Options iopt;
    iopt.relTol = opt.tol;
    iopt.absTol = opt.tol * 1e-2;
    Dp54Stepper stepper(rhs, t0, y0, iopt);
    const double speed = v0.norm();  // |v| is conserved when v0 is tangent

    while (stepper.t() < tEnd - 1e-15 * std::max(1.0, std::abs(tEnd))) {
        double tNext = (grid.stride > 0.0) ? std::min(grid.next, tEnd) : tEnd;
        if (tNext <= stepper.t()) {
            grid.next += grid.stride;
            continue;
        }
        if (!stepper.step(tNext)) {
            // grid point within rounding of the current time: emit on the
            // next pass, do not abandon the segment
            if (grid.stride > 0.0 && tNext < tEnd) {
                grid.next += grid.stride;
                continue;
            }
            break;
        }
        grid.emit(
            traj, opt, stepper.t(), [&](double s) { return Vec(stepper.dense(s).head(n)); },
            [&](double s) { return Vec(stepper.dense(s).tail(n)); });
        push_point(traj, opt, stepper.t(), stepper.y().head(n), stepper.y().tail(n));
        if ((stepper.y().head(n) - xStar).norm() <= kSingularBall) {
            pathLength += speed * (stepper.t() - t0);
            return {stepper.t(), stepper.y().head(n), stepper.y().tail(n), true};
        }
    }
    pathLength += speed * (tEnd - t0);
    return {tEnd, stepper.y().head(n), stepper.y().tail(n), false};
}

double sgn_or(double x, double fallback) {
    if (x > 0.0) return 1.0;
    if (x < 0.0) return -1.0;
    return fallback;
}

}  // namespace

std::optional<double> tangency_event_locator(const Potential& p, const Vec& x, const Vec& v,
                                             double tMax, double tol) {
    auto lam = [&](double t) { return v.dot(p.grad(x + t * v)); };
    const double l0 = lam(0.0);
    if (l0 == 0.0) return 0.0;
    if (l0 > 0.0) return std::nullopt;  // increasing under convexity: no zero ahead
    if (!(tMax > 0.0)) return std::nullopt;
    if (p.quadratic()) {
        const double b = v.dot(p.hess(x) * v);
        if (!(b > 0.0)) return std::nullopt;
        const double t = -l0 / b;
        return (t <= tMax) ? std::optional<double>(t) : std::nullopt;
    }
    const double lEnd = lam(tMax);
    if (lEnd < 0.0) return std::nullopt;
    return find_root(lam, 0.0, tMax, l0, lEnd, tol);
}

FlowTrajectory flow_bps_snapping(const Potential& p, const Vec& x0, const Vec& v0, double T,
                                 const FlowOptions& opt) {
    const Vec g0 = p.grad(x0);
    if (std::abs(v0.dot(g0)) > 1e-8 * g0.norm() * v0.norm()) {
        throw std::invalid_argument("snapping flow requires a tangent start velocity");
    }
    if ((x0 - p.minimiser()).norm() <= kSingularBall) {
        throw std::invalid_argument("snapping flow start too close to the minimiser");
    }
    FlowTrajectory traj;
    GridSampler grid(opt.sampleStride);
    push_point(traj, opt, 0.0, x0, v0);
    grid.next = grid.stride;
    double pathLength = 0.0;
    const auto out = run_snapping(p, x0, v0, 0.0, T, traj, grid, opt, pathLength);
    traj.pathLength = pathLength;
    traj.terminal = out.singular ? FlowTerminal::singularity : FlowTerminal::horizon;
    return traj;
}

FlowTrajectory flow_bps_with_refresh(const Potential& p, const Vec& x0,
                                     const std::vector<std::pair<double, Vec>>& schedule, double T,
                                     double gamma, const FlowOptions& opt) {
    if (schedule.empty() || schedule.front().first != 0.0) {
        throw std::invalid_argument("refresh flow: schedule must start at time 0");
    }
    for (std::size_t i = 1; i < schedule.size(); ++i) {
        if (!(schedule[i].first > schedule[i - 1].first)) {
            throw std::invalid_argument("refresh flow: schedule times must increase strictly");
        }
    }
    const double level = p.min_value() + gamma;
    if (p.value(x0) <= level) {
        throw std::invalid_argument("refresh flow: start point already inside the level set");
    }

    FlowTrajectory traj;
    GridSampler grid(opt.sampleStride);
    Vec x = x0;
    double t = 0.0;
    double pathLength = 0.0;

    for (std::size_t n = 0; n < schedule.size(); ++n) {
        // refresh: fold the drawn velocity into the downhill half-space
        Vec g = p.grad(x);
        const double gn = g.norm();
        if (!(gn > 0.0)) {
            traj.terminal = FlowTerminal::singularity;
            traj.pathLength = pathLength;
            return traj;
        }
        const Vec nrm = g / gn;
        const Vec& w = schedule[n].second;
        Vec v = w - 2.0 * std::max(0.0, w.dot(nrm)) * nrm;
        push_point(traj, opt, t, x, v, FlowMarker::refresh);
        if (grid.stride > 0.0 && t == 0.0) grid.next = grid.stride;

        const double tNextRefresh =
            (n + 1 < schedule.size()) ? std::min(schedule[n + 1].first, T) : T;

        // straight flight until tangency
        const double span = tNextRefresh - t;
        const auto tTan = tangency_event_locator(p, x, v, span);
        const double flight = tTan ? *tTan : span;
        const auto cross = ray_level_crossing(p, x, v, flight, level);
        const double straightEnd = cross ? *cross : flight;
        {
            const Vec xs = x;
            const double ts = t;
            grid.emit(
                traj, opt, ts + straightEnd, [&](double s) { return Vec(xs + (s - ts) * v); },
                [&](double) { return v; });
        }
        x += straightEnd * v;
        t += straightEnd;
        pathLength += v.norm() * straightEnd;
        if (cross) {
            push_point(traj, opt, t, x, v, FlowMarker::levelSetHit);
            traj.terminal = FlowTerminal::levelSetHit;
            traj.hitTime = t;
            traj.pathLength = pathLength;
            return traj;
        }
        if (tTan && t < tNextRefresh) {
            push_point(traj, opt, t, x, v, FlowMarker::tangencyHit);
            const auto out = run_snapping(p, x, v, t, tNextRefresh, traj, grid, opt, pathLength);
            x = out.x;
            t = out.tEnd;
            if (out.singular) {
                traj.terminal = FlowTerminal::singularity;
                traj.pathLength = pathLength;
                return traj;
            }
            // v re-drawn at the next refresh; out.v only matters at horizon
            if (t >= T) {
                push_point(traj, opt, t, x, out.v);
                break;
            }
        } else if (t >= T) {
            push_point(traj, opt, t, x, v);
            break;
        }
    }
    traj.terminal = FlowTerminal::horizon;
    traj.pathLength = pathLength;
    return traj;
}

FlowTrajectory flow_bps_high_refresh(const Potential& p, const Vec& x0, double gamma,
                                     const FlowOptions& opt) {
    return descend_flow(p, x0, 1.0 / std::sqrt(2.0 * M_PI), gamma, opt);
}

FlowTrajectory flow_rwm_baseline(const Potential& p, const Vec& x0, double sigma, double gamma,
                                 const FlowOptions& opt) {
    if (!(sigma > 0.0)) throw std::invalid_argument("rwm flow: sigma must be positive");
    return descend_flow(p, x0, sigma / std::sqrt(2.0 * M_PI), gamma, opt);
}

ZzFlowState zz_assemble_state(const Potential& p, const Vec& x, const Vec& vPrev,
                              const std::vector<bool>& prevK) {
    const int n = p.dim();
    const Vec g = p.grad(x);
    const double tauIn = 1e-8 * (1.0 + g.norm());
    const double tauStay = 10.0 * tauIn;

    ZzFlowState st;
    st.x = x;
    st.v = Vec::Zero(n);
    st.inK.assign(static_cast<std::size_t>(n), false);
    std::vector<int> kIdx;
    for (int i = 0; i < n; ++i) {
        const bool wasK = !prevK.empty() && prevK[static_cast<std::size_t>(i)];
        const bool nowK = std::abs(g[i]) <= (wasK ? tauStay : tauIn);
        if (nowK) {
            st.inK[static_cast<std::size_t>(i)] = true;
            kIdx.push_back(i);
        } else {
            st.v[i] = -sgn_or(g[i], vPrev.size() == n ? sgn_or(vPrev[i], 1.0) : 1.0);
        }
    }

    // QP over K with the departure cascade: clipped coordinates become free
    // with their clipped sign and the remaining block is re-solved
    while (!kIdx.empty()) {
        const int m = static_cast<int>(kIdx.size());
        const Mat H = p.hess(x);
        Mat Hkk(m, m);
        Vec c = Vec::Zero(m);
        for (int a = 0; a < m; ++a) {
            for (int b = 0; b < m; ++b) Hkk(a, b) = H(kIdx[a], kIdx[b]);
            for (int j = 0; j < n; ++j) {
                if (!st.inK[static_cast<std::size_t>(j)]) c[a] += H(kIdx[a], j) * st.v[j];
            }
        }
        const BoxQpSolution sol = solve_boxqp({Hkk, c});
        std::vector<int> staying;
        bool departed = false;
        for (int a = 0; a < m; ++a) {
            if (sol.labels[a] == BoxLabel::snapping) {
                st.v[kIdx[a]] = sol.v[a];
                staying.push_back(kIdx[a]);
            } else {
                st.v[kIdx[a]] = (sol.labels[a] == BoxLabel::clippedPlus) ? 1.0 : -1.0;
                st.inK[static_cast<std::size_t>(kIdx[a])] = false;
                departed = true;
            }
        }
        if (!departed) break;
        kIdx = std::move(staying);
    }
    return st;
}

FlowTrajectory flow_zigzag_procedure(const Potential& p, const Vec& x0, const Vec& v0,
                                     double gamma, double T, const FlowOptions& opt) {
    const int n = p.dim();
    if (v0.size() != n) throw std::invalid_argument("zig-zag flow: v0 has wrong dimension");
    for (int i = 0; i < n; ++i) {
        if (std::abs(std::abs(v0[i]) - 1.0) > 1e-12) {
            throw std::invalid_argument("zig-zag flow: v0 components must be +-1");
        }
    }
    const double level = p.min_value() + gamma;
    if (p.value(x0) <= level) {
        throw std::invalid_argument("zig-zag flow: start point already inside the level set");
    }
    if (!p.quadratic()) {
        throw std::invalid_argument(
            "zig-zag limit flow is implemented for quadratic targets (constant Hessian)");
    }

    FlowTrajectory traj;
    GridSampler grid(opt.sampleStride);
    const Mat H = p.hess(x0);

    ZzFlowState st = zz_assemble_state(p, x0, v0, {});
    double t = 0.0;
    double pathLength = 0.0;
    push_point(traj, opt, t, st.x, st.v, FlowMarker::zzDirectionRecompute);
    grid.next = grid.stride;

    while (t < T) {
        if (st.v.lpNorm<Eigen::Infinity>() < 1e-14) {
            traj.terminal = FlowTerminal::stationary;
            traj.pathLength = pathLength;
            return traj;
        }
        const Vec g = p.grad(st.x);
        const Vec hv = H * st.v;
        const double armTol = 1e-12 * (1.0 + g.norm());

        double tEvent = kInf;
        int jEvent = -1;
        for (int j = 0; j < n; ++j) {
            if (st.inK[static_cast<std::size_t>(j)]) continue;
            if (std::abs(g[j]) <= armTol) continue;
            if (g[j] * hv[j] >= 0.0) continue;  // moving away from the hyperplane
            const double tj = -g[j] / hv[j];
            if (tj > 1e-12 && tj < tEvent) {
                tEvent = tj;
                jEvent = j;
            }
        }
        const auto tLevel = ray_level_crossing(p, st.x, st.v, std::min(tEvent, T - t), level);
        const bool boundaryEvent = !tLevel && jEvent >= 0 && tEvent <= T - t;
        const double tStep = tLevel ? *tLevel : std::min(tEvent, T - t);

        {
            const Vec xs = st.x;
            const Vec vs = st.v;
            const double ts = t;
            grid.emit(
                traj, opt, ts + tStep, [&](double s) { return Vec(xs + (s - ts) * vs); },
                [&](double) { return vs; });
        }
        st.x += tStep * st.v;
        t += tStep;
        pathLength += st.v.norm() * tStep;

        if (tLevel) {
            push_point(traj, opt, t, st.x, st.v, FlowMarker::levelSetHit);
            traj.terminal = FlowTerminal::levelSetHit;
            traj.hitTime = t;
            traj.pathLength = pathLength;
            return traj;
        }
        if (!boundaryEvent) break;  // horizon reached
        push_point(traj, opt, t, st.x, st.v, FlowMarker::zzBoundaryHit, jEvent);
        st = zz_assemble_state(p, st.x, st.v, st.inK);
        push_point(traj, opt, t, st.x, st.v, FlowMarker::zzDirectionRecompute);
    }
    push_point(traj, opt, t, st.x, st.v);
    traj.terminal = FlowTerminal::horizon;
    traj.pathLength = pathLength;
    return traj;
}

std::optional<Vec> flow_position_at(const FlowTrajectory& traj, double t, double tol) {
    const auto& pts = traj.points;
    if (pts.empty()) return std::nullopt;
    auto it = std::lower_bound(pts.begin(), pts.end(), t - tol,
                               [](const FlowPoint& a, double val) { return a.t < val; });
    if (it == pts.end()) return std::nullopt;
    if (std::abs(it->t - t) <= tol) return it->x;
    return std::nullopt;
}

}  // namespace pdmplab
