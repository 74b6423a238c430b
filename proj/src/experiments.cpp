#include "pdmplab/experiments.hpp"

#include <atomic>
#include <cmath>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "pdmplab/event_engine.hpp"
#include "pdmplab/rootfind.hpp"

namespace pdmplab {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

void validate_eps_grid(const std::vector<double>& grid) {
    require(!grid.empty(), "eps grid must be non-empty");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        require(grid[i] > 0.0, "eps values must be positive");
        if (i) require(grid[i] < grid[i - 1], "eps grid must be strictly decreasing");
    }
}

Vec resolve_start(const Potential& p, const Vec& given, double deltaU = 2.0) {
    if (given.size() > 0) {
        require(given.size() == p.dim(), "start point has wrong dimension");
        return given;
    }
    return start_point_at_energy(p, default_start_ray(p.dim()), deltaU);
}

double mean_over(const std::vector<double>& xs) { return xs.empty() ? kNaN : mean(xs); }

// one jump-chain step from x: kernel velocity draw, then the event flight
Vec jump_chain_step(SamplerKind kind, const Potential& p, const Vec& x, double eps,
                    const EnvelopeConfig& cfg, RngStream& rng) {
    const Vec v = (kind == SamplerKind::fec) ? fec_update_velocity(p, x, rng)
                                             : initial_velocity(SamplerKind::coordinate, p, x, rng);
    RaySpec ray{&p, x, v, eps};
    CostCounters scratch;
    FirstEventResult ev;
    if (p.quadratic()) {
        ev = first_event_exact_affine(ray, rng.uniform(), scratch);
    } else {
        ev = first_event_thinning(ray, cfg, cfg.hardHorizon, scratch, rng);
    }
    if (!ev.time) throw std::runtime_error("jump chain step found no event within the horizon");
    return x + *ev.time * v;
}

std::vector<std::pair<double, Vec>> make_refresh_schedule(double rho, double T, int dim,
                                                          RngStream& rng) {
    std::vector<std::pair<double, Vec>> sched;
    sched.emplace_back(0.0, rng.normal_vector(dim));
    double t = rng.exponential(rho);
    while (t < T) {
        sched.emplace_back(t, rng.normal_vector(dim));
        t += rng.exponential(rho);
    }
    return sched;
}

}  // namespace

void parallel_for(int n, int threads, const std::function<void(int)>& task) {
    if (n <= 0) return;
    const int workers = std::max(1, std::min(threads, n));
    if (workers == 1) {
        for (int i = 0; i < n; ++i) task(i);
        return;
    }
    std::atomic<int> next{0};
    std::mutex errMutex;
    std::exception_ptr firstError;
    auto body = [&]() {
        while (true) {
            const int i = next.fetch_add(1);
            if (i >= n) return;
            try {
                task(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(errMutex);
                if (!firstError) firstError = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& th : pool) th.join();
    if (firstError) std::rethrow_exception(firstError);
}

Vec default_start_ray(int dim) {
    require(dim >= 1, "dimension must be positive");
    Vec ray(dim);
    double c = 1.0;
    for (int i = 0; i < dim; ++i) {
        ray[i] = c;
        c *= 0.2;
    }
    return ray;
}

Vec start_point_at_energy(const Potential& p, const Vec& ray, double deltaU) {
    require(ray.size() == p.dim(), "start ray has wrong dimension");
    require(ray.norm() > 0.0, "start ray must be nonzero");
    require(deltaU > 0.0, "energy offset must be positive");
    const Vec xStar = p.minimiser();
    const double target = p.min_value() + deltaU;
    auto f = [&](double s) { return p.value(xStar + s * ray) - target; };
    double hi = 1.0;
    int guard = 0;
    while (f(hi) < 0.0) {
        hi *= 2.0;
        if (++guard > 200) throw std::runtime_error("start point bracket failed");
    }
    const double s = find_root(f, 0.0, hi, f(0.0), f(hi), 1e-13);
    return xStar + s * ray;
}

ScalingResult run_scaling_study(const ScalingSpec& spec) {
    require(static_cast<bool>(spec.potential), "scaling study needs a potential");
    const Potential& p = *spec.potential;
    validate_eps_grid(spec.epsGrid);
    require(spec.replicas >= 1, "replicas must be positive");
    require(spec.gamma > 0.0, "gamma must be positive");
    require(spec.horizon > 0.0, "horizon must be positive");
    if (spec.refreshMode != RefreshMode::none) {
        require(spec.sampler == SamplerKind::bps, "refresh policies apply to the bouncy sampler");
    }
    if (spec.refreshMode == RefreshMode::fixedRho) require(spec.rho > 0.0, "rho must be positive");
    if (spec.bandLocalized) {
        require(spec.refreshMode != RefreshMode::none,
                "band-localized counting needs a refresh policy");
    }
    const Vec start = resolve_start(p, spec.start);
    const BandSpec band{spec.gamma};
    require(p.value(start) > band.level(p), "start point must lie outside the level set");

    const int ne = static_cast<int>(spec.epsGrid.size());
    const int nr = spec.replicas;
    ScalingResult result;
    result.records.assign(static_cast<std::size_t>(ne) * nr, {});

    parallel_for(ne * nr, spec.threads, [&](int idx) {
        const int e = idx / nr;
        const int r = idx % nr;
        const double eps = spec.epsGrid[static_cast<std::size_t>(e)];
        RngStream rng = RngStream::derive(spec.masterSeed, static_cast<std::uint64_t>(e) + 1,
                                          static_cast<std::uint64_t>(r) + 1);
        RefreshPolicy rp = RefreshPolicy::none();
        if (spec.refreshMode == RefreshMode::fixedRho) rp = RefreshPolicy::poisson(spec.rho);
        if (spec.refreshMode == RefreshMode::tunedRho) {
            rp = RefreshPolicy::poisson(std::pow(eps, -0.25));
        }
        RunOptions opt;
        opt.horizon = spec.horizon;
        opt.stopOnLevelHit = true;
        opt.stopAtFirstRefresh = spec.bandLocalized;
        opt.envelope = spec.envelope;
        const RunResult res =
            run_until_hit(spec.sampler, p, band, start, std::nullopt, eps, rp, opt, rng);
        ReplicaRecord rec;
        rec.eps = eps;
        rec.replica = r;
        rec.bounces = res.bounces + res.switches;
        rec.refreshes = res.refreshes;
        rec.flips = res.flips;
        rec.derivEvals = res.counters.derivEvals;
        rec.hit = res.hit;
        rec.hitTime = res.hit ? res.hitTime : kNaN;
        result.records[static_cast<std::size_t>(idx)] = std::move(rec);
    });

    for (int e = 0; e < ne; ++e) {
        ScalingRow row;
        row.eps = spec.epsGrid[static_cast<std::size_t>(e)];
        row.replicas = nr;
        std::vector<double> jumps, bounces, refreshes, flips, derivs, hitTimes;
        for (int r = 0; r < nr; ++r) {
            const auto& rec = result.records[static_cast<std::size_t>(e) * nr + r];
            const bool counted = spec.bandLocalized ? true : rec.hit;
            if (rec.hit) {
                row.hits += 1;
                hitTimes.push_back(rec.hitTime);
            }
            if (!counted) continue;
            jumps.push_back(static_cast<double>(rec.total_jumps()));
            bounces.push_back(static_cast<double>(rec.bounces));
            refreshes.push_back(static_cast<double>(rec.refreshes));
            flips.push_back(static_cast<double>(rec.flips));
            derivs.push_back(static_cast<double>(rec.derivEvals));
        }
        row.hitFraction = static_cast<double>(row.hits) / nr;
        row.meanJumps = mean_over(jumps);
        row.seJumps = standard_error(jumps);
        row.meanBounces = mean_over(bounces);
        row.meanRefreshes = mean_over(refreshes);
        row.meanFlips = mean_over(flips);
        row.meanDerivEvals = mean_over(derivs);
        row.meanHitTime = mean_over(hitTimes);
        row.usedInFit =
            spec.bandLocalized ? row.meanJumps > 0.0 : (row.hitFraction >= 0.95 && row.hits >= 2);
        result.rows.push_back(std::move(row));
    }

    if (spec.replicas < 30) {
        result.fitNote = "slope fit skipped: fewer than 30 replicas";
        return result;
    }
    std::vector<double> xs, ys, ses;
    for (const auto& row : result.rows) {
        if (!row.usedInFit || !(row.meanJumps > 0.0)) continue;
        xs.push_back(row.eps);
        ys.push_back(row.meanJumps);
        ses.push_back(row.seJumps);
    }
    if (xs.size() < 2) {
        result.fitNote = "slope fit skipped: fewer than two eps levels with hit fraction >= 0.95";
        return result;
    }
    result.fit = fit_loglog_slope(xs, ys, ses);
    return result;
}

GapResult run_trajectory_gap(const GapSpec& spec) {
    require(static_cast<bool>(spec.potential), "trajectory gap needs a potential");
    const Potential& p = *spec.potential;
    require(spec.sampler == SamplerKind::bps || spec.sampler == SamplerKind::zigzag,
            "trajectory gap supports the bouncy and zig-zag samplers");
    validate_eps_grid(spec.epsGrid);
    require(spec.T > 0.0, "horizon must be positive");
    require(spec.gamma > 0.0, "gamma must be positive");
    require(spec.replicas >= 1, "replicas must be positive");
    if (spec.sampler == SamplerKind::bps) require(spec.rho > 0.0, "rho must be positive");
    const double stride = spec.stride > 0.0 ? spec.stride : spec.T / 1000.0;
    require(stride <= spec.T, "stride must not exceed the horizon");
    const Vec start = resolve_start(p, spec.start);
    const BandSpec band{spec.gamma};
    require(p.value(start) > band.level(p), "start point must lie outside the level set");
    const int n = p.dim();

    Vec v0 = spec.v0;
    if (spec.sampler == SamplerKind::zigzag) {
        if (v0.size() == 0) v0 = Vec::Ones(n);
        require(v0.size() == n, "v0 has wrong dimension");
    }

    FlowOptions fopt;
    fopt.tol = 1e-10;
    fopt.sampleStride = stride;

    // zig-zag limit flow is deterministic: one trajectory serves all replicas
    FlowTrajectory zzFlow;
    if (spec.sampler == SamplerKind::zigzag) {
        zzFlow = flow_zigzag_procedure(p, start, v0, spec.gamma, spec.T, fopt);
    }

    const int ne = static_cast<int>(spec.epsGrid.size());
    const int nr = spec.replicas;
    GapResult result;
    result.records.assign(static_cast<std::size_t>(ne) * nr, {});

    // schedules and BPS reference flows are shared across eps per replica
    std::vector<std::vector<std::pair<double, Vec>>> schedules(static_cast<std::size_t>(nr));
    std::vector<FlowTrajectory> bpsFlows(static_cast<std::size_t>(nr));
    if (spec.sampler == SamplerKind::bps) {
        parallel_for(nr, spec.threads, [&](int r) {
            RngStream schedRng =
                RngStream::derive(spec.masterSeed, 0, static_cast<std::uint64_t>(r) + 1);
            schedules[static_cast<std::size_t>(r)] =
                make_refresh_schedule(spec.rho, spec.T, n, schedRng);
            bpsFlows[static_cast<std::size_t>(r)] = flow_bps_with_refresh(
                p, start, schedules[static_cast<std::size_t>(r)], spec.T, spec.gamma, fopt);
        });
    }

    parallel_for(ne * nr, spec.threads, [&](int idx) {
        const int e = idx / nr;
        const int r = idx % nr;
        const double eps = spec.epsGrid[static_cast<std::size_t>(e)];
        RngStream rng = RngStream::derive(spec.masterSeed, static_cast<std::uint64_t>(e) + 1,
                                          static_cast<std::uint64_t>(r) + 1);
        RunOptions opt;
        opt.horizon = spec.T;
        opt.stride = stride;
        opt.stopOnLevelHit = true;
        opt.envelope = spec.envelope;

        RunResult run;
        const FlowTrajectory* flow = nullptr;
        if (spec.sampler == SamplerKind::bps) {
            const auto& sched = schedules[static_cast<std::size_t>(r)];
            run = run_until_hit(SamplerKind::bps, p, band, start, sched.front().second, eps,
                                RefreshPolicy::scheduled(sched), opt, rng);
            flow = &bpsFlows[static_cast<std::size_t>(r)];
        } else {
            run = run_until_hit(SamplerKind::zigzag, p, band, start, v0, eps,
                                RefreshPolicy::none(), opt, rng);
            flow = &zzFlow;
        }

        GapRecord rec;
        rec.eps = eps;
        rec.replica = r;
        double sup = 0.0;
        double lastT = 0.0;
        for (const auto& sample : run.samples) {
            const auto pos = flow_position_at(*flow, sample.t, 1e-9);
            if (!pos) break;
            sup = std::max(sup, (sample.x - *pos).norm());
            lastT = sample.t;
        }
        rec.supGap = sup;
        rec.comparedUpTo = lastT;
        result.records[static_cast<std::size_t>(idx)] = std::move(rec);
    });

    for (int e = 0; e < ne; ++e) {
        GapRow row;
        row.eps = spec.epsGrid[static_cast<std::size_t>(e)];
        row.replicas = nr;
        std::vector<double> gaps;
        for (int r = 0; r < nr; ++r) {
            const auto& rec = result.records[static_cast<std::size_t>(e) * nr + r];
            gaps.push_back(rec.supGap);
            row.maxGap = std::max(row.maxGap, rec.supGap);
        }
        row.medianGap = median(gaps);
        result.rows.push_back(std::move(row));
    }
    return result;
}

RefreshBalanceResult run_refresh_balance(const RefreshBalanceSpec& spec) {
    require(static_cast<bool>(spec.potential), "refresh balance needs a potential");
    const Potential& p = *spec.potential;
    require(!spec.rhoGrid.empty(), "rho grid must be non-empty");
    for (std::size_t i = 0; i < spec.rhoGrid.size(); ++i) {
        require(spec.rhoGrid[i] > 0.0, "rho values must be positive");
        if (i) require(spec.rhoGrid[i] > spec.rhoGrid[i - 1], "rho grid must increase strictly");
    }
    require(spec.eps > 0.0, "eps must be positive");
    require(spec.gamma > 0.0, "gamma must be positive");
    require(spec.replicas >= 1, "replicas must be positive");
    const Vec start = resolve_start(p, spec.start);
    const BandSpec band{spec.gamma};
    require(p.value(start) > band.level(p), "start point must lie outside the level set");

    const int nrho = static_cast<int>(spec.rhoGrid.size());
    const int nr = spec.replicas;
    struct Cell {
        double bounces = 0, refreshes = 0;
        bool hit = false;
    };
    std::vector<Cell> cells(static_cast<std::size_t>(nrho) * nr);

    parallel_for(nrho * nr, spec.threads, [&](int idx) {
        const int i = idx / nr;
        const int r = idx % nr;
        RngStream rng = RngStream::derive(spec.masterSeed, static_cast<std::uint64_t>(i) + 1,
                                          static_cast<std::uint64_t>(r) + 1);
        RunOptions opt;
        opt.horizon = spec.horizon;
        opt.envelope = spec.envelope;
        const RunResult res =
            run_until_hit(SamplerKind::bps, p, band, start, std::nullopt, spec.eps,
                          RefreshPolicy::poisson(spec.rhoGrid[static_cast<std::size_t>(i)]), opt,
                          rng);
        cells[static_cast<std::size_t>(idx)] = {static_cast<double>(res.bounces),
                                                static_cast<double>(res.refreshes), res.hit};
    });

    RefreshBalanceResult result;
    for (int i = 0; i < nrho; ++i) {
        RefreshBalanceRow row;
        row.rho = spec.rhoGrid[static_cast<std::size_t>(i)];
        std::vector<double> bounces, refreshes, totals;
        int hits = 0;
        for (int r = 0; r < nr; ++r) {
            const auto& cell = cells[static_cast<std::size_t>(i) * nr + r];
            if (!cell.hit) continue;
            ++hits;
            bounces.push_back(cell.bounces);
            refreshes.push_back(cell.refreshes);
            totals.push_back(cell.bounces + cell.refreshes);
        }
        row.hitFraction = static_cast<double>(hits) / nr;
        row.meanBounces = mean_over(bounces);
        row.meanRefreshes = mean_over(refreshes);
        row.meanTotal = mean_over(totals);
        row.seTotal = standard_error(totals);
        row.bounceRefreshRatio = (row.meanRefreshes > 0.0)
                                     ? row.meanBounces / row.meanRefreshes
                                     : std::numeric_limits<double>::infinity();
        result.rows.push_back(std::move(row));
    }

    double best = std::numeric_limits<double>::infinity();
    for (const auto& row : result.rows) {
        if (row.hitFraction >= 0.95 && row.meanTotal < best) {
            best = row.meanTotal;
            result.argminRho = row.rho;
            result.ratioAtArgmin = row.bounceRefreshRatio;
        }
    }
    if (!(best < std::numeric_limits<double>::infinity())) {
        throw std::runtime_error("refresh balance: no rho level reached the level set reliably");
    }
    return result;
}

DriftResult run_drift_diagnostic(const DriftSpec& spec) {
    require(static_cast<bool>(spec.potential), "drift diagnostic needs a potential");
    const Potential& p = *spec.potential;
    require(spec.sampler == SamplerKind::fec || spec.sampler == SamplerKind::coordinate,
            "drift diagnostic covers the forward event-chain and coordinate samplers");
    require(spec.eps > 0.0 && spec.eps < 1.0, "drift diagnostic requires 0 < eps < 1");
    require(spec.points >= 1, "need at least one band point");
    require(spec.samplesPerPoint >= 2, "need at least two samples per point");

    RngStream pointRng = RngStream::derive(spec.masterSeed, 0, 0);
    std::vector<Vec> xs;
    xs.reserve(static_cast<std::size_t>(spec.points));
    for (int i = 0; i < spec.points; ++i) xs.push_back(sample_band_point(p, spec.band, pointRng));

    DriftResult result;
    result.points.assign(static_cast<std::size_t>(spec.points), {});
    const double threshold = 0.5 * spec.band.gamma;

    parallel_for(spec.points, spec.threads, [&](int i) {
        RngStream rng = RngStream::derive(spec.masterSeed, static_cast<std::uint64_t>(i) + 1, 1);
        const Vec& x = xs[static_cast<std::size_t>(i)];
        const double u0 = p.value(x);
        std::vector<double> drifts;
        drifts.reserve(static_cast<std::size_t>(spec.samplesPerPoint));
        int tailCount = 0;
        for (int s = 0; s < spec.samplesPerPoint; ++s) {
            const Vec y = jump_chain_step(spec.sampler, p, x, spec.eps, spec.envelope, rng);
            const double dU = p.value(y) - u0;
            drifts.push_back(std::expm1(dU));
            if (dU > threshold) ++tailCount;
        }
        DriftPoint pt;
        pt.x = x;
        pt.meanDrift = mean(drifts);
        pt.seDrift = standard_error(drifts);
        pt.tailFreq = static_cast<double>(tailCount) / spec.samplesPerPoint;
        pt.tailSE = std::sqrt(std::max(0.0, pt.tailFreq * (1.0 - pt.tailFreq) /
                                                spec.samplesPerPoint));
        result.points[static_cast<std::size_t>(i)] = std::move(pt);
    });

    result.tailBound = 2.0 * std::exp(-threshold / spec.eps);
    result.maxDrift = -std::numeric_limits<double>::infinity();
    result.tailOk = true;
    for (const auto& pt : result.points) {
        result.maxDrift = std::max(result.maxDrift, pt.meanDrift);
        result.tailFreqMax = std::max(result.tailFreqMax, pt.tailFreq);
        if (pt.tailFreq > result.tailBound + 3.0 * pt.tailSE) result.tailOk = false;
    }
    result.betaHat = -result.maxDrift;
    return result;
}

SignFlipReport check_signflip_lemma(const PiecewisePath& path, double slack) {
    const std::size_t n = path.value.size();
    require(path.slope.size() == n && path.times.size() == n + 1 && n >= 1,
            "sign-flip path: times needs one more entry than value/slope");
    require(path.m > 0.0 && path.M >= path.m, "sign-flip path: need 0 < m <= M");
    require(slack >= 0.0, "sign-flip check: slack must be non-negative");
    for (std::size_t k = 0; k < n; ++k) {
        require(path.times[k + 1] > path.times[k], "sign-flip path: times must increase");
        require(path.slope[k] >= path.m * (1.0 - 1e-12) && path.slope[k] <= path.M * (1.0 + 1e-12),
                "sign-flip path: slope outside [m, M]");
    }

    SignFlipReport rep;
    const double T = path.times.back() - path.times.front();
    for (std::size_t k = 0; k < n; ++k) {
        const double d = path.times[k + 1] - path.times[k];
        const double a = path.value[k];
        const double s = path.slope[k];
        const double b = a + s * d;
        if (k + 1 < n) {
            const double nextVal = path.value[k + 1];
            const double scale = std::max(1.0, std::abs(b));
            if (std::abs(nextVal - b) <= 1e-9 * scale) {
                // continuous junction
            } else if (b > 0.0 && std::abs(nextVal + b) <= 1e-9 * scale) {
                rep.flipCount += 1;
            } else {
                throw std::invalid_argument(
                    "sign-flip path: segment junction is neither continuous nor a downward flip");
            }
        }
        rep.supAbs = std::max({rep.supAbs, std::abs(a), std::abs(b)});
        // exact quadrature of the linear piece (slope > 0 throughout)
        auto F = [&](double t) { return a * t + 0.5 * s * t * t; };
        if (a >= 0.0) {
            rep.intPos += F(d);
            rep.intAbs += F(d);
        } else if (b <= 0.0) {
            rep.intAbs += -F(d);
        } else {
            const double z = -a / s;
            rep.intPos += F(d) - F(z);
            rep.intAbs += F(d) - 2.0 * F(z);
        }
    }

    rep.supBound = 2.0 * path.M * rep.intPos;
    const double ratio = path.M / path.m;
    rep.lowerBound =
        (path.m * path.m / (2.0 * path.M)) / (1.0 + ratio) * T * T /
        (1.0 + static_cast<double>(rep.flipCount));
    rep.upperBound = (1.0 + ratio) * rep.intPos;
    const bool supOk = rep.supAbs * rep.supAbs <= rep.supBound * (1.0 + slack);
    const bool lowOk = rep.lowerBound * (1.0 - slack) <= rep.intAbs;
    const bool upOk = rep.intAbs <= rep.upperBound * (1.0 + slack);
    rep.holds = supOk && lowOk && upOk;
    return rep;
}

}  // namespace pdmplab
