#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "pdmplab/event_engine.hpp"
#include "pdmplab/potentials.hpp"
#include "pdmplab/rng.hpp"

namespace pdmplab {

enum class SamplerKind { bps, fec, zigzag, coordinate };

struct PdmpState {
    Vec x;
    Vec v;
    double t = 0.0;
    double eps = 1.0;
    SamplerKind kind = SamplerKind::bps;
};

enum class EventKind { bounce, refresh, fecUpdate, zzFlip, csSwitch };

struct EventRecord {
    double time = 0.0;
    EventKind kind = EventKind::bounce;
    int coordinate = -1;  // flipped coordinate / newly selected axis
    Vec vPre;
    Vec vPost;
};

// v - 2 n (n'v) with n = grad U / |grad U|; throws SingularityError at x*.
Vec reflect(const Potential& p, const Vec& x, const Vec& v);

// Forward event-chain update drawn at x: -xi n + w_perp with xi Rayleigh(1)
// and w a standard normal projected off n. Also the one-step kernel velocity.
Vec fec_update_velocity(const Potential& p, const Vec& x, RngStream& rng);

// Default start velocity: standard normal (bps/fec), uniform signs (zigzag),
// axis selected with probability proportional to |dU/dx_m| and downhill sign
// (coordinate).
Vec initial_velocity(SamplerKind kind, const Potential& p, const Vec& x, RngStream& rng);

// Single-event steps: advance the state to its next event and apply it.
// `p` is the unscaled target; the 1/eps intensity scaling lives in state.eps.
EventRecord bps_step(PdmpState& s, const Potential& p, double rho, const EnvelopeConfig& cfg,
                     CostCounters& c, RngStream& rng);
EventRecord fec_step(PdmpState& s, const Potential& p, const EnvelopeConfig& cfg,
                     CostCounters& c, RngStream& rng);
EventRecord zigzag_step(PdmpState& s, const Potential& p, const EnvelopeConfig& cfg,
                        CostCounters& c, RngStream& rng);
EventRecord coordinate_step(PdmpState& s, const Potential& p, const EnvelopeConfig& cfg,
                            CostCounters& c, RngStream& rng);

struct RefreshPolicy {
    enum class Kind { none, poisson, schedule };
    Kind kind = Kind::none;
    double rho = 0.0;
    // absolute refresh times with their velocity draws, strictly increasing;
    // an entry at time 0 replaces the start velocity
    std::vector<std::pair<double, Vec>> schedule;

    static RefreshPolicy none() { return {}; }
    static RefreshPolicy poisson(double rho) {
        RefreshPolicy r;
        r.kind = Kind::poisson;
        r.rho = rho;
        return r;
    }
    static RefreshPolicy scheduled(std::vector<std::pair<double, Vec>> sched) {
        RefreshPolicy r;
        r.kind = Kind::schedule;
        r.schedule = std::move(sched);
        return r;
    }
};

struct RunOptions {
    double horizon = 1e6;
    // > 0: record (t, x, v) on the grid k * stride (flights are linear, so
    // grid samples are exact)
    double stride = 0.0;
    bool recordEvents = false;
    std::size_t maxRecordedEvents = 1000000;
    bool stopOnLevelHit = true;  // stop at U(x) = U(x*) + gamma (within-flight crossing)
    bool stopOnBandExit = false;  // also stop at U(x) = U(x*) + 1/gamma from below
    bool stopAtFirstRefresh = false;  // stop right after the first refresh event
    bool trackAbsRateIntegral = false;  // accumulate integral of |v' grad U| dt
    EnvelopeConfig envelope;
};

struct TrajectorySample {
    double t;
    Vec x;
    Vec v;
};

struct RunResult {
    PdmpState state;
    bool hit = false;
    double hitTime = std::numeric_limits<double>::quiet_NaN();
    bool bandExited = false;
    double bandExitTime = std::numeric_limits<double>::quiet_NaN();
    CostCounters counters;
    std::uint64_t bounces = 0;
    std::uint64_t refreshes = 0;
    std::uint64_t flips = 0;     // zig-zag
    std::uint64_t switches = 0;  // coordinate sampler
    std::vector<std::uint64_t> flipPerCoord;
    std::vector<EventRecord> events;
    std::vector<TrajectorySample> samples;
    double absRateIntegral = 0.0;

    std::uint64_t total_jumps() const { return bounces + refreshes + flips + switches; }
};

// Simulates until the trajectory enters {U <= U(x*) + gamma} (detected within
// flights by safeguarded bisection, not just at event times), the band is
// exited upward (optional), or the horizon runs out.
RunResult run_until_hit(SamplerKind kind, const Potential& p, const BandSpec& band,
                        const Vec& x0, const std::optional<Vec>& v0, double eps,
                        const RefreshPolicy& refresh, const RunOptions& opt, RngStream& rng);

}  // namespace pdmplab
