#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pdmplab/fluid_flows.hpp"
#include "pdmplab/potentials.hpp"
#include "pdmplab/samplers.hpp"
#include "pdmplab/stats.hpp"

namespace pdmplab {

// Runs task(0..n-1) on up to `threads` workers; writers index disjoint slots,
// so results are identical for any thread count.
void parallel_for(int n, int threads, const std::function<void(int)>& task);

// Default start ray with decaying components; avoids symmetry artifacts for
// coordinate-wise samplers.
Vec default_start_ray(int dim);

// x* + s * ray with U = U(x*) + deltaU, s > 0 found by bracketing.
Vec start_point_at_energy(const Potential& p, const Vec& ray, double deltaU);

enum class RefreshMode { none, fixedRho, tunedRho };  // tunedRho: rho = eps^(-1/4)

struct ScalingSpec {
    SamplerKind sampler = SamplerKind::bps;
    std::shared_ptr<const Potential> potential;
    std::vector<double> epsGrid;  // strictly decreasing
    RefreshMode refreshMode = RefreshMode::none;
    double rho = 1.0;  // fixedRho intensity
    double gamma = 0.5;
    int replicas = 100;
    double horizon = 1e6;
    std::uint64_t masterSeed = 1;
    Vec start;  // empty: U(x*) + 2 on the default ray
    int threads = 1;
    // count jumps up to the first refresh (band-start variant) instead of the
    // level-set hit
    bool bandLocalized = false;
    EnvelopeConfig envelope;
};

struct ReplicaRecord {
    double eps = 0.0;
    int replica = 0;
    std::uint64_t bounces = 0;  // gradient-triggered jumps (incl. fec updates, cs switches)
    std::uint64_t refreshes = 0;
    std::uint64_t flips = 0;  // zig-zag only
    std::uint64_t derivEvals = 0;
    bool hit = false;
    double hitTime = 0.0;

    std::uint64_t total_jumps() const { return bounces + refreshes + flips; }
};

struct ScalingRow {
    double eps = 0.0;
    int replicas = 0;
    int hits = 0;
    double hitFraction = 0.0;
    double meanJumps = 0.0;  // over replicas that hit
    double seJumps = 0.0;
    double meanBounces = 0.0;
    double meanRefreshes = 0.0;
    double meanFlips = 0.0;
    double meanDerivEvals = 0.0;
    double meanHitTime = 0.0;
    bool usedInFit = false;  // hitFraction >= 0.95
};

struct ScalingResult {
    std::vector<ReplicaRecord> records;
    std::vector<ScalingRow> rows;
    std::optional<SlopeFit> fit;
    std::string fitNote;  // set when the fit was skipped
};

ScalingResult run_scaling_study(const ScalingSpec& spec);

struct GapSpec {
    SamplerKind sampler = SamplerKind::bps;  // bps or zigzag
    std::shared_ptr<const Potential> potential;
    std::vector<double> epsGrid;  // strictly decreasing
    double T = 5.0;
    double rho = 1.0;     // BPS refresh-schedule intensity
    double gamma = 0.05;  // truncation band: runs stop at U(x*) + gamma
    int replicas = 31;
    std::uint64_t masterSeed = 1;
    Vec start;
    Vec v0;  // zig-zag start velocity; empty: all +1
    int threads = 1;
    double stride = 0.0;  // comparison grid; 0: T/1000
    EnvelopeConfig envelope;
};

struct GapRecord {
    double eps = 0.0;
    int replica = 0;
    double supGap = 0.0;
    double comparedUpTo = 0.0;
};

struct GapRow {
    double eps = 0.0;
    double medianGap = 0.0;
    double maxGap = 0.0;
    int replicas = 0;
};

struct GapResult {
    std::vector<GapRecord> records;
    std::vector<GapRow> rows;
};

// Sup-distance on a shared time grid between sampler paths and the matching
// deterministic limit (BPS: refresh-schedule flow with the same schedule;
// zig-zag: the procedure flow), truncated at T and the gamma level set.
GapResult run_trajectory_gap(const GapSpec& spec);

struct RefreshBalanceSpec {
    std::shared_ptr<const Potential> potential;
    double eps = 1e-4;
    double gamma = 0.5;
    std::vector<double> rhoGrid;  // strictly increasing
    int replicas = 50;
    double horizon = 1e6;
    std::uint64_t masterSeed = 1;
    Vec start;
    int threads = 1;
    EnvelopeConfig envelope;
};

struct RefreshBalanceRow {
    double rho = 0.0;
    double meanBounces = 0.0;
    double meanRefreshes = 0.0;
    double meanTotal = 0.0;
    double seTotal = 0.0;
    double bounceRefreshRatio = 0.0;
    double hitFraction = 0.0;
};

struct RefreshBalanceResult {
    std::vector<RefreshBalanceRow> rows;
    double argminRho = 0.0;
    double ratioAtArgmin = 0.0;
};

// Total jumps to the level-set hit as a function of the refresh intensity.
RefreshBalanceResult run_refresh_balance(const RefreshBalanceSpec& spec);

struct DriftSpec {
    SamplerKind sampler = SamplerKind::fec;  // fec or coordinate
    std::shared_ptr<const Potential> potential;
    BandSpec band{0.5};
    double eps = 1e-2;
    int points = 20;
    int samplesPerPoint = 2000;
    std::uint64_t masterSeed = 1;
    int threads = 1;
    EnvelopeConfig envelope;
};

struct DriftPoint {
    Vec x;
    double meanDrift = 0.0;  // E[exp(U(Y) - U(x))] - 1 over one jump-chain step
    double seDrift = 0.0;
    double tailFreq = 0.0;  // fraction of steps with U increase > gamma/2
    double tailSE = 0.0;
};

struct DriftResult {
    std::vector<DriftPoint> points;
    double maxDrift = 0.0;  // worst point; betaHat = -maxDrift
    double betaHat = 0.0;
    double tailFreqMax = 0.0;
    double tailBound = 0.0;  // 2 exp(-gamma/(2 eps))
    bool tailOk = false;     // every point within tailBound + 3 SE
};

// One-step Lyapunov diagnostic for the jump chains of the bounded-event
// samplers, evaluated at band points.
DriftResult run_drift_diagnostic(const DriftSpec& spec);

// f is piecewise linear: segment k covers [times[k], times[k+1]) starting at
// value[k] with slope[k] in [m, M]; discontinuities must be sign flips of a
// positive left limit.
struct PiecewisePath {
    std::vector<double> times;  // n+1 entries
    std::vector<double> value;  // n entries: value at segment start
    std::vector<double> slope;  // n entries
    double m = 0.0;
    double M = 0.0;
};

struct SignFlipReport {
    bool holds = false;
    std::size_t flipCount = 0;
    double supAbs = 0.0;
    double intPos = 0.0;
    double intAbs = 0.0;
    double supBound = 0.0;    // 2 M intPos
    double lowerBound = 0.0;  // (m^2/2M) (1+M/m)^-1 T^2/(1+N_T)
    double upperBound = 0.0;  // (1+M/m) intPos
};

// Checks sup|f|^2 <= 2M int f_+ and the two-sided integral bound, with a
// multiplicative quadrature slack.
SignFlipReport check_signflip_lemma(const PiecewisePath& path, double slack = 0.01);

}  // namespace pdmplab
