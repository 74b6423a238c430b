#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "pdmplab/potentials.hpp"
#include "pdmplab/rng.hpp"

namespace pdmplab {

// Free-flight ray x + v t against a scaled target: events arrive with
// intensity (1/eps) * max(0, lambda_t) where lambda_t = v' grad U(x + v t).
struct RaySpec {
    const Potential* p = nullptr;
    Vec x;
    Vec v;
    double eps = 1.0;

    double rate(double t) const { return v.dot(p->grad(x + t * v)); }
    double rate_slope(double t) const {
        const Vec y = x + t * v;
        return v.dot(p->hess(y) * v);
    }
};

// Work ledger for event simulation. The identity
//   derivEvals == candidateCost * candidates + windowCost * windows
// holds exactly by construction; acceptedJumps counts realized
// velocity-changing events and refreshJumps counts velocity refreshments.
struct CostCounters {
    std::uint64_t acceptedJumps = 0;  // N_T
    std::uint64_t candidates = 0;     // M_T
    std::uint64_t windows = 0;        // W_T
    std::uint64_t derivEvals = 0;
    std::uint64_t refreshJumps = 0;

    // Fold in another ledger's simulation work without its event tallies
    // (used when several competing clocks race and only one fires).
    void merge_work(const CostCounters& o) {
        candidates += o.candidates;
        windows += o.windows;
        derivEvals += o.derivEvals;
    }
};

enum class EnvelopeStrategy { affine, constant };

struct EnvelopeConfig {
    // Window length; 0 selects 0.1 * sqrt(eps) / |v|, which keeps the
    // integrated envelope mass per window O(1) near tangency.
    double window = 0.0;
    EnvelopeStrategy strategy = EnvelopeStrategy::affine;
    std::uint32_t candidateCost = 1;  // derivative evaluations per candidate
    std::uint32_t windowCost = 2;     // derivative evaluations per window (grad + hess)
    double margin = 0.0;              // absolute slack added to the window-start rate
    double curvatureSlack = 0.5;      // envelope slope is (1 + this) * measured slope
    double hardHorizon = 1e6;         // global guard against nontermination
};

struct FirstEventResult {
    std::optional<double> time;  // empty: no event before the horizon
    double rateAtEvent = 0.0;    // lambda (before the 1/eps scaling) at the event
};

class ConvexityViolation : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// The envelope was caught below the true rate at a candidate time.
// This is a hard configuration error: results would be silently biased.
class EnvelopeViolation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UndefinedRatio : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Smallest t with integral_0^t max(0, a + b s) ds == mass; requires b > 0.
double exact_affine_event_time(double a, double b, double mass);

// Same inversion for any slope sign; empty when the total positive-part
// integral over [0, inf) stays below mass.
std::optional<double> affine_event_time(double a, double b, double mass);

// Event time by closed-form inversion of the affine rate a + b t with
// a = v' grad U(x), b = v' hess U v. Requires a constant Hessian; counts one
// candidate, one derivative evaluation, and one accepted jump.
FirstEventResult first_event_exact_affine(const RaySpec& ray, double u, CostCounters& c);

// Event time by windowed-envelope thinning: per window an affine (or
// constant) majorant built from the window-start rate and curvature, with
// validity re-checked at every candidate. Counts candidates, windows and
// derivative evaluations; the accepted jump is counted on acceptance.
FirstEventResult first_event_thinning(const RaySpec& ray, const EnvelopeConfig& cfg,
                                      double horizon, CostCounters& c, RngStream& rng);

// Internals shared with the samplers, which own the accepted-jump tally
// themselves (a planned event may be preempted by a refresh or a level hit).

// rate(t) and its local slope, for thinning a single clock that is not
// necessarily convex in t (e.g. one coordinate of a zig-zag flight).
struct RateProbe {
    std::function<double(double)> rate;
    std::function<double(double)> slope;
    bool convex = true;  // true: slope is a valid one-sided bound; false: use |slope|
};

FirstEventResult thin_event_work(const RateProbe& probe, double eps, const EnvelopeConfig& cfg,
                                 double vnorm, double horizon, CostCounters& c, RngStream& rng);

FirstEventResult exact_affine_event_work(const RaySpec& ray, double u, CostCounters& c);

struct CostSandwich {
    double ratioLow = 0.0;   // min over runs of derivEvals / acceptedJumps
    double ratioHigh = 0.0;  // max over runs
};

// Empirical sandwich of derivative evaluations per accepted jump across runs.
// Throws UndefinedRatio when no run produced a jump.
CostSandwich cost_sandwich_report(const std::vector<CostCounters>& runs);

}  // namespace pdmplab
