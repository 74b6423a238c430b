#pragma once

#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "pdmplab/boxqp.hpp"
#include "pdmplab/potentials.hpp"

namespace pdmplab {

enum class FlowMarker {
    none,
    tangencyHit,
    refresh,
    zzBoundaryHit,
    zzDirectionRecompute,
    levelSetHit,
};

enum class FlowTerminal { horizon, levelSetHit, singularity, stationary };

struct FlowPoint {
    double t;
    Vec x;
    Vec v;  // instantaneous velocity (post-event where a marker applies)
    FlowMarker marker = FlowMarker::none;
    int coordinate = -1;  // zzBoundaryHit: which gradient coordinate hit zero
};

struct FlowTrajectory {
    std::vector<FlowPoint> points;
    FlowTerminal terminal = FlowTerminal::horizon;
    double hitTime = std::numeric_limits<double>::quiet_NaN();
    double pathLength = 0.0;
};

struct FlowOptions {
    double tol = 1e-10;         // integrator relative tolerance
    double sampleStride = 0.0;  // > 0: force output points on this grid
    std::size_t maxPoints = 2000000;
};

// First zero of t -> v' grad U(x + t v) on [0, tMax] to absolute tolerance
// `tol`; nullopt when the slope keeps one sign on the whole segment.
std::optional<double> tangency_event_locator(const Potential& p, const Vec& x, const Vec& v,
                                             double tMax, double tol = 1e-12);

// Tangential transport on a level set: x' = v, v' = -(v'Hv/|g|^2) g. U(x) and
// v' grad U(x) are conserved along the exact flow; requires a start with
// v0' grad U(x0) ~ 0 and stops inside a 1e-8 ball of the minimiser.
FlowTrajectory flow_bps_snapping(const Potential& p, const Vec& x0, const Vec& v0, double T,
                                 const FlowOptions& opt = {});

// Low-refresh limit: straight flight until tangency, tangential transport
// until the next scheduled refresh, velocity W_n folded downhill at each
// refresh (w - 2 (w'n)_+ n). The schedule must start at time 0. A level
// crossing (gamma above the minimum) during a straight flight terminates.
FlowTrajectory flow_bps_with_refresh(const Potential& p, const Vec& x0,
                                     const std::vector<std::pair<double, Vec>>& schedule, double T,
                                     double gamma, const FlowOptions& opt = {});

// High-refresh limit: x' = -grad U/(sqrt(2 pi) |grad U|), run until
// U(x) = U(x*) + gamma. pathLength equals hitTime/sqrt(2 pi).
FlowTrajectory flow_bps_high_refresh(const Potential& p, const Vec& x0, double gamma,
                                     const FlowOptions& opt = {});

// Random-walk baseline: same unit-gradient descent at speed sigma/sqrt(2 pi).
FlowTrajectory flow_rwm_baseline(const Potential& p, const Vec& x0, double sigma, double gamma,
                                 const FlowOptions& opt = {});

struct ZzFlowState {
    Vec x;
    Vec v;
    std::vector<bool> inK;  // snapping coordinates: dU/dx_k held at zero
};

// Piecewise zig-zag limit flow: free coordinates move at +-1 downhill, the
// snapping set K rides its hyperplanes with the box-constrained velocity from
// solve_boxqp(H_KK, H_KJ v_J); a free coordinate joining K triggers a
// re-solve and clipped coordinates leave K before integration resumes.
FlowTrajectory flow_zigzag_procedure(const Potential& p, const Vec& x0, const Vec& v0,
                                     double gamma, double T, const FlowOptions& opt = {});

// Velocity/partition assembly at a single point (exposed for tests): applies
// the membership tolerance, solves the QP, and runs the departure cascade.
ZzFlowState zz_assemble_state(const Potential& p, const Vec& x, const Vec& vPrev,
                              const std::vector<bool>& prevK);

// (t, x, v) at time t if the trajectory recorded a point there (within tol).
std::optional<Vec> flow_position_at(const FlowTrajectory& traj, double t, double tol = 1e-9);

}  // namespace pdmplab
