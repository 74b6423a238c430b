// pdmplab command line: dispatches the study runners, manages seeds and
// output paths, and writes reproducible CSV/JSON outputs.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pdmplab/boxqp.hpp"
#include "pdmplab/config.hpp"
#include "pdmplab/csv.hpp"
#include "pdmplab/experiments.hpp"
#include "pdmplab/fluid_flows.hpp"
#include "pdmplab/samplers.hpp"

namespace fs = std::filesystem;

namespace {

using namespace pdmplab;

struct CommonArgs {
    std::string config;
    std::string out = ".";
    std::uint64_t seedValue = 0;
    int threadsValue = 0;
    bool quiet = false;
    CLI::Option* seedOpt = nullptr;
    CLI::Option* threadsOpt = nullptr;

    std::optional<std::uint64_t> seed() const {
        if (seedOpt && seedOpt->count()) return seedValue;
        return std::nullopt;
    }

    std::optional<int> threads() const {
        if (threadsOpt && threadsOpt->count()) {
            if (threadsValue < 1) throw ConfigError("--threads: must be >= 1");
            return threadsValue;
        }
        if (const char* env = std::getenv("PDMPLAB_THREADS")) {
            char* end = nullptr;
            const long n = std::strtol(env, &end, 10);
            if (end == env || *end != '\0' || n < 1)
                throw ConfigError("PDMPLAB_THREADS: must be a positive integer");
            return static_cast<int>(n);
        }
        return std::nullopt;
    }
};

void add_common(CLI::App* sub, CommonArgs& a, bool configRequired) {
    auto* c = sub->add_option("--config", a.config, "JSON config file");
    if (configRequired) c->required();
    sub->add_option("--out", a.out, "output directory (created if absent)");
    a.seedOpt = sub->add_option("--seed", a.seedValue, "master seed override");
    a.threadsOpt = sub->add_option("--threads", a.threadsValue,
                                   "worker count (PDMPLAB_THREADS as fallback)");
    sub->add_flag("--quiet", a.quiet, "suppress the stdout summary");
}

// Loads the config, folds flag/env overrides in, and echoes the merged
// document next to the outputs so the echo re-runs identically.
std::string prepare(const CommonArgs& a, const char* echoName) {
    const std::string merged =
        merge_config_overrides(load_config_text(a.config), a.seed(), a.threads());
    fs::create_directories(a.out);
    const fs::path echoPath = fs::path(a.out) / echoName;
    std::ofstream echo(echoPath, std::ios::binary);
    if (!echo || !(echo << merged)) throw std::runtime_error("cannot write " + echoPath.string());
    return merged;
}

std::string out_path(const CommonArgs& a, const char* name) {
    return (fs::path(a.out) / name).string();
}

const char* marker_name(FlowMarker m) {
    switch (m) {
        case FlowMarker::none: return "none";
        case FlowMarker::tangencyHit: return "tangency_hit";
        case FlowMarker::refresh: return "refresh";
        case FlowMarker::zzBoundaryHit: return "zz_boundary_hit";
        case FlowMarker::zzDirectionRecompute: return "zz_direction_recompute";
        case FlowMarker::levelSetHit: return "level_set_hit";
    }
    return "none";
}

const char* terminal_name(FlowTerminal t) {
    switch (t) {
        case FlowTerminal::horizon: return "horizon";
        case FlowTerminal::levelSetHit: return "level_set_hit";
        case FlowTerminal::singularity: return "singularity";
        case FlowTerminal::stationary: return "stationary";
    }
    return "horizon";
}

const char* event_name(EventKind k) {
    switch (k) {
        case EventKind::bounce: return "bounce";
        case EventKind::refresh: return "refresh";
        case EventKind::fecUpdate: return "fec_update";
        case EventKind::zzFlip: return "zz_flip";
        case EventKind::csSwitch: return "cs_switch";
    }
    return "bounce";
}

void run_scaling_cmd(const CommonArgs& a) {
    const std::string merged = prepare(a, "config_echo.json");
    const ScalingSpec spec = parse_scaling_config(merged);
    const ScalingResult res = run_scaling_study(spec);

    std::vector<std::vector<std::string>> rows;
    rows.reserve(res.records.size());
    for (const auto& r : res.records)
        rows.push_back({format_double(r.eps), std::to_string(r.replica),
                        std::to_string(r.bounces), std::to_string(r.refreshes),
                        std::to_string(r.flips), std::to_string(r.derivEvals),
                        r.hit ? "1" : "0", format_double(r.hitTime)});
    write_csv(out_path(a, "scaling_replicas.csv"),
              {"epsilon", "replica", "jumps_bounce", "jumps_refresh", "jumps_flip", "deriv_evals",
               "hit", "hit_time"},
              rows);

    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double slope = res.fit ? res.fit->slope : nan;
    const double lo = res.fit ? res.fit->ciLo : nan;
    const double hi = res.fit ? res.fit->ciHi : nan;
    std::vector<std::vector<std::string>> summary;
    for (const auto& row : res.rows)
        summary.push_back({format_double(row.eps), format_double(row.meanJumps),
                           format_double(row.seJumps), format_double(slope), format_double(lo),
                           format_double(hi)});
    write_csv(out_path(a, "scaling_summary.csv"),
              {"epsilon", "mean_jumps", "se", "slope", "slope_ci_lo", "slope_ci_hi"}, summary);

    if (a.quiet) return;
    for (const auto& row : res.rows)
        std::cout << "eps " << format_double(row.eps) << ": mean jumps "
                  << format_double(row.meanJumps) << " (se " << format_double(row.seJumps)
                  << "), hit " << row.hits << "/" << row.replicas
                  << (row.usedInFit ? "" : " [excluded from fit]") << "\n";
    if (res.fit)
        std::cout << "slope " << format_double(res.fit->slope) << " (95% CI ["
                  << format_double(res.fit->ciLo) << ", " << format_double(res.fit->ciHi)
                  << "])\n";
    else
        std::cout << "slope not fitted: " << res.fitNote << "\n";
}

void run_gap_cmd(const CommonArgs& a) {
    const std::string merged = prepare(a, "config_echo.json");
    const GapSpec spec = parse_gap_config(merged);
    const GapResult res = run_trajectory_gap(spec);

    std::vector<std::vector<std::string>> rows;
    rows.reserve(res.records.size());
    for (const auto& r : res.records)
        rows.push_back({format_double(r.eps), std::to_string(r.replica), format_double(r.supGap),
                        format_double(r.comparedUpTo)});
    write_csv(out_path(a, "gap_replicas.csv"), {"epsilon", "replica", "sup_gap", "compared_up_to"},
              rows);

    std::vector<std::vector<std::string>> summary;
    for (const auto& row : res.rows)
        summary.push_back({format_double(row.eps), format_double(row.medianGap),
                           format_double(row.maxGap), std::to_string(row.replicas)});
    write_csv(out_path(a, "gap_summary.csv"), {"epsilon", "median_gap", "max_gap", "replicas"},
              summary);

    if (a.quiet) return;
    for (const auto& row : res.rows)
        std::cout << "eps " << format_double(row.eps) << ": median sup-gap "
                  << format_double(row.medianGap) << " (max " << format_double(row.maxGap)
                  << ", " << row.replicas << " replicas)\n";
}

void run_refresh_balance_cmd(const CommonArgs& a) {
    const std::string merged = prepare(a, "config_echo.json");
    const RefreshBalanceSpec spec = parse_refresh_balance_config(merged);
    const RefreshBalanceResult res = run_refresh_balance(spec);

    std::vector<std::vector<std::string>> rows;
    for (const auto& r : res.rows)
        rows.push_back({format_double(r.rho), format_double(r.meanBounces),
                        format_double(r.meanRefreshes), format_double(r.meanTotal),
                        format_double(r.seTotal), format_double(r.bounceRefreshRatio),
                        format_double(r.hitFraction)});
    write_csv(out_path(a, "refresh_balance.csv"),
              {"rho", "mean_bounces", "mean_refreshes", "mean_total", "se_total",
               "bounce_refresh_ratio", "hit_fraction"},
              rows);

    if (a.quiet) return;
    std::cout << "argmin rho " << format_double(res.argminRho) << " (bounce/refresh ratio "
              << format_double(res.ratioAtArgmin) << ")\n";
}

void run_drift_cmd(const CommonArgs& a) {
    const std::string merged = prepare(a, "config_echo.json");
    const DriftSpec spec = parse_drift_config(merged);
    const DriftResult res = run_drift_diagnostic(spec);

    const Eigen::Index dim = spec.potential->dim();
    std::vector<std::string> header{"point"};
    for (Eigen::Index i = 0; i < dim; ++i) header.push_back("x" + std::to_string(i + 1));
    header.insert(header.end(), {"mean_drift", "se_drift", "tail_freq", "tail_se"});
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < res.points.size(); ++i) {
        const DriftPoint& p = res.points[i];
        std::vector<std::string> row{std::to_string(i)};
        for (Eigen::Index k = 0; k < dim; ++k) row.push_back(format_double(p.x[k]));
        row.insert(row.end(), {format_double(p.meanDrift), format_double(p.seDrift),
                               format_double(p.tailFreq), format_double(p.tailSE)});
        rows.push_back(std::move(row));
    }
    write_csv(out_path(a, "drift_points.csv"), header, rows);

    if (a.quiet) return;
    std::cout << "beta_hat " << format_double(res.betaHat) << " (worst drift "
              << format_double(res.maxDrift) << " over " << res.points.size() << " points)\n"
              << "tail: max freq " << format_double(res.tailFreqMax) << " vs bound "
              << format_double(res.tailBound) << " + 3 SE -> " << (res.tailOk ? "ok" : "exceeded")
              << "\n";
}

void run_simulate_cmd(const CommonArgs& a) {
    const std::string merged = prepare(a, "config_echo.json");
    const SimulateConfig cfg = parse_simulate_config(merged);

    RunOptions opt;
    opt.horizon = cfg.horizon;
    opt.stride = cfg.stride;
    opt.recordEvents = cfg.recordEvents;
    opt.stopOnBandExit = cfg.stopOnBandExit;
    opt.envelope = cfg.envelope;
    RngStream rng = RngStream::derive(cfg.seed, 0, 0);
    const BandSpec band(cfg.gamma);
    const RunResult res = run_until_hit(cfg.sampler, *cfg.potential, band, cfg.start, cfg.v0,
                                        cfg.eps, cfg.refresh, opt, rng);

    const Eigen::Index dim = cfg.potential->dim();
    if (cfg.stride > 0.0) {
        std::vector<std::string> header{"t"};
        for (Eigen::Index i = 0; i < dim; ++i) header.push_back("x" + std::to_string(i + 1));
        for (Eigen::Index i = 0; i < dim; ++i) header.push_back("v" + std::to_string(i + 1));
        std::vector<std::vector<std::string>> rows;
        rows.reserve(res.samples.size());
        for (const auto& s : res.samples) {
            std::vector<std::string> row{format_double(s.t)};
            for (Eigen::Index i = 0; i < dim; ++i) row.push_back(format_double(s.x[i]));
            for (Eigen::Index i = 0; i < dim; ++i) row.push_back(format_double(s.v[i]));
            rows.push_back(std::move(row));
        }
        write_csv(out_path(a, "trajectory.csv"), header, rows);
    }
    if (cfg.recordEvents) {
        std::vector<std::vector<std::string>> rows;
        rows.reserve(res.events.size());
        for (const auto& e : res.events)
            rows.push_back(
                {format_double(e.time), event_name(e.kind), std::to_string(e.coordinate)});
        write_csv(out_path(a, "events.csv"), {"time", "kind", "coordinate"}, rows);
    }

    write_csv(out_path(a, "simulate_summary.csv"),
              {"epsilon", "hit", "hit_time", "band_exited", "bounces", "refreshes", "flips",
               "switches", "total_jumps", "deriv_evals", "candidates", "windows", "final_u"},
              {{format_double(cfg.eps), res.hit ? "1" : "0", format_double(res.hitTime),
                res.bandExited ? "1" : "0", std::to_string(res.bounces),
                std::to_string(res.refreshes), std::to_string(res.flips),
                std::to_string(res.switches), std::to_string(res.total_jumps()),
                std::to_string(res.counters.derivEvals), std::to_string(res.counters.candidates),
                std::to_string(res.counters.windows),
                format_double(cfg.potential->value(res.state.x))}});

    if (a.quiet) return;
    if (res.hit)
        std::cout << "level set hit at t " << format_double(res.hitTime);
    else if (res.bandExited)
        std::cout << "band exited at t " << format_double(res.bandExitTime);
    else
        std::cout << "horizon reached at t " << format_double(res.state.t);
    std::cout << " after " << res.total_jumps() << " jumps (" << res.counters.derivEvals
              << " derivative evals)\n";
}

void run_flow_cmd(const CommonArgs& a) {
    const std::string merged = prepare(a, "config_echo.json");
    const FlowConfig cfg = parse_flow_config(merged);

    FlowOptions opt;
    opt.tol = cfg.tol;
    opt.sampleStride = cfg.stride;
    FlowTrajectory traj;
    switch (cfg.kind) {
        case FlowConfig::Kind::snapping:
            traj = flow_bps_snapping(*cfg.potential, cfg.start, cfg.v0, cfg.T, opt);
            break;
        case FlowConfig::Kind::refresh:
            traj = flow_bps_with_refresh(*cfg.potential, cfg.start, cfg.schedule, cfg.T,
                                         cfg.gamma, opt);
            break;
        case FlowConfig::Kind::highRefresh:
            traj = flow_bps_high_refresh(*cfg.potential, cfg.start, cfg.gamma, opt);
            break;
        case FlowConfig::Kind::rwm:
            traj = flow_rwm_baseline(*cfg.potential, cfg.start, cfg.sigma, cfg.gamma, opt);
            break;
        case FlowConfig::Kind::zigzag:
            traj = flow_zigzag_procedure(*cfg.potential, cfg.start, cfg.v0, cfg.gamma, cfg.T, opt);
            break;
    }

    const Eigen::Index dim = cfg.potential->dim();
    std::vector<std::string> header{"t"};
    for (Eigen::Index i = 0; i < dim; ++i) header.push_back("x" + std::to_string(i + 1));
    for (Eigen::Index i = 0; i < dim; ++i) header.push_back("v" + std::to_string(i + 1));
    header.push_back("marker");
    header.push_back("coordinate");
    std::vector<std::vector<std::string>> rows;
    rows.reserve(traj.points.size());
    for (const auto& p : traj.points) {
        std::vector<std::string> row{format_double(p.t)};
        for (Eigen::Index i = 0; i < dim; ++i) row.push_back(format_double(p.x[i]));
        for (Eigen::Index i = 0; i < dim; ++i) row.push_back(format_double(p.v[i]));
        row.push_back(marker_name(p.marker));
        row.push_back(std::to_string(p.coordinate));
        rows.push_back(std::move(row));
    }
    write_csv(out_path(a, "flow.csv"), header, rows);

    if (a.quiet) return;
    std::cout << "flow ended: " << terminal_name(traj.terminal);
    if (std::isfinite(traj.hitTime)) std::cout << " at t " << format_double(traj.hitTime);
    std::cout << " (" << traj.points.size() << " points)\n";
}

void run_qp_solve_cmd(const std::string& hText, const std::string& cText) {
    BoxQpProblem problem;
    problem.H = parse_matrix_arg(hText, "--H");
    problem.c = parse_vector_arg(cText, "--c");
    if (problem.c.size() != problem.H.rows())
        throw ConfigError("--c: length must match the row count of --H");
    const BoxQpSolution sol = solve_boxqp(problem);

    std::cout << "v* = (";
    for (Eigen::Index i = 0; i < sol.v.size(); ++i)
        std::cout << (i ? ", " : "") << format_double(sol.v[i]);
    std::cout << ")\nlabels: ";
    for (std::size_t i = 0; i < sol.labels.size(); ++i)
        std::cout << (i ? "," : "")
                  << (sol.labels[i] == BoxLabel::snapping ? "snapping" : "clipped");
    std::cout << "\nobjective: " << format_double(sol.objective) << "\n";
    if (sol.degenerate) std::cout << "note: degenerate boundary contact\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pdmplab: event-driven samplers and their deterministic limits"};
    app.require_subcommand(1);

    CommonArgs scaling, gap, balance, drift, simulate, flow;
    add_common(app.add_subcommand("scaling", "jump-count scaling study over an eps grid"),
               scaling, true);
    add_common(app.add_subcommand("trajectory-gap", "sup-gap between sampler paths and the limit"),
               gap, true);
    add_common(app.add_subcommand("refresh-balance", "total jump cost over a refresh-rate grid"),
               balance, true);
    add_common(app.add_subcommand("drift", "one-step Lyapunov drift at band points"), drift, true);
    add_common(app.add_subcommand("simulate", "single sampler run until the level-set hit"),
               simulate, true);
    add_common(app.add_subcommand("flow", "deterministic limit flow trajectory"), flow, true);

    std::string hText, cText;
    CLI::App* qp = app.add_subcommand("qp-solve", "box-constrained QP: min v'Hv/2 + c'v on [-1,1]^K");
    qp->add_option("--H", hText, "Hessian block as a JSON matrix, e.g. [[1,-0.3],[-0.3,1]]")
        ->required();
    qp->add_option("--c", cText, "linear term as a JSON vector, e.g. [1,1]")->required();

    try {
        app.parse(argc, argv);
        if (app.got_subcommand("scaling")) run_scaling_cmd(scaling);
        else if (app.got_subcommand("trajectory-gap")) run_gap_cmd(gap);
        else if (app.got_subcommand("refresh-balance")) run_refresh_balance_cmd(balance);
        else if (app.got_subcommand("drift")) run_drift_cmd(drift);
        else if (app.got_subcommand("simulate")) run_simulate_cmd(simulate);
        else if (app.got_subcommand("flow")) run_flow_cmd(flow);
        else if (app.got_subcommand("qp-solve")) run_qp_solve_cmd(hText, cText);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const pdmplab::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::domain_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
