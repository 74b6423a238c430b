#include "pdmplab/config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include <json.hpp>

namespace pdmplab {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& msg) {
    throw ConfigError(field + ": " + msg);
}

std::string join(const std::string& path, const char* key) {
    return path.empty() ? std::string(key) : path + "." + key;
}

json parse_root(const std::string& text) {
    json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) throw ConfigError("config: not valid JSON");
    if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
    return j;
}

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known) fail(join(path, it.key().c_str()), "unknown field");
    }
}

double get_number(const json& j, const std::string& path, const char* key,
                  std::optional<double> fallback = {}) {
    if (!j.contains(key)) {
        if (fallback) return *fallback;
        fail(join(path, key), "required number missing");
    }
    const json& v = j.at(key);
    if (!v.is_number()) fail(join(path, key), "must be a number");
    return v.get<double>();
}

long get_integer(const json& j, const std::string& path, const char* key,
                 std::optional<long> fallback = {}) {
    if (!j.contains(key)) {
        if (fallback) return *fallback;
        fail(join(path, key), "required integer missing");
    }
    const json& v = j.at(key);
    if (!v.is_number_integer() && !v.is_number_unsigned())
        fail(join(path, key), "must be an integer");
    return v.get<long>();
}

std::uint64_t get_seed(const json& j, const std::string& path, const char* key,
                       std::uint64_t fallback) {
    if (!j.contains(key)) return fallback;
    const json& v = j.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
        fail(join(path, key), "must be a nonnegative integer");
    return v.get<std::uint64_t>();
}

bool get_bool(const json& j, const std::string& path, const char* key, bool fallback) {
    if (!j.contains(key)) return fallback;
    const json& v = j.at(key);
    if (!v.is_boolean()) fail(join(path, key), "must be a boolean");
    return v.get<bool>();
}

std::string get_string(const json& j, const std::string& path, const char* key,
                       std::optional<std::string> fallback = {}) {
    if (!j.contains(key)) {
        if (fallback) return *fallback;
        fail(join(path, key), "required string missing");
    }
    const json& v = j.at(key);
    if (!v.is_string()) fail(join(path, key), "must be a string");
    return v.get<std::string>();
}

Vec as_vector(const json& v, const std::string& field) {
    if (!v.is_array() || v.empty()) fail(field, "must be a nonempty array of numbers");
    Vec out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number()) fail(field, "must be a nonempty array of numbers");
        out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
    }
    return out;
}

Mat as_matrix(const json& v, const std::string& field) {
    if (!v.is_array() || v.empty()) fail(field, "must be a nonempty array of rows");
    const std::size_t rows = v.size();
    std::size_t cols = 0;
    Mat out;
    for (std::size_t r = 0; r < rows; ++r) {
        if (!v[r].is_array() || v[r].empty()) fail(field, "rows must be nonempty arrays");
        if (r == 0) {
            cols = v[r].size();
            out.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        } else if (v[r].size() != cols) {
            fail(field, "rows must all have the same length");
        }
        for (std::size_t c = 0; c < cols; ++c) {
            if (!v[r][c].is_number()) fail(field, "entries must be numbers");
            out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                v[r][c].get<double>();
        }
    }
    return out;
}

std::vector<double> get_grid(const json& j, const std::string& path, const char* key,
                             std::vector<double> fallback) {
    if (!j.contains(key)) return fallback;
    const Vec v = as_vector(j.at(key), join(path, key));
    return {v.data(), v.data() + v.size()};
}

SamplerKind parse_sampler(const json& j, const std::string& path,
                          std::initializer_list<SamplerKind> allowed) {
    const std::string s = get_string(j, path, "sampler");
    SamplerKind kind;
    if (s == "bps") kind = SamplerKind::bps;
    else if (s == "fec") kind = SamplerKind::fec;
    else if (s == "zigzag") kind = SamplerKind::zigzag;
    else if (s == "coordinate") kind = SamplerKind::coordinate;
    else fail(join(path, "sampler"), "must be one of bps, fec, zigzag, coordinate");
    for (SamplerKind k : allowed)
        if (k == kind) return kind;
    fail(join(path, "sampler"), "sampler '" + s + "' is not valid for this study");
}

std::shared_ptr<const Potential> parse_potential(const json& j, const std::string& path) {
    if (!j.contains("potential")) fail(join(path, "potential"), "required object missing");
    const json& pj = j.at("potential");
    const std::string ppath = join(path, "potential");
    if (!pj.is_object()) fail(ppath, "must be an object");
    check_keys(pj, ppath, {"kind", "dim", "diag", "precision", "beta_tail"});
    const std::string kind = get_string(pj, ppath, "kind", std::string("gaussian"));

    const int forms = (pj.contains("dim") ? 1 : 0) + (pj.contains("diag") ? 1 : 0) +
                      (pj.contains("precision") ? 1 : 0);
    if (forms != 1) fail(ppath, "exactly one of dim, diag, precision is required");
    Mat precision;
    if (pj.contains("dim")) {
        const long d = get_integer(pj, ppath, "dim");
        if (d < 1) fail(ppath + ".dim", "must be >= 1");
        precision = Mat::Identity(d, d);
    } else if (pj.contains("diag")) {
        const Vec d = as_vector(pj.at("diag"), ppath + ".diag");
        precision = d.asDiagonal();
    } else {
        precision = as_matrix(pj.at("precision"), ppath + ".precision");
    }

    try {
        if (kind == "gaussian") {
            if (pj.contains("beta_tail"))
                fail(ppath + ".beta_tail", "only valid for kind 'power'");
            return std::make_shared<GaussianPotential>(std::move(precision));
        }
        if (kind == "power") {
            const double bt = get_number(pj, ppath, "beta_tail");
            return std::make_shared<PowerExponentialPotential>(std::move(precision), bt);
        }
    } catch (const std::domain_error& e) {
        fail(ppath, e.what());
    }
    fail(ppath + ".kind", "must be 'gaussian' or 'power'");
}

Vec parse_start(const json& j, const std::string& path, const Potential& p) {
    if (!j.contains("start"))
        return start_point_at_energy(p, default_start_ray(static_cast<int>(p.dim())), 2.0);
    const json& s = j.at("start");
    const std::string spath = join(path, "start");
    if (!s.is_object()) fail(spath, "must be an object");
    check_keys(s, spath, {"point", "delta_u", "ray"});
    if (s.contains("point")) {
        if (s.contains("delta_u") || s.contains("ray"))
            fail(spath, "point excludes delta_u and ray");
        const Vec x = as_vector(s.at("point"), spath + ".point");
        if (x.size() != p.dim()) fail(spath + ".point", "length must match the potential dimension");
        return x;
    }
    const double du = get_number(s, spath, "delta_u", 2.0);
    if (!(du > 0.0)) fail(spath + ".delta_u", "must be > 0");
    Vec ray = s.contains("ray") ? as_vector(s.at("ray"), spath + ".ray")
                                : default_start_ray(static_cast<int>(p.dim()));
    if (ray.size() != p.dim()) fail(spath + ".ray", "length must match the potential dimension");
    if (!(ray.norm() > 0.0)) fail(spath + ".ray", "must be nonzero");
    return start_point_at_energy(p, ray, du);
}

EnvelopeConfig parse_envelope(const json& j, const std::string& path) {
    EnvelopeConfig cfg;
    if (!j.contains("envelope")) return cfg;
    const json& e = j.at("envelope");
    const std::string epath = join(path, "envelope");
    if (!e.is_object()) fail(epath, "must be an object");
    check_keys(e, epath, {"window", "strategy", "candidate_cost", "window_cost", "margin",
                          "curvature_slack", "hard_horizon"});
    cfg.window = get_number(e, epath, "window", cfg.window);
    if (cfg.window < 0.0) fail(epath + ".window", "must be >= 0");
    const std::string strat = get_string(e, epath, "strategy", std::string("affine"));
    if (strat == "affine") cfg.strategy = EnvelopeStrategy::affine;
    else if (strat == "constant") cfg.strategy = EnvelopeStrategy::constant;
    else fail(epath + ".strategy", "must be 'affine' or 'constant'");
    const long cc = get_integer(e, epath, "candidate_cost", cfg.candidateCost);
    const long wc = get_integer(e, epath, "window_cost", cfg.windowCost);
    if (cc < 0 || wc < 0) fail(epath, "costs must be >= 0");
    cfg.candidateCost = static_cast<std::uint32_t>(cc);
    cfg.windowCost = static_cast<std::uint32_t>(wc);
    cfg.margin = get_number(e, epath, "margin", cfg.margin);
    if (cfg.margin < 0.0) fail(epath + ".margin", "must be >= 0");
    cfg.curvatureSlack = get_number(e, epath, "curvature_slack", cfg.curvatureSlack);
    if (cfg.curvatureSlack < 0.0) fail(epath + ".curvature_slack", "must be >= 0");
    cfg.hardHorizon = get_number(e, epath, "hard_horizon", cfg.hardHorizon);
    if (!(cfg.hardHorizon > 0.0)) fail(epath + ".hard_horizon", "must be > 0");
    return cfg;
}

std::vector<std::pair<double, Vec>> parse_schedule_entries(const json& v, const std::string& field,
                                                           Eigen::Index dim) {
    if (!v.is_array() || v.empty()) fail(field, "must be a nonempty array of [time, velocity]");
    std::vector<std::pair<double, Vec>> out;
    out.reserve(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const json& e = v[i];
        if (!e.is_array() || e.size() != 2 || !e[0].is_number())
            fail(field, "entries must be [time, velocity] pairs");
        Vec w = as_vector(e[1], field);
        if (w.size() != dim) fail(field, "velocity length must match the potential dimension");
        out.emplace_back(e[0].get<double>(), std::move(w));
    }
    return out;
}

}  // namespace

std::string load_config_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config: cannot read '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string merge_config_overrides(const std::string& text, std::optional<std::uint64_t> seed,
                                   std::optional<int> threads) {
    json j = parse_root(text);
    if (seed) j["seed"] = *seed;
    if (threads) j["threads"] = *threads;
    return j.dump(2) + "\n";
}

ScalingSpec parse_scaling_config(const std::string& text) {
    const json j = parse_root(text);
    check_keys(j, "", {"sampler", "potential", "eps_grid", "refresh", "gamma", "replicas",
                       "horizon", "seed", "threads", "start", "band_localized", "envelope"});
    ScalingSpec s;
    s.sampler = parse_sampler(
        j, "", {SamplerKind::bps, SamplerKind::fec, SamplerKind::zigzag, SamplerKind::coordinate});
    s.potential = parse_potential(j, "");
    s.epsGrid = get_grid(j, "", "eps_grid", {1e-2, 1e-3, 1e-4, 1e-5});
    if (j.contains("refresh")) {
        const json& r = j.at("refresh");
        if (!r.is_object()) fail("refresh", "must be an object");
        check_keys(r, "refresh", {"mode", "rho"});
        const std::string mode = get_string(r, "refresh", "mode");
        if (mode == "none") {
            s.refreshMode = RefreshMode::none;
            if (r.contains("rho")) fail("refresh.rho", "not valid with mode 'none'");
        } else if (mode == "fixed") {
            s.refreshMode = RefreshMode::fixedRho;
            s.rho = get_number(r, "refresh", "rho");
            if (!(s.rho > 0.0)) fail("refresh.rho", "must be > 0");
        } else if (mode == "tuned") {
            s.refreshMode = RefreshMode::tunedRho;
            if (r.contains("rho")) fail("refresh.rho", "not valid with mode 'tuned'");
        } else {
            fail("refresh.mode", "must be one of none, fixed, tuned");
        }
    }
    s.gamma = get_number(j, "", "gamma", s.gamma);
    if (!(s.gamma > 0.0)) fail("gamma", "must be > 0");
    s.replicas = static_cast<int>(get_integer(j, "", "replicas", s.replicas));
    if (s.replicas < 1) fail("replicas", "must be >= 1");
    s.horizon = get_number(j, "", "horizon", s.horizon);
    if (!(s.horizon > 0.0)) fail("horizon", "must be > 0");
    s.masterSeed = get_seed(j, "", "seed", s.masterSeed);
    s.threads = static_cast<int>(get_integer(j, "", "threads", s.threads));
    if (s.threads < 1) fail("threads", "must be >= 1");
    s.start = parse_start(j, "", *s.potential);
    s.bandLocalized = get_bool(j, "", "band_localized", s.bandLocalized);
    s.envelope = parse_envelope(j, "");
    return s;
}

GapSpec parse_gap_config(const std::string& text) {
    const json j = parse_root(text);
    check_keys(j, "", {"sampler", "potential", "eps_grid", "T", "rho", "gamma", "replicas",
                       "seed", "threads", "start", "v0", "stride", "envelope"});
    GapSpec s;
    s.sampler = parse_sampler(j, "", {SamplerKind::bps, SamplerKind::zigzag});
    s.potential = parse_potential(j, "");
    s.epsGrid = get_grid(j, "", "eps_grid", {1e-3, 1e-4, 1e-5});
    s.T = get_number(j, "", "T", s.T);
    if (!(s.T > 0.0)) fail("T", "must be > 0");
    s.rho = get_number(j, "", "rho", s.rho);
    if (!(s.rho > 0.0)) fail("rho", "must be > 0");
    s.gamma = get_number(j, "", "gamma", s.gamma);
    if (!(s.gamma > 0.0)) fail("gamma", "must be > 0");
    s.replicas = static_cast<int>(get_integer(j, "", "replicas", s.replicas));
    if (s.replicas < 1) fail("replicas", "must be >= 1");
    s.masterSeed = get_seed(j, "", "seed", s.masterSeed);
    s.threads = static_cast<int>(get_integer(j, "", "threads", s.threads));
    if (s.threads < 1) fail("threads", "must be >= 1");
    s.start = parse_start(j, "", *s.potential);
    if (j.contains("v0")) {
        s.v0 = as_vector(j.at("v0"), "v0");
        if (s.v0.size() != s.potential->dim())
            fail("v0", "length must match the potential dimension");
    }
    s.stride = get_number(j, "", "stride", s.stride);
    if (s.stride < 0.0) fail("stride", "must be >= 0");
    if (s.stride > 1e-3 * s.T) fail("stride", "must be <= T/1000 for the comparison grid");
    s.envelope = parse_envelope(j, "");
    return s;
}

RefreshBalanceSpec parse_refresh_balance_config(const std::string& text) {
    const json j = parse_root(text);
    check_keys(j, "", {"potential", "eps", "gamma", "rho_grid", "replicas", "horizon", "seed",
                       "threads", "start", "envelope"});
    RefreshBalanceSpec s;
    s.potential = parse_potential(j, "");
    s.eps = get_number(j, "", "eps", s.eps);
    if (!(s.eps > 0.0)) fail("eps", "must be > 0");
    s.gamma = get_number(j, "", "gamma", s.gamma);
    if (!(s.gamma > 0.0)) fail("gamma", "must be > 0");
    if (!j.contains("rho_grid")) fail("rho_grid", "required field missing");
    const json& g = j.at("rho_grid");
    if (g.is_array()) {
        const Vec v = as_vector(g, "rho_grid");
        s.rhoGrid.assign(v.data(), v.data() + v.size());
    } else if (g.is_object()) {
        check_keys(g, "rho_grid", {"min", "max", "points"});
        const double lo = get_number(g, "rho_grid", "min");
        const double hi = get_number(g, "rho_grid", "max");
        const long n = get_integer(g, "rho_grid", "points");
        if (!(lo > 0.0) || !(hi > lo)) fail("rho_grid", "requires 0 < min < max");
        if (n < 2) fail("rho_grid.points", "must be >= 2");
        s.rhoGrid.resize(static_cast<std::size_t>(n));
        for (long i = 0; i < n; ++i)
            s.rhoGrid[static_cast<std::size_t>(i)] =
                lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(n - 1));
    } else {
        fail("rho_grid", "must be an array or a {min, max, points} object");
    }
    s.replicas = static_cast<int>(get_integer(j, "", "replicas", s.replicas));
    if (s.replicas < 1) fail("replicas", "must be >= 1");
    s.horizon = get_number(j, "", "horizon", s.horizon);
    if (!(s.horizon > 0.0)) fail("horizon", "must be > 0");
    s.masterSeed = get_seed(j, "", "seed", s.masterSeed);
    s.threads = static_cast<int>(get_integer(j, "", "threads", s.threads));
    if (s.threads < 1) fail("threads", "must be >= 1");
    s.start = parse_start(j, "", *s.potential);
    s.envelope = parse_envelope(j, "");
    return s;
}

DriftSpec parse_drift_config(const std::string& text) {
    const json j = parse_root(text);
    check_keys(j, "", {"sampler", "potential", "gamma", "eps", "points", "samples_per_point",
                       "seed", "threads", "envelope"});
    DriftSpec s;
    if (j.contains("sampler"))
        s.sampler =
            parse_sampler(j, "", {SamplerKind::fec, SamplerKind::coordinate});
    s.potential = parse_potential(j, "");
    const double gamma = get_number(j, "", "gamma", s.band.gamma);
    if (!(gamma > 0.0)) fail("gamma", "must be > 0");
    s.band = BandSpec(gamma);
    s.eps = get_number(j, "", "eps", s.eps);
    if (!(s.eps > 0.0 && s.eps < 1.0)) fail("eps", "must lie in (0, 1)");
    s.points = static_cast<int>(get_integer(j, "", "points", s.points));
    if (s.points < 1) fail("points", "must be >= 1");
    s.samplesPerPoint = static_cast<int>(get_integer(j, "", "samples_per_point", s.samplesPerPoint));
    if (s.samplesPerPoint < 2) fail("samples_per_point", "must be >= 2");
    s.masterSeed = get_seed(j, "", "seed", s.masterSeed);
    s.threads = static_cast<int>(get_integer(j, "", "threads", s.threads));
    if (s.threads < 1) fail("threads", "must be >= 1");
    s.envelope = parse_envelope(j, "");
    return s;
}

SimulateConfig parse_simulate_config(const std::string& text) {
    const json j = parse_root(text);
    check_keys(j, "", {"sampler", "potential", "eps", "gamma", "refresh", "horizon", "seed",
                       "start", "v0", "stride", "record_events", "stop_on_band_exit", "envelope",
                       "threads"});
    SimulateConfig s;
    s.sampler = parse_sampler(
        j, "", {SamplerKind::bps, SamplerKind::fec, SamplerKind::zigzag, SamplerKind::coordinate});
    s.potential = parse_potential(j, "");
    s.eps = get_number(j, "", "eps", s.eps);
    if (!(s.eps > 0.0)) fail("eps", "must be > 0");
    s.gamma = get_number(j, "", "gamma", s.gamma);
    if (!(s.gamma > 0.0)) fail("gamma", "must be > 0");
    if (j.contains("refresh")) {
        const json& r = j.at("refresh");
        if (!r.is_object()) fail("refresh", "must be an object");
        check_keys(r, "refresh", {"mode", "rho", "entries"});
        const std::string mode = get_string(r, "refresh", "mode");
        if (mode == "none") {
            s.refresh = RefreshPolicy::none();
        } else if (mode == "poisson") {
            const double rho = get_number(r, "refresh", "rho");
            if (!(rho > 0.0)) fail("refresh.rho", "must be > 0");
            s.refresh = RefreshPolicy::poisson(rho);
        } else if (mode == "schedule") {
            if (!r.contains("entries")) fail("refresh.entries", "required field missing");
            s.refresh = RefreshPolicy::scheduled(
                parse_schedule_entries(r.at("entries"), "refresh.entries", s.potential->dim()));
        } else {
            fail("refresh.mode", "must be one of none, poisson, schedule");
        }
    }
    s.horizon = get_number(j, "", "horizon", s.horizon);
    if (!(s.horizon > 0.0)) fail("horizon", "must be > 0");
    s.seed = get_seed(j, "", "seed", s.seed);
    s.start = parse_start(j, "", *s.potential);
    if (j.contains("v0")) {
        Vec v = as_vector(j.at("v0"), "v0");
        if (v.size() != s.potential->dim()) fail("v0", "length must match the potential dimension");
        s.v0 = std::move(v);
    }
    s.stride = get_number(j, "", "stride", s.stride);
    if (s.stride < 0.0) fail("stride", "must be >= 0");
    s.recordEvents = get_bool(j, "", "record_events", s.recordEvents);
    s.stopOnBandExit = get_bool(j, "", "stop_on_band_exit", s.stopOnBandExit);
    s.envelope = parse_envelope(j, "");
    return s;
}

FlowConfig parse_flow_config(const std::string& text) {
    const json j = parse_root(text);
    check_keys(j, "", {"flow", "potential", "start", "v0", "T", "gamma", "sigma", "schedule",
                       "stride", "tol", "seed", "threads"});
    FlowConfig f;
    const std::string kind = get_string(j, "", "flow");
    if (kind == "snapping") f.kind = FlowConfig::Kind::snapping;
    else if (kind == "refresh") f.kind = FlowConfig::Kind::refresh;
    else if (kind == "high-refresh") f.kind = FlowConfig::Kind::highRefresh;
    else if (kind == "rwm") f.kind = FlowConfig::Kind::rwm;
    else if (kind == "zigzag") f.kind = FlowConfig::Kind::zigzag;
    else fail("flow", "must be one of snapping, refresh, high-refresh, rwm, zigzag");
    f.potential = parse_potential(j, "");
    f.start = parse_start(j, "", *f.potential);
    if (j.contains("v0")) {
        f.v0 = as_vector(j.at("v0"), "v0");
        if (f.v0.size() != f.potential->dim())
            fail("v0", "length must match the potential dimension");
    } else if (f.kind == FlowConfig::Kind::zigzag) {
        f.v0 = Vec::Ones(f.potential->dim());
    } else if (f.kind == FlowConfig::Kind::snapping) {
        fail("v0", "required for the snapping flow (must be tangent to the gradient)");
    }
    f.T = get_number(j, "", "T", f.T);
    if (!(f.T > 0.0)) fail("T", "must be > 0");
    f.gamma = get_number(j, "", "gamma", f.gamma);
    if (!(f.gamma > 0.0)) fail("gamma", "must be > 0");
    f.sigma = get_number(j, "", "sigma", f.sigma);
    if (!(f.sigma > 0.0)) fail("sigma", "must be > 0");
    if (f.kind == FlowConfig::Kind::refresh) {
        if (!j.contains("schedule")) fail("schedule", "required for the refresh flow");
        f.schedule = parse_schedule_entries(j.at("schedule"), "schedule", f.potential->dim());
    } else if (j.contains("schedule")) {
        fail("schedule", "only valid for the refresh flow");
    }
    f.stride = get_number(j, "", "stride", f.stride);
    if (f.stride < 0.0) fail("stride", "must be >= 0");
    f.tol = get_number(j, "", "tol", f.tol);
    if (!(f.tol > 0.0)) fail("tol", "must be > 0");
    return f;
}

Mat parse_matrix_arg(const std::string& text, const std::string& field) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) fail(field, "not valid JSON (expected e.g. [[1,0],[0,1]])");
    return as_matrix(j, field);
}

Vec parse_vector_arg(const std::string& text, const std::string& field) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) fail(field, "not valid JSON (expected e.g. [1,0])");
    return as_vector(j, field);
}

}  // namespace pdmplab
