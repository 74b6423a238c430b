#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

const std::string kCli = PDMPLAB_CLI_PATH;

struct CmdResult {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE_MESSAGE(static_cast<bool>(in), "missing file: ", p.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

CmdResult run_cli(const std::string& args, const fs::path& dir) {
    fs::create_directories(dir);
    const fs::path outFile = dir / "stdout.txt";
    const fs::path errFile = dir / "stderr.txt";
    const std::string cmd =
        kCli + " " + args + " > " + outFile.string() + " 2> " + errFile.string();
    const int status = std::system(cmd.c_str());
    CmdResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(outFile);
    r.err = slurp(errFile);
    return r;
}

void write_file(const fs::path& p, const std::string& body) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out << body;
    REQUIRE(out.good());
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) out.push_back(line);
    return out;
}

double number_after(const std::string& line, const std::string& prefix) {
    REQUIRE(line.rfind(prefix, 0) == 0);
    return std::stod(line.substr(prefix.size()));
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    std::string cell;
    while (std::getline(in, cell, ',')) out.push_back(cell);
    return out;
}

const fs::path kWork = "cli_work";

}  // namespace

TEST_CASE("usage errors exit 2 and help exits 0") {
    const auto none = run_cli("", kWork / "none");
    CHECK(none.code == 2);

    const auto help = run_cli("--help", kWork / "help");
    CHECK(help.code == 0);
    CHECK(help.out.find("pdmplab") != std::string::npos);
    CHECK(help.out.find("qp-solve") != std::string::npos);

    const auto unknown = run_cli("frobnicate", kWork / "unknown");
    CHECK(unknown.code == 2);
}

TEST_CASE("qp-solve prints the solution, labels, and objective") {
    const auto r = run_cli("qp-solve --H [[1,-0.3],[-0.3,1]] --c [1,1]", kWork / "qp1");
    CHECK(r.code == 0);
    const auto ls = lines_of(r.out);
    REQUIRE(ls.size() >= 3);
    CHECK(ls[0] == "v* = (-1, -1)");
    CHECK(ls[1] == "labels: clipped,clipped");
    CHECK(number_after(ls[2], "objective: ") == doctest::Approx(-1.3).epsilon(1e-12));

    const auto mixed = run_cli("qp-solve --H [[1,0.4],[0.4,2]] --c [-3,0.5]", kWork / "qp2");
    CHECK(mixed.code == 0);
    const auto ml = lines_of(mixed.out);
    REQUIRE(ml.size() >= 3);
    CHECK(ml[1] == "labels: clipped,snapping");

    const auto bad = run_cli("qp-solve --H [[1,0],[0,1]] --c [1]", kWork / "qp3");
    CHECK(bad.code == 2);
    CHECK(bad.err.find("--c") != std::string::npos);

    const auto missing = run_cli("qp-solve --c [1,1]", kWork / "qp4");
    CHECK(missing.code == 2);
}

TEST_CASE("flow command writes the trajectory table with named markers") {
    const fs::path dir = kWork / "flow_hr";
    write_file(dir / "cfg.json", R"({
        "flow": "high-refresh",
        "potential": {"dim": 2},
        "start": {"point": [2.0, 0.0]},
        "gamma": 0.5,
        "stride": 0.5
    })");
    const fs::path out = dir / "out";
    const auto r = run_cli("flow --config " + (dir / "cfg.json").string() + " --out " +
                               out.string(),
                           dir);
    CHECK(r.code == 0);
    // unit gradient descent from radius 2 to radius 1 at speed 1/sqrt(2 pi)
    CHECK(r.out.find("flow ended: level_set_hit at t 2.50662827463") != std::string::npos);

    const std::string csv = slurp(out / "flow.csv");
    const auto rows = lines_of(csv);
    REQUIRE(rows.size() >= 3);
    CHECK(rows[0] == "t,x1,x2,v1,v2,marker,coordinate");
    CHECK(rows[1].rfind("0,2,0,", 0) == 0);
    CHECK(rows.back().find("level_set_hit") != std::string::npos);

    const std::string echo = slurp(out / "config_echo.json");
    CHECK(echo.find("\"flow\": \"high-refresh\"") != std::string::npos);
}

TEST_CASE("flow command maps the zig-zag markers and coordinates") {
    const fs::path dir = kWork / "flow_zz";
    write_file(dir / "cfg.json", R"({
        "flow": "zigzag",
        "potential": {"precision": [[0.4, 0.5], [0.5, 1.0]]},
        "start": {"point": [3.3333333333333335, -3.6666666666666665]},
        "v0": [1, 1],
        "gamma": 0.05,
        "T": 10.0
    })");
    const fs::path out = dir / "out";
    const auto r = run_cli("flow --config " + (dir / "cfg.json").string() + " --out " +
                               out.string(),
                           dir);
    CHECK(r.code == 0);
    const std::string csv = slurp(out / "flow.csv");
    // both boundary coordinates fire, each followed by a direction recompute
    CHECK(csv.find("zz_boundary_hit,0") != std::string::npos);
    CHECK(csv.find("zz_boundary_hit,1") != std::string::npos);
    CHECK(csv.find("zz_direction_recompute") != std::string::npos);
    CHECK(csv.find("level_set_hit") != std::string::npos);
    CHECK(r.out.find("flow ended: level_set_hit at t 3.6279478635") != std::string::npos);
}

TEST_CASE("simulate writes summary, trajectory, and event tables") {
    const fs::path dir = kWork / "sim";
    write_file(dir / "cfg.json", R"({
        "sampler": "zigzag",
        "potential": {"dim": 1},
        "eps": 0.01,
        "gamma": 0.5,
        "seed": 5,
        "start": {"point": [2.0]},
        "v0": [-1],
        "record_events": true,
        "stride": 0.1
    })");
    const fs::path out = dir / "out";
    const auto r = run_cli("simulate --config " + (dir / "cfg.json").string() + " --out " +
                               out.string(),
                           dir);
    CHECK(r.code == 0);
    // a downhill start coasts: the hit lands at t = 1 (root tolerance) with zero jumps
    CHECK(r.out.rfind("level set hit at t ", 0) == 0);
    CHECK(number_after(r.out, "level set hit at t ") == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(r.out.find("after 0 jumps") != std::string::npos);

    const auto summary = lines_of(slurp(out / "simulate_summary.csv"));
    REQUIRE(summary.size() == 2);
    CHECK(summary[0].rfind("epsilon,hit,hit_time,", 0) == 0);
    const auto fields = split_csv(summary[1]);
    REQUIRE(fields.size() == 13);
    CHECK(fields[0] == "0.01");                                        // epsilon
    CHECK(fields[1] == "1");                                           // hit
    CHECK(std::stod(fields[2]) == doctest::Approx(1.0).epsilon(1e-9));  // hit_time
    for (int i = 3; i <= 8; ++i) CHECK(fields[i] == "0");  // band_exited .. total_jumps
    CHECK(std::stod(fields[12]) == doctest::Approx(0.5).epsilon(1e-9));  // final_u

    const auto traj = lines_of(slurp(out / "trajectory.csv"));
    REQUIRE(traj.size() >= 11);
    CHECK(traj[0] == "t,x1,v1");
    CHECK(traj[1] == "0,2,-1");

    const auto events = lines_of(slurp(out / "events.csv"));
    CHECK(events.size() == 1);  // header only: no jumps happened

    // an uphill start must flip once before coasting to the same level
    write_file(dir / "up.json", R"({
        "sampler": "zigzag",
        "potential": {"dim": 1},
        "eps": 0.01,
        "gamma": 0.5,
        "seed": 5,
        "start": {"point": [2.0]},
        "v0": [1],
        "record_events": true
    })");
    const fs::path out2 = dir / "out_up";
    const auto r2 = run_cli("simulate --config " + (dir / "up.json").string() + " --out " +
                                out2.string(),
                            dir);
    CHECK(r2.code == 0);
    const std::string ev = slurp(out2 / "events.csv");
    CHECK(lines_of(ev).size() >= 2);
    CHECK(ev.find("zz_flip,0") != std::string::npos);

    const auto quiet = run_cli("simulate --config " + (dir / "cfg.json").string() + " --out " +
                                   out.string() + " --quiet",
                               dir);
    CHECK(quiet.code == 0);
    CHECK(quiet.out.empty());
}

TEST_CASE("config echo reproduces a study byte for byte") {
    const fs::path dir = kWork / "echo";
    write_file(dir / "cfg.json", R"({
        "sampler": "bps",
        "potential": {"dim": 2},
        "eps_grid": [1e-2, 1e-3],
        "refresh": {"mode": "fixed", "rho": 1.0},
        "replicas": 5
    })");
    const fs::path out1 = dir / "run1";
    const fs::path out2 = dir / "run2";
    const auto r1 = run_cli("scaling --config " + (dir / "cfg.json").string() + " --out " +
                                out1.string() + " --seed 42",
                            dir);
    CHECK(r1.code == 0);
    CHECK(r1.out.find("slope not fitted: slope fit skipped: fewer than 30 replicas") !=
          std::string::npos);

    // re-run from the echoed config, with no flags: the seed is already folded in
    const auto r2 = run_cli("scaling --config " + (out1 / "config_echo.json").string() +
                                " --out " + out2.string(),
                            dir);
    CHECK(r2.code == 0);
    CHECK(slurp(out1 / "scaling_replicas.csv") == slurp(out2 / "scaling_replicas.csv"));
    CHECK(slurp(out1 / "scaling_summary.csv") == slurp(out2 / "scaling_summary.csv"));
    CHECK(slurp(out1 / "config_echo.json") == slurp(out2 / "config_echo.json"));

    const auto echoLines = lines_of(slurp(out1 / "config_echo.json"));
    bool sawSeed = false;
    for (const auto& l : echoLines) sawSeed = sawSeed || l.find("\"seed\": 42") != std::string::npos;
    CHECK(sawSeed);

    const std::string replicas = slurp(out1 / "scaling_replicas.csv");
    const auto rows = lines_of(replicas);
    REQUIRE(rows.size() == 11);  // header + 2 eps levels x 5 replicas
    CHECK(rows[0] ==
          "epsilon,replica,jumps_bounce,jumps_refresh,jumps_flip,deriv_evals,hit,hit_time");
}

TEST_CASE("thread overrides come from the flag or the environment") {
    const fs::path dir = kWork / "threads";
    write_file(dir / "cfg.json", R"({
        "sampler": "fec",
        "potential": {"dim": 2},
        "eps": 0.05,
        "points": 2,
        "samples_per_point": 10
    })");
    const fs::path out = dir / "out";
    const auto flag = run_cli("drift --config " + (dir / "cfg.json").string() + " --out " +
                                  out.string() + " --threads 2 --quiet",
                              dir);
    CHECK(flag.code == 0);
    CHECK(slurp(out / "config_echo.json").find("\"threads\": 2") != std::string::npos);

    const std::string cmd = "env PDMPLAB_THREADS=3 " + kCli + " drift --config " +
                            (dir / "cfg.json").string() + " --out " + out.string() + " --quiet";
    CHECK(std::system(cmd.c_str()) == 0);
    CHECK(slurp(out / "config_echo.json").find("\"threads\": 3") != std::string::npos);

    const std::string bad = "env PDMPLAB_THREADS=soon " + kCli + " drift --config " +
                            (dir / "cfg.json").string() + " --out " + out.string() +
                            " --quiet 2>/dev/null";
    const int status = std::system(bad.c_str());
    CHECK(WEXITSTATUS(status) == 2);
}

TEST_CASE("failure exit codes separate config errors from runtime errors") {
    const fs::path dir = kWork / "errors";
    const auto missing = run_cli("simulate --config does_not_exist.json", dir / "a");
    CHECK(missing.code == 2);
    CHECK(missing.err.find("config error") != std::string::npos);
    CHECK(missing.err.find("does_not_exist.json") != std::string::npos);

    write_file(dir / "bad.json", R"({
        "sampler": "bps",
        "potential": {"dim": 2},
        "gamma": -1.0
    })");
    const auto badField = run_cli("simulate --config " + (dir / "bad.json").string(), dir / "b");
    CHECK(badField.code == 2);
    CHECK(badField.err.find("gamma: must be > 0") != std::string::npos);

    // --out pointing at an existing file is an I/O failure, not a config error
    write_file(dir / "occupied", "not a directory\n");
    write_file(dir / "ok.json", R"({"sampler": "bps", "potential": {"dim": 2}})");
    const auto io = run_cli("simulate --config " + (dir / "ok.json").string() + " --out " +
                                (dir / "occupied").string(),
                            dir / "c");
    CHECK(io.code == 1);
    CHECK(io.err.rfind("error: ", 0) == 0);
}
