#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "pdmplab/potentials.hpp"
#include "pdmplab/samplers.hpp"

using namespace pdmplab;

namespace {

Mat mat2(double a, double b, double c, double d) {
    Mat m(2, 2);
    m << a, b, c, d;
    return m;
}

Vec vec2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

double ks_std_normal(std::vector<double> s) {
    std::sort(s.begin(), s.end());
    const double n = static_cast<double>(s.size());
    double d = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double f = 0.5 * std::erfc(-s[i] / std::sqrt(2.0));
        d = std::max(d, std::abs(f - static_cast<double>(i) / n));
        d = std::max(d, std::abs(f - static_cast<double>(i + 1) / n));
    }
    return d;
}

}  // namespace

TEST_CASE("reflection is the mirror across the gradient direction") {
    GaussianPotential p(Mat::Identity(2, 2));
    const Vec v1 = reflect(p, vec2(1.0, 0.0), vec2(1.0, 1.0));
    CHECK(v1[0] == doctest::Approx(-1.0).epsilon(1e-14));
    CHECK(v1[1] == doctest::Approx(1.0).epsilon(1e-14));

    // speed is invariant and the normal rate flips sign exactly
    GaussianPotential q(mat2(2.0, 0.4, 0.4, 1.0));
    RngStream rng(8);
    for (int i = 0; i < 20; ++i) {
        const Vec x = rng.normal_vector(2) * 2.0;
        const Vec v = rng.normal_vector(2);
        const Vec w = reflect(q, x, v);
        CHECK(w.norm() == doctest::Approx(v.norm()).epsilon(1e-12));
        CHECK(w.dot(q.grad(x)) == doctest::Approx(-v.dot(q.grad(x))).epsilon(1e-12));
        // involution
        CHECK((reflect(q, x, w) - v).norm() < 1e-12);
    }

    CHECK_THROWS_AS(reflect(p, Vec::Zero(2), vec2(1.0, 0.0)), SingularityError);
}

TEST_CASE("forward event-chain kernel: inward normal part, gaussian tangent") {
    GaussianPotential p(mat2(1.5, 0.2, 0.2, 0.8));
    const Vec x = vec2(1.3, -0.7);
    const Vec nrm = p.grad(x).normalized();
    const Vec tang = vec2(-nrm[1], nrm[0]);

    RngStream rng(555);
    const int draws = 10000;
    std::vector<double> tangential;
    double xiSum = 0.0, xiSq = 0.0;
    for (int i = 0; i < draws; ++i) {
        const Vec v = fec_update_velocity(p, x, rng);
        CHECK(v.dot(p.grad(x)) < 0.0);  // always pointed downhill
        tangential.push_back(v.dot(tang));
        const double xi = -v.dot(nrm);
        xiSum += xi;
        xiSq += xi * xi;
    }
    CHECK(ks_std_normal(tangential) < 0.02);

    const double mean = xiSum / draws;
    const double sd = std::sqrt(xiSq / draws - mean * mean);
    const double target = std::sqrt(3.14159265358979323846 / 2.0);
    CHECK(std::abs(mean - target) < 3.0 * sd / std::sqrt(static_cast<double>(draws)));
}

TEST_CASE("one-dimensional zig-zag coasts straight into the level set") {
    GaussianPotential p(Mat::Identity(1, 1));
    const BandSpec band(0.5);  // level boundary at |x| = 1
    RngStream rng(1);
    RunOptions opt;
    const auto r = run_until_hit(SamplerKind::zigzag, p, band, Vec::Constant(1, 2.0),
                                 Vec::Constant(1, -1.0), 1e-3, RefreshPolicy::none(), opt, rng);
    CHECK(r.hit);
    CHECK(r.hitTime == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(r.flips == 0);  // the rate (v x)+ is identically zero on the way in
    CHECK(r.state.x[0] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("within-flight level crossing is located to high accuracy") {
    GaussianPotential p(Mat::Identity(2, 2));
    const BandSpec band(0.3);
    RngStream rng(1);
    RunOptions opt;
    // the rate stays negative past the crossing, so no bounce can preempt it
    const auto r = run_until_hit(SamplerKind::bps, p, band, vec2(1.8, 0.6),
                                 vec2(-0.9, -0.1), 1e-2, RefreshPolicy::none(), opt, rng);
    CHECK(r.hit);
    CHECK(r.hitTime == doctest::Approx(1.3146381978881747).epsilon(1e-8));
    CHECK(r.bounces == 0);
    CHECK(p.value(r.state.x) == doctest::Approx(band.level(p)).epsilon(1e-8));
}

TEST_CASE("scheduled refreshes fire at their exact times") {
    GaussianPotential p(Mat::Identity(1, 1));
    const BandSpec band(0.5);
    std::vector<std::pair<double, Vec>> sched;
    sched.emplace_back(0.0, Vec::Constant(1, -1.0));  // replaces the start velocity
    sched.emplace_back(0.3, Vec::Constant(1, -2.0));

    RngStream rng(4);
    RunOptions opt;
    opt.recordEvents = true;
    const auto r = run_until_hit(SamplerKind::bps, p, band, Vec::Constant(1, 5.0),
                                 Vec::Constant(1, 7.0), 1e-2, RefreshPolicy::scheduled(sched),
                                 opt, rng);
    // drift: 0.3 at speed 1, then speed 2 to x = 1, so hit at 0.3 + 3.7/2
    CHECK(r.hit);
    CHECK(r.hitTime == doctest::Approx(2.15).epsilon(1e-9));
    CHECK(r.refreshes == 2);
    CHECK(r.bounces == 0);
    REQUIRE(r.events.size() == 2);
    CHECK(r.events[0].time == 0.0);
    CHECK(r.events[0].vPre[0] == 7.0);
    CHECK(r.events[0].vPost[0] == -1.0);
    CHECK(r.events[1].time == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(r.events[1].vPost[0] == -2.0);

    // schedules must be strictly increasing
    std::vector<std::pair<double, Vec>> bad;
    bad.emplace_back(0.5, Vec::Constant(1, 1.0));
    bad.emplace_back(0.5, Vec::Constant(1, 2.0));
    CHECK_THROWS_AS(run_until_hit(SamplerKind::bps, p, band, Vec::Constant(1, 5.0),
                                  Vec::Constant(1, -1.0), 1e-2, RefreshPolicy::scheduled(bad),
                                  opt, rng),
                    std::invalid_argument);
}

TEST_CASE("poisson refresh can be stopped at on request") {
    GaussianPotential p(Mat::Identity(2, 2));
    const BandSpec band(1e-4);  // hit is effectively unreachable
    RngStream rng(12);
    RunOptions opt;
    opt.stopAtFirstRefresh = true;
    const auto r = run_until_hit(SamplerKind::bps, p, band, vec2(2.0, 0.0), std::nullopt, 1e-2,
                                 RefreshPolicy::poisson(0.5), opt, rng);
    CHECK(r.refreshes == 1);
    CHECK_FALSE(r.hit);
}

TEST_CASE("refresh belongs to the bouncy sampler alone") {
    GaussianPotential p(Mat::Identity(2, 2));
    const BandSpec band(0.5);
    RngStream rng(2);
    RunOptions opt;
    CHECK_THROWS_AS(run_until_hit(SamplerKind::zigzag, p, band, vec2(3.0, 0.0), std::nullopt,
                                  1e-2, RefreshPolicy::poisson(1.0), opt, rng),
                    std::invalid_argument);
}

TEST_CASE("velocity validation per sampler family") {
    GaussianPotential p(Mat::Identity(2, 2));
    const BandSpec band(0.5);
    RngStream rng(2);
    RunOptions opt;
    CHECK_THROWS_AS(run_until_hit(SamplerKind::zigzag, p, band, vec2(3.0, 0.0),
                                  vec2(0.5, 1.0), 1e-2, RefreshPolicy::none(), opt, rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(run_until_hit(SamplerKind::coordinate, p, band, vec2(3.0, 0.0),
                                  vec2(1.0, 1.0), 1e-2, RefreshPolicy::none(), opt, rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(run_until_hit(SamplerKind::coordinate, p, band, vec2(3.0, 0.0),
                                  vec2(0.0, -0.5), 1e-2, RefreshPolicy::none(), opt, rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(run_until_hit(SamplerKind::bps, p, band, vec2(3.0, 0.0), Vec::Zero(3),
                                  1e-2, RefreshPolicy::none(), opt, rng),
                    std::invalid_argument);
    // starting inside the level set is meaningless for a hitting time
    CHECK_THROWS_AS(run_until_hit(SamplerKind::bps, p, band, vec2(0.1, 0.0), std::nullopt,
                                  1e-2, RefreshPolicy::none(), opt, rng),
                    std::invalid_argument);
}

TEST_CASE("work ledger identity holds for every sampler") {
    PowerExponentialPotential p(mat2(1.0, 0.2, 0.2, 1.0), 4.0);
    const BandSpec band(0.2);
    RunOptions opt;
    for (auto kind : {SamplerKind::bps, SamplerKind::fec, SamplerKind::zigzag,
                      SamplerKind::coordinate}) {
        RngStream rng = RngStream::derive(77, static_cast<std::uint64_t>(kind), 0);
        const auto r = run_until_hit(kind, p, band, vec2(1.4, 1.1), std::nullopt, 1e-3,
                                     RefreshPolicy::none(), opt, rng);
        CHECK(r.hit);
        const auto& c = r.counters;
        CHECK(c.derivEvals == opt.envelope.candidateCost * c.candidates +
                                  opt.envelope.windowCost * c.windows);
        CHECK(c.acceptedJumps == r.bounces + r.flips + r.switches);
    }
}

TEST_CASE("runs are reproducible from the stream seed") {
    GaussianPotential p(mat2(1.0, 0.3, 0.3, 2.0));
    const BandSpec band(0.2);
    RunOptions opt;
    opt.stride = 0.05;
    auto once = [&](SamplerKind kind) {
        RngStream rng = RngStream::derive(123, 4, 5);
        const auto policy = kind == SamplerKind::bps ? RefreshPolicy::poisson(2.0)
                                                     : RefreshPolicy::none();
        return run_until_hit(kind, p, band, vec2(2.0, -1.0), std::nullopt, 1e-3, policy, opt,
                             rng);
    };
    for (auto kind : {SamplerKind::bps, SamplerKind::zigzag}) {
        const auto a = once(kind);
        const auto b = once(kind);
        CHECK(a.hitTime == b.hitTime);
        CHECK((a.state.x - b.state.x).norm() == 0.0);
        CHECK(a.counters.derivEvals == b.counters.derivEvals);
        REQUIRE(a.samples.size() == b.samples.size());
        for (std::size_t i = 0; i < a.samples.size(); ++i) {
            CHECK((a.samples[i].x - b.samples[i].x).norm() == 0.0);
        }
    }
}

TEST_CASE("trajectory grid samples sit exactly on the flight lines") {
    GaussianPotential p(Mat::Identity(2, 2));
    const BandSpec band(0.2);
    RunOptions opt;
    opt.stride = 0.1;
    RngStream rng(31);
    const auto r = run_until_hit(SamplerKind::bps, p, band, vec2(2.0, 1.0), std::nullopt, 1e-2,
                                 RefreshPolicy::poisson(1.0), opt, rng);
    REQUIRE(!r.samples.empty());
    CHECK(r.samples[0].t == 0.0);
    CHECK((r.samples[0].x - vec2(2.0, 1.0)).norm() == 0.0);
    for (std::size_t i = 1; i < r.samples.size(); ++i) {
        CHECK(r.samples[i].t == doctest::Approx(0.1 * static_cast<double>(i)).epsilon(1e-12));
        // each sample lies inside the band run, above the target level
        CHECK(p.value(r.samples[i].x) >= band.level(p) - 1e-9);
    }
}

TEST_CASE("flight-integrated absolute rate matches closed forms") {
    // quadratic: |0.232 + 0.816 t| over [0, 1.3], no sign change
    GaussianPotential p(mat2(2.0, 0.3, 0.3, 1.0));
    const BandSpec band(0.01);
    RunOptions opt;
    opt.horizon = 1.3;
    opt.trackAbsRateIntegral = true;
    RngStream rng(6);
    // eps so large that no bounce can fire before the horizon
    const auto r = run_until_hit(SamplerKind::bps, p, band, vec2(0.9, -0.4), vec2(0.2, 0.8),
                                 1e9, RefreshPolicy::none(), opt, rng);
    CHECK_FALSE(r.hit);
    CHECK(r.bounces == 0);
    CHECK(r.absRateIntegral == doctest::Approx(0.9911200000000001).epsilon(1e-10));

    // quartic bowl: one sign change inside the window, quadrature-based
    PowerExponentialPotential q(Mat::Identity(2, 2), 4.0);
    const BandSpec band2(0.1);
    RunOptions opt2;
    opt2.horizon = 0.7;
    opt2.trackAbsRateIntegral = true;
    const auto r2 = run_until_hit(SamplerKind::bps, q, band2, vec2(1.2, 0.3), vec2(-0.8, 0.5),
                                  1e9, RefreshPolicy::none(), opt2, rng);
    CHECK_FALSE(r2.hit);
    CHECK(r2.absRateIntegral == doctest::Approx(0.412127).epsilon(2e-3));
}

TEST_CASE("coordinate sampler always travels along one axis, downhill at switch") {
    GaussianPotential p(mat2(1.0, 0.4, 0.4, 1.5));
    const BandSpec band(0.2);
    RunOptions opt;
    opt.recordEvents = true;
    RngStream rng(91);
    const auto r = run_until_hit(SamplerKind::coordinate, p, band, vec2(2.0, 1.5), std::nullopt,
                                 1e-3, RefreshPolicy::none(), opt, rng);
    CHECK(r.hit);
    CHECK(r.switches > 0);
    for (const auto& e : r.events) {
        REQUIRE(e.kind == EventKind::csSwitch);
        int nz = 0;
        for (Eigen::Index i = 0; i < e.vPost.size(); ++i) {
            if (e.vPost[i] != 0.0) {
                ++nz;
                CHECK(std::abs(e.vPost[i]) == 1.0);
                CHECK(e.coordinate == static_cast<int>(i));
            }
        }
        CHECK(nz == 1);
    }
}

TEST_CASE("zig-zag flips one coordinate per event and tallies per-coordinate") {
    GaussianPotential p(mat2(1.0, 0.2, 0.2, 1.0));
    const BandSpec band(0.2);
    RunOptions opt;
    opt.recordEvents = true;
    RngStream rng(17);
    const auto r = run_until_hit(SamplerKind::zigzag, p, band, vec2(2.0, -1.5), std::nullopt,
                                 1e-3, RefreshPolicy::none(), opt, rng);
    CHECK(r.hit);
    std::uint64_t perCoord = 0;
    for (auto c : r.flipPerCoord) perCoord += c;
    CHECK(perCoord == r.flips);
    for (const auto& e : r.events) {
        REQUIRE(e.kind == EventKind::zzFlip);
        REQUIRE(e.coordinate >= 0);
        CHECK(e.vPost[e.coordinate] == -e.vPre[e.coordinate]);
        // all other coordinates ride through the event untouched
        for (Eigen::Index i = 0; i < e.vPre.size(); ++i) {
            if (static_cast<int>(i) != e.coordinate) CHECK(e.vPost[i] == e.vPre[i]);
        }
    }
}
