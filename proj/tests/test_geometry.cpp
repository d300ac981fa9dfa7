#include "dopptrack/geometry.hpp"
#include "dopptrack/truth.hpp"

#include "test_support.hpp"

#include <catch_amalgamated.hpp>

#include <random>

using namespace dopptrack;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("propagate: single Euler step") {
    auto m = testsupport::straight_line(Vec2(0, 0), Vec2(1, 0), 1);
    auto t = propagate(m);
    REQUIRE(t.size() == 1);
    CHECK(t.positions[0] == Vec2(0, 0));

    m.velocities.push_back(Vec2(1, 0));
    t = propagate(m);
    REQUIRE(t.size() == 2);
    CHECK_THAT(t.positions[1].x(), WithinAbs(0.05, 1e-15));
    CHECK(t.positions[1].y() == 0.0);
}

TEST_CASE("propagate: zero velocities hold position") {
    const auto t = propagate(testsupport::straight_line(Vec2(3, -4), Vec2(0, 0), 50));
    for (const auto& p : t.positions) CHECK(p == Vec2(3, -4));
}

TEST_CASE("propagate: K=400 constant velocity closed form") {
    const auto t = propagate(testsupport::straight_line(Vec2(10, 5), Vec2(2, -1), 400));
    // Only K-1 steps are taken.
    CHECK_THAT(t.positions.back().x(), WithinAbs(10 + 2 * 399 * 0.05, 1e-9));
    CHECK_THAT(t.positions.back().y(), WithinAbs(5 - 1 * 399 * 0.05, 1e-9));
    CHECK_THAT(t.positions.back().x(), WithinAbs(49.9, 1e-9));
    CHECK_THAT(t.positions.back().y(), WithinAbs(-14.95, 1e-9));
}

TEST_CASE("propagate is linear in the motion parameters") {
    std::mt19937_64 rng(3);
    const auto a = testsupport::random_motion(rng, 30);
    const auto b = testsupport::random_motion(rng, 30);
    const double ca = 0.7, cb = -2.5;
    MotionParams mix;
    mix.step = a.step;
    mix.initial_position = ca * a.initial_position + cb * b.initial_position;
    for (std::size_t k = 0; k < a.size(); ++k) mix.velocities.push_back(ca * a.velocities[k] + cb * b.velocities[k]);
    const auto ta = propagate(a), tb = propagate(b), tm = propagate(mix);
    for (std::size_t k = 0; k < tm.size(); ++k)
        CHECK((tm.positions[k] - (ca * ta.positions[k] + cb * tb.positions[k])).norm() < 1e-10);
}

TEST_CASE("motion validation") {
    MotionParams m;
    CHECK_THROWS_AS(m.validate(), std::invalid_argument);
    m.velocities.push_back(Vec2(1, 1));
    m.step = 0.0;
    CHECK_THROWS_AS(propagate(m), std::invalid_argument);
}

TEST_CASE("bistatic Doppler: trivial cases") {
    ScenarioGeometry g;
    g.tx_positions = {Vec2(-100, 0)};
    g.rx_positions = {Vec2(100, 0)};
    g.wavelengths = {0.16};
    g.pairing = {0};
    CHECK(bistatic_doppler(g, 0, Vec2(10, 30), Vec2(0, 0)) == 0.0);
    // on the baseline the two unit vectors cancel
    CHECK_THAT(bistatic_doppler(g, 0, Vec2(0, 0), Vec2(3.1, -7.2)), WithinAbs(0.0, 1e-12));
    const auto d = doppler_matrix(g, Vec2(0, 0));
    CHECK(d.row(0).norm() < 1e-12);
}

TEST_CASE("bistatic Doppler: monostatic collapse at 1.85 GHz") {
    // Co-located illuminator and receiver: f = 2|v_radial|/lambda for an
    // approaching target. The geometry type forbids this pairing; the
    // per-target operation only needs the target away from both stations.
    ScenarioGeometry g;
    g.tx_positions = {Vec2(0, 0)};
    g.rx_positions = {Vec2(0, 0)};
    g.wavelengths = {kSpeedOfLight / 1.85e9};
    g.pairing = {0};
    const double lambda = 299792458.0 / 1.85e9;
    CHECK_THAT(lambda, WithinAbs(0.1621, 1e-4));
    const double f = bistatic_doppler(g, 0, Vec2(50, 0), Vec2(-1, 0));
    CHECK_THAT(f, WithinAbs(2.0 / lambda, 1e-12));
    CHECK_THAT(f, WithinAbs(12.34, 0.005));
    CHECK_THROWS_AS(g.validate(), std::invalid_argument);
}

TEST_CASE("degenerate geometry raises") {
    const auto g = testsupport::field_geometry();
    CHECK_THROWS_AS(bistatic_doppler(g, 0, g.rx_positions[0], Vec2(1, 0)), GeometryError);
    CHECK_THROWS_AS(doppler_matrix(g, g.tx_positions[1]), GeometryError);
    CHECK_THROWS_AS(doppler_position_gradient(g, 1, g.tx_positions[0], Vec2(1, 0)), GeometryError);
}

TEST_CASE("geometry validation") {
    auto g = testsupport::field_geometry();
    CHECK_NOTHROW(g.validate());
    auto bad = g;
    bad.pairing[2] = 5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = g;
    bad.wavelengths[0] = -1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = g;
    bad.rx_positions[0] = bad.tx_positions[0];
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("doppler matrix: rows, bound, linearity, odd symmetry") {
    const auto g = testsupport::field_geometry();
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-30, 60);
    for (int trial = 0; trial < 200; ++trial) {
        const Vec2 p(u(rng), u(rng));
        const Vec2 v1(u(rng) / 10, u(rng) / 10), v2(u(rng) / 10, u(rng) / 10);
        const auto d = doppler_matrix(g, p);
        REQUIRE(d.rows() == 3);
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK_THAT(d.row(j).dot(v1), WithinAbs(bistatic_doppler(g, j, p, v1), 1e-12));
            CHECK(d.row(j).norm() <= 2.0 / g.wavelength_for(j) + 1e-12);
            const double lin = bistatic_doppler(g, j, p, 2.0 * v1 - 3.0 * v2);
            CHECK_THAT(lin, WithinAbs(2.0 * bistatic_doppler(g, j, p, v1) - 3.0 * bistatic_doppler(g, j, p, v2), 1e-9));
            CHECK(bistatic_doppler(g, j, p, -v1) == -bistatic_doppler(g, j, p, v1));
        }
    }
}

TEST_CASE("Doppler equals the negative range-sum rate over lambda") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> station(-300, 300);
    std::uniform_real_distribution<double> vel(-10, 10);
    const double dt = 1e-6;
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        ScenarioGeometry g;
        g.tx_positions = {Vec2(station(rng), station(rng))};
        g.rx_positions = {Vec2(station(rng), station(rng))};
        g.wavelengths = {kSpeedOfLight / 1.85e9};
        g.pairing = {0};
        const Vec2 p(station(rng), station(rng));
        const Vec2 v(vel(rng), vel(rng));
        if ((p - g.tx_positions[0]).norm() < 1.0 || (p - g.rx_positions[0]).norm() < 1.0) continue;
        auto range = [&](double t) {
            const Vec2 q = p + v * t;
            return (q - g.tx_positions[0]).norm() + (q - g.rx_positions[0]).norm();
        };
        const double fd = -(range(dt) - range(-dt)) / (2 * dt) / g.wavelengths[0];
        worst = std::max(worst, std::abs(fd - bistatic_doppler(g, 0, p, v)));
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("position gradient matches finite differences") {
    const auto g = testsupport::field_geometry();
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(5, 35);
    for (int trial = 0; trial < 100; ++trial) {
        const Vec2 p(u(rng), u(rng)), v(u(rng) / 10 - 1.5, u(rng) / 10 - 2);
        for (std::size_t j = 0; j < 3; ++j) {
            const double h = 1e-5;
            const Vec2 grad = doppler_position_gradient(g, j, p, v);
            const double gx = (bistatic_doppler(g, j, p + Vec2(h, 0), v) - bistatic_doppler(g, j, p - Vec2(h, 0), v)) / (2 * h);
            const double gy = (bistatic_doppler(g, j, p + Vec2(0, h), v) - bistatic_doppler(g, j, p - Vec2(0, h), v)) / (2 * h);
            CHECK_THAT(grad.x(), WithinAbs(gx, 1e-6));
            CHECK_THAT(grad.y(), WithinAbs(gy, 1e-6));
        }
    }
}

TEST_CASE("forward Doppler stacks per-instant matrices") {
    const auto g = testsupport::field_geometry();
    std::mt19937_64 rng(8);
    const auto m = testsupport::random_motion(rng, 12);
    const auto z = forward_doppler(g, m);
    const auto t = propagate(m);
    REQUIRE(z.rows() == 12);
    REQUIRE(z.cols() == 3);
    for (std::size_t k = 0; k < 12; ++k)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(z(k, j) == bistatic_doppler(g, j, t.positions[k], m.velocities[k]));
}

TEST_CASE("translation leaves Doppler unchanged") {
    const auto g = testsupport::field_geometry();
    const Vec2 off(123.5, -77.25);
    const auto gt = g.translated(off);
    const Vec2 p(14, 21), v(1.2, -0.4);
    for (std::size_t j = 0; j < 3; ++j)
        CHECK_THAT(bistatic_doppler(gt, j, p + off, v), WithinAbs(bistatic_doppler(g, j, p, v), 1e-9));
}

TEST_CASE("shape trajectories") {
    const auto wps = shape_waypoints(Shape::V, Vec2(8, 8), 24, 20);
    REQUIRE(wps.size() == 3);
    CHECK(wps[0] == Vec2(8, 28));
    CHECK(wps[1] == Vec2(20, 8));
    CHECK(wps[2] == Vec2(32, 28));
    CHECK(shape_waypoints(Shape::U, Vec2(0, 0), 1, 1).size() == 4);
    CHECK(parse_shape("L") == Shape::L);
    CHECK_THROWS_AS(parse_shape("Z"), std::invalid_argument);

    const auto m = motion_from_waypoints(wps, 400, 0.05);
    REQUIRE(m.size() == 400);
    const auto t = propagate(m);
    CHECK((t.positions.front() - wps.front()).norm() < 1e-12);
    CHECK((t.positions.back() - wps.back()).norm() < 1e-9);
    const double speed = polyline_length(wps) / (399 * 0.05);
    CHECK(speed > 1.0);
    CHECK(speed < 3.0);
    CHECK(m.velocities[399] == m.velocities[398]);
}
