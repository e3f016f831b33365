// test_volterra_greens.cpp — Volterra integrator, Green functions, boundary pairs

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "qbm/errors.hpp"
#include "qbm/volterra.hpp"

using namespace qbm;
using std::numbers::pi;

namespace {

InfluenceKernels make(Preset p, double t_end, std::size_t n, double gamma = 0.0, double temperature = 0.0,
                      double cutoff = 2.0) {
    PresetParams pp;
    pp.gamma = gamma;
    pp.temperature = temperature;
    pp.cutoff = cutoff;
    return preset_kernels(p, pp, make_time_grid(0.0, t_end, n));
}

std::vector<double> random_source(std::size_t n, unsigned seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> d;
    std::vector<double> s(n);
    for (auto& v : s) v = d(gen);
    return s;
}

}  // namespace

TEST_SUITE("volterra_greens") {

TEST_CASE("free oscillator: cos t over one period") {
    const auto k = make(Preset::free, 2 * pi, 2001);
    const auto tr = solve_homogeneous_ivp(k, 1.0, 0.0);
    double err = 0.0;
    for (std::size_t i = 0; i < 2001; ++i) err = std::max(err, std::abs(tr.x[i] - std::cos(k.grid.time(i))));
    CHECK(err < 1e-4);

    const auto zero = solve_homogeneous_ivp(k, 0.0, 0.0);
    for (double x : zero.x) CHECK(x == 0.0);
}

TEST_CASE("local friction: closed-form damped oscillator") {
    const double gamma = 0.2;
    const auto k = make(Preset::caldeira_leggett_highT, 2 * pi, 2001, gamma, 1.0);
    const auto tr = solve_homogeneous_ivp(k, 1.0, 0.0);
    const double wd = std::sqrt(1.0 - gamma * gamma);
    double err = 0.0;
    for (std::size_t i = 0; i < 2001; ++i) {
        const double t = k.grid.time(i);
        const double x = std::exp(-gamma * t) * (std::cos(wd * t) + gamma / wd * std::sin(wd * t));
        err = std::max(err, std::abs(tr.x[i] - x));
    }
    CHECK(err < 1e-4);
}

TEST_CASE("inhomogeneous solves") {
    const auto k = make(Preset::free, 2 * pi, 2001);
    const std::vector<double> zero(2001, 0.0), one(2001, 1.0);

    const auto a = solve_inhomogeneous(k, zero, 0.3, -0.2);
    const auto b = solve_homogeneous_ivp(k, 0.3, -0.2);
    CHECK(a.x == b.x);

    // Constant unit force from rest: 1 − cos t.
    const auto c = solve_inhomogeneous(k, one, 0.0, 0.0);
    double err = 0.0;
    for (std::size_t i = 0; i < 2001; ++i) err = std::max(err, std::abs(c.x[i] - (1 - std::cos(k.grid.time(i)))));
    CHECK(err < 1e-4);

    CHECK_THROWS_AS(solve_inhomogeneous(k, std::vector<double>(10, 0.0), 0.0, 0.0), InvalidArgument);
}

TEST_CASE("superposition with random sources") {
    const auto k = make(Preset::drude_nonlocal, 4.0, 201, 0.1, 1.0);
    const auto s1 = random_source(201, 1), s2 = random_source(201, 2);
    std::vector<double> s12(201);
    for (std::size_t i = 0; i < 201; ++i) s12[i] = s1[i] + s2[i];
    const auto x1 = solve_inhomogeneous(k, s1, 0.0, 0.0);
    const auto x2 = solve_inhomogeneous(k, s2, 0.0, 0.0);
    const auto x12 = solve_inhomogeneous(k, s12, 0.0, 0.0);
    for (std::size_t i = 0; i < 201; ++i) CHECK(std::abs(x12.x[i] - x1.x[i] - x2.x[i]) < 1e-12);
}

TEST_CASE("retarded Green function of the free oscillator") {
    const auto k = make(Preset::free, 2 * pi, 2001);
    const auto g = build_retarded_green(k);
    double err = 0.0;
    for (Eigen::Index r = 0; r < 2001; r += 7)
        for (Eigen::Index c = 0; c < 2001; c += 5) {
            const double s = k.grid.time(std::size_t(r)) - k.grid.time(std::size_t(c));
            err = std::max(err, std::abs(g.g(r, c) - (s > 0 ? std::sin(s) : 0.0)));
        }
    CHECK(err < 1e-4);
}

TEST_CASE("retarded Green function: equal-time value, slope, causality") {
    const auto k = make(Preset::drude_nonlocal, 4.0, 161, 0.1, 1.0);
    const auto g = build_retarded_green(k);
    for (Eigen::Index r = 0; r < 161; ++r) {
        CHECK(g.g(r, r) == 0.0);
        CHECK(g.g_dot(r, r) == 1.0 / k.system.mass);
        for (Eigen::Index c = r + 1; c < 161; ++c) CHECK(g.g(r, c) == 0.0);
    }
}

TEST_CASE("Green function reproduces sourced solutions (nonlocal kernel)") {
    const auto k = make(Preset::drude_nonlocal, 6.0, 301, 0.1, 1.0);
    const auto g = build_retarded_green(k);
    const auto s = random_source(301, 9);
    const auto direct = solve_inhomogeneous(k, s, 0.5, 0.1);
    const auto composed = compose_with_green(solve_homogeneous_ivp(k, 0.5, 0.1), g, s);
    double err = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < 301; ++i) {
        err = std::max(err, std::abs(direct.x[i] - composed.x[i]));
        scale = std::max(scale, std::abs(direct.x[i]));
    }
    CHECK(err <= 1e-10 * scale);
}

TEST_CASE("two-solution construction agrees for local dissipation") {
    const auto k = make(Preset::caldeira_leggett_highT, 6.0, 301, 0.2, 2.0);
    const auto g = build_retarded_green(k);
    const auto g2 = retarded_green_from_basis(k, homogeneous_basis(k));
    const double dt = k.grid.dt();
    CHECK((g.g - g2.g).cwiseAbs().maxCoeff() <= 10 * dt * dt);
}

TEST_CASE("boundary pair of the free oscillator on [0, pi/2]") {
    const auto k = make(Preset::free, pi / 2, 1001);
    const auto pair = boundary_solutions(k, 1000);
    CHECK(std::abs(pair.u1.x[0] - 1.0) < 1e-8);
    CHECK(std::abs(pair.u1.x[1000]) < 1e-8);
    CHECK(std::abs(pair.u2.x[0]) < 1e-8);
    CHECK(std::abs(pair.u2.x[1000] - 1.0) < 1e-8);
    double e1 = 0.0, e2 = 0.0;
    for (std::size_t i = 0; i <= 1000; ++i) {
        const double t = k.grid.time(i);
        e1 = std::max(e1, std::abs(pair.u1.x[i] - std::cos(t)));
        e2 = std::max(e2, std::abs(pair.u2.x[i] - std::sin(t)));
    }
    CHECK(e1 < 1e-4);
    CHECK(e2 < 1e-4);
    CHECK(pair.condition_number >= 1.0);
}

TEST_CASE("boundary pair at a caustic throws") {
    const auto k = make(Preset::free, pi, 1001);
    CHECK_THROWS_AS(boundary_solutions(k, 1000), DegenerateBoundary);
    CHECK(is_caustic(homogeneous_basis(k), 1000));
    CHECK_FALSE(is_caustic(homogeneous_basis(k), 500));
}

TEST_CASE("advanced Green function") {
    const auto k = make(Preset::free, 2.0, 401);
    const std::size_t end = 300;
    const auto ga = build_advanced_green(k, end);
    CHECK(ga.causality == Causality::advanced);
    double err = 0.0;
    for (Eigen::Index j = 0; j <= Eigen::Index(end); ++j)
        for (Eigen::Index m = 0; m <= Eigen::Index(end); ++m) {
            if (j >= m) {
                CHECK(ga.g(j, m) == 0.0);
                continue;
            }
            const double s = k.grid.time(std::size_t(j)) - k.grid.time(std::size_t(m));
            err = std::max(err, std::abs(ga.g(j, m) + std::sin(s)));
        }
    CHECK(err < 1e-4);

    // X(t') = ∫_{t'}^{t} G_adv(t', t'') ξ(t'') dt'' meets X(t) = X'(t) = 0.
    const auto xi = random_source(401, 3);
    auto reconstruct = [&](std::size_t j) {
        double s = 0.0;
        for (std::size_t m = j; m <= end; ++m) {
            const double w = (m == j || m == end) ? 0.5 * k.grid.dt() : k.grid.dt();
            s += w * ga.g(Eigen::Index(j), Eigen::Index(m)) * xi[m];
        }
        return s;
    };
    const double dt = k.grid.dt();
    CHECK(reconstruct(end) == 0.0);
    CHECK(std::abs(reconstruct(end - 1)) < 10 * dt * dt);
    CHECK(std::abs((reconstruct(end) - reconstruct(end - 1)) / dt) < 10 * dt);
}

TEST_CASE("propagate_x0") {
    const auto k = make(Preset::free, 2 * pi, 2001);
    const auto z = propagate_x0(k, 0.0, 0.0);
    for (double x : z.x) CHECK(x == 0.0);
    const auto a = propagate_x0(k, 0.7, -0.4);
    double err = 0.0;
    for (std::size_t i = 0; i < 2001; ++i) {
        const double t = k.grid.time(i);
        err = std::max(err, std::abs(a.x[i] - (0.7 * std::cos(t) - 0.4 * std::sin(t))));
    }
    CHECK(err < 1e-4);
    const auto b = propagate_x0(k, 0.2, 0.9), ab = propagate_x0(k, 0.9, 0.5);
    for (std::size_t i = 0; i < 2001; i += 50) CHECK(std::abs(ab.x[i] - a.x[i] - b.x[i]) < 1e-12);
}

}  // TEST_SUITE
