// test_ctp_correlators.cpp — generating functional, derivative correlators, Markov gap

#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

#include "qbm/ctp.hpp"
#include "qbm/errors.hpp"
#include "qbm/phase_space.hpp"

using namespace qbm;
using std::numbers::pi;

namespace {

InfluenceKernels make(Preset p, double t_end, std::size_t n, double gamma = 0.0, double temperature = 0.0) {
    PresetParams pp;
    pp.gamma = gamma;
    pp.temperature = temperature;
    pp.cutoff = 2.0;
    return preset_kernels(p, pp, make_time_grid(0.0, t_end, n));
}

InitialDistribution shifted_vacuum(const InfluenceKernels& k, double x0 = 0.0) {
    auto s = vacuum_state(k.system);
    s.mean_x = x0;
    return InitialDistribution::from_gaussian(s);
}

std::vector<double> random_source(std::size_t n, RngStream& rng, double scale) {
    std::vector<double> v(n);
    for (auto& x : v) x = scale * rng.normal();
    return v;
}

}  // namespace

TEST_SUITE("ctp_correlators") {

TEST_CASE("normalization and the J_Sigma phase") {
    const auto k = make(Preset::drude_nonlocal, 5.0, 101, 0.1, 1.0);
    const auto g = build_retarded_green(k);
    const auto d = shifted_vacuum(k, 0.7);
    CTPSources zero{std::vector<double>(101, 0.0), std::vector<double>(101, 0.0)};
    CHECK(std::abs(eval_ctp(k, d, zero, g) - 1.0) <= 1e-12);

    RngStream rng(42, 0, 2);
    for (int trial = 0; trial < 5; ++trial) {
        CTPSources only_sigma{random_source(101, rng, 1.0), std::vector<double>(101, 0.0)};
        CHECK(std::abs(eval_ctp(k, d, only_sigma, g) - 1.0) <= 1e-12);

        const auto jd = random_source(101, rng, 0.3);
        const double m1 = std::abs(eval_ctp(k, d, {random_source(101, rng, 1.0), jd}, g));
        const double m2 = std::abs(eval_ctp(k, d, {random_source(101, rng, 1.0), jd}, g));
        CHECK(std::abs(m1 - m2) <= 1e-12);
        CHECK(m1 <= 1.0 + 1e-12);
    }
}

TEST_CASE("non-Gaussian initial data is rejected") {
    const auto k = make(Preset::free, 2.0, 21);
    const auto g = build_retarded_green(k);
    const auto table = to_table(cat_wigner(2.0, 0.5, PhaseGrid{-5, 5, -5, 5, 32, 32}));
    CTPSources zero{std::vector<double>(21, 0.0), std::vector<double>(21, 0.0)};
    CHECK_THROWS_AS(eval_ctp(k, InitialDistribution::from_table(table), zero, g), UnsupportedDistribution);
}

TEST_CASE("derivative correlators against closed forms") {
    const auto k = make(Preset::drude_nonlocal, 5.0, 101, 0.1, 1.0);
    const auto g = build_retarded_green(k);
    const auto d = shifted_vacuum(k);

    // Zero mean: one-point function vanishes.
    CHECK(std::abs(ctp_derivative_correlator(k, d, g, {40}).value) <= 1e-8);

    for (auto [i, j] : {std::pair<std::size_t, std::size_t>{20, 20}, {10, 70}, {50, 100}}) {
        const auto dc = ctp_derivative_correlator(k, d, g, {i, j});
        const auto exact = symmetrized_two_point(k, d, g, i, j);
        CHECK(dc.value == doctest::Approx(exact.value).epsilon(1e-6).scale(1e-3));
        CHECK(dc.route == CorrelatorRoute::ctp_derivative);
    }

    const std::vector<std::size_t> four{10, 35, 60, 90};
    const auto d4 = ctp_derivative_correlator(k, d, g, four);
    const auto w4 = n_point_symmetrized(k, d, g, four);
    CHECK(d4.value == doctest::Approx(w4.value).epsilon(1e-5).scale(1e-3));

    CHECK_THROWS(ctp_derivative_correlator(k, d, g, {1, 2, 3, 4, 5}));
}

TEST_CASE("free vacuum two-point and Wick four-point") {
    const auto k = make(Preset::free, 2 * pi, 201);
    const auto g = build_retarded_green(k);
    const auto d = shifted_vacuum(k);
    auto c = [&](std::size_t a, std::size_t b) { return 0.5 * std::cos(k.grid.time(a) - k.grid.time(b)); };
    CHECK(symmetrized_two_point(k, d, g, 30, 170).value == doctest::Approx(c(30, 170)).epsilon(1e-4));
    const std::vector<std::size_t> idx{5, 60, 120, 190};
    const double wick = c(5, 60) * c(120, 190) + c(5, 120) * c(60, 190) + c(5, 190) * c(60, 120);
    CHECK(n_point_symmetrized(k, d, g, idx).value == doctest::Approx(wick).epsilon(1e-3));
}

TEST_CASE("Markov gap: zero without memory, nonzero with it") {
    const double t_end = 8.0;
    const std::size_t n = 401;
    const double dt = t_end / (n - 1);
    for (Preset p : {Preset::free, Preset::caldeira_leggett_highT}) {
        const auto k = make(p, t_end, n, 0.2, 2.0);
        const auto g = build_retarded_green(k);
        const auto table = coefficient_table(k, g, homogeneous_basis(k));
        const auto d = shifted_vacuum(k, 1.0);
        for (auto [i, j] : {std::pair<std::size_t, std::size_t>{100, 250}, {150, 300}, {50, 400}}) {
            const auto r = markov_gap(k, d, table, g, i, j);
            const double scale = std::sqrt(symmetrized_two_point(k, d, g, i, i).value *
                                           symmetrized_two_point(k, d, g, j, j).value);
            CHECK(std::abs(r.gap) <= 10 * dt * dt * scale);
        }
    }
    const auto k = make(Preset::drude_nonlocal, t_end, n, 0.1, 1.0);
    const auto g = build_retarded_green(k);
    const auto table = coefficient_table(k, g, homogeneous_basis(k));
    const auto d = shifted_vacuum(k, 1.0);
    const auto r = markov_gap(k, d, table, g, 150, 300);
    const double scale = std::sqrt(symmetrized_two_point(k, d, g, 150, 150).value *
                                   symmetrized_two_point(k, d, g, 300, 300).value);
    CHECK(std::abs(r.gap) > 5 * 10 * dt * dt * scale);
    CHECK(r.gap == doctest::Approx(r.exact - r.regression));
}

TEST_CASE("scan CSV layout") {
    std::ostringstream os;
    write_correlator_scan_csv(os, {{1.0, 2.0, 0.5, 0.4, 0.1, 0.01}});
    CHECK(os.str().rfind("t1,t2,exact,regression,gap,std_err\n", 0) == 0);
}

}  // TEST_SUITE
