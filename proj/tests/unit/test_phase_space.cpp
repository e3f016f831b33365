// test_phase_space.cpp — Wigner fields, Fokker–Planck transport, histogram comparison

#include <doctest.h>

#include <cmath>
#include <numbers>

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

double relative_l2(const WignerField& a, const WignerField& b) {
    return (a.values - b.values).norm() / b.values.norm();
}

}  // namespace

TEST_SUITE("phase_space") {

TEST_CASE("vacuum field") {
    const PhaseGrid grid{-6, 6, -6, 6, 121, 121};
    const auto w = gaussian_wigner(vacuum_state({1.0, 1.0}), grid);
    CHECK(w.values(60, 60) == doctest::Approx(1.0 / pi).epsilon(1e-3));
    CHECK(field_mass(w) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(negative_mass(w) == 0.0);
    CHECK_FALSE(w.truncation_warning);
}

TEST_CASE("Gaussian moments round trip") {
    const PhaseGrid grid{-8, 8, -8, 8, 160, 160};
    const GaussianState s{0.4, -0.3, 0.8, 0.2, 0.6};
    const auto m = field_moments(gaussian_wigner(s, grid));
    CHECK(m.norm == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(m.state.mean_x == doctest::Approx(s.mean_x).epsilon(1e-6));
    CHECK(m.state.mean_p == doctest::Approx(s.mean_p).epsilon(1e-6));
    CHECK(m.state.cov_xx == doctest::Approx(s.cov_xx).epsilon(1e-6));
    CHECK(m.state.cov_xp == doctest::Approx(s.cov_xp).epsilon(1e-6));
    CHECK(m.state.cov_pp == doctest::Approx(s.cov_pp).epsilon(1e-6));
}

TEST_CASE("truncation is reported") {
    const auto w = gaussian_wigner({3.5, 0, 1.0, 0, 1.0}, PhaseGrid{-4, 4, -4, 4, 32, 32});
    CHECK(w.truncation_warning);
    CHECK(w.truncated_mass > 1e-3);
}

TEST_CASE("cat field") {
    const PhaseGrid grid{-6, 6, -6, 6, 128, 128};
    const auto cat = cat_wigner(3.0, 0.5, grid);
    CHECK(cat.values.minCoeff() < 0.0);
    CHECK(negative_mass(cat) < -0.05);
    CHECK(field_mass(cat) == doctest::Approx(1.0).epsilon(1e-6));
    const auto m = field_moments(cat);
    const double sigma2 = 0.25;
    CHECK(m.state.cov_xx > sigma2);

    // Vanishing separation approaches the single Gaussian.
    CHECK_THROWS_AS(cat_wigner(0.0, 0.5, grid), InvalidArgument);
    const auto merged = cat_wigner(1e-4, 0.5, grid);
    const auto single = gaussian_wigner({0, 0, sigma2, 0, 1.0 / (4 * sigma2)}, grid);
    CHECK((merged.values - single.values).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("free transport returns the cat after one period") {
    const PhaseGrid grid{-6, 6, -6, 6, 96, 96};
    const auto k = make(Preset::free, 2 * pi, 201);
    const auto table = coefficient_table(k);
    const auto cat = cat_wigner(3.0, 0.5, grid);
    FpReport rep;
    const auto out = evolve_fp(cat, table, k.system, {0.0, 2 * pi}, {}, &rep);
    CHECK(relative_l2(out, cat) <= 0.02);
    CHECK(std::abs(field_mass(out) - field_mass(cat)) <= 1e-9);
    CHECK(negative_mass(out) == doctest::Approx(negative_mass(cat)).epsilon(0.02));
    CHECK(rep.steps > 0);
}

TEST_CASE("transport moments follow the moment equations") {
    const PhaseGrid grid{-8, 8, -8, 8, 128, 128};
    const auto k = make(Preset::drude_nonlocal, 4.0, 201, 0.1, 1.0);
    const auto table = coefficient_table(k);
    const GaussianState s0{1.0, 0.0, 0.5, 0.0, 0.5};
    const auto ode = evolve_gaussian(s0, table, k.system);
    const auto out = evolve_fp(gaussian_wigner(s0, grid), table, k.system, {0.0, 4.0});
    const auto m = field_moments(out).state;
    const auto& e = ode.back();
    CHECK(m.mean_x == doctest::Approx(e.mean_x).epsilon(0.01).scale(std::sqrt(e.cov_xx)));
    CHECK(m.mean_p == doctest::Approx(e.mean_p).epsilon(0.01).scale(std::sqrt(e.cov_pp)));
    CHECK(m.cov_xx == doctest::Approx(e.cov_xx).epsilon(0.01));
    CHECK(m.cov_pp == doctest::Approx(e.cov_pp).epsilon(0.01));
    CHECK(std::abs(field_mass(out) - 1.0) <= 1e-9);
}

TEST_CASE("thermal bath erases negativity monotonically") {
    const PhaseGrid grid{-8, 8, -8, 8, 96, 96};
    const auto k = make(Preset::caldeira_leggett_highT, 2.0, 101, 0.2, 2.0);
    const auto table = coefficient_table(k);
    auto field = cat_wigner(3.0, 0.5, grid);
    double previous = negative_mass(field);
    for (int step = 1; step <= 4; ++step) {
        field = evolve_fp(field, table, k.system, {0.5 * (step - 1), 0.5 * step});
        const double neg = negative_mass(field);
        CHECK(neg >= previous - 1e-12);
        previous = neg;
    }
    CHECK(previous > -1e-3);
}

TEST_CASE("mass reaching the boundary is an error") {
    const PhaseGrid grid{-3, 3, -3, 3, 32, 32};
    const auto k = make(Preset::free, 3.0, 31);
    const auto w = gaussian_wigner({2.0, 0.0, 0.2, 0.0, 1.25}, grid);
    CHECK_THROWS_AS(evolve_fp(w, coefficient_table(k), k.system, {0.0, 3.0}), BoundaryLeak);
}

TEST_CASE("histogram comparison") {
    const PhaseGrid grid{-6, 6, -6, 6, 48, 48};
    const auto vac = gaussian_wigner(vacuum_state({1.0, 1.0}), grid);

    WignerEstimate same;
    same.grid = grid;
    same.values = vac.values;
    same.std_err = Eigen::MatrixXd::Constant(48, 48, 1e-3);
    same.samples = 1000;
    const auto r0 = compare_wigner(vac, same);
    CHECK(r0.l1_distance <= 1e-14);
    CHECK(r0.fraction_above_3 == 0.0);

    const auto k = make(Preset::free, 1.0, 11);
    const auto ens = run_ensemble(k, InitialDistribution::from_gaussian(vacuum_state(k.system)), 40000, 8);
    const auto mc = estimate_wigner(ens, 10, grid);
    CHECK(compare_wigner(vac, mc).fraction_above_3 <= 0.01);

    const auto far = gaussian_wigner({2.5, 0, 0.5, 0, 0.5}, grid);
    CHECK(compare_wigner(far, mc).fraction_above_3 > 0.05);

    // Different but overlapping bins are resampled.
    const auto fine = gaussian_wigner(vacuum_state({1.0, 1.0}), PhaseGrid{-7, 7, -7, 7, 112, 112});
    CHECK(compare_wigner(fine, mc).fraction_above_3 <= 0.02);

    const auto disjoint = gaussian_wigner(vacuum_state({1.0, 1.0}), PhaseGrid{20, 30, 20, 30, 16, 16});
    CHECK_THROWS_AS(compare_wigner(disjoint, mc), InvalidComparison);
}

}  // TEST_SUITE
