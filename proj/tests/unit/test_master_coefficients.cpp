// test_master_coefficients.cpp — master-equation coefficients and moment evolution

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "qbm/coefficients.hpp"
#include "qbm/errors.hpp"

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

double max_abs(const std::vector<double>& v, std::size_t from = 0, std::size_t to = 0) {
    if (to == 0) to = v.size();
    double m = 0.0;
    for (std::size_t i = from; i < to; ++i) m = std::max(m, std::abs(v[i]));
    return m;
}

// Independent triple loop for B or C at index k with trapezoid rules on
// every nested interval.
double brute_force(const InfluenceKernels& k, std::size_t e, const Eigen::MatrixXd& resp, const GreenTable& adv) {
    const double dt = k.grid.dt();
    auto w = [&](std::size_t i, std::size_t lo, std::size_t hi) {
        if (lo == hi) return 0.0;
        return (i == lo || i == hi) ? 0.5 * dt : dt;
    };
    auto y = [&](std::size_t m) {
        double s = 0.0;
        for (std::size_t l = 0; l <= e; ++l) s += w(l, 0, e) * k.N.values(m, l) * resp(e, l);
        return s;
    };
    double first = 0.0;
    for (std::size_t l = 0; l <= e; ++l) first += w(l, 0, e) * k.N.values(e, l) * resp(e, l);
    double nested = 0.0;
    for (std::size_t j = 0; j <= e; ++j) {
        double inner = 0.0;
        for (std::size_t m = j; m <= e; ++m) inner += w(m, j, e) * adv.g(j, m) * y(m);
        nested += w(j, 0, e) * k.H.values(e, j) * inner;
    }
    return first - nested;
}

}  // namespace

TEST_SUITE("master_coefficients") {

TEST_CASE("free preset: every coefficient vanishes") {
    const auto k = make(Preset::free, 2 * pi, 401);
    const auto t = coefficient_table(k);
    CHECK(max_abs(t.a) <= 1e-10);
    CHECK(max_abs(t.b) <= 1e-10);
    CHECK(max_abs(t.c) <= 1e-10);
    CHECK(max_abs(t.delta_omega_sq) <= 1e-10);
}

TEST_CASE("local ohmic preset: A = gamma, B = 0, C = 2 gamma T, delta_omega_sq = 0") {
    const double gamma = 0.2, temp = 10.0;
    const auto k = make(Preset::caldeira_leggett_highT, 6.0, 301, gamma, temp);
    const auto t = coefficient_table(k);
    for (std::size_t i = 1; i + 1 < 301; ++i) {
        CHECK(std::abs(t.a[i] - gamma) <= 1e-8);
        CHECK(std::abs(t.b[i]) <= 1e-8);
        CHECK(std::abs(t.c[i] - 2 * gamma * temp) <= 1e-8);
        CHECK(std::abs(t.delta_omega_sq[i]) <= 1e-8);
    }
    // One-sided limits at the initial time.
    CHECK(t.a[0] == doctest::Approx(gamma));
    CHECK(t.c[0] == doctest::Approx(2 * gamma * temp));
}

TEST_CASE("pair route at a single time matches the table (memory kernel)") {
    const auto k = make(Preset::drude_nonlocal, 6.0, 201, 0.1, 1.0);
    const auto basis = homogeneous_basis(k);
    const auto gr = build_retarded_green(k);
    const auto t = coefficient_table(k, gr, basis);
    for (std::size_t e : {20, 60, 110, 180}) {
        if (is_caustic(basis, e)) continue;
        const auto pair = boundary_solutions(basis, e);
        const auto adv = build_advanced_green(k, pair);
        CHECK(dissipation_a(k, e, pair) == doctest::Approx(t.a[e]).epsilon(1e-6));
        CHECK(frequency_shift(k, e, pair) == doctest::Approx(t.delta_omega_sq[e]).epsilon(1e-6));
        const double b = diffusion_b(k, e, gr, adv), c = diffusion_c(k, e, gr, adv);
        CHECK(b == doctest::Approx(t.b[e]).epsilon(1e-6).scale(1e-3));
        CHECK(c == doctest::Approx(t.c[e]).epsilon(1e-6).scale(1e-3));
        // Brute-force triple quadrature.
        CHECK(b == doctest::Approx(brute_force(k, e, gr.g, adv)).epsilon(1e-10));
        CHECK(c == doctest::Approx(brute_force(k, e, gr.g_dot, adv)).epsilon(1e-10));
    }
}

TEST_CASE("A(t) converges under grid refinement (dense oracle)") {
    const auto coarse = make(Preset::drude_nonlocal, 3.0, 151, 0.1, 1.0);
    const auto dense = make(Preset::drude_nonlocal, 3.0, 1201, 0.1, 1.0);
    const auto tc = coefficient_table(coarse), td = coefficient_table(dense);
    const double dt = coarse.grid.dt();
    for (std::size_t i : {25, 75, 150}) {
        CHECK(std::abs(tc.a[i] - td.a[8 * i]) <= 10 * dt * dt);
        CHECK(std::abs(tc.delta_omega_sq[i] - td.delta_omega_sq[8 * i]) <= 10 * dt * dt);
    }
}

TEST_CASE("coefficient non-uniqueness") {
    const auto k = make(Preset::drude_nonlocal, 6.0, 201, 0.1, 1.0);
    auto k2 = k;
    k2.N = build_noise_kernel(SpectralDensity::ohmic_exponential(1.0, 0.3, 5.0), 2.5, k.grid);
    const auto t1 = coefficient_table(k), t2 = coefficient_table(k2);
    CHECK(t1.a == t2.a);
    CHECK(t1.delta_omega_sq == t2.delta_omega_sq);

    // Local dissipation: added local noise leaves B alone and shifts C by a/M.
    PresetParams pp;
    pp.system.mass = 2.0;
    pp.gamma = 0.2;
    pp.temperature = 1.0;
    const auto cl = preset_kernels(Preset::caldeira_leggett_highT, pp, make_time_grid(0.0, 6.0, 201));
    auto louder = cl;
    louder.N = add_local_noise(cl.N, 0.3);
    const auto c1 = coefficient_table(cl), c2 = coefficient_table(louder);
    for (std::size_t i = 1; i + 1 < 201; ++i) {
        CHECK(std::abs(c2.b[i] - c1.b[i]) <= 1e-10);
        CHECK(std::abs(c2.c[i] - c1.c[i] - 0.3 / 2.0) <= 1e-10);
    }
}

TEST_CASE("moment_rhs") {
    const SystemParams sys{1.0, 1.0};
    const GaussianState vac{0.0, 0.0, 0.5, 0.0, 0.5};
    const auto d = moment_rhs(vac, {}, sys);
    CHECK(d.mean_x == 0.0);
    CHECK(d.mean_p == 0.0);
    CHECK(d.cov_xx == 0.0);
    CHECK(d.cov_xp == 0.0);
    CHECK(d.cov_pp == 0.0);

    CoefficientSample a_only;
    a_only.a = 0.3;
    const auto m = moment_rhs({0.0, 2.0, 0.5, 0.0, 0.5}, a_only, sys);
    CHECK(m.mean_p == doctest::Approx(-2 * 0.3 * 2.0 - 0.0));
    const auto z = moment_rhs({0.0, 0.0, 0.5, 0.0, 0.5}, a_only, sys);
    CHECK(z.mean_x == 0.0);
    CHECK(z.mean_p == 0.0);
}

TEST_CASE("zero table: symplectic rotation of the covariance") {
    const auto k = make(Preset::free, 2 * pi, 1001);
    const auto t = coefficient_table(k);
    const GaussianState s0{0.0, 0.0, 1.2, 0.1, 0.9};
    const auto out = evolve_gaussian(s0, t, k.system);
    for (std::size_t i = 0; i < 1001; i += 25) {
        const double c = std::cos(k.grid.time(i)), s = std::sin(k.grid.time(i));
        CHECK(out[i].cov_xx == doctest::Approx(1.2 * c * c + 0.9 * s * s + 2 * 0.1 * s * c).epsilon(1e-8));
    }
    CHECK(std::abs(out.back().determinant() - s0.determinant()) <= 1e-8);

    const GaussianState vac = vacuum_state(k.system);
    const auto still = evolve_gaussian(vac, t, k.system);
    CHECK(std::abs(still.back().cov_xx - 0.5) < 1e-12);
    CHECK(std::abs(still.back().cov_pp - 0.5) < 1e-12);
}

TEST_CASE("local ohmic preset: equilibrium cov_pp = M T") {
    const auto k = make(Preset::caldeira_leggett_highT, 60.0, 3001, 0.2, 2.0);
    const auto out = evolve_gaussian(vacuum_state(k.system), coefficient_table(k), k.system);
    CHECK(out.back().cov_pp == doctest::Approx(2.0).epsilon(1e-3));
}

TEST_CASE("means follow the homogeneous solution (memory kernel)") {
    const auto k = make(Preset::drude_nonlocal, 6.0, 301, 0.1, 1.0);
    GaussianState s0 = vacuum_state(k.system);
    s0.mean_x = 1.0;
    s0.mean_p = 0.3;
    const auto out = evolve_gaussian(s0, coefficient_table(k), k.system);
    const auto x0 = propagate_x0(k, 1.0, 0.3);
    for (std::size_t i = 0; i < 301; i += 10) CHECK(std::abs(out[i].mean_x - x0.x[i]) < 1e-3);
}

TEST_CASE("broken covariance raises an integration failure") {
    const auto k = make(Preset::free, 2.0, 101);
    auto t = coefficient_table(k);
    for (auto& c : t.c) c = -50.0;
    CHECK_THROWS_AS(evolve_gaussian(vacuum_state(k.system), t, k.system), IntegrationFailure);
}

TEST_CASE("CSV layout") {
    const auto k = make(Preset::caldeira_leggett_highT, 1.0, 11, 0.2, 10.0);
    std::ostringstream os;
    write_coefficients_csv(os, coefficient_table(k));
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "t,delta_omega_sq,a,b,c");
    std::size_t rows = 0;
    while (std::getline(is, line)) {
        CHECK(std::count(line.begin(), line.end(), ',') == 4);
        ++rows;
    }
    CHECK(rows == 11);
}

}  // TEST_SUITE
