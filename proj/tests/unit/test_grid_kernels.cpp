// test_grid_kernels.cpp — time grids, spectral densities, kernel matrices

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Cholesky>

#include "qbm/errors.hpp"
#include "qbm/kernels.hpp"

using namespace qbm;
using std::numbers::pi;

TEST_SUITE("grid_kernels") {

TEST_CASE("make_time_grid arithmetic") {
    const auto g = make_time_grid(0.0, 10.0, 11);
    CHECK(g.dt() == 1.0);
    for (std::size_t k = 0; k < 11; ++k) CHECK(g.time(k) == static_cast<double>(k));

    const auto h = make_time_grid(0.0, 2.0 * pi, 201);
    CHECK(h.dt() == doctest::Approx(pi / 100).epsilon(1e-15));
    CHECK(h.time(200) == doctest::Approx(2.0 * pi).epsilon(1e-15));
}

TEST_CASE("make_time_grid rejects bad input") {
    CHECK_THROWS_AS(make_time_grid(1.0, 0.0, 5), InvalidArgument);
    CHECK_THROWS_AS(make_time_grid(0.0, 1.0, 2), InvalidArgument);
    CHECK_THROWS_AS(make_time_grid(0.0, NAN, 5), InvalidArgument);
}

TEST_CASE("trapezoid weights") {
    const auto g = make_time_grid(0.0, 1.0, 5);
    CHECK(g.weight(0) == 0.125);
    CHECK(g.weight(2) == 0.25);
    CHECK(g.weight(4) == 0.125);
    std::vector<double> f(5, 1.0);
    CHECK(trapezoid_upto(g, f, 4) == doctest::Approx(1.0));
    CHECK(trapezoid_upto(g, f, 0) == 0.0);
}

TEST_CASE("spectral densities") {
    const auto e = SpectralDensity::ohmic_exponential(1.0, 0.1, 10.0);
    const auto h = SpectralDensity::ohmic_hard(1.0, 0.1, 10.0);
    CHECK(eval_spectral_density(e, 0.0) == 0.0);
    CHECK(eval_spectral_density(h, 0.0) == 0.0);
    CHECK(eval_spectral_density(h, 20.0) == 0.0);
    CHECK(eval_spectral_density(e, 1.0) == doctest::Approx(2.0 / pi * 0.1 * std::exp(-0.1)).epsilon(1e-14));
    CHECK_THROWS_AS(eval_spectral_density(e, -1.0), InvalidArgument);

    const auto t = SpectralDensity::tabulated_from({{0.0, 0.0}, {1.0, 2.0}, {2.0, 0.0}});
    CHECK(eval_spectral_density(t, 0.5) == doctest::Approx(1.0));
    CHECK(eval_spectral_density(t, 3.0) == 0.0);
    CHECK_THROWS_AS(validate(SpectralDensity::tabulated_from({{1.0, 0.0}, {0.5, 1.0}})), InvalidArgument);
}

TEST_CASE("zero coupling gives zero kernels") {
    const auto g = make_time_grid(0.0, 2.0, 21);
    const auto sd = SpectralDensity::ohmic_exponential(1.0, 0.0, 2.0);
    CHECK(build_noise_kernel(sd, 1.0, g).is_zero());
    CHECK(build_dissipation_kernel(sd, g).is_zero());
}

TEST_CASE("noise kernel: symmetric, stationary, zero-temperature equal-time value") {
    const auto g = make_time_grid(0.0, 3.0, 31);
    const auto sd = SpectralDensity::ohmic_exponential(1.0, 0.1, 2.0);
    const auto n = build_noise_kernel(sd, 0.0, g);
    CHECK(n.kind == KernelKind::noise);
    CHECK(n.locality == Locality::nonlocal);
    CHECK((n.values - n.values.transpose()).cwiseAbs().maxCoeff() == 0.0);
    // (2/π) M γ Λ² at T = 0.
    CHECK(n.values(5, 5) == doctest::Approx(2.0 / pi * 0.1 * 4.0).epsilon(1e-7));
    for (Eigen::Index k = 1; k < 31; ++k)
        for (Eigen::Index l = 0; l < k; ++l)
            CHECK(std::abs(n.values(k, l) - n.values(k - l, 0)) <= 1e-10 * n.max_abs());

    // Positive semi-definite after ε·max|N| jitter.
    const auto nt = build_noise_kernel(sd, 1.0, g);
    Eigen::MatrixXd m = nt.values;
    m.diagonal().array() += 1e-10 * nt.max_abs();
    CHECK(Eigen::LLT<Eigen::MatrixXd>(m).info() == Eigen::Success);
}

TEST_CASE("dissipation kernel: causal support and closed form") {
    const auto g = make_time_grid(0.0, 3.0, 31);
    const double gamma = 0.1, lambda = 2.0;
    const auto sd = SpectralDensity::ohmic_exponential(1.0, gamma, lambda);
    const auto h = build_dissipation_kernel(sd, g);
    for (Eigen::Index k = 0; k < 31; ++k)
        for (Eigen::Index l = k; l < 31; ++l) CHECK(h.values(k, l) == 0.0);
    // −2∫I(ω) sin(ωs) dω = −(2/π) M γ · 4 s Λ³ / (1 + s²Λ²)².
    for (Eigen::Index k : {1, 7, 20, 30}) {
        const double s = g.time(static_cast<std::size_t>(k));
        const double expect = -2.0 / pi * gamma * 4.0 * s * std::pow(lambda, 3) / std::pow(1 + s * s * lambda * lambda, 2);
        CHECK(h.values(k, 0) == doctest::Approx(expect).epsilon(1e-7));
    }
}

TEST_CASE("presets") {
    const auto g = make_time_grid(0.0, 2.0, 41);
    PresetParams p;
    p.gamma = 0.2;
    p.temperature = 10.0;

    const auto f = preset_kernels(Preset::free, p, g);
    CHECK(f.H.locality == Locality::local);
    CHECK(f.N.locality == Locality::local);
    CHECK(f.H.is_zero());
    CHECK(f.N.is_zero());

    // Local noise of amplitude a = 2MγT, stored as 2a/w_k on the diagonal.
    const auto cl = preset_kernels(Preset::caldeira_leggett_highT, p, g);
    const double a = 2.0 * 1.0 * 0.2 * 10.0;
    CHECK(cl.N.local_coefficient == doctest::Approx(a));
    CHECK(cl.H.local_coefficient == doctest::Approx(0.2));
    CHECK(cl.N.values(10, 10) == doctest::Approx(2.0 * a / g.dt()));
    CHECK(cl.N.values(0, 0) == doctest::Approx(4.0 * a / g.dt()));
    CHECK(cl.N.values(10, 11) == 0.0);

    p.cutoff = 2.0;
    p.temperature = 1.0;
    const auto d = preset_kernels(Preset::drude_nonlocal, p, g);
    CHECK(d.H.locality == Locality::nonlocal);
    CHECK(d.H.values.triangularView<Eigen::Upper>().toDenseMatrix().cwiseAbs().maxCoeff() == 0.0);
    CHECK(d.H.values(20, 10) != 0.0);

    CHECK(parse_preset("drude_nonlocal") == Preset::drude_nonlocal);
    CHECK_THROWS_AS(parse_preset("drude"), InvalidArgument);
}

TEST_CASE("kernel text round trip") {
    const auto g = make_time_grid(0.0, 1.0, 11);
    PresetParams p;
    p.gamma = 0.1;
    p.temperature = 1.0;
    p.cutoff = 3.0;
    const auto k = preset_kernels(Preset::drude_nonlocal, p, g);
    std::stringstream ss;
    write_kernel(ss, k.N);
    const auto back = read_kernel(ss);
    CHECK(back.grid == g);
    CHECK(back.kind == KernelKind::noise);
    CHECK((back.values - k.N.values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("add_local_noise shifts the diagonal only") {
    const auto g = make_time_grid(0.0, 1.0, 11);
    const auto z = zero_kernel(g, KernelKind::noise);
    const auto n = add_local_noise(z, 0.5);
    CHECK(n.local_coefficient == 0.5);
    CHECK(n.values(3, 3) == doctest::Approx(1.0 / g.dt()));
    CHECK(n.values(3, 4) == 0.0);
    CHECK_THROWS_AS(add_local_noise(zero_kernel(g, KernelKind::dissipation), 0.5), InvalidArgument);
}

}  // TEST_SUITE
