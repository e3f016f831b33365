// coefficients.cpp — coefficient table, pair route, and moment evolution

#include "qbm/coefficients.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "qbm/errors.hpp"

namespace qbm {

bool CoefficientTable::is_skipped(std::size_t k) const {
    return std::binary_search(skipped.begin(), skipped.end(), k);
}

GaussianState vacuum_state(const SystemParams& system) {
    validate(system);
    if (!(system.omega_ren > 0.0)) throw InvalidArgument("vacuum state needs omega_ren > 0");
    const double mw = system.mass * system.omega_ren;
    return {0.0, 0.0, 0.5 / mw, 0.0, 0.5 * mw};
}

void validate(const GaussianState& s) {
    const bool finite = std::isfinite(s.mean_x) && std::isfinite(s.mean_p) && std::isfinite(s.cov_xx) &&
                        std::isfinite(s.cov_xp) && std::isfinite(s.cov_pp);
    if (!finite) throw InvalidArgument("gaussian state: non-finite moment");
    if (s.cov_xx < 0.0 || s.cov_pp < 0.0 || s.determinant() < -1e-14 * (1.0 + s.cov_xx * s.cov_pp))
        throw InvalidArgument("gaussian state: covariance is not positive semi-definite");
}

namespace {

// Trapezoid of H(t_k, ·) f over [t_i, t_k] for the matrix part of H.
double h_row_integral(const InfluenceKernels& kernels, std::size_t k, const std::vector<double>& f) {
    if (kernels.H.locality != Locality::nonlocal || k == 0) return 0.0;
    const auto row = static_cast<Eigen::Index>(k);
    double s = 0.0;
    for (std::size_t l = 0; l <= k; ++l)
        s += kernels.grid.weight_upto(l, k) * kernels.H.values(row, static_cast<Eigen::Index>(l)) * f[l];
    return s;
}

bool has_nonlocal_h(const InfluenceKernels& kernels) {
    return kernels.H.locality == Locality::nonlocal && !kernels.H.values.isZero(0.0);
}

// ∫H(t,t')∫G̃(t',t'')∫N(t'',t''')R(t,t''')  with R = G_ret or ∂ₜG_ret.
// Local dissipation does not contribute: its support is t' = t, where
// G̃(t,·) vanishes together with its derivative's integration domain.
double nested_term(const InfluenceKernels& kernels, std::size_t k, const Eigen::MatrixXd& response,
                   const GreenTable& g_adv) {
    if (!has_nonlocal_h(kernels) || k == 0) return 0.0;
    const TimeGrid& grid = kernels.grid;
    const auto n1 = static_cast<Eigen::Index>(k + 1);
    const auto row = static_cast<Eigen::Index>(k);

    Eigen::VectorXd wr(n1);
    for (Eigen::Index l = 0; l < n1; ++l)
        wr(l) = grid.weight_upto(static_cast<std::size_t>(l), k) * response(row, l);
    const Eigen::VectorXd y = kernels.N.values.topLeftCorner(n1, n1) * wr;

    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        const double h = kernels.H.values(row, static_cast<Eigen::Index>(j));
        if (h == 0.0) continue;
        // ∫_{t_j}^{t_k} G̃(t_j, t'') Y(t'') dt''; the m = j end carries G̃ = 0.
        double z = 0.0;
        const auto jr = static_cast<Eigen::Index>(j);
        for (std::size_t m = j + 1; m <= k; ++m) {
            const double w = m == k ? 0.5 : 1.0;
            z += w * g_adv.g(jr, static_cast<Eigen::Index>(m)) * y(static_cast<Eigen::Index>(m));
        }
        total += grid.weight_upto(j, k) * h * z * grid.dt();
    }
    return total;
}

// Same nested term with the separable form of G̃ built from the IVP basis:
// G̃(j,m) = −(1/M)[v1(j)·v2(m) − v2(j)·v1(m)]/W(m). Suffix sums make it
// O(k) after the noise contraction.
double nested_term_separable(const InfluenceKernels& kernels, std::size_t k,
                             const Eigen::MatrixXd& response, const HomogeneousBasis& basis,
                             const std::vector<double>& wronskian) {
    if (!has_nonlocal_h(kernels) || k == 0) return 0.0;
    const TimeGrid& grid = kernels.grid;
    const auto n1 = static_cast<Eigen::Index>(k + 1);
    const auto row = static_cast<Eigen::Index>(k);

    Eigen::VectorXd wr(n1);
    for (Eigen::Index l = 0; l < n1; ++l)
        wr(l) = grid.weight_upto(static_cast<std::size_t>(l), k) * response(row, l);
    const Eigen::VectorXd y = kernels.N.values.topLeftCorner(n1, n1) * wr;

    const double dt = grid.dt();
    double s1 = 0.0, s2 = 0.0;  // Σ_{m>j} w_m v_i(m) Y_m / W(m)
    double total = 0.0;
    for (std::size_t j = k; j-- > 0;) {
        const std::size_t m = j + 1;
        const double w = (m == k ? 0.5 : 1.0) * dt * y(static_cast<Eigen::Index>(m)) / wronskian[m];
        s1 += w * basis.v1.x[m];
        s2 += w * basis.v2.x[m];
        const double z = -(basis.v1.x[j] * s2 - basis.v2.x[j] * s1) / kernels.system.mass;
        total += grid.weight_upto(j, k) * kernels.H.values(row, static_cast<Eigen::Index>(j)) * z;
    }
    return total;
}

double first_term(const InfluenceKernels& kernels, std::size_t k, const Eigen::MatrixXd& response) {
    if (kernels.N.is_zero()) return 0.0;
    const auto n = response.cols();
    std::vector<double> row(static_cast<std::size_t>(n));
    for (Eigen::Index l = 0; l < n; ++l) row[static_cast<std::size_t>(l)] = response(static_cast<Eigen::Index>(k), l);
    return kernels.noise_row_integral(k, row.data());
}

void check_tables(const InfluenceKernels& kernels, std::size_t end_index, const GreenTable& g_ret,
                  const GreenTable& g_adv) {
    if (!(g_ret.grid == kernels.grid) || !(g_adv.grid == kernels.grid))
        throw InvalidArgument("diffusion coefficient: Green tables live on a different grid");
    if (g_ret.causality != Causality::retarded || g_adv.causality != Causality::advanced)
        throw InvalidArgument("diffusion coefficient: expected a retarded and an advanced table");
    if (end_index >= kernels.grid.size()) throw InvalidArgument("diffusion coefficient: index out of range");
}

}  // namespace

double frequency_shift(const InfluenceKernels& kernels, std::size_t end_index, const BoundaryPair& pair) {
    if (pair.end_index != end_index) throw InvalidArgument("frequency_shift: pair computed for another time");
    const std::size_t k = end_index;
    const double u1d = pair.u1.v[k];
    if (u1d == 0.0) throw DegenerateBoundary("frequency_shift: du1/dt vanishes", kernels.grid.time(k));
    const double ratio = pair.u2.v[k] / u1d;
    std::vector<double> f(k + 1);
    for (std::size_t l = 0; l <= k; ++l) f[l] = pair.u2.x[l] - ratio * pair.u1.x[l];
    // The local friction acts on the bracket's slope at t, which is zero.
    return h_row_integral(kernels, k, f) / kernels.system.mass;
}

double dissipation_a(const InfluenceKernels& kernels, std::size_t end_index, const BoundaryPair& pair) {
    if (pair.end_index != end_index) throw InvalidArgument("dissipation_a: pair computed for another time");
    const std::size_t k = end_index;
    const double u1d = pair.u1.v[k];
    if (u1d == 0.0) throw DegenerateBoundary("dissipation_a: du1/dt vanishes", kernels.grid.time(k));
    // Local part: ½(Mu̇₁)⁻¹·2Mγu̇₁ = γ.
    return kernels.H.local_coefficient +
           0.5 * h_row_integral(kernels, k, pair.u1.x) / (kernels.system.mass * u1d);
}

double diffusion_b(const InfluenceKernels& kernels, std::size_t end_index, const GreenTable& g_ret,
                   const GreenTable& g_adv) {
    check_tables(kernels, end_index, g_ret, g_adv);
    return first_term(kernels, end_index, g_ret.g) - nested_term(kernels, end_index, g_ret.g, g_adv);
}

double diffusion_c(const InfluenceKernels& kernels, std::size_t end_index, const GreenTable& g_ret,
                   const GreenTable& g_adv) {
    check_tables(kernels, end_index, g_ret, g_adv);
    return first_term(kernels, end_index, g_ret.g_dot) -
           nested_term(kernels, end_index, g_ret.g_dot, g_adv);
}

namespace {

std::vector<double> basis_wronskian(const HomogeneousBasis& b) {
    std::vector<double> w(b.v1.x.size());
    for (std::size_t m = 0; m < w.size(); ++m) w[m] = b.v1.v[m] * b.v2.x[m] - b.v2.v[m] * b.v1.x[m];
    return w;
}

void fill_skipped(std::vector<double>& f, const std::vector<char>& skip) {
    const std::size_t n = f.size();
    for (std::size_t k = 0; k < n; ++k) {
        if (!skip[k]) continue;
        std::size_t lo = k, hi = k;
        while (lo > 0 && skip[lo]) --lo;
        while (hi + 1 < n && skip[hi]) ++hi;
        const bool lo_ok = !skip[lo], hi_ok = !skip[hi];
        if (lo_ok && hi_ok) {
            const double s = static_cast<double>(k - lo) / static_cast<double>(hi - lo);
            f[k] = f[lo] + s * (f[hi] - f[lo]);
        } else if (lo_ok) {
            f[k] = f[lo];
        } else if (hi_ok) {
            f[k] = f[hi];
        }
    }
}

}  // namespace

GreenTable advanced_green_from_basis(const InfluenceKernels& kernels, const HomogeneousBasis& basis) {
    const std::size_t n = kernels.grid.size();
    const auto ni = static_cast<Eigen::Index>(n);
    GreenTable table{kernels.grid, Eigen::MatrixXd::Zero(ni, ni), Eigen::MatrixXd::Zero(ni, ni),
                     Causality::advanced, n - 1};
    const auto w = basis_wronskian(basis);
    const double M = kernels.system.mass;
    for (std::size_t m = 1; m < n; ++m) {
        if (w[m] == 0.0)
            throw DegenerateBoundary("advanced Green function: vanishing Wronskian", kernels.grid.time(m));
        for (std::size_t j = 0; j < m; ++j) {
            const auto r = static_cast<Eigen::Index>(j), c = static_cast<Eigen::Index>(m);
            table.g(r, c) = -(basis.v1.x[j] * basis.v2.x[m] - basis.v2.x[j] * basis.v1.x[m]) / (M * w[m]);
            table.g_dot(r, c) = -(basis.v1.v[j] * basis.v2.x[m] - basis.v2.v[j] * basis.v1.x[m]) / (M * w[m]);
        }
    }
    return table;
}

CoefficientTable coefficient_table(const InfluenceKernels& kernels, const GreenTable& g_ret,
                                   const HomogeneousBasis& basis, const Executor& exec) {
    validate(kernels);
    const TimeGrid& grid = kernels.grid;
    const std::size_t n = grid.size();
    const double M = kernels.system.mass;
    CoefficientTable t{grid, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0),
                       std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), {}};

    // t → t_i⁺ limits: only local kernels survive.
    t.a[0] = kernels.H.local_coefficient;
    t.c[0] = kernels.N.local_coefficient / M;

    const bool nonlocal_h = has_nonlocal_h(kernels);
    const bool any_noise = !kernels.N.is_zero();
    const auto wr = basis_wronskian(basis);
    if (nonlocal_h)
        for (std::size_t m = 1; m < n; ++m)
            if (wr[m] == 0.0) throw DegenerateBoundary("coefficients: vanishing Wronskian", grid.time(m));

    std::vector<char> skip(n, 0);
    exec.parallel_for(n - 1, [&](std::size_t i) {
        const std::size_t k = i + 1;
        if (is_caustic(basis, k)) {
            skip[k] = 1;
            return;
        }
        const double v1k = basis.v1.x[k], v2k = basis.v2.x[k];
        const double d1k = basis.v1.v[k], d2k = basis.v2.v[k];
        double dw = 0.0, a = kernels.H.local_coefficient;
        if (nonlocal_h) {
            // A = ∫H u₁/(2Mu̇₁) and δΩ² = ∫H[u₂ − (u̇₂/u̇₁)u₁]/M written with v1, v2.
            std::vector<double> fa(k + 1), fw(k + 1);
            for (std::size_t l = 0; l <= k; ++l) {
                fa[l] = v2k * basis.v1.x[l] - v1k * basis.v2.x[l];
                fw[l] = d1k * basis.v2.x[l] - d2k * basis.v1.x[l];
            }
            a += 0.5 * h_row_integral(kernels, k, fa) / (M * wr[k]);
            dw = h_row_integral(kernels, k, fw) / (M * wr[k]);
        }
        t.delta_omega_sq[k] = dw;
        t.a[k] = a;
        if (any_noise) {
            t.b[k] = first_term(kernels, k, g_ret.g) - nested_term_separable(kernels, k, g_ret.g, basis, wr);
            t.c[k] = first_term(kernels, k, g_ret.g_dot) -
                     nested_term_separable(kernels, k, g_ret.g_dot, basis, wr);
        }
    });

    for (std::size_t k = 0; k < n; ++k)
        if (skip[k]) t.skipped.push_back(k);
    fill_skipped(t.delta_omega_sq, skip);
    fill_skipped(t.a, skip);
    fill_skipped(t.b, skip);
    fill_skipped(t.c, skip);
    return t;
}

CoefficientTable coefficient_table(const InfluenceKernels& kernels, const Executor& exec) {
    const auto basis = homogeneous_basis(kernels);
    const auto g_ret = build_retarded_green(kernels, exec);
    return coefficient_table(kernels, g_ret, basis, exec);
}

CoefficientSample sample_at(const CoefficientTable& table, double t) {
    const TimeGrid& g = table.grid;
    const double x = std::clamp((t - g.t_start()) / g.dt(), 0.0, static_cast<double>(g.size() - 1));
    auto k = static_cast<std::size_t>(std::floor(x));
    if (k + 1 >= g.size()) k = g.size() - 2;
    const double s = x - static_cast<double>(k);
    auto lerp = [&](const std::vector<double>& f) { return f[k] + s * (f[k + 1] - f[k]); };
    return {lerp(table.delta_omega_sq), lerp(table.a), lerp(table.b), lerp(table.c)};
}

GaussianState moment_rhs(const GaussianState& s, const CoefficientSample& k, const SystemParams& system) {
    const double M = system.mass;
    const double w2 = system.omega_ren * system.omega_ren + k.delta_omega_sq;
    GaussianState d;
    d.mean_x = s.mean_p / M;
    d.mean_p = -M * w2 * s.mean_x - 2.0 * k.a * s.mean_p;
    d.cov_xx = 2.0 * s.cov_xp / M;
    d.cov_xp = s.cov_pp / M - M * w2 * s.cov_xx - 2.0 * k.a * s.cov_xp + k.b;
    d.cov_pp = -2.0 * M * w2 * s.cov_xp - 4.0 * k.a * s.cov_pp + 2.0 * M * k.c;
    return d;
}

namespace {

GaussianState axpy(const GaussianState& s, double h, const GaussianState& d) {
    return {s.mean_x + h * d.mean_x, s.mean_p + h * d.mean_p, s.cov_xx + h * d.cov_xx,
            s.cov_xp + h * d.cov_xp, s.cov_pp + h * d.cov_pp};
}

}  // namespace

std::vector<GaussianState> evolve_gaussian(const GaussianState& initial, const CoefficientTable& table,
                                           const SystemParams& system) {
    validate(initial);
    validate(system);
    const TimeGrid& g = table.grid;
    std::vector<GaussianState> out(g.size());
    out[0] = initial;
    const double h = g.dt();
    auto coeff = [&](std::size_t k) -> CoefficientSample {
        return {table.delta_omega_sq[k], table.a[k], table.b[k], table.c[k]};
    };
    for (std::size_t k = 0; k + 1 < g.size(); ++k) {
        const auto c0 = coeff(k), c1 = coeff(k + 1);
        const CoefficientSample cm{0.5 * (c0.delta_omega_sq + c1.delta_omega_sq), 0.5 * (c0.a + c1.a),
                                   0.5 * (c0.b + c1.b), 0.5 * (c0.c + c1.c)};
        const auto& s = out[k];
        const auto k1 = moment_rhs(s, c0, system);
        const auto k2 = moment_rhs(axpy(s, 0.5 * h, k1), cm, system);
        const auto k3 = moment_rhs(axpy(s, 0.5 * h, k2), cm, system);
        const auto k4 = moment_rhs(axpy(s, h, k3), c1, system);
        GaussianState next = s;
        next.mean_x += h / 6.0 * (k1.mean_x + 2 * k2.mean_x + 2 * k3.mean_x + k4.mean_x);
        next.mean_p += h / 6.0 * (k1.mean_p + 2 * k2.mean_p + 2 * k3.mean_p + k4.mean_p);
        next.cov_xx += h / 6.0 * (k1.cov_xx + 2 * k2.cov_xx + 2 * k3.cov_xx + k4.cov_xx);
        next.cov_xp += h / 6.0 * (k1.cov_xp + 2 * k2.cov_xp + 2 * k3.cov_xp + k4.cov_xp);
        next.cov_pp += h / 6.0 * (k1.cov_pp + 2 * k2.cov_pp + 2 * k3.cov_pp + k4.cov_pp);
        if (!std::isfinite(next.determinant()) || next.determinant() < -1e-8) {
            std::ostringstream msg;
            msg << "evolve_gaussian: covariance lost positivity at t = " << g.time(k + 1);
            throw IntegrationFailure(msg.str(), g.time(k + 1));
        }
        out[k + 1] = next;
    }
    return out;
}

void write_coefficients_csv(std::ostream& os, const CoefficientTable& table) {
    os << "t,delta_omega_sq,a,b,c\n";
    char buf[256];
    for (std::size_t k = 0; k < table.grid.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", table.grid.time(k),
                      table.delta_omega_sq[k], table.a[k], table.b[k], table.c[k]);
        os << buf;
    }
}

}  // namespace qbm
