// ctp.cpp — generating functional and correlator routes

#include "qbm/ctp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <sstream>

#include "qbm/errors.hpp"

namespace qbm {

const char* to_string(CorrelatorRoute r) {
    switch (r) {
        case CorrelatorRoute::deterministic_green: return "deterministic";
        case CorrelatorRoute::ctp_derivative: return "ctp_derivative";
        case CorrelatorRoute::stochastic_mc: return "stochastic_mc";
        case CorrelatorRoute::regression: return "regression";
    }
    return "?";
}

namespace {

const GaussianState& gaussian_of(const InitialDistribution& dist) {
    if (dist.kind != InitialDistribution::Kind::gaussian || !dist.gaussian)
        throw UnsupportedDistribution(
            "closed-form correlators need Gaussian initial data; use the Monte Carlo route");
    return *dist.gaussian;
}

// Everything the closed forms need, computed once per public call.
struct Model {
    const InfluenceKernels& kernels;
    const GreenTable& g_ret;
    GaussianState init;
    HomogeneousBasis basis;
    std::vector<double> w;

    Model(const InfluenceKernels& k, const InitialDistribution& d, const GreenTable& g)
        : kernels(k), g_ret(g), init(gaussian_of(d)), basis(homogeneous_basis(k)), w(k.grid.weights()) {
        if (!(g.grid == k.grid) || g.causality != Causality::retarded)
            throw InvalidArgument("correlators: expected a retarded Green table on the kernel grid");
    }

    double mean(std::size_t k) const {
        return init.mean_x * basis.v1.x[k] + init.mean_p / kernels.system.mass * basis.v2.x[k];
    }

    // ⟨X₀(t_a)X₀(t_b)⟩ − mean·mean
    double initial_cov(std::size_t a, std::size_t b) const {
        const double M = kernels.system.mass;
        const double xa = basis.v1.x[a], pa = basis.v2.x[a] / M;
        const double xb = basis.v1.x[b], pb = basis.v2.x[b] / M;
        return xa * xb * init.cov_xx + (xa * pb + pa * xb) * init.cov_xp + pa * pb * init.cov_pp;
    }

    double noise_cov(std::size_t a, std::size_t b) const {
        if (kernels.N.is_zero() || a == 0 || b == 0) return 0.0;
        const auto na = static_cast<Eigen::Index>(a + 1), nb = static_cast<Eigen::Index>(b + 1);
        Eigen::VectorXd ga(na), gb(nb);
        for (Eigen::Index l = 0; l < na; ++l)
            ga(l) = kernels.grid.weight_upto(static_cast<std::size_t>(l), a) *
                    g_ret.g(static_cast<Eigen::Index>(a), l);
        for (Eigen::Index l = 0; l < nb; ++l)
            gb(l) = kernels.grid.weight_upto(static_cast<std::size_t>(l), b) *
                    g_ret.g(static_cast<Eigen::Index>(b), l);
        return ga.dot(kernels.N.values.topLeftCorner(na, nb) * gb);
    }

    double cov(std::size_t a, std::size_t b) const { return initial_cov(a, b) + noise_cov(a, b); }

    std::complex<double> z(const std::vector<double>& j_sigma, const std::vector<double>& j_delta) const {
        const std::size_t n = kernels.grid.size();
        const double M = kernels.system.mass;
        double alpha = 0.0, beta = 0.0;
        Eigen::VectorXd wj(static_cast<Eigen::Index>(n));
        for (std::size_t k = 0; k < n; ++k) {
            const double c = w[k] * j_delta[k];
            alpha += c * basis.v1.x[k];
            beta += c * basis.v2.x[k] / M;
            wj(static_cast<Eigen::Index>(k)) = c;
        }
        // Initial-condition factor: X₀ = x·v1 + (p/M)·v2.
        const double var0 = alpha * alpha * init.cov_xx + 2.0 * alpha * beta * init.cov_xp +
                            beta * beta * init.cov_pp;
        const double phase0 = alpha * init.mean_x + beta * init.mean_p;

        // K(t_l) = Σ_k w_k J_Δ(t_k) G(t_k,t_l)
        const Eigen::VectorXd kvec = g_ret.g.transpose() * wj;
        double var_noise = 0.0;
        if (!kernels.N.is_zero()) {
            Eigen::VectorXd wk(static_cast<Eigen::Index>(n));
            for (std::size_t l = 0; l < n; ++l)
                wk(static_cast<Eigen::Index>(l)) = w[l] * kvec(static_cast<Eigen::Index>(l));
            var_noise = wk.dot(kernels.N.values * wk);
        }
        double phase1 = 0.0;
        for (std::size_t l = 0; l < n; ++l) phase1 += w[l] * kvec(static_cast<Eigen::Index>(l)) * j_sigma[l];

        const double modulus = std::exp(-0.5 * (var0 + var_noise));
        return std::polar(modulus, -(phase0 + phase1));
    }
};

void check_indices(const InfluenceKernels& k, const std::vector<std::size_t>& idx) {
    for (auto i : idx)
        if (i >= k.grid.size()) throw InvalidArgument("correlator: time index out of range");
}

}  // namespace

std::complex<double> eval_ctp(const InfluenceKernels& kernels, const InitialDistribution& dist,
                              const CTPSources& src, const GreenTable& g_ret) {
    const std::size_t n = kernels.grid.size();
    if (src.j_sigma.size() != n || src.j_delta.size() != n)
        throw InvalidArgument("eval_ctp: source length does not match the grid");
    Model m(kernels, dist, g_ret);
    return m.z(src.j_sigma, src.j_delta);
}

CorrelatorResult symmetrized_two_point(const InfluenceKernels& kernels, const InitialDistribution& dist,
                                       const GreenTable& g_ret, std::size_t t1_index,
                                       std::size_t t2_index) {
    check_indices(kernels, {t1_index, t2_index});
    Model m(kernels, dist, g_ret);
    const double v = m.cov(t1_index, t2_index) + m.mean(t1_index) * m.mean(t2_index);
    return {v, 0.0, CorrelatorRoute::deterministic_green};
}

CorrelatorResult ctp_derivative_correlator(const InfluenceKernels& kernels,
                                           const InitialDistribution& dist, const GreenTable& g_ret,
                                           const std::vector<std::size_t>& s_indices,
                                           const DerivativeOptions& opt) {
    const std::size_t s = s_indices.size();
    if (s < 1 || s > 4) throw InvalidArgument("ctp_derivative_correlator: need 1 to 4 time indices");
    check_indices(kernels, s_indices);
    Model m(kernels, dist, g_ret);
    const std::size_t n = kernels.grid.size();

    double spread = 0.0;
    for (auto k : s_indices) spread = std::max(spread, m.cov(k, k) + m.mean(k) * m.mean(k));
    const double h0 = opt.step_scale / std::sqrt(std::max(spread, 1e-300));

    const std::vector<double> zero(n, 0.0);
    // Mixed central difference of y ↦ ⟨exp(−i Σ y_j X(t_j))⟩ at y = 0.
    auto difference = [&](double h) {
        std::complex<double> acc = 0.0;
        for (unsigned mask = 0; mask < (1u << s); ++mask) {
            std::vector<double> jd(n, 0.0);
            double sign = 1.0;
            for (std::size_t j = 0; j < s; ++j) {
                const double sj = (mask >> j) & 1u ? -1.0 : 1.0;
                sign *= sj;
                jd[s_indices[j]] += sj * h / m.w[s_indices[j]];
            }
            acc += sign * m.z(zero, jd);
        }
        return acc / std::pow(2.0 * h, static_cast<double>(s));
    };
    const auto d1 = difference(h0), d2 = difference(0.5 * h0), d4 = difference(0.25 * h0);
    const auto r1 = (4.0 * d2 - d1) / 3.0;
    const auto r2 = (4.0 * d4 - d2) / 3.0;

    std::complex<double> is = 1.0;
    for (std::size_t j = 0; j < s; ++j) is *= std::complex<double>(0.0, 1.0);
    const std::complex<double> value = is * r2;
    const double scale = std::pow(spread, 0.5 * static_cast<double>(s));
    const double disagreement = std::abs(r1 - r2);
    if (disagreement > opt.tolerance * std::max(std::abs(r2), scale)) {
        std::ostringstream msg;
        msg << "ctp_derivative_correlator: Richardson estimates disagree by " << disagreement;
        throw NumericalFailure(msg.str(), disagreement);
    }
    return {value.real(), disagreement, CorrelatorRoute::ctp_derivative};
}

namespace {

// Σ over set partitions of `idx` into singletons (means) and pairs (covariances).
double wick(const Model& m, std::vector<std::size_t> idx) {
    if (idx.empty()) return 1.0;
    const std::size_t first = idx.front();
    std::vector<std::size_t> rest(idx.begin() + 1, idx.end());
    double total = m.mean(first) == 0.0 ? 0.0 : m.mean(first) * wick(m, rest);
    for (std::size_t j = 0; j < rest.size(); ++j) {
        std::vector<std::size_t> remaining;
        for (std::size_t q = 0; q < rest.size(); ++q)
            if (q != j) remaining.push_back(rest[q]);
        total += m.cov(first, rest[j]) * wick(m, remaining);
    }
    return total;
}

}  // namespace

CorrelatorResult n_point_symmetrized(const InfluenceKernels& kernels, const InitialDistribution& dist,
                                     const GreenTable& g_ret, const std::vector<std::size_t>& indices) {
    check_indices(kernels, indices);
    Model m(kernels, dist, g_ret);
    bool zero_mean = true;
    for (auto k : indices) zero_mean = zero_mean && m.mean(k) == 0.0;
    if (zero_mean && indices.size() % 2 == 1) return {0.0, 0.0, CorrelatorRoute::deterministic_green};
    return {wick(m, indices), 0.0, CorrelatorRoute::deterministic_green};
}

MarkovGapResult markov_gap(const InfluenceKernels& kernels, const InitialDistribution& dist,
                           const CoefficientTable& table, const GreenTable& g_ret,
                           std::size_t t1_index, std::size_t t2_index) {
    if (!(t2_index > t1_index)) throw InvalidArgument("markov_gap: need t2 > t1");
    check_indices(kernels, {t1_index, t2_index});
    if (!(table.grid == kernels.grid)) throw InvalidArgument("markov_gap: table grid mismatch");
    const auto& init = gaussian_of(dist);
    MarkovGapResult r;
    r.exact = symmetrized_two_point(kernels, dist, g_ret, t1_index, t2_index).value;

    const SystemParams& sys = kernels.system;
    const auto states = evolve_gaussian(init, table, sys);
    const auto& s1 = states[t1_index];
    double y0 = s1.cov_xx + s1.mean_x * s1.mean_x;  // ⟨X(t)X(t₁)⟩
    double y1 = s1.cov_xp + s1.mean_x * s1.mean_p;  // ⟨P(t)X(t₁)⟩, symmetrized at t = t₁
    const double M = sys.mass;
    const double w2 = sys.omega_ren * sys.omega_ren;
    auto rhs = [&](double ca, double cw, double a, double b, double& da, double& db) {
        da = b / M;
        db = -M * (w2 + cw) * a - 2.0 * ca * b;
    };
    const double h = kernels.grid.dt();
    for (std::size_t k = t1_index; k < t2_index; ++k) {
        const double a0 = table.a[k], a1 = table.a[k + 1], am = 0.5 * (a0 + a1);
        const double w0 = table.delta_omega_sq[k], wq = table.delta_omega_sq[k + 1], wm = 0.5 * (w0 + wq);
        double k1a, k1b, k2a, k2b, k3a, k3b, k4a, k4b;
        rhs(a0, w0, y0, y1, k1a, k1b);
        rhs(am, wm, y0 + 0.5 * h * k1a, y1 + 0.5 * h * k1b, k2a, k2b);
        rhs(am, wm, y0 + 0.5 * h * k2a, y1 + 0.5 * h * k2b, k3a, k3b);
        rhs(a1, wq, y0 + h * k3a, y1 + h * k3b, k4a, k4b);
        y0 += h / 6.0 * (k1a + 2 * k2a + 2 * k3a + k4a);
        y1 += h / 6.0 * (k1b + 2 * k2b + 2 * k3b + k4b);
    }
    r.regression = y0;
    r.gap = std::abs(r.exact - r.regression);
    return r;
}

void write_correlator_scan_csv(std::ostream& os, const std::vector<CorrelatorScanRow>& rows) {
    os << "t1,t2,exact,regression,gap,std_err\n";
    char buf[200];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.t1, r.t2, r.exact,
                      r.regression, r.gap, r.std_err);
        os << buf;
    }
}

}  // namespace qbm
