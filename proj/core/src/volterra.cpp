// volterra.cpp — trapezoid Volterra stepping and Green tables

#include "qbm/volterra.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>

#include "qbm/errors.hpp"

namespace qbm {

const char* to_string(Causality c) { return c == Causality::retarded ? "retarded" : "advanced"; }

namespace {

// Nonlocal part of the memory integral, restricted to l >= first (x vanishes
// before `first`).
double nonlocal_memory(const InfluenceKernels& kernels, std::size_t k, const std::vector<double>& x,
                       std::size_t first) {
    if (kernels.H.locality != Locality::nonlocal || k <= first) return 0.0;
    const auto row = static_cast<Eigen::Index>(k);
    const auto& H = kernels.H.values;
    const double w_first = first == 0 ? 0.5 : 1.0;
    double s = w_first * H(row, static_cast<Eigen::Index>(first)) * x[first] + 0.5 * H(row, row) * x[k];
    for (std::size_t l = first + 1; l < k; ++l) s += H(row, static_cast<Eigen::Index>(l)) * x[l];
    return s * kernels.grid.dt();
}

}  // namespace

Trajectory integrate_forward(const InfluenceKernels& kernels, std::span<const double> source,
                             double x0, double v0, std::size_t first) {
    const TimeGrid& grid = kernels.grid;
    const std::size_t n = grid.size();
    if (!source.empty() && source.size() != n)
        throw InvalidArgument("integrator: source length " + std::to_string(source.size()) +
                              " does not match grid size " + std::to_string(n));
    if (first >= n) throw InvalidArgument("integrator: start index outside the grid");

    const double M = kernels.system.mass;
    const double w2 = kernels.system.omega_ren * kernels.system.omega_ren;
    const double gamma = kernels.H.local_coefficient;
    const double dt = grid.dt();
    auto xi = [&](std::size_t k) { return source.empty() ? 0.0 : source[k]; };

    Trajectory tr{grid, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
    auto& x = tr.x;
    auto& v = tr.v;
    x[first] = x0;
    v[first] = v0;
    double acc = (xi(first) - M * w2 * x0 - nonlocal_memory(kernels, first, x, first)) / M -
                 2.0 * gamma * v0;
    for (std::size_t k = first; k + 1 < n; ++k) {
        x[k + 1] = x[k] + dt * v[k] + 0.5 * dt * dt * acc;
        const double force =
            (xi(k + 1) - M * w2 * x[k + 1] - nonlocal_memory(kernels, k + 1, x, first)) / M;
        v[k + 1] = (v[k] + 0.5 * dt * (acc + force)) / (1.0 + gamma * dt);
        acc = force - 2.0 * gamma * v[k + 1];
    }
    return tr;
}

Trajectory solve_homogeneous_ivp(const InfluenceKernels& kernels, double x0, double v0) {
    return integrate_forward(kernels, {}, x0, v0);
}

Trajectory solve_inhomogeneous(const InfluenceKernels& kernels, std::span<const double> source,
                               double x0, double v0) {
    if (source.size() != kernels.grid.size())
        throw InvalidArgument("solve_inhomogeneous: source length mismatch");
    return integrate_forward(kernels, source, x0, v0);
}

Trajectory propagate_x0(const InfluenceKernels& kernels, double x_i, double p_i) {
    return solve_homogeneous_ivp(kernels, x_i, p_i / kernels.system.mass);
}

GreenTable build_retarded_green(const InfluenceKernels& kernels, const Executor& exec) {
    validate(kernels);
    const std::size_t n = kernels.grid.size();
    const auto ni = static_cast<Eigen::Index>(n);
    GreenTable table{kernels.grid, Eigen::MatrixXd::Zero(ni, ni), Eigen::MatrixXd::Zero(ni, ni),
                     Causality::retarded, 0};
    const double slope = 1.0 / kernels.system.mass;
    exec.parallel_for(n, [&](std::size_t l) {
        const auto col = integrate_forward(kernels, {}, 0.0, slope, l);
        const auto li = static_cast<Eigen::Index>(l);
        for (std::size_t k = l + 1; k < n; ++k) table.g(static_cast<Eigen::Index>(k), li) = col.x[k];
        for (std::size_t k = l; k < n; ++k) table.g_dot(static_cast<Eigen::Index>(k), li) = col.v[k];
    });
    return table;
}

HomogeneousBasis homogeneous_basis(const InfluenceKernels& kernels) {
    validate(kernels);
    return {solve_homogeneous_ivp(kernels, 1.0, 0.0), solve_homogeneous_ivp(kernels, 0.0, 1.0)};
}

GreenTable retarded_green_from_basis(const InfluenceKernels& kernels, const HomogeneousBasis& b) {
    const std::size_t n = kernels.grid.size();
    const auto ni = static_cast<Eigen::Index>(n);
    GreenTable table{kernels.grid, Eigen::MatrixXd::Zero(ni, ni), Eigen::MatrixXd::Zero(ni, ni),
                     Causality::retarded, 0};
    const double M = kernels.system.mass;
    for (std::size_t l = 0; l < n; ++l) {
        const double wr = b.v1.v[l] * b.v2.x[l] - b.v2.v[l] * b.v1.x[l];
        for (std::size_t k = l; k < n; ++k) {
            const auto r = static_cast<Eigen::Index>(k);
            const auto c = static_cast<Eigen::Index>(l);
            if (k > l) table.g(r, c) = (b.v1.x[k] * b.v2.x[l] - b.v2.x[k] * b.v1.x[l]) / (M * wr);
            table.g_dot(r, c) = (b.v1.v[k] * b.v2.x[l] - b.v2.v[k] * b.v1.x[l]) / (M * wr);
        }
    }
    return table;
}

double caustic_tolerance(const TimeGrid& grid) {
    return std::max(1e-8, 10.0 * grid.dt() * grid.dt());
}

bool is_caustic(const HomogeneousBasis& basis, std::size_t end_index) {
    const auto& v2 = basis.v2.x;
    double scale = 0.0;
    for (std::size_t j = 0; j <= end_index; ++j) scale = std::max(scale, std::abs(v2[j]));
    return !(std::abs(v2[end_index]) > caustic_tolerance(basis.v2.grid) * scale);
}

BoundaryPair boundary_solutions(const HomogeneousBasis& basis, std::size_t end_index) {
    const TimeGrid& grid = basis.v1.grid;
    if (end_index == 0 || end_index >= grid.size())
        throw InvalidArgument("boundary_solutions: end index must lie in (0, n_points)");
    if (is_caustic(basis, end_index)) {
        std::ostringstream msg;
        msg << "boundary_solutions: homogeneous solutions cannot meet the boundary data at t = "
            << std::setprecision(10) << grid.time(end_index);
        throw DegenerateBoundary(msg.str(), grid.time(end_index));
    }
    const double v1k = basis.v1.x[end_index];
    const double v2k = basis.v2.x[end_index];

    // [[v1(t_i), v2(t_i)], [v1(t), v2(t)]] = [[1, 0], [v1k, v2k]]
    Eigen::Matrix2d system;
    system << 1.0, 0.0, v1k, v2k;
    Eigen::JacobiSVD<Eigen::Matrix2d> svd(system);
    const auto sv = svd.singularValues();

    BoundaryPair pair;
    pair.end_index = end_index;
    pair.condition_number = sv(0) / sv(1);
    const double beta = -v1k / v2k;
    const std::size_t n = grid.size();
    pair.u1 = {grid, std::vector<double>(n), std::vector<double>(n)};
    pair.u2 = {grid, std::vector<double>(n), std::vector<double>(n)};
    for (std::size_t j = 0; j < n; ++j) {
        pair.u1.x[j] = basis.v1.x[j] + beta * basis.v2.x[j];
        pair.u1.v[j] = basis.v1.v[j] + beta * basis.v2.v[j];
        pair.u2.x[j] = basis.v2.x[j] / v2k;
        pair.u2.v[j] = basis.v2.v[j] / v2k;
    }
    return pair;
}

BoundaryPair boundary_solutions(const InfluenceKernels& kernels, std::size_t end_index) {
    return boundary_solutions(homogeneous_basis(kernels), end_index);
}

GreenTable build_advanced_green(const InfluenceKernels& kernels, const BoundaryPair& pair) {
    const std::size_t n = kernels.grid.size();
    const auto ni = static_cast<Eigen::Index>(n);
    GreenTable table{kernels.grid, Eigen::MatrixXd::Zero(ni, ni), Eigen::MatrixXd::Zero(ni, ni),
                     Causality::advanced, pair.end_index};
    const double M = kernels.system.mass;
    const auto& u1 = pair.u1;
    const auto& u2 = pair.u2;
    for (std::size_t m = 1; m <= pair.end_index; ++m) {
        const double wr = u1.v[m] * u2.x[m] - u2.v[m] * u1.x[m];
        if (wr == 0.0)
            throw DegenerateBoundary("advanced Green function: vanishing Wronskian",
                                     kernels.grid.time(m));
        const auto c = static_cast<Eigen::Index>(m);
        for (std::size_t j = 0; j < m; ++j) {
            const auto r = static_cast<Eigen::Index>(j);
            table.g(r, c) = -(u1.x[j] * u2.x[m] - u2.x[j] * u1.x[m]) / (M * wr);
            table.g_dot(r, c) = -(u1.v[j] * u2.x[m] - u2.v[j] * u1.x[m]) / (M * wr);
        }
    }
    return table;
}

GreenTable build_advanced_green(const InfluenceKernels& kernels, std::size_t end_index) {
    return build_advanced_green(kernels, boundary_solutions(kernels, end_index));
}

Trajectory compose_with_green(const Trajectory& homogeneous, const GreenTable& green,
                              std::span<const double> source) {
    const TimeGrid& grid = homogeneous.grid;
    const std::size_t n = grid.size();
    if (source.size() != n) throw InvalidArgument("compose_with_green: source length mismatch");
    Trajectory out = homogeneous;
    for (std::size_t k = 0; k < n; ++k) {
        const auto r = static_cast<Eigen::Index>(k);
        double sx = 0.0, sv = 0.0;
        for (std::size_t l = 0; l <= k; ++l) {
            const double w = grid.weight_upto(l, k) * source[l];
            sx += w * green.g(r, static_cast<Eigen::Index>(l));
            sv += w * green.g_dot(r, static_cast<Eigen::Index>(l));
        }
        out.x[k] += sx;
        out.v[k] += sv;
    }
    return out;
}

void write_green(std::ostream& os, const GreenTable& g) {
    os << std::setprecision(17) << g.grid.size() << ' ' << g.grid.t_start() << ' ' << g.grid.t_end()
       << " green " << to_string(g.causality) << ' ' << g.end_index << '\n';
    write_matrix_rows(os, g.g);
}

}  // namespace qbm
