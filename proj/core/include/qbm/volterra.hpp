// volterra.hpp — forward solver for M(ẍ + Ω²x) + ∫H x = ξ, retarded and
// advanced Green functions, and the boundary-value homogeneous solutions.

#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "qbm/kernels.hpp"
#include "qbm/parallel.hpp"

namespace qbm {

struct Trajectory {
    TimeGrid grid;
    std::vector<double> x;
    std::vector<double> v;
};

enum class Causality { retarded, advanced };

const char* to_string(Causality c);

// g(k,l) = G(t_k,t_l); g_dot(k,l) = ∂G(t,t_l)/∂t at t = t_k.
struct GreenTable {
    TimeGrid grid;
    Eigen::MatrixXd g;
    Eigen::MatrixXd g_dot;
    Causality causality{Causality::retarded};
    std::size_t end_index{0};  // advanced tables only
};

// Forward velocity-Verlet integration with trapezoidal memory. The local
// friction term is treated implicitly. `first` is the index where the
// initial data (x0, v0) is imposed; earlier entries stay zero.
Trajectory integrate_forward(const InfluenceKernels& kernels, std::span<const double> source,
                             double x0, double v0, std::size_t first = 0);

Trajectory solve_homogeneous_ivp(const InfluenceKernels& kernels, double x0, double v0);

// Throws InvalidArgument if source.size() != n_points.
Trajectory solve_inhomogeneous(const InfluenceKernels& kernels, std::span<const double> source,
                               double x0, double v0);

// X₀(t) with X₀(t_i) = x_i, MẊ₀(t_i) = p_i.
Trajectory propagate_x0(const InfluenceKernels& kernels, double x_i, double p_i);

// Column l is the forward solution started at t_l with G = 0, ∂ₜG = 1/M.
GreenTable build_retarded_green(const InfluenceKernels& kernels, const Executor& exec = Executor{});

// The IVP basis v1 = (1, 0), v2 = (0, 1) from t_i.
struct HomogeneousBasis {
    Trajectory v1;
    Trajectory v2;
};

HomogeneousBasis homogeneous_basis(const InfluenceKernels& kernels);

// G_ret from the two-solution formula (exact for local dynamics only); used
// as a cross-check against the forward construction.
GreenTable retarded_green_from_basis(const InfluenceKernels& kernels, const HomogeneousBasis& basis);

struct BoundaryPair {
    Trajectory u1;  // u1(t_i) = 1, u1(t) = 0
    Trajectory u2;  // u2(t_i) = 0, u2(t) = 1
    std::size_t end_index{0};
    double condition_number{0.0};
};

// Throws DegenerateBoundary when v2(t_end) vanishes to within
// caustic_tolerance (the 2×2 boundary system is singular there).
BoundaryPair boundary_solutions(const InfluenceKernels& kernels, std::size_t end_index);
BoundaryPair boundary_solutions(const HomogeneousBasis& basis, std::size_t end_index);

bool is_caustic(const HomogeneousBasis& basis, std::size_t end_index);
double caustic_tolerance(const TimeGrid& grid);

// G̃_adv(t',t'') on [t_i, t_end] from a boundary pair; zero for t' >= t''.
GreenTable build_advanced_green(const InfluenceKernels& kernels, std::size_t end_index);
GreenTable build_advanced_green(const InfluenceKernels& kernels, const BoundaryPair& pair);

// X₀(t_k) + Σ_l w_l G(t_k,t_l) ξ(t_l), the Green-function route to a path.
Trajectory compose_with_green(const Trajectory& homogeneous, const GreenTable& green,
                              std::span<const double> source);

void write_green(std::ostream& os, const GreenTable& g);

}  // namespace qbm
