// coefficients.hpp — time-dependent master-equation coefficients δΩ², A, B, C
// and the Gaussian moment equations they generate.

#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <vector>

#include "qbm/kernels.hpp"
#include "qbm/parallel.hpp"
#include "qbm/volterra.hpp"

namespace qbm {

struct CoefficientTable {
    TimeGrid grid;
    std::vector<double> delta_omega_sq;
    std::vector<double> a;
    std::vector<double> b;
    std::vector<double> c;
    std::vector<std::size_t> skipped;  // caustic indices, filled by interpolation

    bool is_skipped(std::size_t k) const;
};

struct GaussianState {
    double mean_x{0.0};
    double mean_p{0.0};
    double cov_xx{0.0};
    double cov_xp{0.0};
    double cov_pp{0.0};

    double determinant() const { return cov_xx * cov_pp - cov_xp * cov_xp; }
    // Robertson–Schrödinger bound with ħ = 1.
    bool admissible(double slack = 1e-12) const { return determinant() >= 0.25 - slack; }
};

// Minimum-uncertainty ground state of the oscillator (M, Ω).
GaussianState vacuum_state(const SystemParams& system);

// Throws InvalidArgument if the covariance is not positive semi-definite.
void validate(const GaussianState& s);

// Coefficients at one time, ordered (δΩ², A, B, C).
struct CoefficientSample {
    double delta_omega_sq{0.0};
    double a{0.0};
    double b{0.0};
    double c{0.0};
};

// Single-point forms evaluated from a boundary pair.
double frequency_shift(const InfluenceKernels& kernels, std::size_t end_index, const BoundaryPair& pair);
double dissipation_a(const InfluenceKernels& kernels, std::size_t end_index, const BoundaryPair& pair);

// Nested-quadrature diffusion terms; g_adv must cover [t_i, t_end_index].
double diffusion_b(const InfluenceKernels& kernels, std::size_t end_index, const GreenTable& g_ret,
                   const GreenTable& g_adv);
double diffusion_c(const InfluenceKernels& kernels, std::size_t end_index, const GreenTable& g_ret,
                   const GreenTable& g_adv);

// The advanced Green function expressed through the IVP basis. It is the
// same function for every end time, so one table serves all of them.
GreenTable advanced_green_from_basis(const InfluenceKernels& kernels, const HomogeneousBasis& basis);

CoefficientTable coefficient_table(const InfluenceKernels& kernels, const Executor& exec = Executor{});

// Same as above with precomputed retarded Green function and basis.
CoefficientTable coefficient_table(const InfluenceKernels& kernels, const GreenTable& g_ret,
                                   const HomogeneousBasis& basis, const Executor& exec = Executor{});

CoefficientSample sample_at(const CoefficientTable& table, double t);

GaussianState moment_rhs(const GaussianState& s, const CoefficientSample& k, const SystemParams& system);

// RK4 on the moment equations with linear interpolation of the table;
// one state per grid point. Throws IntegrationFailure when the covariance
// determinant drops below −1e-8.
std::vector<GaussianState> evolve_gaussian(const GaussianState& initial, const CoefficientTable& table,
                                           const SystemParams& system);

// CSV columns: t, delta_omega_sq, a, b, c. Rows listed in table.skipped hold
// interpolated values.
void write_coefficients_csv(std::ostream& os, const CoefficientTable& table);

}  // namespace qbm
