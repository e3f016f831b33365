// langevin.hpp — colored Gaussian noise, Langevin ensembles, and Monte Carlo
// estimators of the reduced Wigner function and stochastic correlators.

#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qbm/coefficients.hpp"
#include "qbm/kernels.hpp"
#include "qbm/parallel.hpp"
#include "qbm/phase_grid.hpp"
#include "qbm/rng.hpp"
#include "qbm/volterra.hpp"

namespace qbm {

// Lower factor L of W^{1/2} N W^{1/2} (W the trapezoid weights).
struct NoiseFactor {
    TimeGrid grid;
    Eigen::MatrixXd lower;
    double jitter_used{0.0};
    bool diagonal{false};
    bool zero{false};
};

// Cholesky with diagonal jitter escalating from 1e-12 to 1e-8 of max|N|.
// Throws IndefiniteCovariance if the last attempt still fails.
NoiseFactor factor_noise(const KernelMatrix& noise);

// ζ = L·z with z standard normal; ζ_k has variance N_kk·w_k.
std::vector<double> sample_noise(const NoiseFactor& factor, RngStream& rng);

// ξ(t_k) = ζ_k / √w_k, the pointwise source for the Langevin equation.
std::vector<double> source_from_weighted(const NoiseFactor& factor, const std::vector<double>& zeta);

// Cell-valued Wigner table, row-major in (x, p): values[i*np + j].
struct WignerTable {
    PhaseGrid grid;
    std::vector<double> values;

    double at(std::size_t i, std::size_t j) const { return values[i * grid.np + j]; }
};

struct InitialDistribution {
    enum class Kind { gaussian, tabulated_wigner };
    Kind kind{Kind::gaussian};
    std::optional<GaussianState> gaussian;
    std::optional<WignerTable> table;

    static InitialDistribution from_gaussian(const GaussianState& s);
    static InitialDistribution from_table(WignerTable t);
};

void validate(const InitialDistribution& d);

struct InitialSample {
    double x{0.0};
    double p{0.0};
    double weight{1.0};
};

// Gaussian kind: weight 1. Tabulated kind: drawn from |W|, weight
// sign(W)·∫|W|.
InitialSample sample_initial(const InitialDistribution& dist, RngStream& rng);

Trajectory simulate_trajectory(const InfluenceKernels& kernels, const std::vector<double>& source,
                               double x_i, double p_i);

struct TrajectoryEnsemble {
    TimeGrid grid;
    double mass{1.0};
    std::size_t count{0};
    Eigen::MatrixXd paths_x;  // count × n_points
    Eigen::MatrixXd paths_v;
    std::vector<double> weights;
    std::uint64_t seed{0};
    std::string kernels_digest;
    std::optional<Eigen::MatrixXd> noise;  // ξ per trajectory, when stored
};

struct EnsembleOptions {
    bool store_noise{false};
    Executor executor{};
};

// SHA-256 over system parameters, grid, and both kernel matrices.
std::string kernels_digest(const InfluenceKernels& kernels);

// Trajectory j draws its initial point and noise from substreams keyed by
// (seed, j), so the result does not depend on the executor.
TrajectoryEnsemble run_ensemble(const InfluenceKernels& kernels, const InitialDistribution& dist,
                                std::size_t count, std::uint64_t seed, const EnsembleOptions& opt = {});

// Also accepts a precomputed factor.
TrajectoryEnsemble run_ensemble(const InfluenceKernels& kernels, const NoiseFactor& factor,
                                const InitialDistribution& dist, std::size_t count,
                                std::uint64_t seed, const EnsembleOptions& opt = {});

struct WignerEstimate {
    PhaseGrid grid;
    Eigen::MatrixXd values;   // nx × np
    Eigen::MatrixXd std_err;
    std::size_t t_index{0};
    std::size_t samples{0};
    double integral_std_err{0.0};  // standard error of integral()

    double integral() const { return values.sum() * grid.cell_area(); }
};

WignerEstimate estimate_wigner(const TrajectoryEnsemble& ens, std::size_t t_index, const PhaseGrid& grid);

struct MomentEstimate {
    GaussianState value;
    GaussianState std_err;
    std::size_t count{0};
};

// Weighted moments of (X, MẊ) with jackknife errors. Throws
// InsufficientSamples below 10 trajectories.
MomentEstimate estimate_moments(const TrajectoryEnsemble& ens, std::size_t t_index);

struct Estimate {
    double value{0.0};
    double std_err{0.0};
};

// ⟨⟨X(t_1)…X(t_s)⟩⟩ over the ensemble with its standard error.
Estimate stochastic_correlator(const TrajectoryEnsemble& ens, const std::vector<std::size_t>& indices);
Estimate stochastic_correlator(const TrajectoryEnsemble& ens, std::size_t t1_index, std::size_t t2_index);

struct ComplexEstimate {
    std::complex<double> value;
    double std_err{0.0};  // of each of the real and imaginary parts (max)
};

// ⟨⟨exp(−i Σ_l w_l K_l X(t_l))⟩⟩ with trapezoid weights.
ComplexEstimate characteristic_functional(const TrajectoryEnsemble& ens, const std::vector<double>& k);

struct NovikovResult {
    double lhs{0.0};
    double rhs{0.0};
    double combined_err{0.0};
};

// lhs = ⟨ξ(t_1)X(t_2)⟩, rhs = ∫N(t_1,t'')G_ret(t_2,t'')dt''. Requires the
// ensemble to carry its noise (InvalidState otherwise).
NovikovResult novikov_check(const InfluenceKernels& kernels, const TrajectoryEnsemble& ens,
                            const GreenTable& g_ret, std::size_t t1_index, std::size_t t2_index);

// Binary little-endian doubles (paths_x, paths_v, weights) plus a JSON
// metadata header at `<stem>.json`.
void write_ensemble(const std::string& stem, const TrajectoryEnsemble& ens);

// CSV columns: X, p, value, std_err.
void write_wigner_csv(std::ostream& os, const WignerEstimate& w);

}  // namespace qbm
