// kernels.hpp — spectral densities and the discretized noise/dissipation
// kernels that define an open-system problem on a time grid.

#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qbm/grid.hpp"
#include "qbm/parallel.hpp"

namespace qbm {

struct SystemParams {
    double mass{1.0};
    double omega_ren{1.0};
};

void validate(const SystemParams& p);

enum class SpectralFamily { ohmic_exponential_cutoff, ohmic_hard_cutoff, tabulated };

struct SpectralDensity {
    SpectralFamily family{SpectralFamily::ohmic_exponential_cutoff};
    double mass{1.0};      // ohmic prefactor (2/π)·M·γ
    double coupling{0.0};  // γ
    double cutoff{1.0};    // Λ
    std::vector<std::pair<double, double>> table;  // (ω, I(ω)), tabulated family only

    static SpectralDensity ohmic_exponential(double mass, double gamma, double cutoff);
    static SpectralDensity ohmic_hard(double mass, double gamma, double cutoff);
    static SpectralDensity tabulated_from(std::vector<std::pair<double, double>> table);
};

void validate(const SpectralDensity& sd);

double eval_spectral_density(const SpectralDensity& sd, double omega);

enum class KernelKind { noise, dissipation };
enum class Locality { local, nonlocal };

const char* to_string(KernelKind k);
const char* to_string(Locality l);

// Discretized kernel on a grid.
//
// Noise kernels are symmetric. A local noise of amplitude a stands for
// N(t,t') = 2a·δ(t−t') and is stored as the diagonal 2a/w_k (w_k trapezoid
// weights); `local_coefficient` keeps a so single integrals ending at t_k
// can give the upper-limit delta half its mass.
//
// Dissipation kernels are causal (zero above the diagonal). A local
// dissipation is the operator u ↦ 2Mγ·u̇(t); it has an all-zero matrix and
// `local_coefficient` = γ.
struct KernelMatrix {
    TimeGrid grid;
    Eigen::MatrixXd values;
    KernelKind kind{KernelKind::noise};
    Locality locality{Locality::nonlocal};
    double local_coefficient{0.0};

    bool is_zero() const { return local_coefficient == 0.0 && values.isZero(0.0); }
    double max_abs() const { return values.size() ? values.cwiseAbs().maxCoeff() : 0.0; }
};

struct InfluenceKernels {
    SystemParams system;
    TimeGrid grid;
    KernelMatrix H;
    KernelMatrix N;

    // ∫_{t_i}^{t_k} H(t_k,t') x(t') dt' including the local friction term,
    // where v is the velocity channel of x.
    double memory_term(std::size_t k, const double* x, const double* v) const;

    // ∫_{t_i}^{t_k} N(t_k,t') f(t') dt' with trapezoid weights; the local
    // diagonal at l = k contributes a·f(t_k).
    double noise_row_integral(std::size_t k, const double* f) const;
};

// Throws InvalidArgument when grids disagree or kinds are swapped.
void validate(const InfluenceKernels& k);

struct QuadratureTolerance {
    double absolute{1e-9};
    double relative{1e-7};
};

// N(t_k,t_l) = ∫₀^∞ I(ω) coth(ω/2T) cos(ω(t_k−t_l)) dω; T = 0 uses coth → 1.
KernelMatrix build_noise_kernel(const SpectralDensity& sd, double temperature, const TimeGrid& grid,
                                const Executor& exec = Executor{},
                                QuadratureTolerance tol = {});

// H(t_k,t_l) = −2θ(t_k−t_l) ∫₀^∞ I(ω) sin(ω(t_k−t_l)) dω, diagonal from s → 0⁺.
KernelMatrix build_dissipation_kernel(const SpectralDensity& sd, const TimeGrid& grid,
                                      const Executor& exec = Executor{},
                                      QuadratureTolerance tol = {});

// Single-lag values, exposed for tests and for building custom kernels.
double noise_kernel_value(const SpectralDensity& sd, double temperature, double lag,
                          QuadratureTolerance tol = {});
double dissipation_kernel_value(const SpectralDensity& sd, double lag, QuadratureTolerance tol = {});

KernelMatrix zero_kernel(const TimeGrid& grid, KernelKind kind);
KernelMatrix local_noise(const TimeGrid& grid, double amplitude);
KernelMatrix local_dissipation(const TimeGrid& grid, double gamma);

// Returns N + local noise of the given amplitude (the locality tag is kept).
KernelMatrix add_local_noise(const KernelMatrix& noise, double amplitude);

enum class Preset { free, caldeira_leggett_highT, drude_nonlocal };

struct PresetParams {
    SystemParams system;
    double gamma{0.0};
    double temperature{0.0};
    double cutoff{1.0};
};

Preset parse_preset(const std::string& name);
const char* to_string(Preset p);

InfluenceKernels preset_kernels(Preset preset, const PresetParams& params, const TimeGrid& grid,
                                const Executor& exec = Executor{});

// Plain-text matrix format: a header line "n_points t_start t_end kind
// [extra tokens]" followed by n_points rows of 17-significant-digit values.
void write_kernel(std::ostream& os, const KernelMatrix& k);
KernelMatrix read_kernel(std::istream& is);

// Writes one matrix row-major with the same number formatting.
void write_matrix_rows(std::ostream& os, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix_rows(std::istream& is, std::size_t n);

}  // namespace qbm
