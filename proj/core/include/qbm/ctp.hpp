// ctp.hpp — closed-time-path generating functional, symmetrized
// correlators, and the Markov-gap comparison against quantum regression.

#pragma once

#include <complex>
#include <cstddef>
#include <iosfwd>
#include <vector>

#include "qbm/coefficients.hpp"
#include "qbm/langevin.hpp"
#include "qbm/volterra.hpp"

namespace qbm {

struct CTPSources {
    std::vector<double> j_sigma;
    std::vector<double> j_delta;
};

enum class CorrelatorRoute { deterministic_green, ctp_derivative, stochastic_mc, regression };

const char* to_string(CorrelatorRoute r);

struct CorrelatorResult {
    double value{0.0};
    double std_err{0.0};
    CorrelatorRoute route{CorrelatorRoute::deterministic_green};
};

// Z[J_Σ, J_Δ] = ⟨e^{−iJ_Δ·X₀}⟩ · exp(−½ KNKᵀ) · exp(−iK·J_Σ), K = J_Δ·G_ret.
// Throws UnsupportedDistribution for non-Gaussian initial data.
std::complex<double> eval_ctp(const InfluenceKernels& kernels, const InitialDistribution& dist,
                              const CTPSources& src, const GreenTable& g_ret);

// ⟨X₀(t₁)X₀(t₂)⟩ + (G_ret·N·G_retᵀ)(t₁,t₂).
CorrelatorResult symmetrized_two_point(const InfluenceKernels& kernels, const InitialDistribution& dist,
                                       const GreenTable& g_ret, std::size_t t1_index,
                                       std::size_t t2_index);

struct DerivativeOptions {
    double step_scale{0.02};   // spike height relative to the largest position spread
    double tolerance{1e-6};    // Richardson disagreement, relative
};

// i^s ∂^s Z[0,K]/∂K(t_1)…∂K(t_s) by central spike differences with
// Richardson extrapolation over (h, h/2, h/4). 1 ≤ s ≤ 4.
CorrelatorResult ctp_derivative_correlator(const InfluenceKernels& kernels,
                                           const InitialDistribution& dist, const GreenTable& g_ret,
                                           const std::vector<std::size_t>& s_indices,
                                           const DerivativeOptions& opt = {});

// Wick expansion with the evolved mean and the symmetrized two-point function.
CorrelatorResult n_point_symmetrized(const InfluenceKernels& kernels, const InitialDistribution& dist,
                                     const GreenTable& g_ret, const std::vector<std::size_t>& indices);

struct MarkovGapResult {
    double exact{0.0};
    double regression{0.0};
    double gap{0.0};
};

// exact: symmetrized_two_point. regression: moments evolved to t₁, then
// (⟨X(t)X(t₁)⟩, ⟨P(t)X(t₁)⟩) carried to t₂ by the one-time drift.
MarkovGapResult markov_gap(const InfluenceKernels& kernels, const InitialDistribution& dist,
                           const CoefficientTable& table, const GreenTable& g_ret,
                           std::size_t t1_index, std::size_t t2_index);

struct CorrelatorScanRow {
    double t1{0.0};
    double t2{0.0};
    double exact{0.0};
    double regression{0.0};
    double gap{0.0};
    double std_err{0.0};
};

// CSV columns: t1, t2, exact, regression, gap, std_err.
void write_correlator_scan_csv(std::ostream& os, const std::vector<CorrelatorScanRow>& rows);

}  // namespace qbm
