// phase_space.hpp — Wigner fields on an (X, p) grid: Gaussian and cat-state
// closed forms, a conservative finite-volume Fokker–Planck solver, and
// comparison against Monte Carlo histograms.

#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "qbm/coefficients.hpp"
#include "qbm/langevin.hpp"
#include "qbm/parallel.hpp"
#include "qbm/phase_grid.hpp"

namespace qbm {

struct WignerField {
    PhaseGrid grid;
    Eigen::MatrixXd values;  // nx × np, cell averages
    double time{0.0};
    double truncated_mass{0.0};     // closed-form mass outside the grid
    bool truncation_warning{false};  // more than 0.1% of the mass was outside
};

WignerField gaussian_wigner(const GaussianState& state, const PhaseGrid& grid);

// Even superposition of two Gaussians of position width sigma_x centred at
// ±separation/2 (momentum width 1/(2 sigma_x)).
WignerField cat_wigner(double separation, double sigma_x, const PhaseGrid& grid);

struct FieldMoments {
    GaussianState state;
    double norm{0.0};
};

FieldMoments field_moments(const WignerField& field);

double field_mass(const WignerField& field);
double negative_mass(const WignerField& field);  // ∫ min(W, 0), ≤ 0
double l2_norm(const WignerField& field);

WignerTable to_table(const WignerField& field);

// Upwind-biased reconstruction of the advective face values.
enum class FpAdvection { second_order, third_order, fifth_order };

struct FpOptions {
    FpAdvection advection{FpAdvection::fifth_order};
    double safety{0.8};
    double leak_tolerance{1e-3};   // mass allowed in the two outermost cell rings
    std::size_t max_steps{50'000'000};
    Executor executor{};
    // Called after every step with the current field, when set.
    std::function<void(const WignerField&)> on_step;
};

struct FpReport {
    std::size_t steps{0};
    double dt{0.0};
    double mass_change{0.0};
    double l2_initial{0.0};
    double l2_final{0.0};
};

// Explicit RK4 on the transport equation between t_span.first and
// t_span.second. Throws ConfigurationError if no stable step fits and
// BoundaryLeak if mass reaches the edge of the grid.
WignerField evolve_fp(const WignerField& field, const CoefficientTable& table, const SystemParams& system,
                      std::pair<double, double> t_span, const FpOptions& opt = {},
                      FpReport* report = nullptr);

// Largest stable step for the given coefficients (before the safety factor).
double fp_stability_step(const PhaseGrid& grid, const CoefficientTable& table, const SystemParams& system,
                         std::pair<double, double> t_span);

struct DivergenceReport {
    double l1_distance{0.0};
    Eigen::MatrixXd z_scores;
    double fraction_above_3{0.0};
    std::size_t bins{0};
};

// The field is resampled bilinearly onto the Monte Carlo bins if the grids
// differ. Throws InvalidComparison when the supports do not overlap.
DivergenceReport compare_wigner(const WignerField& field, const WignerEstimate& mc);

// CSV columns: X, p, value.
void write_field_csv(std::ostream& os, const WignerField& field);

// `<stem>.json` header and `<stem>.bin` row-major little-endian doubles.
void write_field_raster(const std::string& stem, const WignerField& field);

}  // namespace qbm
