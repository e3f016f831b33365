// phase_grid.hpp — rectangular (X, p) cell grid shared by the Monte Carlo
// histogram and the phase-space solver

#pragma once

#include <cstddef>

namespace qbm {

struct PhaseGrid {
    double x_min{-5.0};
    double x_max{5.0};
    double p_min{-5.0};
    double p_max{5.0};
    std::size_t nx{64};
    std::size_t np{64};

    double dx() const { return (x_max - x_min) / static_cast<double>(nx); }
    double dp() const { return (p_max - p_min) / static_cast<double>(np); }
    double x_center(std::size_t i) const { return x_min + (static_cast<double>(i) + 0.5) * dx(); }
    double p_center(std::size_t j) const { return p_min + (static_cast<double>(j) + 0.5) * dp(); }
    double cell_area() const { return dx() * dp(); }

    bool operator==(const PhaseGrid& o) const {
        return x_min == o.x_min && x_max == o.x_max && p_min == o.p_min && p_max == o.p_max &&
               nx == o.nx && np == o.np;
    }
};

// Throws InvalidArgument unless bounds are finite and ordered and nx, np >= 16.
void validate(const PhaseGrid& g);

}  // namespace qbm
