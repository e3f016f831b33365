// grid.hpp — uniform time grid and trapezoidal quadrature weights

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace qbm {

class TimeGrid {
public:
    TimeGrid() = default;

    double t_start() const noexcept { return t_start_; }
    double t_end() const noexcept { return t_end_; }
    std::size_t size() const noexcept { return n_points_; }
    double dt() const noexcept { return dt_; }

    double time(std::size_t k) const noexcept { return t_start_ + static_cast<double>(k) * dt_; }

    // Trapezoid weight of point l on the full interval [t_start, t_end].
    double weight(std::size_t l) const noexcept {
        return (l == 0 || l + 1 == n_points_) ? 0.5 * dt_ : dt_;
    }

    // Trapezoid weight of point l on the sub-interval [t_start, t_k], l <= k.
    double weight_upto(std::size_t l, std::size_t k) const noexcept {
        if (k == 0) return 0.0;
        return (l == 0 || l == k) ? 0.5 * dt_ : dt_;
    }

    std::vector<double> weights() const;
    std::vector<double> times() const;

    // Nearest grid index to t (clamped).
    std::size_t index_of(double t) const noexcept;

    bool operator==(const TimeGrid& o) const noexcept {
        return t_start_ == o.t_start_ && t_end_ == o.t_end_ && n_points_ == o.n_points_;
    }

private:
    friend TimeGrid make_time_grid(double, double, std::size_t);
    double t_start_ = 0.0;
    double t_end_ = 1.0;
    std::size_t n_points_ = 0;
    double dt_ = 0.0;
};

// Throws InvalidArgument unless t_end > t_start and n_points >= 3.
TimeGrid make_time_grid(double t_start, double t_end, std::size_t n_points);

// Trapezoidal integral of samples on [t_start, t_k].
double trapezoid_upto(const TimeGrid& grid, std::span<const double> f, std::size_t k);

// Summation in a fixed pairwise tree; the result does not depend on how the
// values were produced.
double pairwise_sum(std::span<const double> values);

}  // namespace qbm
