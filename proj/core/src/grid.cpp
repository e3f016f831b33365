// grid.cpp — time grid

#include "qbm/grid.hpp"

#include <cmath>
#include <string>

#include "qbm/errors.hpp"

namespace qbm {

TimeGrid make_time_grid(double t_start, double t_end, std::size_t n_points) {
    if (!std::isfinite(t_start) || !std::isfinite(t_end) || !(t_end > t_start)) {
        throw InvalidArgument("time grid: need t_end > t_start, got [" + std::to_string(t_start) +
                              ", " + std::to_string(t_end) + "]");
    }
    if (n_points < 3) {
        throw InvalidArgument("time grid: need at least 3 points, got " + std::to_string(n_points));
    }
    TimeGrid g;
    g.t_start_ = t_start;
    g.t_end_ = t_end;
    g.n_points_ = n_points;
    g.dt_ = (t_end - t_start) / static_cast<double>(n_points - 1);
    return g;
}

std::vector<double> TimeGrid::weights() const {
    std::vector<double> w(n_points_);
    for (std::size_t l = 0; l < n_points_; ++l) w[l] = weight(l);
    return w;
}

std::vector<double> TimeGrid::times() const {
    std::vector<double> t(n_points_);
    for (std::size_t k = 0; k < n_points_; ++k) t[k] = time(k);
    return t;
}

std::size_t TimeGrid::index_of(double t) const noexcept {
    const double x = std::round((t - t_start_) / dt_);
    if (x <= 0.0) return 0;
    const auto k = static_cast<std::size_t>(x);
    return k >= n_points_ ? n_points_ - 1 : k;
}

double trapezoid_upto(const TimeGrid& grid, std::span<const double> f, std::size_t k) {
    if (k == 0) return 0.0;
    double s = 0.5 * (f[0] + f[k]);
    for (std::size_t l = 1; l < k; ++l) s += f[l];
    return s * grid.dt();
}

double pairwise_sum(std::span<const double> values) {
    const std::size_t n = values.size();
    if (n <= 8) {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

}  // namespace qbm
