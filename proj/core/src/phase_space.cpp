// phase_space.cpp — Wigner fields and the finite-volume transport solver

#include "qbm/phase_space.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "qbm/errors.hpp"

namespace qbm {

namespace {

using Eigen::Index;

Index idx(std::size_t i) { return static_cast<Index>(i); }

template <class F>
WignerField sample_closed_form(const PhaseGrid& grid, F&& w) {
    validate(grid);
    WignerField f;
    f.grid = grid;
    f.values.resize(idx(grid.nx), idx(grid.np));
    for (std::size_t j = 0; j < grid.np; ++j)
        for (std::size_t i = 0; i < grid.nx; ++i)
            f.values(idx(i), idx(j)) = w(grid.x_center(i), grid.p_center(j));
    const double mass = f.values.sum() * grid.cell_area();
    f.truncated_mass = 1.0 - mass;
    f.truncation_warning = std::abs(f.truncated_mass) > 1e-3;
    if (mass != 0.0) f.values /= mass;
    return f;
}

}  // namespace

WignerField gaussian_wigner(const GaussianState& s, const PhaseGrid& grid) {
    validate(s);
    const double det = s.determinant();
    if (!(det > 0.0)) throw InvalidArgument("gaussian_wigner: covariance must be non-singular");
    const double norm = 1.0 / (2.0 * std::numbers::pi * std::sqrt(det));
    return sample_closed_form(grid, [&](double x, double p) {
        const double dx = x - s.mean_x, dp = p - s.mean_p;
        const double q = (s.cov_pp * dx * dx - 2.0 * s.cov_xp * dx * dp + s.cov_xx * dp * dp) / det;
        return norm * std::exp(-0.5 * q);
    });
}

WignerField cat_wigner(double separation, double sigma_x, const PhaseGrid& grid) {
    if (!(separation > 0.0)) throw InvalidArgument("cat_wigner: separation must be positive");
    if (!(sigma_x > 0.0)) throw InvalidArgument("cat_wigner: width must be positive");
    const double x0 = 0.5 * separation;
    const double s2 = sigma_x * sigma_x;
    const double n2 = 1.0 / (2.0 + 2.0 * std::exp(-x0 * x0 / (2.0 * s2)));
    const double inv_pi = 1.0 / std::numbers::pi;
    return sample_closed_form(grid, [&](double x, double p) {
        const double pp = std::exp(-2.0 * s2 * p * p);
        const double gp = std::exp(-(x - x0) * (x - x0) / (2.0 * s2));
        const double gm = std::exp(-(x + x0) * (x + x0) / (2.0 * s2));
        const double ridge = 2.0 * std::exp(-x * x / (2.0 * s2)) * std::cos(2.0 * x0 * p);
        return n2 * inv_pi * pp * (gp + gm + ridge);
    });
}

double field_mass(const WignerField& f) { return f.values.sum() * f.grid.cell_area(); }

double negative_mass(const WignerField& f) {
    return f.values.cwiseMin(0.0).sum() * f.grid.cell_area();
}

double l2_norm(const WignerField& f) {
    return std::sqrt(f.values.squaredNorm() * f.grid.cell_area());
}

FieldMoments field_moments(const WignerField& f) {
    const auto& g = f.grid;
    double s0 = 0, sx = 0, sp = 0, sxx = 0, sxp = 0, spp = 0;
    for (std::size_t j = 0; j < g.np; ++j) {
        const double p = g.p_center(j);
        for (std::size_t i = 0; i < g.nx; ++i) {
            const double x = g.x_center(i), w = f.values(idx(i), idx(j));
            s0 += w;
            sx += w * x;
            sp += w * p;
            sxx += w * x * x;
            sxp += w * x * p;
            spp += w * p * p;
        }
    }
    FieldMoments m;
    m.norm = s0 * g.cell_area();
    const double mx = sx / s0, mp = sp / s0;
    m.state = {mx, mp, sxx / s0 - mx * mx, sxp / s0 - mx * mp, spp / s0 - mp * mp};
    return m;
}

WignerTable to_table(const WignerField& f) {
    WignerTable t;
    t.grid = f.grid;
    t.values.resize(f.grid.nx * f.grid.np);
    for (std::size_t i = 0; i < f.grid.nx; ++i)
        for (std::size_t j = 0; j < f.grid.np; ++j) t.values[i * f.grid.np + j] = f.values(idx(i), idx(j));
    return t;
}

namespace {

struct Coeffs {
    double w2, a, b, c;
};

Coeffs coeffs_at(const CoefficientTable& table, const SystemParams& sys, double t) {
    const auto s = sample_at(table, t);
    return {sys.omega_ren * sys.omega_ren + s.delta_omega_sq, s.a, s.b, s.c};
}

// Upwind-biased face value between cells (lo, lo+1) along one axis; `at(k)`
// returns the cell value at index k, n the axis length. The stencil drops to
// lower order where it would leave the grid.
template <class At>
double upwind_face(FpAdvection scheme, double u, std::size_t lo, std::size_t n, At&& at) {
    // Mirror so that "up" is always the lower index side.
    const bool pos = u >= 0.0;
    auto up = [&](std::ptrdiff_t o) {  // o = 0 is the upwind cell, o = 1 the downwind one
        const std::ptrdiff_t k = pos ? static_cast<std::ptrdiff_t>(lo) - o : static_cast<std::ptrdiff_t>(lo) + 1 + o;
        return at(static_cast<std::size_t>(k));
    };
    auto have = [&](std::ptrdiff_t o) {
        const std::ptrdiff_t k = pos ? static_cast<std::ptrdiff_t>(lo) - o : static_cast<std::ptrdiff_t>(lo) + 1 + o;
        return k >= 0 && k < static_cast<std::ptrdiff_t>(n);
    };
    switch (scheme) {
        case FpAdvection::fifth_order:
            if (have(2) && have(-2))
                return (2.0 * up(2) - 13.0 * up(1) + 47.0 * up(0) + 27.0 * up(-1) - 3.0 * up(-2)) / 60.0;
            [[fallthrough]];
        case FpAdvection::third_order:
            if (have(1)) return (-up(1) + 5.0 * up(0) + 2.0 * up(-1)) / 6.0;
            return up(0);
        case FpAdvection::second_order:
            if (have(1)) return 1.5 * up(0) - 0.5 * up(1);
            return up(0);
    }
    return up(0);
}

// Conservative finite-volume right-hand side with zero boundary fluxes.
void fp_rhs(const Eigen::MatrixXd& W, Eigen::MatrixXd& dW, const PhaseGrid& g, const Coeffs& k,
            double mass, FpAdvection scheme, const Executor& exec) {
    const std::size_t nx = g.nx, np = g.np;
    const double dx = g.dx(), dp = g.dp();
    auto dpW = [&](std::size_t i, std::size_t j) {
        if (j == 0) return (W(idx(i), 1) - W(idx(i), 0)) / dp;
        if (j + 1 == np) return (W(idx(i), idx(np - 1)) - W(idx(i), idx(np - 2))) / dp;
        return (W(idx(i), idx(j + 1)) - W(idx(i), idx(j - 1))) / (2.0 * dp);
    };
    auto dxW = [&](std::size_t i, std::size_t j) {
        if (i == 0) return (W(1, idx(j)) - W(0, idx(j))) / dx;
        if (i + 1 == nx) return (W(idx(nx - 1), idx(j)) - W(idx(nx - 2), idx(j))) / dx;
        return (W(idx(i + 1), idx(j)) - W(idx(i - 1), idx(j))) / (2.0 * dx);
    };
    auto flux_x = [&](std::size_t i, std::size_t j) {  // face i+½
        const double u = g.p_center(j) / mass;
        const double wf = upwind_face(scheme, u, i, nx, [&](std::size_t q) { return W(idx(q), idx(j)); });
        const double mixed = k.b == 0.0 ? 0.0 : 0.5 * (dpW(i, j) + dpW(i + 1, j));
        return u * wf - 0.5 * k.b * mixed;
    };
    auto flux_p = [&](std::size_t i, std::size_t j) {  // face j+½
        const double pf = g.p_min + static_cast<double>(j + 1) * dp;
        const double u = -mass * k.w2 * g.x_center(i) - 2.0 * k.a * pf;
        const double wf = upwind_face(scheme, u, j, np, [&](std::size_t q) { return W(idx(i), idx(q)); });
        const double mixed = k.b == 0.0 ? 0.0 : 0.5 * (dxW(i, j) + dxW(i, j + 1));
        const double grad = (W(idx(i), idx(j + 1)) - W(idx(i), idx(j))) / dp;
        return u * wf - 0.5 * k.b * mixed - mass * k.c * grad;
    };
    exec.parallel_for(np, [&](std::size_t j) {
        for (std::size_t i = 0; i < nx; ++i) {
            const double fxr = i + 1 < nx ? flux_x(i, j) : 0.0;
            const double fxl = i > 0 ? flux_x(i - 1, j) : 0.0;
            const double fpr = j + 1 < np ? flux_p(i, j) : 0.0;
            const double fpl = j > 0 ? flux_p(i, j - 1) : 0.0;
            dW(idx(i), idx(j)) = -(fxr - fxl) / dx - (fpr - fpl) / dp;
        }
    });
}

double edge_mass(const WignerField& f) {
    const auto& v = f.values;
    const Index nx = v.rows(), np = v.cols();
    double s = 0.0;
    for (Index j = 0; j < np; ++j)
        for (Index i = 0; i < nx; ++i)
            if (i < 2 || j < 2 || i >= nx - 2 || j >= np - 2) s += std::abs(v(i, j));
    return s * f.grid.cell_area();
}

}  // namespace

double fp_stability_step(const PhaseGrid& g, const CoefficientTable& table, const SystemParams& sys,
                         std::pair<double, double> t_span) {
    const double xmax = std::max(std::abs(g.x_min), std::abs(g.x_max));
    const double pmax = std::max(std::abs(g.p_min), std::abs(g.p_max));
    const std::size_t k0 = table.grid.index_of(std::min(t_span.first, t_span.second));
    const std::size_t k1 = table.grid.index_of(std::max(t_span.first, t_span.second));
    double drift = 0.0, bmax = 0.0, cmax = 0.0;
    for (std::size_t k = (k0 > 0 ? k0 - 1 : 0); k <= std::min(k1 + 1, table.grid.size() - 1); ++k) {
        const double w2 = sys.omega_ren * sys.omega_ren + table.delta_omega_sq[k];
        drift = std::max(drift, sys.mass * std::abs(w2) * xmax + 2.0 * std::abs(table.a[k]) * pmax);
        bmax = std::max(bmax, std::abs(table.b[k]));
        cmax = std::max(cmax, std::abs(table.c[k]));
    }
    const double rate = pmax / sys.mass / g.dx() + drift / g.dp() + 2.0 * sys.mass * cmax / (g.dp() * g.dp()) +
                        2.0 * bmax / (g.dx() * g.dp());
    return rate > 0.0 ? 1.0 / rate : std::numeric_limits<double>::infinity();
}

WignerField evolve_fp(const WignerField& field, const CoefficientTable& table, const SystemParams& sys,
                      std::pair<double, double> t_span, const FpOptions& opt, FpReport* report) {
    validate(field.grid);
    validate(sys);
    const auto [t0, t1] = t_span;
    const double tol = 1e-9 * std::max(1.0, std::abs(table.grid.t_end()));
    if (t0 < table.grid.t_start() - tol || t1 > table.grid.t_end() + tol || t1 < t0)
        throw InvalidArgument("evolve_fp: time span outside the coefficient table");
    const double dt_max = opt.safety * fp_stability_step(field.grid, table, sys, t_span);
    const double span = t1 - t0;
    std::size_t steps = 0;
    if (span > 0.0) {
        if (!(dt_max > 0.0) || !std::isfinite(span / dt_max) ||
            span / dt_max > static_cast<double>(opt.max_steps))
            throw ConfigurationError("evolve_fp: no stable time step fits this phase grid (needs more than " +
                                     std::to_string(opt.max_steps) + " steps)");
        steps = static_cast<std::size_t>(std::ceil(span / dt_max - 1e-12));
        steps = std::max<std::size_t>(steps, 1);
    }
    const double h = steps ? span / static_cast<double>(steps) : 0.0;

    WignerField f = field;
    const double mass0 = field_mass(field);
    const double l2_0 = l2_norm(field);
    const auto nx = idx(field.grid.nx), np = idx(field.grid.np);
    Eigen::MatrixXd k1(nx, np), k2(nx, np), k3(nx, np), k4(nx, np), tmp(nx, np);
    const double M = sys.mass;
    for (std::size_t s = 0; s < steps; ++s) {
        const double t = t0 + static_cast<double>(s) * h;
        const auto c0 = coeffs_at(table, sys, t), cm = coeffs_at(table, sys, t + 0.5 * h),
                   c1 = coeffs_at(table, sys, t + h);
        fp_rhs(f.values, k1, f.grid, c0, M, opt.advection, opt.executor);
        tmp = f.values + 0.5 * h * k1;
        fp_rhs(tmp, k2, f.grid, cm, M, opt.advection, opt.executor);
        tmp = f.values + 0.5 * h * k2;
        fp_rhs(tmp, k3, f.grid, cm, M, opt.advection, opt.executor);
        tmp = f.values + h * k3;
        fp_rhs(tmp, k4, f.grid, c1, M, opt.advection, opt.executor);
        f.values += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        f.time = t + h;
        if (!f.values.allFinite())
            throw NumericalFailure("evolve_fp: field became non-finite", f.time);
        if ((s + 1) % 64 == 0 || s + 1 == steps) {
            const double leak = edge_mass(f);
            if (leak > opt.leak_tolerance) {
                std::ostringstream msg;
                msg << "evolve_fp: mass " << leak << " reached the grid boundary at t = " << f.time;
                throw BoundaryLeak(msg.str());
            }
        }
        if (opt.on_step) opt.on_step(f);
    }
    f.time = t1;
    if (report) {
        report->steps = steps;
        report->dt = h;
        report->mass_change = field_mass(f) - mass0;
        report->l2_initial = l2_0;
        report->l2_final = l2_norm(f);
    }
    return f;
}

namespace {

double bilinear(const WignerField& f, double x, double p) {
    const auto& g = f.grid;
    const double u = (x - g.x_min) / g.dx() - 0.5, v = (p - g.p_min) / g.dp() - 0.5;
    if (u < -0.5 || v < -0.5 || u > static_cast<double>(g.nx) - 0.5 || v > static_cast<double>(g.np) - 0.5)
        return 0.0;
    const double uc = std::clamp(u, 0.0, static_cast<double>(g.nx - 1));
    const double vc = std::clamp(v, 0.0, static_cast<double>(g.np - 1));
    const auto i0 = std::min(static_cast<std::size_t>(uc), g.nx - 2);
    const auto j0 = std::min(static_cast<std::size_t>(vc), g.np - 2);
    const double a = uc - static_cast<double>(i0), b = vc - static_cast<double>(j0);
    const auto& w = f.values;
    return (1 - a) * (1 - b) * w(idx(i0), idx(j0)) + a * (1 - b) * w(idx(i0 + 1), idx(j0)) +
           (1 - a) * b * w(idx(i0), idx(j0 + 1)) + a * b * w(idx(i0 + 1), idx(j0 + 1));
}

}  // namespace

DivergenceReport compare_wigner(const WignerField& field, const WignerEstimate& mc) {
    const auto& fg = field.grid;
    const auto& mg = mc.grid;
    if (fg.x_max <= mg.x_min || mg.x_max <= fg.x_min || fg.p_max <= mg.p_min || mg.p_max <= fg.p_min)
        throw InvalidComparison("compare_wigner: field and estimate have disjoint supports");
    const bool same = fg == mg;
    DivergenceReport r;
    r.z_scores = Eigen::MatrixXd::Zero(idx(mg.nx), idx(mg.np));
    const double floor =
        mc.samples ? 1.0 / (static_cast<double>(mc.samples) * mg.cell_area()) : 0.0;
    std::size_t above = 0;
    for (std::size_t i = 0; i < mg.nx; ++i)
        for (std::size_t j = 0; j < mg.np; ++j) {
            const double ref = same ? field.values(idx(i), idx(j)) : bilinear(field, mg.x_center(i), mg.p_center(j));
            const double est = mc.values(idx(i), idx(j));
            r.l1_distance += std::abs(est - ref) * mg.cell_area();
            const double se = std::max(mc.std_err(idx(i), idx(j)), floor);
            const double z = se > 0.0 ? (est - ref) / se : (est == ref ? 0.0 : INFINITY);
            r.z_scores(idx(i), idx(j)) = z;
            if (std::abs(z) > 3.0) ++above;
            ++r.bins;
        }
    r.fraction_above_3 = r.bins ? static_cast<double>(above) / static_cast<double>(r.bins) : 0.0;
    return r;
}

void write_field_csv(std::ostream& os, const WignerField& f) {
    os << "X,p,value\n";
    char buf[128];
    for (std::size_t i = 0; i < f.grid.nx; ++i)
        for (std::size_t j = 0; j < f.grid.np; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", f.grid.x_center(i), f.grid.p_center(j),
                          f.values(idx(i), idx(j)));
            os << buf;
        }
}

void write_field_raster(const std::string& stem, const WignerField& f) {
    nlohmann::ordered_json meta;
    meta["format"] = "qbm-wigner-raster-1";
    meta["time"] = f.time;
    meta["x_min"] = f.grid.x_min;
    meta["x_max"] = f.grid.x_max;
    meta["p_min"] = f.grid.p_min;
    meta["p_max"] = f.grid.p_max;
    meta["nx"] = f.grid.nx;
    meta["np"] = f.grid.np;
    meta["layout"] = "row-major, x slow, p fast";
    meta["byte_order"] = "little";
    std::ofstream js(stem + ".json");
    if (!js) throw IoError("cannot write '" + stem + ".json'");
    js << meta.dump(2) << '\n';
    std::ofstream bin(stem + ".bin", std::ios::binary);
    if (!bin) throw IoError("cannot write '" + stem + ".bin'");
    const auto table = to_table(f);
    bin.write(reinterpret_cast<const char*>(table.values.data()),
              static_cast<std::streamsize>(table.values.size() * sizeof(double)));
}

}  // namespace qbm
