// langevin.cpp — noise factorization, ensembles, estimators

#include "qbm/langevin.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include <Eigen/Cholesky>
#include <boost/histogram.hpp>
#include <nlohmann/json.hpp>

#include "qbm/digest.hpp"
#include "qbm/errors.hpp"

namespace qbm {

void validate(const PhaseGrid& g) {
    const bool finite = std::isfinite(g.x_min) && std::isfinite(g.x_max) && std::isfinite(g.p_min) &&
                        std::isfinite(g.p_max);
    if (!finite || !(g.x_max > g.x_min) || !(g.p_max > g.p_min))
        throw InvalidArgument("phase grid: bounds must be finite and increasing");
    if (g.nx < 16 || g.np < 16) throw InvalidArgument("phase grid: need at least 16 bins per axis");
}

NoiseFactor factor_noise(const KernelMatrix& noise) {
    if (noise.kind != KernelKind::noise) throw InvalidArgument("factor_noise: not a noise kernel");
    const TimeGrid& grid = noise.grid;
    const auto n = static_cast<Eigen::Index>(grid.size());
    NoiseFactor f;
    f.grid = grid;
    f.lower = Eigen::MatrixXd::Zero(n, n);
    if (noise.values.isZero(0.0)) {
        f.zero = true;
        f.diagonal = true;
        return f;
    }
    Eigen::VectorXd sw(n);
    for (Eigen::Index k = 0; k < n; ++k) sw(k) = std::sqrt(grid.weight(static_cast<std::size_t>(k)));
    const Eigen::MatrixXd a = sw.asDiagonal() * noise.values * sw.asDiagonal();

    Eigen::MatrixXd off = a;
    off.diagonal().setZero();
    if (off.isZero(0.0)) {
        if ((a.diagonal().array() < 0.0).any())
            throw IndefiniteCovariance("factor_noise: negative diagonal noise entry");
        f.diagonal = true;
        f.lower.diagonal() = a.diagonal().cwiseSqrt();
        return f;
    }

    const double scale = a.cwiseAbs().maxCoeff();
    static constexpr double kJitter[] = {0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8};
    for (double eps : kJitter) {
        Eigen::MatrixXd shifted = a;
        shifted.diagonal().array() += eps * scale;
        Eigen::LLT<Eigen::MatrixXd> llt(shifted);
        if (llt.info() != Eigen::Success) continue;
        Eigen::MatrixXd l = llt.matrixL();
        if (!l.allFinite()) continue;
        f.lower = std::move(l);
        f.jitter_used = eps * scale;
        return f;
    }
    throw IndefiniteCovariance("factor_noise: noise kernel is indefinite beyond 1e-8 jitter");
}

std::vector<double> sample_noise(const NoiseFactor& factor, RngStream& rng) {
    const auto n = static_cast<Eigen::Index>(factor.grid.size());
    Eigen::VectorXd z(n);
    for (Eigen::Index k = 0; k < n; ++k) z(k) = rng.normal();
    std::vector<double> out(static_cast<std::size_t>(n), 0.0);
    if (factor.zero) return out;
    Eigen::Map<Eigen::VectorXd> zeta(out.data(), n);
    if (factor.diagonal) zeta = factor.lower.diagonal().cwiseProduct(z);
    else zeta = factor.lower.triangularView<Eigen::Lower>() * z;
    return out;
}

std::vector<double> source_from_weighted(const NoiseFactor& factor, const std::vector<double>& zeta) {
    std::vector<double> xi(zeta.size());
    for (std::size_t k = 0; k < zeta.size(); ++k) xi[k] = zeta[k] / std::sqrt(factor.grid.weight(k));
    return xi;
}

InitialDistribution InitialDistribution::from_gaussian(const GaussianState& s) {
    InitialDistribution d;
    d.kind = Kind::gaussian;
    d.gaussian = s;
    validate(d);
    return d;
}

InitialDistribution InitialDistribution::from_table(WignerTable t) {
    InitialDistribution d;
    d.kind = Kind::tabulated_wigner;
    d.table = std::move(t);
    validate(d);
    return d;
}

void validate(const InitialDistribution& d) {
    if (d.kind == InitialDistribution::Kind::gaussian) {
        if (!d.gaussian) throw InvalidArgument("initial distribution: gaussian kind without a state");
        validate(*d.gaussian);
        return;
    }
    if (!d.table) throw InvalidArgument("initial distribution: tabulated kind without a table");
    validate(d.table->grid);
    const auto& t = *d.table;
    if (t.values.size() != t.grid.nx * t.grid.np)
        throw InvalidArgument("initial distribution: table size does not match its grid");
    double mass = 0.0, abs_mass = 0.0;
    for (double v : t.values) {
        if (!std::isfinite(v)) throw InvalidArgument("initial distribution: non-finite table value");
        mass += v;
        abs_mass += std::abs(v);
    }
    if (abs_mass == 0.0) throw InvalidArgument("initial distribution: all-zero Wigner table");
    mass *= t.grid.cell_area();
    if (std::abs(mass - 1.0) > 1e-6)
        throw InvalidArgument("initial distribution: table integrates to " + std::to_string(mass) +
                              ", expected 1");
}

namespace {

struct TableSampler {
    std::vector<double> cumulative;
    double abs_mass{0.0};
};

TableSampler make_sampler(const WignerTable& t) {
    TableSampler s;
    s.cumulative.resize(t.values.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < t.values.size(); ++i) {
        acc += std::abs(t.values[i]);
        s.cumulative[i] = acc;
    }
    s.abs_mass = acc * t.grid.cell_area();
    return s;
}

InitialSample draw(const InitialDistribution& dist, const TableSampler* sampler, RngStream& rng) {
    if (dist.kind == InitialDistribution::Kind::gaussian) {
        const auto& s = *dist.gaussian;
        const double z1 = rng.normal(), z2 = rng.normal();
        const double lxx = std::sqrt(std::max(s.cov_xx, 0.0));
        const double lpx = lxx > 0.0 ? s.cov_xp / lxx : 0.0;
        const double lpp = std::sqrt(std::max(s.cov_pp - lpx * lpx, 0.0));
        return {s.mean_x + lxx * z1, s.mean_p + lpx * z1 + lpp * z2, 1.0};
    }
    const auto& t = *dist.table;
    const double u = rng.uniform() * sampler->cumulative.back();
    const auto it = std::upper_bound(sampler->cumulative.begin(), sampler->cumulative.end(), u);
    const auto cell = static_cast<std::size_t>(
        std::min<std::ptrdiff_t>(it - sampler->cumulative.begin(),
                                 static_cast<std::ptrdiff_t>(sampler->cumulative.size()) - 1));
    const std::size_t i = cell / t.grid.np, j = cell % t.grid.np;
    const double x = t.grid.x_min + (static_cast<double>(i) + rng.uniform()) * t.grid.dx();
    const double p = t.grid.p_min + (static_cast<double>(j) + rng.uniform()) * t.grid.dp();
    const double sign = t.values[cell] < 0.0 ? -1.0 : 1.0;
    return {x, p, sign * sampler->abs_mass};
}

}  // namespace

InitialSample sample_initial(const InitialDistribution& dist, RngStream& rng) {
    validate(dist);
    if (dist.kind == InitialDistribution::Kind::gaussian) return draw(dist, nullptr, rng);
    const auto sampler = make_sampler(*dist.table);
    return draw(dist, &sampler, rng);
}

Trajectory simulate_trajectory(const InfluenceKernels& kernels, const std::vector<double>& source,
                               double x_i, double p_i) {
    return solve_inhomogeneous(kernels, source, x_i, p_i / kernels.system.mass);
}

std::string kernels_digest(const InfluenceKernels& kernels) {
    Sha256 h;
    h.update_value(kernels.system.mass).update_value(kernels.system.omega_ren);
    h.update_value(kernels.grid.t_start()).update_value(kernels.grid.t_end());
    const std::uint64_t n = kernels.grid.size();
    h.update_value(n);
    for (const KernelMatrix* m : {&kernels.H, &kernels.N}) {
        h.update(to_string(m->kind)).update(to_string(m->locality));
        h.update_value(m->local_coefficient);
        h.update(m->values.data(), static_cast<std::size_t>(m->values.size()) * sizeof(double));
    }
    return h.hex();
}

TrajectoryEnsemble run_ensemble(const InfluenceKernels& kernels, const NoiseFactor& factor,
                                const InitialDistribution& dist, std::size_t count,
                                std::uint64_t seed, const EnsembleOptions& opt) {
    validate(kernels);
    validate(dist);
    if (count < 1) throw InvalidArgument("run_ensemble: count must be >= 1");
    if (!(factor.grid == kernels.grid)) throw InvalidArgument("run_ensemble: noise factor grid mismatch");
    const std::size_t n = kernels.grid.size();
    const auto rows = static_cast<Eigen::Index>(count), cols = static_cast<Eigen::Index>(n);

    TrajectoryEnsemble ens;
    ens.grid = kernels.grid;
    ens.mass = kernels.system.mass;
    ens.count = count;
    ens.seed = seed;
    ens.kernels_digest = kernels_digest(kernels);
    ens.paths_x.resize(rows, cols);
    ens.paths_v.resize(rows, cols);
    ens.weights.assign(count, 1.0);
    if (opt.store_noise) ens.noise = Eigen::MatrixXd(rows, cols);

    std::optional<TableSampler> sampler;
    if (dist.kind == InitialDistribution::Kind::tabulated_wigner) sampler = make_sampler(*dist.table);

    opt.executor.parallel_for(count, [&](std::size_t j) {
        RngStream init_rng(seed, j, 0);
        RngStream noise_rng(seed, j, 1);
        const auto start = draw(dist, sampler ? &*sampler : nullptr, init_rng);
        const auto xi = source_from_weighted(factor, sample_noise(factor, noise_rng));
        const auto tr = integrate_forward(kernels, xi, start.x, start.p / kernels.system.mass);
        const auto r = static_cast<Eigen::Index>(j);
        for (std::size_t k = 0; k < n; ++k) {
            const auto c = static_cast<Eigen::Index>(k);
            ens.paths_x(r, c) = tr.x[k];
            ens.paths_v(r, c) = tr.v[k];
            if (ens.noise) (*ens.noise)(r, c) = xi[k];
        }
        ens.weights[j] = start.weight;
    });
    return ens;
}

TrajectoryEnsemble run_ensemble(const InfluenceKernels& kernels, const InitialDistribution& dist,
                                std::size_t count, std::uint64_t seed, const EnsembleOptions& opt) {
    return run_ensemble(kernels, factor_noise(kernels.N), dist, count, seed, opt);
}

namespace {

void check_index(const TrajectoryEnsemble& ens, std::size_t k) {
    if (k >= ens.grid.size()) throw InvalidArgument("ensemble: time index out of range");
}

void require_samples(const TrajectoryEnsemble& ens) {
    if (ens.count < 10)
        throw InsufficientSamples("estimator needs at least 10 trajectories, ensemble has " +
                                  std::to_string(ens.count));
}

// Mean of f and its standard error (sample standard deviation / √n).
Estimate mean_and_error(const std::vector<double>& f) {
    const double n = static_cast<double>(f.size());
    const double mean = pairwise_sum(f) / n;
    std::vector<double> sq(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) sq[i] = (f[i] - mean) * (f[i] - mean);
    const double var = pairwise_sum(sq) / (n - 1.0);
    return {mean, std::sqrt(var / n)};
}

}  // namespace

WignerEstimate estimate_wigner(const TrajectoryEnsemble& ens, std::size_t t_index, const PhaseGrid& grid) {
    check_index(ens, t_index);
    validate(grid);
    namespace bh = boost::histogram;
    auto h = bh::make_weighted_histogram(
        bh::axis::regular<double, bh::use_default, bh::use_default, bh::axis::option::none_t>(
            static_cast<unsigned>(grid.nx), grid.x_min, grid.x_max),
        bh::axis::regular<double, bh::use_default, bh::use_default, bh::axis::option::none_t>(
            static_cast<unsigned>(grid.np), grid.p_min, grid.p_max));
    const auto c = static_cast<Eigen::Index>(t_index);
    double in_w = 0.0, in_w2 = 0.0;
    for (std::size_t i = 0; i < ens.count; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const double x = ens.paths_x(r, c), p = ens.mass * ens.paths_v(r, c);
        if (x < grid.x_min || x >= grid.x_max || p < grid.p_min || p >= grid.p_max) continue;
        const double w = ens.weights[i];
        h(x, p, bh::weight(w));
        in_w += w;
        in_w2 += w * w;
    }
    const double n = static_cast<double>(ens.count);
    const double area = grid.cell_area();
    WignerEstimate est;
    est.grid = grid;
    est.t_index = t_index;
    est.samples = ens.count;
    const auto nx = static_cast<Eigen::Index>(grid.nx), np = static_cast<Eigen::Index>(grid.np);
    est.values = Eigen::MatrixXd::Zero(nx, np);
    est.std_err = Eigen::MatrixXd::Zero(nx, np);
    for (auto&& cell : bh::indexed(h)) {
        const auto i = static_cast<Eigen::Index>(cell.index(0));
        const auto j = static_cast<Eigen::Index>(cell.index(1));
        const double mean = cell->value() / n;
        const double var = std::max(cell->variance() / n - mean * mean, 0.0);
        est.values(i, j) = mean / area;
        est.std_err(i, j) = std::sqrt(var / n) / area;
    }
    const double mean = in_w / n;
    est.integral_std_err = std::sqrt(std::max(in_w2 / n - mean * mean, 0.0) / n);
    return est;
}

MomentEstimate estimate_moments(const TrajectoryEnsemble& ens, std::size_t t_index) {
    check_index(ens, t_index);
    require_samples(ens);
    const std::size_t n = ens.count;
    const double nd = static_cast<double>(n);
    const auto c = static_cast<Eigen::Index>(t_index);

    // Weighted raw sums of 1·w, x, p, x², xp, p².
    std::array<std::vector<double>, 5> terms;
    for (auto& t : terms) t.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const double w = ens.weights[i];
        const double x = ens.paths_x(r, c), p = ens.mass * ens.paths_v(r, c);
        terms[0][i] = w * x;
        terms[1][i] = w * p;
        terms[2][i] = w * x * x;
        terms[3][i] = w * x * p;
        terms[4][i] = w * p * p;
    }
    std::array<double, 5> total{};
    for (std::size_t q = 0; q < 5; ++q) total[q] = pairwise_sum(terms[q]);

    auto stats = [](const std::array<double, 5>& s, double m) {
        const double mx = s[0] / m, mp = s[1] / m;
        return GaussianState{mx, mp, s[2] / m - mx * mx, s[3] / m - mx * mp, s[4] / m - mp * mp};
    };
    const GaussianState full = stats(total, nd);

    // Delete-one jackknife.
    std::array<std::vector<double>, 5> loo;
    for (auto& v : loo) v.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::array<double, 5> s;
        for (std::size_t q = 0; q < 5; ++q) s[q] = total[q] - terms[q][i];
        const auto g = stats(s, nd - 1.0);
        loo[0][i] = g.mean_x;
        loo[1][i] = g.mean_p;
        loo[2][i] = g.cov_xx;
        loo[3][i] = g.cov_xp;
        loo[4][i] = g.cov_pp;
    }
    const std::array<double, 5> full_v{full.mean_x, full.mean_p, full.cov_xx, full.cov_xp, full.cov_pp};
    std::array<double, 5> value{}, err{};
    for (std::size_t q = 0; q < 5; ++q) {
        const double bar = pairwise_sum(loo[q]) / nd;
        std::vector<double> sq(n);
        for (std::size_t i = 0; i < n; ++i) sq[i] = (loo[q][i] - bar) * (loo[q][i] - bar);
        err[q] = std::sqrt((nd - 1.0) / nd * pairwise_sum(sq));
        value[q] = nd * full_v[q] - (nd - 1.0) * bar;
    }
    MomentEstimate out;
    out.count = n;
    out.value = {value[0], value[1], value[2], value[3], value[4]};
    out.std_err = {err[0], err[1], err[2], err[3], err[4]};
    return out;
}

Estimate stochastic_correlator(const TrajectoryEnsemble& ens, const std::vector<std::size_t>& indices) {
    require_samples(ens);
    for (auto k : indices) check_index(ens, k);
    std::vector<double> f(ens.count);
    for (std::size_t i = 0; i < ens.count; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        double prod = ens.weights[i];
        for (auto k : indices) prod *= ens.paths_x(r, static_cast<Eigen::Index>(k));
        f[i] = prod;
    }
    return mean_and_error(f);
}

Estimate stochastic_correlator(const TrajectoryEnsemble& ens, std::size_t t1_index, std::size_t t2_index) {
    return stochastic_correlator(ens, std::vector<std::size_t>{t1_index, t2_index});
}

ComplexEstimate characteristic_functional(const TrajectoryEnsemble& ens, const std::vector<double>& k) {
    require_samples(ens);
    if (k.size() != ens.grid.size()) throw InvalidArgument("characteristic_functional: source length mismatch");
    const auto w = ens.grid.weights();
    Eigen::VectorXd wk(static_cast<Eigen::Index>(k.size()));
    for (std::size_t l = 0; l < k.size(); ++l) wk(static_cast<Eigen::Index>(l)) = w[l] * k[l];
    const Eigen::VectorXd phase = ens.paths_x * wk;
    std::vector<double> re(ens.count), im(ens.count);
    for (std::size_t i = 0; i < ens.count; ++i) {
        const double ph = phase(static_cast<Eigen::Index>(i));
        re[i] = ens.weights[i] * std::cos(ph);
        im[i] = -ens.weights[i] * std::sin(ph);
    }
    const auto er = mean_and_error(re), ei = mean_and_error(im);
    return {{er.value, ei.value}, std::max(er.std_err, ei.std_err)};
}

NovikovResult novikov_check(const InfluenceKernels& kernels, const TrajectoryEnsemble& ens,
                            const GreenTable& g_ret, std::size_t t1_index, std::size_t t2_index) {
    if (!ens.noise) throw InvalidState("novikov_check: ensemble was generated without storing its noise");
    require_samples(ens);
    check_index(ens, t1_index);
    check_index(ens, t2_index);
    const auto c1 = static_cast<Eigen::Index>(t1_index), c2 = static_cast<Eigen::Index>(t2_index);
    std::vector<double> f(ens.count);
    for (std::size_t i = 0; i < ens.count; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        f[i] = ens.weights[i] * (*ens.noise)(r, c1) * ens.paths_x(r, c2);
    }
    const auto lhs = mean_and_error(f);
    double rhs = 0.0;
    for (std::size_t l = 0; l <= t2_index; ++l) {
        const auto lc = static_cast<Eigen::Index>(l);
        rhs += kernels.grid.weight_upto(l, t2_index) * kernels.N.values(c1, lc) * g_ret.g(c2, lc);
    }
    return {lhs.value, rhs, lhs.std_err};
}

void write_ensemble(const std::string& stem, const TrajectoryEnsemble& ens) {
    nlohmann::ordered_json meta;
    meta["format"] = "qbm-ensemble-1";
    meta["count"] = ens.count;
    meta["n_points"] = ens.grid.size();
    meta["t_start"] = ens.grid.t_start();
    meta["t_end"] = ens.grid.t_end();
    meta["mass"] = ens.mass;
    meta["seed"] = ens.seed;
    meta["kernels_digest"] = ens.kernels_digest;
    meta["layout"] = {"paths_x", "paths_v", "weights"};
    meta["has_noise"] = ens.noise.has_value();
    meta["byte_order"] = "little";
    std::ofstream js(stem + ".json");
    if (!js) throw IoError("cannot write '" + stem + ".json'");
    js << meta.dump(2) << '\n';

    std::ofstream bin(stem + ".bin", std::ios::binary);
    if (!bin) throw IoError("cannot write '" + stem + ".bin'");
    auto put_rows = [&](const Eigen::MatrixXd& m) {
        std::vector<double> row(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
            bin.write(reinterpret_cast<const char*>(row.data()),
                      static_cast<std::streamsize>(row.size() * sizeof(double)));
        }
    };
    put_rows(ens.paths_x);
    put_rows(ens.paths_v);
    bin.write(reinterpret_cast<const char*>(ens.weights.data()),
              static_cast<std::streamsize>(ens.weights.size() * sizeof(double)));
    if (ens.noise) put_rows(*ens.noise);
}

void write_wigner_csv(std::ostream& os, const WignerEstimate& w) {
    os << "X,p,value,std_err\n";
    char buf[160];
    for (std::size_t i = 0; i < w.grid.nx; ++i)
        for (std::size_t j = 0; j < w.grid.np; ++j) {
            const auto r = static_cast<Eigen::Index>(i), c = static_cast<Eigen::Index>(j);
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", w.grid.x_center(i),
                          w.grid.p_center(j), w.values(r, c), w.std_err(r, c));
            os << buf;
        }
}

}  // namespace qbm
