// kernels.cpp — spectral densities and kernel quadrature

#include "qbm/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "qbm/errors.hpp"

namespace qbm {

namespace {

constexpr double kTwoOverPi = 2.0 / std::numbers::pi;

// Upper truncation of the frequency integral; e^{-60} is far below any
// tolerance we accept.
constexpr double kExpCutoffRange = 60.0;

struct QuadResult {
    double value{0.0};
    double error{0.0};
};

// Adaptive Gauss–Kronrod on [a, b], split so that no piece holds more than
// about one period of the oscillating factor.
template <class F>
QuadResult integrate_oscillatory(F&& f, double a, double b, double lag) {
    using boost::math::quadrature::gauss_kronrod;
    QuadResult r;
    if (!(b > a)) return r;
    const double period = lag > 0.0 ? 2.0 * std::numbers::pi / lag : b - a;
    const auto pieces =
        static_cast<std::size_t>(std::clamp(std::ceil((b - a) / period), 1.0, 1.0e6));
    const double h = (b - a) / static_cast<double>(pieces);
    for (std::size_t i = 0; i < pieces; ++i) {
        const double lo = a + h * static_cast<double>(i);
        const double hi = (i + 1 == pieces) ? b : lo + h;
        double err = 0.0;
        r.value += gauss_kronrod<double, 31>::integrate(f, lo, hi, 12, 1e-12, &err);
        r.error += err;
    }
    return r;
}

std::vector<std::pair<double, double>> support_intervals(const SpectralDensity& sd) {
    switch (sd.family) {
        case SpectralFamily::ohmic_exponential_cutoff:
            return {{0.0, kExpCutoffRange * sd.cutoff}};
        case SpectralFamily::ohmic_hard_cutoff:
            return {{0.0, sd.cutoff}};
        case SpectralFamily::tabulated: {
            std::vector<std::pair<double, double>> out;
            for (std::size_t i = 0; i + 1 < sd.table.size(); ++i)
                out.emplace_back(sd.table[i].first, sd.table[i + 1].first);
            return out;
        }
    }
    return {};
}

template <class F>
double frequency_integral(const SpectralDensity& sd, F&& integrand, double lag,
                          QuadratureTolerance tol, const char* what) {
    QuadResult total;
    for (auto [a, b] : support_intervals(sd)) {
        const auto r = integrate_oscillatory(integrand, a, b, lag);
        total.value += r.value;
        total.error += r.error;
    }
    const double allowed = std::max(tol.absolute, tol.relative * std::abs(total.value));
    if (!std::isfinite(total.value) || total.error > allowed) {
        std::ostringstream msg;
        msg << what << ": quadrature did not converge at lag " << lag << " (error estimate "
            << total.error << ")";
        throw NumericalFailure(msg.str(), total.error);
    }
    return total.value;
}

bool grids_equal(const TimeGrid& a, const TimeGrid& b) { return a == b; }

}  // namespace

void validate(const SystemParams& p) {
    if (!(p.mass > 0.0) || !std::isfinite(p.mass))
        throw InvalidArgument("system: mass must be positive");
    if (!(p.omega_ren >= 0.0) || !std::isfinite(p.omega_ren))
        throw InvalidArgument("system: omega_ren must be non-negative");
}

SpectralDensity SpectralDensity::ohmic_exponential(double mass, double gamma, double cutoff) {
    SpectralDensity sd;
    sd.family = SpectralFamily::ohmic_exponential_cutoff;
    sd.mass = mass;
    sd.coupling = gamma;
    sd.cutoff = cutoff;
    validate(sd);
    return sd;
}

SpectralDensity SpectralDensity::ohmic_hard(double mass, double gamma, double cutoff) {
    SpectralDensity sd;
    sd.family = SpectralFamily::ohmic_hard_cutoff;
    sd.mass = mass;
    sd.coupling = gamma;
    sd.cutoff = cutoff;
    validate(sd);
    return sd;
}

SpectralDensity SpectralDensity::tabulated_from(std::vector<std::pair<double, double>> table) {
    SpectralDensity sd;
    sd.family = SpectralFamily::tabulated;
    sd.table = std::move(table);
    validate(sd);
    return sd;
}

void validate(const SpectralDensity& sd) {
    if (sd.family == SpectralFamily::tabulated) {
        if (sd.table.size() < 2) throw InvalidArgument("spectral density: table needs two rows");
        for (std::size_t i = 0; i < sd.table.size(); ++i) {
            const auto [w, v] = sd.table[i];
            if (!(w >= 0.0) || !(v >= 0.0) || !std::isfinite(w) || !std::isfinite(v))
                throw InvalidArgument("spectral density: table entries must be finite and non-negative");
            if (i > 0 && !(w > sd.table[i - 1].first))
                throw InvalidArgument("spectral density: table frequencies must increase strictly");
        }
        return;
    }
    if (!(sd.cutoff > 0.0)) throw InvalidArgument("spectral density: cutoff must be positive");
    if (!(sd.mass > 0.0)) throw InvalidArgument("spectral density: mass must be positive");
    if (!(sd.coupling >= 0.0)) throw InvalidArgument("spectral density: coupling must be non-negative");
}

double eval_spectral_density(const SpectralDensity& sd, double omega) {
    if (!(omega >= 0.0)) throw InvalidArgument("spectral density: omega must be non-negative");
    switch (sd.family) {
        case SpectralFamily::ohmic_exponential_cutoff:
            return kTwoOverPi * sd.mass * sd.coupling * omega * std::exp(-omega / sd.cutoff);
        case SpectralFamily::ohmic_hard_cutoff:
            return omega <= sd.cutoff ? kTwoOverPi * sd.mass * sd.coupling * omega : 0.0;
        case SpectralFamily::tabulated: {
            const auto& t = sd.table;
            if (omega < t.front().first || omega > t.back().first) return 0.0;
            auto it = std::upper_bound(t.begin(), t.end(), omega,
                                       [](double w, const auto& row) { return w < row.first; });
            if (it == t.end()) return t.back().second;
            const auto& hi = *it;
            const auto& lo = *(it - 1);
            const double s = (omega - lo.first) / (hi.first - lo.first);
            return lo.second + s * (hi.second - lo.second);
        }
    }
    return 0.0;
}

const char* to_string(KernelKind k) { return k == KernelKind::noise ? "noise" : "dissipation_H"; }
const char* to_string(Locality l) { return l == Locality::local ? "local" : "nonlocal"; }

double noise_kernel_value(const SpectralDensity& sd, double temperature, double lag,
                          QuadratureTolerance tol) {
    if (!(temperature >= 0.0)) throw InvalidArgument("noise kernel: temperature must be >= 0");
    const double s = std::abs(lag);
    auto integrand = [&](double w) {
        double thermal = 1.0;
        if (temperature > 0.0) thermal = 1.0 / std::tanh(w / (2.0 * temperature));
        return eval_spectral_density(sd, w) * thermal * std::cos(w * s);
    };
    return frequency_integral(sd, integrand, s, tol, "noise kernel");
}

double dissipation_kernel_value(const SpectralDensity& sd, double lag, QuadratureTolerance tol) {
    if (lag <= 0.0) return 0.0;
    auto integrand = [&](double w) { return eval_spectral_density(sd, w) * std::sin(w * lag); };
    return -2.0 * frequency_integral(sd, integrand, lag, tol, "dissipation kernel");
}

KernelMatrix zero_kernel(const TimeGrid& grid, KernelKind kind) {
    KernelMatrix k;
    k.grid = grid;
    k.kind = kind;
    k.locality = Locality::local;
    k.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(grid.size()),
                                     static_cast<Eigen::Index>(grid.size()));
    return k;
}

KernelMatrix local_noise(const TimeGrid& grid, double amplitude) {
    return add_local_noise(zero_kernel(grid, KernelKind::noise), amplitude);
}

KernelMatrix local_dissipation(const TimeGrid& grid, double gamma) {
    KernelMatrix k = zero_kernel(grid, KernelKind::dissipation);
    k.local_coefficient = gamma;
    return k;
}

KernelMatrix add_local_noise(const KernelMatrix& noise, double amplitude) {
    if (noise.kind != KernelKind::noise) throw InvalidArgument("add_local_noise: not a noise kernel");
    if (!(amplitude >= 0.0)) throw InvalidArgument("add_local_noise: amplitude must be >= 0");
    KernelMatrix out = noise;
    for (std::size_t k = 0; k < out.grid.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        out.values(i, i) += 2.0 * amplitude / out.grid.weight(k);
    }
    out.local_coefficient += amplitude;
    return out;
}

namespace {

template <class LagFn>
std::vector<double> tabulate_lags(const TimeGrid& grid, const Executor& exec, LagFn&& fn) {
    std::vector<double> lags(grid.size());
    exec.parallel_for(grid.size(), [&](std::size_t d) {
        lags[d] = fn(static_cast<double>(d) * grid.dt());
    });
    return lags;
}

}  // namespace

KernelMatrix build_noise_kernel(const SpectralDensity& sd, double temperature, const TimeGrid& grid,
                                const Executor& exec, QuadratureTolerance tol) {
    validate(sd);
    if (!(temperature >= 0.0)) throw InvalidArgument("noise kernel: temperature must be >= 0");
    KernelMatrix k = zero_kernel(grid, KernelKind::noise);
    k.locality = Locality::nonlocal;
    const bool silent = sd.family != SpectralFamily::tabulated && sd.coupling == 0.0;
    if (silent) return k;
    const auto lags = tabulate_lags(grid, exec, [&](double s) {
        return noise_kernel_value(sd, temperature, s, tol);
    });
    const auto n = static_cast<Eigen::Index>(grid.size());
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) k.values(i, j) = lags[static_cast<std::size_t>(std::abs(i - j))];
    return k;
}

KernelMatrix build_dissipation_kernel(const SpectralDensity& sd, const TimeGrid& grid,
                                      const Executor& exec, QuadratureTolerance tol) {
    validate(sd);
    KernelMatrix k = zero_kernel(grid, KernelKind::dissipation);
    k.locality = Locality::nonlocal;
    const bool silent = sd.family != SpectralFamily::tabulated && sd.coupling == 0.0;
    if (silent) return k;
    const auto lags = tabulate_lags(grid, exec, [&](double s) {
        return dissipation_kernel_value(sd, s, tol);
    });
    const auto n = static_cast<Eigen::Index>(grid.size());
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < i; ++j) k.values(i, j) = lags[static_cast<std::size_t>(i - j)];
    return k;
}

double InfluenceKernels::memory_term(std::size_t k, const double* x, const double* v) const {
    double s = 0.0;
    if (H.locality == Locality::nonlocal && k > 0) {
        const auto row = static_cast<Eigen::Index>(k);
        const double dt = grid.dt();
        s = 0.5 * (H.values(row, 0) * x[0] + H.values(row, row) * x[k]);
        for (std::size_t l = 1; l < k; ++l) s += H.values(row, static_cast<Eigen::Index>(l)) * x[l];
        s *= dt;
    }
    if (H.local_coefficient != 0.0) s += 2.0 * system.mass * H.local_coefficient * v[k];
    return s;
}

double InfluenceKernels::noise_row_integral(std::size_t k, const double* f) const {
    const auto row = static_cast<Eigen::Index>(k);
    double s = 0.0;
    for (std::size_t l = 0; l <= k; ++l)
        s += grid.weight_upto(l, k) * N.values(row, static_cast<Eigen::Index>(l)) * f[l];
    if (N.local_coefficient != 0.0) {
        // Replace the trapezoid share of the diagonal delta by half its mass.
        const double delta_entry = 2.0 * N.local_coefficient / grid.weight(k);
        s += (N.local_coefficient - grid.weight_upto(k, k) * delta_entry) * f[k];
    }
    return s;
}

void validate(const InfluenceKernels& k) {
    validate(k.system);
    if (k.grid.size() < 3) throw InvalidArgument("kernels: grid is not initialised");
    if (!grids_equal(k.H.grid, k.grid) || !grids_equal(k.N.grid, k.grid))
        throw InvalidArgument("kernels: H and N must live on the evolution grid");
    if (k.H.kind != KernelKind::dissipation || k.N.kind != KernelKind::noise)
        throw InvalidArgument("kernels: H must be a dissipation kernel and N a noise kernel");
    const auto n = static_cast<Eigen::Index>(k.grid.size());
    if (k.H.values.rows() != n || k.H.values.cols() != n || k.N.values.rows() != n ||
        k.N.values.cols() != n)
        throw InvalidArgument("kernels: matrix size does not match the grid");
}

Preset parse_preset(const std::string& name) {
    if (name == "free") return Preset::free;
    if (name == "caldeira_leggett_highT") return Preset::caldeira_leggett_highT;
    if (name == "drude_nonlocal") return Preset::drude_nonlocal;
    throw InvalidArgument("unknown preset '" + name + "'");
}

const char* to_string(Preset p) {
    switch (p) {
        case Preset::free: return "free";
        case Preset::caldeira_leggett_highT: return "caldeira_leggett_highT";
        case Preset::drude_nonlocal: return "drude_nonlocal";
    }
    return "?";
}

InfluenceKernels preset_kernels(Preset preset, const PresetParams& params, const TimeGrid& grid,
                                const Executor& exec) {
    validate(params.system);
    InfluenceKernels k;
    k.system = params.system;
    k.grid = grid;
    switch (preset) {
        case Preset::free:
            k.H = zero_kernel(grid, KernelKind::dissipation);
            k.N = zero_kernel(grid, KernelKind::noise);
            break;
        case Preset::caldeira_leggett_highT:
            if (!(params.gamma >= 0.0) || !(params.temperature >= 0.0))
                throw InvalidArgument("caldeira_leggett_highT: gamma and temperature must be >= 0");
            k.H = local_dissipation(grid, params.gamma);
            k.N = local_noise(grid, 2.0 * params.system.mass * params.gamma * params.temperature);
            break;
        case Preset::drude_nonlocal: {
            const auto sd =
                SpectralDensity::ohmic_exponential(params.system.mass, params.gamma, params.cutoff);
            k.H = build_dissipation_kernel(sd, grid, exec);
            k.N = build_noise_kernel(sd, params.temperature, grid, exec);
            break;
        }
    }
    return k;
}

void write_matrix_rows(std::ostream& os, const Eigen::MatrixXd& m) {
    os << std::setprecision(17);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) os << ' ';
            os << m(i, j);
        }
        os << '\n';
    }
}

Eigen::MatrixXd read_matrix_rows(std::istream& is, std::size_t n) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            if (!(is >> m(i, j))) throw IoError("matrix file: truncated data");
    return m;
}

void write_kernel(std::ostream& os, const KernelMatrix& k) {
    os << std::setprecision(17) << k.grid.size() << ' ' << k.grid.t_start() << ' ' << k.grid.t_end()
       << ' ' << to_string(k.kind) << ' ' << to_string(k.locality) << ' ' << k.local_coefficient
       << '\n';
    write_matrix_rows(os, k.values);
}

KernelMatrix read_kernel(std::istream& is) {
    std::string header;
    if (!std::getline(is, header)) throw IoError("kernel file: missing header");
    std::istringstream hs(header);
    std::size_t n = 0;
    double t0 = 0.0, t1 = 0.0;
    std::string kind;
    if (!(hs >> n >> t0 >> t1 >> kind)) throw IoError("kernel file: malformed header");
    KernelMatrix k;
    k.grid = make_time_grid(t0, t1, n);
    if (kind == "noise") k.kind = KernelKind::noise;
    else if (kind == "dissipation_H") k.kind = KernelKind::dissipation;
    else throw IoError("kernel file: unknown kind '" + kind + "'");
    std::string locality;
    k.locality = Locality::nonlocal;
    if (hs >> locality) {
        if (locality == "local") k.locality = Locality::local;
        else if (locality != "nonlocal") throw IoError("kernel file: unknown locality '" + locality + "'");
        hs >> k.local_coefficient;
    }
    k.values = read_matrix_rows(is, n);
    return k;
}

}  // namespace qbm
