// runner.cpp — pipeline stages, assertions, and output files

#include "qbm/runner.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "qbm/coefficients.hpp"
#include "qbm/ctp.hpp"
#include "qbm/digest.hpp"
#include "qbm/errors.hpp"
#include "qbm/langevin.hpp"
#include "qbm/phase_space.hpp"
#include "qbm/rng.hpp"
#include "qbm/volterra.hpp"

namespace qbm {

namespace fs = std::filesystem;

const char* to_string(AssertionStatus s) {
    switch (s) {
        case AssertionStatus::pass: return "pass";
        case AssertionStatus::fail: return "FAIL";
        case AssertionStatus::skipped: return "skipped";
    }
    return "?";
}

bool RunReport::passed() const { return exit_code() == 0; }

int RunReport::exit_code() const {
    if (failure_code != 0) return failure_code;
    for (const auto& a : assertions)
        if (a.status == AssertionStatus::fail) return 1;
    return 0;
}

std::string RunReport::prefix() const { return std::string(to_string(kind)) + "_" + input_digest.substr(0, 8); }

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigurationError*>(&e) || dynamic_cast<const InvalidArgument*>(&e) ||
        dynamic_cast<const UnsupportedDistribution*>(&e) || dynamic_cast<const IoError*>(&e))
        return 2;
    return 3;
}

std::string input_digest(const ExperimentConfig& c) {
    Sha256 h;
    for (const auto& [k, v] : c.effective) {
        if (k == "experiment.threads" || k == "experiment.output_dir") continue;
        h.update(k).update("=").update(v).update("\n");
    }
    // Referenced files enter through their content.
    for (const auto* path : {&c.noise_file, &c.dissipation_file, &c.table_file})
        if (!path->empty() && fs::is_regular_file(*path)) h.update(sha256_file(*path));
    return h.hex();
}

void preflight_output_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("output directory '" + dir + "' cannot be created");
    const fs::path probe = fs::path(dir) / ".qbm_write_probe";
    {
        std::ofstream os(probe);
        if (!os || !(os << "probe")) throw IoError("output directory '" + dir + "' is not writable");
    }
    fs::remove(probe, ec);
}

namespace {

// Relationship names used by the assertion table.
constexpr const char* kBathToInfluence = "bath -> influence_functional";
constexpr const char* kInfluenceToGreen = "influence_functional -> green_functions";
constexpr const char* kInfluenceToMaster = "influence_functional -> master_equation";
constexpr const char* kMasterToFp = "master_equation -> fokker_planck";
constexpr const char* kLangevinToMaster = "langevin_equation -> master_equation";
constexpr const char* kLangevinToFp = "langevin_equation -> fokker_planck";
constexpr const char* kInfluenceToLangevin = "influence_functional -> langevin_equation";
constexpr const char* kInfluenceToQuantum = "influence_functional -> quantum_correlators";
constexpr const char* kStochasticToQuantum = "stochastic_correlators -> quantum_correlators";
constexpr const char* kMasterToQuantum = "master_equation -> quantum_correlators";

constexpr double kAnalyticTol = 1e-8;
constexpr double kRoundoffTol = 1e-12;
constexpr double kDuhamelTol = 1e-4;
constexpr double kSigmas = 3.0;
constexpr double kFpRelTol = 0.01;
constexpr double kMassTol = 1e-9;
constexpr double kHistogramFraction = 0.01;
constexpr double kDerivativeTol = 1e-6;
constexpr double kUniquenessTol = 1e-10;
constexpr double kWitnessFactor = 5.0;

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string short_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

void csv(std::ostream& os, std::initializer_list<double> values) {
    bool first = true;
    for (double v : values) {
        if (!first) os << ',';
        os << num(v);
        first = false;
    }
    os << '\n';
}

Artifact text_artifact(std::string name, std::string ext, std::string content) {
    return {std::move(name), {ext}, [ext, content = std::move(content)](const std::string& stem) {
                std::ofstream os(stem + ext, std::ios::binary);
                if (!os || !(os << content)) throw IoError("cannot write '" + stem + ext + "'");
            }};
}

using Member = double GaussianState::*;
const std::array<std::pair<const char*, Member>, 5> kMoments = {{{"mean_x", &GaussianState::mean_x},
                                                                  {"mean_p", &GaussianState::mean_p},
                                                                  {"cov_xx", &GaussianState::cov_xx},
                                                                  {"cov_xp", &GaussianState::cov_xp},
                                                                  {"cov_pp", &GaussianState::cov_pp}}};

// Scale used for the relative comparison of one moment.
double moment_scale(const GaussianState& s, std::size_t q) {
    const double sx = std::sqrt(std::max(s.cov_xx, 0.0)), sp = std::sqrt(std::max(s.cov_pp, 0.0));
    switch (q) {
        case 0: return sx;
        case 1: return sp;
        case 2: return s.cov_xx;
        case 3: return sx * sp;
        default: return s.cov_pp;
    }
}

// Moments of the piecewise-constant density a table sampler draws from.
GaussianState table_moments(const WignerTable& t) {
    const auto& g = t.grid;
    double s0 = 0, sx = 0, sp = 0, sxx = 0, sxp = 0, spp = 0;
    for (std::size_t i = 0; i < g.nx; ++i)
        for (std::size_t j = 0; j < g.np; ++j) {
            const double w = t.at(i, j), x = g.x_center(i), p = g.p_center(j);
            s0 += w;
            sx += w * x;
            sp += w * p;
            sxx += w * (x * x + g.dx() * g.dx() / 12.0);
            sxp += w * x * p;
            spp += w * (p * p + g.dp() * g.dp() / 12.0);
        }
    const double mx = sx / s0, mp = sp / s0;
    return {mx, mp, sxx / s0 - mx * mx, sxp / s0 - mx * mp, spp / s0 - mp * mp};
}

bool is_local(const KernelMatrix& m) { return m.locality == Locality::local; }

class Pipeline {
public:
    Pipeline(const ExperimentConfig& cfg, RunReport& report, std::vector<Artifact>& artifacts)
        : cfg_(cfg), exec_(cfg.threads), report_(report), artifacts_(artifacts) {}

    const std::string& current_stage() const { return stage_; }

    template <class F>
    void stage(const std::string& name, F&& body) {
        const std::string outer = stage_;
        stage_ = name;
        const auto t0 = std::chrono::steady_clock::now();
        body();
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        report_.timings.push_back({name, s});
        stage_ = outer;
    }

    // Lazily built pipeline pieces.

    const InfluenceKernels& kernels() {
        if (!kernels_) stage("kernels", [&] { kernels_ = build_kernels(); });
        return *kernels_;
    }

    const GreenTable& green() {
        if (!green_) stage("greens", [&] { green_ = build_retarded_green(kernels(), exec_); });
        return *green_;
    }

    const HomogeneousBasis& basis() {
        if (!basis_) stage("greens.basis", [&] { basis_ = homogeneous_basis(kernels()); });
        return *basis_;
    }

    const CoefficientTable& table() {
        if (!table_) {
            const auto& g = green();
            const auto& b = basis();
            stage("coefficients", [&] { table_ = coefficient_table(kernels(), g, b, exec_); });
        }
        return *table_;
    }

    const InitialDistribution& dist() {
        if (!dist_) stage("initial", [&] { build_initial(); });
        return *dist_;
    }

    bool gaussian_initial() { return dist().kind == InitialDistribution::Kind::gaussian; }

    const TrajectoryEnsemble& ensemble() {
        if (!ens_) {
            const auto& k = kernels();
            const auto& d = dist();
            stage("ensemble", [&] {
                EnsembleOptions opt;
                opt.store_noise = cfg_.store_noise;
                opt.executor = exec_;
                ens_ = std::make_shared<TrajectoryEnsemble>(run_ensemble(k, d, cfg_.ensemble_count, cfg_.seed, opt));
            });
        }
        return *ens_;
    }

    // Moment ODE solution started from the moments the ensemble samples.
    const std::vector<GaussianState>& ode() {
        if (!ode_) {
            const auto& t = table();
            dist();
            stage("moments", [&] { ode_ = evolve_gaussian(mc_initial_, t, kernels().system); });
        }
        return *ode_;
    }

    std::vector<std::size_t> output_indices() {
        std::vector<std::size_t> idx;
        for (double t : cfg_.output_times) idx.push_back(kernels().grid.index_of(t));
        return idx;
    }

    // Assertions. Tolerances passed in are unscaled.

    void check_le(const char* arrow, std::string name, double value, double tol, std::string detail = {}) {
        add(arrow, std::move(name), value, tol * cfg_.tolerance_scale, "<=", std::move(detail));
    }

    void check_gt(const char* arrow, std::string name, double value, double tol, std::string detail = {}) {
        add(arrow, std::move(name), value, tol * cfg_.tolerance_scale, ">", std::move(detail));
    }

    void skip(const char* arrow, std::string name, std::string reason) {
        AssertionResult a;
        a.arrow = arrow;
        a.name = std::move(name);
        a.status = AssertionStatus::skipped;
        a.detail = std::move(reason);
        report_.assertions.push_back(std::move(a));
    }

    void note(std::string s) { report_.notes.push_back(std::move(s)); }
    void emit(Artifact a) { artifacts_.push_back(std::move(a)); }

    // Experiment steps.
    void kernel_outputs();
    void green_outputs();
    void coefficient_outputs(bool with_uniqueness);
    void ensemble_output();
    void moment_checks();
    void wigner_outputs();
    void correlator_checks();
    void novikov_checks();
    void ctp_checks();
    void fokker_planck(bool compare_histograms);
    void markov_checks();

private:
    InfluenceKernels build_kernels();
    void build_initial();

    void add(const char* arrow, std::string name, double value, double tol, const char* cmp, std::string detail) {
        AssertionResult a;
        a.arrow = arrow;
        a.name = std::move(name);
        a.value = value;
        a.tolerance = tol;
        a.comparison = cmp;
        // NaN fails either way.
        const bool ok = std::string(cmp) == ">" ? value > tol : value <= tol;
        a.status = ok ? AssertionStatus::pass : AssertionStatus::fail;
        a.detail = std::move(detail);
        report_.assertions.push_back(std::move(a));
    }

    const ExperimentConfig& cfg_;
    Executor exec_;
    RunReport& report_;
    std::vector<Artifact>& artifacts_;
    std::string stage_{"setup"};

    std::optional<InfluenceKernels> kernels_;
    std::optional<GreenTable> green_;
    std::optional<HomogeneousBasis> basis_;
    std::optional<CoefficientTable> table_;
    std::optional<InitialDistribution> dist_;
    std::optional<WignerField> initial_field_;
    GaussianState mc_initial_;
    std::shared_ptr<const TrajectoryEnsemble> ens_;  // outlives the pipeline via artifacts
    std::optional<std::vector<GaussianState>> ode_;
};

InfluenceKernels Pipeline::build_kernels() {
    const auto grid = make_time_grid(cfg_.t_start, cfg_.t_end, cfg_.n_points);
    InfluenceKernels k;
    if (cfg_.preset == "files") {
        auto load = [](const std::string& path) {
            std::ifstream is(path);
            if (!is) throw IoError("cannot read kernel file '" + path + "'");
            try {
                return read_kernel(is);
            } catch (const IoError&) {
                throw;
            } catch (const Error& e) {
                throw ConfigurationError("kernel file '" + path + "': " + e.what());
            }
        };
        k.system = cfg_.system;
        k.N = load(cfg_.noise_file);
        k.H = load(cfg_.dissipation_file);
        if (k.N.kind != KernelKind::noise || k.H.kind != KernelKind::dissipation)
            throw ConfigurationError("kernel files: expected a noise and a dissipation kernel");
        if (!(k.N.grid == k.H.grid)) throw ConfigurationError("kernel files: the two grids differ");
        if (!(k.N.grid == grid))
            note("time grid taken from the kernel files: " + std::to_string(k.N.grid.size()) + " points on [" +
                 short_num(k.N.grid.t_start()) + ", " + short_num(k.N.grid.t_end()) + "]");
        k.grid = k.N.grid;
    } else {
        PresetParams p;
        p.system = cfg_.system;
        p.gamma = cfg_.gamma;
        p.temperature = cfg_.temperature;
        p.cutoff = cfg_.cutoff;
        k = preset_kernels(parse_preset(cfg_.preset), p, grid, exec_);
    }
    if (cfg_.extra_local_noise > 0.0) k.N = add_local_noise(k.N, cfg_.extra_local_noise);
    validate(k);
    note("kernels digest " + kernels_digest(k));
    return k;
}

void Pipeline::build_initial() {
    const auto& pg = cfg_.phase_grid;
    switch (cfg_.initial) {
        case InitialKind::vacuum:
        case InitialKind::gaussian:
            dist_ = InitialDistribution::from_gaussian(cfg_.gaussian);
            initial_field_ = gaussian_wigner(cfg_.gaussian, pg);
            mc_initial_ = cfg_.gaussian;
            break;
        case InitialKind::cat: {
            auto field = cat_wigner(cfg_.cat_separation, cfg_.cat_sigma, pg);
            auto table = to_table(field);
            // Cell averages of a truncated field do not integrate to one.
            const double mass = field_mass(field);
            for (auto& v : table.values) v /= mass;
            field.values /= mass;
            mc_initial_ = table_moments(table);
            dist_ = InitialDistribution::from_table(std::move(table));
            initial_field_ = std::move(field);
            break;
        }
        case InitialKind::table: {
            auto table = read_wigner_table(cfg_.table_file);
            WignerField field;
            field.grid = table.grid;
            field.values.resize(static_cast<Eigen::Index>(table.grid.nx), static_cast<Eigen::Index>(table.grid.np));
            for (std::size_t i = 0; i < table.grid.nx; ++i)
                for (std::size_t j = 0; j < table.grid.np; ++j)
                    field.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = table.at(i, j);
            if (!(table.grid == pg)) note("phase grid taken from the initial Wigner table");
            mc_initial_ = table_moments(table);
            dist_ = InitialDistribution::from_table(std::move(table));
            initial_field_ = std::move(field);
            break;
        }
    }
    validate(*dist_);
    if (initial_field_->truncation_warning)
        note("initial Wigner field: " + short_num(initial_field_->truncated_mass) +
             " of the mass lies outside the phase grid");
}

void Pipeline::kernel_outputs() {
    const auto& k = kernels();
    std::ostringstream n, h;
    write_kernel(n, k.N);
    write_kernel(h, k.H);
    emit(text_artifact("noise_kernel", ".txt", n.str()));
    emit(text_artifact("dissipation_kernel", ".txt", h.str()));

    const double asym = (k.N.values - k.N.values.transpose()).cwiseAbs().maxCoeff();
    check_le(kBathToInfluence, "noise kernel symmetric: max|N - N^T| / max|N|",
             asym / std::max(k.N.max_abs(), 1e-300), kRoundoffTol);
    check_le(kBathToInfluence, "dissipation kernel vanishes on the diagonal: max|H(t,t)|",
             k.H.values.diagonal().cwiseAbs().maxCoeff(), 0.0);
}

void Pipeline::green_outputs() {
    const auto& k = kernels();
    const auto& g = green();
    std::ostringstream os;
    write_green(os, g);
    emit(text_artifact("green_retarded", ".txt", os.str()));

    const std::size_t n = k.grid.size();
    double diag = 0.0, slope = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
        const auto i = static_cast<Eigen::Index>(l);
        diag = std::max(diag, std::abs(g.g(i, i)));
        slope = std::max(slope, std::abs(g.g_dot(i, i) * k.system.mass - 1.0));
    }
    check_le(kInfluenceToGreen, "G_ret(t,t) = 0", diag, kRoundoffTol);
    check_le(kInfluenceToGreen, "M dG_ret/dt(t,t) = 1", slope, kRoundoffTol);

    // Superposition: a sourced solution equals homogeneous part + G_ret * source.
    stage("greens.duhamel", [&] {
        std::vector<double> f(n);
        for (std::size_t i = 0; i < n; ++i) f[i] = std::sin(1.3 * (k.grid.time(i) - k.grid.t_start()));
        const auto homog = solve_homogeneous_ivp(k, 1.0, 0.0);
        const auto direct = solve_inhomogeneous(k, f, 1.0, 0.0);
        const auto composed = compose_with_green(homog, g, f);
        double err = 0.0, scale = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            err = std::max(err, std::abs(direct.x[i] - composed.x[i]));
            scale = std::max(scale, std::abs(direct.x[i]));
        }
        check_le(kInfluenceToGreen, "Duhamel composition: max|x_direct - x_composed| / max|x|",
                 err / std::max(scale, 1e-300), kDuhamelTol);
    });

    const auto g2 = retarded_green_from_basis(k, basis());
    const double route = (g.g - g2.g).cwiseAbs().maxCoeff();
    if (is_local(k.H)) {
        const double dt = k.grid.dt();
        check_le(kInfluenceToGreen, "two-solution construction agrees: max|dG|", route, 10.0 * dt * dt,
                 "bound 10 dt^2");
    } else {
        skip(kInfluenceToGreen, "two-solution construction agrees",
             "not expected with memory; measured max|dG| = " + short_num(route));
    }

    const std::size_t end = n - 1;
    try {
        const auto adv = build_advanced_green(k, end);
        std::ostringstream a;
        write_green(a, adv);
        emit(text_artifact("green_advanced", ".txt", a.str()));
    } catch (const DegenerateBoundary& e) {
        note(std::string("advanced Green function at the final time not built: ") + e.what());
    }
}

void Pipeline::coefficient_outputs(bool with_uniqueness) {
    const auto& k = kernels();
    const auto& t = table();
    std::ostringstream os;
    write_coefficients_csv(os, t);
    emit(text_artifact("coefficients", ".csv", os.str()));
    if (!t.skipped.empty()) {
        std::string s = "coefficient table: " + std::to_string(t.skipped.size()) +
                        " caustic points filled by interpolation at indices";
        for (std::size_t i : t.skipped) s += " " + std::to_string(i);
        note(s);
    }

    const std::size_t n = k.grid.size();
    auto max_dev = [&](const std::vector<double>& f, double expect) {
        double m = 0.0;
        for (std::size_t i = 1; i + 1 < n; ++i) m = std::max(m, std::abs(f[i] - expect));
        return m;
    };
    if (is_local(k.H) && is_local(k.N)) {
        const double gamma = k.H.local_coefficient, c = k.N.local_coefficient / k.system.mass;
        const bool cl = cfg_.preset == "caldeira_leggett_highT" && cfg_.extra_local_noise == 0.0;
        const bool free = gamma == 0.0 && c == 0.0;
        const std::string a_name = free ? "A(t) = 0" : cl ? "A(t) = gamma" : "A(t) = local friction";
        const std::string c_name = free ? "C(t) = 0" : cl ? "C(t) = 2 gamma T" : "C(t) = local noise / M";
        check_le(kInfluenceToMaster, a_name, max_dev(t.a, gamma), kAnalyticTol, "expected " + short_num(gamma));
        check_le(kInfluenceToMaster, "B(t) = 0", max_dev(t.b, 0.0), kAnalyticTol);
        check_le(kInfluenceToMaster, c_name, max_dev(t.c, c), kAnalyticTol, "expected " + short_num(c));
        check_le(kInfluenceToMaster, "delta_omega_sq(t) = 0", max_dev(t.delta_omega_sq, 0.0), kAnalyticTol);
    } else {
        // Smooth-form table against the boundary-pair route at the output times.
        stage("coefficients.pair_route", [&] {
            double worst = 0.0;
            std::size_t checked = 0;
            for (std::size_t e : output_indices()) {
                if (e < 2 || t.is_skipped(e) || is_caustic(basis(), e)) continue;
                const auto pair = boundary_solutions(basis(), e);
                const double scale_a = std::max(std::abs(t.a[e]), 1e-3);
                const double scale_w = std::max(std::abs(t.delta_omega_sq[e]), 1e-3);
                worst = std::max(worst, std::abs(dissipation_a(k, e, pair) - t.a[e]) / scale_a);
                worst = std::max(worst, std::abs(frequency_shift(k, e, pair) - t.delta_omega_sq[e]) / scale_w);
                ++checked;
            }
            if (checked)
                check_le(kInfluenceToMaster, "A, delta_omega_sq: table agrees with the boundary-pair route (relative)",
                         worst, 1e-6, std::to_string(checked) + " output times");
            else
                skip(kInfluenceToMaster, "A, delta_omega_sq: table agrees with the boundary-pair route",
                     "no regular output time");
        });
    }

    if (!with_uniqueness) return;
    stage("coefficients.uniqueness", [&] {
        InfluenceKernels quiet = k;
        quiet.N = zero_kernel(k.grid, KernelKind::noise);
        const auto tq = coefficient_table(quiet, green(), basis(), exec_);
        double da = 0.0, dw = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            da = std::max(da, std::abs(tq.a[i] - t.a[i]));
            dw = std::max(dw, std::abs(tq.delta_omega_sq[i] - t.delta_omega_sq[i]));
        }
        check_le(kInfluenceToMaster, "A independent of the noise kernel (exact)", da, 0.0);
        check_le(kInfluenceToMaster, "delta_omega_sq independent of the noise kernel (exact)", dw, 0.0);

        const double amp = 0.25;
        InfluenceKernels louder = k;
        louder.N = add_local_noise(k.N, amp);
        const auto tl = coefficient_table(louder, green(), basis(), exec_);
        double db = 0.0, dc = 0.0;
        const double shift = amp / k.system.mass;
        for (std::size_t i = 1; i + 1 < n; ++i) {
            if (t.is_skipped(i)) continue;
            db = std::max(db, std::abs(tl.b[i] - t.b[i]));
            dc = std::max(dc, std::abs(tl.c[i] - t.c[i] - shift));
        }
        if (is_local(k.H)) {
            check_le(kInfluenceToMaster, "added local noise leaves B unchanged", db, kUniquenessTol,
                     "local amplitude " + short_num(amp));
            check_le(kInfluenceToMaster, "added local noise shifts C by amplitude / M", dc, kUniquenessTol,
                     "local amplitude " + short_num(amp));
        } else {
            // The nested H-term picks up local noise once dissipation has memory.
            const std::string why = "holds for local dissipation only; measured max|dB| = " + short_num(db) +
                                    ", max|dC - amplitude/M| = " + short_num(dc);
            skip(kInfluenceToMaster, "added local noise leaves B unchanged", why);
            skip(kInfluenceToMaster, "added local noise shifts C by amplitude / M", why);
        }
    });
}

void Pipeline::ensemble_output() {
    ensemble();
    emit({"ensemble", {".json", ".bin"}, [e = ens_](const std::string& stem) { write_ensemble(stem, *e); }});
}

void Pipeline::moment_checks() {
    const auto& e = ensemble();
    const auto& o = ode();
    if (e.count < 10) {
        skip(kLangevinToMaster, "Monte Carlo moments match the moment equations", "fewer than 10 trajectories");
        return;
    }
    std::ostringstream os;
    os << "t,quantity,ode,mc,std_err,z\n";
    double worst = 0.0;
    stage("moments.mc", [&] {
        for (std::size_t k : output_indices()) {
            const auto m = estimate_moments(e, k);
            for (std::size_t q = 0; q < kMoments.size(); ++q) {
                const auto mem = kMoments[q].second;
                const double d = m.value.*mem - o[k].*mem, se = m.std_err.*mem;
                double z = 0.0;
                if (se > 0.0) z = std::abs(d) / se;
                else if (std::abs(d) > kRoundoffTol * (1.0 + std::abs(o[k].*mem)))
                    z = std::numeric_limits<double>::infinity();
                worst = std::max(worst, z);
                os << num(e.grid.time(k)) << ',' << kMoments[q].first << ',' << num(o[k].*mem) << ','
                   << num(m.value.*mem) << ',' << num(se) << ',' << num(z) << '\n';
            }
        }
    });
    emit(text_artifact("moments_mc", ".csv", os.str()));
    check_le(kLangevinToMaster, "Monte Carlo moments match the moment equations: max |z|", worst, kSigmas,
             std::to_string(e.count) + " trajectories, " + std::to_string(cfg_.output_times.size()) +
                 " output times, 5 moments");
}

void Pipeline::wigner_outputs() {
    const auto& e = ensemble();
    stage("wigner.histograms", [&] {
        for (std::size_t k : output_indices()) {
            const auto w = estimate_wigner(e, k, cfg_.phase_grid);
            std::ostringstream os;
            write_wigner_csv(os, w);
            char name[64];
            std::snprintf(name, sizeof name, "wigner_k%06zu", k);
            emit(text_artifact(name, ".csv", os.str()));
            note(std::string(name) + ": t = " + short_num(e.grid.time(k)) + ", integral " +
                 short_num(w.integral()) + " +- " + short_num(w.integral_std_err));
        }
    });
}

void Pipeline::correlator_checks() {
    if (!gaussian_initial()) {
        skip(kStochasticToQuantum, "deterministic and stochastic two-point functions agree",
             "the deterministic route needs Gaussian initial data");
        return;
    }
    const auto& e = ensemble();
    const auto& g = green();
    const auto idx = output_indices();
    std::ostringstream os;
    os << "t1,t2,deterministic,stochastic,std_err,z\n";
    double worst = 0.0, scale = 0.0;
    stage("correlators", [&] {
        for (std::size_t a : idx)
            for (std::size_t b : idx) {
                const double det = symmetrized_two_point(kernels(), dist(), g, a, b).value;
                const auto mc = stochastic_correlator(e, a, b);
                const double z = mc.std_err > 0.0 ? std::abs(det - mc.value) / mc.std_err
                                 : std::abs(det - mc.value) > kRoundoffTol ? std::numeric_limits<double>::infinity()
                                                                           : 0.0;
                worst = std::max(worst, z);
                scale = std::max(scale, std::abs(det));
                csv(os, {e.grid.time(a), e.grid.time(b), det, mc.value, mc.std_err, z});
            }
    });
    emit(text_artifact("correlators", ".csv", os.str()));
    check_le(kStochasticToQuantum, "symmetrized two-point function, deterministic vs stochastic: max |z|", worst,
             kSigmas, std::to_string(idx.size() * idx.size()) + " (t1, t2) pairs");

    // Functional derivatives of the generating functional.
    stage("correlators.ctp_derivative", [&] {
        double dev = 0.0;
        std::ostringstream ds;
        ds << "t1,t2,ctp_derivative,deterministic\n";
        for (std::size_t i = 0; i + 1 < idx.size(); ++i) {
            const std::size_t a = idx[i], b = idx[i + 1];
            const auto d = ctp_derivative_correlator(kernels(), dist(), g, {a, b});
            const double det = symmetrized_two_point(kernels(), dist(), g, a, b).value;
            dev = std::max(dev, std::abs(d.value - det));
            csv(ds, {e.grid.time(a), e.grid.time(b), d.value, det});
        }
        emit(text_artifact("correlators_ctp_derivative", ".csv", ds.str()));
        check_le(kInfluenceToQuantum, "second derivative of Z equals the symmetrized two-point function", dev,
                 kDerivativeTol * std::max(scale, 1.0));
    });
}

void Pipeline::novikov_checks() {
    const auto& e = ensemble();
    if (!e.noise) {
        skip(kInfluenceToLangevin, "Novikov identity", "noise realizations not stored (ensemble.store_noise)");
        return;
    }
    const auto& g = green();
    const auto idx = output_indices();
    std::ostringstream os;
    os << "t1,t2,lhs,rhs,std_err,z\n";
    double worst = 0.0;
    std::size_t checked = 0;
    stage("novikov", [&] {
        for (std::size_t a : idx)
            for (std::size_t b : idx) {
                if (b == 0) continue;
                const auto r = novikov_check(kernels(), e, g, a, b);
                const double d = std::abs(r.lhs - r.rhs);
                const double z = r.combined_err > 0.0 ? d / r.combined_err
                                 : d > kRoundoffTol ? std::numeric_limits<double>::infinity()
                                                    : 0.0;
                worst = std::max(worst, z);
                ++checked;
                csv(os, {e.grid.time(a), e.grid.time(b), r.lhs, r.rhs, r.combined_err, z});
            }
    });
    emit(text_artifact("novikov", ".csv", os.str()));
    check_le(kInfluenceToLangevin, "Novikov identity <xi(t1) X(t2)> = int N G_ret: max |z|", worst, kSigmas,
             std::to_string(checked) + " (t1, t2) pairs");
}

void Pipeline::ctp_checks() {
    const auto& k = kernels();
    const std::size_t n = k.grid.size();
    if (!gaussian_initial()) {
        skip(kInfluenceToLangevin, "generating functional matches the Monte Carlo characteristic functional",
             "the closed form needs Gaussian initial data");
        return;
    }
    const auto& g = green();
    const auto& e = ensemble();
    RngStream rng(cfg_.seed, 0, 2);
    auto random_source = [&] {
        const double amp = 0.2 + 0.4 * rng.uniform(), w = 0.2 + 1.8 * rng.uniform();
        const double phi = 2.0 * 3.141592653589793 * rng.uniform();
        std::vector<double> s(n);
        for (std::size_t i = 0; i < n; ++i) s[i] = amp * std::sin(w * (k.grid.time(i) - k.grid.t_start()) + phi);
        return s;
    };
    std::ostringstream os;
    os << "case,re_ctp,im_ctp,re_mc,im_mc,std_err,z,abs_shifted\n";
    double worst_z = 0.0, worst_mod = 0.0;
    const std::vector<double> zero(n, 0.0);
    const auto z00 = eval_ctp(k, dist(), {zero, zero}, g);
    stage("ctp", [&] {
        for (int c = 0; c < 5; ++c) {
            const auto K = random_source();
            const auto js = random_source();
            const auto z = eval_ctp(k, dist(), {zero, K}, g);
            const auto zs = eval_ctp(k, dist(), {js, K}, g);
            const auto mc = characteristic_functional(e, K);
            const double d = std::max(std::abs(z.real() - mc.value.real()), std::abs(z.imag() - mc.value.imag()));
            const double zz = mc.std_err > 0.0 ? d / mc.std_err : (d > kRoundoffTol ? std::numeric_limits<double>::infinity() : 0.0);
            worst_z = std::max(worst_z, zz);
            worst_mod = std::max(worst_mod, std::abs(std::abs(zs) - std::abs(z)));
            csv(os, {double(c), z.real(), z.imag(), mc.value.real(), mc.value.imag(), mc.std_err, zz, std::abs(zs)});
        }
    });
    emit(text_artifact("ctp", ".csv", os.str()));
    check_le(kInfluenceToQuantum, "Z[0,0] = 1", std::abs(z00 - std::complex<double>(1.0, 0.0)), kRoundoffTol);
    check_le(kInfluenceToQuantum, "|Z| independent of J_sigma", worst_mod, kRoundoffTol, "5 random sources");
    check_le(kInfluenceToLangevin, "Z[0,K] equals the Monte Carlo characteristic functional: max |z|", worst_z,
             kSigmas, "5 random K, " + std::to_string(e.count) + " trajectories");
}

void Pipeline::fokker_planck(bool compare_histograms) {
    const auto& k = kernels();
    const auto& t = table();
    dist();
    WignerField field = *initial_field_;
    const auto moments0 = field_moments(field).state;
    std::vector<GaussianState> ode_fp;
    stage("fokker_planck.moments", [&] { ode_fp = evolve_gaussian(moments0, t, k.system); });

    std::vector<std::size_t> idx = output_indices();
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());

    FpOptions opt;
    opt.advection = cfg_.advection;
    opt.executor = exec_;
    std::size_t step_count = 0;
    if (cfg_.frame_every > 0)
        opt.on_step = [&](const WignerField& f) {
            if (++step_count % cfg_.frame_every != 0) return;
            char name[64];
            std::snprintf(name, sizeof name, "fp_frame_%08zu", step_count);
            emit({name, {".json", ".bin"}, [copy = f](const std::string& stem) { write_field_raster(stem, copy); }});
        };

    std::ostringstream summary, fm;
    summary << "t,mass,negative_mass,l2_norm,steps,dt\n";
    fm << "t,quantity,ode,fp,rel_err\n";
    const double mass0 = field_mass(field);
    double worst_rel = 0.0, worst_mass = 0.0, worst_hist = 0.0;
    std::size_t compared = 0;
    std::vector<double> negativity;
    std::size_t current = 0;
    stage("fokker_planck", [&] {
        for (std::size_t target : idx) {
            FpReport rep;
            if (target > current) {
                field = evolve_fp(field, t, k.system, {k.grid.time(current), k.grid.time(target)}, opt, &rep);
                current = target;
            }
            const double tt = k.grid.time(target);
            const double mass = field_mass(field);
            worst_mass = std::max(worst_mass, std::abs(mass - mass0) / std::abs(mass0));
            negativity.push_back(negative_mass(field));
            csv(summary, {tt, mass, negativity.back(), l2_norm(field), double(rep.steps), rep.dt});
            const auto m = field_moments(field).state;
            for (std::size_t q = 0; q < kMoments.size(); ++q) {
                const auto mem = kMoments[q].second;
                const double ref = ode_fp[target].*mem;
                const double rel = std::abs(m.*mem - ref) / std::max(moment_scale(ode_fp[target], q), 1e-300);
                worst_rel = std::max(worst_rel, rel);
                fm << num(tt) << ',' << kMoments[q].first << ',' << num(ref) << ',' << num(m.*mem) << ','
                   << num(rel) << '\n';
            }
            std::ostringstream os;
            write_field_csv(os, field);
            char name[64];
            std::snprintf(name, sizeof name, "fp_field_k%06zu", target);
            emit(text_artifact(name, ".csv", os.str()));

            if (compare_histograms && ens_ && target > 0) {
                const auto w = estimate_wigner(*ens_, target, field.grid);
                const auto dv = compare_wigner(field, w);
                worst_hist = std::max(worst_hist, dv.fraction_above_3);
                ++compared;
            }
        }
    });
    emit(text_artifact("fp_summary", ".csv", summary.str()));
    emit(text_artifact("moments_fp", ".csv", fm.str()));
    check_le(kMasterToFp, "phase-space moments match the moment equations (relative)", worst_rel, kFpRelTol,
             std::to_string(idx.size()) + " output times, 5 moments");
    check_le(kMasterToFp, "Wigner mass conserved (relative)", worst_mass, kMassTol);
    if (compare_histograms) {
        if (compared)
            check_le(kLangevinToFp, "Monte Carlo histogram vs phase-space field: fraction of bins beyond 3 sigma",
                     worst_hist, kHistogramFraction, std::to_string(compared) + " output times");
        else
            skip(kLangevinToFp, "Monte Carlo histogram vs phase-space field", "no output time after the start");
    }
    std::string s = "negative mass at the output times:";
    for (double v : negativity) s += " " + short_num(v);
    note(s);
}

void Pipeline::markov_checks() {
    const auto& k = kernels();
    if (!gaussian_initial()) {
        skip(kMasterToQuantum, "regression gap", "the exact two-time function needs Gaussian initial data");
        return;
    }
    const auto& g = green();
    const auto& t = table();
    auto idx = output_indices();
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    std::vector<CorrelatorScanRow> rows;
    double worst = 0.0, scale = 0.0;
    stage("markov_gap", [&] {
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t j = i + 1; j < idx.size(); ++j) {
                const auto r = markov_gap(k, dist(), t, g, idx[i], idx[j]);
                const double s11 = symmetrized_two_point(k, dist(), g, idx[i], idx[i]).value;
                const double s22 = symmetrized_two_point(k, dist(), g, idx[j], idx[j]).value;
                scale = std::max(scale, std::sqrt(std::abs(s11 * s22)));
                worst = std::max(worst, r.gap);
                rows.push_back({k.grid.time(idx[i]), k.grid.time(idx[j]), r.exact, r.regression, r.gap, 0.0});
            }
    });
    const double dt = k.grid.dt();
    const double tol = 10.0 * dt * dt * scale;
    for (auto& r : rows) r.std_err = tol;
    std::ostringstream os;
    write_correlator_scan_csv(os, rows);
    emit(text_artifact("markov_gap", ".csv", os.str()));
    if (rows.empty()) {
        skip(kMasterToQuantum, "regression gap", "fewer than two distinct output times");
        return;
    }
    const std::string detail = "bound 10 dt^2 x correlator scale " + short_num(scale) + ", " +
                               std::to_string(rows.size()) + " pairs";
    if (is_local(k.H) && is_local(k.N))
        check_le(kMasterToQuantum, "regression gap within the discretization bound (memoryless bath)", worst, tol,
                 detail);
    else
        check_gt(kMasterToQuantum, "regression gap exceeds 5x the discretization bound (bath with memory)", worst,
                 kWitnessFactor * tol, detail);
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& cfg) {
    RunOutcome out;
    auto& r = out.report;
    r.kind = cfg.kind;
    r.input_digest = input_digest(cfg);
    r.tolerance_scale = cfg.tolerance_scale;
    for (const auto& kv : cfg.effective)
        if (kv.first != "experiment.threads" && kv.first != "experiment.output_dir") r.config.push_back(kv);
    r.defaulted = cfg.defaulted;

    Pipeline p(cfg, r, out.artifacts);
    try {
        switch (cfg.kind) {
            case ExperimentKind::kernels: p.kernel_outputs(); break;
            case ExperimentKind::greens: p.green_outputs(); break;
            case ExperimentKind::coefficients: p.coefficient_outputs(true); break;
            case ExperimentKind::simulate:
                p.ensemble_output();
                p.moment_checks();
                break;
            case ExperimentKind::wigner: p.wigner_outputs(); break;
            case ExperimentKind::correlators:
                p.correlator_checks();
                p.novikov_checks();
                break;
            case ExperimentKind::ctp: p.ctp_checks(); break;
            case ExperimentKind::fokker_planck: p.fokker_planck(false); break;
            case ExperimentKind::markov_gap: p.markov_checks(); break;
            case ExperimentKind::full_crosscheck:
                p.green_outputs();
                p.coefficient_outputs(true);
                p.moment_checks();
                p.fokker_planck(true);
                p.correlator_checks();
                p.novikov_checks();
                p.ctp_checks();
                p.markov_checks();
                break;
        }
    } catch (const std::exception& e) {
        r.failed_stage = p.current_stage();
        r.failure = e.what();
        r.failure_code = exit_code_for(e);
    }
    return out;
}

void write_summary(std::ostream& os, const RunReport& r) {
    os << "experiment: " << to_string(r.kind) << '\n';
    os << "input digest: " << r.input_digest << '\n';
    os << "tolerance scale: " << short_num(r.tolerance_scale) << '\n';
    os << "result: "
       << (r.exit_code() == 0   ? "PASS"
           : r.exit_code() == 1 ? "assertion failure"
           : r.exit_code() == 2 ? "configuration error"
                                : "numerical failure")
       << '\n';
    if (!r.failure.empty()) os << "error in stage '" << r.failed_stage << "': " << r.failure << '\n';
    os << "\nconfiguration (* = default):\n";
    for (const auto& [k, v] : r.config) {
        const bool def = std::find(r.defaulted.begin(), r.defaulted.end(), k) != r.defaulted.end();
        os << "  " << (def ? "* " : "  ") << k << " = " << v << '\n';
    }
    os << "\nassertions:\n";
    for (const auto& a : r.assertions) {
        os << "  [" << to_string(a.status) << "] " << a.arrow << " | " << a.name;
        if (a.status != AssertionStatus::skipped)
            os << " | value " << short_num(a.value) << ' ' << a.comparison << " tolerance " << short_num(a.tolerance);
        if (!a.detail.empty()) os << " | " << a.detail;
        os << '\n';
    }
    if (!r.notes.empty()) {
        os << "\nnotes:\n";
        for (const auto& n : r.notes) os << "  " << n << '\n';
    }
    if (!r.manifest.empty()) {
        os << "\nfiles:\n";
        for (const auto& m : r.manifest) os << "  " << m.sha256 << "  " << m.file << '\n';
    }
}

std::vector<ManifestEntry> emit_outputs(RunReport& r, const std::vector<Artifact>& artifacts,
                                        const std::string& dir, std::size_t threads) {
    preflight_output_dir(dir);
    const std::string prefix = r.prefix();
    r.manifest.clear();
    auto record = [&](const std::string& file) {
        const fs::path full = fs::path(dir) / file;
        if (!fs::is_regular_file(full)) throw IoError("expected output '" + full.string() + "' is missing");
        r.manifest.push_back({file, fs::file_size(full), sha256_file(full.string())});
    };
    if (r.failure.empty()) {
        for (const auto& a : artifacts) {
            const std::string stem = prefix + "_" + a.name;
            a.write((fs::path(dir) / stem).string());
            for (const auto& ext : a.extensions) record(stem + ext);
        }
    }

    {
        const std::string file = prefix + "_summary.txt";
        std::ofstream os(fs::path(dir) / file, std::ios::binary);
        write_summary(os, r);
        if (!os) throw IoError("cannot write '" + file + "'");
    }
    record(prefix + "_summary.txt");

    nlohmann::ordered_json j;
    j["experiment"] = to_string(r.kind);
    j["input_digest"] = r.input_digest;
    j["exit_code"] = r.exit_code();
    j["tolerance_scale"] = r.tolerance_scale;
    if (!r.failure.empty()) j["error"] = {{"stage", r.failed_stage}, {"message", r.failure}};
    auto& cfg = j["config"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : r.config) cfg[k] = v;
    j["defaulted"] = r.defaulted;
    auto& as = j["assertions"] = nlohmann::ordered_json::array();
    for (const auto& a : r.assertions) {
        nlohmann::ordered_json e;
        e["arrow"] = a.arrow;
        e["name"] = a.name;
        e["status"] = a.status == AssertionStatus::pass ? "pass" : a.status == AssertionStatus::fail ? "fail" : "skipped";
        if (a.status != AssertionStatus::skipped) {
            e["value"] = std::isfinite(a.value) ? nlohmann::ordered_json(a.value) : nlohmann::ordered_json(num(a.value));
            e["comparison"] = a.comparison;
            e["tolerance"] = a.tolerance;
        }
        if (!a.detail.empty()) e["detail"] = a.detail;
        as.push_back(std::move(e));
    }
    j["notes"] = r.notes;
    auto& man = j["manifest"] = nlohmann::ordered_json::array();
    for (const auto& m : r.manifest) man.push_back({{"file", m.file}, {"bytes", m.bytes}, {"sha256", m.sha256}});
    {
        std::ofstream os(fs::path(dir) / (prefix + "_report.json"), std::ios::binary);
        os << j.dump(2) << '\n';
        if (!os) throw IoError("cannot write the report");
    }

    nlohmann::ordered_json t;
    t["threads"] = threads;
    t["output_dir"] = dir;
    auto& st = t["stages"] = nlohmann::ordered_json::array();
    double total = 0.0;
    for (const auto& s : r.timings) {
        st.push_back({{"stage", s.stage}, {"seconds", s.seconds}});
        total += s.seconds;
    }
    t["total_seconds"] = total;
    std::ofstream os(fs::path(dir) / (prefix + "_timings.json"), std::ios::binary);
    os << t.dump(2) << '\n';
    return r.manifest;
}

RunReport execute(const ExperimentConfig& cfg, std::ostream* log) {
    preflight_output_dir(cfg.output_dir);
    if (log) *log << "qbm: running " << to_string(cfg.kind) << " (" << cfg.threads << " thread"
                  << (cfg.threads == 1 ? "" : "s") << ")\n";
    auto out = run_experiment(cfg);
    emit_outputs(out.report, out.artifacts, cfg.output_dir, cfg.threads);
    if (log) {
        for (const auto& a : out.report.assertions)
            *log << "  [" << to_string(a.status) << "] " << a.name << '\n';
        if (!out.report.failure.empty())
            *log << "  error in stage '" << out.report.failed_stage << "': " << out.report.failure << '\n';
        *log << "qbm: wrote " << out.report.manifest.size() << " files to " << cfg.output_dir << " (prefix "
             << out.report.prefix() << ")\n";
    }
    return out.report;
}

}  // namespace qbm
