// config.cpp — INI parsing, validation, and key suggestions

#include "qbm/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "qbm/errors.hpp"

namespace qbm {

namespace {

const std::vector<std::string> kKindNames = {"kernels",     "greens", "coefficients",  "simulate",
                                             "wigner",      "correlators", "ctp", "fokker_planck",
                                             "markov_gap",  "full_crosscheck"};

}  // namespace

const std::vector<std::string>& experiment_kind_names() { return kKindNames; }

const char* to_string(ExperimentKind k) { return kKindNames[static_cast<std::size_t>(k)].c_str(); }

ExperimentKind parse_experiment_kind(const std::string& s) {
    for (std::size_t i = 0; i < kKindNames.size(); ++i)
        if (kKindNames[i] == s) return static_cast<ExperimentKind>(i);
    throw ConfigurationError("unknown experiment kind '" + s + "'");
}

const std::vector<ConfigKey>& config_schema() {
    static const std::vector<ConfigKey> schema = {
        {"experiment.kind", "", "experiment to run: kernels, greens, coefficients, simulate, wigner, correlators, ctp, fokker_planck, markov_gap, full_crosscheck", true},
        {"experiment.seed", "1", "64-bit unsigned seed of the Monte Carlo streams"},
        {"experiment.tolerance_scale", "1", "global multiplier for assertion tolerances (> 0)"},
        {"experiment.output_dir", "qbm_out", "directory receiving all outputs"},
        {"experiment.threads", "1", "worker threads (speed only, never results)"},
        {"system.mass", "1", "oscillator mass M (> 0)"},
        {"system.omega_ren", "1", "renormalized frequency (>= 0)"},
        {"grid.t_start", "0", "initial time"},
        {"grid.t_end", "6", "final time (> t_start)"},
        {"grid.n_points", "301", "time grid points (>= 3)"},
        {"kernels.preset", "", "free, caldeira_leggett_highT, drude_nonlocal, or files", true},
        {"kernels.gamma", "0.1", "coupling strength (>= 0)"},
        {"kernels.temperature", "1", "bath temperature k_B T (>= 0)"},
        {"kernels.cutoff", "2", "spectral cutoff frequency (> 0)"},
        {"kernels.noise_file", "", "noise kernel matrix file (preset = files)"},
        {"kernels.dissipation_file", "", "dissipation kernel matrix file (preset = files)"},
        {"kernels.extra_local_noise", "0", "amplitude of a local noise added to N (>= 0)"},
        {"initial.kind", "vacuum", "vacuum, gaussian, cat, or table"},
        {"initial.mean_x", "0", "initial mean position (gaussian)"},
        {"initial.mean_p", "0", "initial mean momentum (gaussian)"},
        {"initial.cov_xx", "", "initial position variance (gaussian; default vacuum)"},
        {"initial.cov_xp", "0", "initial symmetrized covariance (gaussian)"},
        {"initial.cov_pp", "", "initial momentum variance (gaussian; default vacuum)"},
        {"initial.cat_separation", "3", "distance between the cat components (> 0)"},
        {"initial.cat_sigma", "", "position width of each cat component (default vacuum width)"},
        {"initial.table_file", "", "Wigner table file (kind = table)"},
        {"ensemble.count", "10000", "number of Langevin trajectories (>= 1)"},
        {"ensemble.store_noise", "true", "keep noise realizations (needed for the Novikov check)"},
        {"phase_grid.x_min", "-8", "phase grid lower X bound"},
        {"phase_grid.x_max", "8", "phase grid upper X bound"},
        {"phase_grid.p_min", "-8", "phase grid lower p bound"},
        {"phase_grid.p_max", "8", "phase grid upper p bound"},
        {"phase_grid.nx", "128", "X cells (>= 16)"},
        {"phase_grid.np", "128", "p cells (>= 16)"},
        {"phase_grid.advection", "fifth_order", "upwind reconstruction: second_order, third_order, fifth_order"},
        {"outputs.times", "", "comma-separated output times (default: five evenly spaced)"},
        {"outputs.frame_every", "0", "write a Fokker-Planck raster every N steps (0 = off)"},
    };
    return schema;
}

std::size_t levenshtein(const std::string& a, const std::string& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

namespace {

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    const auto e = s.find_last_not_of(" \t\r\n");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

std::string suggestion_for(const std::string& key) {
    const auto dot = key.find('.');
    const std::string section = dot == std::string::npos ? "" : key.substr(0, dot);
    const std::string leaf = dot == std::string::npos ? key : key.substr(dot + 1);
    std::string best;
    std::size_t best_d = std::string::npos;
    for (const auto& k : config_schema()) {
        const auto kd = k.name.find('.');
        const std::string ks = k.name.substr(0, kd), kl = k.name.substr(kd + 1);
        // Prefer keys of the same section, compare leaf names.
        const std::size_t d = levenshtein(leaf, kl) + (ks == section ? 0 : 2);
        if (d < best_d) {
            best_d = d;
            best = k.name;
        }
    }
    const std::size_t limit = std::max<std::size_t>(2, leaf.size() / 2);
    return best_d <= limit ? best : std::string{};
}

class Reader {
public:
    Reader(std::map<std::string, std::string> values, std::string origin)
        : values_(std::move(values)), origin_(std::move(origin)) {}

    std::optional<std::string> raw(const std::string& key) {
        used_.insert(key);
        const auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        return it->second;
    }

    std::string str(const std::string& key, const std::string& def) {
        auto v = raw(key);
        return v ? *v : def;
    }

    double real(const std::string& key, double def) {
        auto v = raw(key);
        if (!v) return def;
        return parse_real(key, *v);
    }

    std::uint64_t uinteger(const std::string& key, std::uint64_t def) {
        auto v = raw(key);
        if (!v) return def;
        std::uint64_t out = 0;
        const auto* b = v->data();
        const auto* e = b + v->size();
        const auto r = std::from_chars(b, e, out);
        if (r.ec != std::errc{} || r.ptr != e || v->empty())
            fail(key, "expected a non-negative integer, got '" + *v + "'");
        return out;
    }

    bool boolean(const std::string& key, bool def) {
        auto v = raw(key);
        if (!v) return def;
        if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
        if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
        fail(key, "expected true or false, got '" + *v + "'");
        return def;
    }

    double parse_real(const std::string& key, const std::string& s) {
        std::size_t pos = 0;
        double out = 0.0;
        try {
            out = std::stod(s, &pos);
        } catch (const std::exception&) {
            fail(key, "expected a number, got '" + s + "'");
        }
        if (pos != s.size() || !std::isfinite(out)) fail(key, "expected a finite number, got '" + s + "'");
        return out;
    }

    [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
        throw ConfigurationError(origin_ + ": " + key + ": " + msg);
    }

    void require(bool ok, const std::string& key, const std::string& constraint) const {
        if (!ok) fail(key, "value out of range, constraint: " + constraint);
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

private:
    std::map<std::string, std::string> values_;
    std::string origin_;
    std::set<std::string> used_;
};

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::map<std::string, std::string> flatten_ini(const std::string& text, const std::string& origin) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream is(text);
    try {
        pt::ini_parser::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigurationError(origin + ": malformed configuration: " + e.message() + " (line " +
                                 std::to_string(e.line()) + ")");
    }
    std::map<std::string, std::string> flat;
    for (const auto& [section, node] : tree) {
        if (node.empty()) {
            flat[section] = trim(node.data());
            continue;
        }
        for (const auto& [key, leaf] : node) flat[section + "." + key] = trim(leaf.data());
    }
    return flat;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin,
                                   const ConfigOverrides& overrides) {
    auto flat = flatten_ini(text, origin);
    for (const auto& [k, v] : overrides) flat[k] = v;

    // Unknown keys first so typos are reported before anything else.
    std::set<std::string> known;
    for (const auto& k : config_schema()) known.insert(k.name);
    std::vector<std::string> unknown;
    for (const auto& [k, v] : flat)
        if (!known.count(k)) unknown.push_back(k);
    if (!unknown.empty()) {
        std::ostringstream msg;
        msg << origin << ": unknown configuration key" << (unknown.size() > 1 ? "s" : "") << ":";
        for (const auto& k : unknown) {
            msg << " '" << k << "'";
            const auto s = suggestion_for(k);
            if (!s.empty()) msg << " (did you mean '" << s << "'?)";
        }
        throw ConfigurationError(msg.str());
    }
    std::vector<std::string> missing;
    for (const auto& k : config_schema())
        if (k.required && !flat.count(k.name)) missing.push_back(k.name);
    if (!missing.empty()) {
        std::string msg = origin + ": missing required key";
        for (const auto& k : missing) msg += " '" + k + "'";
        throw ConfigurationError(msg);
    }

    Reader r(flat, origin);
    ExperimentConfig c;
    const auto base = std::filesystem::path(origin).parent_path();
    auto resolve = [&](const std::string& p) {
        if (p.empty() || std::filesystem::path(p).is_absolute() || origin.front() == '<') return p;
        return (base / p).string();
    };

    try {
        c.kind = parse_experiment_kind(r.str("experiment.kind", ""));
    } catch (const ConfigurationError&) {
        r.fail("experiment.kind", "unknown experiment kind '" + r.str("experiment.kind", "") + "'");
    }
    c.seed = r.uinteger("experiment.seed", 1);
    c.tolerance_scale = r.real("experiment.tolerance_scale", 1.0);
    r.require(c.tolerance_scale > 0.0, "experiment.tolerance_scale", "> 0");
    c.output_dir = r.str("experiment.output_dir", "qbm_out");
    r.require(!c.output_dir.empty(), "experiment.output_dir", "non-empty path");
    c.threads = r.uinteger("experiment.threads", 1);
    r.require(c.threads >= 1 && c.threads <= 1024, "experiment.threads", "1 <= threads <= 1024");

    c.system.mass = r.real("system.mass", 1.0);
    r.require(c.system.mass > 0.0, "system.mass", "> 0");
    c.system.omega_ren = r.real("system.omega_ren", 1.0);
    r.require(c.system.omega_ren >= 0.0, "system.omega_ren", ">= 0");

    c.t_start = r.real("grid.t_start", 0.0);
    c.t_end = r.real("grid.t_end", 6.0);
    r.require(c.t_end > c.t_start, "grid.t_end", "> grid.t_start");
    c.n_points = r.uinteger("grid.n_points", 301);
    r.require(c.n_points >= 3 && c.n_points <= 20001, "grid.n_points", "3 <= n_points <= 20001");

    c.preset = r.str("kernels.preset", "");
    if (c.preset != "files") {
        try {
            parse_preset(c.preset);
        } catch (const InvalidArgument&) {
            r.fail("kernels.preset", "unknown preset '" + c.preset +
                                         "' (free, caldeira_leggett_highT, drude_nonlocal, files)");
        }
    }
    c.gamma = r.real("kernels.gamma", 0.1);
    r.require(c.gamma >= 0.0, "kernels.gamma", ">= 0");
    c.temperature = r.real("kernels.temperature", 1.0);
    r.require(c.temperature >= 0.0, "kernels.temperature", ">= 0");
    c.cutoff = r.real("kernels.cutoff", 2.0);
    r.require(c.cutoff > 0.0, "kernels.cutoff", "> 0");
    c.noise_file = resolve(r.str("kernels.noise_file", ""));
    c.dissipation_file = resolve(r.str("kernels.dissipation_file", ""));
    if (c.preset == "files") {
        for (const auto& [key, path] : {std::pair{"kernels.noise_file", c.noise_file},
                                        std::pair{"kernels.dissipation_file", c.dissipation_file}}) {
            if (path.empty()) r.fail(key, "required when kernels.preset = files");
            if (!std::filesystem::is_regular_file(path)) r.fail(key, "file '" + path + "' does not exist");
        }
    }
    c.extra_local_noise = r.real("kernels.extra_local_noise", 0.0);
    r.require(c.extra_local_noise >= 0.0, "kernels.extra_local_noise", ">= 0");

    const std::string ik = r.str("initial.kind", "vacuum");
    if (ik == "vacuum") c.initial = InitialKind::vacuum;
    else if (ik == "gaussian") c.initial = InitialKind::gaussian;
    else if (ik == "cat") c.initial = InitialKind::cat;
    else if (ik == "table") c.initial = InitialKind::table;
    else r.fail("initial.kind", "expected vacuum, gaussian, cat, or table, got '" + ik + "'");

    const double mw = c.system.mass * c.system.omega_ren;
    const bool can_vacuum = mw > 0.0;
    if ((c.initial == InitialKind::vacuum ||
         (c.initial == InitialKind::cat && !r.has("initial.cat_sigma"))) && !can_vacuum)
        r.fail("initial.kind", "vacuum widths need system.omega_ren > 0");
    c.gaussian = can_vacuum ? GaussianState{0.0, 0.0, 0.5 / mw, 0.0, 0.5 * mw} : GaussianState{};
    c.gaussian.mean_x = r.real("initial.mean_x", 0.0);
    c.gaussian.mean_p = r.real("initial.mean_p", 0.0);
    c.gaussian.cov_xx = r.real("initial.cov_xx", c.gaussian.cov_xx);
    c.gaussian.cov_xp = r.real("initial.cov_xp", 0.0);
    c.gaussian.cov_pp = r.real("initial.cov_pp", c.gaussian.cov_pp);
    if (c.initial == InitialKind::gaussian) {
        r.require(c.gaussian.cov_xx > 0.0, "initial.cov_xx", "> 0");
        r.require(c.gaussian.cov_pp > 0.0, "initial.cov_pp", "> 0");
        r.require(c.gaussian.determinant() > 0.0, "initial.cov_xp", "cov_xx*cov_pp - cov_xp^2 > 0");
    }
    c.cat_separation = r.real("initial.cat_separation", 3.0);
    r.require(c.cat_separation > 0.0, "initial.cat_separation", "> 0");
    c.cat_sigma = r.real("initial.cat_sigma", can_vacuum ? std::sqrt(0.5 / mw) : 0.0);
    if (c.initial == InitialKind::cat) r.require(c.cat_sigma > 0.0, "initial.cat_sigma", "> 0");
    c.table_file = resolve(r.str("initial.table_file", ""));
    if (c.initial == InitialKind::table) {
        if (c.table_file.empty()) r.fail("initial.table_file", "required when initial.kind = table");
        if (!std::filesystem::is_regular_file(c.table_file))
            r.fail("initial.table_file", "file '" + c.table_file + "' does not exist");
    }

    c.ensemble_count = r.uinteger("ensemble.count", 10000);
    r.require(c.ensemble_count >= 1 && c.ensemble_count <= 10'000'000, "ensemble.count",
              "1 <= count <= 10000000");
    c.store_noise = r.boolean("ensemble.store_noise", true);

    auto& pg = c.phase_grid;
    pg.x_min = r.real("phase_grid.x_min", -8.0);
    pg.x_max = r.real("phase_grid.x_max", 8.0);
    pg.p_min = r.real("phase_grid.p_min", -8.0);
    pg.p_max = r.real("phase_grid.p_max", 8.0);
    r.require(pg.x_max > pg.x_min, "phase_grid.x_max", "> phase_grid.x_min");
    r.require(pg.p_max > pg.p_min, "phase_grid.p_max", "> phase_grid.p_min");
    pg.nx = r.uinteger("phase_grid.nx", 128);
    pg.np = r.uinteger("phase_grid.np", 128);
    r.require(pg.nx >= 16 && pg.nx <= 4096, "phase_grid.nx", "16 <= nx <= 4096");
    r.require(pg.np >= 16 && pg.np <= 4096, "phase_grid.np", "16 <= np <= 4096");
    const std::string adv = r.str("phase_grid.advection", "fifth_order");
    if (adv == "second_order") c.advection = FpAdvection::second_order;
    else if (adv == "third_order") c.advection = FpAdvection::third_order;
    else if (adv == "fifth_order") c.advection = FpAdvection::fifth_order;
    else r.fail("phase_grid.advection", "expected second_order, third_order, or fifth_order");

    const std::string times = r.str("outputs.times", "");
    if (!times.empty()) {
        std::stringstream ss(times);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const double t = r.parse_real("outputs.times", trim(item));
            r.require(t >= c.t_start && t <= c.t_end, "outputs.times", "every time within [t_start, t_end]");
            c.output_times.push_back(t);
        }
    } else {
        for (int i = 0; i < 5; ++i) c.output_times.push_back(c.t_start + (c.t_end - c.t_start) * i / 4.0);
    }
    c.frame_every = r.uinteger("outputs.frame_every", 0);

    // Echo every key with its effective value.
    auto times_str = [&] {
        std::string s;
        for (std::size_t i = 0; i < c.output_times.size(); ++i) s += (i ? "," : "") + fmt(c.output_times[i]);
        return s;
    };
    const std::map<std::string, std::string> eff = {
        {"experiment.kind", to_string(c.kind)},
        {"experiment.seed", std::to_string(c.seed)},
        {"experiment.tolerance_scale", fmt(c.tolerance_scale)},
        {"experiment.output_dir", c.output_dir},
        {"experiment.threads", std::to_string(c.threads)},
        {"system.mass", fmt(c.system.mass)},
        {"system.omega_ren", fmt(c.system.omega_ren)},
        {"grid.t_start", fmt(c.t_start)},
        {"grid.t_end", fmt(c.t_end)},
        {"grid.n_points", std::to_string(c.n_points)},
        {"kernels.preset", c.preset},
        {"kernels.gamma", fmt(c.gamma)},
        {"kernels.temperature", fmt(c.temperature)},
        {"kernels.cutoff", fmt(c.cutoff)},
        {"kernels.noise_file", c.noise_file},
        {"kernels.dissipation_file", c.dissipation_file},
        {"kernels.extra_local_noise", fmt(c.extra_local_noise)},
        {"initial.kind", ik},
        {"initial.mean_x", fmt(c.gaussian.mean_x)},
        {"initial.mean_p", fmt(c.gaussian.mean_p)},
        {"initial.cov_xx", fmt(c.gaussian.cov_xx)},
        {"initial.cov_xp", fmt(c.gaussian.cov_xp)},
        {"initial.cov_pp", fmt(c.gaussian.cov_pp)},
        {"initial.cat_separation", fmt(c.cat_separation)},
        {"initial.cat_sigma", fmt(c.cat_sigma)},
        {"initial.table_file", c.table_file},
        {"ensemble.count", std::to_string(c.ensemble_count)},
        {"ensemble.store_noise", c.store_noise ? "true" : "false"},
        {"phase_grid.x_min", fmt(pg.x_min)},
        {"phase_grid.x_max", fmt(pg.x_max)},
        {"phase_grid.p_min", fmt(pg.p_min)},
        {"phase_grid.p_max", fmt(pg.p_max)},
        {"phase_grid.nx", std::to_string(pg.nx)},
        {"phase_grid.np", std::to_string(pg.np)},
        {"phase_grid.advection", adv},
        {"outputs.times", times_str()},
        {"outputs.frame_every", std::to_string(c.frame_every)},
    };
    for (const auto& k : config_schema()) {
        c.effective.emplace_back(k.name, eff.at(k.name));
        if (!flat.count(k.name)) c.defaulted.push_back(k.name);
    }
    return c;
}

ExperimentConfig parse_config(const std::string& path, const ConfigOverrides& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigurationError("cannot read configuration file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path, overrides);
}

WignerTable read_wigner_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read Wigner table '" + path + "'");
    WignerTable t;
    if (!(in >> t.grid.nx >> t.grid.np >> t.grid.x_min >> t.grid.x_max >> t.grid.p_min >> t.grid.p_max))
        throw IoError("Wigner table '" + path + "': malformed header");
    t.values.resize(t.grid.nx * t.grid.np);
    for (auto& v : t.values)
        if (!(in >> v)) throw IoError("Wigner table '" + path + "': truncated data");
    return t;
}

}  // namespace qbm
