// config.hpp — experiment configuration: INI-style sections of key = value
// pairs, validated against a fixed schema with documented defaults.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qbm/coefficients.hpp"
#include "qbm/kernels.hpp"
#include "qbm/phase_space.hpp"

namespace qbm {

enum class ExperimentKind {
    kernels,
    greens,
    coefficients,
    simulate,
    wigner,
    correlators,
    ctp,
    fokker_planck,
    markov_gap,
    full_crosscheck
};

const char* to_string(ExperimentKind k);
ExperimentKind parse_experiment_kind(const std::string& s);
const std::vector<std::string>& experiment_kind_names();

enum class InitialKind { vacuum, gaussian, cat, table };

struct ExperimentConfig {
    ExperimentKind kind{ExperimentKind::full_crosscheck};
    std::uint64_t seed{1};
    double tolerance_scale{1.0};
    std::string output_dir{"qbm_out"};
    std::size_t threads{1};

    SystemParams system;
    double t_start{0.0};
    double t_end{6.0};
    std::size_t n_points{301};

    std::string preset{"free"};  // a preset name or "files"
    double gamma{0.1};
    double temperature{1.0};
    double cutoff{2.0};
    std::string noise_file;
    std::string dissipation_file;
    double extra_local_noise{0.0};

    InitialKind initial{InitialKind::vacuum};
    GaussianState gaussian;  // resolved initial moments for vacuum/gaussian
    double cat_separation{3.0};
    double cat_sigma{0.0};  // 0 → vacuum width
    std::string table_file;

    std::size_t ensemble_count{10000};
    bool store_noise{true};

    PhaseGrid phase_grid{-8.0, 8.0, -8.0, 8.0, 128, 128};
    FpAdvection advection{FpAdvection::fifth_order};

    std::vector<double> output_times;  // empty → five evenly spaced times
    std::size_t frame_every{0};        // FP raster every N solver steps, 0 = off

    // Every schema key with its effective value, in schema order.
    std::vector<std::pair<std::string, std::string>> effective;
    // Keys that took their default value.
    std::vector<std::string> defaulted;
};

// Command-line values that replace (or supply) file keys, e.g.
// {"experiment.seed", "7"}.
using ConfigOverrides = std::map<std::string, std::string>;

// Reads and validates the file. Throws ConfigurationError naming unknown
// keys (with the nearest known key), missing required keys, and
// out-of-range values with their constraint.
ExperimentConfig parse_config(const std::string& path, const ConfigOverrides& overrides = {});

// Same, from INI text; `origin` is used in messages and to resolve
// relative file references.
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin = "<config>",
                                   const ConfigOverrides& overrides = {});

// Schema description: key, default, meaning.
struct ConfigKey {
    std::string name;
    std::string default_value;
    std::string description;
    bool required{false};
};
const std::vector<ConfigKey>& config_schema();

// Edit distance used for "did you mean" suggestions.
std::size_t levenshtein(const std::string& a, const std::string& b);

// Plain-text Wigner table: "nx np x_min x_max p_min p_max" then nx rows of
// np cell values.
WignerTable read_wigner_table(const std::string& path);

}  // namespace qbm
