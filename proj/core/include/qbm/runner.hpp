// runner.hpp — experiment orchestration: builds the pipeline named by a
// configuration, evaluates consistency assertions, and writes the outputs.

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "qbm/config.hpp"

namespace qbm {

enum class AssertionStatus { pass, fail, skipped };
const char* to_string(AssertionStatus s);

// One consistency check. `arrow` names the relationship between two
// descriptions that the check exercises.
struct AssertionResult {
    std::string arrow;
    std::string name;
    double value{0.0};      // measured discrepancy (or witness size)
    double tolerance{0.0};  // after tolerance_scale
    std::string comparison{"<="};  // value <= tolerance, or ">" for witnesses
    AssertionStatus status{AssertionStatus::skipped};
    std::string detail;
};

struct StageTiming {
    std::string stage;
    double seconds{0.0};
};

struct ManifestEntry {
    std::string file;  // relative to the output directory
    std::uintmax_t bytes{0};
    std::string sha256;
};

// A deferred file writer. `write(stem)` must create stem + each extension.
struct Artifact {
    std::string name;
    std::vector<std::string> extensions;
    std::function<void(const std::string& stem)> write;
};

struct RunReport {
    ExperimentKind kind{ExperimentKind::full_crosscheck};
    std::string input_digest;
    std::vector<std::pair<std::string, std::string>> config;
    std::vector<std::string> defaulted;
    double tolerance_scale{1.0};
    std::vector<StageTiming> timings;
    std::vector<AssertionResult> assertions;
    std::vector<std::string> notes;
    std::vector<ManifestEntry> manifest;
    std::string failed_stage;
    std::string failure;
    int failure_code{0};

    bool passed() const;
    int exit_code() const;  // 0 pass, 1 assertion failure, 2 configuration, 3 numerical
    std::string prefix() const;  // "<kind>_<first 8 digest chars>"
};

struct RunOutcome {
    RunReport report;
    std::vector<Artifact> artifacts;
};

// SHA-256 of the effective configuration, excluding the keys that may not
// influence results (threads, output directory).
std::string input_digest(const ExperimentConfig& config);

// Creates the directory if needed and proves it writable. Throws IoError.
void preflight_output_dir(const std::string& dir);

// Computes everything in memory. Module errors are caught and recorded in
// the report with the stage that raised them.
RunOutcome run_experiment(const ExperimentConfig& config);

// Writes the artifacts, then `<prefix>_summary.txt` and `<prefix>_report.json`
// (both deterministic) and `<prefix>_timings.json`. Fills report.manifest.
std::vector<ManifestEntry> emit_outputs(RunReport& report, const std::vector<Artifact>& artifacts,
                                        const std::string& dir, std::size_t threads = 1);

// Preflight, run, emit. Progress lines go to `log` when given.
RunReport execute(const ExperimentConfig& config, std::ostream* log = nullptr);

void write_summary(std::ostream& os, const RunReport& report);

// Maps a library exception to the process exit code (2 or 3).
int exit_code_for(const std::exception& e);

}  // namespace qbm
