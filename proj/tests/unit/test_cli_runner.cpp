// test_cli_runner.cpp — configuration parsing and experiment orchestration

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "qbm/config.hpp"
#include "qbm/errors.hpp"
#include "qbm/runner.hpp"

using namespace qbm;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("qbm_unit_" + name);
    fs::remove_all(p);
    return p;
}

std::string read(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string error_of(const std::string& text) {
    try {
        parse_config_text(text);
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

const AssertionResult* find(const RunReport& r, const std::string& needle) {
    for (const auto& a : r.assertions)
        if (a.name.find(needle) != std::string::npos) return &a;
    return nullptr;
}

const char* kMinimal = "[experiment]\nkind = coefficients\n[kernels]\npreset = free\n";

}  // namespace

TEST_SUITE("cli_runner") {

TEST_CASE("minimal configuration takes defaults") {
    const auto c = parse_config_text(kMinimal);
    CHECK(c.kind == ExperimentKind::coefficients);
    CHECK(c.preset == "free");
    CHECK(c.seed == 1);
    CHECK(c.n_points == 301);
    CHECK(c.threads == 1);
    CHECK(c.tolerance_scale == 1.0);
    CHECK(std::find(c.defaulted.begin(), c.defaulted.end(), "grid.n_points") != c.defaulted.end());
    CHECK(std::find(c.defaulted.begin(), c.defaulted.end(), "kernels.preset") == c.defaulted.end());
}

TEST_CASE("overrides replace file values") {
    const auto c = parse_config_text(kMinimal, "<config>", {{"experiment.seed", "99"}, {"grid.n_points", "51"}});
    CHECK(c.seed == 99);
    CHECK(c.n_points == 51);
}

TEST_CASE("configuration errors") {
    const auto typo = error_of("[experiment]\nkind = kernels\n[kernels]\npreset = free\ngama = 0.1\n");
    CHECK(typo.find("kernels.gama") != std::string::npos);
    CHECK(typo.find("did you mean 'kernels.gamma'") != std::string::npos);

    const auto count = error_of(std::string(kMinimal) + "[ensemble]\ncount = 0\n");
    CHECK(count.find("ensemble.count") != std::string::npos);
    CHECK(count.find("out of range") != std::string::npos);

    const auto missing = error_of("[experiment]\nkind = kernels\n");
    CHECK(missing.find("kernels.preset") != std::string::npos);

    CHECK(error_of("[experiment]\nkind = dance\n[kernels]\npreset = free\n").find("experiment.kind") !=
          std::string::npos);
    CHECK(levenshtein("gama", "gamma") == 1);
    CHECK_THROWS_AS(parse_config("/nonexistent/qbm.ini"), ConfigurationError);
}

TEST_CASE("Wigner table files") {
    const auto dir = scratch("table");
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "w.txt");
        out << "16 16 -4 4 -4 4\n";
        for (int i = 0; i < 256; ++i) out << (i == 136 ? 1.0 : 0.0) << ' ';
    }
    const auto t = read_wigner_table((dir / "w.txt").string());
    CHECK(t.grid.nx == 16);
    CHECK(t.values[136] == 1.0);
    {
        std::ofstream out(dir / "short.txt");
        out << "16 16 -4 4 -4 4\n1 2 3\n";
    }
    CHECK_THROWS(read_wigner_table((dir / "short.txt").string()));
}

TEST_CASE("output directory preflight") {
    const auto dir = scratch("preflight");
    fs::create_directories(dir);
    std::ofstream(dir / "file") << "x";
    CHECK_THROWS_AS(preflight_output_dir((dir / "file" / "sub").string()), IoError);
    CHECK_NOTHROW(preflight_output_dir((dir / "ok").string()));
}

TEST_CASE("simulate is reproducible and thread independent") {
    const std::string text =
        "[experiment]\nkind = simulate\nseed = 5\n[grid]\nt_end = 3\nn_points = 61\n"
        "[kernels]\npreset = drude_nonlocal\n[ensemble]\ncount = 200\n";
    std::vector<std::string> listings;
    for (std::size_t threads : {1u, 3u, 1u}) {
        const auto dir = scratch("sim" + std::to_string(listings.size()));
        auto cfg = parse_config_text(text, "<config>",
                                     {{"experiment.output_dir", dir.string()},
                                      {"experiment.threads", std::to_string(threads)}});
        const auto rep = execute(cfg);
        CHECK(rep.exit_code() == 0);
        std::string all;
        for (const auto& m : rep.manifest) all += m.file + " " + m.sha256 + "\n";
        CHECK_FALSE(all.empty());
        listings.push_back(all);
    }
    CHECK(listings[0] == listings[1]);
    CHECK(listings[0] == listings[2]);
}

TEST_CASE("coefficients run writes a five-column table") {
    const auto dir = scratch("coef");
    auto cfg = parse_config_text(kMinimal, "<config>", {{"experiment.output_dir", dir.string()}});
    const auto rep = execute(cfg);
    CHECK(rep.exit_code() == 0);
    bool found = false;
    for (const auto& m : rep.manifest) {
        if (m.file.find("coefficients.csv") == std::string::npos) continue;
        found = true;
        std::istringstream in(read(dir / m.file));
        std::string header;
        std::getline(in, header);
        CHECK(header == "t,delta_omega_sq,a,b,c");
    }
    CHECK(found);
    CHECK(fs::exists(dir / (rep.prefix() + "_summary.txt")));
    CHECK(fs::exists(dir / (rep.prefix() + "_report.json")));
}

TEST_CASE("local ohmic full cross-check lists the analytic coefficient checks") {
    const std::string text =
        "[experiment]\nkind = full_crosscheck\nseed = 3\n[grid]\nt_end = 3\nn_points = 121\n"
        "[kernels]\npreset = caldeira_leggett_highT\ngamma = 0.2\ntemperature = 2\n"
        "[initial]\nkind = gaussian\nmean_x = 1\n[ensemble]\ncount = 2000\n"
        "[phase_grid]\nnx = 64\nnp = 64\n";
    auto cfg = parse_config_text(text);
    const auto out = run_experiment(cfg);
    const auto* a = find(out.report, "A(t) = gamma");
    const auto* c = find(out.report, "C(t) = 2 gamma T");
    REQUIRE(a);
    REQUIRE(c);
    CHECK(a->status == AssertionStatus::pass);
    CHECK(c->status == AssertionStatus::pass);
    CHECK(out.report.exit_code() == 0);
    std::ostringstream summary;
    write_summary(summary, out.report);
    CHECK(summary.str().find("master_equation") != std::string::npos);
}

TEST_CASE("markov_gap on a memory kernel produces a nonzero gap table") {
    const std::string text =
        "[experiment]\nkind = markov_gap\n[grid]\nt_end = 8\nn_points = 401\n"
        "[kernels]\npreset = drude_nonlocal\n[initial]\nkind = gaussian\nmean_x = 1\n";
    const auto dir = scratch("markov");
    auto cfg = parse_config_text(text, "<config>", {{"experiment.output_dir", dir.string()}});
    const auto rep = execute(cfg);
    CHECK(rep.exit_code() == 0);
    bool nonzero = false;
    for (const auto& m : rep.manifest) {
        if (m.file.find("markov_gap.csv") == std::string::npos) continue;
        std::istringstream in(read(dir / m.file));
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            std::istringstream row(line);
            std::string cell;
            for (int col = 0; col < 5; ++col) std::getline(row, cell, ',');
            if (std::abs(std::stod(cell)) > 1e-4) nonzero = true;
        }
    }
    CHECK(nonzero);
}

TEST_CASE("exit codes") {
    RunReport r;
    CHECK(r.exit_code() == 0);
    r.assertions.push_back({"a -> b", "x", 2.0, 1.0, "<=", AssertionStatus::fail, ""});
    CHECK(r.exit_code() == 1);
    CHECK(exit_code_for(ConfigurationError("bad")) == 2);
    CHECK(exit_code_for(IntegrationFailure("bad", 1.0)) == 3);
}

}  // TEST_SUITE
