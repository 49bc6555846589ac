// Command-line driver: run, compare and calibrate-c on JSON scenarios.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cardiomr/cardiomr.hpp"
#include "manifest.hpp"

namespace fs = std::filesystem;
using namespace cardiomr;
using cli::json;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string preset;
    std::string out;
    std::optional<unsigned> seed;
};

void add_common(CLI::App* app, CommonArgs& a) {
    app->add_option("config", a.config_path, "scenario JSON or run manifest");
    app->add_option("--preset", a.preset, "base preset: example1, example2 or example3");
    app->add_option("--out", a.out, "output directory (overrides output_dir)");
    app->add_option("--seed", a.seed, "reserved; every preset is deterministic");
}

json read_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open " + path);
    try {
        return json::parse(is);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

ScenarioConfig resolve_config(const CommonArgs& a) {
    if (a.config_path.empty() && a.preset.empty()) throw ConfigError("give a config file or --preset");
    ScenarioConfig c;
    if (a.config_path.empty()) {
        c = preset(a.preset);
    } else {
        const json j = read_json(a.config_path);
        if (cli::is_manifest(j)) {
            c = cli::config_from_manifest(j);
        } else {
            c = load_config(j, a.preset.empty() ? std::nullopt : std::optional<std::string>(a.preset));
        }
    }
    if (!a.out.empty()) c.output_dir = a.out;
    if (a.seed) c.seed = *a.seed;
    validate(c);
    return c;
}

/// CARDIOMR_THREADS caps data parallelism; the kernels are serial, the value is recorded.
int thread_cap() {
    const char* s = std::getenv("CARDIOMR_THREADS");
    if (!s || !*s) return 1;
    char* end = nullptr;
    const long n = std::strtol(s, &end, 10);
    if (*end != '\0' || n < 1) throw ConfigError("CARDIOMR_THREADS must be a positive integer");
    return static_cast<int>(n);
}

void write_manifest(const fs::path& dir, const json& m) {
    fs::create_directories(dir);
    std::ofstream os(dir / "manifest.json");
    if (!os) throw ConfigError("cannot write " + (dir / "manifest.json").string());
    os << m.dump(2) << '\n';
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError("not a number: '" + item + "'");
        }
    }
    if (out.empty()) throw ConfigError("empty candidate list");
    return out;
}

std::vector<Method> parse_methods(const std::string& s) {
    std::vector<Method> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_method(item));
    if (out.empty()) throw ConfigError("empty method list");
    return out;
}

int cmd_run(const CommonArgs& a, const std::string& method_override, int threads) {
    ScenarioConfig c = resolve_config(a);
    if (!method_override.empty()) c.method = parse_method(method_override);
    const RunResult r = simulate(c, c.method);
    const fs::path dir = c.output_dir;
    write_run(dir, r, c);
    json extra{{"method", to_string(r.method)}, {"eps_R", r.eps_R},  {"steps", r.steps},
               {"wall_seconds", r.wall_seconds}, {"threads", threads}};
    write_manifest(dir, cli::make_manifest("run", c, extra));
    std::cout << c.name << ": " << to_string(r.method) << " finished in " << r.steps << " steps, "
              << r.wall_seconds << " s, output in " << dir.string() << '\n';
    return 0;
}

int cmd_compare(const CommonArgs& a, const std::string& methods, int threads) {
    const ScenarioConfig c = resolve_config(a);
    const auto ms = parse_methods(methods);
    const CompareResult out = compare(c, ms);
    const fs::path dir = c.output_dir;
    fs::create_directories(dir);
    for (const auto& r : out.runs) write_run(dir / to_string(r.method), r, c);
    write_comparison(dir / "comparison.csv", out.runs);
    json walls = json::object();
    for (const auto& r : out.runs) walls[to_string(r.method)] = r.wall_seconds;
    json extra{{"methods", methods},
               {"reference_level", c.ref_level()},
               {"reference_wall_seconds", out.reference.wall_seconds},
               {"wall_seconds", walls},
               {"threads", threads}};
    write_manifest(dir, cli::make_manifest("compare", c, extra));
    std::cout << "comparison written to " << (dir / "comparison.csv").string() << '\n';
    return 0;
}

int cmd_calibrate(const CommonArgs& a, const std::string& candidates, int threads) {
    const ScenarioConfig c = resolve_config(a);
    const auto cs = parse_list(candidates);
    const auto rows = calibrate_c(c, cs);
    const fs::path dir = c.output_dir;
    fs::create_directories(dir);
    write_calibration(dir / "calibration.csv", rows, c.grid.max_level);
    for (std::size_t k = 1; k < rows.size(); ++k)
        if (rows[k].C >= rows[k - 1].C && rows[k].eta < rows[k - 1].eta)
            std::cerr << "note: eta decreased from C=" << rows[k - 1].C << " to C=" << rows[k].C << '\n';
    write_manifest(dir, cli::make_manifest("calibrate-c", c, {{"candidates", candidates}, {"threads", threads}}));
    std::cout << "calibration written to " << (dir / "calibration.csv").string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive multiresolution solver for the cardiac bidomain and monodomain models"};
    app.require_subcommand(1);

    CommonArgs run_args, cmp_args, cal_args;
    std::string method, methods = "fv,mr,mr_lts,mr_rkf", candidates;

    auto* run = app.add_subcommand("run", "run one scenario");
    add_common(run, run_args);
    run->add_option("--method", method, "fv, mr, mr_lts or mr_rkf (overrides the config)");

    auto* cmp = app.add_subcommand("compare", "run several methods against a fine FV reference");
    add_common(cmp, cmp_args);
    cmp->add_option("--methods", methods, "comma-separated subset of fv,mr,mr_lts,mr_rkf");

    auto* cal = app.add_subcommand("calibrate-c", "sweep the constant C of the reference tolerance");
    add_common(cal, cal_args);
    cal->add_option("--candidates", candidates, "comma-separated positive values")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const int threads = thread_cap();
        if (*run) return cmd_run(run_args, method, threads);
        if (*cmp) return cmd_compare(cmp_args, methods, threads);
        return cmd_calibrate(cal_args, candidates, threads);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 1;
    }
}
