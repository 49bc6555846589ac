#pragma once

// Scenario driver: runs the uniform FV path or one of the MR integrators,
// captures snapshots, and writes CSV outputs.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cardiomr/leaf_mesh.hpp"
#include "cardiomr/metrics.hpp"
#include "cardiomr/mrtree.hpp"
#include "cardiomr/scenario.hpp"
#include "cardiomr/timeint.hpp"
#include "cardiomr/uniform_fv.hpp"

namespace cardiomr {

struct Snapshot {
    double t = 0.0;
    int level = 0;                  // resolution of `flat`
    std::vector<Values> flat;       // index j*n+i
    std::vector<NodeKey> keys;      // leaves (all cells for FV)
    std::vector<Values> values;     // leaf values
    double eta = 0.0;
    std::optional<FieldErrors> errors;
    std::optional<double> V;
};

struct RunResult {
    Method method = Method::mr;
    int level = 0;
    double eps_R = 0.0;
    double wall_seconds = 0.0;  // evolution loop only
    long steps = 0;
    std::vector<Snapshot> snapshots;
};

/// Max |I_ion| + |I_app| of the initial data sampled at cell centres of level min(L, 9).
inline double initial_max_currents(const ScenarioConfig& c) {
    const InitialData init = c.initial_data();
    const int l = std::min(c.grid.max_level, 9);
    const int n = 1 << l;
    double mx = 0.0;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const auto x = cell_center({l, i, j}, c.grid);
            mx = std::max(mx, current_magnitude(init.at(x[0], x[1]), c.model));
        }
    return mx;
}

inline double resolve_eps_R(const ScenarioConfig& c) {
    if (c.eps_R) return *c.eps_R;
    return reference_tolerance(c.grid, initial_max_currents(c), c.model.tensor_norm_sum(), c.C, c.alpha);
}

namespace detail {

/// Shared time loop: stimuli at the first step with t_n >= event time, steps clipped
/// so that snapshot, stimulus and end times are hit exactly.
template <class Propose, class Step, class Stimulate, class Capture>
long time_loop(const ScenarioConfig& c, Propose propose, Step step, Stimulate stimulate, Capture capture,
               double& wall) {
    std::vector<StimulusEvent> events = c.stimuli;
    std::stable_sort(events.begin(), events.end(), [](const auto& a, const auto& b) { return a.time < b.time; });
    std::vector<double> snaps = c.snapshot_times;
    std::sort(snaps.begin(), snaps.end());
    const double tol = 1e-12 * std::max(1.0, c.t_end);
    std::size_t next_event = 0, next_snap = 0;
    double t = 0.0;
    long steps = 0;
    wall = 0.0;
    using clock = std::chrono::steady_clock;
    while (true) {
        const auto t0 = clock::now();
        while (next_event < events.size() && events[next_event].time <= t + tol) stimulate(events[next_event++]);
        wall += std::chrono::duration<double>(clock::now() - t0).count();
        while (next_snap < snaps.size() && snaps[next_snap] <= t + tol) capture(snaps[next_snap++]);
        if (t >= c.t_end - tol) break;
        const auto t1 = clock::now();
        double target = c.t_end;
        if (next_snap < snaps.size()) target = std::min(target, snaps[next_snap]);
        if (next_event < events.size()) target = std::min(target, events[next_event].time);
        const double dt = propose(t);
        if (!(dt > 0.0) || !std::isfinite(dt)) throw NumericalError("time step became " + std::to_string(dt));
        const bool clipped = t + dt >= target - tol;
        const double h = clipped ? target - t : dt;
        step(t, h, clipped);
        t = clipped ? target : t + h;
        ++steps;
        wall += std::chrono::duration<double>(clock::now() - t1).count();
    }
    return steps;
}

}  // namespace detail

/// Uniform FV run at `level` (grid.max_level for the method itself, finer for references).
inline RunResult simulate_fv(const ScenarioConfig& c, int level) {
    RunResult r;
    r.method = Method::fv;
    r.level = level;
    UniformFv fv(c.grid, level, c.model, c.initial_data());
    const double N = std::ldexp(1.0, 2 * level);
    auto capture = [&](double t) {
        Snapshot s;
        s.t = t;
        s.level = level;
        s.flat.assign(fv.values().begin(), fv.values().end());
        const int n = fv.cells_per_side();
        s.keys.reserve(s.flat.size());
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) s.keys.push_back({level, i, j});
        s.values = s.flat;
        s.eta = compression_rate(N, level, N);
        r.snapshots.push_back(std::move(s));
    };
    r.steps = detail::time_loop(
        c, [&](double) { return c.cfl_factor * fv.stable_dt(); }, [&](double, double dt, bool) { fv.step(dt); },
        [&](const StimulusEvent& e) { fv.apply(e); }, capture, r.wall_seconds);
    return r;
}

/// MR run with the Euler, LTS or RKF integrator.
inline RunResult simulate_mr(const ScenarioConfig& c, Method method, std::optional<Tree>* final_tree = nullptr) {
    if (method == Method::fv) throw InternalError("simulate_mr called with fv");
    RunResult r;
    r.method = method;
    r.level = c.grid.max_level;
    r.eps_R = resolve_eps_R(c);
    AdaptOptions opt;
    opt.eps_R = r.eps_R;
    opt.rule = c.detail_rule;
    Tree tree = build_initial_tree(c.initial_data(), c.grid, c.stencil, r.eps_R, c.detail_rule);
    const int L = c.grid.max_level;
    const double N = std::ldexp(1.0, 2 * L);
    RkfController ctl = c.rkf;
    bool rkf_started = false;

    auto capture = [&](double t) {
        Snapshot s;
        s.t = t;
        s.level = L;
        tree.project();
        s.flat = flatten(tree);
        s.keys = tree.leaves();
        s.values.reserve(s.keys.size());
        for (const auto& k : s.keys) s.values.push_back(tree.node(k).value);
        s.eta = compression_rate(N, L, static_cast<double>(s.keys.size()));
        r.snapshots.push_back(std::move(s));
    };
    auto stimulate = [&](const StimulusEvent& e) {
        apply_stimulus(tree, e);
        if (e.target == kV && c.model.bidomain()) {
            const LeafMesh mesh = build_leaf_mesh(tree);
            auto u = gather(tree, mesh);
            update_extracellular(mesh, axis_coeffs(c.model), u, {});
            scatter(tree, mesh, u);
        }
    };
    auto propose = [&](double) {
        const double cfl = tree_cfl_dt(tree, c.model);
        switch (method) {
            case Method::mr: return c.cfl_factor * cfl;
            case Method::mr_lts: return std::ldexp(c.cfl_factor * cfl, L);
            default:
                if (!rkf_started) {
                    ctl.dt = c.rkf_initial_cfl * cfl;
                    rkf_started = true;
                }
                return ctl.dt;
        }
    };
    auto step = [&](double t, double dt, bool clipped) {
        switch (method) {
            case Method::mr: euler_macro_step(tree, c.model, dt); break;
            case Method::mr_lts: {
                LtsSchedule s{L, std::ldexp(dt, -L)};
                lts_macro_step(tree, c.model, s, &opt);
                break;
            }
            default: {
                const double delta = rkf_step(tree, c.model, t, dt);
                if (!clipped) ctl.dt = dt_update(delta, dt, ctl, t);
                break;
            }
        }
        adapt(tree, opt);
    };
    r.steps = detail::time_loop(c, propose, step, stimulate, capture, r.wall_seconds);
    if (final_tree) final_tree->emplace(std::move(tree));
    return r;
}

inline RunResult simulate(const ScenarioConfig& c, Method m) {
    return m == Method::fv ? simulate_fv(c, c.grid.max_level) : simulate_mr(c, m);
}

/// Fills errors (vs a reference run) and speed-up (vs an FV timing) for each snapshot.
inline void attach_metrics(RunResult& r, const RunResult* reference, std::optional<double> fv_seconds) {
    const auto V = speedup(fv_seconds, r.wall_seconds);
    for (std::size_t s = 0; s < r.snapshots.size(); ++s) {
        auto& snap = r.snapshots[s];
        snap.V = V;
        if (!reference) continue;
        const auto it = std::find_if(reference->snapshots.begin(), reference->snapshots.end(),
                                     [&](const Snapshot& q) { return std::abs(q.t - snap.t) <= 1e-9; });
        if (it == reference->snapshots.end()) continue;
        snap.errors = lp_errors(snap.keys, snap.values, it->flat, it->level);
    }
}

// ---------------------------------------------------------------------------
// Output

inline std::string time_tag(double t) {
    std::ostringstream os;
    os << "t" << std::setprecision(10) << t;
    return os.str();
}

inline void write_field_csv(const std::filesystem::path& p, const std::vector<Values>& flat, int level, Field f) {
    std::ofstream os(p);
    if (!os) throw ConfigError("cannot write " + p.string());
    os << "i,j,value\n" << std::setprecision(17);
    const int n = 1 << level;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) os << i << ',' << j << ',' << flat[static_cast<std::size_t>(j) * n + i][f] << '\n';
}

inline void write_leaves_csv(const std::filesystem::path& p, const Snapshot& s, const GridSpec& g) {
    std::ofstream os(p);
    if (!os) throw ConfigError("cannot write " + p.string());
    os << "level,i,j,x_center,y_center,v,u_e,w\n" << std::setprecision(17);
    for (std::size_t k = 0; k < s.keys.size(); ++k) {
        const auto c = cell_center(s.keys[k], g);
        const auto& v = s.values[k];
        os << s.keys[k].level << ',' << s.keys[k].i << ',' << s.keys[k].j << ',' << c[0] << ',' << c[1] << ','
           << v[kV] << ',' << v[kUe] << ',' << v[kW] << '\n';
    }
}

inline void write_opt(std::ostream& os, std::optional<double> x) {
    if (x) os << *x;
}

inline void write_metrics_row(std::ostream& os, const Snapshot& s) {
    os << s.t << ',' << s.eta << ',';
    write_opt(os, s.V);
    os << ',';
    if (s.errors) {
        const auto& e = *s.errors;
        os << e.v.e1 << ',' << e.v.e2 << ',' << e.v.einf << ',' << e.ue.e1 << ',' << e.ue.e2 << ',' << e.ue.einf;
    } else {
        os << ",,,,,";
    }
    os << '\n';
}

inline constexpr const char* kMetricsHeader = "t,eta,V,e1_v,e2_v,einf_v,e1_ue,e2_ue,einf_ue";

/// Snapshot CSVs, leaf dumps and metrics.csv under `dir`.
inline void write_run(const std::filesystem::path& dir, const RunResult& r, const ScenarioConfig& c) {
    std::filesystem::create_directories(dir);
    for (const auto& s : r.snapshots) {
        const std::string tag = time_tag(s.t);
        write_field_csv(dir / ("snapshot_" + tag + "_v.csv"), s.flat, s.level, kV);
        if (c.model.bidomain()) write_field_csv(dir / ("snapshot_" + tag + "_u_e.csv"), s.flat, s.level, kUe);
        write_field_csv(dir / ("snapshot_" + tag + "_w.csv"), s.flat, s.level, kW);
        write_leaves_csv(dir / ("leaves_" + tag + ".csv"), s, c.grid);
    }
    std::ofstream os(dir / "metrics.csv");
    if (!os) throw ConfigError("cannot write " + (dir / "metrics.csv").string());
    os << kMetricsHeader << '\n' << std::setprecision(17);
    for (const auto& s : r.snapshots) write_metrics_row(os, s);
}

inline void write_comparison(const std::filesystem::path& p, const std::vector<RunResult>& runs) {
    std::ofstream os(p);
    if (!os) throw ConfigError("cannot write " + p.string());
    os << "method," << kMetricsHeader << ",leaves,wall_seconds,steps\n" << std::setprecision(17);
    for (const auto& r : runs)
        for (const auto& s : r.snapshots) {
            std::ostringstream row;
            row << std::setprecision(17);
            write_metrics_row(row, s);
            std::string line = row.str();
            line.pop_back();
            os << to_string(r.method) << ',' << line << ',' << s.keys.size() << ',' << r.wall_seconds << ','
               << r.steps << '\n';
        }
}

struct CompareResult {
    RunResult reference;
    std::vector<RunResult> runs;
};

/// Runs every method on the scenario and measures it against an FV reference at
/// reference_level (default L + 1).
inline CompareResult compare(const ScenarioConfig& c, const std::vector<Method>& methods) {
    CompareResult out;
    out.reference = simulate_fv(c, c.ref_level());
    std::optional<double> fv_seconds;
    for (const Method m : methods) {
        RunResult r = simulate(c, m);
        if (m == Method::fv) fv_seconds = r.wall_seconds;
        out.runs.push_back(std::move(r));
    }
    for (auto& r : out.runs) attach_metrics(r, &out.reference, fv_seconds);
    return out;
}

struct CalibrationRow {
    double C = 0.0;
    double eps_R = 0.0;
    double eta = 0.0;
    std::optional<double> V;
    std::optional<double> e1;
};

/// Sweeps the constant C of the reference tolerance; each row reports the last snapshot
/// (or the final state when no snapshot times are configured).
inline std::vector<CalibrationRow> calibrate_c(ScenarioConfig c, const std::vector<double>& candidates) {
    for (const double C : candidates)
        if (!(C > 0)) throw ConfigError("calibration candidates must be positive");
    if (c.snapshot_times.empty() || c.snapshot_times.back() < c.t_end) c.snapshot_times.push_back(c.t_end);
    const Method method = c.method == Method::fv ? Method::mr : c.method;
    const RunResult reference = simulate_fv(c, c.ref_level());
    const RunResult fv = simulate_fv(c, c.grid.max_level);
    std::vector<CalibrationRow> rows;
    for (const double C : candidates) {
        ScenarioConfig cc = c;
        cc.eps_R.reset();
        cc.C = C;
        RunResult r = simulate_mr(cc, method);
        attach_metrics(r, &reference, fv.wall_seconds);
        const auto& last = r.snapshots.back();
        CalibrationRow row{C, r.eps_R, last.eta, last.V, std::nullopt};
        if (last.errors) row.e1 = last.errors->v.e1;
        rows.push_back(row);
    }
    return rows;
}

inline void write_calibration(const std::filesystem::path& p, const std::vector<CalibrationRow>& rows, int L) {
    std::ofstream os(p);
    if (!os) throw ConfigError("cannot write " + p.string());
    os << "C,L,eps_R,eta,V,e1_v\n" << std::setprecision(17);
    for (const auto& r : rows) {
        os << r.C << ',' << L << ',' << r.eps_R << ',' << r.eta << ',';
        write_opt(os, r.V);
        os << ',';
        write_opt(os, r.e1);
        os << '\n';
    }
}

}  // namespace cardiomr
