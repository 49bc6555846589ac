// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cardiomr/cardiomr.hpp"
#include "test_support.hpp"

using namespace cardiomr;
using namespace cardiomr::testing;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

int failures = 0;

void report(int id, const std::string& name, const std::function<void(Outcome&)>& body) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body(o);
    } catch (const std::exception& e) {
        o.pass = false;
        o.detail << " [exception: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failures;
    std::printf("%s %2d %s:%s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.str().c_str(), secs);
    std::fflush(stdout);
}

std::string sci(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", x);
    return buf;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
    return m;
}

double total_v(const Tree& t) {
    double s = 0.0;
    for (const auto& k : t.leaves()) s += t.grid().area(k.level) * t.node(k).value[kV];
    return s;
}

/// Exact cell averages of x^px y^py on the level-l grid of the unit square.
std::vector<double> monomial_averages(int level, int px, int py) {
    const int n = 1 << level;
    const double h = 1.0 / n;
    auto I = [](int p, double a, double b) { return (std::pow(b, p + 1) - std::pow(a, p + 1)) / (p + 1); };
    std::vector<double> out(static_cast<std::size_t>(n) * n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            out[j * n + i] = I(px, i * h, (i + 1) * h) * I(py, j * h, (j + 1) * h) / (h * h);
    return out;
}

struct ManufacturedResult {
    double relative_residual = 0, mean = 0, max_row_sum = 0;
};

ManufacturedResult manufactured(const std::vector<double>& area, const std::vector<CellCoupling>& couplings,
                                const AxisCoeffs& c, std::mt19937_64& rng) {
    const int n = static_cast<int>(area.size());
    EllipticSystem sys = assemble(area, couplings, c, std::vector<double>(n, 0.0), {});
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> exact(n);
    for (auto& x : exact) x = u(rng);
    remove_weighted_mean(exact, area);
    sys.rhs.assign(n, 0.0);
    sys.matrix.multiply(exact, sys.rhs);
    const auto x = solve_zero_mean(sys);
    std::vector<double> r(n);
    sys.matrix.multiply(x, r);
    double rn = 0, bn = 0;
    ManufacturedResult out;
    for (int k = 0; k < n; ++k) {
        rn += (r[k] - sys.rhs[k]) * (r[k] - sys.rhs[k]);
        bn += sys.rhs[k] * sys.rhs[k];
        out.max_row_sum = std::max(out.max_row_sum, std::abs(sys.matrix.row_sum(k)));
    }
    out.relative_residual = std::sqrt(rn / bn);
    out.mean = weighted_mean(x, area);
    return out;
}

ModelSpec diffusion_only(double sigma) {
    ModelSpec m;
    m.kind = ModelKind::monodomain;
    m.constants = {1.0, 1.0, 1.0};
    m.kinetics = FhnParams{0.0, 0.0, 0.0, 0.25};
    m.intra = {sigma, sigma, 0.0};
    m.extra = m.intra;
    return m;
}

InitialData bumpy() {
    InitialData d;
    d.v = [](double x, double y) { return 0.5 + 0.4 * std::sin(6 * x) * std::cos(5 * y); };
    d.w = [](double x, double y) { return 0.05 * x * y; };
    return d;
}

void fill(Tree& t, const InitialData& d) {
    for (const auto& k : t.leaves()) t.set_value(k, cell_average(d, k, t.grid(), k.level));
    t.project();
}

/// Mean absolute difference of one field over the finest cells.
double l1_diff(const std::vector<Values>& a, const std::vector<Values>& b, Field f) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += std::abs(a[k][f] - b[k][f]);
    return s / static_cast<double>(a.size());
}

}  // namespace

int main() {
    report(1, "lossless transform of the example-1 initial field (L=6)", [](Outcome& o) {
        ScenarioConfig c = preset("example1");
        c.grid.max_level = 6;
        const int L = 6, n = 1 << L;
        const InitialData init = c.initial_data();
        std::vector<double> finest(n * n);
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) finest[j * n + i] = cell_average(init, {L, i, j}, c.grid, L)[kV];
        const double e_arr = max_abs_diff(decode(encode(finest, L, c.stencil), L, c.stencil), finest);
        const Tree t = build_initial_tree(init, c.grid, c.stencil, 0.0);
        const auto flat = flatten(t);
        std::vector<double> tv(flat.size());
        for (std::size_t k = 0; k < flat.size(); ++k) tv[k] = flat[k][kV];
        const double e_tree = max_abs_diff(tv, finest);
        o.detail << " array Linf=" << sci(e_arr) << ", tree Linf=" << sci(e_tree);
        o.require(e_arr <= 1e-12, "array round trip");
        o.require(e_tree <= 1e-12, "full tree flatten");
    });

    report(2, "prediction is a right inverse of projection", [](Outcome& o) {
        std::mt19937_64 rng(2);
        std::uniform_real_distribution<double> u(-10, 10);
        double worst = 0.0;
        for (int trial = 0; trial < 1000; ++trial) {
            double st[5][5];
            for (auto& row : st)
                for (auto& x : row) x = u(rng);
            auto at = [&](int di, int dj) { return st[dj + 2][di + 2]; };
            for (const int s : {1, 2}) {
                double sum = 0.0;
                for (int e2 = 0; e2 < 2; ++e2)
                    for (int e1 = 0; e1 < 2; ++e1) sum += predict_child<double>(at, s, e1, e2);
                worst = std::max(worst, std::abs(0.25 * sum - st[2][2]));
            }
        }
        o.detail << " max error " << sci(worst) << " over 1000 stencils";
        o.require(worst <= 1e-13, "projection of the prediction");
    });

    report(3, "prediction is exact on x, y, xy", [](Outcome& o) {
        auto lin = [](int di, int) { return 2.0 + di; };
        const double p0 = predict_child<double>(lin, 2, 0, 0), p1 = predict_child<double>(lin, 2, 1, 0);
        o.require(std::abs(p0 - 1.75) <= 1e-15 && std::abs(p1 - 2.25) <= 1e-15, "linear oracle {1.75, 2.25}");
        const int L = 6, margin = 6;
        double worst = 0.0;
        for (const auto& [px, py] : {std::pair{1, 0}, {0, 1}, {1, 1}}) {
            const auto m = encode(monomial_averages(L, px, py), L, 2);
            for (int l = 4; l <= L; ++l) {
                const int nl = 1 << l;
                const int mg = std::min(margin, nl / 4);
                for (int j = mg; j < nl - mg; ++j)
                    for (int i = mg; i < nl - mg; ++i) worst = std::max(worst, std::abs(m.details[l][j * nl + i]));
            }
        }
        o.detail << " oracle " << p0 << "/" << p1 << ", max interior detail " << sci(worst);
        o.require(worst <= 1e-12, "interior details");
    });

    report(4, "MR with eps_R=0 equals uniform FV for 50 steps (L=5)", [](Outcome& o) {
        ScenarioConfig c = preset("example1");
        c.grid.max_level = 5;
        const InitialData init = c.initial_data();
        Tree t = build_initial_tree(init, c.grid, c.stencil, 0.0);
        UniformFv fv(c.grid, 5, c.model, init);
        AdaptOptions opt;
        opt.eps_R = 0.0;
        double worst = 0.0;
        const int n = 32;
        for (int s = 0; s < 50; ++s) {
            if (s == 20) {
                // exercise the stimulus path on both schemes
                fv.apply(c.stimuli[0]);
                apply_stimulus(t, c.stimuli[0]);
            }
            const double dt = fv.stable_dt();
            worst = std::max(worst, std::abs(tree_cfl_dt(t, c.model) - dt) / dt);
            fv.step(dt);
            euler_macro_step(t, c.model, dt);
            adapt(t, opt);
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < n; ++i)
                    for (int f = 0; f < kNumFields; ++f)
                        worst = std::max(worst, std::abs(t.node({5, i, j}).value[f] - fv.values()[fv.idx(i, j)][f]));
        }
        o.detail << " max difference " << sci(worst) << ", leaves " << t.leaf_count();
        o.require(t.leaf_count() == 1024, "tree stays fully refined");
        o.require(worst <= 1e-12, "per-field agreement");
    });

    report(5, "LTS conservation and single-level equivalence", [](Outcome& o) {
        const GridSpec g{1.0, 4, {0, 0}};
        const ModelSpec m = diffusion_only(0.02);
        double cons = 0.0;
        for (int level = 1; level <= 3; ++level) {
            Tree t = two_level_tree(g, 2, level);
            fill(t, bumpy());
            const double before = total_v(t);
            lts_macro_step(t, m, {4, 0.5 * tree_cfl_dt(t, m)});
            cons = std::max(cons, std::abs(total_v(t) - before) / std::abs(before));
        }
        double eq = 0.0;
        const GridSpec g3{1.0, 3, {0, 0}};
        for (int level = 0; level <= 3; ++level) {
            Tree a = uniform_tree(g3, 2, level);
            fill(a, bumpy());
            Tree b = a;
            const LtsSchedule s{3, 0.25 * tree_cfl_dt(a, m)};
            lts_macro_step(a, m, s);
            for (int k = 0; k < (1 << level); ++k) euler_macro_step(b, m, s.dt(level));
            for (const auto& k : a.leaves())
                for (int f = 0; f < kNumFields; ++f) eq = std::max(eq, std::abs(a.node(k).value[f] - b.node(k).value[f]));
        }
        o.detail << " relative mass drift " << sci(cons) << ", single-level difference " << sci(eq);
        o.require(cons <= 1e-12, "conservation");
        o.require(eq <= 1e-12, "equivalence");
    });

    report(6, "RKF(3,2) order and fixture", [](Outcome& o) {
        auto rhs = [](double, std::span<const double> u) { return std::vector<double>(u.begin(), u.end()); };
        const std::vector<double> one{1.0};
        const auto r = rkf32(rhs, 0.0, one, 0.1);
        const double fx = std::max({std::abs(r.k1[0] - 0.1), std::abs(r.k2[0] - 0.11), std::abs(r.k3[0] - 0.10525),
                                    std::abs(r.delta - 1.666666666666483e-4)});
        std::vector<double> h, err;
        for (int N = 10; N <= 160; N *= 2) {
            std::vector<double> u{1.0};
            const double dt = 1.0 / N;
            for (int s = 0; s < N; ++s) u = rkf32(rhs, s * dt, u, dt).high;
            h.push_back(std::log(dt));
            err.push_back(std::log(std::abs(u[0] - std::numbers::e)));
        }
        const double n = static_cast<double>(h.size());
        const double sx = std::accumulate(h.begin(), h.end(), 0.0), sy = std::accumulate(err.begin(), err.end(), 0.0);
        const double sxx = std::inner_product(h.begin(), h.end(), h.begin(), 0.0);
        const double sxy = std::inner_product(h.begin(), h.end(), err.begin(), 0.0);
        const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        o.detail << " slope " << slope << ", fixture error " << sci(fx);
        o.require(std::abs(slope - 3.0) <= 0.1, "slope");
        o.require(fx <= 1e-12, "fixture");
    });

    report(7, "elliptic solver on uniform and graded meshes", [](Outcome& o) {
        ModelSpec m;
        m.kind = ModelKind::bidomain;
        m.constants = {2000.0, 1.0, 1.0};
        m.kinetics = MsParams{};
        m.intra = {6.0, 0.6, std::numbers::pi / 4};
        m.extra = {24.0, 12.0, std::numbers::pi / 4};
        std::mt19937_64 rng(7);
        const GridSpec g{5.0, 4, {0, 0}};
        UniformFv fv(g, 4, m, {});
        const auto a = manufactured({fv.areas().begin(), fv.areas().end()},
                                    {fv.couplings().begin(), fv.couplings().end()}, axis_coeffs(m), rng);
        const LeafMesh mesh = build_leaf_mesh(two_level_tree(g, 2, 3));
        const auto b = manufactured(mesh.area, mesh.couplings, axis_coeffs(m), rng);
        o.detail << " residual " << sci(a.relative_residual) << "/" << sci(b.relative_residual) << ", row sum "
                 << sci(std::max(a.max_row_sum, b.max_row_sum)) << ", mean "
                 << sci(std::max(std::abs(a.mean), std::abs(b.mean)));
        o.require(a.relative_residual <= 1e-10 && b.relative_residual <= 1e-10, "residual");
        o.require(a.max_row_sum <= 1e-13 && b.max_row_sum <= 1e-13, "row sums");
        o.require(std::abs(a.mean) <= 1e-12 && std::abs(b.mean) <= 1e-12, "mean");
    });

    // Example 1 at L = 7 against an L = 8 FV reference at t = 3.5 ms.
    ScenarioConfig ex1 = preset("example1");
    ex1.grid.max_level = 7;
    ex1.reference_level = 8;
    ex1.t_end = 3.5;
    ex1.snapshot_times = {3.5};
    std::optional<RunResult> reference;
    std::vector<RunResult> sweep;
    const std::vector<double> eps_list{4e-3, 2e-3, 1e-3};

    report(8, "example-1 error scales with eps_R (L=7 vs FV L=8, t=3.5)", [&](Outcome& o) {
        reference = simulate_fv(ex1, 8);
        for (const double eps : eps_list) {
            ScenarioConfig c = ex1;
            c.eps_R = eps;
            RunResult r = simulate_mr(c, Method::mr);
            attach_metrics(r, &*reference, std::nullopt);
            sweep.push_back(std::move(r));
        }
        std::vector<double> e1;
        for (std::size_t k = 0; k < sweep.size(); ++k) {
            const double e = sweep[k].snapshots.back().errors->v.e1;
            e1.push_back(e);
            o.detail << " eps=" << eps_list[k] << ": e1=" << sci(e);
            o.require(e <= 10.0 * eps_list[k], "e1 <= 10 eps_R at eps_R=" + sci(eps_list[k]));
        }
        for (std::size_t k = 1; k < e1.size(); ++k)
            o.require(e1[k] < e1[k - 1], "monotone decrease from " + sci(eps_list[k - 1]) + " to " + sci(eps_list[k]));
    });

    report(9, "example-1 compression and refinement near the front (eps_R=1e-3)", [&](Outcome& o) {
        if (sweep.size() != 3) {
            ScenarioConfig c = ex1;
            c.eps_R = 1e-3;
            sweep.assign(3, RunResult{});
            sweep[2] = simulate_mr(c, Method::mr);
        }
        const Snapshot& s = sweep[2].snapshots.back();
        const int L = ex1.grid.max_level, n = 1 << L;
        const double h = ex1.grid.side / n;
        const double total = std::ldexp(1.0, 2 * L);
        o.detail << " eta=" << s.eta << ", leaves=" << s.keys.size() << " (" << 100.0 * s.keys.size() / total << "%)";
        o.require(s.eta >= 3.0, "eta >= 3");
        o.require(static_cast<double>(s.keys.size()) < 0.25 * total, "leaves < 25%");

        // annuli of width 2h about the sigmoid centre
        const auto centre = ex1.initial[kV].center;
        const double width = 2.0 * h;
        const int nbins = static_cast<int>(std::ceil(std::sqrt(2.0) * ex1.grid.side / width)) + 1;
        std::vector<double> vsum(nbins, 0.0), cells(nbins, 0.0), fine(nbins, 0.0);
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const auto x = cell_center({L, i, j}, ex1.grid);
                const int b = static_cast<int>(std::hypot(x[0] - centre[0], x[1] - centre[1]) / width);
                vsum[b] += s.flat[j * n + i][kV];
                cells[b] += 1.0;
            }
        int finest = 0;
        for (const auto& k : s.keys) finest = std::max(finest, k.level);
        for (const auto& k : s.keys) {
            if (k.level != finest) continue;
            const auto x = cell_center(k, ex1.grid);
            fine[static_cast<int>(std::hypot(x[0] - centre[0], x[1] - centre[1]) / width)] += std::ldexp(1.0, 2 * (L - k.level));
        }
        double vmax = 0.0;
        for (int b = 0; b < nbins; ++b)
            if (cells[b] > 0) vmax = std::max(vmax, vsum[b] / cells[b]);
        int front = -1;
        for (int b = 0; b + 1 < nbins && front < 0; ++b)
            if (cells[b] > 0 && cells[b + 1] > 0 && vsum[b] / cells[b] >= 0.5 * vmax && vsum[b + 1] / cells[b + 1] < 0.5 * vmax)
                front = b;
        int peak = 0;
        for (int b = 1; b < nbins; ++b)
            if (cells[b] > 0 && fine[b] / cells[b] > fine[peak] / std::max(cells[peak], 1.0)) peak = b;
        o.detail << ", finest leaf level " << finest << ", front annulus r=" << (front + 0.5) * width
                 << ", densest annulus r=" << (peak + 0.5) * width;
        o.require(front >= 0, "half-maximum front found");
        o.require(std::abs(peak - front) <= 1, "finest leaves concentrated within 2 cells of the front");
    });

    report(10, "example-2 bidomain smoke run (L=6, 0.5 ms)", [](Outcome& o) {
        ScenarioConfig c = preset("example2");
        c.grid.max_level = 6;
        c.t_end = 0.5;
        c.snapshot_times = {0.5};
        std::vector<RunResult> runs;
        for (const Method m : {Method::mr, Method::mr_lts, Method::mr_rkf}) runs.push_back(simulate_mr(c, m));
        const double eps = runs[0].eps_R;
        for (std::size_t a = 0; a < runs.size(); ++a)
            for (std::size_t b = a + 1; b < runs.size(); ++b) {
                const double d = l1_diff(runs[a].snapshots.back().flat, runs[b].snapshots.back().flat, kV);
                o.detail << " L1(" << to_string(runs[a].method) << "," << to_string(runs[b].method) << ")=" << sci(d);
                o.require(d <= 10.0 * eps, "pairwise L1 within 10 eps_R");
            }
        // second moments of |v| along the fibre direction and across it, about the |v| centroid
        const int L = c.grid.max_level, n = 1 << L;
        for (const auto& r : runs) {
            const auto& flat = r.snapshots.back().flat;
            double m0 = 0, mx = 0, my = 0;
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < n; ++i) {
                    const double w = std::abs(flat[j * n + i][kV]);
                    const auto x = cell_center({L, i, j}, c.grid);
                    m0 += w;
                    mx += w * x[0];
                    my += w * x[1];
                }
            mx /= m0;
            my /= m0;
            double along = 0, across = 0;
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < n; ++i) {
                    const double w = std::abs(flat[j * n + i][kV]);
                    const auto x = cell_center({L, i, j}, c.grid);
                    const double p = (x[0] - mx + x[1] - my) / std::sqrt(2.0);
                    const double q = (x[0] - mx - x[1] + my) / std::sqrt(2.0);
                    along += w * p * p;
                    across += w * q * q;
                }
            const double ratio = along / across;
            o.detail << " ecc(" << to_string(r.method) << ")=" << std::setprecision(12) << ratio;
            o.require(ratio - 1.0 > 1e-6, "eccentricity along the fibres exceeds 1 for " + to_string(r.method));
        }
    });

    report(11, "10^4 random refine/coarsen sequences stay graded", [](Outcome& o) {
        std::mt19937_64 rng(11);
        const GridSpec g{1.0, 5, {0, 0}};
        int bad_grading = 0, orphans = 0, bad_tiling = 0;
        for (int trial = 0; trial < 10000; ++trial) {
            const Tree t = random_tree(g, 2, rng, 40);
            bad_grading += !(t.graded() && leaves_graded_bruteforce(t));
            orphans += !siblings_complete(t);
            bad_tiling += !leaves_tile_domain(t);
        }
        o.detail << " ungraded=" << bad_grading << ", orphaned=" << orphans << ", bad tiling=" << bad_tiling;
        o.require(bad_grading == 0, "grading");
        o.require(orphans == 0, "sibling groups");
        o.require(bad_tiling == 0, "tiling");
    });

    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
