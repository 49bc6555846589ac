#pragma once

// Time integration on the adaptive mesh: global explicit Euler, local time
// stepping with conservative flux registers, and the embedded RKF(3,2) pair.

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "cardiomr/leaf_mesh.hpp"
#include "cardiomr/mrtree.hpp"

namespace cardiomr {

// ---------------------------------------------------------------------------
// RKF(3,2)

struct RkfController {
    double delta_desired = 1e-4;
    double S0 = 0.1;
    double S_min = 0.01;
    int p = 3;
    double dt = 0.0;
    bool literal_branch = false;  // printed "otherwise" branch: always grow by S/2
};

inline void validate(const RkfController& c) {
    if (!(c.delta_desired > 0)) throw ConfigError("rkf.delta_desired must be positive");
    if (!(c.S_min > 0) || !(c.S_min <= c.S0)) throw ConfigError("rkf: need 0 < S_min <= S0");
    if (c.p < 1) throw ConfigError("rkf.p must be positive");
}

/// S(t) = (S0 - S_min) exp(-t/dt) + S_min.
inline double step_limiter(double t, double dt, const RkfController& c) {
    return (c.S0 - c.S_min) * std::exp(-t / dt) + c.S_min;
}

/// Next step size from the truncation estimate of the step just taken with `dt_old`.
inline double dt_update(double delta_old, double dt_old, const RkfController& c, double t) {
    const double S = step_limiter(t, dt_old, c);
    const double candidate = delta_old > 0.0 ? dt_old * std::pow(c.delta_desired / delta_old, 1.0 / c.p)
                                             : std::numeric_limits<double>::infinity();
    if (std::abs(candidate - dt_old) / dt_old <= 0.5 * S) return candidate;
    if (c.literal_branch) return dt_old + 0.5 * S * dt_old;
    return dt_old * (1.0 + (candidate > dt_old ? 0.5 : -0.5) * S);
}

struct RkfResult {
    std::vector<double> k1, k2, k3;
    std::vector<double> high;  // third-order solution, accepted
    std::vector<double> low;   // second-order companion
    double delta = 0.0;        // max |high - low|
};

/// One step of the embedded pair with c2 = a21 = 1, c3 = 1/2, a31 = a32 = 1/4,
/// weights (1/6, 1/6, 2/3) and (1/2, 1/2, 0). `rhs(t, u)` returns du/dt.
template <class Rhs>
RkfResult rkf32(const Rhs& rhs, double t, std::span<const double> u, double dt) {
    const std::size_t n = u.size();
    RkfResult r;
    auto scaled_rhs = [&](double tt, const std::vector<double>& x) {
        std::vector<double> k = rhs(tt, std::span<const double>(x));
        for (auto& ki : k) ki *= dt;
        return k;
    };
    std::vector<double> x(u.begin(), u.end());
    r.k1 = scaled_rhs(t, x);
    for (std::size_t i = 0; i < n; ++i) x[i] = u[i] + r.k1[i];
    r.k2 = scaled_rhs(t + dt, x);
    for (std::size_t i = 0; i < n; ++i) x[i] = u[i] + 0.25 * r.k1[i] + 0.25 * r.k2[i];
    r.k3 = scaled_rhs(t + 0.5 * dt, x);
    r.high.resize(n);
    r.low.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        r.high[i] = u[i] + (r.k1[i] + r.k2[i]) / 6.0 + 2.0 / 3.0 * r.k3[i];
        r.low[i] = u[i] + (r.k1[i] + r.k2[i]) / 2.0;
        r.delta = std::max(r.delta, std::abs(r.high[i] - r.low[i]));
    }
    return r;
}

// ---------------------------------------------------------------------------
// Local time stepping schedule

struct LtsSchedule {
    int max_level = 1;
    double dt_fine = 0.0;  // Delta t at level L

    int substeps() const { return 1 << max_level; }
    int period(int level) const { return 1 << (max_level - level); }
    double dt(int level) const { return std::ldexp(dt_fine, max_level - level); }
    double macro_dt() const { return dt(0); }
    /// Sub-steps are numbered 0 .. 2^L - 1.
    bool starts(int level, int k) const { return k % period(level) == 0; }
    bool ends(int level, int k) const { return (k + 1) % period(level) == 0; }
    /// Coarsest level synchronized after `done` completed sub-steps.
    int synchronized_level(int done) const {
        if (done % substeps() == 0) return 0;
        return max_level - std::countr_zero(static_cast<unsigned>(done));
    }
};

// ---------------------------------------------------------------------------
// Tree integrators

inline double tree_max_currents(const Tree& t, const ModelSpec& m) {
    double mx = 0.0;
    for (const auto& [k, n] : t.nodes())
        if (!n.has_children) mx = std::max(mx, current_magnitude(n.value, m));
    return mx;
}

inline double tree_cfl_dt(const Tree& t, const ModelSpec& m) {
    return cfl_dt(t.grid().h(t.max_level()), tree_max_currents(t, m), m.tensor_norm_sum());
}

inline void update_extracellular(const LeafMesh& mesh, const AxisCoeffs& c, std::vector<Values>& u,
                                 const SolveOptions& solve) {
    const auto v = field_of(u, kV);
    const auto guess = field_of(u, kUe);
    const auto ue = solve_extracellular(mesh, c, v, guess, solve);
    for (std::size_t k = 0; k < u.size(); ++k) u[k][kUe] = ue[k];
}

/// Gating, parabolic update with u_e^n (or v^n) fluxes, then u_e^{n+1}. No adaptation.
inline void euler_macro_step(Tree& t, const ModelSpec& m, double dt, const SolveOptions& solve = {}) {
    const AxisCoeffs c = axis_coeffs(m);
    const LeafMesh mesh = build_leaf_mesh(t);
    t.project();
    auto u = gather(t, mesh);
    const auto virt = virtual_values(t, mesh);
    const auto g = flux_sums(mesh, u, virt, c);
    for (int a = 0; a < mesh.size(); ++a) u[a] = euler_update(u[a], g[a], mesh.area[a], dt, m);
    if (m.bidomain()) update_extracellular(mesh, c, u, solve);
    scatter(t, mesh, u);
}

/// One synchronized LTS cycle of 2^L sub-steps. With `partial` set, the tree is re-thresholded
/// after every even number of sub-steps on the levels that are synchronized at that point.
inline void lts_macro_step(Tree& t, const ModelSpec& m, const LtsSchedule& s, const AdaptOptions* partial = nullptr,
                           const SolveOptions& solve = {}) {
    if (s.max_level != t.max_level()) throw InternalError("lts: schedule and tree levels differ");
    const AxisCoeffs c = axis_coeffs(m);
    const double bcm = m.constants.beta * m.constants.c_m;
    LeafMesh mesh = build_leaf_mesh(t);
    t.project();
    auto u = gather(t, mesh);
    std::vector<double> reg(mesh.size(), 0.0);
    std::vector<Rates> src(mesh.size());

    for (int k = 0; k < s.substeps(); ++k) {
        const auto virt = virtual_values(t, mesh);
        const Field fld = c.flux_field;
        for (int a = 0; a < mesh.size(); ++a) {
            const int l = mesh.keys[a].level;
            if (!s.starts(l, k)) continue;
            const double dtl = s.dt(l);
            src[a] = m.rates(u[a][kV], u[a][kW]);
            for (int f = 0; f < 4; ++f) {
                const FaceLink& link = mesh.faces[a][f];
                const double T = c.evolved[face_axis(f)];
                if (link.kind == LinkKind::same_level) {
                    reg[a] += dtl * c.flux_sign * T * (u[link.neighbor][fld] - u[a][fld]);
                } else if (link.kind == LinkKind::coarser) {
                    const double F = dtl * c.flux_sign * T * (virt[link.virtual_slot][fld] - u[a][fld]);
                    reg[a] += F;
                    reg[link.neighbor] -= F;
                }
            }
        }
        bool any_end = false;
        for (int a = 0; a < mesh.size(); ++a) {
            const int l = mesh.keys[a].level;
            if (!s.ends(l, k)) continue;
            const double dtl = s.dt(l);
            u[a][kV] += (reg[a] / mesh.area[a] - dtl * m.constants.beta * src[a].I_ion) / bcm;
            u[a][kW] += dtl * src[a].H;
            reg[a] = 0.0;
            any_end = true;
        }
        if (!any_end) continue;
        if (m.bidomain()) update_extracellular(mesh, c, u, solve);
        scatter(t, mesh, u);

        const int done = k + 1;
        if (partial && done < s.substeps() && done % 2 == 0) {
            AdaptOptions opt = *partial;
            opt.min_level = std::max(opt.min_level, s.synchronized_level(done));
            const AdaptStats st = adapt(t, opt);
            if (st.merged + st.split == 0) continue;
            LeafMesh next = build_leaf_mesh(t);
            std::vector<double> reg2(next.size(), 0.0);
            std::vector<Rates> src2(next.size());
            for (int a = 0; a < next.size(); ++a) {
                const auto it = mesh.index.find(next.keys[a]);
                if (it == mesh.index.end()) continue;
                reg2[a] = reg[it->second];
                src2[a] = src[it->second];
            }
            mesh = std::move(next);
            reg = std::move(reg2);
            src = std::move(src2);
            t.project();
            u = gather(t, mesh);
        }
    }
}

/// One RKF(3,2) step on the frozen current mesh. Returns the truncation estimate over (v, w).
/// Bidomain stages 2 and 3 solve u_e from the stage v; stage 1 uses the stored u_e.
inline double rkf_step(Tree& t, const ModelSpec& m, double t_now, double dt, const SolveOptions& solve = {}) {
    const AxisCoeffs c = axis_coeffs(m);
    const LeafMesh mesh = build_leaf_mesh(t);
    t.project();
    const auto u0 = gather(t, mesh);
    const int n = mesh.size();
    std::vector<double> y(2 * n);
    for (int a = 0; a < n; ++a) {
        y[a] = u0[a][kV];
        y[n + a] = u0[a][kW];
    }
    std::vector<double> ue = field_of(u0, kUe);
    int stage = 0;
    auto rhs = [&](double, std::span<const double> x) {
        std::vector<Values> u(n);
        for (int a = 0; a < n; ++a) u[a] = {x[a], ue[a], x[n + a]};
        if (m.bidomain() && stage > 0) {
            update_extracellular(mesh, c, u, solve);
            for (int a = 0; a < n; ++a) ue[a] = u[a][kUe];
        }
        ++stage;
        scatter(t, mesh, u);
        const auto virt = virtual_values(t, mesh);
        const auto g = flux_sums(mesh, u, virt, c);
        std::vector<double> out(2 * n);
        for (int a = 0; a < n; ++a) {
            const Rates r = m.rates(u[a][kV], u[a][kW]);
            out[a] = v_rate(g[a], mesh.area[a], 0.0, r.I_ion, m);
            out[n + a] = r.H;
        }
        return out;
    };
    const RkfResult r = rkf32(rhs, t_now, y, dt);
    std::vector<Values> u(n);
    for (int a = 0; a < n; ++a) u[a] = {r.high[a], ue[a], r.high[n + a]};
    if (m.bidomain()) update_extracellular(mesh, c, u, solve);
    scatter(t, mesh, u);
    return r.delta;
}

}  // namespace cardiomr
