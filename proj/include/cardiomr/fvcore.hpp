#pragma once

// Cartesian finite-volume building blocks shared by the uniform reference
// solver and the adaptive leaf mesh.
//
// Sign convention (checked against a propagating excitation front):
//   beta c_m dv/dt = (1/|K|) sum_L G_{K,L} + s I_app - beta I_ion
// with G_{K,L} = +d*_mono (v_L - v_K)   for the monodomain model,
//      G_{K,L} = -d*_e    (ue_L - ue_K) for the bidomain model,
// and s = lambda/(1+lambda) (monodomain) or 1 (bidomain).

#include <array>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cardiomr/error.hpp"
#include "cardiomr/grid.hpp"
#include "cardiomr/kinetics.hpp"

namespace cardiomr {

enum class ModelKind { monodomain, bidomain };

struct ModelSpec {
    ModelKind kind = ModelKind::monodomain;
    ModelConstants constants;
    ConductivitySpec intra;
    ConductivitySpec extra;
    Kinetics kinetics = FhnParams{};

    bool bidomain() const { return kind == ModelKind::bidomain; }
    Tensor2 intra_tensor() const { return conductivity_tensor(intra); }
    Tensor2 extra_tensor() const { return conductivity_tensor(extra); }
    /// M_i / (1 + lambda): the diffusion tensor of the monodomain equation.
    Tensor2 mono_tensor() const { return scaled(intra_tensor(), 1.0 / (1.0 + constants.lambda_mono)); }
    double source_factor() const {
        return bidomain() ? 1.0 : constants.lambda_mono / (1.0 + constants.lambda_mono);
    }
    /// max_K (|M_i,K| + |M_e,K|) for constant tensors. Monodomain uses its single
    /// effective tensor.
    double tensor_norm_sum() const {
        return bidomain() ? spectral_norm(intra_tensor()) + spectral_norm(extra_tensor())
                          : spectral_norm(mono_tensor());
    }
    Rates rates(double v, double w) const { return kinetic_rates(v, w, kinetics, constants.c_m); }
};

inline void validate(const ModelSpec& m) {
    validate(m.constants);
    validate(m.intra, "conductivity.intra");
    if (m.bidomain()) validate(m.extra, "conductivity.extra");
    std::visit([](const auto& k) { validate(k); }, m.kinetics);
}

struct EdgeCoeff {
    double d_star = 0.0;
    double edge_length = 0.0;
    double center_distance = 0.0;

    double transmissibility() const { return center_distance > 0 ? d_star * edge_length / center_distance : 0.0; }
};

/// General two-point coefficient: d* = M_KL M_LK d(K,L) / (d(K,s) M_KL + d(L,s) M_LK),
/// with M_KL = |M_K n|. A zero tensor-normal product gives d* = 0.
inline EdgeCoeff edge_coeff(const Tensor2& m_left, const Tensor2& m_right, int axis, double dist_left,
                            double dist_right, double edge_length) {
    const double ml = normal_projection(m_left, axis);
    const double mr = normal_projection(m_right, axis);
    const double d = dist_left + dist_right;
    const double denom = dist_left * ml + dist_right * mr;
    EdgeCoeff c;
    c.edge_length = edge_length;
    c.center_distance = d;
    c.d_star = (denom > 0.0 && ml > 0.0 && mr > 0.0) ? ml * mr * d / denom : 0.0;
    return c;
}

/// Same-level Cartesian edge at `level`: |sigma| = d(K,L) = h(level).
inline EdgeCoeff edge_coeff(const Tensor2& m_left, const Tensor2& m_right, int axis, int level, const GridSpec& grid) {
    const double h = grid.h(level);
    return edge_coeff(m_left, m_right, axis, 0.5 * h, 0.5 * h, h);
}

/// F = d* |sigma|/d (u_right - u_left); antisymmetric in (left, right).
inline double diffusive_flux(double u_left, double u_right, const EdgeCoeff& c) {
    return c.transmissibility() * (u_right - u_left);
}

/// Zero-flux boundary edge.
inline double boundary_flux() { return 0.0; }

/// Edge coefficients d* per axis for the constant tensors of a model.
struct AxisCoeffs {
    std::array<double, 2> evolved{};  // coefficient of the field whose flux drives v
    std::array<double, 2> intra{};
    std::array<double, 2> extra{};
    double flux_sign = 1.0;           // +1 monodomain (diffuse v), -1 bidomain (ue flux)
    Field flux_field = kV;
};

inline AxisCoeffs axis_coeffs(const ModelSpec& m) {
    AxisCoeffs c;
    const Tensor2 mi = m.intra_tensor();
    for (int axis = 0; axis < 2; ++axis) {
        c.intra[axis] = normal_projection(mi, axis);
        if (m.bidomain()) {
            c.extra[axis] = normal_projection(m.extra_tensor(), axis);
            c.evolved[axis] = c.extra[axis];
        } else {
            c.evolved[axis] = normal_projection(m.mono_tensor(), axis);
        }
    }
    c.flux_sign = m.bidomain() ? -1.0 : 1.0;
    c.flux_field = m.bidomain() ? kUe : kV;
    return c;
}

/// Delta t = h / (2 max(|I_ion|+|I_app|) + 4 h^-1 max(|M_i|+|M_e|)).
inline double cfl_dt(double h, double max_currents, double max_tensor_sum) {
    const double denom = 2.0 * max_currents + 4.0 * max_tensor_sum / h;
    if (!(denom > 0.0) || !std::isfinite(denom))
        throw NumericalError("cfl_dt: degenerate model, CFL denominator is " + std::to_string(denom));
    return h / denom;
}

/// dv/dt for one cell given the summed face fluxes G (already signed).
inline double v_rate(double flux_sum, double area, double i_app, double i_ion, const ModelSpec& m) {
    const double beta = m.constants.beta;
    return (flux_sum / area + m.source_factor() * i_app - beta * i_ion) / (beta * m.constants.c_m);
}

inline double parabolic_update(double v, double flux_sum, double area, double i_app, double i_ion, double dt,
                               const ModelSpec& m) {
    return v + dt * v_rate(flux_sum, area, i_app, i_ion, m);
}

/// w^{n+1} = w^n + dt H(v^n, w^n).
inline double gating_step(double v, double w, double dt, const ModelSpec& m) { return w + dt * m.rates(v, w).H; }

/// One explicit Euler step of (v, w) for a cell with zero applied current; u_e is untouched.
inline Values euler_update(const Values& u, double flux_sum, double area, double dt, const ModelSpec& m) {
    const Rates r = m.rates(u[kV], u[kW]);
    Values out = u;
    out[kW] = u[kW] + dt * r.H;
    out[kV] = parabolic_update(u[kV], flux_sum, area, 0.0, r.I_ion, dt, m);
    return out;
}

/// |I_ion| + |I_app| for the CFL bound (applied currents are zero between stimuli).
inline double current_magnitude(const Values& u, const ModelSpec& m) { return std::abs(m.rates(u[kV], u[kW]).I_ion); }

struct StimulusEvent {
    double time = 0.0;                       // ms
    std::array<double, 2> center{0.5, 0.5};  // cm
    double radius_sq = 0.04;                 // cm^2
    double amplitude = 1.0;                  // mV
    Field target = kV;
};

inline bool stimulus_covers(const StimulusEvent& e, const std::array<double, 2>& x) {
    const double dx = x[0] - e.center[0];
    const double dy = x[1] - e.center[1];
    return dx * dx + dy * dy < e.radius_sq;
}

/// Adds the amplitude to every cell whose centre lies inside the disc.
inline void apply_stimulus(std::span<Values> cells, std::span<const std::array<double, 2>> centers,
                           const StimulusEvent& e) {
    for (std::size_t k = 0; k < cells.size(); ++k)
        if (stimulus_covers(e, centers[k])) cells[k][e.target] += e.amplitude;
}

using ScalarField = std::function<double(double, double)>;

/// Initial data (v0, u_e0, w0) as functions of physical coordinates.
struct InitialData {
    ScalarField v = [](double, double) { return 0.0; };
    ScalarField ue = [](double, double) { return 0.0; };
    ScalarField w = [](double, double) { return 0.0; };

    Values at(double x, double y) const { return {v(x, y), ue(x, y), w(x, y)}; }
};

/// Cell average of `key` by composite midpoint quadrature on the level-`quad_level`
/// subcells it contains (quad_level >= key.level).
inline Values cell_average(const InitialData& init, const NodeKey& key, const GridSpec& grid, int quad_level) {
    const int shift = quad_level - key.level;
    const int n = 1 << shift;
    const double h = grid.h(quad_level);
    const double x0 = grid.origin[0] + key.i * grid.h(key.level);
    const double y0 = grid.origin[1] + key.j * grid.h(key.level);
    Values sum{0.0, 0.0, 0.0};
    for (int b = 0; b < n; ++b)
        for (int a = 0; a < n; ++a) sum = sum + init.at(x0 + (a + 0.5) * h, y0 + (b + 0.5) * h);
    return (1.0 / (static_cast<double>(n) * n)) * sum;
}

}  // namespace cardiomr
