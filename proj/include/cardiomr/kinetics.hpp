#pragma once

// Membrane kinetics and conductivity tensors.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <variant>

#include "cardiomr/error.hpp"

namespace cardiomr {

/// Symmetric 2x2 tensor stored row-major: {m00, m01, m10, m11}.
using Tensor2 = std::array<double, 4>;

struct FhnParams {
    double a = 0.16875;
    double b = 1.0;
    double lambda = -100.0;
    double theta = 0.25;
};

struct MsParams {
    double v_p = 100.0;    // mV
    double R_m = 2.0e4;    // Ohm cm^2
    double eta1 = 0.005;
    double eta2 = 0.1;
    double eta3 = 1.5;
    double eta4 = 7.5;
    double eta5 = 0.1;
};

struct ConductivitySpec {
    double sigma_l = 1.0;      // along fiber
    double sigma_t = 1.0;      // across fiber
    double fiber_angle = 0.0;  // radians, measured from the x-axis
};

struct ModelConstants {
    double beta = 1.0;         // cm^-1
    double c_m = 1.0;          // mF/cm^2
    double lambda_mono = 1.0;  // M_i = lambda M_e, monodomain only
};

using Kinetics = std::variant<FhnParams, MsParams>;

/// Gating rate H and ionic current I_ion at one point.
struct Rates {
    double H = 0.0;
    double I_ion = 0.0;
};

inline Rates fhn_rates(double v, double w, const FhnParams& p) {
    return {p.a * v - p.b * w, -p.lambda * (w - v * (1.0 - v) * (v - p.theta))};
}

/// Heaviside with H(0) = 1.
inline double heaviside(double x) { return x >= 0.0 ? 1.0 : 0.0; }

/// Needs c_m because the gating time constant is R_m c_m eta_inf.
inline Rates ms_rates(double v, double w, const MsParams& p, double c_m) {
    const double s = v / p.v_p;
    const double gate = heaviside(s - p.eta5);
    const double w_inf = gate;
    const double eta_inf = p.eta3 + (p.eta4 - p.eta3) * gate;
    const double H = (w_inf - w) / (p.R_m * c_m * eta_inf);
    const double I = (p.v_p / p.R_m) *
                     (v / (p.v_p * p.eta2) - v * v * (1.0 - v / p.v_p) * w / (p.v_p * p.v_p * p.eta1));
    return {H, I};
}

inline Rates kinetic_rates(double v, double w, const Kinetics& k, double c_m) {
    if (const auto* f = std::get_if<FhnParams>(&k)) return fhn_rates(v, w, *f);
    return ms_rates(v, w, std::get<MsParams>(k), c_m);
}

/// M = sigma_t I + (sigma_l - sigma_t) a a^T with a = (cos angle, sin angle).
inline Tensor2 conductivity_tensor(const ConductivitySpec& spec) {
    const double c = std::cos(spec.fiber_angle);
    const double s = std::sin(spec.fiber_angle);
    const double d = spec.sigma_l - spec.sigma_t;
    return {spec.sigma_t + d * c * c, d * c * s, d * s * c, spec.sigma_t + d * s * s};
}

inline Tensor2 scaled(const Tensor2& m, double f) { return {m[0] * f, m[1] * f, m[2] * f, m[3] * f}; }

/// Eigenvalues of a symmetric 2x2 tensor, ascending.
inline std::array<double, 2> eigenvalues(const Tensor2& m) {
    const double mean = 0.5 * (m[0] + m[3]);
    const double half_diff = 0.5 * (m[0] - m[3]);
    const double r = std::hypot(half_diff, m[1]);
    return {mean - r, mean + r};
}

/// Spectral norm; the tensors here are SPD so this is the largest eigenvalue.
inline double spectral_norm(const Tensor2& m) {
    const auto ev = eigenvalues(m);
    return std::max(std::abs(ev[0]), std::abs(ev[1]));
}

/// |M n| for the unit normal of axis 0 (x) or 1 (y).
inline double normal_projection(const Tensor2& m, int axis) {
    return axis == 0 ? std::hypot(m[0], m[2]) : std::hypot(m[1], m[3]);
}

inline void validate(const MsParams& p) {
    if (!(p.v_p > 0) || !(p.R_m > 0) || !(p.eta1 > 0) || !(p.eta2 > 0) || !(p.eta3 > 0) || !(p.eta4 > 0))
        throw ConfigError("mitchell_schaeffer: v_p, R_m, eta1..eta4 must be positive");
}

inline void validate(const FhnParams& p) {
    if (!std::isfinite(p.a) || !std::isfinite(p.b) || !std::isfinite(p.lambda) || !std::isfinite(p.theta))
        throw ConfigError("fhn: parameters must be finite");
}

inline void validate(const ConductivitySpec& c, const std::string& which) {
    if (!(c.sigma_l > 0) || !(c.sigma_t > 0))
        throw ConfigError(which + ": conductivities must be positive");
    if (!std::isfinite(c.fiber_angle)) throw ConfigError(which + ": fiber_angle must be finite");
}

inline void validate(const ModelConstants& c) {
    if (!(c.beta > 0) || !(c.c_m > 0)) throw ConfigError("beta and c_m must be positive");
    if (!std::isfinite(c.lambda_mono) || c.lambda_mono == -1.0)
        throw ConfigError("lambda_mono must be finite and different from -1");
}

}  // namespace cardiomr
