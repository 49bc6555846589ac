#pragma once

// Compression rate, speed-up and leaf-wise Lp errors against a fine reference.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "cardiomr/error.hpp"
#include "cardiomr/grid.hpp"

namespace cardiomr {

/// eta = N / (2^{-(L+1)} N + #leaves).
inline double compression_rate(double finest_cells, int max_level, double leaf_count) {
    if (!(finest_cells > 0) || !(leaf_count > 0)) throw InternalError("compression_rate: counts must be positive");
    return finest_cells / (std::ldexp(finest_cells, -(max_level + 1)) + leaf_count);
}

/// CPU_FV / CPU_MR; absent when either timing is missing or not positive.
inline std::optional<double> speedup(std::optional<double> cpu_fv, std::optional<double> cpu_mr) {
    if (!cpu_fv || !cpu_mr || !(*cpu_fv > 0) || !(*cpu_mr > 0)) return std::nullopt;
    return *cpu_fv / *cpu_mr;
}

struct ErrorReport {
    double e1 = 0.0;
    double e2 = 0.0;
    double einf = 0.0;
};

struct FieldErrors {
    ErrorReport v;
    ErrorReport ue;
};

/// Average of the level-`ref_level` reference over the cell `k`.
inline Values project_reference(std::span<const Values> ref, int ref_level, const NodeKey& k) {
    if (k.level > ref_level) throw ConfigError("lp_errors: reference is coarser than the solution");
    const int shift = ref_level - k.level;
    const int m = 1 << shift;
    const int n = 1 << ref_level;
    Values s{};
    for (int b = 0; b < m; ++b)
        for (int a = 0; a < m; ++a) s = s + ref[static_cast<std::size_t>((k.j * m + b)) * n + k.i * m + a];
    return (1.0 / (static_cast<double>(m) * m)) * s;
}

/// e_inf = max |diff|, e_p = ((1/#leaves) sum |diff|^p)^{1/p} over the given cells.
inline FieldErrors lp_errors(std::span<const NodeKey> keys, std::span<const Values> values, std::span<const Values> ref,
                             int ref_level) {
    if (keys.size() != values.size()) throw InternalError("lp_errors: size mismatch");
    if (ref.size() != (std::size_t{1} << (2 * ref_level))) throw ConfigError("lp_errors: reference size mismatch");
    FieldErrors out;
    double s1v = 0, s2v = 0, s1e = 0, s2e = 0;
    for (std::size_t k = 0; k < keys.size(); ++k) {
        const Values r = project_reference(ref, ref_level, keys[k]);
        const double dv = std::abs(values[k][kV] - r[kV]);
        const double de = std::abs(values[k][kUe] - r[kUe]);
        s1v += dv;
        s2v += dv * dv;
        s1e += de;
        s2e += de * de;
        out.v.einf = std::max(out.v.einf, dv);
        out.ue.einf = std::max(out.ue.einf, de);
    }
    const double n = static_cast<double>(std::max<std::size_t>(keys.size(), 1));
    out.v.e1 = s1v / n;
    out.v.e2 = std::sqrt(s2v / n);
    out.ue.e1 = s1e / n;
    out.ue.e2 = std::sqrt(s2e / n);
    return out;
}

}  // namespace cardiomr
