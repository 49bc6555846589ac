#pragma once

// Dyadic cell addressing on a square domain.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>

#include "cardiomr/error.hpp"

namespace cardiomr {

enum Field : int { kV = 0, kUe = 1, kW = 2 };
inline constexpr int kNumFields = 3;

/// Per-cell tuple (v, u_e, w). Monodomain runs keep u_e at zero.
using Values = std::array<double, kNumFields>;

inline Values operator+(Values a, const Values& b) {
    for (int f = 0; f < kNumFields; ++f) a[f] += b[f];
    return a;
}
inline Values operator-(Values a, const Values& b) {
    for (int f = 0; f < kNumFields; ++f) a[f] -= b[f];
    return a;
}
inline Values operator*(double s, Values a) {
    for (auto& x : a) x *= s;
    return a;
}

struct GridSpec {
    double side = 1.0;  // cm; the domain is [origin, origin + side]^2
    int max_level = 7;
    std::array<double, 2> origin{0.0, 0.0};

    double h(int level) const { return side * std::ldexp(1.0, -level); }
    double area(int level) const { return h(level) * h(level); }
    int cells_per_side(int level) const { return 1 << level; }
    double domain_area() const { return side * side; }
};

inline void validate(const GridSpec& g) {
    if (!(g.side > 0)) throw ConfigError("grid.domain_size must be positive");
    if (g.max_level < 1 || g.max_level > 14) throw ConfigError("grid.max_level must be in [1, 14]");
}

/// Cell V_{(i,j),l} = 2^-l [i,i+1] x [j,j+1] in normalized coordinates.
struct NodeKey {
    int level = 0;
    int i = 0;
    int j = 0;

    friend bool operator==(const NodeKey&, const NodeKey&) = default;
    friend auto operator<=>(const NodeKey&, const NodeKey&) = default;

    NodeKey parent() const { return {level - 1, i >> 1, j >> 1}; }
    NodeKey child(int e1, int e2) const { return {level + 1, 2 * i + e1, 2 * j + e2}; }
    NodeKey shifted(int di, int dj) const { return {level, i + di, j + dj}; }
    /// Offset (e1, e2) of this node inside its parent.
    int offset_x() const { return i & 1; }
    int offset_y() const { return j & 1; }

    bool in_domain() const {
        const int n = 1 << level;
        return i >= 0 && j >= 0 && i < n && j < n;
    }
};

struct NodeKeyHash {
    std::size_t operator()(const NodeKey& k) const noexcept {
        const std::uint64_t packed = (static_cast<std::uint64_t>(k.level) << 58) ^
                                     (static_cast<std::uint64_t>(static_cast<std::uint32_t>(k.i)) << 29) ^
                                     static_cast<std::uint64_t>(static_cast<std::uint32_t>(k.j));
        return std::hash<std::uint64_t>{}(packed * 0x9E3779B97F4A7C15ull);
    }
};

inline std::array<double, 2> cell_center(const NodeKey& k, const GridSpec& g) {
    const double h = g.h(k.level);
    return {g.origin[0] + (k.i + 0.5) * h, g.origin[1] + (k.j + 0.5) * h};
}

/// Even reflection of an index into [0, n): -1 -> 0, -2 -> 1, n -> n-1.
inline int mirror_index(int i, int n) {
    const int period = 2 * n;
    int m = i % period;
    if (m < 0) m += period;
    return m < n ? m : period - 1 - m;
}

inline NodeKey mirrored(const NodeKey& k) {
    const int n = 1 << k.level;
    return {k.level, mirror_index(k.i, n), mirror_index(k.j, n)};
}

/// Edge neighbours in the order -x, +x, -y, +y.
inline constexpr std::array<std::array<int, 2>, 4> kFaceOffsets{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};
inline constexpr int face_axis(int face) { return face / 2; }

}  // namespace cardiomr
