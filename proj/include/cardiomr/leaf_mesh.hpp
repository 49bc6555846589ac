#pragma once

// Flat view of the tree leaves used by the time integrators: per-leaf geometry,
// face links, virtual neighbours and the cell couplings of the elliptic operator.

#include <array>
#include <span>
#include <unordered_map>
#include <vector>

#include "cardiomr/elliptic.hpp"
#include "cardiomr/mrtree.hpp"

namespace cardiomr {

enum class LinkKind { boundary, same_level, coarser, finer };

/// same_level: `neighbor` is a leaf index. coarser: the neighbour position is a virtual
/// leaf (`virtual_slot`) owned by the coarse leaf `neighbor`. finer: handled by the fine side.
struct FaceLink {
    LinkKind kind = LinkKind::boundary;
    int neighbor = -1;
    int virtual_slot = -1;
};

struct LeafMesh {
    std::vector<NodeKey> keys;
    std::vector<double> area;
    std::vector<std::array<double, 2>> center;
    std::vector<std::array<FaceLink, 4>> faces;
    std::vector<NodeKey> virtual_keys;
    std::vector<CellCoupling> couplings;
    std::unordered_map<NodeKey, int, NodeKeyHash> index;

    int size() const { return static_cast<int>(keys.size()); }
};

inline constexpr double kInterfaceGeom = 2.0 / 3.0;

inline LeafMesh build_leaf_mesh(const Tree& t) {
    LeafMesh m;
    m.keys = t.leaves();
    const int n = m.size();
    m.index.reserve(n);
    for (int k = 0; k < n; ++k) m.index.emplace(m.keys[k], k);
    m.area.resize(n);
    m.center.resize(n);
    m.faces.resize(n);
    std::unordered_map<NodeKey, int, NodeKeyHash> slots;
    for (int a = 0; a < n; ++a) {
        const NodeKey& k = m.keys[a];
        m.area[a] = t.grid().area(k.level);
        m.center[a] = cell_center(k, t.grid());
        for (int f = 0; f < 4; ++f) {
            const NodeKey nb = k.shifted(kFaceOffsets[f][0], kFaceOffsets[f][1]);
            FaceLink& link = m.faces[a][f];
            if (!nb.in_domain()) continue;
            if (t.contains(nb)) {
                if (t.is_leaf(nb)) {
                    link.kind = LinkKind::same_level;
                    link.neighbor = m.index.at(nb);
                    if (a < link.neighbor) m.couplings.push_back({a, link.neighbor, face_axis(f), 1.0});
                } else {
                    link.kind = LinkKind::finer;
                }
                continue;
            }
            const NodeKey owner = nb.parent();
            if (!t.is_leaf(owner)) throw InternalError("leaf mesh: tree is not graded");
            link.kind = LinkKind::coarser;
            link.neighbor = m.index.at(owner);
            auto [it, inserted] = slots.emplace(nb, static_cast<int>(m.virtual_keys.size()));
            if (inserted) m.virtual_keys.push_back(nb);
            link.virtual_slot = it->second;
            m.couplings.push_back({a, link.neighbor, face_axis(f), kInterfaceGeom});
        }
    }
    return m;
}

inline std::vector<Values> gather(const Tree& t, const LeafMesh& m) {
    std::vector<Values> u(m.size());
    for (int k = 0; k < m.size(); ++k) u[k] = t.node(m.keys[k]).value;
    return u;
}

/// Writes leaf values back and re-projects the internal nodes.
inline void scatter(Tree& t, const LeafMesh& m, std::span<const Values> u) {
    for (int k = 0; k < m.size(); ++k) t.set_value(m.keys[k], u[k]);
    t.project();
}

/// Predicted values of the virtual leaves; the tree must be projected.
inline std::vector<Values> virtual_values(const Tree& t, const LeafMesh& m) {
    std::vector<Values> out(m.virtual_keys.size());
    for (std::size_t s = 0; s < out.size(); ++s) out[s] = t.value_at(m.virtual_keys[s]);
    return out;
}

/// Extracts one field from per-leaf tuples.
inline std::vector<double> field_of(std::span<const Values> u, Field f) {
    std::vector<double> out(u.size());
    for (std::size_t k = 0; k < u.size(); ++k) out[k] = u[k][f];
    return out;
}

/// Signed diffusive flux sums G_K for the field driving v, using virtual values across
/// coarse/fine faces; the coarse owner receives minus the fine-side flux.
inline std::vector<double> flux_sums(const LeafMesh& m, std::span<const Values> u, std::span<const Values> virt,
                                     const AxisCoeffs& c) {
    const int n = m.size();
    std::vector<double> g(n, 0.0), owner(n, 0.0);
    const Field fld = c.flux_field;
    for (int a = 0; a < n; ++a) {
        double s = 0.0;
        for (int f = 0; f < 4; ++f) {
            const FaceLink& link = m.faces[a][f];
            const double T = c.evolved[face_axis(f)];
            if (link.kind == LinkKind::same_level) {
                s += c.flux_sign * T * (u[link.neighbor][fld] - u[a][fld]);
            } else if (link.kind == LinkKind::coarser) {
                const double F = c.flux_sign * T * (virt[link.virtual_slot][fld] - u[a][fld]);
                s += F;
                owner[link.neighbor] -= F;
            }
        }
        g[a] = s;
    }
    for (int a = 0; a < n; ++a) g[a] += owner[a];
    return g;
}

/// Solves the elliptic problem for u_e on the leaf mesh given per-leaf v.
inline std::vector<double> solve_extracellular(const LeafMesh& m, const AxisCoeffs& c, std::span<const double> v,
                                               std::span<const double> guess, const SolveOptions& opt = {}) {
    const EllipticSystem sys = assemble(m.area, m.couplings, c, v, {});
    return solve_zero_mean(sys, opt, guess);
}

}  // namespace cardiomr
