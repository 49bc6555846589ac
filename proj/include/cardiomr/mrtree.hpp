#pragma once

// Graded dynamic quadtree of cell averages with Harten-type prediction,
// details, thresholding and a one-level safety zone.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "cardiomr/error.hpp"
#include "cardiomr/fvcore.hpp"
#include "cardiomr/grid.hpp"

namespace cardiomr {

/// Prediction coefficients gamma_1..gamma_s for stencil width s in {1, 2}.
inline std::array<double, 2> prediction_gammas(int s) {
    if (s == 1) return {-1.0 / 8.0, 0.0};
    if (s == 2) return {-22.0 / 128.0, 3.0 / 128.0};
    throw ConfigError("mr.stencil must be 1 or 2");
}

/// Predicted average of child (e1, e2) from the coarse stencil. `at(di, dj)` returns the
/// coarse value at offset (di, dj) from the parent.
///   u~ = u + (-1)^e1 Qx + (-1)^e2 Qy + (-1)^(e1+e2) Qxy
template <class T, class At>
T predict_child(const At& at, int s, int e1, int e2) {
    const auto g = prediction_gammas(s);
    const T centre = at(0, 0);
    T qx{}, qy{}, qxy{};
    auto axpy = [](T& acc, double a, const T& x, const T& y) {
        if constexpr (std::is_arithmetic_v<T>) {
            acc += a * (x - y);
        } else {
            for (std::size_t f = 0; f < acc.size(); ++f) acc[f] += a * (x[f] - y[f]);
        }
    };
    for (int n = 1; n <= s; ++n) {
        axpy(qx, g[n - 1], at(n, 0), at(-n, 0));
        axpy(qy, g[n - 1], at(0, n), at(0, -n));
        for (int p = 1; p <= s; ++p) {
            const double c = g[n - 1] * g[p - 1];
            axpy(qxy, c, at(n, p), at(n, -p));
            axpy(qxy, -c, at(-n, p), at(-n, -p));
        }
    }
    const double sx = e1 ? -1.0 : 1.0;
    const double sy = e2 ? -1.0 : 1.0;
    T out = centre;
    if constexpr (std::is_arithmetic_v<T>) {
        out += sx * qx + sy * qy + sx * sy * qxy;
    } else {
        for (std::size_t f = 0; f < out.size(); ++f) out[f] += sx * qx[f] + sy * qy[f] + sx * sy * qxy[f];
    }
    return out;
}

/// eps_l = 2^{2(l-L)} eps_R.
inline double level_threshold(double eps_R, int level, int max_level) { return std::ldexp(eps_R, 2 * (level - max_level)); }

inline std::vector<double> threshold_schedule(double eps_R, int max_level) {
    if (!(eps_R >= 0)) throw ConfigError("eps_R must be non-negative");
    std::vector<double> eps(max_level + 1);
    for (int l = 0; l <= max_level; ++l) eps[l] = level_threshold(eps_R, l, max_level);
    return eps;
}

inline constexpr double kDefaultAlpha = 1.09;

/// eps_R = C 2^{-(alpha+2)L} / (|Omega| max(|I_ion|+2|I_app|) + |Omega|^{3/2} 2^{2+L} max(|M_i|+|M_e|)).
inline double reference_tolerance(const GridSpec& grid, double max_currents, double max_tensor_sum, double C,
                                  double alpha = kDefaultAlpha) {
    const int L = grid.max_level;
    const double omega = grid.domain_area();
    const double denom = omega * max_currents + std::pow(omega, 1.5) * std::ldexp(1.0, 2 + L) * max_tensor_sum;
    if (!(denom > 0.0)) throw NumericalError("reference_tolerance: zero denominator");
    return C * std::exp2(-(alpha + 2.0) * L) / denom;
}

/// Conservative interface flux: the coarse edge carries the sum of the two fine fluxes.
inline double interface_flux(double fine_a, double fine_b) { return fine_a + fine_b; }

// ---------------------------------------------------------------------------
// Array pyramid: scalar encode/decode on a full dyadic hierarchy.

struct Pyramid {
    int max_level = 0;
    std::vector<std::vector<double>> levels;  // levels[l] is 2^l x 2^l, index j*n+i
};

inline Pyramid project_pyramid(std::vector<double> finest, int max_level) {
    Pyramid p;
    p.max_level = max_level;
    p.levels.resize(max_level + 1);
    p.levels[max_level] = std::move(finest);
    for (int l = max_level - 1; l >= 0; --l) {
        const int n = 1 << l;
        const auto& f = p.levels[l + 1];
        auto& c = p.levels[l];
        c.assign(static_cast<std::size_t>(n) * n, 0.0);
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i)
                c[j * n + i] = 0.25 * (f[(2 * j) * 2 * n + 2 * i] + f[(2 * j) * 2 * n + 2 * i + 1] +
                                       f[(2 * j + 1) * 2 * n + 2 * i] + f[(2 * j + 1) * 2 * n + 2 * i + 1]);
    }
    return p;
}

/// Predicts the full level l+1 array from level l with mirrored boundary stencils.
inline std::vector<double> predict_level(const std::vector<double>& coarse, int level, int s) {
    const int n = 1 << level;
    const int nf = 2 * n;
    std::vector<double> fine(static_cast<std::size_t>(nf) * nf);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            auto at = [&](int di, int dj) {
                return coarse[mirror_index(j + dj, n) * n + mirror_index(i + di, n)];
            };
            for (int e2 = 0; e2 < 2; ++e2)
                for (int e1 = 0; e1 < 2; ++e1)
                    fine[(2 * j + e2) * nf + 2 * i + e1] = predict_child<double>(at, s, e1, e2);
        }
    return fine;
}

/// Root average plus the details of every level 1..L.
struct MultiscaleData {
    double root = 0.0;
    std::vector<std::vector<double>> details;  // details[l], l >= 1
};

inline MultiscaleData encode(const std::vector<double>& finest, int max_level, int s) {
    const Pyramid p = project_pyramid(finest, max_level);
    MultiscaleData m;
    m.root = p.levels[0][0];
    m.details.resize(max_level + 1);
    for (int l = 1; l <= max_level; ++l) {
        const auto pred = predict_level(p.levels[l - 1], l - 1, s);
        auto& d = m.details[l];
        d.resize(pred.size());
        for (std::size_t k = 0; k < pred.size(); ++k) d[k] = p.levels[l][k] - pred[k];
    }
    return m;
}

inline std::vector<double> decode(const MultiscaleData& m, int max_level, int s) {
    std::vector<double> u{m.root};
    for (int l = 1; l <= max_level; ++l) {
        auto next = predict_level(u, l - 1, s);
        for (std::size_t k = 0; k < next.size(); ++k) next[k] += m.details[l][k];
        u = std::move(next);
    }
    return u;
}

// ---------------------------------------------------------------------------
// Tree

enum class DetailRule {
    min_refine_max_coarsen,  // refinement needs every component, coarsening needs every component small
    max_both,                // one significant component suffices for both
};

struct Node {
    Values value{};
    bool has_children = false;
};

using ValueProvider = std::function<Values(const NodeKey&)>;

class Tree {
public:
    Tree(GridSpec grid, int stencil) : grid_(grid), stencil_(stencil) {
        validate(grid_);
        prediction_gammas(stencil_);
        nodes_.emplace(NodeKey{0, 0, 0}, Node{});
    }

    const GridSpec& grid() const { return grid_; }
    int max_level() const { return grid_.max_level; }
    int stencil() const { return stencil_; }
    std::size_t size() const { return nodes_.size(); }
    const std::unordered_map<NodeKey, Node, NodeKeyHash>& nodes() const { return nodes_; }

    bool contains(const NodeKey& k) const { return nodes_.count(k) != 0; }
    bool is_leaf(const NodeKey& k) const {
        const auto it = nodes_.find(k);
        return it != nodes_.end() && !it->second.has_children;
    }
    const Node& node(const NodeKey& k) const {
        const auto it = nodes_.find(k);
        if (it == nodes_.end()) throw InternalError("tree: missing node");
        return it->second;
    }
    void set_value(const NodeKey& k, const Values& v) {
        auto it = nodes_.find(k);
        if (it == nodes_.end()) throw InternalError("tree: set_value on missing node");
        it->second.value = v;
        cache_.clear();
    }

    /// Leaves sorted by (level, i, j).
    std::vector<NodeKey> leaves() const {
        std::vector<NodeKey> out;
        for (const auto& [k, n] : nodes_)
            if (!n.has_children) out.push_back(k);
        std::sort(out.begin(), out.end());
        return out;
    }
    std::size_t leaf_count() const {
        std::size_t c = 0;
        for (const auto& [k, n] : nodes_) c += n.has_children ? 0 : 1;
        return c;
    }

    /// Creates the four children of a leaf; no grading is enforced here.
    void split(const NodeKey& k, const ValueProvider& value_of = {}) {
        auto it = nodes_.find(k);
        if (it == nodes_.end() || it->second.has_children) throw InternalError("tree: split of a non-leaf");
        if (k.level >= grid_.max_level) throw InternalError("tree: split beyond the maximal level");
        std::array<Values, 4> vals;
        for (int e2 = 0; e2 < 2; ++e2)
            for (int e1 = 0; e1 < 2; ++e1)
                vals[2 * e2 + e1] = value_of ? value_of(k.child(e1, e2)) : predict(k.child(e1, e2));
        it->second.has_children = true;
        for (int e2 = 0; e2 < 2; ++e2)
            for (int e1 = 0; e1 < 2; ++e1) nodes_[k.child(e1, e2)] = Node{vals[2 * e2 + e1], false};
        if (value_of) cache_.clear();
    }

    /// Removes the four (leaf) children of `k`; the parent keeps its projected value.
    void merge(const NodeKey& k) {
        auto it = nodes_.find(k);
        if (it == nodes_.end() || !it->second.has_children) throw InternalError("tree: merge of a leaf");
        Values mean{};
        for (int e2 = 0; e2 < 2; ++e2)
            for (int e1 = 0; e1 < 2; ++e1) {
                const auto c = nodes_.find(k.child(e1, e2));
                if (c == nodes_.end() || c->second.has_children) throw InternalError("tree: merge of a non-leaf group");
                mean = mean + 0.25 * c->second.value;
            }
        for (int e2 = 0; e2 < 2; ++e2)
            for (int e1 = 0; e1 < 2; ++e1) nodes_.erase(k.child(e1, e2));
        it->second.has_children = false;
        it->second.value = mean;
        cache_.clear();
    }

    /// Internal node values := mean of their children, bottom-up.
    void project() {
        std::vector<std::vector<Node*>> by_level(grid_.max_level + 1);
        std::vector<std::vector<NodeKey>> keys(grid_.max_level + 1);
        for (auto& [k, n] : nodes_)
            if (n.has_children) {
                by_level[k.level].push_back(&n);
                keys[k.level].push_back(k);
            }
        for (int l = grid_.max_level - 1; l >= 0; --l)
            for (std::size_t m = 0; m < by_level[l].size(); ++m) {
                const NodeKey& k = keys[l][m];
                const Values& a = nodes_.find(k.child(0, 0))->second.value;
                const Values& b = nodes_.find(k.child(1, 0))->second.value;
                const Values& c = nodes_.find(k.child(0, 1))->second.value;
                const Values& d = nodes_.find(k.child(1, 1))->second.value;
                Values& out = by_level[l][m]->value;
                for (int f = 0; f < kNumFields; ++f) out[f] = 0.25 * (a[f] + b[f] + c[f] + d[f]);
            }
        cache_.clear();
    }

    /// Value of any key: stored nodes return their value, keys outside the domain are
    /// mirrored, missing keys are predicted recursively from their parent.
    Values value_at(const NodeKey& key) const {
        const NodeKey k = key.in_domain() ? key : mirrored(key);
        const auto it = nodes_.find(k);
        if (it != nodes_.end()) return it->second.value;
        const auto c = cache_.find(k);
        if (c != cache_.end()) return c->second;
        const Values v = predict(k);
        cache_.emplace(k, v);
        return v;
    }

    /// Prediction of `child` from its parent's coarse stencil.
    Values predict(const NodeKey& child) const {
        const NodeKey p = child.parent();
        auto at = [&](int di, int dj) { return value_at(p.shifted(di, dj)); };
        return predict_child<Values>(at, stencil_, child.offset_x(), child.offset_y());
    }

    /// d = u - u~ for an existing non-root node.
    Values detail(const NodeKey& k) const { return node(k).value - predict(k); }

    void clear_cache() const { cache_.clear(); }

    /// Ordered list of splits needed to refine `k` (creating it first if missing) without
    /// breaking grading, or nullopt if that would touch a level below `min_level`.
    std::optional<std::vector<NodeKey>> plan_split(const NodeKey& k, int min_level) const {
        std::vector<NodeKey> order;
        std::unordered_set<NodeKey, NodeKeyHash> planned;
        if (!plan_split_rec(k, min_level, order, planned)) return std::nullopt;
        return order;
    }

    /// Graded refinement of `k`; returns false (and changes nothing) if impossible.
    bool refine_graded(const NodeKey& k, int min_level = 0, const ValueProvider& value_of = {}) {
        const auto plan = plan_split(k, min_level);
        if (!plan) return false;
        for (const auto& key : *plan) split(key, value_of);
        return true;
    }

    /// Makes `k` present (splitting ancestors as needed).
    bool ensure_node(const NodeKey& k, int min_level = 0, const ValueProvider& value_of = {}) {
        if (contains(k)) return true;
        return refine_graded(k.parent(), min_level, value_of);
    }

    /// The four children of `k` can be removed without breaking grading.
    bool can_merge(const NodeKey& k) const {
        const auto it = nodes_.find(k);
        if (it == nodes_.end() || !it->second.has_children) return false;
        for (int e2 = 0; e2 < 2; ++e2)
            for (int e1 = 0; e1 < 2; ++e1) {
                const NodeKey c = k.child(e1, e2);
                if (!is_leaf(c)) return false;
                for (const auto& off : kFaceOffsets) {
                    const NodeKey n = c.shifted(off[0], off[1]);
                    if (!n.in_domain() || n.parent() == k) continue;
                    const auto nit = nodes_.find(n);
                    if (nit != nodes_.end() && nit->second.has_children) return false;
                }
            }
        return true;
    }

    /// Structural invariants: complete sibling groups and edge neighbours of every parent present.
    bool graded() const {
        for (const auto& [k, n] : nodes_) {
            if (k.level == 0) continue;
            const NodeKey p = k.parent();
            const auto pit = nodes_.find(p);
            if (pit == nodes_.end() || !pit->second.has_children) return false;
            for (int e2 = 0; e2 < 2; ++e2)
                for (int e1 = 0; e1 < 2; ++e1)
                    if (!contains(p.child(e1, e2))) return false;
            for (const auto& off : kFaceOffsets) {
                const NodeKey q = p.shifted(off[0], off[1]);
                if (q.in_domain() && !contains(q)) return false;
            }
        }
        return true;
    }

    /// Leaf covering the level-`level` position `k` (k itself, or an ancestor).
    std::optional<NodeKey> covering_leaf(NodeKey k) const {
        while (k.level >= 0) {
            const auto it = nodes_.find(k);
            if (it != nodes_.end()) {
                if (!it->second.has_children) return k;
                return std::nullopt;  // finer leaves cover it
            }
            if (k.level == 0) break;
            k = k.parent();
        }
        return std::nullopt;
    }

private:
    bool plan_split_rec(const NodeKey& k, int min_level, std::vector<NodeKey>& order,
                        std::unordered_set<NodeKey, NodeKeyHash>& planned) const {
        if (planned.count(k)) return true;
        const auto it = nodes_.find(k);
        if (it != nodes_.end() && it->second.has_children) return true;
        if (k.level < min_level || k.level >= grid_.max_level) return false;
        if (it == nodes_.end() && !plan_split_rec(k.parent(), min_level, order, planned)) return false;
        for (const auto& off : kFaceOffsets) {
            const NodeKey n = k.shifted(off[0], off[1]);
            if (!n.in_domain() || contains(n) || planned.count(n.parent())) continue;
            if (!plan_split_rec(n.parent(), min_level, order, planned)) return false;
        }
        planned.insert(k);
        order.push_back(k);
        return true;
    }

    GridSpec grid_;
    int stencil_;
    std::unordered_map<NodeKey, Node, NodeKeyHash> nodes_;
    mutable std::unordered_map<NodeKey, Values, NodeKeyHash> cache_;
};

// ---------------------------------------------------------------------------
// Thresholding and adaptation

struct AdaptOptions {
    double eps_R = 1e-3;
    DetailRule rule = DetailRule::min_refine_max_coarsen;
    int min_level = 0;  // levels below are frozen (partial adaptation)
    bool safety_zone = true;
};

struct AdaptStats {
    int merged = 0;
    int split = 0;
};

/// Per-field max-abs over leaves; zero-scale fields are ignored by the detail rules.
inline Values field_scales(const Tree& t) {
    Values s{};
    for (const auto& [k, n] : t.nodes())
        if (!n.has_children)
            for (int f = 0; f < kNumFields; ++f) s[f] = std::max(s[f], std::abs(n.value[f]));
    return s;
}

struct DetailNorms {
    double coarsen = 0.0;
    double refine = 0.0;
};

inline DetailNorms combine_details(const Values& d, const Values& scale, DetailRule rule) {
    DetailNorms out;
    double mn = std::numeric_limits<double>::infinity();
    double mx = 0.0;
    bool any = false;
    for (int f = 0; f < kNumFields; ++f) {
        if (!(scale[f] > 0.0)) continue;
        const double x = std::abs(d[f]) / scale[f];
        mn = std::min(mn, x);
        mx = std::max(mx, x);
        any = true;
    }
    if (!any) return out;
    out.coarsen = mx;
    out.refine = rule == DetailRule::max_both ? mx : mn;
    return out;
}

struct NodeFlags {
    bool keep = false;    // significant for coarsening (children of its parent stay)
    bool refine = false;  // significant for refinement (a leaf gets sons)
};

inline std::unordered_map<NodeKey, NodeFlags, NodeKeyHash> significance(const Tree& t, const AdaptOptions& opt) {
    const Values scale = field_scales(t);
    const int L = t.max_level();
    std::unordered_map<NodeKey, NodeFlags, NodeKeyHash> flags;
    flags.reserve(t.size());
    for (const auto& [k, n] : t.nodes()) {
        if (k.level == 0) continue;
        const DetailNorms d = combine_details(t.detail(k), scale, opt.rule);
        const double eps = level_threshold(opt.eps_R, k.level, L);
        flags[k] = {d.coarsen >= eps, d.refine >= eps};
    }
    return flags;
}

/// Positions that must stay present: significant nodes and their 8 same-level neighbours.
inline std::vector<NodeKey> safety_zone(const std::unordered_map<NodeKey, NodeFlags, NodeKeyHash>& flags) {
    std::unordered_set<NodeKey, NodeKeyHash> zone;
    for (const auto& [k, f] : flags) {
        if (!f.keep) continue;
        for (int dj = -1; dj <= 1; ++dj)
            for (int di = -1; di <= 1; ++di) {
                const NodeKey n = k.shifted(di, dj);
                if (n.in_domain()) zone.insert(n);
            }
    }
    std::vector<NodeKey> out(zone.begin(), zone.end());
    std::sort(out.begin(), out.end());
    return out;
}

/// One thresholding pass: coarsen insignificant groups, refine significant leaves,
/// restore the safety zone. New nodes receive predicted values.
inline AdaptStats adapt(Tree& t, const AdaptOptions& opt) {
    AdaptStats stats;
    t.project();
    const auto flags = significance(t, opt);
    const auto zone = opt.safety_zone ? safety_zone(flags) : std::vector<NodeKey>{};
    std::unordered_set<NodeKey, NodeKeyHash> protected_nodes(zone.begin(), zone.end());
    for (const auto& [k, f] : flags)
        if (f.keep) protected_nodes.insert(k);
    const int L = t.max_level();

    // Coarsening, finest groups first so that emptied parents can cascade.
    for (int l = L - 1; l >= std::max(opt.min_level, 0); --l) {
        std::vector<NodeKey> parents;
        for (const auto& [k, n] : t.nodes())
            if (k.level == l && n.has_children) parents.push_back(k);
        std::sort(parents.begin(), parents.end());
        for (const auto& p : parents) {
            const auto pf = flags.find(p);
            if (pf != flags.end() && pf->second.refine) continue;
            bool busy = false;
            for (int e2 = 0; e2 < 2 && !busy; ++e2)
                for (int e1 = 0; e1 < 2 && !busy; ++e1) busy = protected_nodes.count(p.child(e1, e2)) != 0;
            if (busy || !t.can_merge(p)) continue;
            t.merge(p);
            ++stats.merged;
        }
    }

    // Refinement of significant leaves.
    std::vector<NodeKey> to_refine;
    for (const auto& [k, f] : flags)
        if (f.refine && k.level < L && k.level >= opt.min_level && t.is_leaf(k)) to_refine.push_back(k);
    std::sort(to_refine.begin(), to_refine.end());
    for (const auto& k : to_refine) {
        if (!t.is_leaf(k)) continue;
        const std::size_t before = t.size();
        if (t.refine_graded(k, opt.min_level)) stats.split += static_cast<int>((t.size() - before) / 4);
    }

    // Safety zone.
    for (const auto& k : zone) {
        const std::size_t before = t.size();
        if (t.ensure_node(k, opt.min_level)) stats.split += static_cast<int>((t.size() - before) / 4);
    }
    return stats;
}

/// Initial graded tree for the given data: split while a child's detail reaches the
/// level threshold, then grade and add the safety zone. All node values are composite
/// midpoint averages evaluated on the finest level.
inline Tree build_initial_tree(const InitialData& init, const GridSpec& grid, int stencil, double eps_R,
                               DetailRule rule = DetailRule::min_refine_max_coarsen) {
    Tree t(grid, stencil);
    const int L = grid.max_level;
    std::unordered_map<NodeKey, Values, NodeKeyHash> exact_cache;
    ValueProvider exact = [&](const NodeKey& key) {
        const NodeKey k = key.in_domain() ? key : mirrored(key);
        const auto it = exact_cache.find(k);
        if (it != exact_cache.end()) return it->second;
        const Values v = cell_average(init, k, grid, L);
        exact_cache.emplace(k, v);
        return v;
    };

    // Field scales from a uniform sample.
    Values scale{};
    {
        const int ls = std::min(L, 8);
        const int n = 1 << ls;
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const auto c = cell_center({ls, i, j}, grid);
                const Values v = init.at(c[0], c[1]);
                for (int f = 0; f < kNumFields; ++f) scale[f] = std::max(scale[f], std::abs(v[f]));
            }
    }

    t.set_value({0, 0, 0}, exact({0, 0, 0}));
    std::vector<NodeKey> queue{{0, 0, 0}};
    while (!queue.empty()) {
        const NodeKey k = queue.back();
        queue.pop_back();
        if (k.level >= L) continue;
        auto at = [&](int di, int dj) { return exact(k.shifted(di, dj)); };
        bool significant = false;
        for (int e2 = 0; e2 < 2 && !significant; ++e2)
            for (int e1 = 0; e1 < 2 && !significant; ++e1) {
                const Values d = exact(k.child(e1, e2)) - predict_child<Values>(at, stencil, e1, e2);
                significant = combine_details(d, scale, rule).refine >= level_threshold(eps_R, k.level + 1, L);
            }
        if (!significant) continue;
        if (!t.refine_graded(k, 0, exact)) throw InternalError("initial tree: graded split failed");
        for (int e2 = 0; e2 < 2; ++e2)
            for (int e1 = 0; e1 < 2; ++e1) queue.push_back(k.child(e1, e2));
    }

    AdaptOptions opt;
    opt.eps_R = eps_R;
    opt.rule = rule;
    t.project();
    const auto zone = safety_zone(significance(t, opt));
    for (const auto& k : zone) t.ensure_node(k, 0, exact);
    t.project();
    return t;
}

/// True if the closed disc boundary passes through the cell of `k`.
inline bool cell_meets_circle(const NodeKey& k, const GridSpec& g, const StimulusEvent& e) {
    const double h = g.h(k.level);
    const double x0 = g.origin[0] + k.i * h, y0 = g.origin[1] + k.j * h;
    const double cx = e.center[0], cy = e.center[1];
    const double nx = std::clamp(cx, x0, x0 + h) - cx;
    const double ny = std::clamp(cy, y0, y0 + h) - cy;
    const double fx = std::max(std::abs(x0 - cx), std::abs(x0 + h - cx));
    const double fy = std::max(std::abs(y0 - cy), std::abs(y0 + h - cy));
    const double near = nx * nx + ny * ny;
    const double far = fx * fx + fy * fy;
    return near <= e.radius_sq && far >= e.radius_sq;
}

/// Instantaneous stimulus on the tree: refines cells cut by the disc boundary to the finest
/// level, then adds the amplitude to every leaf whose centre is inside.
inline void apply_stimulus(Tree& t, const StimulusEvent& e) {
    if (e.radius_sq > 0.0) {
        bool changed = true;
        while (changed) {
            changed = false;
            for (const auto& k : t.leaves())
                if (k.level < t.max_level() && t.is_leaf(k) && cell_meets_circle(k, t.grid(), e))
                    changed |= t.refine_graded(k);
        }
    }
    for (const auto& k : t.leaves()) {
        if (!stimulus_covers(e, cell_center(k, t.grid()))) continue;
        Values v = t.node(k).value;
        v[e.target] += e.amplitude;
        t.set_value(k, v);
    }
    t.project();
}

/// Finest-level array (index j*n+i) obtained by predicting every leaf down to level L.
inline std::vector<Values> flatten(const Tree& t) {
    Tree full = t;
    const int L = t.max_level();
    for (int l = 0; l < L; ++l) {
        std::vector<NodeKey> at_level;
        for (const auto& [k, n] : full.nodes())
            if (k.level == l && !n.has_children) at_level.push_back(k);
        std::sort(at_level.begin(), at_level.end());
        for (const auto& k : at_level) full.split(k);
    }
    const int n = 1 << L;
    std::vector<Values> out(static_cast<std::size_t>(n) * n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) out[j * n + i] = full.node({L, i, j}).value;
    return out;
}

/// `level,i,j,x_center,y_center,v,u_e,w` per leaf.
inline void write_leaf_csv(std::ostream& os, const Tree& t) {
    os << "level,i,j,x_center,y_center,v,u_e,w\n";
    os << std::setprecision(17);
    for (const auto& k : t.leaves()) {
        const auto c = cell_center(k, t.grid());
        const Values& v = t.node(k).value;
        os << k.level << ',' << k.i << ',' << k.j << ',' << c[0] << ',' << c[1] << ',' << v[kV] << ',' << v[kUe]
           << ',' << v[kW] << '\n';
    }
}

}  // namespace cardiomr
