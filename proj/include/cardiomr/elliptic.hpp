#pragma once

// Extracellular potential: assembly of the pure-Neumann leaf operator and a
// zero-mean preconditioned conjugate gradient solve.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cardiomr/error.hpp"
#include "cardiomr/fvcore.hpp"

namespace cardiomr {

/// Connection between two cells across one (sub)edge. `geom` = |sigma| / (d(a,sigma) + d(b,sigma)):
/// 1 for same-level neighbours, 2/3 across a one-level interface.
struct CellCoupling {
    int a = 0;
    int b = 0;
    int axis = 0;
    double geom = 1.0;
};

struct CsrMatrix {
    int n = 0;
    std::vector<int> row_ptr;
    std::vector<int> col;
    std::vector<double> val;

    void multiply(std::span<const double> x, std::span<double> y) const {
        for (int r = 0; r < n; ++r) {
            double s = 0.0;
            for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k) s += val[k] * x[col[k]];
            y[r] = s;
        }
    }

    double at(int r, int c) const {
        for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
            if (col[k] == c) return val[k];
        return 0.0;
    }

    double row_sum(int r) const {
        double s = 0.0;
        for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k) s += val[k];
        return s;
    }
};

/// Row K reads sum_L T_ie (u_L - u_K) = rhs_K, i.e. matrix = -(graph Laplacian).
struct EllipticSystem {
    CsrMatrix matrix;
    std::vector<double> rhs;
    std::vector<double> area;
};

/// Builds a CSR matrix with off-diagonals +T and diagonal -sum T. Parallel couplings
/// between the same pair are merged.
inline CsrMatrix laplacian_csr(int n, std::span<const CellCoupling> couplings,
                               const std::function<double(const CellCoupling&)>& transmissibility) {
    std::vector<std::vector<std::pair<int, double>>> rows(n);
    std::vector<double> diag(n, 0.0);
    for (const auto& c : couplings) {
        const double t = transmissibility(c);
        rows[c.a].emplace_back(c.b, t);
        rows[c.b].emplace_back(c.a, t);
        diag[c.a] -= t;
        diag[c.b] -= t;
    }
    CsrMatrix m;
    m.n = n;
    m.row_ptr.assign(n + 1, 0);
    for (int r = 0; r < n; ++r) {
        auto& row = rows[r];
        row.emplace_back(r, diag[r]);
        std::sort(row.begin(), row.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
        int last = -1;
        for (const auto& [c, v] : row) {
            if (c == last) {
                m.val.back() += v;
            } else {
                m.col.push_back(c);
                m.val.push_back(v);
                last = c;
            }
        }
        m.row_ptr[r + 1] = static_cast<int>(m.col.size());
    }
    return m;
}

/// Discrete elliptic equation for u_e^{n+1} given v^{n+1}:
///   sum_L T_{i+e} (ue_L - ue_K) = |K| I_app,K - sum_L T_i (v_L - v_K).
inline EllipticSystem assemble(std::span<const double> area, std::span<const CellCoupling> couplings,
                               const AxisCoeffs& coeffs, std::span<const double> v, std::span<const double> i_app) {
    const int n = static_cast<int>(area.size());
    if (v.size() != area.size() || (!i_app.empty() && i_app.size() != area.size()))
        throw InternalError("elliptic assemble: field sizes do not match the mesh");
    EllipticSystem sys;
    sys.area.assign(area.begin(), area.end());
    sys.matrix = laplacian_csr(n, couplings, [&](const CellCoupling& c) {
        return (coeffs.intra[c.axis] + coeffs.extra[c.axis]) * c.geom;
    });
    sys.rhs.assign(n, 0.0);
    if (!i_app.empty())
        for (int k = 0; k < n; ++k) sys.rhs[k] = area[k] * i_app[k];
    for (const auto& c : couplings) {
        const double flux = coeffs.intra[c.axis] * c.geom * (v[c.b] - v[c.a]);
        sys.rhs[c.a] -= flux;
        sys.rhs[c.b] += flux;
    }
    return sys;
}

struct SolveOptions {
    double tol = 1e-10;
    int max_iterations = -1;  // default 10 * n
    std::function<void(std::span<const double>)> on_iterate;
};

struct SolveReport {
    int iterations = 0;
    std::vector<double> residual_history;  // relative 2-norm residuals, one per iteration
};

inline double weighted_mean(std::span<const double> x, std::span<const double> w) {
    double s = 0.0, a = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        s += w[k] * x[k];
        a += w[k];
    }
    return s / a;
}

/// Removes the area-weighted mean so that sum |K| u_K = 0.
inline void remove_weighted_mean(std::span<double> x, std::span<const double> w) {
    const double m = weighted_mean(x, w);
    for (auto& xi : x) xi -= m;
}

/// Solves the singular consistent system with Jacobi-preconditioned CG on -A.
/// `guess` (if non-empty) warm-starts the iteration. The returned field has zero
/// area-weighted mean.
inline std::vector<double> solve_zero_mean(const EllipticSystem& sys, const SolveOptions& opt = {},
                                           std::span<const double> guess = {}, SolveReport* report = nullptr) {
    const int n = sys.matrix.n;
    std::vector<double> b(sys.rhs);
    // Make the rhs compatible: sum_K b_K = 0.
    const double total_area = std::accumulate(sys.area.begin(), sys.area.end(), 0.0);
    const double excess = std::accumulate(b.begin(), b.end(), 0.0);
    for (int k = 0; k < n; ++k) b[k] = -(b[k] - sys.area[k] * excess / total_area);  // negate: solve (-A) x = -b

    std::vector<double> x(n, 0.0);
    if (!guess.empty()) std::copy(guess.begin(), guess.end(), x.begin());
    remove_weighted_mean(x, sys.area);

    const double bnorm = std::sqrt(std::inner_product(b.begin(), b.end(), b.begin(), 0.0));
    SolveReport local;
    SolveReport& rep = report ? *report : local;
    rep = {};
    if (bnorm == 0.0) {
        std::fill(x.begin(), x.end(), 0.0);
        return x;
    }

    std::vector<double> inv_diag(n), r(n), z(n), p(n), q(n);
    for (int k = 0; k < n; ++k) {
        const double d = -sys.matrix.at(k, k);
        inv_diag[k] = d > 0.0 ? 1.0 / d : 1.0;
    }
    sys.matrix.multiply(x, q);
    for (int k = 0; k < n; ++k) r[k] = b[k] + q[k];  // b - (-A)x
    double rnorm = std::sqrt(std::inner_product(r.begin(), r.end(), r.begin(), 0.0));
    if (rnorm / bnorm <= opt.tol) {
        rep.residual_history.push_back(rnorm / bnorm);
        return x;
    }
    for (int k = 0; k < n; ++k) z[k] = inv_diag[k] * r[k];
    p = z;
    double rz = std::inner_product(r.begin(), r.end(), z.begin(), 0.0);
    const int cap = opt.max_iterations > 0 ? opt.max_iterations : 10 * std::max(n, 1);

    for (int it = 1; it <= cap; ++it) {
        sys.matrix.multiply(p, q);
        for (auto& qi : q) qi = -qi;
        const double pq = std::inner_product(p.begin(), p.end(), q.begin(), 0.0);
        if (!(pq > 0.0)) break;
        const double alpha = rz / pq;
        for (int k = 0; k < n; ++k) {
            x[k] += alpha * p[k];
            r[k] -= alpha * q[k];
        }
        remove_weighted_mean(x, sys.area);
        rnorm = std::sqrt(std::inner_product(r.begin(), r.end(), r.begin(), 0.0));
        rep.iterations = it;
        rep.residual_history.push_back(rnorm / bnorm);
        if (opt.on_iterate) opt.on_iterate(x);
        if (rnorm / bnorm <= opt.tol) return x;
        for (int k = 0; k < n; ++k) z[k] = inv_diag[k] * r[k];
        const double rz_new = std::inner_product(r.begin(), r.end(), z.begin(), 0.0);
        const double beta = rz_new / rz;
        rz = rz_new;
        for (int k = 0; k < n; ++k) p[k] = z[k] + beta * p[k];
    }
    throw SolverDivergence("elliptic solve did not converge: relative residual " +
                               std::to_string(rnorm / bnorm) + " after " + std::to_string(rep.iterations) +
                               " iterations",
                           rep.residual_history);
}

}  // namespace cardiomr
