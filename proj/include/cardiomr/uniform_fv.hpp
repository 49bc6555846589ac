#pragma once

// Plain finite-volume solver on a uniform level-l grid: the reference path for
// error measurements and the baseline for speed-up.

#include <algorithm>
#include <span>
#include <vector>

#include "cardiomr/elliptic.hpp"
#include "cardiomr/fvcore.hpp"

namespace cardiomr {

class UniformFv {
public:
    UniformFv(const GridSpec& grid, int level, const ModelSpec& model, const InitialData& init)
        : grid_(grid), level_(level), n_(1 << level), model_(model), coeffs_(axis_coeffs(model)) {
        validate(model_);
        u_.resize(static_cast<std::size_t>(n_) * n_);
        area_.assign(u_.size(), grid_.area(level_));
        centers_.resize(u_.size());
        for (int j = 0; j < n_; ++j)
            for (int i = 0; i < n_; ++i) {
                const NodeKey k{level_, i, j};
                u_[idx(i, j)] = cell_average(init, k, grid_, level_);
                centers_[idx(i, j)] = cell_center(k, grid_);
                if (i + 1 < n_) couplings_.push_back({idx(i, j), idx(i + 1, j), 0, 1.0});
                if (j + 1 < n_) couplings_.push_back({idx(i, j), idx(i, j + 1), 1, 1.0});
            }
    }

    int level() const { return level_; }
    int cells_per_side() const { return n_; }
    const GridSpec& grid() const { return grid_; }
    const ModelSpec& model() const { return model_; }
    std::span<const Values> values() const { return u_; }
    std::span<Values> values() { return u_; }
    int idx(int i, int j) const { return j * n_ + i; }

    double max_currents() const {
        double m = 0.0;
        for (const auto& c : u_) m = std::max(m, current_magnitude(c, model_));
        return m;
    }

    double stable_dt() const { return cfl_dt(grid_.h(level_), max_currents(), model_.tensor_norm_sum()); }

    /// Signed flux sums G_K, faces visited in the order -x, +x, -y, +y.
    std::vector<double> flux_sums() const {
        std::vector<double> g(u_.size(), 0.0);
        const Field fld = coeffs_.flux_field;
        for (int j = 0; j < n_; ++j)
            for (int i = 0; i < n_; ++i) {
                double s = 0.0;
                for (int f = 0; f < 4; ++f) {
                    const int ni = i + kFaceOffsets[f][0];
                    const int nj = j + kFaceOffsets[f][1];
                    if (ni < 0 || nj < 0 || ni >= n_ || nj >= n_) continue;
                    const double T = coeffs_.evolved[face_axis(f)];
                    s += coeffs_.flux_sign * T * (u_[idx(ni, nj)][fld] - u_[idx(i, j)][fld]);
                }
                g[idx(i, j)] = s;
            }
        return g;
    }

    /// Gating, parabolic update, then (bidomain) the elliptic solve for u_e^{n+1}.
    void step(double dt) {
        const auto g = flux_sums();
        for (std::size_t k = 0; k < u_.size(); ++k) u_[k] = euler_update(u_[k], g[k], area_[k], dt, model_);
        if (model_.bidomain()) solve_ue();
    }

    void solve_ue() {
        std::vector<double> v(u_.size()), guess(u_.size());
        for (std::size_t k = 0; k < u_.size(); ++k) {
            v[k] = u_[k][kV];
            guess[k] = u_[k][kUe];
        }
        const auto sys = assemble(area_, couplings_, coeffs_, v, {});
        const auto ue = solve_zero_mean(sys, {}, guess);
        for (std::size_t k = 0; k < u_.size(); ++k) u_[k][kUe] = ue[k];
    }

    void apply(const StimulusEvent& e) { apply_stimulus(u_, centers_, e); }

    std::span<const CellCoupling> couplings() const { return couplings_; }
    std::span<const double> areas() const { return area_; }

private:
    GridSpec grid_;
    int level_;
    int n_;
    ModelSpec model_;
    AxisCoeffs coeffs_;
    std::vector<Values> u_;
    std::vector<double> area_;
    std::vector<std::array<double, 2>> centers_;
    std::vector<CellCoupling> couplings_;
};

}  // namespace cardiomr
