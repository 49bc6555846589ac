#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include "cardiomr/cardiomr.hpp"
#include "test_support.hpp"

using namespace cardiomr;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

ModelSpec bidomain(double si_l, double si_t, double se_l, double se_t, double angle) {
    ModelSpec m;
    m.kind = ModelKind::bidomain;
    m.constants = {2000.0, 1.0, 1.0};
    m.kinetics = MsParams{};
    m.intra = {si_l, si_t, angle};
    m.extra = {se_l, se_t, angle};
    return m;
}

std::vector<double> matvec(const CsrMatrix& A, const std::vector<double>& x) {
    std::vector<double> y(x.size());
    A.multiply(x, y);
    return y;
}

double norm2(const std::vector<double>& x) { return std::sqrt(std::inner_product(x.begin(), x.end(), x.begin(), 0.0)); }

/// Zero area-weighted mean random field.
std::vector<double> random_zero_mean(std::mt19937_64& rng, const std::vector<double>& area) {
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> x(area.size());
    for (auto& xi : x) xi = u(rng);
    remove_weighted_mean(x, area);
    return x;
}

struct Manufactured {
    double relative_residual;
    double max_error;
    double mean;
    double max_row_sum;
};

Manufactured manufactured(const std::vector<double>& area, const std::vector<CellCoupling>& couplings,
                          const AxisCoeffs& c, std::mt19937_64& rng) {
    const int n = static_cast<int>(area.size());
    EllipticSystem sys = assemble(area, couplings, c, std::vector<double>(n, 0.0), {});
    const auto exact = random_zero_mean(rng, area);
    sys.rhs = matvec(sys.matrix, exact);
    const auto x = solve_zero_mean(sys);
    auto r = matvec(sys.matrix, x);
    for (int k = 0; k < n; ++k) r[k] -= sys.rhs[k];
    Manufactured out{norm2(r) / norm2(sys.rhs), 0.0, weighted_mean(x, area), 0.0};
    for (int k = 0; k < n; ++k) {
        out.max_error = std::max(out.max_error, std::abs(x[k] - exact[k]));
        out.max_row_sum = std::max(out.max_row_sum, std::abs(sys.matrix.row_sum(k)));
    }
    return out;
}

}  // namespace

TEST_CASE("constant v gives a zero right-hand side and u_e = 0") {
    const GridSpec g{5.0, 3, {0, 0}};
    const ModelSpec m = bidomain(6, 0.6, 24, 12, std::numbers::pi / 4);
    InitialData init;
    init.v = [](double, double) { return 12.0; };
    UniformFv fv(g, 3, m, init);
    const std::vector<double> v(64, 12.0);
    const auto sys = assemble(fv.areas(), fv.couplings(), axis_coeffs(m), v, {});
    for (const double b : sys.rhs) CHECK(b == 0.0);
    fv.solve_ue();
    for (const auto& c : fv.values()) CHECK(c[kUe] == 0.0);
}

TEST_CASE("2x2 grid assembles the graph laplacian") {
    const GridSpec g{1.0, 1, {0, 0}};
    const ModelSpec m = bidomain(0.5, 0.5, 0.5, 0.5, 0.0);  // T_i + T_e = 1
    UniformFv fv(g, 1, m, {});
    const auto sys = assemble(fv.areas(), fv.couplings(), axis_coeffs(m), std::vector<double>(4, 0.0), {});
    // the SPD operator is -A; cells 0-1 and 0-2 are neighbours, 0-3 are diagonal
    const double expected[4][4] = {{2, -1, -1, 0}, {-1, 2, 0, -1}, {-1, 0, 2, -1}, {0, -1, -1, 2}};
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) CHECK(-sys.matrix.at(r, c) == expected[r][c]);
}

TEST_CASE("8x8 anisotropic assembly matches a dense oracle") {
    const GridSpec g{5.0, 3, {0, 0}};
    const ModelSpec m = bidomain(6, 0.6, 24, 12, std::numbers::pi / 4);
    UniformFv fv(g, 3, m, {});
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0, 100);
    std::vector<double> v(64);
    for (auto& x : v) x = u(rng);
    const auto sys = assemble(fv.areas(), fv.couplings(), axis_coeffs(m), v, {});

    const Tensor2 mi = conductivity_tensor(m.intra), me = conductivity_tensor(m.extra);
    const double ti[2] = {std::hypot(mi[0], mi[2]), std::hypot(mi[1], mi[3])};
    const double te[2] = {std::hypot(me[0], me[2]), std::hypot(me[1], me[3])};
    const int n = 8;
    std::vector<std::vector<double>> A(64, std::vector<double>(64, 0.0));
    std::vector<double> rhs(64, 0.0);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const int k = j * n + i;
            const int nb[4][3] = {{i - 1, j, 0}, {i + 1, j, 0}, {i, j - 1, 1}, {i, j + 1, 1}};
            for (const auto& q : nb) {
                if (q[0] < 0 || q[1] < 0 || q[0] >= n || q[1] >= n) continue;
                const int l = q[1] * n + q[0];
                A[k][l] += ti[q[2]] + te[q[2]];
                A[k][k] -= ti[q[2]] + te[q[2]];
                rhs[k] -= ti[q[2]] * (v[l] - v[k]);
            }
        }
    for (int r = 0; r < 64; ++r) {
        for (int c = 0; c < 64; ++c) CHECK_THAT(sys.matrix.at(r, c), WithinAbs(A[r][c], 1e-13));
        CHECK_THAT(sys.rhs[r], WithinAbs(rhs[r], 1e-13 * 100 * 40));
    }
}

TEST_CASE("zero right-hand side gives u_e = 0") {
    const GridSpec g{1.0, 2, {0, 0}};
    const ModelSpec m = bidomain(1, 1, 1, 1, 0);
    UniformFv fv(g, 2, m, {});
    const auto sys = assemble(fv.areas(), fv.couplings(), axis_coeffs(m), std::vector<double>(16, 0.0), {});
    SolveReport rep;
    const auto x = solve_zero_mean(sys, {}, std::vector<double>(16, 3.0), &rep);
    for (const double xi : x) CHECK(xi == 0.0);
}

TEST_CASE("two-cell system with antisymmetric data") {
    const std::vector<double> area{1.0, 1.0};
    const std::vector<CellCoupling> cp{{0, 1, 0, 1.0}};
    AxisCoeffs c;
    c.intra = {1.0, 1.0};
    c.extra = {1.0, 1.0};
    const auto sys = assemble(area, cp, c, std::vector<double>{-1.0, 1.0}, {});
    CHECK(sys.rhs[0] == -sys.rhs[1]);
    const auto x = solve_zero_mean(sys);
    CHECK_THAT(x[0], WithinAbs(-x[1], 1e-15));
    // 2 (u1 - u0) = -(v1 - v0) => u1 - u0 = -1
    CHECK_THAT(x[1] - x[0], WithinAbs(-1.0, 1e-12));
}

TEST_CASE("manufactured solution on a uniform 16x16 grid") {
    const GridSpec g{5.0, 4, {0, 0}};
    const ModelSpec m = bidomain(6, 0.6, 24, 12, std::numbers::pi / 4);
    UniformFv fv(g, 4, m, {});
    std::mt19937_64 rng(17);
    const std::vector<double> area(fv.areas().begin(), fv.areas().end());
    const std::vector<CellCoupling> cp(fv.couplings().begin(), fv.couplings().end());
    const auto r = manufactured(area, cp, axis_coeffs(m), rng);
    CHECK(r.relative_residual <= 1e-10);
    CHECK(r.max_error <= 1e-8);
    CHECK(std::abs(r.mean) <= 1e-12);
    CHECK(r.max_row_sum <= 1e-13);
}

TEST_CASE("manufactured solution on a graded two-level mesh") {
    const GridSpec g{1.0, 4, {0, 0}};
    const Tree t = testing::two_level_tree(g, 2, 3);
    const LeafMesh mesh = build_leaf_mesh(t);
    const ModelSpec m = bidomain(2, 1, 3, 1.5, 0.4);
    std::mt19937_64 rng(23);
    const auto r = manufactured(mesh.area, mesh.couplings, axis_coeffs(m), rng);
    CHECK(r.relative_residual <= 1e-10);
    CHECK(std::abs(r.mean) <= 1e-12);
    CHECK(r.max_row_sum <= 1e-13);
}

TEST_CASE("interface rows couple to both fine neighbours") {
    const GridSpec g{1.0, 3, {0, 0}};
    const Tree t = testing::two_level_tree(g, 2, 2);
    const LeafMesh mesh = build_leaf_mesh(t);
    AxisCoeffs c;
    c.intra = {0.3, 0.5};
    c.extra = {0.7, 1.5};
    const auto sys = assemble(mesh.area, mesh.couplings, c, std::vector<double>(mesh.size(), 0.0), {});
    const double Tx = (0.3 + 0.7);
    // coarse leaf (2, 1, 0) touches the fine leaves (3, 4, 0) and (3, 4, 1) across x = 1/2
    const int coarse = mesh.index.at({2, 1, 0});
    const int f0 = mesh.index.at({3, 4, 0}), f1 = mesh.index.at({3, 4, 1});
    CHECK_THAT(sys.matrix.at(coarse, f0), WithinAbs(kInterfaceGeom * Tx, 1e-15));
    CHECK_THAT(sys.matrix.at(coarse, f1), WithinAbs(kInterfaceGeom * Tx, 1e-15));
    CHECK_THAT(sys.matrix.at(f0, coarse), WithinAbs(kInterfaceGeom * Tx, 1e-15));
    // the diagonal carries the sum of both sub-edge couplings plus the same-level ones
    const double left = Tx;               // (2, 0, 0)
    const double up = 0.5 + 1.5;          // (2, 1, 1)
    CHECK_THAT(sys.matrix.at(coarse, coarse), WithinAbs(-(left + up + 2 * kInterfaceGeom * Tx), 1e-14));
}

TEST_CASE("solution has zero area-weighted mean after every solve") {
    const GridSpec g{1.0, 5, {0, 0}};
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 5; ++trial) {
        const Tree t = testing::random_tree(g, 2, rng, 60);
        const LeafMesh mesh = build_leaf_mesh(t);
        const auto v = field_of(gather(t, mesh), kV);
        AxisCoeffs c;
        c.intra = {1.0, 0.5};
        c.extra = {2.0, 1.0};
        std::vector<double> i_app(mesh.size(), 0.0);
        for (auto& x : i_app) x = std::uniform_real_distribution<double>(0, 1)(rng);  // incompatible on purpose
        const auto sys = assemble(mesh.area, mesh.couplings, c, v, i_app);
        const auto x = solve_zero_mean(sys);
        double s = 0.0, l1 = 0.0;
        for (int k = 0; k < mesh.size(); ++k) {
            s += mesh.area[k] * x[k];
            l1 += std::abs(x[k]);
        }
        CHECK(std::abs(s) <= 1e-12 * std::max(l1, 1.0));
    }
}

TEST_CASE("cg error decreases in the energy norm") {
    const GridSpec g{1.0, 4, {0, 0}};
    const ModelSpec m = bidomain(6, 0.6, 24, 12, 0.3);
    UniformFv fv(g, 4, m, {});
    std::mt19937_64 rng(41);
    const std::vector<double> area(fv.areas().begin(), fv.areas().end());
    EllipticSystem sys = assemble(area, fv.couplings(), axis_coeffs(m), std::vector<double>(256, 0.0), {});
    const auto exact = random_zero_mean(rng, area);
    sys.rhs = matvec(sys.matrix, exact);
    std::vector<double> energies;
    auto energy = [&](std::span<const double> x) {
        std::vector<double> e(x.begin(), x.end());
        for (std::size_t k = 0; k < e.size(); ++k) e[k] -= exact[k];
        const auto Ae = matvec(sys.matrix, e);
        return -std::inner_product(e.begin(), e.end(), Ae.begin(), 0.0);
    };
    energies.push_back(energy(std::vector<double>(256, 0.0)));
    SolveOptions opt;
    opt.on_iterate = [&](std::span<const double> x) { energies.push_back(energy(x)); };
    solve_zero_mean(sys, opt);
    REQUIRE(energies.size() > 3);
    for (std::size_t k = 1; k < energies.size(); ++k) CHECK(energies[k] <= energies[k - 1] * (1 + 1e-12) + 1e-28);
}

TEST_CASE("iteration cap raises a divergence error with the residual history") {
    const GridSpec g{1.0, 4, {0, 0}};
    const ModelSpec m = bidomain(1, 1, 1, 1, 0);
    UniformFv fv(g, 4, m, {});
    std::vector<double> v(256);
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = std::sin(0.37 * k);
    const auto sys = assemble(fv.areas(), fv.couplings(), axis_coeffs(m), v, {});
    SolveOptions opt;
    opt.max_iterations = 2;
    try {
        solve_zero_mean(sys, opt);
        FAIL("expected SolverDivergence");
    } catch (const SolverDivergence& e) {
        CHECK(e.residual_history.size() == 2);
    }
}
