#include <doctest.h>

#include <cmath>

#include "seelab/bsde.hpp"
#include "seelab/parallel.hpp"

using namespace seelab;

namespace {

GalerkinSpace flat_space(int n, int m) {
    GalerkinSpace s;
    s.n = n;
    s.m = m;
    s.v_weights = Vec::Constant(n, 1.0);
    s.q_sqrt = Vec::Constant(m, 1.0);
    return s;
}

OperatorFamily zero_family() {
    OperatorFamily fam;
    fam.delta = 1e-12;
    fam.k_bound = 1.0;
    return fam;
}

}  // namespace

TEST_CASE("driftless linear terminal: Y(0) estimates <a, x0> within 3 SE") {
    const auto space = flat_space(2, 1);
    auto fam = zero_family();
    ControlProblem pb;
    pb.state_dim = 2;
    pb.noise_dim = 1;
    pb.u_points = {Vec::Zero(1)};
    Mat b0(2, 1);
    b0 << 0.6, 0.4;
    pb.b = [b0](double, const Vec&, const Vec&) { return b0; };
    const Vec a = (Vec(2) << 1.0, -0.5).finished();
    pb.h = [a](const Vec& x) { return a.dot(x); };

    const auto grid = TimeGrid::uniform(0.0, 1.0, 32);
    const Vec x0 = (Vec(2) << 0.3, 0.7).finished();
    const auto res =
        cost_functional(space, fam, pb, x0, constant_policy(Vec::Zero(1)), grid, 8000, 91, {});
    CHECK(std::abs(res.value - a.dot(x0)) <= 3.0 * res.se);
    CHECK(res.se > 0.0);
}

TEST_CASE("linear generator k = c y reproduces e^{c(T-t)} with degree-0 basis") {
    const auto space = flat_space(1, 1);
    auto fam = zero_family();
    ControlProblem pb;
    pb.state_dim = 1;
    pb.noise_dim = 1;
    pb.u_points = {Vec::Zero(1)};
    pb.k = [](double, const Vec&, double y, const RowVec&, const Vec&) { return y; };
    const auto grid = TimeGrid::uniform(0.0, 1.0, 256);
    const auto ens = simulate_forward(space, fam, pb, constant_policy(Vec::Zero(1)),
                                      Vec::Zero(1), grid, 64, 5);
    RegressionBasis basis;
    basis.degree = 0;
    const auto sol = solve_bsde(pb, ens, std::vector<double>(64, 1.0), basis);
    CHECK(std::abs(sol.Y(0, 0) - std::exp(1.0)) <= 2e-2);
}

TEST_CASE("zero terminal and driver give the identically zero solution") {
    const auto space = flat_space(1, 1);
    auto fam = zero_family();
    ControlProblem pb;
    pb.state_dim = 1;
    pb.noise_dim = 1;
    pb.u_points = {Vec::Zero(1)};
    pb.b = [](double, const Vec&, const Vec&) { return Mat::Constant(1, 1, 0.4); };
    pb.k = [](double, const Vec&, double y, const RowVec& z, const Vec&) {
        return 0.3 * y + 0.2 * z[0];
    };
    const auto grid = TimeGrid::uniform(0.0, 1.0, 16);
    const auto ens = simulate_forward(space, fam, pb, constant_policy(Vec::Zero(1)),
                                      Vec::Zero(1), grid, 500, 5);
    const auto sol = solve_bsde(pb, ens, std::vector<double>(500, 0.0), {});
    for (int p = 0; p < 500; p += 53) {
        for (int i = 0; i <= grid.M; ++i) CHECK(sol.Y(p, i) == 0.0);
        for (int i = 0; i < grid.M; ++i) CHECK(sol.Z.at(p, i).norm() == 0.0);
    }
}

TEST_CASE("comparison: larger terminal gives larger value up to 3 SE") {
    const auto space = flat_space(1, 1);
    auto fam = zero_family();
    ControlProblem pb;
    pb.state_dim = 1;
    pb.noise_dim = 1;
    pb.u_points = {Vec::Zero(1)};
    pb.b = [](double, const Vec&, const Vec&) { return Mat::Constant(1, 1, 0.5); };
    pb.k = [](double, const Vec&, double y, const RowVec&, const Vec&) {
        return -0.2 * y;
    };
    const auto grid = TimeGrid::uniform(0.0, 1.0, 32);
    const auto ens = simulate_forward(space, fam, pb, constant_policy(Vec::Zero(1)),
                                      Vec::Constant(1, 1.0), grid, 4000, 6);
    std::vector<double> xi1(4000), xi2(4000);
    for (int p = 0; p < 4000; ++p) {
        const double x = ens.X.at(p, grid.M)[0];
        xi2[p] = std::tanh(x);
        xi1[p] = xi2[p] + 0.1 + 0.05 * std::cos(x);  // >= xi2 pathwise
    }
    const auto v1 = backward_semigroup(pb, ens, xi1, {});
    const auto v2 = backward_semigroup(pb, ens, xi2, {});
    CHECK(v1.value >= v2.value - 3.0 * (v1.se + v2.se));
}

TEST_CASE("flow property: composing through an intermediate time agrees within 3 SE") {
    const auto space = flat_space(1, 1);
    auto fam = zero_family();
    ControlProblem pb;
    pb.state_dim = 1;
    pb.noise_dim = 1;
    pb.u_points = {Vec::Zero(1)};
    pb.b = [](double, const Vec& x, const Vec&) { return Mat::Constant(1, 1, 0.3); };
    pb.k = [](double, const Vec& x, double y, const RowVec& z, const Vec&) {
        return 0.4 * std::tanh(y) + 0.1 * z[0] + 0.2 * std::tanh(x[0]);
    };
    pb.h = [](const Vec& x) { return std::tanh(x[0]); };

    const int M = 64;
    const auto grid = TimeGrid::uniform(0.0, 1.0, M);
    const Vec x0 = Vec::Constant(1, 0.4);
    const auto ens =
        simulate_forward(space, fam, pb, constant_policy(Vec::Zero(1)), x0, grid, 8000, 77);
    const auto full = cost_from_ensemble(pb, ens, {});

    // terminal for [0, t] from the [t, T] solve on the same paths
    const int cut = M / 2;
    std::vector<double> terminal(8000);
    for (int p = 0; p < 8000; ++p) terminal[p] = pb.terminal(ens.X.at(p, M));
    const auto sol = solve_bsde(pb, ens, terminal, {});

    PathEnsemble head;
    head.grid = TimeGrid::uniform(0.0, grid.knots[cut], cut);
    head.n_paths = 8000;
    head.seed = ens.seed;
    head.dW = VecPaths(8000, cut, 1);
    head.X = VecPaths(8000, cut + 1, 1);
    head.U = VecPaths(8000, cut, 1);
    std::vector<double> eta(8000);
    for (int p = 0; p < 8000; ++p) {
        for (int i = 0; i < cut; ++i) {
            head.dW.at(p, i) = ens.dW.at(p, i);
            head.X.at(p, i) = ens.X.at(p, i);
            head.U.at(p, i) = ens.U.at(p, i);
        }
        head.X.at(p, cut) = ens.X.at(p, cut);
        eta[p] = sol.Y(p, cut);
    }
    const auto composed = backward_semigroup(pb, head, eta, {});
    CHECK(std::abs(composed.value - full.value) <= 3.0 * (composed.se + full.se) + 1e-3);
}

TEST_CASE("martingale representation: Z ≈ aᵀb for generator-free linear terminal") {
    const auto space = flat_space(2, 1);
    auto fam = zero_family();
    ControlProblem pb;
    pb.state_dim = 2;
    pb.noise_dim = 1;
    pb.u_points = {Vec::Zero(1)};
    Mat b0(2, 1);
    b0 << 0.5, -0.2;
    pb.b = [b0](double, const Vec&, const Vec&) { return b0; };
    const Vec a = (Vec(2) << 1.0, 1.0).finished();
    const double ztrue = (a.transpose() * b0)(0, 0);

    const auto grid = TimeGrid::uniform(0.0, 1.0, 16);
    const auto ens = simulate_forward(space, fam, pb, constant_policy(Vec::Zero(1)),
                                      Vec::Zero(2), grid, 20000, 13);
    std::vector<double> terminal(20000);
    for (int p = 0; p < 20000; ++p) terminal[p] = a.dot(ens.X.at(p, grid.M));
    const auto sol = solve_bsde(pb, ens, terminal, {});
    // pooled interior estimate vs exact row
    double zbar = 0.0;
    int count = 0;
    for (int i = 1; i < grid.M; ++i)
        for (int p = 0; p < 20000; p += 11) {
            zbar += sol.Z.at(p, i)[0];
            ++count;
        }
    zbar /= count;
    CHECK(std::abs(zbar - ztrue) <= 0.02 * std::abs(ztrue) + 5e-3);
}

TEST_CASE("degenerate semigroup interval returns the mean of eta") {
    ControlProblem pb;
    pb.state_dim = 1;
    pb.noise_dim = 1;
    pb.u_points = {Vec::Zero(1)};
    PathEnsemble ens;
    ens.grid.t0 = 0.5;
    ens.grid.T = 0.5;
    ens.grid.M = 0;
    ens.grid.knots = {0.5};
    ens.n_paths = 4;
    const auto v = backward_semigroup(pb, ens, {1.0, 1.0, 1.0, 1.0}, {});
    CHECK(v.value == 1.0);
    CHECK(v.se == 0.0);
}

TEST_CASE("constant terminal and unit driver integrate exactly") {
    const auto space = flat_space(1, 1);
    auto fam = zero_family();
    const auto grid = TimeGrid::uniform(0.25, 1.0, 48);

    ControlProblem pb;
    pb.state_dim = 1;
    pb.noise_dim = 1;
    pb.u_points = {Vec::Zero(1)};
    pb.b = [](double, const Vec&, const Vec&) { return Mat::Constant(1, 1, 0.3); };

    SUBCASE("h ≡ c, k ≡ 0 -> J = c up to ridge dust") {
        pb.h = [](const Vec&) { return 2.5; };
        const auto r = cost_functional(space, fam, pb, Vec::Zero(1),
                                       constant_policy(Vec::Zero(1)), grid, 500, 3, {});
        CHECK(std::abs(r.value - 2.5) <= 1e-10);
    }
    SUBCASE("k ≡ 1, h ≡ 0 -> J = T - t0 exactly") {
        pb.k = [](double, const Vec&, double, const RowVec&, const Vec&) { return 1.0; };
        const auto r = cost_functional(space, fam, pb, Vec::Zero(1),
                                       constant_policy(Vec::Zero(1)), grid, 500, 3, {});
        CHECK(std::abs(r.value - 0.75) <= 1e-10);
    }
}

TEST_CASE("fixed seed reproduces Y(0) bit-for-bit across worker counts") {
    const auto space = flat_space(1, 1);
    auto fam = zero_family();
    ControlProblem pb;
    pb.state_dim = 1;
    pb.noise_dim = 1;
    pb.u_points = {Vec::Zero(1)};
    pb.b = [](double, const Vec& x, const Vec&) { return Mat::Constant(1, 1, 0.2 + 0.1 * std::tanh(x[0])); };
    pb.k = [](double, const Vec& x, double y, const RowVec& z, const Vec&) {
        return 0.2 * y + 0.1 * z[0] + std::tanh(x[0]);
    };
    pb.h = [](const Vec& x) { return x[0] * x[0]; };
    const auto grid = TimeGrid::uniform(0.0, 1.0, 24);

    set_workers(1);
    const auto r1 = cost_functional(space, fam, pb, Vec::Constant(1, 0.7),
                                    constant_policy(Vec::Zero(1)), grid, 3000, 19, {});
    set_workers(8);
    const auto r8 = cost_functional(space, fam, pb, Vec::Constant(1, 0.7),
                                    constant_policy(Vec::Zero(1)), grid, 3000, 19, {});
    set_workers(1);
    CHECK(r1.value == r8.value);
    CHECK(r1.se == r8.se);
}
