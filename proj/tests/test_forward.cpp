#include <doctest.h>

#include <cmath>

#include "seelab/forward.hpp"
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

OperatorFamily diag_family(const Vec& lambda) {
    OperatorFamily fam;
    const Mat a = lambda.asDiagonal();
    fam.A = [a](double) { return a; };
    fam.delta = 1e-12;
    fam.k_bound = 2.0 * lambda.cwiseAbs().maxCoeff() + 1.0;
    return fam;
}

ControlProblem empty_problem(int n, int m) {
    ControlProblem pb;
    pb.state_dim = n;
    pb.noise_dim = m;
    pb.control_dim = 1;
    pb.u_points = {Vec::Zero(1)};
    return pb;
}

}  // namespace

TEST_CASE("zero data stays at zero") {
    const auto space = flat_space(2, 1);
    auto fam = diag_family(Vec::Constant(2, -1.0));
    const auto pb = empty_problem(2, 1);
    const auto grid = TimeGrid::uniform(0.0, 1.0, 32);
    const auto ens = simulate_forward(space, fam, pb, constant_policy(Vec::Zero(1)),
                                      Vec::Zero(2), grid, 16, 11);
    for (int p = 0; p < ens.n_paths; ++p)
        for (int i = 0; i <= grid.M; ++i) CHECK(ens.X.at(p, i).norm() == 0.0);
}

TEST_CASE("scalar exponential decay, |X(1) - e^{-1}| <= 5e-3 at M=512") {
    const auto space = flat_space(1, 1);
    auto fam = diag_family(Vec::Constant(1, -1.0));
    const auto pb = empty_problem(1, 1);
    const auto grid = TimeGrid::uniform(0.0, 1.0, 512);
    const auto ens = simulate_forward(space, fam, pb, constant_policy(Vec::Zero(1)),
                                      Vec::Constant(1, 1.0), grid, 1, 3);
    CHECK(std::abs(ens.X.at(0, grid.M)[0] - std::exp(-1.0)) <= 5e-3);
}

TEST_CASE("constant diffusion: X(T) - x0 is centered with variance ‖b‖²T") {
    const auto space = flat_space(1, 1);
    OperatorFamily fam;
    fam.delta = 1e-12;
    fam.k_bound = 1.0;
    auto pb = empty_problem(1, 1);
    const double bval = 0.7;
    pb.b = [bval](double, const Vec&, const Vec&) { return Mat::Constant(1, 1, bval); };

    const auto grid = TimeGrid::uniform(0.0, 1.0, 64);
    const int N = 4000;
    const auto ens = simulate_forward(space, fam, pb, constant_policy(Vec::Zero(1)),
                                      Vec::Constant(1, 0.5), grid, N, 17);
    double mean = 0.0, var = 0.0;
    for (int p = 0; p < N; ++p) mean += ens.X.at(p, grid.M)[0] - 0.5;
    mean /= N;
    for (int p = 0; p < N; ++p) {
        const double d = ens.X.at(p, grid.M)[0] - 0.5 - mean;
        var += d * d;
    }
    var /= (N - 1);
    const double target = bval * bval;
    const double se_var = target * std::sqrt(2.0 / (N - 1));
    CHECK(std::abs(var - target) <= 5.0 * se_var);
    CHECK(std::abs(mean) <= 5.0 * bval / std::sqrt(static_cast<double>(N)));
}

TEST_CASE("increment variances sit within 5 standard errors of dt") {
    const auto grid = TimeGrid::uniform(0.0, 1.0, 16);
    const int N = 6000;
    const auto dW = draw_increments(grid, N, 2, 23);
    for (int i = 0; i < grid.M; ++i) {
        for (int j = 0; j < 2; ++j) {
            double var = 0.0;
            for (int p = 0; p < N; ++p) var += dW.at(p, i)[j] * dW.at(p, i)[j];
            var /= N;
            const double se = grid.dt(i) * std::sqrt(2.0 / N);
            CHECK(std::abs(var - grid.dt(i)) <= 5.0 * se);
        }
    }
}

TEST_CASE("propagator: trivial generator gives identity factors") {
    const auto space = flat_space(2, 1);
    OperatorFamily fam;
    fam.delta = 1e-12;
    fam.k_bound = 0.0;
    const auto grid = TimeGrid::uniform(0.0, 1.0, 8);
    const auto dW = draw_increments(grid, 4, 1, 5);
    const auto prop = simulate_propagator(plain_operator_field(space, fam, grid), grid, dW);
    CHECK((prop.phi(2, 3, 3) - Mat::Identity(2, 2)).norm() == 0.0);
    CHECK((prop.phi(1, 0, grid.M) - Mat::Identity(2, 2)).norm() == 0.0);
}

TEST_CASE("propagator: scalar exponential within 1e-2 at M=512") {
    const auto space = flat_space(1, 1);
    auto fam = diag_family(Vec::Constant(1, -1.0));
    const auto grid = TimeGrid::uniform(0.0, 1.0, 512);
    const auto dW = draw_increments(grid, 1, 1, 5);
    const auto prop = simulate_propagator(plain_operator_field(space, fam, grid), grid, dW);
    const double val = prop.phi(0, 0, grid.M)(0, 0);
    CHECK(std::abs(val - std::exp(-1.0)) / std::exp(-1.0) <= 1e-2);
}

TEST_CASE("propagator cocycle Φ(i,k) = Φ(j,k)Φ(i,j) to machine precision") {
    auto [space, fam] = make_laplacian_space(3, 2, 1.0, 0.0);
    Mat skew = Mat::Zero(3, 3);
    skew(0, 1) = 0.4;
    skew(1, 0) = -0.4;
    fam.B = [skew](double) { return std::vector<Mat>{skew, Mat(0.2 * skew)}; };
    const auto grid = TimeGrid::uniform(0.0, 1.0, 64);
    const auto dW = draw_increments(grid, 3, 2, 9);
    const auto prop = simulate_propagator(plain_operator_field(space, fam, grid), grid, dW);
    const int triples[][3] = {{0, 10, 30}, {5, 6, 7}, {20, 40, 64}, {0, 32, 64}};
    for (const auto& t : triples) {
        const Mat lhs = prop.phi(1, t[0], t[2]);
        const Mat rhs = prop.phi(1, t[1], t[2]) * prop.phi(1, t[0], t[1]);
        CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + lhs.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("tilted field with β=0 equals the plain field") {
    const auto space = flat_space(2, 2);
    auto fam = diag_family(Vec::Constant(2, -0.5));
    Mat b0 = Mat::Identity(2, 2) * 0.3;
    fam.B = [b0](double) { return std::vector<Mat>{b0, Mat(0.5 * b0)}; };
    const auto grid = TimeGrid::uniform(0.0, 0.5, 16);
    const auto dW = draw_increments(grid, 8, 2, 77);
    const auto plain = simulate_propagator(plain_operator_field(space, fam, grid), grid, dW);

    // β ≡ 0 tilt written as a path field
    PathOperatorField tilted;
    tilted.dim = 2;
    tilted.path_independent = false;
    tilted.drift_op = [&](int, int i) { return fam.A_at(grid.knots[i + 1]); };
    tilted.diff_ops = [&](int, int i) { return absorbed_b_ops(space, fam, grid.knots[i]); };
    const auto tilt = simulate_propagator(tilted, grid, dW, Propagator::Flavor::tilted);
    for (int p = 0; p < 8; ++p)
        for (int i = 0; i < grid.M; ++i)
            CHECK((plain.factors.at(p, i) - tilt.factors.at(p, i)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("linearity: superposed initial data equals sum of runs pathwise") {
    const auto space = flat_space(2, 1);
    auto fam = diag_family((Vec(2) << -1.0, -2.0).finished());
    Mat skew = Mat::Zero(2, 2);
    skew(0, 1) = 0.5;
    skew(1, 0) = -0.5;
    fam.B = [skew](double) { return std::vector<Mat>{skew}; };
    const auto pb = empty_problem(2, 1);
    const auto grid = TimeGrid::uniform(0.0, 1.0, 32);
    const Vec xa = (Vec(2) << 1.0, 0.0).finished();
    const Vec xb = (Vec(2) << -0.3, 0.8).finished();
    const auto pol = constant_policy(Vec::Zero(1));
    const auto ea = simulate_forward(space, fam, pb, pol, xa, grid, 32, 123);
    const auto eb = simulate_forward(space, fam, pb, pol, xb, grid, 32, 123);
    const auto eab = simulate_forward(space, fam, pb, pol, xa + xb, grid, 32, 123);
    for (int p = 0; p < 32; ++p)
        for (int i = 0; i <= grid.M; ++i)
            CHECK((eab.X.at(p, i) - ea.X.at(p, i) - eb.X.at(p, i)).cwiseAbs().maxCoeff() <=
                  1e-12);
}

TEST_CASE("mean-square stability of the heat family under zero forcing") {
    auto [space, fam] = make_laplacian_space(4, 2, 1.0, 0.0);
    const auto pb = empty_problem(4, 2);
    const auto grid = TimeGrid::uniform(0.0, 1.0, 32);
    const Vec x0 = Vec::Constant(4, 0.5);
    const auto ens =
        simulate_forward(space, fam, pb, constant_policy(Vec::Zero(1)), x0, grid, 200, 31);
    double ms = 0.0;
    for (int p = 0; p < ens.n_paths; ++p) ms += ens.X.at(p, grid.M).squaredNorm();
    ms /= ens.n_paths;
    CHECK(ms <= x0.squaredNorm());
}

TEST_CASE("deterministic replay across worker counts") {
    const auto space = flat_space(2, 2);
    auto fam = diag_family(Vec::Constant(2, -1.0));
    auto pb = empty_problem(2, 2);
    pb.b = [](double, const Vec& x, const Vec&) {
        Mat b(2, 2);
        b << 0.1, 0.2, 0.3 + 0.1 * x[0], 0.0;
        return b;
    };
    const auto grid = TimeGrid::uniform(0.0, 1.0, 16);
    const Vec x0 = Vec::Constant(2, 1.0);
    set_workers(1);
    const auto e1 = simulate_forward(space, fam, pb, constant_policy(Vec::Zero(1)), x0, grid,
                                     3000, 55);
    set_workers(4);
    const auto e4 = simulate_forward(space, fam, pb, constant_policy(Vec::Zero(1)), x0, grid,
                                     3000, 55);
    set_workers(1);
    CHECK(e1.dW.at(2999, 15) == e4.dW.at(2999, 15));
    for (int p = 0; p < 3000; p += 97)
        CHECK((e1.X.at(p, grid.M) - e4.X.at(p, grid.M)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("a priori moment scaling: slope 2α for initial data and forcing") {
    auto [space, fam] = make_laplacian_space(3, 1, 1.0, 0.0);
    AprioriConfig cfg;
    cfg.z0 = Vec::Constant(3, 1.0);
    cfg.scales = {1.0, 0.5, 0.25};
    cfg.alpha = 1.0;
    cfg.grid = TimeGrid::uniform(0.0, 0.5, 32);
    cfg.n_paths = 64;
    cfg.seed = 2;

    SUBCASE("scaled initial data, zero forcing") {
        const auto rep = check_apriori_moment(space, fam, cfg);
        CHECK(rep.pass);
        CHECK(rep.slope_sup == doctest::Approx(2.0).epsilon(0.1));
        CHECK(rep.slope_vint == doctest::Approx(2.0).epsilon(0.1));
    }
    SUBCASE("zero initial data, scaled forcing") {
        cfg.z0 = Vec::Zero(3);
        cfg.scale_initial = false;
        cfg.scale_forcing = true;
        cfg.force_a = [](double) { return Vec::Constant(3, 0.4); };
        cfg.force_b = [](double) { return Mat::Constant(3, 1, 0.2); };
        const auto rep = check_apriori_moment(space, fam, cfg);
        CHECK(rep.pass);
        CHECK(std::abs(rep.slope_sup - 2.0) <= 0.2);
    }
    SUBCASE("all-zero inputs are degenerate and pass") {
        cfg.z0 = Vec::Zero(3);
        const auto rep = check_apriori_moment(space, fam, cfg);
        CHECK(rep.degenerate);
        CHECK(rep.pass);
        for (double mval : rep.sup_moments) CHECK(mval == 0.0);
    }
    SUBCASE("fewer than 3 scales is invalid") {
        cfg.scales = {1.0, 0.5};
        CHECK_THROWS_AS(check_apriori_moment(space, fam, cfg), std::invalid_argument);
    }
}

TEST_CASE("continuity estimate: drift-only and diffusion-only slopes") {
    auto [space, fam] = make_laplacian_space(2, 1, 1.0, 0.0);
    Vec z0 = (Vec(2) << 1.0, 0.0).finished();  // first basis vector
    const std::vector<double> rhos{0.02, 0.04, 0.08, 0.16};

    SUBCASE("pure drift: slope >= 1 (α=1)") {
        const auto rep = check_continuity_estimate(space, fam, nullptr, nullptr, z0, 0.0, rhos,
                                                   1.0, 0.2, 256, 64, 21);
        CHECK(rep.pass);
        CHECK(rep.slope >= 1.0 - 0.25);
    }
    SUBCASE("constant diffusion forcing: slope 1 ± 0.25 (α=1)") {
        // mild dissipation so the probe window stays below the mixing time
        GalerkinSpace s2;
        s2.n = 2;
        s2.m = 1;
        s2.v_weights = Vec::Constant(2, 1.5);
        s2.q_sqrt = Vec::Constant(1, 1.0);
        OperatorFamily f2;
        f2.A = [](double) { return Mat(-0.5 * Mat::Identity(2, 2)); };
        f2.delta = 0.1;
        f2.k_bound = 1.0;
        auto fb = [](double, const Vec&) { return Mat::Constant(2, 1, 0.5); };
        const auto rep = check_continuity_estimate(s2, f2, nullptr, fb, Vec(Vec::Zero(2)), 0.0,
                                                   rhos, 1.0, 0.2, 256, 2000, 21);
        CHECK(std::abs(rep.slope - 1.0) <= 0.25);
    }
    SUBCASE("rho = 0 gives exactly zero; rho beyond horizon throws") {
        const auto rep = check_continuity_estimate(space, fam, nullptr, nullptr, z0, 0.0, {0.0},
                                                   1.0, 0.2, 16, 8, 21);
        CHECK(rep.moments[0] == 0.0);
        CHECK_THROWS_AS(check_continuity_estimate(space, fam, nullptr, nullptr, z0, 0.0, {0.5},
                                                  1.0, 0.2, 16, 8, 21),
                        std::invalid_argument);
    }
}

TEST_CASE("variational remainders") {
    const auto space = flat_space(1, 1);
    auto fam = diag_family(Vec::Constant(1, -1.0));
    const auto grid = TimeGrid::uniform(0.0, 0.5, 64);

    SUBCASE("quadratic drift: E∫‖ε₁‖² slope ≈ 4 at α=2, ε₃ ≡ 0") {
        ControlProblem pb;
        pb.state_dim = 1;
        pb.noise_dim = 1;
        pb.u_points = {Vec::Zero(1)};
        pb.a = [](double, const Vec& x, const Vec&) { return Vec(x.array().square()); };
        pb.a_x = [](double, const Vec& x, const Vec&) { return Mat(2.0 * x.asDiagonal()); };
        pb.a_xx = [](double, const Vec&, const Vec&) {
            return std::vector<Mat>{Mat::Constant(1, 1, 2.0)};
        };
        pb.b = [](double, const Vec&, const Vec&) { return Mat::Constant(1, 1, 0.1); };
        const auto base = simulate_forward(space, fam, pb, constant_policy(Vec::Zero(1)),
                                           Vec::Constant(1, 0.5), grid, 200, 8);
        const auto diag = variational_expansion(space, fam, pb, base, Vec::Constant(1, 1.0),
                                                {1e-1, 1e-2, 1e-3}, 2.0);
        CHECK(diag.slope1 >= 4.0 - 0.3);
        CHECK(std::isinf(diag.slope3));  // a_xx constant => ε₃ identically zero
        for (double mv : diag.m3) CHECK(mv <= diag.zero_floor);
    }
    SUBCASE("linear coefficients: all remainders vanish identically") {
        ControlProblem pb;
        pb.state_dim = 1;
        pb.noise_dim = 1;
        pb.u_points = {Vec::Zero(1)};
        pb.a = [](double, const Vec& x, const Vec&) { return Vec(0.7 * x); };
        pb.a_x = [](double, const Vec&, const Vec&) { return Mat::Constant(1, 1, 0.7); };
        pb.b = [](double, const Vec& x, const Vec&) { return Mat(0.3 * x); };
        pb.b_x = [](double, const Vec&, const Vec&) {
            return std::vector<Mat>{Mat::Constant(1, 1, 0.3)};
        };
        const auto base = simulate_forward(space, fam, pb, constant_policy(Vec::Zero(1)),
                                           Vec::Constant(1, 1.0), grid, 50, 8);
        const auto diag = variational_expansion(space, fam, pb, base, Vec::Constant(1, 1.0),
                                                {1e-1, 1e-2}, 2.0);
        for (double mv : diag.m3) CHECK(mv <= diag.zero_floor);
        for (double mv : diag.m4) CHECK(mv <= diag.zero_floor);
    }
    SUBCASE("zero direction and invalid sizes") {
        ControlProblem pb = empty_problem(1, 1);
        const auto base = simulate_forward(space, fam, pb, constant_policy(Vec::Zero(1)),
                                           Vec::Constant(1, 1.0), grid, 10, 8);
        const auto diag =
            variational_expansion(space, fam, pb, base, Vec::Zero(1), {1e-1, 1e-2}, 2.0);
        for (double mv : diag.m1) CHECK(mv == 0.0);
        CHECK_THROWS_AS(
            variational_expansion(space, fam, pb, base, Vec::Zero(1), {-1.0}, 2.0),
            std::invalid_argument);
    }
}
