#include "seelab/forward.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "seelab/parallel.hpp"
#include "seelab/rng.hpp"

namespace seelab {

double fit_loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys,
                        double floor) {
    require(xs.size() == ys.size(), "fit_loglog_slope: size mismatch");
    std::vector<double> lx, ly;
    bool any_positive = false;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (ys[i] > floor) {
            any_positive = true;
            lx.push_back(std::log(xs[i]));
            ly.push_back(std::log(ys[i]));
        }
    }
    if (!any_positive) return std::numeric_limits<double>::infinity();
    if (lx.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= lx.size();
    my /= lx.size();
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    return sxy / sxx;
}

VecPaths draw_increments(const TimeGrid& grid, int n_paths, int noise_dim, std::uint64_t seed) {
    grid.validate();
    require(n_paths >= 1, "draw_increments: need at least one path");
    VecPaths dW(n_paths, grid.M, noise_dim);
    std::vector<double> sdt(grid.M);
    for (int i = 0; i < grid.M; ++i) sdt[i] = std::sqrt(grid.dt(i));
    for_blocks(static_cast<std::size_t>(n_paths), [&](std::size_t b, std::size_t e, std::size_t) {
        for (std::size_t p = b; p < e; ++p) {
            const CounterRng gen(seed, p);
            for (int i = 0; i < grid.M; ++i) {
                auto row = dW.at(static_cast<int>(p), i);
                for (int j = 0; j < noise_dim; ++j)
                    row[j] = sdt[i] * gen.normal(static_cast<std::uint64_t>(i) * noise_dim + j);
            }
        }
    });
    return dW;
}

namespace {

struct StepOperators {
    Eigen::PartialPivLU<Mat> implicit_lu;  // LU of (I - dt A(t_{i+1}))
    Mat a_left;                            // A(t_i), for the explicit scheme
    std::vector<Mat> b_abs;                // q_j B_j(t_i)
    bool has_a = false;
};

StepOperators make_step_operators(const GalerkinSpace& space, const OperatorFamily& fam,
                                  const TimeGrid& grid, int i, Scheme scheme) {
    StepOperators ops;
    const Mat a_right = fam.A_at(grid.knots[i + 1]);
    ops.has_a = a_right.size() > 0;
    if (scheme == Scheme::semi_implicit) {
        Mat lhs = Mat::Identity(space.n, space.n);
        if (ops.has_a) lhs -= grid.dt(i) * a_right;
        ops.implicit_lu.compute(lhs);
    } else if (ops.has_a) {
        ops.a_left = fam.A_at(grid.knots[i]);
    }
    ops.b_abs = absorbed_b_ops(space, fam, grid.knots[i]);
    return ops;
}

}  // namespace

PathEnsemble simulate_forward(const GalerkinSpace& space, const OperatorFamily& fam,
                              const ControlProblem& problem, const Policy& policy, const Vec& x0,
                              const TimeGrid& grid, int n_paths, std::uint64_t seed,
                              Scheme scheme) {
    space.validate();
    fam.validate();
    grid.validate();
    require(n_paths >= 1, "simulate_forward: need at least one path");
    require(x0.size() == space.n, "simulate_forward: x0 dimension mismatch");
    require(static_cast<bool>(policy), "simulate_forward: policy required");

    PathEnsemble ens;
    ens.grid = grid;
    ens.n_paths = n_paths;
    ens.seed = seed;
    ens.scheme = scheme;
    ens.dW = draw_increments(grid, n_paths, space.m, seed);
    ens.X = VecPaths(n_paths, grid.M + 1, space.n);
    ens.U = VecPaths(n_paths, grid.M, problem.control_dim);

    for (int p = 0; p < n_paths; ++p) ens.X.at(p, 0) = x0;

    for (int i = 0; i < grid.M; ++i) {
        const double t = grid.knots[i];
        const double dt = grid.dt(i);
        const StepOperators ops = make_step_operators(space, fam, grid, i, scheme);

        for_blocks(static_cast<std::size_t>(n_paths), [&](std::size_t b, std::size_t e, std::size_t) {
            for (std::size_t ps = b; ps < e; ++ps) {
                const int p = static_cast<int>(ps);
                const Vec xi = ens.X.at(p, i);
                const Vec u = policy(i, t, xi, p);
                ens.U.at(p, i) = u;

                Vec rhs = xi + dt * problem.drift(t, xi, u);
                const Mat diff = problem.diffusion(t, xi, u);
                const auto dw = ens.dW.at(p, i);
                rhs.noalias() += diff * dw;
                for (std::size_t j = 0; j < ops.b_abs.size(); ++j)
                    rhs.noalias() += (ops.b_abs[j] * xi) * dw[static_cast<int>(j)];

                Vec next;
                if (scheme == Scheme::semi_implicit) {
                    next = ops.implicit_lu.solve(rhs);
                } else {
                    next = rhs;
                    if (ops.has_a) next.noalias() += dt * (ops.a_left * xi);
                }
                if (!next.allFinite())
                    throw numerical_error("simulate_forward: divergence at path " +
                                          std::to_string(p) + ", step " + std::to_string(i));
                ens.X.at(p, i + 1) = next;
            }
        });
    }
    return ens;
}

PathOperatorField plain_operator_field(const GalerkinSpace& space, const OperatorFamily& fam,
                                       const TimeGrid& grid) {
    PathOperatorField field;
    field.dim = space.n;
    field.path_independent = true;
    field.drift_op = [&space, &fam, grid](int, int i) {
        Mat a = fam.A_at(grid.knots[i + 1]);
        return a.size() > 0 ? a : Mat(Mat::Zero(space.n, space.n));
    };
    field.diff_ops = [&space, &fam, grid](int, int i) {
        return absorbed_b_ops(space, fam, grid.knots[i]);
    };
    return field;
}

Propagator simulate_propagator(const PathOperatorField& field, const TimeGrid& grid,
                               const VecPaths& dW, Propagator::Flavor flavor) {
    grid.validate();
    require(dW.steps() == grid.M, "simulate_propagator: grid/increment shape mismatch");
    require(field.dim > 0 && static_cast<bool>(field.drift_op),
            "simulate_propagator: operator field incomplete");

    Propagator prop;
    prop.grid = grid;
    prop.n_paths = dW.paths();
    prop.dim = field.dim;
    prop.flavor = flavor;
    prop.factors = MatPaths(dW.paths(), grid.M, field.dim, field.dim);

    const Mat eye = Mat::Identity(field.dim, field.dim);
    for (int i = 0; i < grid.M; ++i) {
        const double dt = grid.dt(i);
        Eigen::PartialPivLU<Mat> shared_lu;
        std::vector<Mat> shared_b;
        if (field.path_independent) {
            shared_lu.compute(eye - dt * field.drift_op(0, i));
            shared_b = field.diff_ops ? field.diff_ops(0, i) : std::vector<Mat>{};
        }
        for_blocks(static_cast<std::size_t>(dW.paths()), [&](std::size_t b, std::size_t e, std::size_t) {
            for (std::size_t ps = b; ps < e; ++ps) {
                const int p = static_cast<int>(ps);
                Mat rhs = eye;
                const auto dw = dW.at(p, i);
                if (field.path_independent) {
                    for (std::size_t j = 0; j < shared_b.size(); ++j)
                        rhs.noalias() += shared_b[j] * dw[static_cast<int>(j)];
                    prop.factors.at(p, i) = shared_lu.solve(rhs);
                } else {
                    const auto bs = field.diff_ops ? field.diff_ops(p, i) : std::vector<Mat>{};
                    for (std::size_t j = 0; j < bs.size(); ++j)
                        rhs.noalias() += bs[j] * dw[static_cast<int>(j)];
                    Eigen::PartialPivLU<Mat> lu(eye - dt * field.drift_op(p, i));
                    prop.factors.at(p, i) = lu.solve(rhs);
                }
                if (!prop.factors.at(p, i).allFinite())
                    throw numerical_error("simulate_propagator: singular implicit step at path " +
                                          std::to_string(p) + ", step " + std::to_string(i));
            }
        });
    }
    return prop;
}

Mat Propagator::phi(int path, int i, int j) const {
    require(0 <= i && i <= j && j <= grid.M, "Propagator::phi: bad interval");
    Mat p = Mat::Identity(dim, dim);
    for (int l = i; l < j; ++l) p = factors.at(path, l) * p;
    return p;
}

namespace {

// Wraps deterministic forcing into a control problem so the scaling checks go
// through the same integrator as everything else.
ControlProblem forced_problem(int n, int m, const std::function<Vec(double, const Vec&)>& fa,
                              const std::function<Mat(double, const Vec&)>& fb) {
    ControlProblem pb;
    pb.state_dim = n;
    pb.noise_dim = m;
    pb.control_dim = 1;
    if (fa) pb.a = [fa](double t, const Vec& x, const Vec&) { return fa(t, x); };
    if (fb) pb.b = [fb](double t, const Vec& x, const Vec&) { return fb(t, x); };
    pb.u_points = {Vec::Zero(1)};
    return pb;
}

}  // namespace

MomentScalingReport check_apriori_moment(const GalerkinSpace& space, const OperatorFamily& fam,
                                         const AprioriConfig& cfg) {
    require(cfg.scales.size() >= 3, "check_apriori_moment: need at least 3 scales");
    require(cfg.alpha >= 1.0, "check_apriori_moment: alpha must be >= 1");

    MomentScalingReport rep;
    rep.scales = cfg.scales;
    rep.expected_slope = 2.0 * cfg.alpha;

    for (double c : cfg.scales) {
        require(c > 0.0, "check_apriori_moment: scales must be positive");
        const double ci = cfg.scale_initial ? c : 1.0;
        const double cf = cfg.scale_forcing ? c : 1.0;
        std::function<Vec(double, const Vec&)> fa;
        std::function<Mat(double, const Vec&)> fb;
        if (cfg.force_a) fa = [&, cf](double t, const Vec&) { return Vec(cf * cfg.force_a(t)); };
        if (cfg.force_b) fb = [&, cf](double t, const Vec&) { return Mat(cf * cfg.force_b(t)); };
        const ControlProblem pb = forced_problem(space.n, space.m, fa, fb);
        const PathEnsemble ens =
            simulate_forward(space, fam, pb, constant_policy(Vec::Zero(1)), ci * cfg.z0, cfg.grid,
                             cfg.n_paths, cfg.seed);

        double sup_acc = 0.0, vint_acc = 0.0;
        for (int p = 0; p < ens.n_paths; ++p) {
            double sup = 0.0, vint = 0.0;
            for (int i = 0; i <= cfg.grid.M; ++i) {
                const Vec z = ens.X.at(p, i);
                sup = std::max(sup, z.norm());
                if (i < cfg.grid.M) vint += cfg.grid.dt(i) * space.norm_v2(z);
            }
            sup_acc += std::pow(sup, 2.0 * cfg.alpha);
            vint_acc += std::pow(vint, cfg.alpha);
        }
        rep.sup_moments.push_back(sup_acc / ens.n_paths);
        rep.vint_moments.push_back(vint_acc / ens.n_paths);
    }

    rep.slope_sup = fit_loglog_slope(rep.scales, rep.sup_moments);
    rep.slope_vint = fit_loglog_slope(rep.scales, rep.vint_moments);
    rep.degenerate =
        std::isinf(rep.slope_sup) && std::isinf(rep.slope_vint);
    if (rep.degenerate) {
        rep.pass = true;
    } else {
        auto ok = [&](double s) {
            return std::isinf(s) || std::abs(s - rep.expected_slope) <= rep.tolerance;
        };
        rep.pass = ok(rep.slope_sup) && ok(rep.slope_vint);
    }
    return rep;
}

ContinuityReport check_continuity_estimate(
    const GalerkinSpace& space, const OperatorFamily& fam,
    const std::function<Vec(double, const Vec&)>& tilde_a,
    const std::function<Mat(double, const Vec&)>& tilde_b, const Vec& z0, double t,
    const std::vector<double>& rho_list, double alpha, double horizon, int steps, int n_paths,
    std::uint64_t seed) {
    require(!rho_list.empty(), "check_continuity_estimate: empty rho list");
    double rho_max = 0.0;
    for (double r : rho_list) {
        require(r >= 0.0, "check_continuity_estimate: rho must be >= 0");
        require(r <= horizon, "check_continuity_estimate: rho exceeds available horizon");
        rho_max = std::max(rho_max, r);
    }

    ContinuityReport rep;
    rep.rhos = rho_list;
    rep.alpha = alpha;
    if (rho_max == 0.0) {
        rep.moments.assign(rho_list.size(), 0.0);
        rep.slope = std::numeric_limits<double>::quiet_NaN();
        rep.pass = true;
        return rep;
    }

    const TimeGrid grid = TimeGrid::uniform(t, t + rho_max, steps);
    const ControlProblem pb = forced_problem(space.n, space.m, tilde_a, tilde_b);
    const PathEnsemble ens =
        simulate_forward(space, fam, pb, constant_policy(Vec::Zero(1)), z0, grid, n_paths, seed);

    for (double rho : rho_list) {
        if (rho == 0.0) {
            rep.moments.push_back(0.0);
            continue;
        }
        double acc = 0.0;
        for (int p = 0; p < n_paths; ++p) {
            double sup = 0.0;
            for (int i = 0; i <= grid.M; ++i) {
                if (grid.knots[i] > t + rho + 1e-12) break;
                sup = std::max(sup, (ens.X.at(p, i) - z0).norm());
            }
            acc += std::pow(sup, 2.0 * alpha);
        }
        rep.moments.push_back(acc / n_paths);
    }

    std::vector<double> rs, ms;
    for (std::size_t i = 0; i < rho_list.size(); ++i) {
        if (rho_list[i] > 0.0) {
            rs.push_back(rho_list[i]);
            ms.push_back(rep.moments[i]);
        }
    }
    rep.slope = fit_loglog_slope(rs, ms);
    const double z0v = std::pow(1.0 + space.norm_v2(z0), alpha);
    for (std::size_t i = 0; i < rs.size(); ++i)
        rep.c_fit = std::max(rep.c_fit, ms[i] / (z0v * std::pow(rs[i], alpha)));
    rep.pass = std::isinf(rep.slope) || rep.slope >= alpha - 0.25;
    return rep;
}

RemainderDiagnostics variational_expansion(const GalerkinSpace& space, const OperatorFamily& fam,
                                           const ControlProblem& problem,
                                           const PathEnsemble& base, const Vec& direction,
                                           const std::vector<double>& h_list, double alpha) {
    require(!h_list.empty(), "variational_expansion: empty h list");
    for (std::size_t i = 0; i < h_list.size(); ++i) {
        require(h_list[i] > 0.0, "variational_expansion: h must be > 0");
        if (i > 0) require(h_list[i] < h_list[i - 1],
                           "variational_expansion: sizes must be strictly decreasing");
    }
    require(direction.size() == space.n, "variational_expansion: direction dimension mismatch");

    RemainderDiagnostics diag;
    diag.h_list = h_list;
    diag.alpha = alpha;

    const TimeGrid& grid = base.grid;
    const int N = base.n_paths;
    const Vec x0 = base.X.at(0, 0);

    for (double h : h_list) {
        // perturbed state, same increments and same applied controls
        VecPaths X1(N, grid.M + 1, space.n);
        for (int p = 0; p < N; ++p) X1.at(p, 0) = x0 + h * direction;
        for (int i = 0; i < grid.M; ++i) {
            const double t = grid.knots[i];
            const double dt = grid.dt(i);
            const StepOperators ops =
                make_step_operators(space, fam, grid, i, Scheme::semi_implicit);
            for_blocks(static_cast<std::size_t>(N), [&](std::size_t b, std::size_t e, std::size_t) {
                for (std::size_t ps = b; ps < e; ++ps) {
                    const int p = static_cast<int>(ps);
                    const Vec xi = X1.at(p, i);
                    const Vec u = base.U.at(p, i);
                    Vec rhs = xi + dt * problem.drift(t, xi, u);
                    const auto dw = base.dW.at(p, i);
                    rhs.noalias() += problem.diffusion(t, xi, u) * dw;
                    for (std::size_t j = 0; j < ops.b_abs.size(); ++j)
                        rhs.noalias() += (ops.b_abs[j] * xi) * dw[static_cast<int>(j)];
                    Vec next = ops.implicit_lu.solve(rhs);
                    if (!next.allFinite())
                        throw numerical_error("variational_expansion: divergence at path " +
                                              std::to_string(p) + ", step " + std::to_string(i));
                    X1.at(p, i + 1) = next;
                }
            });
        }

        const std::size_t nb = block_count(static_cast<std::size_t>(N));
        std::vector<std::array<double, 4>> partial(nb, {0.0, 0.0, 0.0, 0.0});
        for_blocks(static_cast<std::size_t>(N), [&](std::size_t b, std::size_t e, std::size_t bi) {
            std::array<double, 4> acc{0.0, 0.0, 0.0, 0.0};
            for (std::size_t ps = b; ps < e; ++ps) {
                const int p = static_cast<int>(ps);
                for (int i = 0; i < grid.M; ++i) {
                    const double t = grid.knots[i];
                    const double dt = grid.dt(i);
                    const Vec xb = base.X.at(p, i);
                    const Vec xh = X1.at(p, i) - xb;
                    const Vec u = base.U.at(p, i);

                    const Vec e1 = problem.drift(t, xb + xh, u) - problem.drift(t, xb, u) -
                                   problem.drift_jac(t, xb, u) * xh;
                    Vec quad_a = Vec::Zero(space.n);
                    if (problem.a_xx) {
                        const auto hess = problem.a_xx(t, xb, u);
                        for (int c = 0; c < space.n; ++c) quad_a[c] = xh.dot(hess[c] * xh);
                    }
                    const Vec e3 = e1 - 0.5 * quad_a;

                    const Mat db = problem.diffusion(t, xb + xh, u) - problem.diffusion(t, xb, u);
                    Mat e2 = db;
                    const auto bx = problem.diffusion_jac(t, xb, u);
                    for (int j = 0; j < space.m; ++j) e2.col(j) -= bx[j] * xh;
                    Mat e4 = e2;
                    if (problem.b_xx) {
                        const auto bh = problem.b_xx(t, xb, u);
                        for (int j = 0; j < space.m; ++j)
                            for (int c = 0; c < space.n; ++c)
                                e4(c, j) -= 0.5 * xh.dot(bh[j][c] * xh);
                    }

                    acc[0] += dt * std::pow(e1.norm(), alpha);
                    acc[1] += dt * std::pow(e2.norm(), alpha);
                    acc[2] += dt * std::pow(e3.norm(), alpha);
                    acc[3] += dt * std::pow(e4.norm(), alpha);
                }
            }
            partial[bi] = acc;
        });
        std::array<double, 4> total{0.0, 0.0, 0.0, 0.0};
        for (const auto& a : partial)
            for (int k = 0; k < 4; ++k) total[k] += a[k];
        diag.m1.push_back(total[0] / N);
        diag.m2.push_back(total[1] / N);
        diag.m3.push_back(total[2] / N);
        diag.m4.push_back(total[3] / N);
    }

    diag.zero_floor = std::pow(1e-13, alpha);
    diag.slope1 = fit_loglog_slope(diag.h_list, diag.m1, diag.zero_floor);
    diag.slope2 = fit_loglog_slope(diag.h_list, diag.m2, diag.zero_floor);
    diag.slope3 = fit_loglog_slope(diag.h_list, diag.m3, diag.zero_floor);
    diag.slope4 = fit_loglog_slope(diag.h_list, diag.m4, diag.zero_floor);
    return diag;
}

}  // namespace seelab
