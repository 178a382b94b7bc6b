#include "seelab/adjoint.hpp"

#include <algorithm>
#include <cmath>

#include "seelab/parallel.hpp"

namespace seelab {

namespace {

void require_generator_grads(const ControlProblem& problem, const char* who) {
    if (problem.k && !problem.dk)
        throw config_error(std::string(who) + ": problem does not supply generator derivatives");
}

std::vector<Mat> bbar_ops(const GalerkinSpace& space, const OperatorFamily& fam,
                          const ControlProblem& problem, double t, const Vec& x, const Vec& u) {
    std::vector<Mat> bbar = absorbed_b_ops(space, fam, t);
    if (bbar.empty()) bbar.assign(space.m, Mat::Zero(space.n, space.n));
    if (problem.b_x) {
        const auto bx = problem.b_x(t, x, u);
        for (int j = 0; j < space.m; ++j) bbar[j] += bx[j];
    }
    return bbar;
}

}  // namespace

FirstAdjoint solve_first_adjoint(const GalerkinSpace& space, const OperatorFamily& fam,
                                 const ControlProblem& problem, const PathEnsemble& ens,
                                 const BSDESolution& bsde, const RegressionBasis& basis) {
    require_generator_grads(problem, "solve_first_adjoint");
    if (problem.h && !problem.h_x)
        throw config_error("solve_first_adjoint: problem does not supply h_x");

    const int N = ens.n_paths;
    const int M = ens.grid.M;
    const int n = ens.state_dim();
    const int m = ens.noise_dim();

    FirstAdjoint adj;
    adj.p = VecPaths(N, M + 1, n);
    adj.q = MatPaths(N, M, n, m);

    for (int p = 0; p < N; ++p) adj.p.at(p, M) = problem.terminal_grad(ens.X.at(p, M));

    const FeatureMap fm(basis, n);
    const double fcount = static_cast<double>(fm.count());
    std::vector<double> target(N), fitted(N), cy(N);
    double q_noise_sq = 0.0;
    std::size_t q_noise_terms = 0;

    for (int i = M - 1; i >= 0; --i) {
        const double t = ens.grid.knots[i];
        const double dt = ens.grid.dt(i);
        const RegressionStep reg(fm, ens.X, i, basis.ridge);

        // q_{·,j} = E[(p_{i+1} − Ê[p_{i+1}]) ΔW_j/Δt | X_i], componentwise
        for (int c = 0; c < n; ++c) {
            for (int p = 0; p < N; ++p) target[p] = adj.p.at(p, i + 1)[c];
            reg.project(target, &cy);
            for (int j = 0; j < m; ++j) {
                for (int p = 0; p < N; ++p)
                    target[p] = (adj.p.at(p, i + 1)[c] - cy[p]) * ens.dW.at(p, i)[j] / dt;
                reg.project(target, &fitted);
                double sq = 0.0, mean = 0.0;
                for (int p = 0; p < N; ++p) mean += target[p];
                mean /= N;
                for (int p = 0; p < N; ++p) sq += (target[p] - mean) * (target[p] - mean);
                q_noise_sq += (sq / std::max(1, N - 1)) * fcount / N;
                ++q_noise_terms;
                for (int p = 0; p < N; ++p) adj.q.at(p, i)(c, j) = fitted[p];
            }
        }

        // driver target and implicit Ā* step
        std::vector<std::vector<double>> tau(n, std::vector<double>(N));
        for_blocks(static_cast<std::size_t>(N), [&](std::size_t b, std::size_t e, std::size_t) {
            for (std::size_t ps = b; ps < e; ++ps) {
                const int p = static_cast<int>(ps);
                const Vec x = ens.X.at(p, i);
                const Vec u = ens.U.at(p, i);
                const RowVec z = bsde.Z.at(p, i).transpose();
                const GeneratorGrad g = problem.generator_grad(t, x, bsde.Y(p, i), z, u);
                const auto bbar = bbar_ops(space, fam, problem, t, x, u);
                const Vec pnext = adj.p.at(p, i + 1);
                const Mat qnow = adj.q.at(p, i);

                Vec driver = g.ky * pnext + g.kx;
                for (int j = 0; j < m; ++j) {
                    driver.noalias() += g.kz[j] * (bbar[j].transpose() * pnext);
                    driver.noalias() += bbar[j].transpose() * qnow.col(j);
                    driver.noalias() += g.kz[j] * qnow.col(j);
                }
                for (int c = 0; c < n; ++c) tau[c][ps] = pnext[c] + dt * driver[c];
            }
        });
        std::vector<std::vector<double>> tau_fit(n);
        for (int c = 0; c < n; ++c) reg.project(tau[c], &tau_fit[c]);

        const Mat a_t = [&] {
            Mat a = fam.A_at(t);
            return a.size() > 0 ? a : Mat(Mat::Zero(n, n));
        }();
        for_blocks(static_cast<std::size_t>(N), [&](std::size_t b, std::size_t e, std::size_t) {
            for (std::size_t ps = b; ps < e; ++ps) {
                const int p = static_cast<int>(ps);
                Mat abar_t = a_t;
                if (problem.a_x)
                    abar_t += problem.a_x(t, ens.X.at(p, i), ens.U.at(p, i));
                Vec rhs(n);
                for (int c = 0; c < n; ++c) rhs[c] = tau_fit[c][ps];
                Eigen::PartialPivLU<Mat> lu(Mat::Identity(n, n) - dt * abar_t.transpose());
                const Vec pnow = lu.solve(rhs);
                if (!pnow.allFinite())
                    throw numerical_error("solve_first_adjoint: divergence at step " +
                                          std::to_string(i));
                adj.p.at(p, i) = pnow;
            }
        });
    }
    adj.q_se = q_noise_terms ? std::sqrt(q_noise_sq / q_noise_terms) : 0.0;
    return adj;
}

MatPaths build_G(const GalerkinSpace& space, const OperatorFamily& fam,
                 const ControlProblem& problem, const PathEnsemble& ens, const BSDESolution& bsde,
                 const FirstAdjoint& adj) {
    require_generator_grads(problem, "build_G");
    if (problem.k && !problem.d2k)
        throw config_error("build_G: problem does not supply the generator Hessian");

    const int N = ens.n_paths;
    const int M = ens.grid.M;
    const int n = ens.state_dim();
    const int m = ens.noise_dim();
    MatPaths G(N, M, n, n);

    for (int i = 0; i < M; ++i) {
        const double t = ens.grid.knots[i];
        for_blocks(static_cast<std::size_t>(N), [&](std::size_t b, std::size_t e, std::size_t) {
            for (std::size_t ps = b; ps < e; ++ps) {
                const int p = static_cast<int>(ps);
                const Vec x = ens.X.at(p, i);
                const Vec u = ens.U.at(p, i);
                const RowVec z = bsde.Z.at(p, i).transpose();
                const double y = bsde.Y(p, i);
                const Vec pv = adj.p.at(p, i);
                const Mat qm = adj.q.at(p, i);
                const GeneratorGrad g = problem.generator_grad(t, x, y, z, u);
                const auto bbar = bbar_ops(space, fam, problem, t, x, u);

                Mat out = Mat::Zero(n, n);
                const Mat d2k = problem.generator_hess(t, x, y, z, u);
                if (d2k.cwiseAbs().maxCoeff() > 0.0) {
                    Mat slot(n + 1 + m, n);  // x̂ ↦ (x̂, ⟨p,x̂⟩, ((B̄*p+q)x̂)_j)
                    slot.topRows(n) = Mat::Identity(n, n);
                    slot.row(n) = pv.transpose();
                    for (int j = 0; j < m; ++j)
                        slot.row(n + 1 + j) = (bbar[j].transpose() * pv + qm.col(j)).transpose();
                    out.noalias() = slot.transpose() * d2k * slot;
                }
                if (problem.a_xx) {
                    const auto hess = problem.a_xx(t, x, u);
                    for (int c = 0; c < n; ++c) out.noalias() += pv[c] * hess[c];
                }
                if (problem.b_xx) {
                    const auto bh = problem.b_xx(t, x, u);
                    for (int j = 0; j < m; ++j)
                        for (int c = 0; c < n; ++c)
                            out.noalias() += (g.kz[j] * pv[c] + qm(c, j)) * bh[j][c];
                }
                G.at(p, i) = 0.5 * (out + out.transpose());
            }
        });
    }
    return G;
}

VecPaths generator_kz_paths(const ControlProblem& problem, const PathEnsemble& ens,
                            const BSDESolution& bsde) {
    require_generator_grads(problem, "generator_kz_paths");
    const int N = ens.n_paths;
    const int M = ens.grid.M;
    VecPaths beta(N, M, ens.noise_dim());
    for (int i = 0; i < M; ++i) {
        const double t = ens.grid.knots[i];
        for_blocks(static_cast<std::size_t>(N), [&](std::size_t b, std::size_t e, std::size_t) {
            for (std::size_t ps = b; ps < e; ++ps) {
                const int p = static_cast<int>(ps);
                const GeneratorGrad g =
                    problem.generator_grad(t, ens.X.at(p, i), bsde.Y(p, i),
                                           bsde.Z.at(p, i).transpose(), ens.U.at(p, i));
                beta.at(p, i) = g.kz.transpose();
            }
        });
    }
    return beta;
}

PathOperatorField tilted_adjoint_field(const GalerkinSpace& space, const OperatorFamily& fam,
                                       const ControlProblem& problem, const PathEnsemble& ens,
                                       const VecPaths& beta) {
    PathOperatorField field;
    field.dim = space.n;
    field.path_independent = false;
    const TimeGrid grid = ens.grid;
    field.drift_op = [&space, &fam, &problem, &ens, &beta, grid](int p, int i) {
        const double t_right = grid.knots[i + 1];
        Mat a = fam.A_at(t_right);
        if (a.size() == 0) a = Mat::Zero(space.n, space.n);
        const double t = grid.knots[i];
        const Vec x = ens.X.at(p, i);
        const Vec u = ens.U.at(p, i);
        if (problem.a_x) a += problem.a_x(t, x, u);
        const auto bbar = bbar_ops(space, fam, problem, t, x, u);
        const Vec bt = beta.at(p, i);
        for (int j = 0; j < space.m; ++j) a += 0.5 * bt[j] * bbar[j];
        a -= (bt.squaredNorm() / 8.0) * Mat::Identity(space.n, space.n);
        return a;
    };
    field.diff_ops = [&space, &fam, &problem, &ens, &beta, grid](int p, int i) {
        const double t = grid.knots[i];
        auto bbar = bbar_ops(space, fam, problem, t, ens.X.at(p, i), ens.U.at(p, i));
        const Vec bt = beta.at(p, i);
        for (int j = 0; j < space.m; ++j)
            bbar[j] += 0.5 * bt[j] * Mat::Identity(space.n, space.n);
        return bbar;
    };
    return field;
}

SecondAdjoint solve_second_adjoint(const Propagator& tilted, const std::vector<Mat>& terminal,
                                   const ScalarPaths& ky, const MatPaths& G,
                                   const PathEnsemble& ens, const RegressionBasis& basis,
                                   int picard_max, double tol) {
    const int N = ens.n_paths;
    const int M = ens.grid.M;
    const int n = ens.state_dim();
    require(static_cast<int>(terminal.size()) == N, "solve_second_adjoint: terminal size mismatch");
    require(tilted.n_paths == N && tilted.grid.M == M,
            "solve_second_adjoint: propagator/ensemble mismatch");
    require(picard_max >= 1, "solve_second_adjoint: picard_max must be >= 1");

    double xi_norm = 0.0;
    for (const Mat& x : terminal) xi_norm = std::max(xi_norm, x.cwiseAbs().maxCoeff());
    if (tol <= 0.0) tol = 1e-8 * (1.0 + xi_norm);

    SecondAdjoint out;
    out.P = MatPaths(N, M + 1, n, n);
    for (int p = 0; p < N; ++p)
        out.P.at(p, M) = 0.5 * (terminal[p] + terminal[p].transpose());

    const FeatureMap fm(basis, n);
    const double fcount = static_cast<double>(fm.count());
    MatPaths R(N, M + 1, n, n);
    std::vector<double> target(N), fitted(N);

    // regression steps are reused across Picard sweeps
    std::vector<RegressionStep> regs;
    regs.reserve(M);
    for (int i = 0; i < M; ++i) regs.emplace_back(fm, ens.X, i, basis.ridge);

    bool converged = false;
    for (int iter = 0; iter < picard_max && !converged; ++iter) {
        // backward accumulation per path against the current projection
        for_blocks(static_cast<std::size_t>(N), [&](std::size_t b, std::size_t e, std::size_t) {
            for (std::size_t ps = b; ps < e; ++ps) {
                const int p = static_cast<int>(ps);
                R.at(p, M) = out.P.at(p, M);
                for (int i = M - 1; i >= 0; --i) {
                    const Mat ei = tilted.factors.at(p, i);
                    Mat acc = ei.transpose() * R.at(p, i + 1) * ei;
                    acc.noalias() += ens.grid.dt(i) * (ky(p, i) * out.P.at(p, i) + G.at(p, i));
                    R.at(p, i) = acc;
                }
            }
        });

        // Markov projection per step (upper triangle, mirrored)
        double change = 0.0;
        double noise_sq = 0.0;
        std::size_t noise_terms = 0;
        for (int i = 0; i < M; ++i) {
            for (int r = 0; r < n; ++r) {
                for (int c = r; c < n; ++c) {
                    for (int p = 0; p < N; ++p)
                        target[p] = 0.5 * (R.at(p, i)(r, c) + R.at(p, i)(c, r));
                    regs[i].project(target, &fitted);
                    double mean = 0.0, sq = 0.0;
                    for (int p = 0; p < N; ++p) mean += target[p];
                    mean /= N;
                    for (int p = 0; p < N; ++p) sq += (target[p] - mean) * (target[p] - mean);
                    noise_sq += (sq / std::max(1, N - 1)) * fcount / N;
                    ++noise_terms;
                    for (int p = 0; p < N; ++p) {
                        change = std::max(change, std::abs(fitted[p] - out.P.at(p, i)(r, c)));
                        out.P.at(p, i)(r, c) = fitted[p];
                        out.P.at(p, i)(c, r) = fitted[p];
                    }
                }
            }
        }
        out.se = noise_terms ? std::sqrt(noise_sq / noise_terms) : 0.0;
        out.sup_change_history.push_back(change);
        out.sup_change = change;
        out.picard_iters = iter + 1;
        converged = change < tol;
    }

    // geometric-decrease diagnostic after the second iteration
    const auto& h = out.sup_change_history;
    for (std::size_t k = 2; k < h.size(); ++k)
        if (h[k] > tol && h[k - 1] > 0.0 && h[k] / h[k - 1] > 0.9) out.contraction_flagged = true;

    if (!converged) {
        std::string traj;
        for (double c : h) traj += " " + std::to_string(c);
        throw convergence_error("solve_second_adjoint: Picard did not reach tol " +
                                std::to_string(tol) + "; sup-change trajectory:" + traj);
    }
    return out;
}

AdjointBundle solve_adjoints(const GalerkinSpace& space, const OperatorFamily& fam,
                             const ControlProblem& problem, const PathEnsemble& ens,
                             const BSDESolution& bsde, const RegressionBasis& basis,
                             int picard_max, double tol) {
    AdjointBundle bundle;
    bundle.first = solve_first_adjoint(space, fam, problem, ens, bsde, basis);
    bundle.G = build_G(space, fam, problem, ens, bsde, bundle.first);
    bundle.beta = generator_kz_paths(problem, ens, bsde);
    const PathOperatorField field = tilted_adjoint_field(space, fam, problem, ens, bundle.beta);
    const Propagator tilted =
        simulate_propagator(field, ens.grid, ens.dW, Propagator::Flavor::tilted);

    std::vector<Mat> terminal(ens.n_paths);
    for (int p = 0; p < ens.n_paths; ++p)
        terminal[p] = problem.terminal_hess(ens.X.at(p, ens.grid.M));
    ScalarPaths ky(ens.n_paths, ens.grid.M);
    for (int i = 0; i < ens.grid.M; ++i)
        for (int p = 0; p < ens.n_paths; ++p)
            ky(p, i) = problem
                           .generator_grad(ens.grid.knots[i], ens.X.at(p, i), bsde.Y(p, i),
                                           bsde.Z.at(p, i).transpose(), ens.U.at(p, i))
                           .ky;
    bundle.second =
        solve_second_adjoint(tilted, terminal, ky, bundle.G, ens, basis, picard_max, tol);
    return bundle;
}

ItoCheckResult verify_ito_formula(const GalerkinSpace& space, const OperatorFamily& fam,
                                  const ItoConfig& cfg) {
    cfg.grid.validate();
    require(cfg.x0.size() == space.n, "verify_ito_formula: x0 dimension mismatch");
    require(cfg.xi.rows() == space.n && cfg.xi.cols() == space.n,
            "verify_ito_formula: terminal operator shape mismatch");
    require(static_cast<bool>(cfg.P_eval), "verify_ito_formula: P evaluator required");

    const int N = cfg.n_paths;
    const int M = cfg.grid.M;
    const int n = space.n;
    const int m = space.m;

    // forced state x and homogeneous state x̃ on shared increments
    ControlProblem forced;
    forced.state_dim = n;
    forced.noise_dim = m;
    forced.control_dim = 1;
    if (cfg.gamma1) forced.a = [&](double t, const Vec&, const Vec&) { return cfg.gamma1(t); };
    if (cfg.gamma2) forced.b = [&](double t, const Vec&, const Vec&) { return cfg.gamma2(t); };
    forced.u_points = {Vec::Zero(1)};
    ControlProblem homog = forced;
    homog.a = nullptr;
    homog.b = nullptr;

    const Policy zero_policy = constant_policy(Vec::Zero(1));
    const PathEnsemble ex =
        simulate_forward(space, fam, forced, zero_policy, cfg.x0, cfg.grid, N, cfg.seed);
    const PathEnsemble et =
        simulate_forward(space, fam, homog, zero_policy, cfg.x0, cfg.grid, N, cfg.seed);

    // per-step deterministic data
    std::vector<RowVec> beta(M, RowVec::Zero(m));
    double beta_max = 0.0;
    if (cfg.beta)
        for (int i = 0; i < M; ++i) {
            beta[i] = cfg.beta(cfg.grid.knots[i]);
            beta_max = std::max(beta_max, beta[i].cwiseAbs().maxCoeff());
        }
    std::vector<Mat> pmat(M + 1), fmat(M + 1);
    for (int i = 0; i <= M; ++i) {
        pmat[i] = cfg.P_eval(cfg.grid.knots[i]);
        fmat[i] = cfg.f ? cfg.f(cfg.grid.knots[i], pmat[i]) : Mat::Zero(n, n);
    }

    // Girsanov weights λ along each path
    ScalarPaths lambda(N, M + 1);
    for (int p = 0; p < N; ++p) {
        double lg = 0.0;
        lambda(p, 0) = 1.0;
        for (int i = 0; i < M; ++i) {
            const Vec dw = ex.dW.at(p, i);
            lg += -0.5 * beta[i].squaredNorm() * cfg.grid.dt(i) + beta[i].dot(dw);
            lambda(p, i + 1) = std::exp(lg);
        }
    }

    // backward accumulations for the conditional representation
    //   I1 target = λ_M (e - ẽ) / λ_i,  I2 target = Σ_{l>=i} Δt λ_l g_l / λ_i
    ScalarPaths s_acc(N, M + 1);
    std::vector<double> e_diff(N);
    for (int p = 0; p < N; ++p) {
        const Vec xT = ex.X.at(p, M);
        const Vec tT = et.X.at(p, M);
        e_diff[p] = xT.dot(cfg.xi * xT) - tT.dot(cfg.xi * tT);
        s_acc(p, M) = 0.0;
        for (int i = M - 1; i >= 0; --i) {
            const Vec xi_ = ex.X.at(p, i);
            const Vec ti_ = et.X.at(p, i);
            const double g = xi_.dot(fmat[i] * xi_) - ti_.dot(fmat[i] * ti_);
            s_acc(p, i) = s_acc(p, i + 1) + cfg.grid.dt(i) * lambda(p, i) * g;
        }
    }

    // σ via regression on the joint (x, x̃) state
    VecPaths joint(N, M + 1, 2 * n);
    for (int p = 0; p < N; ++p)
        for (int i = 0; i <= M; ++i) {
            auto row = joint.at(p, i);
            row.head(n) = ex.X.at(p, i);
            row.tail(n) = et.X.at(p, i);
        }
    const FeatureMap fm_joint(cfg.basis, 2 * n);

    ItoCheckResult res;
    res.sigma = ScalarPaths(N, M + 1);
    res.zcal = VecPaths(N, M, m);
    res.beta_max = beta_max;

    std::vector<double> target(N), fit1(N), fit2(N);
    ScalarPaths ytil(N, M + 1);
    for (int i = 0; i <= M; ++i) {
        const bool homog_identical = !cfg.gamma1 && !cfg.gamma2;
        if (i == M || homog_identical) {
            for (int p = 0; p < N; ++p) {
                const double i3 = -(ex.X.at(p, i).dot(pmat[i] * ex.X.at(p, i)) -
                                    et.X.at(p, i).dot(pmat[i] * et.X.at(p, i)));
                const double i1 = i == M ? lambda(p, M) / lambda(p, i) * e_diff[p] : 0.0;
                res.sigma(p, i) = homog_identical ? 0.0 : i1 + i3;
            }
        } else {
            const RegressionStep reg(fm_joint, joint, i, cfg.basis.ridge);
            for (int p = 0; p < N; ++p)
                target[p] = lambda(p, M) / lambda(p, i) * e_diff[p];
            reg.project(target, &fit1);
            for (int p = 0; p < N; ++p) target[p] = s_acc(p, i) / lambda(p, i);
            reg.project(target, &fit2);
            for (int p = 0; p < N; ++p) {
                const double i3 = -(ex.X.at(p, i).dot(pmat[i] * ex.X.at(p, i)) -
                                    et.X.at(p, i).dot(pmat[i] * et.X.at(p, i)));
                res.sigma(p, i) = fit1[p] + fit2[p] + i3;
            }
        }
        for (int p = 0; p < N; ++p)
            ytil(p, i) = ex.X.at(p, i).dot(pmat[i] * ex.X.at(p, i)) + res.sigma(p, i);
    }

    // 𝒵 as regression martingale increments of the quadratic functional
    for (int i = 0; i < M; ++i) {
        const RegressionStep reg(fm_joint, joint, i, cfg.basis.ridge);
        std::vector<double> ynext(N), cy(N);
        for (int p = 0; p < N; ++p) ynext[p] = ytil(p, i + 1);
        reg.project(ynext, &cy);
        for (int j = 0; j < m; ++j) {
            for (int p = 0; p < N; ++p)
                target[p] = (ynext[p] - cy[p]) * ex.dW.at(p, i)[j] / cfg.grid.dt(i);
            reg.project(target, &fit1);
            for (int p = 0; p < N; ++p) res.zcal.at(p, i)[j] = fit1[p];
        }
    }

    // discrete residual of the BSDE identity
    double rsq = 0.0, ysq = 0.0, ssq = 0.0;
    for (int p = 0; p < N; ++p) {
        for (int i = 0; i < M; ++i) {
            const Vec x = ex.X.at(p, i);
            const Vec z = res.zcal.at(p, i);
            const Vec dw = ex.dW.at(p, i);
            const double drift = x.dot(fmat[i] * x) + beta[i].dot(z);
            const double r =
                ytil(p, i) - ytil(p, i + 1) - cfg.grid.dt(i) * drift + z.dot(dw);
            rsq += r * r;
            ysq += ytil(p, i) * ytil(p, i);
            ssq += res.sigma(p, i) * res.sigma(p, i);
        }
    }
    const double cells = static_cast<double>(N) * M;
    res.residual_rms = std::sqrt(rsq / cells);
    res.scale = std::max(std::sqrt(ysq / cells), 1e-12);
    res.sigma_rms = std::sqrt(ssq / cells);
    return res;
}

}  // namespace seelab
