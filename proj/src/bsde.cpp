#include "seelab/bsde.hpp"

#include <cmath>

#include "seelab/parallel.hpp"

namespace seelab {

BSDESolution solve_bsde(const ControlProblem& problem, const PathEnsemble& ens,
                        const std::vector<double>& terminal, const RegressionBasis& basis,
                        int picard_max, double tol) {
    const int N = ens.n_paths;
    const int M = ens.grid.M;
    const int m = ens.noise_dim();
    require(static_cast<int>(terminal.size()) == N, "solve_bsde: terminal size mismatch");
    for (double v : terminal)
        if (!std::isfinite(v)) throw std::invalid_argument("solve_bsde: non-finite terminal");
    require(picard_max >= 1, "solve_bsde: picard_max must be >= 1");

    BSDESolution sol;
    sol.Y = ScalarPaths(N, M + 1);
    sol.Z = VecPaths(N, M, m);
    for (int p = 0; p < N; ++p) sol.Y(p, M) = terminal[p];

    const FeatureMap fm(basis, ens.state_dim());
    std::vector<double> ynext(N), cy(N), target(N), fitted(N), ywork(N);

    for (int i = M - 1; i >= 0; --i) {
        const double t = ens.grid.knots[i];
        const double dt = ens.grid.dt(i);
        const RegressionStep reg(fm, ens.X, i, basis.ridge);

        for (int p = 0; p < N; ++p) ynext[p] = sol.Y(p, i + 1);
        reg.project(ynext, &cy);

        // centered Z targets: same conditional expectation, far less variance
        for (int j = 0; j < m; ++j) {
            for (int p = 0; p < N; ++p)
                target[p] = (ynext[p] - cy[p]) * ens.dW.at(p, i)[j] / dt;
            reg.project(target, &fitted);
            for (int p = 0; p < N; ++p) sol.Z.at(p, i)[j] = fitted[p];
        }

        // implicit Y step, inner Picard sweeps
        for (int p = 0; p < N; ++p) ywork[p] = cy[p];
        double change = 0.0;
        int iter = 0;
        for (; iter < picard_max; ++iter) {
            change = 0.0;
            const std::size_t nb = block_count(static_cast<std::size_t>(N));
            std::vector<double> partial(nb, 0.0);
            for_blocks(static_cast<std::size_t>(N), [&](std::size_t b, std::size_t e, std::size_t bi) {
                double worst = 0.0;
                for (std::size_t ps = b; ps < e; ++ps) {
                    const int p = static_cast<int>(ps);
                    const double prev = ywork[p];
                    const double knew = problem.generator(t, ens.X.at(p, i), prev,
                                                          sol.Z.at(p, i).transpose(),
                                                          ens.U.at(p, i));
                    ywork[p] = cy[p] + dt * knew;
                    worst = std::max(worst, std::abs(ywork[p] - prev));
                }
                partial[bi] = worst;
            });
            for (double w : partial) change = std::max(change, w);
            if (change < tol) {
                ++iter;
                break;
            }
        }
        sol.picard_iters = std::max(sol.picard_iters, iter);
        sol.residual = std::max(sol.residual, change);
        if (change >= tol && change > 1e-6 * (1.0 + std::abs(ywork[0])))
            throw convergence_error("solve_bsde: Picard sweep stalled at step " +
                                    std::to_string(i) + " (residual " + std::to_string(change) +
                                    ")");
        for (int p = 0; p < N; ++p) sol.Y(p, i) = ywork[p];
    }
    return sol;
}

ValueSE backward_semigroup(const ControlProblem& problem, const PathEnsemble& ens,
                           const std::vector<double>& eta, const RegressionBasis& basis,
                           int picard_max, double tol) {
    const int N = ens.n_paths;
    require(static_cast<int>(eta.size()) == N, "backward_semigroup: eta size mismatch");
    if (ens.grid.M == 0 || ens.grid.T <= ens.grid.t0) {
        double mean = 0.0, sq = 0.0;
        for (double v : eta) mean += v;
        mean /= N;
        for (double v : eta) sq += (v - mean) * (v - mean);
        return {mean, N > 1 ? std::sqrt(sq / (N - 1.0) / N) : 0.0};
    }
    const BSDESolution sol = solve_bsde(problem, ens, eta, basis, picard_max, tol);
    double mean = 0.0;
    for (int p = 0; p < N; ++p) mean += sol.Y(p, 0);
    mean /= N;
    // pathwise proxy: terminal + integrated driver along the solved (Y, Z)
    double sq = 0.0;
    {
        std::vector<double> proxy(N);
        for (int p = 0; p < N; ++p) {
            double acc = eta[p];
            for (int i = 0; i < ens.grid.M; ++i)
                acc += ens.grid.dt(i) * problem.generator(ens.grid.knots[i], ens.X.at(p, i),
                                                          sol.Y(p, i),
                                                          sol.Z.at(p, i).transpose(),
                                                          ens.U.at(p, i));
            proxy[p] = acc;
        }
        double pm = 0.0;
        for (double v : proxy) pm += v;
        pm /= N;
        for (double v : proxy) sq += (v - pm) * (v - pm);
    }
    const double se = N > 1 ? std::sqrt(sq / (N - 1.0) / N) : 0.0;
    return {mean, se};
}

ValueSE cost_from_ensemble(const ControlProblem& problem, const PathEnsemble& ens,
                           const RegressionBasis& basis) {
    std::vector<double> terminal(ens.n_paths);
    for (int p = 0; p < ens.n_paths; ++p) terminal[p] = problem.terminal(ens.X.at(p, ens.grid.M));
    return backward_semigroup(problem, ens, terminal, basis);
}

ValueSE cost_functional(const GalerkinSpace& space, const OperatorFamily& fam,
                        const ControlProblem& problem, const Vec& x0, const Policy& policy,
                        const TimeGrid& grid, int n_paths, std::uint64_t seed,
                        const RegressionBasis& basis) {
    const PathEnsemble ens = simulate_forward(space, fam, problem, policy, x0, grid, n_paths, seed);
    return cost_from_ensemble(problem, ens, basis);
}

}  // namespace seelab
