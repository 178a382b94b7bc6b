#pragma once

#include <vector>

#include "seelab/forward.hpp"
#include "seelab/regression.hpp"

namespace seelab {

struct BSDESolution {
    ScalarPaths Y;  // (N, M+1)
    VecPaths Z;     // (N, M, m), rows in Q^{1/2}-absorbed coordinates
    int picard_iters = 0;
    double residual = 0.0;  // worst inner fixed-point defect over all steps
};

// Backward regression sweep. Per step:
//   Z_i = E[(Y_{i+1} - Ê_i[Y_{i+1}]) ΔW_i / Δt | X_i]   (centered target)
//   Y_i = Ê_i[Y_{i+1}] + Δt k(t_i, X_i, Y_i, Z_i, u_i)  (implicit in Y,
//         resolved by at most picard_max inner sweeps to tolerance tol)
// Conditional expectations are least-squares projections on basis features of
// the current state; evaluations are per-path fitted values.
BSDESolution solve_bsde(const ControlProblem& problem, const PathEnsemble& ens,
                        const std::vector<double>& terminal, const RegressionBasis& basis,
                        int picard_max = 8, double tol = 1e-10);

struct ValueSE {
    double value = 0.0;
    double se = 0.0;
};

// G^{t,t+δ}[η] := Y(t) of the BSDE on the ensemble's grid with terminal η.
// η must be a per-path functional of the simulated history. A degenerate
// interval (M == 0) returns the mean of η by convention.
ValueSE backward_semigroup(const ControlProblem& problem, const PathEnsemble& ens,
                           const std::vector<double>& eta, const RegressionBasis& basis,
                           int picard_max = 8, double tol = 1e-10);

// J(t0, x0; policy) = Y(t0): simulate forward, terminal h(X(T)), solve the
// BSDE. The standard error is the Monte Carlo error of the pathwise cost proxy
// h(X(T)) + Σ Δt k evaluated along the solved (Y, Z).
ValueSE cost_functional(const GalerkinSpace& space, const OperatorFamily& fam,
                        const ControlProblem& problem, const Vec& x0, const Policy& policy,
                        const TimeGrid& grid, int n_paths, std::uint64_t seed,
                        const RegressionBasis& basis);

// Same, reusing an already simulated ensemble.
ValueSE cost_from_ensemble(const ControlProblem& problem, const PathEnsemble& ens,
                           const RegressionBasis& basis);

}  // namespace seelab
