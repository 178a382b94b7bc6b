#pragma once

#include "seelab/bsde.hpp"

namespace seelab {

// First-order adjoint pair (p, q) from the backward sweep
//   p_i = (I − Δt Ā*(t_i))^{-1} Ê_i[ p_{i+1} + Δt { (k_y + k_z B̄*) p_{i+1}
//         + (B̄* + k_z) q_i + k_x } ],   p_M = h_x(X̄(T)),
// with Ā = A + ā_x and B̄_j = q_j B_j + (b̄_x)_j frozen along each path.
struct FirstAdjoint {
    VecPaths p;  // (N, M+1, n)
    MatPaths q;  // (N, M, n×m)
    double q_se = 0.0;  // pooled regression noise scale of the q estimates
};

FirstAdjoint solve_first_adjoint(const GalerkinSpace& space, const OperatorFamily& fam,
                                 const ControlProblem& problem, const PathEnsemble& ens,
                                 const BSDESolution& bsde, const RegressionBasis& basis);

// Bilinear-form matrix of the second adjoint's driver:
//   G = Jᵀ D²k J + Σ_c p_c (ā_xx)_c + Σ_{j,c} (k_z_j p_c + q_{c,j}) (b̄_xx)_{j,c}
// where J stacks the (x, y, z) slot maps x̂ ↦ (x̂, ⟨p,x̂⟩, ((B̄*p + q)x̂)_j).
MatPaths build_G(const GalerkinSpace& space, const OperatorFamily& fam,
                 const ControlProblem& problem, const PathEnsemble& ens, const BSDESolution& bsde,
                 const FirstAdjoint& adj);

// k_z rows along the optimal tuple; this is the tilt β of the second adjoint.
VecPaths generator_kz_paths(const ControlProblem& problem, const PathEnsemble& ens,
                            const BSDESolution& bsde);

// Ã = Ā + ½ Σ_j β_j B̄_j − (|β|²/8) I and B̃_j = B̄_j + (β_j/2) I along paths.
PathOperatorField tilted_adjoint_field(const GalerkinSpace& space, const OperatorFamily& fam,
                                       const ControlProblem& problem, const PathEnsemble& ens,
                                       const VecPaths& beta);

struct SecondAdjoint {
    MatPaths P;  // (N, M+1, n×n), symmetric, Markov-projected except at T
    int picard_iters = 0;
    double sup_change = 0.0;
    std::vector<double> sup_change_history;
    bool contraction_flagged = false;  // geometric-decrease diagnostic tripped
    double se = 0.0;                   // pooled regression noise scale
};

// Picard iteration on the propagator representation: per path
//   R(t_M) = ξ_p,  R(t_i) = E_iᵀ R(t_{i+1}) E_i + Δt [k_y(t_i) P^k(t_i) + G(t_i)],
// then P^{k+1}(t_i) = Ê[R(t_i) | X̄(t_i)], symmetrized, until the sup-entry
// change drops below tol (default 1e-8·(1+max‖ξ‖)).
SecondAdjoint solve_second_adjoint(const Propagator& tilted, const std::vector<Mat>& terminal,
                                   const ScalarPaths& ky, const MatPaths& G,
                                   const PathEnsemble& ens, const RegressionBasis& basis,
                                   int picard_max = 12, double tol = -1.0);

// Everything the maximum-principle checks need, solved along one ensemble.
struct AdjointBundle {
    FirstAdjoint first;
    MatPaths G;
    VecPaths beta;  // k_z along the path
    SecondAdjoint second;
};

AdjointBundle solve_adjoints(const GalerkinSpace& space, const OperatorFamily& fam,
                             const ControlProblem& problem, const PathEnsemble& ens,
                             const BSDESolution& bsde, const RegressionBasis& basis,
                             int picard_max = 12, double tol = -1.0);

// --- Itô-formula check --------------------------------------------------------

struct ItoConfig {
    TimeGrid grid;
    int n_paths = 1000;
    std::uint64_t seed = 1;
    Vec x0;
    std::function<RowVec(double)> beta;    // deterministic tilt; null means 0
    std::function<Vec(double)> gamma1;     // drift forcing; null means 0
    std::function<Mat(double)> gamma2;     // diffusion forcing; null means 0
    std::function<Mat(double, const Mat&)> f;  // driver f(t, P); null means 0
    Mat xi;                                // terminal operator
    std::function<Mat(double)> P_eval;     // P(t) of the BSIE under test
    RegressionBasis basis;
};

struct ItoCheckResult {
    double residual_rms = 0.0;  // discrete BSDE residual of the quadratic identity
    double scale = 1.0;         // rms of the quadratic functional
    double sigma_rms = 0.0;
    ScalarPaths sigma;  // (N, M+1)
    VecPaths zcal;      // (N, M, m)
    double beta_max = 0.0;
};

// Simulates the forced state x and the homogeneous state x̃ on shared
// increments, reconstructs σ from the conditional representation difference
// (regression realization of the I₁+I₂+I₃ split) and 𝒵 as regression
// martingale increments, then reports the residual of
//   ⟨P x, x⟩ + σ = ⟨ξ x(T), x(T)⟩ + ∫ [⟨f(P)x, x⟩ + β𝒵] dr − ∫ 𝒵 dw.
ItoCheckResult verify_ito_formula(const GalerkinSpace& space, const OperatorFamily& fam,
                                  const ItoConfig& cfg);

}  // namespace seelab
