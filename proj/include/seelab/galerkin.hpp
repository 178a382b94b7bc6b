#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "seelab/common.hpp"

namespace seelab {

// Finite truncation of the Gelfand triple V ⊂ H ⊂ V*. In the retained basis
// the dual pairing is the plain Euclidean inner product and V, V* differ only
// by the diagonal weights: ‖u‖_V² = Σ w_i u_i², ‖u‖_{V*}² = Σ u_i²/w_i.
// Noise lives on m retained Wiener modes; q_sqrt holds the diagonal of Q^{1/2}
// so that Q^{1/2}-absorbed coefficients have plain Frobenius L₂⁰ norms.
struct GalerkinSpace {
    int n = 0;
    int m = 0;
    Vec v_weights;  // n entries, all >= 1
    Vec q_sqrt;     // m entries, all >= 0

    double norm_h(const Vec& u) const { return u.norm(); }
    double norm_v2(const Vec& u) const { return (v_weights.array() * u.array().square()).sum(); }
    double norm_v(const Vec& u) const { return std::sqrt(norm_v2(u)); }
    double norm_vstar(const Vec& u) const {
        return std::sqrt((u.array().square() / v_weights.array()).sum());
    }

    void validate() const;
};

// Time-dependent realizations of the unbounded operators on the truncation.
// A(t) is read against the dual pairing; B(t) returns the raw operators B_j
// (Q^{1/2} is absorbed at use sites, see absorbed_b_ops).
struct OperatorFamily {
    std::function<Mat(double)> A;
    std::function<std::vector<Mat>(double)> B;  // m matrices, may be empty for B ≡ 0
    double delta = 1.0;    // coercivity margin δ > 0
    double k_bound = 0.0;  // constant K ≥ 0
    bool deterministic = true;

    Mat A_at(double t) const;
    std::vector<Mat> B_at(double t, int m) const;
    void validate() const;
};

// q_sqrt_j · B_j(t): columns of the absorbed diffusion operator.
std::vector<Mat> absorbed_b_ops(const GalerkinSpace& space, const OperatorFamily& fam, double t);

struct CoercivityReport {
    int n_samples = 0;
    double worst_coercivity_slack = 0.0;
    double worst_dualnorm_slack = 0.0;
    double worst_skew_slack = 0.0;
    bool pass = false;
};

// Pointwise slack of the coercivity inequality at (t, u).
double coercivity_slack(const OperatorFamily& fam, const GalerkinSpace& space, double t,
                        const Vec& u, double delta, double k);
// Pointwise slack of the quasi-skew-symmetry inequality at (t, u).
double quasi_skew_slack(const OperatorFamily& fam, const GalerkinSpace& space, double t,
                        const Vec& u, double k);

// Sine eigenbasis of the Dirichlet Laplacian on (0, L): w_i = 1 + (iπ/L)²,
// A = diag(−(iπ/L)²), B ≡ 0, q_sqrt_j = (1+j)^{-q_decay}.
std::pair<GalerkinSpace, OperatorFamily> make_laplacian_space(int n, int m, double domain_length,
                                                              double q_decay);

// Samples random unit vectors and times and evaluates the coercivity slack
//   (−δ‖u‖_V² + K‖u‖_H²) − (2⟨A(t)u,u⟩ + ‖B(t)u‖²_{L₂⁰})
// with (δ, K) taken from the overrides when given, else from fam. The
// dual-norm slack K‖u‖_V − ‖A(t)u‖_{V*} always uses the family's k_bound.
CoercivityReport check_coercivity(const OperatorFamily& fam, const GalerkinSpace& space,
                                  const std::vector<double>& t_grid, int n_samples,
                                  std::uint64_t seed, double tolerance = 1e-9,
                                  double delta_override = -1.0, double k_override = -1.0);

// Slack K‖u‖_H² − ‖(q_sqrt_j ⟨B_j(t)u, u⟩)_j‖ on random unit vectors.
CoercivityReport check_quasi_skew(const OperatorFamily& fam, const GalerkinSpace& space,
                                  const std::vector<double>& t_grid, int n_samples,
                                  std::uint64_t seed, double tolerance = 1e-9,
                                  double k_override = -1.0);

}  // namespace seelab
