#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "seelab/galerkin.hpp"
#include "seelab/grid.hpp"
#include "seelab/problem.hpp"
#include "seelab/storage.hpp"

namespace seelab {

// Least-squares slope of log(y) on log(x). Entries with y below the floor are
// dropped; returns +inf when everything is identically zero and NaN when fewer
// than two usable points remain.
double fit_loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys,
                        double floor = 1e-280);

enum class Scheme { semi_implicit, explicit_euler };

// Seeded Monte Carlo bundle. dW(p,i,·) are the m Brownian increments of step i
// with variance dt(i), generated by the counter RNG from (seed, path), so the
// bundle is bit-identical for any worker count.
struct PathEnsemble {
    TimeGrid grid;
    int n_paths = 0;
    std::uint64_t seed = 0;
    Scheme scheme = Scheme::semi_implicit;
    VecPaths dW;  // (N, M, m)
    VecPaths X;   // (N, M+1, n)
    VecPaths U;   // (N, M, control_dim)

    int state_dim() const { return X.dim(); }
    int noise_dim() const { return dW.dim(); }
};

// Draws the Brownian increments of an ensemble without simulating states.
VecPaths draw_increments(const TimeGrid& grid, int n_paths, int noise_dim, std::uint64_t seed);

// Semi-implicit (drift-implicit) Euler step for the controlled equation:
//   X_{i+1} = (I - dt A(t_{i+1}))^{-1} [X_i + dt a(t_i,X_i,u_i)
//                                       + (B(t_i)X_i + b(t_i,X_i,u_i)) dW_i].
PathEnsemble simulate_forward(const GalerkinSpace& space, const OperatorFamily& fam,
                              const ControlProblem& problem, const Policy& policy, const Vec& x0,
                              const TimeGrid& grid, int n_paths, std::uint64_t seed,
                              Scheme scheme = Scheme::semi_implicit);

// Per-(path, step) coefficients of a linear homogeneous equation; diff_ops are
// Q^{1/2}-absorbed. drift_op is evaluated for interval i (time part at the
// right endpoint, frozen path data at the left).
struct PathOperatorField {
    int dim = 0;
    std::function<Mat(int, int)> drift_op;
    std::function<std::vector<Mat>(int, int)> diff_ops;
    bool path_independent = false;
};

PathOperatorField plain_operator_field(const GalerkinSpace& space, const OperatorFamily& fam,
                                       const TimeGrid& grid);

// One-step solution operators E_i of the linear homogeneous equation, stored
// per path and step. Interval products Φ(t_i,t_j) = E_{j-1}···E_i are formed
// on demand; the cocycle identity holds because they share the same factors.
struct Propagator {
    enum class Flavor { plain, tilted };
    TimeGrid grid;
    int n_paths = 0;
    int dim = 0;
    Flavor flavor = Flavor::plain;
    MatPaths factors;  // (N, M, n, n)

    Mat phi(int path, int i, int j) const;  // ordered product over [i, j)
};

Propagator simulate_propagator(const PathOperatorField& field, const TimeGrid& grid,
                               const VecPaths& dW,
                               Propagator::Flavor flavor = Propagator::Flavor::plain);

// --- a priori estimate scaling check ----------------------------------------

struct AprioriConfig {
    Vec z0;
    std::function<Vec(double)> force_a;  // deterministic H-valued forcing, may be null
    std::function<Mat(double)> force_b;  // deterministic L₂⁰-valued forcing, may be null
    bool scale_initial = true;
    bool scale_forcing = false;
    std::vector<double> scales;  // at least 3
    double alpha = 1.0;
    TimeGrid grid;
    int n_paths = 256;
    std::uint64_t seed = 1;
};

struct MomentScalingReport {
    std::vector<double> scales;
    std::vector<double> sup_moments;   // E[sup_s ‖z(s)‖_H^{2α}]
    std::vector<double> vint_moments;  // E[(∫‖z‖_V² ds)^α]
    double slope_sup = std::numeric_limits<double>::quiet_NaN();
    double slope_vint = std::numeric_limits<double>::quiet_NaN();
    double expected_slope = 0.0;
    double tolerance = 0.2;
    bool degenerate = false;
    bool pass = false;
};

MomentScalingReport check_apriori_moment(const GalerkinSpace& space, const OperatorFamily& fam,
                                         const AprioriConfig& cfg);

// --- continuity estimate -----------------------------------------------------

struct ContinuityReport {
    std::vector<double> rhos;
    std::vector<double> moments;  // E[sup_{t<=s<=t+ρ} ‖z(s)-z0‖_H^{2α}]
    double slope = std::numeric_limits<double>::quiet_NaN();
    double c_fit = 0.0;  // fitted constant against (1+‖z0‖_V^{2α})ρ^α
    double alpha = 1.0;
    bool pass = false;
};

// Coefficient callbacks (t, z) -> forcing; either may be null.
ContinuityReport check_continuity_estimate(
    const GalerkinSpace& space, const OperatorFamily& fam,
    const std::function<Vec(double, const Vec&)>& tilde_a,
    const std::function<Mat(double, const Vec&)>& tilde_b, const Vec& z0, double t,
    const std::vector<double>& rho_list, double alpha, double horizon, int steps, int n_paths,
    std::uint64_t seed);

// --- variational remainders ---------------------------------------------------

struct RemainderDiagnostics {
    std::vector<double> h_list;
    std::vector<double> m1, m2, m3, m4;  // E[∫‖ε_k‖^α dr] per perturbation size
    double slope1 = 0.0, slope2 = 0.0, slope3 = 0.0, slope4 = 0.0;
    double alpha = 2.0;
    // moments below this are rounding dust of the Taylor identities and are
    // treated as identically zero (slope +inf)
    double zero_floor = 0.0;
};

// Couples a perturbed state (same dW, same applied controls) to the base
// ensemble for initial shifts h·direction and evaluates the expansion
// remainders through their exact Taylor-identity forms
//   ε₁ = a(X̄+x̂) − ā − ā_x x̂,   ε₃ = ε₁ − ½ ā_xx(x̂, x̂)   (same for b).
RemainderDiagnostics variational_expansion(const GalerkinSpace& space, const OperatorFamily& fam,
                                           const ControlProblem& problem,
                                           const PathEnsemble& base, const Vec& direction,
                                           const std::vector<double>& h_list, double alpha);

}  // namespace seelab
