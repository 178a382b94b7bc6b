#pragma once

#include <optional>
#include <string>

#include "seelab/adjoint.hpp"
#include "seelab/mp.hpp"

namespace seelab {

// Finite family of piecewise-constant policies: u_points values assigned to
// `intervals` equal subintervals of the horizon. The full family is every
// assignment, capped at family_cap by a deterministic seeded subsample that
// always retains the constant policies.
struct ControlLattice {
    std::vector<Vec> u_points;
    int intervals = 1;
    std::size_t family_cap = 64;
    int base_index = 0;

    std::vector<std::vector<int>> assignments(std::uint64_t seed) const;
    Policy policy(std::vector<int> assignment, double t0, double T) const;
};

struct ValuePoint {
    double value = 0.0;
    double se = 0.0;
    int argmin = -1;
    int failed_policies = 0;
};

struct ValueSurrogate {
    double t = 0.0;
    std::function<double(const Vec&)> eval;
    double se = 0.0;  // largest SE among the fitted value probes
};

// Lattice-infimum realization of the value function, with common random
// numbers across policies so comparisons are exact rather than statistical.
class ValueEstimator {
  public:
    ValueEstimator(const GalerkinSpace& space, const OperatorFamily& fam,
                   const ControlProblem& problem, ControlLattice lattice, double horizon,
                   int steps_full, int n_paths, std::uint64_t seed, RegressionBasis basis);

    ValuePoint estimate_value(double t, const Vec& x) const;

    // least-squares polynomial surrogate of V(t, ·) fitted on value estimates
    // at the probe points
    ValueSurrogate fit_surrogate(double t, const std::vector<Vec>& probes) const;

    // deterministic probe cloud around states observed at time t under the
    // base-point policy
    std::vector<Vec> probe_cloud(double t, const Vec& x_start, double start_time,
                                 int count) const;

    double horizon() const { return horizon_; }
    const ControlLattice& lattice() const { return lattice_; }
    const RegressionBasis& basis() const { return basis_; }
    int steps_for(double t0, double t1) const;

    const GalerkinSpace& space_ref() const { return space_; }
    const OperatorFamily& fam_ref() const { return fam_; }
    const ControlProblem& problem_ref() const { return problem_; }
    int paths() const { return n_paths_; }
    std::uint64_t seed() const { return seed_; }

  private:
    const GalerkinSpace& space_;
    const OperatorFamily& fam_;
    const ControlProblem& problem_;
    ControlLattice lattice_;
    double horizon_;
    int steps_full_;
    int n_paths_;
    std::uint64_t seed_;
    RegressionBasis basis_;
};

struct DppGapReport {
    double delta = 0.0;
    double left = 0.0;   // V(t, x)
    double right = 0.0;  // inf_u G[V(t+δ, X(t+δ))]
    double gap = 0.0;
    double se_pool = 0.0;
    int steps = 0;
};

// Two-sided DPP gap at (t, x): the right side composes the backward semigroup
// on [t, t+δ] with a regression surrogate of V(t+δ, ·). δ = 0 collapses to an
// identical computation on both sides by the degenerate-interval convention.
DppGapReport check_dpp(const ValueEstimator& est, double t, const Vec& x, double delta);

struct ValueAlongOptimalReport {
    std::vector<double> deltas;
    std::vector<double> rms;        // RMS of V(t+δ, X̄(t+δ)) − Ȳ(t+δ)
    std::vector<double> threshold;  // 3·pooled SE + discretization allowance
    bool pass = false;
};

ValueAlongOptimalReport check_value_along_optimal(const ValueEstimator& est,
                                                  const PathEnsemble& optimal,
                                                  const BSDESolution& bsde,
                                                  const std::vector<double>& deltas);

// --- differential inclusion probes -------------------------------------------

struct SuperdiffReport {
    struct Direction {
        Vec dir;
        double intercept = 0.0;     // limit of defect(h)/h² from the two-term fit
        double worst_ratio = 0.0;   // max over h of defect(h)/h²
        double sub_p_gap = 0.0;     // |p̂·d − p(t)·d| from the quadratic fit
        double sub_P_excess = 0.0;  // dᵀP̂d − dᵀP(t)d (should be <= tol)
    };
    std::vector<Direction> directions;
    double tol = 0.0;
    bool pass = false;
};

// Tests V(t, x̄+hd) − V(t, x̄) <= <p, hd> + h²/2 <Pd, d> + o(h²) on shrinking
// probes, and the subdifferential side via a quadratic fit of V from below.
SuperdiffReport superdiff_inclusion_check(const std::function<double(const Vec&)>& value_at_t,
                                          const Vec& x_ref, const Vec& p_ref, const Mat& P_ref,
                                          const std::vector<Vec>& directions,
                                          const std::vector<double>& h_list, double tol);

struct TimeDiffReport {
    std::vector<double> taus;
    std::vector<double> quotients;  // [V(τ, x̄) − V(t, x̄)] / (τ − t)
    double rate = 0.0;              // −<p, AX̄> − <q, BX̄> + ℋ₁
    double se = 0.0;
    bool pass = false;              // quotient <= rate + tol + o(1) allowance on all τ
    bool degenerate = false;        // all τ == t
};

struct TimeDiffCell {
    double t = 0.0;
    Vec x;      // X̄(t)
    double y = 0.0;
    RowVec z;
    Vec u;      // ū(t)
    Vec p;
    Mat q;      // n×m
    Mat P;      // n×n
};

TimeDiffReport time_diff_check(const GalerkinSpace& space, const OperatorFamily& fam,
                               const ControlProblem& problem,
                               const std::function<ValuePoint(double, const Vec&)>& value,
                               const TimeDiffCell& cell, const std::vector<double>& taus,
                               double tol);

// --- semiconcavity / convexity ------------------------------------------------

struct SemiconcavityReport {
    double c_fit = 0.0;       // smallest C covering all probes
    double max_excess = 0.0;  // max of λV(x1)+(1−λ)V(x0)−V(x_λ)
    double min_denominator = 0.0;
    double pooled_se = 0.0;
};

SemiconcavityReport semiconcavity_probe(const std::function<double(const Vec&)>& value_at_t,
                                        const std::vector<std::pair<Vec, Vec>>& x_pairs,
                                        const std::vector<double>& lambdas, double se_per_eval);

struct ConvexityReport {
    double max_violation = 0.0;  // max of V(x_λ) − λV(x1) − (1−λ)V(x0)
    double pooled_se = 0.0;
};

ConvexityReport convexity_probe(const std::function<double(const Vec&)>& value_at_t,
                                const std::vector<std::pair<Vec, Vec>>& x_pairs,
                                const std::vector<double>& lambdas, double se_per_eval);

// --- smooth case ---------------------------------------------------------------

struct SmoothCandidate {
    std::function<double(double, const Vec&)> V;
    std::function<double(double, const Vec&)> V_t;
    std::function<Vec(double, const Vec&)> V_x;
    std::function<Mat(double, const Vec&)> V_xx;
};

// ∂_t V + <A* V_x, x> + inf_v { ½<V_xx b, b> + <V_x, a> + k(t,x,V,<V_x,b>,v) }
double hjb_residual(const SmoothCandidate& cand, const GalerkinSpace& space,
                    const OperatorFamily& fam, const ControlProblem& problem, double t,
                    const Vec& x, const std::vector<Vec>& lattice);

struct SmoothRelationReport {
    double p_rms = 0.0, p_rel = 0.0;  // ‖p − V_x(t, X̄)‖
    double q_rms = 0.0, q_rel = 0.0;  // ‖q − V_xx(t, X̄) b(t, X̄, ū)‖
};

SmoothRelationReport smooth_relation_check(const SmoothCandidate& cand,
                                           const ControlProblem& problem,
                                           const PathEnsemble& ens, const FirstAdjoint& adj);

}  // namespace seelab
