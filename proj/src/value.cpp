#include "seelab/value.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "seelab/rng.hpp"

namespace seelab {

std::vector<std::vector<int>> ControlLattice::assignments(std::uint64_t seed) const {
    require(!u_points.empty() && intervals >= 1, "ControlLattice: need points and intervals");
    const std::size_t base = u_points.size();
    double total_d = 1.0;
    for (int s = 0; s < intervals; ++s) total_d *= static_cast<double>(base);

    auto decode = [&](std::size_t idx) {
        std::vector<int> a(intervals);
        for (int s = 0; s < intervals; ++s) {
            a[s] = static_cast<int>(idx % base);
            idx /= base;
        }
        return a;
    };

    std::vector<std::vector<int>> out;
    if (total_d <= static_cast<double>(family_cap)) {
        const auto total = static_cast<std::size_t>(total_d);
        out.reserve(total);
        for (std::size_t k = 0; k < total; ++k) out.push_back(decode(k));
        return out;
    }
    // constant policies first, then a deterministic hashed subsample
    std::set<std::size_t> picked;
    for (std::size_t c = 0; c < base; ++c) {
        std::size_t idx = 0, mul = 1;
        for (int s = 0; s < intervals; ++s) {
            idx += c * mul;
            mul *= base;
        }
        picked.insert(idx);
    }
    const auto total = static_cast<std::size_t>(std::min(total_d, 1e18));
    std::uint64_t ctr = 0;
    while (picked.size() < family_cap) picked.insert(rng::mix64(seed + ++ctr) % total);
    out.reserve(picked.size());
    for (std::size_t idx : picked) out.push_back(decode(idx));
    return out;
}

Policy ControlLattice::policy(std::vector<int> assignment, double t0, double T) const {
    require(static_cast<int>(assignment.size()) >= 1, "ControlLattice: empty assignment");
    const auto pts = u_points;
    const int S = static_cast<int>(assignment.size());
    return [pts, assignment = std::move(assignment), t0, T, S](int, double t, const Vec&, int) {
        int s = static_cast<int>((t - t0) / (T - t0) * S);
        s = std::clamp(s, 0, S - 1);
        return pts[static_cast<std::size_t>(assignment[s])];
    };
}

ValueEstimator::ValueEstimator(const GalerkinSpace& space, const OperatorFamily& fam,
                               const ControlProblem& problem, ControlLattice lattice,
                               double horizon, int steps_full, int n_paths, std::uint64_t seed,
                               RegressionBasis basis)
    : space_(space), fam_(fam), problem_(problem), lattice_(std::move(lattice)),
      horizon_(horizon), steps_full_(steps_full), n_paths_(n_paths), seed_(seed),
      basis_(basis) {
    require(steps_full_ >= 1 && n_paths_ >= 1, "ValueEstimator: bad resolution");
}

int ValueEstimator::steps_for(double t0, double t1) const {
    if (t1 <= t0) return 0;
    const int m = static_cast<int>(std::lround(steps_full_ * (t1 - t0) / horizon_));
    return std::max(2, m);
}

ValuePoint ValueEstimator::estimate_value(double t, const Vec& x) const {
    require(t >= 0.0 && t <= horizon_ + 1e-12, "estimate_value: t outside [0, T]");
    if (t >= horizon_ - 1e-12) return {problem_.terminal(x), 0.0, -1, 0};

    const TimeGrid grid = TimeGrid::uniform(t, horizon_, steps_for(t, horizon_));
    const auto fams = lattice_.assignments(seed_);
    ValuePoint best;
    best.value = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < fams.size(); ++k) {
        try {
            const Policy pol = lattice_.policy(fams[k], t, horizon_);
            // common random numbers: one seed for the whole family
            const ValueSE j =
                cost_functional(space_, fam_, problem_, x, pol, grid, n_paths_, seed_, basis_);
            if (j.value < best.value) {
                best.value = j.value;
                best.se = j.se;
                best.argmin = static_cast<int>(k);
            }
        } catch (const std::exception&) {
            ++best.failed_policies;
        }
    }
    if (best.argmin < 0)
        throw numerical_error("estimate_value: every lattice policy failed");
    return best;
}

std::vector<Vec> ValueEstimator::probe_cloud(double t, const Vec& x_start, double start_time,
                                             int count) const {
    require(count >= 1, "probe_cloud: need at least one probe");
    if (t <= start_time + 1e-12) return std::vector<Vec>(count, x_start);
    const TimeGrid grid = TimeGrid::uniform(start_time, t, steps_for(start_time, t));
    const int n_probe_paths = std::max(count * 8, 128);
    const PathEnsemble ens = simulate_forward(
        space_, fam_, problem_, constant_policy(problem_.base_control()), x_start, grid,
        n_probe_paths, rng::derive(seed_, 0xC10D));
    // quantile selection along the first coordinate keeps the cloud spread
    std::vector<int> order(n_probe_paths);
    for (int p = 0; p < n_probe_paths; ++p) order[p] = p;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return ens.X.at(a, grid.M)[0] < ens.X.at(b, grid.M)[0];
    });
    std::vector<Vec> probes;
    probes.reserve(count);
    for (int k = 0; k < count; ++k) {
        const int idx = order[static_cast<std::size_t>(
            (2 * k + 1) * (n_probe_paths - 1) / (2 * count))];
        probes.push_back(ens.X.at(idx, grid.M));
    }
    return probes;
}

ValueSurrogate ValueEstimator::fit_surrogate(double t, const std::vector<Vec>& probes) const {
    require(!probes.empty(), "fit_surrogate: empty probe set");
    std::vector<double> vals(probes.size());
    double worst_se = 0.0;
    for (std::size_t k = 0; k < probes.size(); ++k) {
        const ValuePoint v = estimate_value(t, probes[k]);
        vals[k] = v.value;
        worst_se = std::max(worst_se, v.se);
    }
    auto fm = std::make_shared<FeatureMap>(basis_, space_.n);
    auto coef = std::make_shared<Vec>(fit_polynomial(*fm, probes, vals, basis_.ridge));
    ValueSurrogate s;
    s.t = t;
    s.se = worst_se;
    s.eval = [fm, coef](const Vec& x) { return eval_polynomial(*fm, *coef, x); };
    return s;
}

DppGapReport check_dpp(const ValueEstimator& est, double t, const Vec& x, double delta) {
    require(delta >= 0.0 && t + delta <= est.horizon() + 1e-12,
            "check_dpp: delta outside [0, T - t]");
    DppGapReport rep;
    rep.delta = delta;

    const ValuePoint left = est.estimate_value(t, x);
    rep.left = left.value;
    if (delta <= 1e-14) {
        // degenerate interval: G[eta] = eta, both sides are the same computation
        rep.right = rep.left;
        rep.gap = 0.0;
        rep.se_pool = left.se;
        return rep;
    }

    const double tmid = t + delta;
    const auto& problem = est.problem_ref();

    // surrogate for V(t+d, .) on a probe cloud around the reachable states
    const int n_features = FeatureMap(est.basis(), est.space_ref().n).count();
    const std::vector<Vec> probes = est.probe_cloud(tmid, x, t, 2 * n_features);
    const ValueSurrogate surr = est.fit_surrogate(tmid, probes);

    // distinct restrictions of the lattice family to [t, t+d]
    const auto fams = est.lattice().assignments(est.seed());
    std::set<std::vector<int>> restrictions;
    const int S = est.lattice().intervals;
    for (const auto& a : fams) {
        std::vector<int> r;
        for (int s = 0; s < S; ++s) {
            const double seg_start = t + (est.horizon() - t) * s / S;
            if (seg_start < tmid - 1e-12) r.push_back(a[s]);
        }
        if (r.empty()) r.push_back(a[0]);
        restrictions.insert(r);
    }

    const TimeGrid sub = TimeGrid::uniform(t, tmid, est.steps_for(t, tmid));
    rep.steps = sub.M;
    double best = std::numeric_limits<double>::infinity();
    double best_se = 0.0;
    for (const auto& r : restrictions) {
        const Policy pol = est.lattice().policy(r, t, tmid);
        const PathEnsemble ens =
            simulate_forward(est.space_ref(), est.fam_ref(), problem, pol, x, sub, est.paths(),
                             est.seed());
        std::vector<double> eta(ens.n_paths);
        for (int p = 0; p < ens.n_paths; ++p) eta[p] = surr.eval(ens.X.at(p, sub.M));
        const ValueSE g = backward_semigroup(problem, ens, eta, est.basis());
        if (g.value < best) {
            best = g.value;
            best_se = g.se;
        }
    }
    rep.right = best;
    rep.gap = std::abs(rep.left - rep.right);
    rep.se_pool = left.se + best_se + surr.se;
    return rep;
}

ValueAlongOptimalReport check_value_along_optimal(const ValueEstimator& est,
                                                  const PathEnsemble& optimal,
                                                  const BSDESolution& bsde,
                                                  const std::vector<double>& deltas) {
    ValueAlongOptimalReport rep;
    const TimeGrid& grid = optimal.grid;
    const int N = optimal.n_paths;
    rep.pass = true;
    for (double delta : deltas) {
        const double tmid = grid.t0 + delta;
        require(delta >= 0.0 && tmid <= grid.T + 1e-12,
                "check_value_along_optimal: delta outside horizon");
        int idx = 0;
        double bestd = std::numeric_limits<double>::infinity();
        for (int i = 0; i <= grid.M; ++i)
            if (std::abs(grid.knots[i] - tmid) < bestd) {
                bestd = std::abs(grid.knots[i] - tmid);
                idx = i;
            }

        double rms = 0.0, threshold = 0.0;
        if (idx == 0) {
            const ValuePoint v = est.estimate_value(grid.t0, optimal.X.at(0, 0));
            double ymean = 0.0;
            for (int p = 0; p < N; ++p) ymean += bsde.Y(p, 0);
            ymean /= N;
            rms = std::abs(v.value - ymean);
            threshold = 3.0 * v.se + 2.0 / grid.M;
        } else if (idx == grid.M) {
            // V(T, .) = h exactly and Y(T) = h(X(T)) exactly
            for (int p = 0; p < N; ++p) {
                const double d =
                    est.problem_ref().terminal(optimal.X.at(p, grid.M)) - bsde.Y(p, grid.M);
                rms += d * d;
            }
            rms = std::sqrt(rms / N);
            threshold = 1e-12;
        } else {
            const int n_features = FeatureMap(est.basis(), est.space_ref().n).count();
            std::vector<Vec> probes;
            const int count = 2 * n_features;
            std::vector<int> order(N);
            for (int p = 0; p < N; ++p) order[p] = p;
            std::sort(order.begin(), order.end(), [&](int a, int b) {
                return optimal.X.at(a, idx)[0] < optimal.X.at(b, idx)[0];
            });
            for (int k = 0; k < count; ++k)
                probes.push_back(optimal.X.at(
                    order[static_cast<std::size_t>((2 * k + 1) * (N - 1) / (2 * count))], idx));
            const ValueSurrogate surr = est.fit_surrogate(grid.knots[idx], probes);
            for (int p = 0; p < N; ++p) {
                const double d = surr.eval(optimal.X.at(p, idx)) - bsde.Y(p, idx);
                rms += d * d;
            }
            rms = std::sqrt(rms / N);
            threshold = 3.0 * surr.se + 2.0 / grid.M;
        }
        rep.deltas.push_back(delta);
        rep.rms.push_back(rms);
        rep.threshold.push_back(threshold);
        if (rms > threshold) rep.pass = false;
    }
    return rep;
}

SuperdiffReport superdiff_inclusion_check(const std::function<double(const Vec&)>& value_at_t,
                                          const Vec& x_ref, const Vec& p_ref, const Mat& P_ref,
                                          const std::vector<Vec>& directions,
                                          const std::vector<double>& h_list, double tol) {
    require(!h_list.empty(), "superdiff_inclusion_check: empty probe sizes");
    SuperdiffReport rep;
    rep.tol = tol;
    rep.pass = true;
    const double v0 = value_at_t(x_ref);

    for (const Vec& d : directions) {
        SuperdiffReport::Direction row;
        row.dir = d;
        if (d.norm() == 0.0) {
            rep.directions.push_back(row);
            continue;
        }
        const int K = static_cast<int>(h_list.size());
        Mat design(K, 2);
        Vec rhs(K);
        Mat qdesign(K, 3);
        Vec qrhs(K);
        row.worst_ratio = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < K; ++k) {
            const double h = h_list[static_cast<std::size_t>(k)];
            const double dv = value_at_t(x_ref + h * d) - v0;
            const double model = h * p_ref.dot(d) + 0.5 * h * h * d.dot(P_ref * d);
            const double ratio = (dv - model) / (h * h);
            row.worst_ratio = std::max(row.worst_ratio, ratio);
            design(k, 0) = 1.0;
            design(k, 1) = 1.0 / h;
            rhs[k] = ratio;
            qdesign(k, 0) = 1.0;
            qdesign(k, 1) = h;
            qdesign(k, 2) = h * h;
            qrhs[k] = dv;
        }
        // defect(h)/h^2 = intercept + slope/h
        const Vec fit = (design.transpose() * design).ldlt().solve(design.transpose() * rhs);
        row.intercept = fit[0];
        // quadratic fit of V from below detects the candidate (p, P)
        const Vec qfit =
            (qdesign.transpose() * qdesign).ldlt().solve(qdesign.transpose() * qrhs);
        row.sub_p_gap = std::abs(qfit[1] - p_ref.dot(d));
        row.sub_P_excess = 2.0 * qfit[2] - d.dot(P_ref * d);
        if (row.intercept > tol || row.sub_p_gap > tol || row.sub_P_excess > tol)
            rep.pass = false;
        rep.directions.push_back(row);
    }
    return rep;
}

TimeDiffReport time_diff_check(const GalerkinSpace& space, const OperatorFamily& fam,
                               const ControlProblem& problem,
                               const std::function<ValuePoint(double, const Vec&)>& value,
                               const TimeDiffCell& cell, const std::vector<double>& taus,
                               double tol) {
    TimeDiffReport rep;

    // rate = -<p, A Xbar> - <q, B Xbar> + H1 with
    // H1 = -H(ubar) + 1/2 <P (B Xbar + bbar), B Xbar + bbar>
    const Mat a_op = [&] {
        Mat a = fam.A_at(cell.t);
        return a.size() > 0 ? a : Mat(Mat::Zero(space.n, space.n));
    }();
    const Mat noise = problem.diffusion(cell.t, cell.x, cell.u);  // bbar, absorbed
    const auto b_abs = absorbed_b_ops(space, fam, cell.t);
    Mat bx_op = Mat::Zero(space.n, space.m);
    for (std::size_t j = 0; j < b_abs.size(); ++j)
        bx_op.col(static_cast<int>(j)) = b_abs[j] * cell.x;
    const Mat total_noise = bx_op + noise;

    const double h_ref = hamiltonian(problem, cell.t, cell.x, cell.y, cell.z, cell.u, cell.p,
                                     cell.q, cell.x, cell.u);
    const double h1 =
        -h_ref + 0.5 * (total_noise.array() * (cell.P * total_noise).array()).sum();
    rep.rate = -cell.p.dot(a_op * cell.x) - (cell.q.array() * bx_op.array()).sum() + h1;

    const ValuePoint v0 = value(cell.t, cell.x);
    rep.degenerate = true;
    rep.pass = true;
    for (double tau : taus) {
        if (tau <= cell.t + 1e-14) continue;  // empty quotient, degenerate input
        rep.degenerate = false;
        const ValuePoint vt = value(tau, cell.x);
        const double quotient = (vt.value - v0.value) / (tau - cell.t);
        rep.taus.push_back(tau);
        rep.quotients.push_back(quotient);
        const double se_q = (vt.se + v0.se) / (tau - cell.t);
        rep.se = std::max(rep.se, se_q);
        // o(|tau-t|)/(tau-t) allowance shrinking like sqrt(tau-t)
        const double allowance = std::sqrt(tau - cell.t) * (1.0 + cell.x.norm());
        if (quotient > rep.rate + tol + 3.0 * se_q + allowance) rep.pass = false;
    }
    return rep;
}

SemiconcavityReport semiconcavity_probe(const std::function<double(const Vec&)>& value_at_t,
                                        const std::vector<std::pair<Vec, Vec>>& x_pairs,
                                        const std::vector<double>& lambdas, double se_per_eval) {
    SemiconcavityReport rep;
    rep.min_denominator = std::numeric_limits<double>::infinity();
    rep.pooled_se = 3.0 * se_per_eval;
    for (const auto& [x0, x1] : x_pairs) {
        const double v0 = value_at_t(x0);
        const double v1 = value_at_t(x1);
        const double gap2 = (x1 - x0).squaredNorm();
        for (double lam : lambdas) {
            const double excess =
                lam * v1 + (1.0 - lam) * v0 - value_at_t(lam * x1 + (1.0 - lam) * x0);
            rep.max_excess = std::max(rep.max_excess, excess);
            const double denom = lam * (1.0 - lam) * gap2;
            if (denom > 0.0) {
                rep.min_denominator = std::min(rep.min_denominator, denom);
                rep.c_fit = std::max(rep.c_fit, excess / denom);
            }
        }
    }
    if (!std::isfinite(rep.min_denominator)) rep.min_denominator = 0.0;
    return rep;
}

ConvexityReport convexity_probe(const std::function<double(const Vec&)>& value_at_t,
                                const std::vector<std::pair<Vec, Vec>>& x_pairs,
                                const std::vector<double>& lambdas, double se_per_eval) {
    ConvexityReport rep;
    rep.max_violation = -std::numeric_limits<double>::infinity();
    rep.pooled_se = 3.0 * se_per_eval;
    for (const auto& [x0, x1] : x_pairs) {
        const double v0 = value_at_t(x0);
        const double v1 = value_at_t(x1);
        for (double lam : lambdas) {
            const double viol =
                value_at_t(lam * x1 + (1.0 - lam) * x0) - lam * v1 - (1.0 - lam) * v0;
            rep.max_violation = std::max(rep.max_violation, viol);
        }
    }
    return rep;
}

double hjb_residual(const SmoothCandidate& cand, const GalerkinSpace& space,
                    const OperatorFamily& fam, const ControlProblem& problem, double t,
                    const Vec& x, const std::vector<Vec>& lattice) {
    require(!lattice.empty(), "hjb_residual: empty lattice");
    const Mat a_op = [&] {
        Mat a = fam.A_at(t);
        return a.size() > 0 ? a : Mat(Mat::Zero(space.n, space.n));
    }();
    const double r = cand.V(t, x);
    const Vec vx = cand.V_x(t, x);
    const Mat vxx = cand.V_xx(t, x);

    double inf = std::numeric_limits<double>::infinity();
    for (const Vec& v : lattice) {
        const Mat b = problem.diffusion(t, x, v);
        double g = 0.5 * (b.array() * (vxx * b).array()).sum();
        g += vx.dot(problem.drift(t, x, v));
        const RowVec zarg = vx.transpose() * b;
        g += problem.generator(t, x, r, zarg, v);
        inf = std::min(inf, g);
    }
    return cand.V_t(t, x) + vx.dot(a_op * x) + inf;
}

SmoothRelationReport smooth_relation_check(const SmoothCandidate& cand,
                                           const ControlProblem& problem,
                                           const PathEnsemble& ens, const FirstAdjoint& adj) {
    SmoothRelationReport rep;
    const int N = ens.n_paths;
    const int M = ens.grid.M;
    double psq = 0.0, pref = 0.0, qsq = 0.0, qref = 0.0;
    for (int p = 0; p < N; ++p) {
        for (int i = 0; i < M; ++i) {
            const double t = ens.grid.knots[i];
            const Vec x = ens.X.at(p, i);
            const Vec vx = cand.V_x(t, x);
            psq += (adj.p.at(p, i) - vx).squaredNorm();
            pref += vx.squaredNorm();
            const Mat qtrue = cand.V_xx(t, x) * problem.diffusion(t, x, ens.U.at(p, i));
            qsq += (adj.q.at(p, i) - qtrue).squaredNorm();
            qref += qtrue.squaredNorm();
        }
    }
    const double cells = static_cast<double>(N) * M;
    rep.p_rms = std::sqrt(psq / cells);
    rep.p_rel = rep.p_rms / std::max(std::sqrt(pref / cells), 1e-12);
    rep.q_rms = std::sqrt(qsq / cells);
    rep.q_rel = rep.q_rms / std::max(std::sqrt(qref / cells), 1e-12);
    return rep;
}

}  // namespace seelab
