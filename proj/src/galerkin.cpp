#include "seelab/galerkin.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "seelab/rng.hpp"

namespace seelab {

void GalerkinSpace::validate() const {
    require(n >= 1 && m >= 1, "GalerkinSpace: n and m must be >= 1");
    require(v_weights.size() == n, "GalerkinSpace: v_weights must have n entries");
    require(q_sqrt.size() == m, "GalerkinSpace: q_sqrt must have m entries");
    require(v_weights.minCoeff() >= 1.0, "GalerkinSpace: V-weights must be >= 1");
    require(q_sqrt.minCoeff() >= 0.0, "GalerkinSpace: q_sqrt must be nonnegative");
}

Mat OperatorFamily::A_at(double t) const {
    if (!A) return Mat();
    Mat a = A(t);
    if (!a.allFinite()) throw numerical_error("OperatorFamily: A(t) has non-finite entries");
    return a;
}

std::vector<Mat> OperatorFamily::B_at(double t, int m) const {
    if (!B) return {};
    auto bs = B(t);
    require(static_cast<int>(bs.size()) == m || bs.empty(),
            "OperatorFamily: B(t) must return m matrices");
    for (const Mat& b : bs)
        if (!b.allFinite()) throw numerical_error("OperatorFamily: B(t) has non-finite entries");
    return bs;
}

void OperatorFamily::validate() const {
    require(delta > 0.0, "OperatorFamily: delta must be > 0");
    require(k_bound >= 0.0, "OperatorFamily: k_bound must be >= 0");
}

std::vector<Mat> absorbed_b_ops(const GalerkinSpace& space, const OperatorFamily& fam, double t) {
    std::vector<Mat> bs = fam.B_at(t, space.m);
    if (bs.empty()) return bs;
    for (int j = 0; j < space.m; ++j) bs[j] *= space.q_sqrt[j];
    return bs;
}

std::pair<GalerkinSpace, OperatorFamily> make_laplacian_space(int n, int m, double domain_length,
                                                              double q_decay) {
    require(n >= 1, "make_laplacian_space: n must be >= 1");
    require(m >= 1, "make_laplacian_space: m must be >= 1");
    require(domain_length > 0.0, "make_laplacian_space: domain length must be > 0");
    require(q_decay >= 0.0, "make_laplacian_space: q_decay must be >= 0");

    GalerkinSpace space;
    space.n = n;
    space.m = m;
    space.v_weights = Vec(n);
    Vec eig(n);  // (iπ/L)²
    for (int i = 0; i < n; ++i) {
        const double mu = (i + 1) * M_PI / domain_length;
        eig[i] = mu * mu;
        space.v_weights[i] = 1.0 + eig[i];
    }
    space.q_sqrt = Vec(m);
    for (int j = 1; j <= m; ++j) space.q_sqrt[j - 1] = std::pow(1.0 + j, -q_decay);

    OperatorFamily fam;
    const Mat a_mat = (-eig).asDiagonal();
    fam.A = [a_mat](double) { return a_mat; };
    fam.B = nullptr;
    fam.delta = 1.0;
    // One K serving both (H4)(i) clauses: coercivity needs
    // δ(1+λ̃_i) − 2λ̃_i ≤ K, the dual-norm bound needs λ̃_i/(1+λ̃_i) ≤ K.
    double k_coer = 0.0, k_dual = 0.0;
    for (int i = 0; i < n; ++i) {
        k_coer = std::max(k_coer, fam.delta * (1.0 + eig[i]) - 2.0 * eig[i]);
        k_dual = std::max(k_dual, eig[i] / (1.0 + eig[i]));
    }
    fam.k_bound = std::max(0.0, std::max(k_coer, k_dual));
    fam.deterministic = true;
    return {space, fam};
}

namespace {

Vec random_unit_vector(const CounterRng& gen, std::uint64_t base, int n) {
    Vec u(n);
    for (int i = 0; i < n; ++i) u[i] = gen.normal(base + i);
    const double nrm = u.norm();
    return nrm > 0 ? Vec(u / nrm) : Vec(Vec::Unit(n, 0));
}

}  // namespace

double coercivity_slack(const OperatorFamily& fam, const GalerkinSpace& space, double t,
                        const Vec& u, double delta, double k) {
    const Mat a = fam.A_at(t);
    double lhs = 0.0;
    if (a.size() > 0) lhs += 2.0 * u.dot(a * u);
    for (const Mat& bj : absorbed_b_ops(space, fam, t)) lhs += (bj * u).squaredNorm();
    return (-delta * space.norm_v2(u) + k * u.squaredNorm()) - lhs;
}

double quasi_skew_slack(const OperatorFamily& fam, const GalerkinSpace& space, double t,
                        const Vec& u, double k) {
    const std::vector<Mat> bs = fam.B_at(t, space.m);
    double norm2 = 0.0;
    for (std::size_t j = 0; j < bs.size(); ++j) {
        const double pairing = space.q_sqrt[static_cast<int>(j)] * u.dot(bs[j] * u);
        norm2 += pairing * pairing;
    }
    return k * u.squaredNorm() - std::sqrt(norm2);
}

CoercivityReport check_coercivity(const OperatorFamily& fam, const GalerkinSpace& space,
                                  const std::vector<double>& t_grid, int n_samples,
                                  std::uint64_t seed, double tolerance, double delta_override,
                                  double k_override) {
    require(!t_grid.empty(), "check_coercivity: t_grid must be nonempty");
    require(n_samples >= 1, "check_coercivity: n_samples must be >= 1");
    space.validate();
    fam.validate();

    const double delta = delta_override > 0.0 ? delta_override : fam.delta;
    const double k = k_override >= 0.0 ? k_override : fam.k_bound;

    CoercivityReport rep;
    rep.n_samples = n_samples;
    rep.worst_coercivity_slack = std::numeric_limits<double>::infinity();
    rep.worst_dualnorm_slack = std::numeric_limits<double>::infinity();
    rep.worst_skew_slack = 0.0;

    const CounterRng gen(seed, 0);
    std::uint64_t ctr = 0;
    for (double t : t_grid) {
        const Mat a = fam.A_at(t);
        for (int s = 0; s < n_samples; ++s) {
            const Vec u = random_unit_vector(gen, ctr, space.n);
            ctr += space.n;
            rep.worst_coercivity_slack =
                std::min(rep.worst_coercivity_slack, coercivity_slack(fam, space, t, u, delta, k));
            const double dual = a.size() > 0 ? space.norm_vstar(a * u) : 0.0;
            rep.worst_dualnorm_slack =
                std::min(rep.worst_dualnorm_slack, fam.k_bound * space.norm_v(u) - dual);
        }
    }
    rep.pass = rep.worst_coercivity_slack >= -tolerance && rep.worst_dualnorm_slack >= -tolerance &&
               rep.worst_skew_slack >= -tolerance;
    return rep;
}

CoercivityReport check_quasi_skew(const OperatorFamily& fam, const GalerkinSpace& space,
                                  const std::vector<double>& t_grid, int n_samples,
                                  std::uint64_t seed, double tolerance, double k_override) {
    require(!t_grid.empty(), "check_quasi_skew: t_grid must be nonempty");
    require(n_samples >= 1, "check_quasi_skew: n_samples must be >= 1");
    space.validate();
    fam.validate();

    const double k = k_override >= 0.0 ? k_override : fam.k_bound;

    CoercivityReport rep;
    rep.n_samples = n_samples;
    rep.worst_coercivity_slack = 0.0;
    rep.worst_dualnorm_slack = 0.0;
    rep.worst_skew_slack = std::numeric_limits<double>::infinity();

    const CounterRng gen(seed, 1);
    std::uint64_t ctr = 0;
    for (double t : t_grid) {
        for (int s = 0; s < n_samples; ++s) {
            const Vec u = random_unit_vector(gen, ctr, space.n);
            ctr += space.n;
            rep.worst_skew_slack =
                std::min(rep.worst_skew_slack, quasi_skew_slack(fam, space, t, u, k));
        }
    }
    rep.pass = rep.worst_skew_slack >= -tolerance;
    return rep;
}

}  // namespace seelab
