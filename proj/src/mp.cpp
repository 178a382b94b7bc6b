#include "seelab/mp.hpp"

#include <algorithm>
#include <cmath>

#include "seelab/parallel.hpp"

namespace seelab {

double hamiltonian(const ControlProblem& problem, double t, const Vec& x, double y,
                   const RowVec& z, const Vec& v, const Vec& p, const Mat& q, const Vec& x_ref,
                   const Vec& u_ref) {
    const Mat bv = problem.diffusion(t, x, v);
    const Mat bref = problem.diffusion(t, x_ref, u_ref);
    double h = p.dot(problem.drift(t, x, v));
    h += (q.array() * bv.array()).sum();
    RowVec shift = p.transpose() * (bv - bref);
    h += problem.generator(t, x, y, z + shift, v);
    return h;
}

MPReport mp_residual(const ControlProblem& problem, const PathEnsemble& ens,
                     const BSDESolution& bsde, const AdjointBundle& adjoint,
                     const std::vector<Vec>& lattice, double tol) {
    require(!lattice.empty(), "mp_residual: empty control lattice");
    const int N = ens.n_paths;
    const int M = ens.grid.M;
    const int V = static_cast<int>(lattice.size());

    MPReport rep;
    rep.tol = tol;
    rep.min_residual = std::numeric_limits<double>::infinity();

    const std::size_t nb = block_count(static_cast<std::size_t>(N));
    struct BlockAcc {
        double min_res = std::numeric_limits<double>::infinity();
        std::size_t violations = 0;
        int argmin = -1;
    };
    std::vector<BlockAcc> acc(nb);

    for_blocks(static_cast<std::size_t>(N), [&](std::size_t b, std::size_t e, std::size_t bi) {
        BlockAcc local;
        for (std::size_t ps = b; ps < e; ++ps) {
            const int p = static_cast<int>(ps);
            for (int i = 0; i < M; ++i) {
                const double t = ens.grid.knots[i];
                const Vec x = ens.X.at(p, i);
                const Vec u = ens.U.at(p, i);
                const double y = bsde.Y(p, i);
                const RowVec z = bsde.Z.at(p, i).transpose();
                const Vec pv = adjoint.first.p.at(p, i);
                const Mat qm = adjoint.first.q.at(p, i);
                const Mat pm = adjoint.second.P.at(p, i);
                const Mat bref = problem.diffusion(t, x, u);
                const double h_ref = hamiltonian(problem, t, x, y, z, u, pv, qm, x, u);

                double cell_min = std::numeric_limits<double>::infinity();
                for (int vi = 0; vi < V; ++vi) {
                    const Vec& v = lattice[static_cast<std::size_t>(vi)];
                    const bool is_applied =
                        v.size() == u.size() && (v - u).cwiseAbs().maxCoeff() == 0.0;
                    double res;
                    if (is_applied) {
                        res = 0.0;  // exact cancellation at the applied control
                    } else {
                        const Mat db = problem.diffusion(t, x, v) - bref;
                        res = hamiltonian(problem, t, x, y, z, v, pv, qm, x, u) - h_ref;
                        res += 0.5 * (db.array() * (pm * db).array()).sum();
                    }
                    if (res < cell_min) {
                        cell_min = res;
                        if (res < local.min_res) {
                            local.min_res = res;
                            local.argmin = vi;
                        }
                    }
                }
                if (cell_min < -tol) ++local.violations;
            }
        }
        acc[bi] = local;
    });

    std::size_t violations = 0;
    for (const BlockAcc& a : acc) {
        violations += a.violations;
        if (a.min_res < rep.min_residual) {
            rep.min_residual = a.min_res;
            rep.argmin_point = a.argmin;
        }
    }
    rep.fraction_violating =
        static_cast<double>(violations) / (static_cast<double>(N) * std::max(1, M));
    rep.residual_at_optimal = 0.0;
    rep.pass = rep.fraction_violating == 0.0 && rep.min_residual >= -tol;
    return rep;
}

bool example2_sufficiency_check(const std::function<double(const RowVec&)>& f, const Vec& a_vec,
                                const Mat& b_mat, const std::vector<Vec>& lattice, int base_index,
                                const std::vector<RowVec>& z_grid, double tol) {
    require(static_cast<bool>(f), "example2_sufficiency_check: f required");
    require(base_index >= 0 && base_index < static_cast<int>(lattice.size()),
            "example2_sufficiency_check: base index out of range");
    const Vec& base = lattice[static_cast<std::size_t>(base_index)];
    const int m = static_cast<int>(b_mat.cols()) / std::max<int>(1, base.size());
    for (const RowVec& z : z_grid) {
        const double f0 = f(z);
        for (const Vec& u : lattice) {
            // shift ⟨a, b(u − ū)⟩; b_mat stacks one n×m block per control
            // component, so b·du = Σ_k du_k · block_k.
            const Vec du = u - base;
            RowVec shift = RowVec::Zero(m);
            for (int kc = 0; kc < du.size(); ++kc)
                shift += du[kc] * (a_vec.transpose() * b_mat.middleCols(kc * m, m));
            if (f(z + shift) - f0 < -tol) return false;
        }
    }
    return true;
}

}  // namespace seelab
