#pragma once

#include "seelab/adjoint.hpp"

namespace seelab {

// Hamiltonian of the maximum principle, with the diffusion-shifted generator
// argument taken relative to the reference pair (X̄(t), ū(t)):
//   ℋ = ⟨p, a(t,x,v)⟩ + ⟨q, b(t,x,v)⟩_{L₂⁰}
//       + k(t, x, y, z + ⟨p, b(t,x,v) − b(t,X̄,ū)⟩_{L₂⁰}, v).
double hamiltonian(const ControlProblem& problem, double t, const Vec& x, double y,
                   const RowVec& z, const Vec& v, const Vec& p, const Mat& q, const Vec& x_ref,
                   const Vec& u_ref);

struct MPReport {
    double min_residual = 0.0;          // min over (path, step, lattice point)
    double residual_at_optimal = 0.0;   // identically zero by construction
    double fraction_violating = 0.0;    // fraction of (path, step) cells with min < -tol
    double tol = 0.0;
    int argmin_point = -1;              // lattice index attaining the global min
    bool pass = false;
};

// residual(v) = ℋ(v) − ℋ(ū) + ½⟨P Δb, Δb⟩ with Δb = b(t,X̄,v) − b(t,X̄,ū),
// evaluated at every (path, step, lattice point). The v = ū term cancels
// exactly, so residual_at_optimal is 0 by construction.
MPReport mp_residual(const ControlProblem& problem, const PathEnsemble& ens,
                     const BSDESolution& bsde, const AdjointBundle& adjoint,
                     const std::vector<Vec>& lattice, double tol);

// Verifies f(z̄ + ⟨a, b(u − u_base)⟩) − f(z̄) ≥ 0 over the control lattice and
// a grid of z̄ values; this is the sufficiency inequality of the linear
// terminal example.
bool example2_sufficiency_check(const std::function<double(const RowVec&)>& f, const Vec& a_vec,
                                const Mat& b_mat, const std::vector<Vec>& lattice, int base_index,
                                const std::vector<RowVec>& z_grid, double tol = 0.0);

}  // namespace seelab
