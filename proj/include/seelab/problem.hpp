#pragma once

#include <functional>
#include <vector>

#include "seelab/common.hpp"

namespace seelab {

// Gradient of the generator k with respect to (x, y, z).
struct GeneratorGrad {
    Vec kx;      // n
    double ky = 0.0;
    RowVec kz;   // m
};

// Coefficients of the controlled equation and the recursive cost. All
// noise-facing values (b columns, z arguments) are Q^{1/2}-absorbed, so every
// L₂⁰ pairing below is a plain Frobenius/Euclidean product.
//
// Second derivatives: a_xx returns one n×n Hessian per state component of a;
// b_xx returns, per noise column j, one n×n Hessian per state component.
// d2k is the (n+1+m)×(n+1+m) Hessian of k over (x, y, z). Null callbacks mean
// identically zero.
struct ControlProblem {
    int state_dim = 0;
    int noise_dim = 0;
    int control_dim = 1;

    std::function<Vec(double, const Vec&, const Vec&)> a;                 // n
    std::function<Mat(double, const Vec&, const Vec&)> a_x;               // n×n
    std::function<std::vector<Mat>(double, const Vec&, const Vec&)> a_xx;

    std::function<Mat(double, const Vec&, const Vec&)> b;                 // n×m, absorbed
    std::function<std::vector<Mat>(double, const Vec&, const Vec&)> b_x;  // per column j: n×n
    std::function<std::vector<std::vector<Mat>>(double, const Vec&, const Vec&)> b_xx;

    std::function<double(double, const Vec&, double, const RowVec&, const Vec&)> k;
    std::function<GeneratorGrad(double, const Vec&, double, const RowVec&, const Vec&)> dk;
    std::function<Mat(double, const Vec&, double, const RowVec&, const Vec&)> d2k;

    std::function<double(const Vec&)> h;
    std::function<Vec(const Vec&)> h_x;
    std::function<Mat(const Vec&)> h_xx;

    std::vector<Vec> u_points;  // control lattice values
    int base_index = 0;         // the distinguished base point of U

    // --- evaluation helpers with zero defaults -------------------------------
    Vec drift(double t, const Vec& x, const Vec& u) const {
        return a ? a(t, x, u) : Vec(Vec::Zero(state_dim));
    }
    Mat drift_jac(double t, const Vec& x, const Vec& u) const {
        return a_x ? a_x(t, x, u) : Mat(Mat::Zero(state_dim, state_dim));
    }
    Mat diffusion(double t, const Vec& x, const Vec& u) const {
        return b ? b(t, x, u) : Mat(Mat::Zero(state_dim, noise_dim));
    }
    std::vector<Mat> diffusion_jac(double t, const Vec& x, const Vec& u) const {
        if (b_x) return b_x(t, x, u);
        return std::vector<Mat>(noise_dim, Mat::Zero(state_dim, state_dim));
    }
    double generator(double t, const Vec& x, double y, const RowVec& z, const Vec& u) const {
        return k ? k(t, x, y, z, u) : 0.0;
    }
    GeneratorGrad generator_grad(double t, const Vec& x, double y, const RowVec& z,
                                 const Vec& u) const {
        if (dk) return dk(t, x, y, z, u);
        GeneratorGrad g;
        g.kx = Vec::Zero(state_dim);
        g.kz = RowVec::Zero(noise_dim);
        return g;
    }
    Mat generator_hess(double t, const Vec& x, double y, const RowVec& z, const Vec& u) const {
        const int d = state_dim + 1 + noise_dim;
        return d2k ? d2k(t, x, y, z, u) : Mat(Mat::Zero(d, d));
    }
    double terminal(const Vec& x) const { return h ? h(x) : 0.0; }
    Vec terminal_grad(const Vec& x) const { return h_x ? h_x(x) : Vec(Vec::Zero(state_dim)); }
    Mat terminal_hess(const Vec& x) const {
        return h_xx ? h_xx(x) : Mat(Mat::Zero(state_dim, state_dim));
    }
    const Vec& base_control() const { return u_points.at(base_index); }
};

// Maps (step index, time, state, path) to a control value in U.
using Policy = std::function<Vec(int, double, const Vec&, int)>;

inline Policy constant_policy(Vec u) {
    return [u = std::move(u)](int, double, const Vec&, int) { return u; };
}

}  // namespace seelab
