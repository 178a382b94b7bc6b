#pragma once

#include <vector>

#include "seelab/common.hpp"
#include "seelab/storage.hpp"

namespace seelab {

// Polynomial features of the current state: all monomials of total degree <= d
// over the first n_feat coordinates, constant included. Feature count is
// C(n_feat + d, d). n_feat = -1 means all coordinates.
struct RegressionBasis {
    int degree = 2;
    int n_feat = -1;
    double ridge = 1e-8;
};

class FeatureMap {
  public:
    FeatureMap(const RegressionBasis& basis, int state_dim);

    int count() const { return static_cast<int>(exponents_.size()); }
    void eval(const Vec& x, double* row) const;

  private:
    int n_vars_ = 0;
    std::vector<std::vector<int>> exponents_;
};

// Least-squares conditional expectation operator at one time step: assembles
// the normal equations of the feature matrix once and fits any number of
// targets against it. Accumulation runs over fixed path blocks in ascending
// order, so coefficients are reproducible for any worker count.
class RegressionStep {
  public:
    // states(p) must yield the n-dim state of path p.
    RegressionStep(const FeatureMap& fm, const VecPaths& states, int step, double ridge);

    int paths() const { return n_paths_; }
    int features() const { return fm_.count(); }

    // Regression coefficients for target y (one value per path).
    Vec fit(const std::vector<double>& y) const;
    // Per-path fitted values Φc.
    void fitted(const Vec& coef, std::vector<double>* out) const;
    // fit + fitted in one go.
    void project(const std::vector<double>& y, std::vector<double>* out) const;

    double fitted_at(const Vec& coef, const Vec& x) const;

  private:
    const FeatureMap& fm_;
    int n_paths_ = 0;
    double ridge_ = 0.0;
    Mat phi_;  // N×F
    Eigen::LDLT<Mat> gram_;
};

// Standalone ridge fit of scattered samples (x_k, y_k); used for value
// surrogates. Throws numerical_error for rank-deficient systems when ridge==0.
Vec fit_polynomial(const FeatureMap& fm, const std::vector<Vec>& xs, const std::vector<double>& ys,
                   double ridge);
double eval_polynomial(const FeatureMap& fm, const Vec& coef, const Vec& x);

}  // namespace seelab
