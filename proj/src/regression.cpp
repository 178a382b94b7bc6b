#include "seelab/regression.hpp"

#include <algorithm>
#include <cmath>

#include "seelab/parallel.hpp"

namespace seelab {

namespace {

void enumerate_exponents(int n_vars, int degree, std::vector<int>& cur, int pos, int left,
                         std::vector<std::vector<int>>& out) {
    if (pos == n_vars) {
        out.push_back(cur);
        return;
    }
    for (int e = 0; e <= left; ++e) {
        cur[pos] = e;
        enumerate_exponents(n_vars, degree, cur, pos + 1, left - e, out);
    }
    cur[pos] = 0;
}

}  // namespace

FeatureMap::FeatureMap(const RegressionBasis& basis, int state_dim) {
    require(basis.degree >= 0, "RegressionBasis: degree must be >= 0");
    require(basis.ridge >= 0.0, "RegressionBasis: ridge must be >= 0");
    n_vars_ = basis.n_feat < 0 ? state_dim : std::min(basis.n_feat, state_dim);
    require(n_vars_ >= 0, "FeatureMap: negative variable count");
    std::vector<int> cur(std::max(n_vars_, 1), 0);
    if (n_vars_ == 0) {
        exponents_.push_back({});
    } else {
        enumerate_exponents(n_vars_, basis.degree, cur, 0, basis.degree, exponents_);
        // sort by total degree, then lexicographic: constant feature first
        std::sort(exponents_.begin(), exponents_.end(),
                  [](const std::vector<int>& a, const std::vector<int>& b) {
                      int da = 0, db = 0;
                      for (int e : a) da += e;
                      for (int e : b) db += e;
                      if (da != db) return da < db;
                      return a < b;
                  });
    }
}

void FeatureMap::eval(const Vec& x, double* row) const {
    for (std::size_t f = 0; f < exponents_.size(); ++f) {
        double v = 1.0;
        for (int i = 0; i < n_vars_; ++i) {
            const int e = exponents_[f][i];
            for (int r = 0; r < e; ++r) v *= x[i];
        }
        row[f] = v;
    }
}

RegressionStep::RegressionStep(const FeatureMap& fm, const VecPaths& states, int step,
                               double ridge)
    : fm_(fm), n_paths_(states.paths()), ridge_(ridge) {
    const int F = fm_.count();
    phi_.resize(n_paths_, F);
    for_blocks(static_cast<std::size_t>(n_paths_), [&](std::size_t b, std::size_t e, std::size_t) {
        std::vector<double> row(F);
        for (std::size_t p = b; p < e; ++p) {
            fm_.eval(states.at(static_cast<int>(p), step), row.data());
            for (int f = 0; f < F; ++f) phi_(static_cast<int>(p), f) = row[f];
        }
    });

    // blockwise Gram matrix, combined in block order
    const std::size_t nb = block_count(n_paths_);
    std::vector<Mat> partial(nb, Mat::Zero(F, F));
    for_blocks(static_cast<std::size_t>(n_paths_), [&](std::size_t b, std::size_t e, std::size_t bi) {
        partial[bi].noalias() =
            phi_.middleRows(static_cast<int>(b), static_cast<int>(e - b)).transpose() *
            phi_.middleRows(static_cast<int>(b), static_cast<int>(e - b));
    });
    Mat gram = Mat::Zero(F, F);
    for (const Mat& g : partial) gram += g;
    gram /= static_cast<double>(n_paths_);
    // constant feature is not penalized, so projections of constants are exact
    for (int f = 1; f < F; ++f) gram(f, f) += ridge_;
    gram_.compute(gram);
    if (gram_.info() != Eigen::Success)
        throw numerical_error("regression: normal equations factorization failed");
    if (ridge_ == 0.0) {
        const Vec d = gram_.vectorD();
        if (d.minCoeff() <= 1e-13 * std::max(1.0, d.maxCoeff()))
            throw numerical_error(
                "regression: rank-deficient normal equations; use ridge > 0");
    }
}

Vec RegressionStep::fit(const std::vector<double>& y) const {
    require(static_cast<int>(y.size()) == n_paths_, "regression: target size mismatch");
    const int F = fm_.count();
    const std::size_t nb = block_count(n_paths_);
    std::vector<Vec> partial(nb, Vec::Zero(F));
    for_blocks(static_cast<std::size_t>(n_paths_), [&](std::size_t b, std::size_t e, std::size_t bi) {
        Vec acc = Vec::Zero(F);
        for (std::size_t p = b; p < e; ++p)
            acc += phi_.row(static_cast<int>(p)).transpose() * y[p];
        partial[bi] = acc;
    });
    Vec rhs = Vec::Zero(F);
    for (const Vec& r : partial) rhs += r;
    rhs /= static_cast<double>(n_paths_);
    Vec coef = gram_.solve(rhs);
    if (!coef.allFinite())
        throw numerical_error("regression: non-finite coefficients; use ridge > 0");
    return coef;
}

void RegressionStep::fitted(const Vec& coef, std::vector<double>* out) const {
    out->resize(n_paths_);
    for_blocks(static_cast<std::size_t>(n_paths_), [&](std::size_t b, std::size_t e, std::size_t) {
        for (std::size_t p = b; p < e; ++p)
            (*out)[p] = phi_.row(static_cast<int>(p)).dot(coef);
    });
}

void RegressionStep::project(const std::vector<double>& y, std::vector<double>* out) const {
    fitted(fit(y), out);
}

double RegressionStep::fitted_at(const Vec& coef, const Vec& x) const {
    std::vector<double> row(fm_.count());
    fm_.eval(x, row.data());
    double v = 0.0;
    for (int f = 0; f < fm_.count(); ++f) v += row[f] * coef[f];
    return v;
}

Vec fit_polynomial(const FeatureMap& fm, const std::vector<Vec>& xs, const std::vector<double>& ys,
                   double ridge) {
    require(xs.size() == ys.size() && !xs.empty(), "fit_polynomial: bad sample set");
    const int F = fm.count();
    const int K = static_cast<int>(xs.size());
    Mat phi(K, F);
    std::vector<double> row(F);
    for (int k = 0; k < K; ++k) {
        fm.eval(xs[k], row.data());
        for (int f = 0; f < F; ++f) phi(k, f) = row[f];
    }
    Mat gram = phi.transpose() * phi / K;
    for (int f = 1; f < F; ++f) gram(f, f) += ridge;
    Vec rhs = Vec::Zero(F);
    for (int k = 0; k < K; ++k) rhs += phi.row(k).transpose() * ys[k];
    rhs /= K;
    Eigen::LDLT<Mat> ldlt(gram);
    if (ldlt.info() != Eigen::Success)
        throw numerical_error("fit_polynomial: factorization failed");
    if (ridge == 0.0) {
        const Vec d = ldlt.vectorD();
        if (d.minCoeff() <= 1e-13 * std::max(1.0, d.maxCoeff()))
            throw numerical_error("fit_polynomial: rank-deficient system; use ridge > 0");
    }
    Vec coef = ldlt.solve(rhs);
    if (!coef.allFinite()) throw numerical_error("fit_polynomial: non-finite coefficients");
    return coef;
}

double eval_polynomial(const FeatureMap& fm, const Vec& coef, const Vec& x) {
    std::vector<double> row(fm.count());
    fm.eval(x, row.data());
    double v = 0.0;
    for (int f = 0; f < fm.count(); ++f) v += row[f] * coef[f];
    return v;
}

}  // namespace seelab
