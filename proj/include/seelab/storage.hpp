#pragma once

#include <vector>

#include "seelab/common.hpp"

namespace seelab {

// Dense per-(path, step) storage. Rows of a Monte Carlo bundle are contiguous
// per path so path-parallel sweeps touch disjoint memory.

class ScalarPaths {
  public:
    ScalarPaths() = default;
    ScalarPaths(int n_paths, int n_steps)
        : n_paths_(n_paths), n_steps_(n_steps), v_(static_cast<std::size_t>(n_paths) * n_steps, 0.0) {}

    double& operator()(int p, int i) { return v_[idx(p, i)]; }
    double operator()(int p, int i) const { return v_[idx(p, i)]; }
    int paths() const { return n_paths_; }
    int steps() const { return n_steps_; }
    const std::vector<double>& raw() const { return v_; }

  private:
    std::size_t idx(int p, int i) const {
        return static_cast<std::size_t>(p) * n_steps_ + i;
    }
    int n_paths_ = 0, n_steps_ = 0;
    std::vector<double> v_;
};

class VecPaths {
  public:
    VecPaths() = default;
    VecPaths(int n_paths, int n_steps, int dim)
        : n_paths_(n_paths), n_steps_(n_steps), dim_(dim),
          v_(static_cast<std::size_t>(n_paths) * n_steps * dim, 0.0) {}

    Eigen::Map<Vec> at(int p, int i) { return {v_.data() + idx(p, i), dim_}; }
    Eigen::Map<const Vec> at(int p, int i) const { return {v_.data() + idx(p, i), dim_}; }
    int paths() const { return n_paths_; }
    int steps() const { return n_steps_; }
    int dim() const { return dim_; }

  private:
    std::size_t idx(int p, int i) const {
        return (static_cast<std::size_t>(p) * n_steps_ + i) * dim_;
    }
    int n_paths_ = 0, n_steps_ = 0, dim_ = 0;
    std::vector<double> v_;
};

class MatPaths {
  public:
    MatPaths() = default;
    MatPaths(int n_paths, int n_steps, int rows, int cols)
        : n_paths_(n_paths), n_steps_(n_steps), rows_(rows), cols_(cols),
          v_(static_cast<std::size_t>(n_paths) * n_steps * rows * cols, 0.0) {}

    Eigen::Map<Mat> at(int p, int i) { return {v_.data() + idx(p, i), rows_, cols_}; }
    Eigen::Map<const Mat> at(int p, int i) const { return {v_.data() + idx(p, i), rows_, cols_}; }
    int paths() const { return n_paths_; }
    int steps() const { return n_steps_; }
    int rows() const { return rows_; }
    int cols() const { return cols_; }

  private:
    std::size_t idx(int p, int i) const {
        return (static_cast<std::size_t>(p) * n_steps_ + i) * rows_ * cols_;
    }
    int n_paths_ = 0, n_steps_ = 0, rows_ = 0, cols_ = 0;
    std::vector<double> v_;
};

}  // namespace seelab
