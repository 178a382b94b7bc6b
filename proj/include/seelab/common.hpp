#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace seelab {

using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;
using Mat = Eigen::MatrixXd;

// Numerical breakdown (singular systems, NaN states, ...).
struct numerical_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Fixed-point / Picard iteration did not reach tolerance.
struct convergence_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid experiment / run configuration.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace seelab
