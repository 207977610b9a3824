#pragma once

#include <Eigen/Dense>

namespace neugap {

enum class PredictTarget { y_star, f_star };

/// Per-point Gaussian predictive marginals.
struct PredictiveDist {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;
  PredictTarget target = PredictTarget::y_star;

  Eigen::Index size() const { return mean.size(); }
};

}  // namespace neugap
