#pragma once

// Per-channel affine input/output scaling shared by datasets and trained
// models. Statistics are kept per physical channel; matrices whose rows stack
// several time steps of the same channels (window vectors, multi-step
// targets) are handled by tiling, i.e. row r maps to channel r mod dim.

#include <Eigen/Core>

namespace donmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Normalizer {
  VectorXd u_shift, u_scale;  // physical input channels (n_u)
  VectorXd z_shift, z_scale;  // trunk/condition channels
  VectorXd y_shift, y_scale;  // output channels (n_y)

  static Normalizer identity(int n_u, int n_z, int n_y);

  // (v - shift) / scale applied rowwise with channel tiling.
  MatrixXd normalize_u(const MatrixXd& m) const;
  MatrixXd normalize_z(const MatrixXd& m) const;
  MatrixXd normalize_y(const MatrixXd& m) const;
  // shift + scale * v, inverse of normalize_y.
  MatrixXd denormalize_y(const MatrixXd& m) const;

  bool is_identity() const;
};

MatrixXd tiled_normalize(const MatrixXd& m, const VectorXd& shift, const VectorXd& scale);
MatrixXd tiled_denormalize(const MatrixXd& m, const VectorXd& shift, const VectorXd& scale);

}  // namespace donmpc
