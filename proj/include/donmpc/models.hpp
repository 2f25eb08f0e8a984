#pragma once

// Operator networks that map a control window plus a condition vector to a
// multi-step output prediction, and the exact linear-in-features forms they
// admit. Two layouts:
//
//  - MsDeepONet: one branch net consumes the whole stacked window and emits
//    coefficients for every horizon step at once; the trunk consumes the
//    condition vector. One forward pass predicts the full horizon.
//  - StandardDeepONet: one branch net per input channel, channel coefficients
//    merged by elementwise product; the trunk consumes (condition, step time)
//    so each horizon step is a separate trunk query.
//
// Index conventions (0-based, frozen across training, serialization and the
// basis extraction below):
//  - stacked window u: time-major, channel-minor; entry k*n_u + ch is
//    channel ch at window position k.
//  - multi-step output y: step-major, channel-minor; entry j*n_y + q is
//    channel q at horizon step j+1.
//  - MsDeepONet branch output of length p*N*n_y is the p x (N*n_y)
//    coefficient matrix B in column-major order, prediction y = B^T t.
//  - StandardDeepONet branch output of length p*n_y is the p x n_y matrix in
//    column-major order.
//
// Models store their normalizer; public forward paths take and return raw
// units. The *_core_* batched paths work in normalized space and are what
// training drives.

#include "donmpc/neural.hpp"
#include "donmpc/normalizer.hpp"

#include <memory>
#include <vector>

namespace donmpc {

struct MsDeepONet {
  Ffn branch;  // dims [N*n_u, widths..., p*N*n_y]
  Ffn trunk;   // dims [n_z, widths..., p]
  int p = 0;
  int N = 0;
  int n_u = 0;
  int n_y = 0;
  int n_z = 0;
  double Ts = 0.0;
  Normalizer norm;

  long param_count() const { return branch.param_count() + trunk.param_count(); }
};

MsDeepONet make_ms_deeponet(int N, int n_u, int n_y, int n_z, double Ts, int p,
                            const std::vector<int>& branch_widths,
                            const std::vector<int>& trunk_widths, Activation act,
                            std::uint64_t seed);

struct StandardDeepONet {
  std::vector<Ffn> branches;  // n_u nets, dims [N, widths..., p*n_y]
  Ffn trunk;                  // dims [n_x + 1, widths..., p]
  int p = 0;
  int N = 0;
  int n_u = 0;
  int n_y = 0;
  int n_x = 0;
  double Ts = 0.0;  // step time fed to the trunk as j*Ts, j = 1..N
  Normalizer norm;

  long param_count() const;
};

StandardDeepONet make_std_deeponet(int N, int n_u, int n_y, int n_x, double Ts, int p,
                                   const std::vector<int>& branch_widths,
                                   const std::vector<int>& trunk_widths, Activation act,
                                   std::uint64_t seed);

// ---- batched normalized-space paths (training) ----

struct MsTape {
  FfnTape branch, trunk;
  MatrixXd b_out;  // p*N*n_y x B
  MatrixXd t_out;  // p x B
};

struct MsGrads {
  FfnGrads branch, trunk;
};

MsGrads zero_grads(const MsDeepONet& m);

// Un: N*n_u x B window batch, Zn: n_z x B condition batch, both already
// normalized. Returns N*n_y x B predictions in normalized output space.
MatrixXd ms_core_forward(const MsDeepONet& m, const MatrixXd& Un, const MatrixXd& Zn,
                         MsTape* tape = nullptr);
// dY is dLoss/dOutput in normalized space; returns dLoss/dUn.
MatrixXd ms_core_backward(const MsDeepONet& m, MsTape& tape, const MatrixXd& dY, MsGrads& g);

struct StdTape {
  std::vector<FfnTape> branches;
  FfnTape trunk;
  std::vector<MatrixXd> b_out;  // per channel, p*n_y x B
  MatrixXd b_prod;              // elementwise product over channels
  MatrixXd t_out;               // p x B
};

struct StdGrads {
  std::vector<FfnGrads> branches;
  FfnGrads trunk;
};

StdGrads zero_grads(const StandardDeepONet& m);

// U_ch[ch]: N x B window of channel ch; Zn: (n_x+1) x B trunk batch whose
// last row is the step time. Returns n_y x B single-step predictions.
MatrixXd std_core_forward(const StandardDeepONet& m, const std::vector<MatrixXd>& U_ch,
                          const MatrixXd& Zn, StdTape* tape = nullptr);
std::vector<MatrixXd> std_core_backward(const StandardDeepONet& m, StdTape& tape,
                                        const MatrixXd& dY, StdGrads& g);

// ---- flat parameter vectors (one optimizer across all nets) ----

long ms_param_count(const MsDeepONet& m);
VectorXd ms_get_params(const MsDeepONet& m);
void ms_set_params(MsDeepONet& m, const VectorXd& v);
VectorXd ms_flat_grads(const MsDeepONet& m, const MsGrads& g);

long std_param_count(const StandardDeepONet& m);
VectorXd std_get_params(const StandardDeepONet& m);
void std_set_params(StandardDeepONet& m, const VectorXd& v);
VectorXd std_flat_grads(const StandardDeepONet& m, const StdGrads& g);

// ---- raw-unit prediction interface (control side) ----

// Maps a stacked input window and a condition vector to the stacked N-step
// output prediction, raw units on both sides.
class MultiStepPredictor {
 public:
  virtual ~MultiStepPredictor() = default;
  virtual int horizon() const = 0;
  virtual int n_u() const = 0;
  virtual int n_y() const = 0;
  virtual int n_z() const = 0;
  virtual double step_time() const = 0;
  virtual VectorXd predict(const VectorXd& u, const VectorXd& z) const = 0;
  // Vector-Jacobian product: fills y with predict(u, z) and returns
  // (dy/du)^T w, all in raw units.
  virtual VectorXd predict_vjp(const VectorXd& u, const VectorXd& z, const VectorXd& w,
                               VectorXd& y) const = 0;
};

class MsPredictor : public MultiStepPredictor {
 public:
  explicit MsPredictor(MsDeepONet m) : model_(std::move(m)) {}
  int horizon() const override { return model_.N; }
  int n_u() const override { return model_.n_u; }
  int n_y() const override { return model_.n_y; }
  int n_z() const override { return model_.n_z; }
  double step_time() const override { return model_.Ts; }
  VectorXd predict(const VectorXd& u, const VectorXd& z) const override;
  VectorXd predict_vjp(const VectorXd& u, const VectorXd& z, const VectorXd& w,
                       VectorXd& y) const override;
  const MsDeepONet& model() const { return model_; }

 private:
  MsDeepONet model_;
};

class StdPredictor : public MultiStepPredictor {
 public:
  explicit StdPredictor(StandardDeepONet m) : model_(std::move(m)) {}
  int horizon() const override { return model_.N; }
  int n_u() const override { return model_.n_u; }
  int n_y() const override { return model_.n_y; }
  int n_z() const override { return model_.n_x; }
  double step_time() const override { return model_.Ts; }
  VectorXd predict(const VectorXd& u, const VectorXd& z) const override;
  VectorXd predict_vjp(const VectorXd& u, const VectorXd& z, const VectorXd& w,
                       VectorXd& y) const override;
  const StandardDeepONet& model() const { return model_; }

 private:
  StandardDeepONet model_;
};

// Single-sample convenience wrappers (raw units).
VectorXd ms_forward(const MsDeepONet& m, const VectorXd& u, const VectorXd& z);
VectorXd std_forward(const StandardDeepONet& m, const VectorXd& u, const VectorXd& x0);

// Evaluates the standard layout at an arbitrary trunk vector instead of the
// (x0, j*Ts) schedule; windows[ch] is channel ch's length-N window.
double std_eval_at(const StandardDeepONet& m, const std::vector<VectorXd>& windows,
                   const VectorXd& z_trunk, int out_channel);

// ---- exact linear-in-features forms of the MS layout ----

// The model output is linear in the joint feature vector
//   phi = col(phi_b (x) phi_t, phi_b, phi_t, 1)
// where phi_b/phi_t are the last hidden activations of branch and trunk and
// (x) is the Kronecker product with phi_b-major ordering (entry a*n_t + c is
// phi_b[a]*phi_t[c]). extract_basis returns the constant coefficient matrix
// Theta (N*n_y rows) of that form with the output denormalization absorbed,
// so Theta * joint_features(u, z) == ms_forward(u, z) exactly.
struct BasisForm {
  MatrixXd theta;  // N*n_y x (n_b*n_t + n_b + n_t + 1)
  int n_b = 0;
  int n_t = 0;
};

BasisForm extract_basis(const MsDeepONet& m);
VectorXd joint_features(const MsDeepONet& m, const VectorXd& u, const VectorXd& z);

// Condition-dependent reduction: for fixed z the output is affine in the
// branch features, y = Theta(z) * col(phi_b, 1).
MatrixXd conditioned_theta(const MsDeepONet& m, const VectorXd& z);
VectorXd branch_features(const MsDeepONet& m, const VectorXd& u);

// ---- embedding of a stacked single-hidden-layer operator net ----

// Scalar-input scalar-output operator network in stacked form:
//   G(u, z) = sum_k sum_i c(i,k) * tanh(xi[k].row(i) . u + theta(i,k))
//                         * tanh(w.row(k) . z + zeta(k))
// with u sampled at m points and z of dimension d.
struct StackedSisoNet {
  MatrixXd c;               // n x p
  std::vector<MatrixXd> xi; // p entries, each n x m
  MatrixXd theta;           // n x p
  MatrixXd w;               // p x d
  VectorXd zeta;            // p
};

// Builds an unstacked StandardDeepONet (n_u = n_y = 1, window length m,
// trunk input dim d) that reproduces the stacked net exactly: the trunk gets
// the stacked trunk neurons with an identity read-out, the branch gets all
// n*p stacked branch neurons with a block read-out that routes group k to
// basis index k.
StandardDeepONet embed_stacked(const StackedSisoNet& s);

}  // namespace donmpc
