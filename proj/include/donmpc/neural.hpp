#pragma once

// Dense feed-forward networks with manual reverse-mode gradients, plus the
// Adam optimizer used to fit them. Everything is double precision and batched
// column-wise: a batch of B vectors is a (dim x B) matrix.

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace donmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Activation { Tanh, Relu };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

// Multilayer perceptron. W[i] maps layer i (dims[i]) to layer i+1
// (dims[i+1]); the activation is applied after every layer except the last,
// which stays affine so the final layer can act as a linear read-out.
struct Ffn {
  std::vector<MatrixXd> W;  // W[i]: dims[i+1] x dims[i]
  std::vector<VectorXd> b;  // b[i]: dims[i+1]
  Activation act = Activation::Tanh;

  int num_layers() const { return static_cast<int>(W.size()); }
  int in_dim() const { return static_cast<int>(W.front().cols()); }
  int out_dim() const { return static_cast<int>(W.back().rows()); }
  std::vector<int> dims() const;
  // Total scalar parameter count (weights + biases).
  long param_count() const;
};

// Glorot-uniform weights, zero biases. dims must have >= 2 entries, all
// positive. Deterministic in (dims, seed).
Ffn make_ffn(const std::vector<int>& dims, Activation act, std::uint64_t seed);

// Forward-pass bookkeeping needed by the backward pass. One tape per
// forward call; backward consumes it and rejects reuse.
struct FfnTape {
  MatrixXd input;             // dims[0] x B
  std::vector<MatrixXd> pre;  // pre-activation of each layer, dims[i+1] x B
  bool consumed = false;
};

// Batched forward pass. When tape is non-null the intermediates needed for
// ffn_backward are recorded into it.
MatrixXd ffn_forward(const Ffn& net, const MatrixXd& batch, FfnTape* tape = nullptr);

struct FfnGrads {
  std::vector<MatrixXd> dW;
  std::vector<VectorXd> db;
};

FfnGrads zero_grads(const Ffn& net);

// Reverse pass. upstream is dLoss/dOutput (out_dim x B); parameter
// gradients are accumulated into grads (so several backward calls can share
// one accumulator) and the return value is dLoss/dInput (in_dim x B).
// Throws if the tape was already consumed.
MatrixXd ffn_backward(const Ffn& net, FfnTape& tape, const MatrixXd& upstream, FfnGrads& grads);

// Flat parameter views, used to run one optimizer across several nets.
// Ordering: per layer, W row-major then b; layers in order.
void pack_params(const Ffn& net, double* dst);
void unpack_params(Ffn& net, const double* src);
void pack_grads(const FfnGrads& grads, double* dst);

// Adam with bias correction. adam_step rejects non-finite gradients.
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long t = 0;  // completed steps
  VectorXd m;  // first moment
  VectorXd v;  // second moment

  explicit AdamState(long dim = 0, double lr_ = 1e-3)
      : lr(lr_), m(VectorXd::Zero(dim)), v(VectorXd::Zero(dim)) {}
};

void adam_step(VectorXd& params, const VectorXd& grad, AdamState& state);

// Uniform doubles from the top 53 bits of mt19937_64 output. The mapping is
// done by hand because std::uniform_real_distribution is not pinned by the
// standard and would break bit-reproducibility across toolchains.
class UniformRng {
 public:
  explicit UniformRng(std::uint64_t seed) : engine_(seed) {}
  double next01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double next(double lo, double hi) { return lo + (hi - lo) * next01(); }
  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace donmpc
