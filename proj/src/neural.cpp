#include "donmpc/neural.hpp"

#include <cmath>
#include <stdexcept>

namespace donmpc {

const char* activation_name(Activation a) {
  return a == Activation::Tanh ? "tanh" : "relu";
}

Activation activation_from_name(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  throw std::invalid_argument("unknown activation: " + name);
}

std::vector<int> Ffn::dims() const {
  std::vector<int> d;
  d.push_back(in_dim());
  for (const auto& w : W) d.push_back(static_cast<int>(w.rows()));
  return d;
}

long Ffn::param_count() const {
  long n = 0;
  for (std::size_t i = 0; i < W.size(); ++i) n += W[i].size() + b[i].size();
  return n;
}

Ffn make_ffn(const std::vector<int>& dims, Activation act, std::uint64_t seed) {
  if (dims.size() < 2) throw std::invalid_argument("make_ffn: need at least two layer dims");
  for (int d : dims)
    if (d <= 0) throw std::invalid_argument("make_ffn: layer dims must be positive");

  UniformRng rng(seed);
  Ffn net;
  net.act = act;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const int fan_in = dims[i], fan_out = dims[i + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    MatrixXd w(fan_out, fan_in);
    // Row-major fill so the draw order matches the flat parameter layout.
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) w(r, c) = rng.next(-limit, limit);
    net.W.push_back(std::move(w));
    net.b.push_back(VectorXd::Zero(fan_out));
  }
  return net;
}

namespace {

MatrixXd apply_act(Activation act, const MatrixXd& z) {
  if (act == Activation::Tanh) return z.array().tanh();
  return z.array().max(0.0);
}

// Elementwise derivative of the activation, expressed from the
// pre-activation value.
MatrixXd act_deriv(Activation act, const MatrixXd& z) {
  if (act == Activation::Tanh) {
    MatrixXd t = z.array().tanh();
    return 1.0 - t.array().square();
  }
  return (z.array() > 0.0).cast<double>();
}

}  // namespace

MatrixXd ffn_forward(const Ffn& net, const MatrixXd& batch, FfnTape* tape) {
  if (batch.rows() != net.in_dim())
    throw std::invalid_argument("ffn_forward: batch rows != input dim");
  if (tape) {
    tape->input = batch;
    tape->pre.clear();
    tape->consumed = false;
  }
  MatrixXd h = batch;
  const int L = net.num_layers();
  for (int i = 0; i < L; ++i) {
    MatrixXd z = (net.W[i] * h).colwise() + net.b[i];
    if (tape) tape->pre.push_back(z);
    h = (i + 1 < L) ? apply_act(net.act, z) : std::move(z);
  }
  return h;
}

FfnGrads zero_grads(const Ffn& net) {
  FfnGrads g;
  for (std::size_t i = 0; i < net.W.size(); ++i) {
    g.dW.push_back(MatrixXd::Zero(net.W[i].rows(), net.W[i].cols()));
    g.db.push_back(VectorXd::Zero(net.b[i].size()));
  }
  return g;
}

MatrixXd ffn_backward(const Ffn& net, FfnTape& tape, const MatrixXd& upstream, FfnGrads& grads) {
  const int L = net.num_layers();
  if (tape.consumed) throw std::logic_error("ffn_backward: tape already consumed");
  if (static_cast<int>(tape.pre.size()) != L)
    throw std::logic_error("ffn_backward: tape does not match network");
  if (upstream.rows() != net.out_dim() || upstream.cols() != tape.input.cols())
    throw std::invalid_argument("ffn_backward: upstream shape mismatch");
  tape.consumed = true;

  // delta is dLoss/d(pre-activation of layer i); the last layer is affine so
  // it starts as the upstream gradient itself.
  MatrixXd delta = upstream;
  for (int i = L - 1; i >= 0; --i) {
    const MatrixXd& layer_in =
        (i == 0) ? tape.input : apply_act(net.act, tape.pre[i - 1]);
    grads.dW[i].noalias() += delta * layer_in.transpose();
    grads.db[i] += delta.rowwise().sum();
    MatrixXd back = net.W[i].transpose() * delta;
    if (i > 0) delta = back.array() * act_deriv(net.act, tape.pre[i - 1]).array();
    else return back;
  }
  return {};  // unreachable; L >= 1 always returns inside the loop
}

void pack_params(const Ffn& net, double* dst) {
  for (std::size_t i = 0; i < net.W.size(); ++i) {
    const MatrixXd& w = net.W[i];
    for (int r = 0; r < w.rows(); ++r)
      for (int c = 0; c < w.cols(); ++c) *dst++ = w(r, c);
    for (int r = 0; r < net.b[i].size(); ++r) *dst++ = net.b[i](r);
  }
}

void unpack_params(Ffn& net, const double* src) {
  for (std::size_t i = 0; i < net.W.size(); ++i) {
    MatrixXd& w = net.W[i];
    for (int r = 0; r < w.rows(); ++r)
      for (int c = 0; c < w.cols(); ++c) w(r, c) = *src++;
    for (int r = 0; r < net.b[i].size(); ++r) net.b[i](r) = *src++;
  }
}

void pack_grads(const FfnGrads& grads, double* dst) {
  for (std::size_t i = 0; i < grads.dW.size(); ++i) {
    const MatrixXd& w = grads.dW[i];
    for (int r = 0; r < w.rows(); ++r)
      for (int c = 0; c < w.cols(); ++c) *dst++ = w(r, c);
    for (int r = 0; r < grads.db[i].size(); ++r) *dst++ = grads.db[i](r);
  }
}

void adam_step(VectorXd& params, const VectorXd& grad, AdamState& state) {
  if (params.size() != grad.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: size mismatch");
  if (!grad.allFinite()) throw std::invalid_argument("adam_step: non-finite gradient");

  state.t += 1;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  params.array() -=
      state.lr * (state.m.array() / bc1) /
      ((state.v.array() / bc2).sqrt() + state.eps);
}

}  // namespace donmpc
