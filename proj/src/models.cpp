#include "donmpc/models.hpp"

#include <cmath>
#include <stdexcept>

namespace donmpc {

namespace {

std::vector<int> full_dims(int in, const std::vector<int>& widths, int out) {
  std::vector<int> d;
  d.push_back(in);
  d.insert(d.end(), widths.begin(), widths.end());
  d.push_back(out);
  return d;
}

// Activations of the last hidden layer (the features the final linear layer
// reads). Requires at least one hidden layer.
MatrixXd hidden_features(const Ffn& net, const MatrixXd& batch) {
  if (net.num_layers() < 2)
    throw std::invalid_argument("hidden_features: network has no hidden layer");
  MatrixXd h = batch;
  for (int i = 0; i + 1 < net.num_layers(); ++i) {
    MatrixXd z = (net.W[i] * h).colwise() + net.b[i];
    h = net.act == Activation::Tanh ? MatrixXd(z.array().tanh())
                                    : MatrixXd(z.array().max(0.0));
  }
  return h;
}

VectorXd as_vector(const MatrixXd& one_col) { return one_col.col(0); }

}  // namespace

MsDeepONet make_ms_deeponet(int N, int n_u, int n_y, int n_z, double Ts, int p,
                            const std::vector<int>& branch_widths,
                            const std::vector<int>& trunk_widths, Activation act,
                            std::uint64_t seed) {
  if (N < 1 || n_u < 1 || n_y < 1 || n_z < 1 || p < 1)
    throw std::invalid_argument("make_ms_deeponet: dims must be positive");
  MsDeepONet m;
  m.p = p;
  m.N = N;
  m.n_u = n_u;
  m.n_y = n_y;
  m.n_z = n_z;
  m.Ts = Ts;
  // Distinct sub-seeds so branch and trunk never share initial weights.
  m.branch = make_ffn(full_dims(N * n_u, branch_widths, p * N * n_y), act, seed * 2 + 1);
  m.trunk = make_ffn(full_dims(n_z, trunk_widths, p), act, seed * 2 + 2);
  m.norm = Normalizer::identity(n_u, n_z, n_y);
  return m;
}

long StandardDeepONet::param_count() const {
  long n = trunk.param_count();
  for (const auto& b : branches) n += b.param_count();
  return n;
}

StandardDeepONet make_std_deeponet(int N, int n_u, int n_y, int n_x, double Ts, int p,
                                   const std::vector<int>& branch_widths,
                                   const std::vector<int>& trunk_widths, Activation act,
                                   std::uint64_t seed) {
  if (N < 1 || n_u < 1 || n_y < 1 || n_x < 1 || p < 1)
    throw std::invalid_argument("make_std_deeponet: dims must be positive");
  StandardDeepONet m;
  m.p = p;
  m.N = N;
  m.n_u = n_u;
  m.n_y = n_y;
  m.n_x = n_x;
  m.Ts = Ts;
  for (int ch = 0; ch < n_u; ++ch)
    m.branches.push_back(make_ffn(full_dims(N, branch_widths, p * n_y), act,
                                  seed * (n_u + 1) + 1 + ch));
  m.trunk = make_ffn(full_dims(n_x + 1, trunk_widths, p), act, seed * (n_u + 1) + 1 + n_u);
  m.norm = Normalizer::identity(n_u, n_x + 1, n_y);
  return m;
}

// ---- MS core ----

MsGrads zero_grads(const MsDeepONet& m) {
  return MsGrads{zero_grads(m.branch), zero_grads(m.trunk)};
}

MatrixXd ms_core_forward(const MsDeepONet& m, const MatrixXd& Un, const MatrixXd& Zn,
                         MsTape* tape) {
  if (Un.cols() != Zn.cols())
    throw std::invalid_argument("ms_core_forward: batch size mismatch");
  MatrixXd b_out = ffn_forward(m.branch, Un, tape ? &tape->branch : nullptr);
  MatrixXd t_out = ffn_forward(m.trunk, Zn, tape ? &tape->trunk : nullptr);
  const int rows = m.N * m.n_y;
  MatrixXd Y(rows, Un.cols());
  for (int r = 0; r < rows; ++r)
    Y.row(r) = (b_out.middleRows(r * m.p, m.p).array() * t_out.array()).colwise().sum();
  if (tape) {
    tape->b_out = std::move(b_out);
    tape->t_out = std::move(t_out);
  }
  return Y;
}

MatrixXd ms_core_backward(const MsDeepONet& m, MsTape& tape, const MatrixXd& dY, MsGrads& g) {
  const int rows = m.N * m.n_y;
  if (dY.rows() != rows || dY.cols() != tape.t_out.cols())
    throw std::invalid_argument("ms_core_backward: dY shape mismatch");
  MatrixXd db(m.p * rows, dY.cols());
  MatrixXd dt = MatrixXd::Zero(m.p, dY.cols());
  for (int r = 0; r < rows; ++r) {
    db.middleRows(r * m.p, m.p) = tape.t_out.array().rowwise() * dY.row(r).array();
    dt.array() += tape.b_out.middleRows(r * m.p, m.p).array().rowwise() * dY.row(r).array();
  }
  ffn_backward(m.trunk, tape.trunk, dt, g.trunk);
  return ffn_backward(m.branch, tape.branch, db, g.branch);
}

// ---- standard core ----

StdGrads zero_grads(const StandardDeepONet& m) {
  StdGrads g;
  for (const auto& b : m.branches) g.branches.push_back(zero_grads(b));
  g.trunk = zero_grads(m.trunk);
  return g;
}

MatrixXd std_core_forward(const StandardDeepONet& m, const std::vector<MatrixXd>& U_ch,
                          const MatrixXd& Zn, StdTape* tape) {
  if (static_cast<int>(U_ch.size()) != m.n_u)
    throw std::invalid_argument("std_core_forward: wrong channel count");
  const auto B = Zn.cols();
  std::vector<MatrixXd> b_out(m.n_u);
  if (tape) tape->branches.resize(m.n_u);
  for (int ch = 0; ch < m.n_u; ++ch) {
    if (U_ch[ch].cols() != B)
      throw std::invalid_argument("std_core_forward: batch size mismatch");
    b_out[ch] = ffn_forward(m.branches[ch], U_ch[ch], tape ? &tape->branches[ch] : nullptr);
  }
  MatrixXd b_prod = b_out[0];
  for (int ch = 1; ch < m.n_u; ++ch) b_prod.array() *= b_out[ch].array();
  MatrixXd t_out = ffn_forward(m.trunk, Zn, tape ? &tape->trunk : nullptr);

  MatrixXd Y(m.n_y, B);
  for (int j = 0; j < m.n_y; ++j)
    Y.row(j) = (b_prod.middleRows(j * m.p, m.p).array() * t_out.array()).colwise().sum();
  if (tape) {
    tape->b_out = std::move(b_out);
    tape->b_prod = std::move(b_prod);
    tape->t_out = std::move(t_out);
  }
  return Y;
}

std::vector<MatrixXd> std_core_backward(const StandardDeepONet& m, StdTape& tape,
                                        const MatrixXd& dY, StdGrads& g) {
  const auto B = tape.t_out.cols();
  if (dY.rows() != m.n_y || dY.cols() != B)
    throw std::invalid_argument("std_core_backward: dY shape mismatch");

  MatrixXd d_prod(m.p * m.n_y, B);
  MatrixXd dt = MatrixXd::Zero(m.p, B);
  for (int j = 0; j < m.n_y; ++j) {
    d_prod.middleRows(j * m.p, m.p) = tape.t_out.array().rowwise() * dY.row(j).array();
    dt.array() += tape.b_prod.middleRows(j * m.p, m.p).array().rowwise() * dY.row(j).array();
  }
  ffn_backward(m.trunk, tape.trunk, dt, g.trunk);

  // Leave-one-out channel products via prefix/suffix scans; avoids dividing
  // by coefficients that may be zero.
  std::vector<MatrixXd> prefix(m.n_u + 1), suffix(m.n_u + 1);
  prefix[0] = MatrixXd::Ones(m.p * m.n_y, B);
  for (int ch = 0; ch < m.n_u; ++ch)
    prefix[ch + 1] = prefix[ch].cwiseProduct(tape.b_out[ch]);
  suffix[m.n_u] = MatrixXd::Ones(m.p * m.n_y, B);
  for (int ch = m.n_u - 1; ch >= 0; --ch)
    suffix[ch] = suffix[ch + 1].cwiseProduct(tape.b_out[ch]);

  std::vector<MatrixXd> dU(m.n_u);
  for (int ch = 0; ch < m.n_u; ++ch) {
    MatrixXd d_ch = d_prod.cwiseProduct(prefix[ch]).cwiseProduct(suffix[ch + 1]);
    dU[ch] = ffn_backward(m.branches[ch], tape.branches[ch], d_ch, g.branches[ch]);
  }
  return dU;
}

// ---- flat parameter plumbing ----

long ms_param_count(const MsDeepONet& m) { return m.param_count(); }

VectorXd ms_get_params(const MsDeepONet& m) {
  VectorXd v(m.param_count());
  pack_params(m.branch, v.data());
  pack_params(m.trunk, v.data() + m.branch.param_count());
  return v;
}

void ms_set_params(MsDeepONet& m, const VectorXd& v) {
  if (v.size() != m.param_count()) throw std::invalid_argument("ms_set_params: size mismatch");
  unpack_params(m.branch, v.data());
  unpack_params(m.trunk, v.data() + m.branch.param_count());
}

VectorXd ms_flat_grads(const MsDeepONet& m, const MsGrads& g) {
  VectorXd v(m.param_count());
  pack_grads(g.branch, v.data());
  pack_grads(g.trunk, v.data() + m.branch.param_count());
  return v;
}

long std_param_count(const StandardDeepONet& m) { return m.param_count(); }

VectorXd std_get_params(const StandardDeepONet& m) {
  VectorXd v(m.param_count());
  double* dst = v.data();
  for (const auto& b : m.branches) {
    pack_params(b, dst);
    dst += b.param_count();
  }
  pack_params(m.trunk, dst);
  return v;
}

void std_set_params(StandardDeepONet& m, const VectorXd& v) {
  if (v.size() != m.param_count()) throw std::invalid_argument("std_set_params: size mismatch");
  const double* src = v.data();
  for (auto& b : m.branches) {
    unpack_params(b, src);
    src += b.param_count();
  }
  unpack_params(m.trunk, src);
}

VectorXd std_flat_grads(const StandardDeepONet& m, const StdGrads& g) {
  VectorXd v(m.param_count());
  double* dst = v.data();
  for (int ch = 0; ch < m.n_u; ++ch) {
    pack_grads(g.branches[ch], dst);
    dst += m.branches[ch].param_count();
  }
  pack_grads(g.trunk, dst);
  return v;
}

// ---- raw-unit predictors ----

VectorXd MsPredictor::predict(const VectorXd& u, const VectorXd& z) const {
  return ms_forward(model_, u, z);
}

VectorXd MsPredictor::predict_vjp(const VectorXd& u, const VectorXd& z, const VectorXd& w,
                                  VectorXd& y) const {
  const auto& m = model_;
  MatrixXd Un = m.norm.normalize_u(u);
  MatrixXd Zn = m.norm.normalize_z(z);
  MsTape tape;
  MatrixXd Yn = ms_core_forward(m, Un, Zn, &tape);
  y = as_vector(m.norm.denormalize_y(Yn));
  // Chain rule through the output/input affine maps: scale the upstream by
  // the output scales, scale the returned gradient by 1/input scales.
  MatrixXd wn(m.N * m.n_y, 1);
  for (int r = 0; r < wn.rows(); ++r) wn(r, 0) = w(r) * m.norm.y_scale(r % m.n_y);
  MsGrads g = zero_grads(m);
  MatrixXd dUn = ms_core_backward(m, tape, wn, g);
  VectorXd du(m.N * m.n_u);
  for (int r = 0; r < du.size(); ++r) du(r) = dUn(r, 0) / m.norm.u_scale(r % m.n_u);
  return du;
}

namespace {

// Assembles the replicated branch windows and per-step trunk batch used to
// predict all N steps of the standard layout at once.
void std_batches(const StandardDeepONet& m, const VectorXd& u, const VectorXd& x0,
                 std::vector<MatrixXd>& U_ch, MatrixXd& Zn) {
  if (u.size() != m.N * m.n_u) throw std::invalid_argument("std predict: window size mismatch");
  if (x0.size() != m.n_x) throw std::invalid_argument("std predict: state size mismatch");
  U_ch.assign(m.n_u, MatrixXd(m.N, m.N));
  for (int ch = 0; ch < m.n_u; ++ch) {
    VectorXd win(m.N);
    for (int k = 0; k < m.N; ++k) win(k) = u(k * m.n_u + ch);
    const double sc = m.norm.u_scale(ch), sh = m.norm.u_shift(ch);
    win = (win.array() - sh) / sc;
    U_ch[ch] = win.replicate(1, m.N);
  }
  MatrixXd Z(m.n_x + 1, m.N);
  for (int j = 0; j < m.N; ++j) {
    Z.col(j).head(m.n_x) = x0;
    Z(m.n_x, j) = (j + 1) * m.Ts;
  }
  Zn = m.norm.normalize_z(Z);
}

VectorXd std_stack_steps(const StandardDeepONet& m, const MatrixXd& Yn) {
  MatrixXd Y = m.norm.denormalize_y(Yn);  // n_y x N
  VectorXd out(m.N * m.n_y);
  for (int j = 0; j < m.N; ++j) out.segment(j * m.n_y, m.n_y) = Y.col(j);
  return out;
}

}  // namespace

VectorXd StdPredictor::predict(const VectorXd& u, const VectorXd& z) const {
  std::vector<MatrixXd> U_ch;
  MatrixXd Zn;
  std_batches(model_, u, z, U_ch, Zn);
  return std_stack_steps(model_, std_core_forward(model_, U_ch, Zn));
}

VectorXd StdPredictor::predict_vjp(const VectorXd& u, const VectorXd& z, const VectorXd& w,
                                   VectorXd& y) const {
  const auto& m = model_;
  std::vector<MatrixXd> U_ch;
  MatrixXd Zn;
  std_batches(m, u, z, U_ch, Zn);
  StdTape tape;
  MatrixXd Yn = std_core_forward(m, U_ch, Zn, &tape);
  y = std_stack_steps(m, Yn);

  MatrixXd dYn(m.n_y, m.N);
  for (int j = 0; j < m.N; ++j)
    for (int q = 0; q < m.n_y; ++q) dYn(q, j) = w(j * m.n_y + q) * m.norm.y_scale(q);
  StdGrads g = zero_grads(m);
  std::vector<MatrixXd> dU = std_core_backward(m, tape, dYn, g);
  // Each batch column saw the same physical window, so window gradients sum
  // over columns; then undo the input scaling and re-interleave channels.
  VectorXd du(m.N * m.n_u);
  for (int ch = 0; ch < m.n_u; ++ch) {
    VectorXd dwin = dU[ch].rowwise().sum() / m.norm.u_scale(ch);
    for (int k = 0; k < m.N; ++k) du(k * m.n_u + ch) = dwin(k);
  }
  return du;
}

VectorXd ms_forward(const MsDeepONet& m, const VectorXd& u, const VectorXd& z) {
  if (u.size() != m.N * m.n_u || z.size() != m.n_z)
    throw std::invalid_argument("ms_forward: input size mismatch");
  MatrixXd Yn = ms_core_forward(m, m.norm.normalize_u(u), m.norm.normalize_z(z));
  return as_vector(m.norm.denormalize_y(Yn));
}

VectorXd std_forward(const StandardDeepONet& m, const VectorXd& u, const VectorXd& x0) {
  return StdPredictor(m).predict(u, x0);
}

double std_eval_at(const StandardDeepONet& m, const std::vector<VectorXd>& windows,
                   const VectorXd& z_trunk, int out_channel) {
  std::vector<MatrixXd> U_ch;
  for (const auto& w : windows) U_ch.push_back(w);
  MatrixXd Y = std_core_forward(m, U_ch, z_trunk);
  return Y(out_channel, 0);
}

// ---- linear-in-features forms ----

BasisForm extract_basis(const MsDeepONet& m) {
  const MatrixXd& Wb = m.branch.W.back();  // p*N*n_y x n_b
  const VectorXd& xb = m.branch.b.back();
  const MatrixXd& Wt = m.trunk.W.back();  // p x n_t
  const VectorXd& zt = m.trunk.b.back();
  const int n_b = static_cast<int>(Wb.cols());
  const int n_t = static_cast<int>(Wt.cols());
  const int rows = m.N * m.n_y;

  BasisForm f;
  f.n_b = n_b;
  f.n_t = n_t;
  f.theta = MatrixXd(rows, n_b * n_t + n_b + n_t + 1);
  for (int r = 0; r < rows; ++r) {
    const MatrixXd Wr = Wb.middleRows(r * m.p, m.p);       // p x n_b
    const VectorXd xr = xb.segment(r * m.p, m.p);          // p
    const MatrixXd cross = Wr.transpose() * Wt;            // n_b x n_t
    const double sy = m.norm.y_scale(r % m.n_y);
    for (int a = 0; a < n_b; ++a)
      for (int c = 0; c < n_t; ++c) f.theta(r, a * n_t + c) = sy * cross(a, c);
    f.theta.row(r).segment(n_b * n_t, n_b) = sy * (zt.transpose() * Wr);
    f.theta.row(r).segment(n_b * n_t + n_b, n_t) = sy * (xr.transpose() * Wt);
    // The constant feature also absorbs the output shift.
    f.theta(r, n_b * n_t + n_b + n_t) = sy * xr.dot(zt) + m.norm.y_shift(r % m.n_y);
  }
  return f;
}

VectorXd joint_features(const MsDeepONet& m, const VectorXd& u, const VectorXd& z) {
  const VectorXd pb = as_vector(hidden_features(m.branch, m.norm.normalize_u(u)));
  const VectorXd pt = as_vector(hidden_features(m.trunk, m.norm.normalize_z(z)));
  const int n_b = static_cast<int>(pb.size()), n_t = static_cast<int>(pt.size());
  VectorXd phi(n_b * n_t + n_b + n_t + 1);
  for (int a = 0; a < n_b; ++a)
    for (int c = 0; c < n_t; ++c) phi(a * n_t + c) = pb(a) * pt(c);
  phi.segment(n_b * n_t, n_b) = pb;
  phi.segment(n_b * n_t + n_b, n_t) = pt;
  phi(n_b * n_t + n_b + n_t) = 1.0;
  return phi;
}

MatrixXd conditioned_theta(const MsDeepONet& m, const VectorXd& z) {
  const MatrixXd& Wb = m.branch.W.back();
  const VectorXd& xb = m.branch.b.back();
  const VectorXd pt = as_vector(hidden_features(m.trunk, m.norm.normalize_z(z)));
  const VectorXd t = m.trunk.W.back() * pt + m.trunk.b.back();  // p
  const int n_b = static_cast<int>(Wb.cols());
  const int rows = m.N * m.n_y;

  MatrixXd theta(rows, n_b + 1);
  for (int r = 0; r < rows; ++r) {
    const double sy = m.norm.y_scale(r % m.n_y);
    theta.row(r).head(n_b) = sy * (t.transpose() * Wb.middleRows(r * m.p, m.p));
    theta(r, n_b) = sy * xb.segment(r * m.p, m.p).dot(t) + m.norm.y_shift(r % m.n_y);
  }
  return theta;
}

VectorXd branch_features(const MsDeepONet& m, const VectorXd& u) {
  return as_vector(hidden_features(m.branch, m.norm.normalize_u(u)));
}

// ---- stacked-net embedding ----

StandardDeepONet embed_stacked(const StackedSisoNet& s) {
  const int n = static_cast<int>(s.c.rows());
  const int p = static_cast<int>(s.c.cols());
  const int m_sensors = static_cast<int>(s.xi.at(0).cols());
  const int d = static_cast<int>(s.w.cols());
  if (static_cast<int>(s.xi.size()) != p || s.theta.rows() != n || s.theta.cols() != p ||
      s.w.rows() != p || s.zeta.size() != p)
    throw std::invalid_argument("embed_stacked: inconsistent stacked net");

  StandardDeepONet net;
  net.p = p;
  net.N = m_sensors;
  net.n_u = 1;
  net.n_y = 1;
  net.n_x = d - 1;  // trunk input dim is n_x + 1
  net.Ts = 1.0;
  net.norm = Normalizer::identity(1, d, 1);

  // Trunk: the stacked trunk neurons become the single hidden layer; the
  // read-out is the identity so t_k = tanh(w_k . z + zeta_k).
  Ffn trunk;
  trunk.act = Activation::Tanh;
  trunk.W = {s.w, MatrixXd::Identity(p, p)};
  trunk.b = {s.zeta, VectorXd::Zero(p)};
  net.trunk = std::move(trunk);

  // Branch: all n*p stacked branch neurons side by side (group k occupies
  // rows k*n .. k*n+n-1); the read-out routes group k to output k with the
  // stacked combination weights, zero elsewhere.
  MatrixXd W0(n * p, m_sensors);
  VectorXd b0(n * p);
  MatrixXd W1 = MatrixXd::Zero(p, n * p);
  for (int k = 0; k < p; ++k) {
    W0.middleRows(k * n, n) = s.xi[k];
    b0.segment(k * n, n) = s.theta.col(k);
    for (int i = 0; i < n; ++i) W1(k, k * n + i) = s.c(i, k);
  }
  Ffn branch;
  branch.act = Activation::Tanh;
  branch.W = {std::move(W0), std::move(W1)};
  branch.b = {std::move(b0), VectorXd::Zero(p)};
  net.branches = {std::move(branch)};
  return net;
}

}  // namespace donmpc
