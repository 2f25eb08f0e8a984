#include "donmpc/models.hpp"

#include <doctest.h>

#include <cmath>

#include "test_util.hpp"

using namespace donmpc;
using testutil::fd_grad;
using testutil::rel_err;

namespace {

VectorXd random_vec(int n, UniformRng& rng, double lo = -1.5, double hi = 1.5) {
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.next(lo, hi);
  return v;
}

// Naive reference for the MS product layer: coefficient for output row r and
// basis index i sits at branch output r*p + i; y_r = sum_i b[r*p+i] * t[i].
VectorXd ms_naive(const MsDeepONet& m, const VectorXd& u, const VectorXd& z) {
  VectorXd un = m.norm.normalize_u(u).col(0);
  VectorXd zn = m.norm.normalize_z(z).col(0);
  VectorXd b = ffn_forward(m.branch, un).col(0);
  VectorXd t = ffn_forward(m.trunk, zn).col(0);
  VectorXd y(m.N * m.n_y);
  for (int r = 0; r < m.N * m.n_y; ++r) {
    double acc = 0.0;
    for (int i = 0; i < m.p; ++i) acc += b(r * m.p + i) * t(i);
    y(r) = acc * m.norm.y_scale(r % m.n_y) + m.norm.y_shift(r % m.n_y);
  }
  return y;
}

Normalizer nontrivial_norm(int n_u, int n_z, int n_y, UniformRng& rng) {
  Normalizer n = Normalizer::identity(n_u, n_z, n_y);
  n.u_shift = random_vec(n_u, rng, -0.5, 0.5);
  n.u_scale = random_vec(n_u, rng, 0.5, 2.0);
  n.z_shift = random_vec(n_z, rng, -0.5, 0.5);
  n.z_scale = random_vec(n_z, rng, 0.5, 2.0);
  n.y_shift = random_vec(n_y, rng, -0.5, 0.5);
  n.y_scale = random_vec(n_y, rng, 0.5, 2.0);
  return n;
}

}  // namespace

TEST_CASE("ms forward equals the naive per-entry product sum") {
  UniformRng rng(31);
  MsDeepONet m = make_ms_deeponet(3, 2, 2, 4, 0.1, 5, {8, 7}, {6}, Activation::Tanh, 2);
  m.norm = nontrivial_norm(2, 4, 2, rng);
  for (int trial = 0; trial < 20; ++trial) {
    VectorXd u = random_vec(6, rng), z = random_vec(4, rng);
    VectorXd y = ms_forward(m, u, z);
    CHECK(rel_err(y, ms_naive(m, u, z)) < 1e-14);
  }
  // Batched core agrees with per-column evaluation in normalized space.
  MatrixXd U(6, 5), Z(4, 5);
  for (int c = 0; c < 5; ++c) {
    U.col(c) = random_vec(6, rng);
    Z.col(c) = random_vec(4, rng);
  }
  MatrixXd Y = ms_core_forward(m, U, Z);
  for (int c = 0; c < 5; ++c) {
    MatrixXd y1 = ms_core_forward(m, U.col(c), Z.col(c));
    CHECK(testutil::max_abs_diff(Y.col(c), y1) < 1e-14);
  }
}

TEST_CASE("std forward equals the naive channel-product sum") {
  UniformRng rng(37);
  const int N = 4, n_u = 2, n_y = 3, n_x = 3, p = 5;
  StandardDeepONet m =
      make_std_deeponet(N, n_u, n_y, n_x, 0.5, p, {9}, {7, 6}, Activation::Tanh, 4);
  m.norm = nontrivial_norm(n_u, n_x + 1, n_y, rng);

  VectorXd u = random_vec(N * n_u, rng), x0 = random_vec(n_x, rng);
  VectorXd y = std_forward(m, u, x0);
  CHECK(y.size() == N * n_y);

  // Naive: per step j evaluate each branch on its channel window, multiply
  // coefficients across channels, contract with the trunk at (x0, (j+1)Ts).
  for (int j = 0; j < N; ++j) {
    VectorXd zt(n_x + 1);
    zt << x0, (j + 1) * 0.5;
    VectorXd ztn = m.norm.normalize_z(zt).col(0);
    VectorXd t = ffn_forward(m.trunk, ztn).col(0);
    std::vector<VectorXd> b(n_u);
    for (int ch = 0; ch < n_u; ++ch) {
      VectorXd win(N);
      for (int k = 0; k < N; ++k)
        win(k) = (u(k * n_u + ch) - m.norm.u_shift(ch)) / m.norm.u_scale(ch);
      b[ch] = ffn_forward(m.branches[ch], win).col(0);
    }
    for (int q = 0; q < n_y; ++q) {
      double acc = 0.0;
      for (int i = 0; i < p; ++i) {
        double coeff = 1.0;
        for (int ch = 0; ch < n_u; ++ch) coeff *= b[ch](q * p + i);
        acc += coeff * t(i);
      }
      const double expect = acc * m.norm.y_scale(q) + m.norm.y_shift(q);
      CHECK(y(j * n_y + q) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("ms core gradients match finite differences") {
  UniformRng rng(41);
  MsDeepONet m = make_ms_deeponet(3, 1, 2, 2, 0.1, 4, {6, 5}, {5}, Activation::Tanh, 8);
  const int B = 4;
  MatrixXd U(3, B), Z(2, B), C(6, B);
  for (int i = 0; i < U.size(); ++i) U.data()[i] = rng.next(-1.0, 1.0);
  for (int i = 0; i < Z.size(); ++i) Z.data()[i] = rng.next(-1.0, 1.0);
  for (int i = 0; i < C.size(); ++i) C.data()[i] = rng.next(-1.0, 1.0);

  MsTape tape;
  ms_core_forward(m, U, Z, &tape);
  MsGrads g = zero_grads(m);
  MatrixXd dU = ms_core_backward(m, tape, C, g);
  VectorXd analytic = ms_flat_grads(m, g);

  MsDeepONet probe = m;
  auto loss = [&](const VectorXd& pvec) {
    ms_set_params(probe, pvec);
    return (C.array() * ms_core_forward(probe, U, Z).array()).sum();
  };
  CHECK(rel_err(analytic, fd_grad(loss, ms_get_params(m))) < 1e-6);

  auto loss_u = [&](const VectorXd& ucol) {
    MatrixXd Up = U;
    Up.col(1) = ucol;
    return (C.array() * ms_core_forward(m, Up, Z).array()).sum();
  };
  CHECK(rel_err(dU.col(1), fd_grad(loss_u, U.col(1))) < 1e-6);
}

TEST_CASE("std core gradients match finite differences") {
  UniformRng rng(43);
  const int N = 3, n_u = 2, n_y = 2, p = 4, B = 5;
  StandardDeepONet m = make_std_deeponet(N, n_u, n_y, 2, 0.2, p, {6}, {5}, Activation::Tanh, 3);
  std::vector<MatrixXd> U_ch(n_u, MatrixXd(N, B));
  MatrixXd Z(3, B), C(n_y, B);
  for (auto& u : U_ch)
    for (int i = 0; i < u.size(); ++i) u.data()[i] = rng.next(-1.0, 1.0);
  for (int i = 0; i < Z.size(); ++i) Z.data()[i] = rng.next(-1.0, 1.0);
  for (int i = 0; i < C.size(); ++i) C.data()[i] = rng.next(-1.0, 1.0);

  StdTape tape;
  std_core_forward(m, U_ch, Z, &tape);
  StdGrads g = zero_grads(m);
  std::vector<MatrixXd> dU = std_core_backward(m, tape, C, g);
  VectorXd analytic = std_flat_grads(m, g);

  StandardDeepONet probe = m;
  auto loss = [&](const VectorXd& pvec) {
    std_set_params(probe, pvec);
    return (C.array() * std_core_forward(probe, U_ch, Z).array()).sum();
  };
  CHECK(rel_err(analytic, fd_grad(loss, std_get_params(m))) < 1e-6);

  auto loss_u = [&](const VectorXd& ucol) {
    auto Up = U_ch;
    Up[1].col(2) = ucol;
    return (C.array() * std_core_forward(m, Up, Z).array()).sum();
  };
  CHECK(rel_err(dU[1].col(2), fd_grad(loss_u, U_ch[1].col(2))) < 1e-6);
}

TEST_CASE("predictor VJPs differentiate raw-unit predictions") {
  UniformRng rng(47);
  MsDeepONet mm = make_ms_deeponet(3, 2, 2, 3, 0.1, 4, {7}, {6}, Activation::Tanh, 5);
  mm.norm = nontrivial_norm(2, 3, 2, rng);
  MsPredictor mp(mm);
  VectorXd u = random_vec(6, rng), z = random_vec(3, rng), w = random_vec(6, rng);
  VectorXd y;
  VectorXd du = mp.predict_vjp(u, z, w, y);
  CHECK(rel_err(y, mp.predict(u, z)) < 1e-14);
  auto f_ms = [&](const VectorXd& uv) { return w.dot(mp.predict(uv, z)); };
  CHECK(rel_err(du, fd_grad(f_ms, u)) < 1e-6);

  StandardDeepONet ms =
      make_std_deeponet(3, 2, 2, 2, 0.4, 4, {6}, {5}, Activation::Tanh, 6);
  ms.norm = nontrivial_norm(2, 3, 2, rng);
  StdPredictor sp(ms);
  VectorXd zs = random_vec(2, rng);
  VectorXd ys;
  VectorXd dus = sp.predict_vjp(u, zs, w, ys);
  CHECK(rel_err(ys, sp.predict(u, zs)) < 1e-14);
  auto f_std = [&](const VectorXd& uv) { return w.dot(sp.predict(uv, zs)); };
  CHECK(rel_err(dus, fd_grad(f_std, u)) < 1e-6);
}

TEST_CASE("joint feature form reproduces the model exactly") {
  UniformRng rng(53);
  MsDeepONet m = make_ms_deeponet(2, 1, 2, 3, 0.1, 3, {5, 6}, {4, 7}, Activation::Tanh, 9);
  m.norm = nontrivial_norm(1, 3, 2, rng);
  BasisForm f = extract_basis(m);
  CHECK(f.n_b == 6);
  CHECK(f.n_t == 7);
  CHECK(f.theta.rows() == 4);
  CHECK(f.theta.cols() == 6 * 7 + 6 + 7 + 1);
  for (int trial = 0; trial < 25; ++trial) {
    VectorXd u = random_vec(2, rng), z = random_vec(3, rng);
    VectorXd via_basis = f.theta * joint_features(m, u, z);
    CHECK(rel_err(via_basis, ms_forward(m, u, z)) < 1e-13);
  }
}

TEST_CASE("condition-frozen coefficient form reproduces the model exactly") {
  UniformRng rng(59);
  MsDeepONet m = make_ms_deeponet(3, 2, 1, 2, 0.1, 4, {6}, {5, 5}, Activation::Tanh, 12);
  m.norm = nontrivial_norm(2, 2, 1, rng);
  for (int trial = 0; trial < 25; ++trial) {
    VectorXd u = random_vec(6, rng), z = random_vec(2, rng);
    MatrixXd theta_z = conditioned_theta(m, z);
    CHECK(theta_z.rows() == 3);
    VectorXd pb = branch_features(m, u);
    VectorXd aug(pb.size() + 1);
    aug << pb, 1.0;
    CHECK(rel_err(theta_z * aug, ms_forward(m, u, z)) < 1e-13);
  }
}

TEST_CASE("stacked single-hidden-layer net embeds exactly") {
  UniformRng rng(61);
  const int n = 3, p = 4, sensors = 5, d = 3;
  StackedSisoNet s;
  s.c = MatrixXd(n, p);
  s.theta = MatrixXd(n, p);
  s.w = MatrixXd(p, d);
  s.zeta = random_vec(p, rng);
  for (int i = 0; i < s.c.size(); ++i) s.c.data()[i] = rng.next(-1.0, 1.0);
  for (int i = 0; i < s.theta.size(); ++i) s.theta.data()[i] = rng.next(-1.0, 1.0);
  for (int i = 0; i < s.w.size(); ++i) s.w.data()[i] = rng.next(-1.0, 1.0);
  for (int k = 0; k < p; ++k) {
    MatrixXd xi(n, sensors);
    for (int i = 0; i < xi.size(); ++i) xi.data()[i] = rng.next(-1.0, 1.0);
    s.xi.push_back(xi);
  }

  StandardDeepONet net = embed_stacked(s);
  CHECK(net.N == sensors);
  CHECK(net.p == p);
  for (int trial = 0; trial < 10; ++trial) {
    VectorXd u = random_vec(sensors, rng), z = random_vec(d, rng);
    // Direct double-sum evaluation of the stacked form.
    double expect = 0.0;
    for (int k = 0; k < p; ++k) {
      const double trunk_k = std::tanh(s.w.row(k).dot(z) + s.zeta(k));
      for (int i = 0; i < n; ++i)
        expect += s.c(i, k) * std::tanh(s.xi[k].row(i).dot(u) + s.theta(i, k)) * trunk_k;
    }
    const double got = std_eval_at(net, {u}, z, 0);
    CHECK(got == doctest::Approx(expect).epsilon(1e-13));
  }
}

TEST_CASE("flat parameter vectors round-trip through both layouts") {
  MsDeepONet m = make_ms_deeponet(2, 1, 1, 2, 0.1, 3, {4}, {4}, Activation::Tanh, 7);
  VectorXd v = ms_get_params(m);
  CHECK(v.size() == m.param_count());
  MsDeepONet copy = make_ms_deeponet(2, 1, 1, 2, 0.1, 3, {4}, {4}, Activation::Tanh, 8);
  ms_set_params(copy, v);
  CHECK(ms_get_params(copy) == v);

  StandardDeepONet sm = make_std_deeponet(2, 2, 1, 2, 0.1, 3, {4}, {4}, Activation::Tanh, 7);
  VectorXd sv = std_get_params(sm);
  StandardDeepONet scopy = make_std_deeponet(2, 2, 1, 2, 0.1, 3, {4}, {4}, Activation::Tanh, 9);
  std_set_params(scopy, sv);
  CHECK(std_get_params(scopy) == sv);
}
