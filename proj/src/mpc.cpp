#include "donmpc/mpc.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace donmpc {

std::pair<MatrixXd, MatrixXd> build_cost(const MatrixXd& Q, const MatrixXd& P, const MatrixXd& R,
                                         int N) {
  if (N < 1) throw std::invalid_argument("build_cost: N must be positive");
  if (Q.rows() != Q.cols() || P.rows() != P.cols() || R.rows() != R.cols() ||
      Q.rows() != P.rows())
    throw std::invalid_argument("build_cost: weights must be square, Q and P same size");
  const int n_y = static_cast<int>(Q.rows());
  const int n_u = static_cast<int>(R.rows());
  MatrixXd Omega = MatrixXd::Zero(N * n_y, N * n_y);
  for (int j = 0; j < N - 1; ++j) Omega.block(j * n_y, j * n_y, n_y, n_y) = Q;
  Omega.block((N - 1) * n_y, (N - 1) * n_y, n_y, n_y) = P;  // terminal block
  MatrixXd Psi = MatrixXd::Zero(N * n_u, N * n_u);
  for (int j = 0; j < N; ++j) Psi.block(j * n_u, j * n_u, n_u, n_u) = R;
  return {Omega, Psi};
}

MpcProblem make_problem(const MatrixXd& Q, const MatrixXd& P, const MatrixXd& R, int N,
                        std::optional<Box> u_box, std::optional<Box> y_box) {
  MpcProblem prob;
  prob.N = N;
  prob.n_y = static_cast<int>(Q.rows());
  prob.n_u = static_cast<int>(R.rows());
  std::tie(prob.Omega, prob.Psi) = build_cost(Q, P, R, N);
  prob.u_box = std::move(u_box);
  prob.y_box = std::move(y_box);
  return prob;
}

namespace {

VectorXd input_increments(const MpcProblem& prob, const VectorXd& useq, const VectorXd& u_prev) {
  VectorXd du = useq;
  du.head(prob.n_u) -= u_prev;
  for (int j = prob.N - 1; j >= 1; --j)
    du.segment(j * prob.n_u, prob.n_u) -= useq.segment((j - 1) * prob.n_u, prob.n_u);
  return du;
}

// Soft output-box penalty value and its gradient wrt y: quadratic in the
// per-channel violation.
double y_penalty(const MpcProblem& prob, const VectorXd& y, VectorXd* dpen) {
  if (!prob.y_box) {
    if (dpen) dpen->setZero(y.size());
    return 0.0;
  }
  const Box& box = *prob.y_box;
  double pen = 0.0;
  if (dpen) dpen->setZero(y.size());
  for (int i = 0; i < y.size(); ++i) {
    const int ch = i % prob.n_y;
    const double over = std::max(0.0, y(i) - box.hi(ch));
    const double under = std::max(0.0, box.lo(ch) - y(i));
    pen += over * over + under * under;
    if (dpen) (*dpen)(i) = 2.0 * (over - under);
  }
  if (dpen) *dpen *= prob.settings.y_penalty;
  return prob.settings.y_penalty * pen;
}

void check_shapes(const MultiStepPredictor& pred, const MpcProblem& prob, const VectorXd& useq,
                  const VectorXd& rseq, const VectorXd& u_prev) {
  if (prob.N != pred.horizon() || prob.n_u != pred.n_u() || prob.n_y != pred.n_y())
    throw std::invalid_argument("mpc: problem and predictor disagree");
  if (useq.size() != prob.N * prob.n_u || rseq.size() != prob.N * prob.n_y ||
      u_prev.size() != prob.n_u)
    throw std::invalid_argument("mpc: vector size mismatch");
}

VectorXd project(const MpcProblem& prob, VectorXd useq) {
  if (!prob.u_box) return useq;
  for (int j = 0; j < prob.N; ++j)
    useq.segment(j * prob.n_u, prob.n_u) =
        prob.u_box->clamp(useq.segment(j * prob.n_u, prob.n_u));
  return useq;
}

}  // namespace

double mpc_cost(const MultiStepPredictor& pred, const MpcProblem& prob, const VectorXd& useq,
                const VectorXd& z, const VectorXd& rseq, const VectorXd& u_prev,
                VectorXd* y_out) {
  check_shapes(pred, prob, useq, rseq, u_prev);
  VectorXd y = pred.predict(useq, z);
  const VectorXd e = y - rseq;
  const VectorXd du = input_increments(prob, useq, u_prev);
  const double J = e.dot(prob.Omega * e) + du.dot(prob.Psi * du) + y_penalty(prob, y, nullptr);
  if (y_out) *y_out = std::move(y);
  return J;
}

MpcCostEval mpc_cost_and_grad(const MultiStepPredictor& pred, const MpcProblem& prob,
                              const VectorXd& useq, const VectorXd& z, const VectorXd& rseq,
                              const VectorXd& u_prev) {
  check_shapes(pred, prob, useq, rseq, u_prev);
  MpcCostEval ev;
  // Upstream for the prediction part: d/dy of e'Omega e plus the penalty.
  // The predictor VJP maps it back to the input sequence in one pass.
  VectorXd y = pred.predict(useq, z);
  const VectorXd e = y - rseq;
  VectorXd dpen;
  const double pen = y_penalty(prob, y, &dpen);
  VectorXd w = 2.0 * (prob.Omega * e) + dpen;
  VectorXd y2;
  ev.grad = pred.predict_vjp(useq, z, w, y2);

  const VectorXd du = input_increments(prob, useq, u_prev);
  const VectorXd psi_du = prob.Psi * du;
  // d(du' Psi du)/du_j = 2 (psi_du_j - psi_du_{j+1}) from the two increments
  // each u_j enters.
  for (int j = 0; j < prob.N; ++j) {
    ev.grad.segment(j * prob.n_u, prob.n_u) += 2.0 * psi_du.segment(j * prob.n_u, prob.n_u);
    if (j + 1 < prob.N)
      ev.grad.segment(j * prob.n_u, prob.n_u) -= 2.0 * psi_du.segment((j + 1) * prob.n_u, prob.n_u);
  }
  ev.J = e.dot(prob.Omega * e) + du.dot(psi_du) + pen;
  ev.y = std::move(y);
  return ev;
}

MpcSolution solve_mpc(const MultiStepPredictor& pred, const MpcProblem& prob, const VectorXd& z,
                      const VectorXd& rseq, const VectorXd& u_prev, const VectorXd& warm) {
  const auto t0 = std::chrono::steady_clock::now();
  const SolverSettings& st = prob.settings;

  VectorXd x = project(prob, warm);
  VectorXd x_prev = x;
  VectorXd v = x;  // extrapolated point
  double t_mom = 1.0;
  double L = st.initial_curvature;

  MpcSolution best;
  best.useq = x;
  best.cost = mpc_cost(pred, prob, x, z, rseq, u_prev, &best.y);
  double J_x = best.cost;

  int iter = 0;
  for (; iter < st.max_iters; ++iter) {
    MpcCostEval ev = mpc_cost_and_grad(pred, prob, v, z, rseq, u_prev);

    // Backtrack on the local curvature estimate until the quadratic upper
    // bound at v holds for the projected step.
    VectorXd xn;
    double Jn = 0.0;
    bool ok = false;
    for (int bt = 0; bt < st.max_backtracks; ++bt) {
      xn = project(prob, v - ev.grad / L);
      Jn = mpc_cost(pred, prob, xn, z, rseq, u_prev);
      const VectorXd dx = xn - v;
      if (Jn <= ev.J + ev.grad.dot(dx) + 0.5 * L * dx.squaredNorm() + 1e-15) {
        ok = true;
        break;
      }
      L *= 2.0;
    }
    if (!ok) break;  // curvature blew up; keep the best iterate found

    if (Jn < best.cost) {
      best.cost = Jn;
      best.useq = xn;
    }

    const double step_norm = (xn - x).norm();
    if (Jn > J_x + 1e-15) {
      // Momentum overshoot: drop the extrapolation and restart from here.
      t_mom = 1.0;
      v = xn;
    } else {
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_mom * t_mom));
      v = project(prob, xn + ((t_mom - 1.0) / t_next) * (xn - x));
      t_mom = t_next;
    }
    x_prev = std::move(x);
    x = xn;
    J_x = Jn;
    L = std::max(st.initial_curvature * 1e-3, L * 0.9);  // re-probe larger steps

    if (step_norm <= st.step_tol * (1.0 + x.norm())) {
      ++iter;
      break;
    }
  }

  best.cost = mpc_cost(pred, prob, best.useq, z, rseq, u_prev, &best.y);
  best.iters = iter;
  best.solve_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return best;
}

double ame(const MatrixXd& y, const MatrixXd& r) {
  if (y.rows() != r.rows() || y.cols() != r.cols())
    throw std::invalid_argument("ame: shape mismatch");
  if (y.size() == 0) throw std::invalid_argument("ame: empty");
  return (y - r).cwiseAbs().mean();
}

ClosedLoopLog run_closed_loop(const SystemSpec& plant, const MultiStepPredictor& pred,
                              const MpcProblem& prob, const VectorXd& x0,
                              const std::function<VectorXd(double)>& reference, int steps,
                              const VectorXd& u_init, const IntegratorConfig& cfg) {
  if (steps < 1) throw std::invalid_argument("run_closed_loop: steps must be >= 1");
  if (plant.n_u != prob.n_u || plant.n_y != prob.n_y)
    throw std::invalid_argument("run_closed_loop: plant and problem disagree");
  const double Ts = pred.step_time();

  ClosedLoopLog log;
  log.times = VectorXd::LinSpaced(steps + 1, 0.0, steps * Ts);
  log.states = MatrixXd(plant.n_x, steps + 1);
  log.inputs = MatrixXd(plant.n_u, steps + 1);
  log.outputs = MatrixXd(plant.n_y, steps + 1);
  log.refs = MatrixXd(plant.n_y, steps + 1);
  log.solve_s = VectorXd(steps);
  log.iters = VectorXd(steps);
  log.cost = VectorXd(steps);

  VectorXd x = x0;
  VectorXd u_prev = u_init;
  // Warm start: previous solution shifted one step, last block repeated.
  VectorXd warm = u_init.replicate(prob.N, 1);

  for (int k = 0; k < steps; ++k) {
    const VectorXd r = reference(k * Ts);
    const VectorXd rseq = r.replicate(prob.N, 1);
    MpcSolution sol = solve_mpc(pred, prob, x, rseq, u_prev, warm);
    const VectorXd u = sol.useq.head(plant.n_u);

    log.states.col(k) = x;
    log.outputs.col(k) = plant.output(x);
    log.refs.col(k) = r;
    log.inputs.col(k) = u;
    log.solve_s(k) = sol.solve_s;
    log.iters(k) = sol.iters;
    log.cost(k) = sol.cost;

    x = integrate_segment(plant, x, u, Ts, cfg);
    u_prev = u;
    warm.head((prob.N - 1) * prob.n_u) = sol.useq.tail((prob.N - 1) * prob.n_u);
    warm.tail(prob.n_u) = sol.useq.tail(prob.n_u);
  }
  log.states.col(steps) = x;
  log.outputs.col(steps) = plant.output(x);
  log.refs.col(steps) = reference(steps * Ts);
  log.inputs.col(steps) = log.inputs.col(steps - 1);
  log.ame = ame(log.outputs.rightCols(steps), log.refs.rightCols(steps));
  return log;
}

}  // namespace donmpc
