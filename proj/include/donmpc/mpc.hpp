#pragma once

// Reference tracking over the prediction horizon of a MultiStepPredictor:
//   J(useq) = (y - rseq)' Omega (y - rseq) + du' Psi du
// with du the step-to-step input increments (first increment against the
// previously applied input) and Omega/Psi block diagonal from per-step
// weights. Input boxes are enforced exactly by projection; output boxes are
// soft quadratic penalties. Solved by projected gradient descent with
// backtracking and momentum restarts.

#include "donmpc/dynamics.hpp"
#include "donmpc/models.hpp"

#include <functional>
#include <optional>

namespace donmpc {

// Omega = blkdiag(Q, ..., Q, P) (N blocks), Psi = blkdiag(R, ..., R).
std::pair<MatrixXd, MatrixXd> build_cost(const MatrixXd& Q, const MatrixXd& P, const MatrixXd& R,
                                         int N);

struct SolverSettings {
  int max_iters = 300;
  // Converged when the projected step shrinks below tol * (1 + |useq|).
  double step_tol = 1e-9;
  double initial_curvature = 1.0;  // starting Lipschitz estimate
  int max_backtracks = 60;
  double y_penalty = 1e4;  // weight of the soft output-box penalty
};

struct MpcProblem {
  int N = 0;
  int n_u = 0;
  int n_y = 0;
  MatrixXd Omega;  // N*n_y square
  MatrixXd Psi;    // N*n_u square
  std::optional<Box> u_box;  // per-step bounds, dimension n_u
  std::optional<Box> y_box;  // soft per-step output bounds, dimension n_y
  SolverSettings settings;
};

MpcProblem make_problem(const MatrixXd& Q, const MatrixXd& P, const MatrixXd& R, int N,
                        std::optional<Box> u_box = std::nullopt,
                        std::optional<Box> y_box = std::nullopt);

struct MpcCostEval {
  double J = 0.0;
  VectorXd grad;  // dJ/duseq
  VectorXd y;     // predicted horizon outputs
};

double mpc_cost(const MultiStepPredictor& pred, const MpcProblem& prob, const VectorXd& useq,
                const VectorXd& z, const VectorXd& rseq, const VectorXd& u_prev,
                VectorXd* y_out = nullptr);
MpcCostEval mpc_cost_and_grad(const MultiStepPredictor& pred, const MpcProblem& prob,
                              const VectorXd& useq, const VectorXd& z, const VectorXd& rseq,
                              const VectorXd& u_prev);

struct MpcSolution {
  VectorXd useq;   // minimizer found (N*n_u)
  VectorXd y;      // prediction at the minimizer
  double cost = 0.0;
  int iters = 0;
  double solve_s = 0.0;
};

// warm is clamped to the input box and used as the starting iterate. The
// best iterate seen is returned (the solver is monotone in the best value).
MpcSolution solve_mpc(const MultiStepPredictor& pred, const MpcProblem& prob, const VectorXd& z,
                      const VectorXd& rseq, const VectorXd& u_prev, const VectorXd& warm);

struct ClosedLoopLog {
  VectorXd times;    // K+1 sample instants
  MatrixXd states;   // n_x x (K+1)
  MatrixXd inputs;   // n_u x (K+1), last column repeats
  MatrixXd outputs;  // n_y x (K+1)
  MatrixXd refs;     // n_y x (K+1)
  VectorXd solve_s;  // K
  VectorXd iters;    // K
  VectorXd cost;     // K
  double ame = 0.0;  // mean |y - r| over channels and steps 1..K
};

// Receding-horizon run against the true plant. reference maps time to the
// current set-point (held constant across the horizon); the condition fed to
// the predictor is the plant state. u_init seeds both the previous-input
// difference at k = 0 and the first warm start.
ClosedLoopLog run_closed_loop(const SystemSpec& plant, const MultiStepPredictor& pred,
                              const MpcProblem& prob, const VectorXd& x0,
                              const std::function<VectorXd(double)>& reference, int steps,
                              const VectorXd& u_init, const IntegratorConfig& cfg = {});

// Mean absolute tracking error over all entries.
double ame(const MatrixXd& y, const MatrixXd& r);

}  // namespace donmpc
