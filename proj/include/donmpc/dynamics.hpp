#pragma once

// Continuous-time benchmark plants, an adaptive RK45 integrator and
// zero-order-hold simulation. States/inputs/outputs are Eigen vectors;
// trajectories store samples column-wise.

#include <Eigen/Core>

#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

namespace donmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Per-channel interval constraint [lo, hi].
struct Box {
  VectorXd lo;
  VectorXd hi;

  Box() = default;
  Box(VectorXd lo_, VectorXd hi_);
  // Scalar bounds replicated over dim channels.
  Box(double lo_, double hi_, int dim);

  int dim() const { return static_cast<int>(lo.size()); }
  bool contains(const VectorXd& v, double tol = 0.0) const;
  VectorXd clamp(const VectorXd& v) const;
};

struct SystemSpec {
  std::string name;
  int n_x = 0;
  int n_u = 0;
  int n_y = 0;
  // dx/dt = rhs(x, u); may throw std::domain_error on invalid states.
  std::function<VectorXd(const VectorXd&, const VectorXd&)> rhs;
  std::function<VectorXd(const VectorXd&)> output;
  std::map<std::string, double> params;
  std::optional<Box> input_box;  // actuator range, when the plant has one
};

// Known names: "vdp", "quadtank", "cartpole". overrides replaces entries of
// the default parameter map; unknown keys are rejected.
SystemSpec make_system(const std::string& name,
                       const std::map<std::string, double>& overrides = {});

// Steady state of the quad-tank plant for a constant input, solved in closed
// form (upper tanks from their inflows, then lower tanks). Requires u > 0.
VectorXd quadtank_equilibrium(const SystemSpec& sys, const VectorXd& u);

struct IntegratorConfig {
  double rel_tol = 1e-6;
  double abs_tol = 1e-9;
  double initial_step = 0.0;  // 0 picks dt/16
  int max_steps = 100000;
};

struct IntegrationError : std::runtime_error {
  double t;  // time within the segment where integration failed
  IntegrationError(const std::string& msg, double t_) : std::runtime_error(msg), t(t_) {}
};

// Integrates dx/dt = rhs(x, u) over [0, dt] with u held constant, using the
// Dormand-Prince 5(4) pair with PI-free step control. Throws
// IntegrationError on step underflow or non-finite states.
VectorXd integrate_segment(const SystemSpec& sys, const VectorXd& x0, const VectorXd& u,
                           double dt, const IntegratorConfig& cfg = {});

// Sampled rollout. All matrices have one column per sample instant
// k = 0..K; inputs column k is the value held on [k*Ts, (k+1)*Ts), with the
// final column repeating the last held value so every matrix is K+1 wide.
struct Trajectory {
  VectorXd times;
  MatrixXd states;   // n_x x (K+1)
  MatrixXd inputs;   // n_u x (K+1)
  MatrixXd outputs;  // n_y x (K+1)

  int samples() const { return static_cast<int>(times.size()); }
};

// u_seq is n_u x K (one column per hold interval).
Trajectory simulate(const SystemSpec& sys, const VectorXd& x0, const MatrixXd& u_seq,
                    double Ts, const IntegratorConfig& cfg = {});

// Closed-loop variant: the controller maps (time, state) to the input held
// over the next interval. Inputs are clamped to the system's box if any.
Trajectory simulate_feedback(const SystemSpec& sys, const VectorXd& x0,
                             const std::function<VectorXd(double, const VectorXd&)>& controller,
                             int steps, double Ts, const IntegratorConfig& cfg = {});

// Wraps an angle to (-pi, pi].
double wrap_angle(double a);

// Energy-based swing-up for the cart-pole with an LQR catch near the upright
// position. Returns the scalar force for the state (x, theta, dx, dtheta)
// with theta = 0 upright.
struct SwingupGains {
  double k_energy = 18.0;   // energy pumping gain
  double k_pos = 1.2;       // cart recentering, position
  double k_vel = 2.2;       // cart recentering, velocity
  double catch_angle = 0.35;  // |wrapped theta| below which LQR takes over
  double catch_rate = 4.0;    // |dtheta| must also be below this
  double u_max = 20.0;
};

double swingup_force(const SystemSpec& cartpole, const VectorXd& x, const SwingupGains& g = {});

}  // namespace donmpc
