#include "donmpc/dynamics.hpp"

#include <cmath>
#include <utility>

namespace donmpc {

Box::Box(VectorXd lo_, VectorXd hi_) : lo(std::move(lo_)), hi(std::move(hi_)) {
  if (lo.size() != hi.size()) throw std::invalid_argument("Box: lo/hi size mismatch");
  for (int i = 0; i < lo.size(); ++i)
    if (lo(i) > hi(i)) throw std::invalid_argument("Box: lo > hi");
}

Box::Box(double lo_, double hi_, int dim)
    : Box(VectorXd::Constant(dim, lo_), VectorXd::Constant(dim, hi_)) {}

bool Box::contains(const VectorXd& v, double tol) const {
  if (v.size() != lo.size()) return false;
  return (v.array() >= lo.array() - tol).all() && (v.array() <= hi.array() + tol).all();
}

VectorXd Box::clamp(const VectorXd& v) const {
  return v.cwiseMax(lo).cwiseMin(hi);
}

namespace {

// Levels this far below zero are treated as integrator jitter and clamped;
// anything lower is a genuine modeling error.
constexpr double kLevelJitter = 1e-9;

double tank_outflow(double level, double coeff, double two_g) {
  if (level < -kLevelJitter) throw std::domain_error("quadtank: negative tank level");
  return coeff * std::sqrt(two_g * std::max(level, 0.0));
}

SystemSpec make_vdp(std::map<std::string, double> p) {
  SystemSpec sys;
  sys.name = "vdp";
  sys.n_x = 2;
  sys.n_u = 1;
  sys.n_y = 1;
  sys.params = std::move(p);
  const double mu = sys.params.at("mu");
  sys.rhs = [mu](const VectorXd& x, const VectorXd& u) {
    VectorXd dx(2);
    dx(0) = x(1);
    dx(1) = mu * (1.0 - x(0) * x(0)) * x(1) + u(0);
    return dx;
  };
  sys.output = [](const VectorXd& x) { return x.head(1).eval(); };
  return sys;
}

SystemSpec make_quadtank(std::map<std::string, double> p) {
  SystemSpec sys;
  sys.name = "quadtank";
  sys.n_x = 4;
  sys.n_u = 2;
  sys.n_y = 4;
  sys.params = std::move(p);
  const double Sc = sys.params.at("Sc");
  const double a1 = sys.params.at("a1"), a2 = sys.params.at("a2");
  const double a3 = sys.params.at("a3"), a4 = sys.params.at("a4");
  const double ga = sys.params.at("gamma_a"), gb = sys.params.at("gamma_b");
  const double two_g = 2.0 * sys.params.at("g");
  // Pump flows are given per hour; 1/3600 converts to per second.
  const double pump = 1.0 / (3600.0 * Sc);
  sys.rhs = [=](const VectorXd& x, const VectorXd& u) {
    VectorXd dx(4);
    const double q1 = tank_outflow(x(0), a1 / Sc, two_g);
    const double q2 = tank_outflow(x(1), a2 / Sc, two_g);
    const double q3 = tank_outflow(x(2), a3 / Sc, two_g);
    const double q4 = tank_outflow(x(3), a4 / Sc, two_g);
    dx(0) = -q1 + q3 + ga * pump * u(0);
    dx(1) = -q2 + q4 + gb * pump * u(1);
    dx(2) = -q3 + (1.0 - gb) * pump * u(1);
    dx(3) = -q4 + (1.0 - ga) * pump * u(0);
    return dx;
  };
  sys.output = [](const VectorXd& x) { return x; };
  sys.input_box = Box(0.0, 4.0, 2);
  return sys;
}

SystemSpec make_cartpole(std::map<std::string, double> p) {
  SystemSpec sys;
  sys.name = "cartpole";
  sys.n_x = 4;  // cart position, pole angle (0 = upright), and their rates
  sys.n_u = 1;
  sys.n_y = 5;  // (x, cos th, sin th, dx, dth): angle embedded on the circle
  sys.params = std::move(p);
  const double M = sys.params.at("M"), m = sys.params.at("m");
  const double l = sys.params.at("l"), g = sys.params.at("g");
  sys.rhs = [=](const VectorXd& x, const VectorXd& u) {
    const double th = x(1), dth = x(3);
    const double s = std::sin(th), c = std::cos(th);
    // Uniform pole of half-length l pivoted on the cart; inertia about the
    // pivot is (4/3) m l^2.
    const double D = l * ((4.0 / 3.0) * (M + m) - m * c * c);
    const double ddth = (g * (M + m) * s - c * u(0) - m * l * dth * dth * s * c) / D;
    const double ddx = (u(0) + m * l * (dth * dth * s - ddth * c)) / (M + m);
    VectorXd dx(4);
    dx << x(2), x(3), ddx, ddth;
    return dx;
  };
  sys.output = [](const VectorXd& x) {
    VectorXd y(5);
    y << x(0), std::cos(x(1)), std::sin(x(1)), x(2), x(3);
    return y;
  };
  sys.input_box = Box(-20.0, 20.0, 1);
  return sys;
}

}  // namespace

SystemSpec make_system(const std::string& name, const std::map<std::string, double>& overrides) {
  std::map<std::string, double> p;
  if (name == "vdp") {
    p = {{"mu", 1.0}};
  } else if (name == "quadtank") {
    p = {{"Sc", 0.06},      {"a1", 1.31e-4}, {"a2", 1.51e-4}, {"a3", 9.27e-5},
         {"a4", 8.82e-5},   {"gamma_a", 0.3}, {"gamma_b", 0.4}, {"g", 9.81}};
  } else if (name == "cartpole") {
    p = {{"M", 2.4}, {"m", 0.23}, {"l", 0.18}, {"g", 9.81}};
  } else {
    throw std::invalid_argument("make_system: unknown system '" + name + "'");
  }
  for (const auto& [k, v] : overrides) {
    if (!p.count(k)) throw std::invalid_argument("make_system: unknown parameter '" + k + "'");
    p[k] = v;
  }
  if (name == "vdp") return make_vdp(std::move(p));
  if (name == "quadtank") return make_quadtank(std::move(p));
  return make_cartpole(std::move(p));
}

VectorXd quadtank_equilibrium(const SystemSpec& sys, const VectorXd& u) {
  if (sys.name != "quadtank") throw std::invalid_argument("quadtank_equilibrium: wrong system");
  if (u.size() != 2 || u.minCoeff() <= 0.0)
    throw std::invalid_argument("quadtank_equilibrium: need u > 0");
  const auto& p = sys.params;
  const double Sc = p.at("Sc"), two_g = 2.0 * p.at("g");
  const double pump = 1.0 / (3600.0 * Sc);
  auto level_for = [&](double inflow, double a) {
    // inflow = (a/Sc) sqrt(2 g x)  =>  x = (inflow Sc / a)^2 / (2 g)
    const double root = inflow * Sc / a;
    return root * root / two_g;
  };
  const double ga = p.at("gamma_a"), gb = p.at("gamma_b");
  VectorXd x(4);
  x(2) = level_for((1.0 - gb) * pump * u(1), p.at("a3"));
  x(3) = level_for((1.0 - ga) * pump * u(0), p.at("a4"));
  // Lower tanks balance their own outflow against upper-tank outflow plus
  // direct pump flow.
  x(0) = level_for((p.at("a3") / Sc) * std::sqrt(two_g * x(2)) + ga * pump * u(0), p.at("a1"));
  x(1) = level_for((p.at("a4") / Sc) * std::sqrt(two_g * x(3)) + gb * pump * u(1), p.at("a2"));
  return x;
}

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double kA21 = 1.0 / 5;
constexpr double kA31 = 3.0 / 40, kA32 = 9.0 / 40;
constexpr double kA41 = 44.0 / 45, kA42 = -56.0 / 15, kA43 = 32.0 / 9;
constexpr double kA51 = 19372.0 / 6561, kA52 = -25360.0 / 2187, kA53 = 64448.0 / 6561,
                 kA54 = -212.0 / 729;
constexpr double kA61 = 9017.0 / 3168, kA62 = -355.0 / 33, kA63 = 46732.0 / 5247,
                 kA64 = 49.0 / 176, kA65 = -5103.0 / 18656;
constexpr double kB1 = 35.0 / 384, kB3 = 500.0 / 1113, kB4 = 125.0 / 192,
                 kB5 = -2187.0 / 6784, kB6 = 11.0 / 84;
// 5th-order minus embedded 4th-order weights, used for the error estimate.
constexpr double kE1 = kB1 - 5179.0 / 57600, kE3 = kB3 - 7571.0 / 16695,
                 kE4 = kB4 - 393.0 / 640, kE5 = kB5 + 92097.0 / 339200,
                 kE6 = kB6 - 187.0 / 2100, kE7 = -1.0 / 40;

}  // namespace

VectorXd integrate_segment(const SystemSpec& sys, const VectorXd& x0, const VectorXd& u,
                           double dt, const IntegratorConfig& cfg) {
  if (dt < 0.0) throw std::invalid_argument("integrate_segment: dt < 0");
  if (x0.size() != sys.n_x || u.size() != sys.n_u)
    throw std::invalid_argument("integrate_segment: dimension mismatch");
  if (dt == 0.0) return x0;

  VectorXd x = x0;
  double t = 0.0;
  double h = cfg.initial_step > 0.0 ? std::min(cfg.initial_step, dt) : dt / 16.0;
  VectorXd k1 = sys.rhs(x, u);  // FSAL: reused from the previous accepted step
  const double h_min = dt * 1e-12;

  for (int step = 0; step < cfg.max_steps; ++step) {
    if (t >= dt) return x;
    h = std::min(h, dt - t);

    VectorXd k2 = sys.rhs(x + h * (kA21 * k1), u);
    VectorXd k3 = sys.rhs(x + h * (kA31 * k1 + kA32 * k2), u);
    VectorXd k4 = sys.rhs(x + h * (kA41 * k1 + kA42 * k2 + kA43 * k3), u);
    VectorXd k5 = sys.rhs(x + h * (kA51 * k1 + kA52 * k2 + kA53 * k3 + kA54 * k4), u);
    VectorXd k6 = sys.rhs(x + h * (kA61 * k1 + kA62 * k2 + kA63 * k3 + kA64 * k4 + kA65 * k5), u);
    VectorXd x5 = x + h * (kB1 * k1 + kB3 * k3 + kB4 * k4 + kB5 * k5 + kB6 * k6);
    VectorXd k7 = sys.rhs(x5, u);

    double err = 0.0;
    bool finite = x5.allFinite() && k7.allFinite();
    if (finite) {
      VectorXd e = h * (kE1 * k1 + kE3 * k3 + kE4 * k4 + kE5 * k5 + kE6 * k6 + kE7 * k7);
      for (int i = 0; i < x.size(); ++i) {
        const double sc = cfg.abs_tol + cfg.rel_tol * std::max(std::abs(x(i)), std::abs(x5(i)));
        err += (e(i) / sc) * (e(i) / sc);
      }
      err = std::sqrt(err / static_cast<double>(x.size()));
    }

    if (finite && err <= 1.0) {
      t += h;
      x = std::move(x5);
      k1 = std::move(k7);
      const double factor = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
      h *= factor;
    } else {
      h *= finite ? std::clamp(0.9 * std::pow(err, -0.2), 0.2, 0.9) : 0.5;
    }
    if (h < h_min)
      throw IntegrationError("integrate_segment: step size underflow", t);
  }
  throw IntegrationError("integrate_segment: max step count exceeded", t);
}

Trajectory simulate(const SystemSpec& sys, const VectorXd& x0, const MatrixXd& u_seq,
                    double Ts, const IntegratorConfig& cfg) {
  if (u_seq.rows() != sys.n_u) throw std::invalid_argument("simulate: u_seq rows != n_u");
  if (Ts <= 0.0) throw std::invalid_argument("simulate: Ts must be positive");
  const int K = static_cast<int>(u_seq.cols());
  if (K < 1) throw std::invalid_argument("simulate: empty input sequence");

  Trajectory tr;
  tr.times = VectorXd::LinSpaced(K + 1, 0.0, K * Ts);
  tr.states = MatrixXd(sys.n_x, K + 1);
  tr.inputs = MatrixXd(sys.n_u, K + 1);
  tr.outputs = MatrixXd(sys.n_y, K + 1);

  VectorXd x = x0;
  for (int k = 0; k < K; ++k) {
    tr.states.col(k) = x;
    tr.outputs.col(k) = sys.output(x);
    tr.inputs.col(k) = u_seq.col(k);
    x = integrate_segment(sys, x, u_seq.col(k), Ts, cfg);
  }
  tr.states.col(K) = x;
  tr.outputs.col(K) = sys.output(x);
  tr.inputs.col(K) = u_seq.col(K - 1);  // hold: no fresh input at the last instant
  return tr;
}

Trajectory simulate_feedback(const SystemSpec& sys, const VectorXd& x0,
                             const std::function<VectorXd(double, const VectorXd&)>& controller,
                             int steps, double Ts, const IntegratorConfig& cfg) {
  if (steps < 1) throw std::invalid_argument("simulate_feedback: steps must be >= 1");
  MatrixXd u_seq(sys.n_u, steps);
  Trajectory tr;
  tr.times = VectorXd::LinSpaced(steps + 1, 0.0, steps * Ts);
  tr.states = MatrixXd(sys.n_x, steps + 1);
  tr.inputs = MatrixXd(sys.n_u, steps + 1);
  tr.outputs = MatrixXd(sys.n_y, steps + 1);

  VectorXd x = x0;
  for (int k = 0; k < steps; ++k) {
    VectorXd u = controller(k * Ts, x);
    if (sys.input_box) u = sys.input_box->clamp(u);
    tr.states.col(k) = x;
    tr.outputs.col(k) = sys.output(x);
    tr.inputs.col(k) = u;
    x = integrate_segment(sys, x, u, Ts, cfg);
  }
  tr.states.col(steps) = x;
  tr.outputs.col(steps) = sys.output(x);
  tr.inputs.col(steps) = tr.inputs.col(steps - 1);
  return tr;
}

double wrap_angle(double a) {
  return std::remainder(a, 2.0 * M_PI);
}

double swingup_force(const SystemSpec& cartpole, const VectorXd& x, const SwingupGains& g) {
  if (cartpole.name != "cartpole") throw std::invalid_argument("swingup_force: wrong system");
  const auto& p = cartpole.params;
  const double M = p.at("M"), m = p.at("m"), l = p.at("l"), grav = p.at("g");
  const double th = wrap_angle(x(1)), dth = x(3);

  // Continuous-time LQR gain for the upright linearization, precomputed for
  // the default physics (state weights diag(2, 50, 1, 5), input weight 0.2).
  static const double kLqr[4] = {-3.1622776601683822, -72.653536378450468,
                                 -5.9335075861118707, -11.916651508314429};

  double u;
  if (std::abs(th) < g.catch_angle && std::abs(dth) < g.catch_rate) {
    u = -(kLqr[0] * x(0) + kLqr[1] * th + kLqr[2] * x(2) + kLqr[3] * dth);
  } else {
    // Pole energy about the pivot; the upright rest value is m g l. Driving
    // the cart with acceleration a changes it at rate -m l a dth cos(th), so
    // the sign below pumps energy toward the upright level.
    const double energy = (2.0 / 3.0) * m * l * l * dth * dth + m * grav * l * std::cos(th);
    double a = g.k_energy * (energy - m * grav * l) * dth * std::cos(th);
    // The hanging rest point is a stall (dth = 0 gives a = 0); nudge out.
    if (std::abs(dth) < 0.2 && std::cos(th) < -0.95) a += 4.0;
    a += -g.k_pos * x(0) - g.k_vel * x(2);
    u = (M + m) * a;
  }
  return std::clamp(u, -g.u_max, g.u_max);
}

}  // namespace donmpc
