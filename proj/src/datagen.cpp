#include "donmpc/datagen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace donmpc {

// ---- Normalizer ----

Normalizer Normalizer::identity(int n_u, int n_z, int n_y) {
  Normalizer n;
  n.u_shift = VectorXd::Zero(n_u);
  n.u_scale = VectorXd::Ones(n_u);
  n.z_shift = VectorXd::Zero(n_z);
  n.z_scale = VectorXd::Ones(n_z);
  n.y_shift = VectorXd::Zero(n_y);
  n.y_scale = VectorXd::Ones(n_y);
  return n;
}

MatrixXd tiled_normalize(const MatrixXd& m, const VectorXd& shift, const VectorXd& scale) {
  const int dim = static_cast<int>(shift.size());
  if (m.rows() % dim != 0) throw std::invalid_argument("tiled_normalize: row count mismatch");
  MatrixXd out(m.rows(), m.cols());
  for (int r = 0; r < m.rows(); ++r)
    out.row(r) = (m.row(r).array() - shift(r % dim)) / scale(r % dim);
  return out;
}

MatrixXd tiled_denormalize(const MatrixXd& m, const VectorXd& shift, const VectorXd& scale) {
  const int dim = static_cast<int>(shift.size());
  if (m.rows() % dim != 0) throw std::invalid_argument("tiled_denormalize: row count mismatch");
  MatrixXd out(m.rows(), m.cols());
  for (int r = 0; r < m.rows(); ++r)
    out.row(r) = m.row(r).array() * scale(r % dim) + shift(r % dim);
  return out;
}

MatrixXd Normalizer::normalize_u(const MatrixXd& m) const { return tiled_normalize(m, u_shift, u_scale); }
MatrixXd Normalizer::normalize_z(const MatrixXd& m) const { return tiled_normalize(m, z_shift, z_scale); }
MatrixXd Normalizer::normalize_y(const MatrixXd& m) const { return tiled_normalize(m, y_shift, y_scale); }
MatrixXd Normalizer::denormalize_y(const MatrixXd& m) const { return tiled_denormalize(m, y_shift, y_scale); }

bool Normalizer::is_identity() const {
  auto ident = [](const VectorXd& sh, const VectorXd& sc) {
    return sh.isZero(0.0) && (sc.array() == 1.0).all();
  };
  return ident(u_shift, u_scale) && ident(z_shift, z_scale) && ident(y_shift, y_scale);
}

// ---- Hankel windowing ----

MatrixXd hankel(const MatrixXd& z, int shift, int N, int T) {
  const int r = static_cast<int>(z.rows());
  const int S = static_cast<int>(z.cols());
  if (shift < 0 || N < 1 || T < 1) throw std::invalid_argument("hankel: bad arguments");
  if (shift + N + T - 1 > S) throw std::invalid_argument("hankel: sequence too short");
  MatrixXd H(N * r, T);
  for (int a = 0; a < N; ++a)
    for (int w = 0; w < T; ++w) H.block(a * r, w, r, 1) = z.col(shift + a + w);
  return H;
}

MatrixXd sample_hold_input(const Box& range, int samples, int hold, UniformRng& rng) {
  if (samples < 1 || hold < 1) throw std::invalid_argument("sample_hold_input: bad arguments");
  const int n_u = range.dim();
  MatrixXd u(n_u, samples);
  VectorXd level(n_u);
  for (int k = 0; k < samples; ++k) {
    if (k % hold == 0)
      for (int ch = 0; ch < n_u; ++ch) level(ch) = rng.next(range.lo(ch), range.hi(ch));
    u.col(k) = level;
  }
  return u;
}

// ---- dataset construction ----

Dataset generate_open_loop(const SystemSpec& sys, const VectorXd& x0, const MatrixXd& u_samples,
                           int N, double Ts, const DatagenOptions& opts,
                           const IntegratorConfig& cfg) {
  const int S = static_cast<int>(u_samples.cols());
  const int T = S - N + 1;
  if (T < 1) throw std::invalid_argument("generate_open_loop: need at least N input samples");

  Trajectory tr = simulate(sys, x0, u_samples, Ts, cfg);
  // tr has S+1 sample instants; the last input column is a hold repeat, so
  // the true input sequence is the first S columns.
  Dataset d;
  d.layout = "ms";
  d.N = N;
  d.n_u = sys.n_u;
  d.n_y = sys.n_y;
  d.Ts = Ts;
  d.system = sys.name;
  d.state_encoding = opts.state_encoding;

  d.U = hankel(u_samples, 0, N, T);
  d.Y = hankel(tr.outputs, 1, N, T);

  if (opts.state_encoding == "state") {
    d.Z = hankel(tr.states, 0, 1, T);
    d.t_ini = 0;
    return d;
  }
  if (opts.state_encoding != "shifted_io")
    throw std::invalid_argument("generate_open_loop: unknown state encoding");
  const int ti = opts.t_ini;
  if (ti < 1) throw std::invalid_argument("generate_open_loop: shifted_io needs t_ini >= 1");
  if (T <= ti) throw std::invalid_argument("generate_open_loop: not enough windows for t_ini");
  d.t_ini = ti;
  const int Tc = T - ti;  // windows starting at w = t_ini .. T-1
  d.U = d.U.rightCols(Tc).eval();
  d.Y = d.Y.rightCols(Tc).eval();
  // Condition: inputs over [w-t_ini, w) and outputs over (w-t_ini, w].
  MatrixXd Zu = hankel(u_samples, 0, ti, Tc);
  MatrixXd Zy = hankel(tr.outputs, 1, ti, Tc);
  d.Z = MatrixXd(Zu.rows() + Zy.rows(), Tc);
  d.Z << Zu, Zy;
  return d;
}

Dataset build_standard_dataset(const Dataset& ms) {
  if (ms.layout != "ms") throw std::invalid_argument("build_standard_dataset: need ms layout");
  if (ms.state_encoding != "state")
    throw std::invalid_argument("build_standard_dataset: state encoding only");
  const int T = ms.columns(), N = ms.N;

  Dataset d;
  d.layout = "std";
  d.N = N;
  d.n_u = ms.n_u;
  d.n_y = ms.n_y;
  d.Ts = ms.Ts;
  d.system = ms.system;
  d.seed = ms.seed;
  d.U = MatrixXd(ms.U.rows(), T * N);
  d.Y = MatrixXd(ms.n_y, T * N);
  d.Z = MatrixXd(ms.Z.rows() + 1, T * N);
  for (int w = 0; w < T; ++w) {
    for (int j = 0; j < N; ++j) {
      const int c = w * N + j;
      d.U.col(c) = ms.U.col(w);
      d.Y.col(c) = ms.Y.col(w).segment(j * ms.n_y, ms.n_y);
      d.Z.col(c).head(ms.Z.rows()) = ms.Z.col(w);
      d.Z(ms.Z.rows(), c) = (j + 1) * ms.Ts;  // time of the predicted sample
    }
  }
  return d;
}

namespace {

// Distinct, reproducible stream per (master seed, rollout slot, attempt).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t slot, std::uint64_t attempt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (slot + 1) + 0xBF58476D1CE4E5B9ull * attempt;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

Dataset generate_swingup_dataset(const SystemSpec& cartpole, int n_traj, int traj_len, int N,
                                 double Ts, double noise_amp, std::uint64_t seed,
                                 const IntegratorConfig& cfg) {
  if (n_traj < 1 || traj_len <= N)
    throw std::invalid_argument("generate_swingup_dataset: bad sizes");
  // A rollout counts as swung up when its last sample is this close to upright.
  constexpr double kUprightThreshold = 0.5;
  const int T_per = traj_len - N;

  Dataset d;
  d.layout = "ms";
  d.N = N;
  d.n_u = cartpole.n_u;
  d.n_y = cartpole.n_y;
  d.Ts = Ts;
  d.system = cartpole.name;
  d.seed = seed;
  d.U = MatrixXd(N * d.n_u, n_traj * T_per);
  d.Y = MatrixXd(N * d.n_y, n_traj * T_per);
  d.Z = MatrixXd(cartpole.n_x, n_traj * T_per);

  const SwingupGains gains;
  // Failed rollouts are regenerated from the slot's next derived seed, so the
  // result is deterministic however the slots are scheduled. The shared budget
  // of n_traj discards caps the failure rate at 50%.
  std::atomic<int> next_slot{0};
  std::atomic<int> discards{0};
  std::atomic<bool> over_budget{false};

  auto fill_slot = [&](int slot) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      if (over_budget.load()) return;
      UniformRng rng(mix_seed(seed, static_cast<std::uint64_t>(slot), attempt));
      VectorXd x0(4);
      x0 << rng.next(-0.2, 0.2), M_PI + rng.next(-0.5, 0.5), rng.next(-0.2, 0.2),
          rng.next(-0.5, 0.5);
      auto controller = [&](double, const VectorXd& x) {
        VectorXd u(1);
        u(0) = swingup_force(cartpole, x, gains) + rng.next(-noise_amp, noise_amp);
        return u;
      };
      Trajectory tr = simulate_feedback(cartpole, x0, controller, traj_len - 1, Ts, cfg);
      if (std::abs(wrap_angle(tr.states(1, traj_len - 1))) >= kUprightThreshold) {
        if (discards.fetch_add(1) + 1 > n_traj) over_budget.store(true);
        continue;
      }
      d.U.middleCols(slot * T_per, T_per) = hankel(tr.inputs.leftCols(traj_len - 1), 0, N, T_per);
      d.Y.middleCols(slot * T_per, T_per) = hankel(tr.outputs, 1, N, T_per);
      d.Z.middleCols(slot * T_per, T_per) = hankel(tr.states, 0, 1, T_per);
      return;
    }
  };

  auto worker = [&] {
    for (int slot; (slot = next_slot.fetch_add(1)) < n_traj;) fill_slot(slot);
  };
  const int n_workers =
      std::max(1, std::min<int>(n_traj, static_cast<int>(std::thread::hardware_concurrency())));
  std::vector<std::thread> pool;
  for (int w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  if (over_budget.load())
    throw std::runtime_error("generate_swingup_dataset: more than half of the rollouts failed to swing up");
  return d;
}

Dataset generate_rollout_batch(const SystemSpec& sys, const Box& x0_box, const Box& u_box,
                               int n_traj, int traj_len, int N, double Ts, int hold,
                               std::uint64_t seed, const IntegratorConfig& cfg) {
  if (n_traj < 1 || traj_len <= N)
    throw std::invalid_argument("generate_rollout_batch: bad sizes");
  if (x0_box.dim() != sys.n_x || u_box.dim() != sys.n_u)
    throw std::invalid_argument("generate_rollout_batch: box dimension mismatch");
  const int T_per = traj_len - N;

  Dataset d;
  d.layout = "ms";
  d.N = N;
  d.n_u = sys.n_u;
  d.n_y = sys.n_y;
  d.Ts = Ts;
  d.system = sys.name;
  d.seed = seed;
  d.U = MatrixXd(N * d.n_u, n_traj * T_per);
  d.Y = MatrixXd(N * d.n_y, n_traj * T_per);
  d.Z = MatrixXd(sys.n_x, n_traj * T_per);

  std::atomic<int> next_slot{0};
  auto worker = [&] {
    for (int slot; (slot = next_slot.fetch_add(1)) < n_traj;) {
      UniformRng rng(mix_seed(seed, static_cast<std::uint64_t>(slot), 0));
      VectorXd x0(sys.n_x);
      for (int i = 0; i < sys.n_x; ++i) x0(i) = rng.next(x0_box.lo(i), x0_box.hi(i));
      MatrixXd u = sample_hold_input(u_box, traj_len - 1, hold, rng);
      Trajectory tr = simulate(sys, x0, u, Ts, cfg);
      d.U.middleCols(slot * T_per, T_per) = hankel(u, 0, N, T_per);
      d.Y.middleCols(slot * T_per, T_per) = hankel(tr.outputs, 1, N, T_per);
      d.Z.middleCols(slot * T_per, T_per) = hankel(tr.states, 0, 1, T_per);
    }
  };
  const int n_workers =
      std::max(1, std::min<int>(n_traj, static_cast<int>(std::thread::hardware_concurrency())));
  std::vector<std::thread> pool;
  for (int w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return d;
}

Dataset concat_datasets(const Dataset& a, const Dataset& b) {
  if (a.layout != b.layout || a.state_encoding != b.state_encoding)
    throw std::invalid_argument("concat_datasets: layout mismatch");
  if (a.N != b.N || a.n_u != b.n_u || a.n_y != b.n_y || a.t_ini != b.t_ini ||
      a.U.rows() != b.U.rows() || a.Y.rows() != b.Y.rows() || a.Z.rows() != b.Z.rows())
    throw std::invalid_argument("concat_datasets: shape mismatch");
  if (a.Ts != b.Ts) throw std::invalid_argument("concat_datasets: sample time mismatch");
  Dataset d = a;
  d.U = MatrixXd(a.U.rows(), a.columns() + b.columns());
  d.Y = MatrixXd(a.Y.rows(), a.columns() + b.columns());
  d.Z = MatrixXd(a.Z.rows(), a.columns() + b.columns());
  d.U << a.U, b.U;
  d.Y << a.Y, b.Y;
  d.Z << a.Z, b.Z;
  d.norm.reset();
  return d;
}

namespace {

std::vector<int> shuffled_indices(int n, std::uint64_t seed) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  UniformRng rng(seed);
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
    std::swap(idx[i], idx[j]);
  }
  return idx;
}

Dataset take_columns(const Dataset& d, const std::vector<int>& cols) {
  Dataset out = d;
  out.U = MatrixXd(d.U.rows(), cols.size());
  out.Y = MatrixXd(d.Y.rows(), cols.size());
  out.Z = MatrixXd(d.Z.rows(), cols.size());
  for (std::size_t i = 0; i < cols.size(); ++i) {
    out.U.col(i) = d.U.col(cols[i]);
    out.Y.col(i) = d.Y.col(cols[i]);
    out.Z.col(i) = d.Z.col(cols[i]);
  }
  return out;
}

}  // namespace

std::pair<Dataset, Dataset> split_dataset(const Dataset& d, double fraction, std::uint64_t seed) {
  if (fraction <= 0.0 || fraction >= 1.0)
    throw std::invalid_argument("split_dataset: fraction must be in (0, 1)");
  // For the std layout shuffle window groups, not single (window, step)
  // columns; otherwise steps of one window leak across the split.
  const int group = d.layout == "std" ? d.N : 1;
  const int n_groups = d.columns() / group;
  if (n_groups < 2) throw std::invalid_argument("split_dataset: too few columns");
  std::vector<int> idx = shuffled_indices(n_groups, seed);
  const int n_first = std::min(n_groups - 1,
                               static_cast<int>(std::ceil(fraction * n_groups)));
  std::vector<int> a, b;
  for (int i = 0; i < n_groups; ++i) {
    auto& dst = i < n_first ? a : b;
    for (int k = 0; k < group; ++k) dst.push_back(idx[i] * group + k);
  }
  return {take_columns(d, a), take_columns(d, b)};
}

namespace {

// Pooled mean/std over all rows congruent to the same physical channel.
void channel_stats(const MatrixXd& m, int dim, VectorXd& shift, VectorXd& scale) {
  shift = VectorXd::Zero(dim);
  scale = VectorXd::Ones(dim);
  if (m.rows() % dim != 0) throw std::invalid_argument("channel_stats: row count mismatch");
  const int reps = static_cast<int>(m.rows()) / dim;
  const double count = static_cast<double>(reps) * static_cast<double>(m.cols());
  for (int ch = 0; ch < dim; ++ch) {
    double sum = 0.0;
    for (int k = 0; k < reps; ++k) sum += m.row(k * dim + ch).sum();
    const double mean = sum / count;
    double sq = 0.0;
    for (int k = 0; k < reps; ++k) sq += (m.row(k * dim + ch).array() - mean).square().sum();
    const double sd = std::sqrt(sq / count);
    shift(ch) = mean;
    scale(ch) = sd < 1e-12 ? 1.0 : sd;
  }
}

}  // namespace

Normalizer fit_normalizer(const Dataset& d) {
  Normalizer n;
  channel_stats(d.U, d.n_u, n.u_shift, n.u_scale);
  channel_stats(d.Z, d.n_z(), n.z_shift, n.z_scale);
  channel_stats(d.Y, d.n_y, n.y_shift, n.y_scale);
  return n;
}

Dataset normalize_dataset(const Dataset& d, const Normalizer& n) {
  Dataset out = d;
  out.U = n.normalize_u(d.U);
  out.Z = n.normalize_z(d.Z);
  out.Y = n.normalize_y(d.Y);
  return out;
}

}  // namespace donmpc
