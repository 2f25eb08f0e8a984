#pragma once

// Dataset construction: sampled open-loop/closed-loop rollouts rearranged
// into window-per-column training matrices via Hankel maps.

#include "donmpc/dynamics.hpp"
#include "donmpc/neural.hpp"
#include "donmpc/normalizer.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>

namespace donmpc {

// Block-Hankel rearrangement of a channel-stacked sample sequence. z holds
// samples column-wise (r x S); the result is (N*r x T) with block row a of
// column w equal to z(shift + a + w). Requires shift + N + T - 1 <= S.
MatrixXd hankel(const MatrixXd& z, int shift, int N, int T);

// Window-per-column training set. Two layouts share the container:
//  - "ms": U is N*n_u x T (stacked window), Y is N*n_y x T (stacked next N
//    outputs), Z is n_z x T (condition at the window start).
//  - "std": one column per (window, step) pair, T*N columns total. U repeats
//    each window N times, Y holds the single-step target, Z appends the
//    step time j*Ts (j = 1..N) to the condition.
struct Dataset {
  std::string layout = "ms";
  MatrixXd U;
  MatrixXd Y;
  MatrixXd Z;
  int N = 0;
  int n_u = 0;
  int n_y = 0;
  double Ts = 0.0;
  std::string system;
  std::uint64_t seed = 0;
  std::string state_encoding = "state";  // or "shifted_io"
  int t_ini = 0;                         // past-window length for shifted_io
  // Present when a preprocessing map was fitted at generation time; training
  // adopts it instead of refitting.
  std::optional<Normalizer> norm;

  int n_z() const { return static_cast<int>(Z.rows()); }
  int columns() const { return static_cast<int>(U.cols()); }
};

struct DatagenOptions {
  std::string state_encoding = "state";
  int t_ini = 0;  // required positive for shifted_io
};

// Piecewise-constant excitation: each channel redrawn uniformly from the box
// every `hold` samples. Returns n_u x samples.
MatrixXd sample_hold_input(const Box& range, int samples, int hold, UniformRng& rng);

// Simulates one rollout driven by u_samples (n_u x (T + N - 1)) and windows
// it into an "ms" dataset of T columns. With shifted_io encoding the first
// t_ini windows are dropped and the condition becomes the stacked past
// inputs u(w-t_ini..w-1) and outputs y(w-t_ini+1..w).
Dataset generate_open_loop(const SystemSpec& sys, const VectorXd& x0, const MatrixXd& u_samples,
                           int N, double Ts, const DatagenOptions& opts = {},
                           const IntegratorConfig& cfg = {});

// Expands an "ms" dataset (state encoding) into the "std" layout described
// above. The two stay sample-aligned by construction.
Dataset build_standard_dataset(const Dataset& ms_data);

// Cart-pole data collection under the swing-up controller with uniform input
// noise of amplitude noise_amp, n_traj rollouts of traj_len samples from
// randomized near-hanging starts, traj_len - N windows per rollout. Windows
// never cross rollout boundaries. Rollouts run in parallel on seeds derived
// per (rollout, attempt), so results do not depend on scheduling. A rollout
// whose final sample is not near upright is discarded and regenerated; if
// more rollouts are discarded than kept, throws std::runtime_error.
Dataset generate_swingup_dataset(const SystemSpec& cartpole, int n_traj, int traj_len, int N,
                                 double Ts, double noise_amp, std::uint64_t seed,
                                 const IntegratorConfig& cfg = {});

// Batch of open-loop rollouts with piecewise-constant random inputs from
// random starts: x0 uniform in x0_box, inputs redrawn from u_box every hold
// samples, n_traj rollouts of traj_len samples (traj_len - N windows each,
// never crossing rollout boundaries). Seeds derive per rollout, so results
// do not depend on scheduling. Complements closed-loop corpora with
// off-policy forcing around a chosen operating region.
Dataset generate_rollout_batch(const SystemSpec& sys, const Box& x0_box, const Box& u_box,
                               int n_traj, int traj_len, int N, double Ts, int hold,
                               std::uint64_t seed, const IntegratorConfig& cfg = {});

// Column-wise concatenation of two window sets with identical layout and
// shapes. Any fitted normalizer is dropped (refit on the combined set).
Dataset concat_datasets(const Dataset& a, const Dataset& b);

// Deterministic shuffled split by column (by window group for "std" so the
// N steps of one window never straddle the split). fraction is the first
// part's share, rounded up.
std::pair<Dataset, Dataset> split_dataset(const Dataset& d, double fraction, std::uint64_t seed);

// Population mean/std per physical channel (window rows pooled over time
// positions). Scales below 1e-12 are replaced by 1.
Normalizer fit_normalizer(const Dataset& d);

// Applies the normalizer to all three blocks (training-space copy).
Dataset normalize_dataset(const Dataset& d, const Normalizer& n);

}  // namespace donmpc
