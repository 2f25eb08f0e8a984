#include "donmpc/training.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace donmpc {

std::string HyperConfig::label() const {
  if (!id.empty()) return id;
  return "l" + std::to_string(branch_widths.size()) + "_w" +
         std::to_string(branch_widths.empty() ? 0 : branch_widths[0]) + "_p" + std::to_string(p);
}

double relative_loss(const MatrixXd& Y, const MatrixXd& Yhat) {
  if (Y.rows() != Yhat.rows() || Y.cols() != Yhat.cols())
    throw std::invalid_argument("relative_loss: shape mismatch");
  const double denom = Y.squaredNorm();
  if (denom <= 0.0) throw std::invalid_argument("relative_loss: zero reference norm");
  return (Y - Yhat).squaredNorm() / denom;
}

namespace {

std::vector<MatrixXd> deinterleave_channels(const MatrixXd& U, int n_u, int N) {
  std::vector<MatrixXd> out(n_u, MatrixXd(N, U.cols()));
  for (int ch = 0; ch < n_u; ++ch)
    for (int k = 0; k < N; ++k) out[ch].row(k) = U.row(k * n_u + ch);
  return out;
}

struct EpochEval {
  double data_term = 0.0;
  VectorXd grad;  // objective gradient including the L2 term
};

// One full-batch forward/backward for either layout. Yn is the normalized
// target; the data term is |Yn - Yhat|^2 / |Yn|^2 whose output gradient is
// 2 (Yhat - Yn) / |Yn|^2.
EpochEval ms_epoch(MsDeepONet& m, const MatrixXd& Un, const MatrixXd& Zn, const MatrixXd& Yn,
                   double y_norm2, double lambda, const VectorXd& params) {
  MsTape tape;
  MatrixXd Yhat = ms_core_forward(m, Un, Zn, &tape);
  EpochEval ev;
  ev.data_term = (Yn - Yhat).squaredNorm() / y_norm2;
  MatrixXd dY = 2.0 / y_norm2 * (Yhat - Yn);
  MsGrads g = zero_grads(m);
  ms_core_backward(m, tape, dY, g);
  ev.grad = ms_flat_grads(m, g) + 2.0 * lambda * params;
  return ev;
}

EpochEval std_epoch(StandardDeepONet& m, const std::vector<MatrixXd>& U_ch, const MatrixXd& Zn,
                    const MatrixXd& Yn, double y_norm2, double lambda, const VectorXd& params) {
  StdTape tape;
  MatrixXd Yhat = std_core_forward(m, U_ch, Zn, &tape);
  EpochEval ev;
  ev.data_term = (Yn - Yhat).squaredNorm() / y_norm2;
  MatrixXd dY = 2.0 / y_norm2 * (Yhat - Yn);
  StdGrads g = zero_grads(m);
  std_core_backward(m, tape, dY, g);
  ev.grad = std_flat_grads(m, g) + 2.0 * lambda * params;
  return ev;
}

}  // namespace

std::pair<AnyModel, TrainReport> train_model(const Dataset& train, const Dataset* val,
                                             const HyperConfig& config) {
  const bool is_ms = train.layout == "ms";
  if (!is_ms && train.layout != "std")
    throw std::invalid_argument("train_model: unknown layout " + train.layout);
  if (val && val->layout != train.layout)
    throw std::invalid_argument("train_model: split layouts differ");

  const auto t0 = std::chrono::steady_clock::now();
  const Normalizer norm = train.norm ? *train.norm : fit_normalizer(train);
  Dataset tn = normalize_dataset(train, norm);
  const double y_norm2 = tn.Y.squaredNorm();
  if (y_norm2 <= 0.0) throw std::invalid_argument("train_model: degenerate targets");

  TrainReport rep;
  rep.config_id = config.label();
  rep.history.reserve(config.epochs);

  AnyModel model;
  if (is_ms) {
    MsDeepONet m = make_ms_deeponet(train.N, train.n_u, train.n_y, train.n_z(), train.Ts,
                                    config.p, config.branch_widths, config.trunk_widths,
                                    config.act, config.seed);
    m.norm = norm;
    model = std::move(m);
  } else {
    StandardDeepONet m = make_std_deeponet(train.N, train.n_u, train.n_y, train.n_z() - 1,
                                           train.Ts, config.p, config.branch_widths,
                                           config.trunk_widths, config.act, config.seed);
    m.norm = norm;
    model = std::move(m);
  }

  // The std layout trains per channel window, so slice once up front.
  std::vector<MatrixXd> U_ch;
  if (!is_ms) U_ch = deinterleave_channels(tn.U, train.n_u, train.N);

  VectorXd params = is_ms ? ms_get_params(std::get<MsDeepONet>(model))
                          : std_get_params(std::get<StandardDeepONet>(model));
  AdamState adam(params.size(), config.lr);
  VectorXd last_good = params;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    EpochEval ev;
    if (is_ms) {
      auto& m = std::get<MsDeepONet>(model);
      ms_set_params(m, params);
      ev = ms_epoch(m, tn.U, tn.Z, tn.Y, y_norm2, config.lambda, params);
    } else {
      auto& m = std::get<StandardDeepONet>(model);
      std_set_params(m, params);
      ev = std_epoch(m, U_ch, tn.Z, tn.Y, y_norm2, config.lambda, params);
    }
    const double objective = ev.data_term + config.lambda * params.squaredNorm();
    if (!std::isfinite(objective) || !ev.grad.allFinite()) {
      params = last_good;  // roll back to the last finite iterate and stop
      rep.diverged = true;
      break;
    }
    rep.history.push_back(ev.data_term);
    rep.epochs_run = epoch + 1;
    last_good = params;
    adam_step(params, ev.grad, adam);
  }

  if (is_ms) {
    auto& m = std::get<MsDeepONet>(model);
    ms_set_params(m, params);
    rep.param_count = m.param_count();
  } else {
    auto& m = std::get<StandardDeepONet>(model);
    std_set_params(m, params);
    rep.param_count = m.param_count();
  }
  rep.train_loss = evaluate_loss(model, train);
  rep.val_loss = val ? evaluate_loss(model, *val) : 0.0;
  rep.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(model), std::move(rep)};
}

double evaluate_loss(const AnyModel& model, const Dataset& data) {
  if (std::holds_alternative<MsDeepONet>(model)) {
    const auto& m = std::get<MsDeepONet>(model);
    Dataset dn = normalize_dataset(data, m.norm);
    MatrixXd Yhat = ms_core_forward(m, dn.U, dn.Z);
    return relative_loss(dn.Y, Yhat);
  }
  const auto& m = std::get<StandardDeepONet>(model);
  Dataset dn = normalize_dataset(data, m.norm);
  MatrixXd Yhat = std_core_forward(m, deinterleave_channels(dn.U, data.n_u, data.N), dn.Z);
  return relative_loss(dn.Y, Yhat);
}

std::uint64_t config_seed(const HyperConfig& c, std::uint64_t master_seed) {
  // FNV-1a over the config's structural content plus the master seed.
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 1099511628211ull;
    }
  };
  mix(master_seed);
  mix(static_cast<std::uint64_t>(c.p));
  for (int w : c.branch_widths) mix(static_cast<std::uint64_t>(w));
  mix(0xb7ull);  // separator between the width lists
  for (int w : c.trunk_widths) mix(static_cast<std::uint64_t>(w));
  mix(static_cast<std::uint64_t>(c.act == Activation::Tanh ? 1 : 2));
  for (char ch : c.label()) mix(static_cast<std::uint64_t>(static_cast<unsigned char>(ch)));
  return h ? h : 1;
}

AblationResult ablate(const Dataset& full, const std::vector<HyperConfig>& grid,
                      double train_fraction, std::uint64_t seed) {
  if (grid.empty()) throw std::invalid_argument("ablate: empty grid");
  auto [train, val] = split_dataset(full, train_fraction, seed);

  AblationResult res;
  long best_params = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    HyperConfig c = grid[i];
    c.seed = config_seed(c, seed);
    auto [model, rep] = train_model(train, &val, c);
    const bool better =
        res.best_index < 0 || rep.val_loss < res.reports[res.best_index].val_loss ||
        (rep.val_loss == res.reports[res.best_index].val_loss && rep.param_count < best_params);
    res.reports.push_back(std::move(rep));
    if (better) {
      res.best_index = static_cast<int>(i);
      res.best_model = std::move(model);
      best_params = res.reports.back().param_count;
    }
  }
  return res;
}

std::vector<HyperConfig> make_grid(const std::vector<int>& depths, const std::vector<int>& widths,
                                   const std::vector<int>& ps, int epochs, double lambda,
                                   double lr) {
  std::vector<HyperConfig> grid;
  for (int d : depths)
    for (int w : widths)
      for (int p : ps) {
        HyperConfig c;
        c.id = "l" + std::to_string(d) + "_w" + std::to_string(w) + "_p" + std::to_string(p);
        c.p = p;
        c.branch_widths.assign(d, w);
        c.trunk_widths.assign(d, w);
        c.epochs = epochs;
        c.lambda = lambda;
        c.lr = lr;
        grid.push_back(std::move(c));
      }
  return grid;
}

}  // namespace donmpc
