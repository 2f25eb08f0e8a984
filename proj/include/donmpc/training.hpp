#pragma once

// Full-batch Adam training of both operator layouts, the relative-error
// objective, and the width/depth/basis-count ablation sweep.

#include "donmpc/datagen.hpp"
#include "donmpc/models.hpp"

#include <string>
#include <variant>
#include <vector>

namespace donmpc {

using AnyModel = std::variant<MsDeepONet, StandardDeepONet>;

struct HyperConfig {
  std::string id;
  int p = 20;
  std::vector<int> branch_widths = {40, 40};
  std::vector<int> trunk_widths = {40, 40};
  Activation act = Activation::Tanh;
  double lambda = 1e-8;  // L2 penalty weight in the objective
  double lr = 1e-3;
  int epochs = 2000;
  std::uint64_t seed = 1;

  std::string label() const;
};

// Relative squared error: |Y - Yhat|_F^2 / |Y|_F^2.
double relative_loss(const MatrixXd& Y, const MatrixXd& Yhat);

struct TrainReport {
  std::string config_id;
  double train_loss = 0.0;  // relative data term on the training set
  double val_loss = 0.0;    // relative data term on the validation set
  double wall_s = 0.0;
  long param_count = 0;
  int epochs_run = 0;
  bool diverged = false;
  std::vector<double> history;  // training data term per epoch
};

// Fits a model of the dataset's layout. The normalizer is fitted on `train`
// and stored in the model; the optimizer minimizes the relative error in
// normalized space plus lambda * |params|^2. `val` may be null (val_loss then
// stays 0). Deterministic in (datasets, config).
std::pair<AnyModel, TrainReport> train_model(const Dataset& train, const Dataset* val,
                                             const HyperConfig& config);

// Evaluates a trained model's relative loss on a raw dataset (the model's
// own normalizer is applied to both sides).
double evaluate_loss(const AnyModel& model, const Dataset& data);

struct AblationResult {
  int best_index = -1;
  AnyModel best_model;
  std::vector<TrainReport> reports;
};

// Trains every config on the same deterministic split of `full` and selects
// the lowest validation loss; ties fall to fewer parameters, then to the
// earlier grid entry. Each config trains from its own seed derived from
// (seed, config contents) so edits to one config never reshuffle another.
AblationResult ablate(const Dataset& full, const std::vector<HyperConfig>& grid,
                      double train_fraction, std::uint64_t seed);

// Uniform grid over hidden-layer counts, widths (shared by branch and
// trunk) and basis counts; ids are "l{depth}_w{width}_p{basis}".
std::vector<HyperConfig> make_grid(const std::vector<int>& depths,
                                   const std::vector<int>& widths, const std::vector<int>& ps,
                                   int epochs, double lambda = 1e-8, double lr = 1e-3);

// Stable 64-bit content hash used for per-config seeds.
std::uint64_t config_seed(const HyperConfig& c, std::uint64_t master_seed);

}  // namespace donmpc
