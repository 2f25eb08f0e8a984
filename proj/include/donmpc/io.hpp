#pragma once

// File formats: trajectory/matrix CSV (17 significant digits), dataset
// directories (U.csv, Y.csv, Z.csv + meta.json), model JSON (bit-exact
// round-trip), ablation report CSV, closed-loop log CSV and self-contained
// SVG line charts.

#include "donmpc/datagen.hpp"
#include "donmpc/mpc.hpp"
#include "donmpc/training.hpp"

#include <string>
#include <utility>
#include <vector>

namespace donmpc {

void save_matrix_csv(const std::string& path, const MatrixXd& m,
                     const std::vector<std::string>& header = {});
MatrixXd load_matrix_csv(const std::string& path, std::vector<std::string>* header = nullptr);

// One row per sample instant: t,x1..,u1..,y1..
void save_trajectory_csv(const std::string& path, const Trajectory& tr);
Trajectory load_trajectory_csv(const std::string& path);

// Dataset directory: U.csv / Y.csv / Z.csv plus meta.json carrying layout,
// system, sizes, seed, encoding and the optional normalizer.
void save_dataset(const std::string& dir, const Dataset& d);
Dataset load_dataset(const std::string& dir);

struct ModelFile {
  AnyModel model;
  std::string config_id;  // label of the training config that produced it
};

void save_model_json(const std::string& path, const AnyModel& model,
                     const std::string& config_id);
ModelFile load_model_json(const std::string& path);

// Columns: config_id,l_b,l_t,p,widths,train_loss,val_loss,wall_s; one row
// per grid entry in grid order.
void save_ablation_csv(const std::string& path, const std::vector<HyperConfig>& grid,
                       const std::vector<TrainReport>& reports);

// Columns: k,t,solve_s,iters,J,x*,u_applied*,y*,r*; one row per solved step.
void save_closed_loop_csv(const std::string& path, const ClosedLoopLog& log);

struct ChartSeries {
  std::string label;
  VectorXd y;
};

// Minimal standalone SVG polyline chart of the series against x.
void save_line_chart_svg(const std::string& path, const std::string& title, const VectorXd& x,
                         const std::vector<ChartSeries>& series);

}  // namespace donmpc
