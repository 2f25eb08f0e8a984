// Command-line front end for the operator-learning MPC pipeline:
//
//   donmpc generate   sample a system and write a windowed dataset
//   donmpc train      fit one configuration (a one-entry ablation)
//   donmpc ablate     grid-search configurations, keep the best model
//   donmpc mpc        run a saved model in closed loop against the plant
//   donmpc reproduce  full pipeline for a benchmark, markdown summary
//
// Every command is deterministic under --seed. The output root defaults to
// $DONMPC_OUT, then ./out.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "donmpc/io.hpp"
#include "donmpc/mpc.hpp"
#include "donmpc/training.hpp"

using namespace donmpc;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string out_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("DONMPC_OUT"); env && *env) return env;
  return "out";
}

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
  if (out.empty()) throw CLI::ValidationError("expected a comma-separated integer list");
  return out;
}

VectorXd json_vector(const json& j) {
  VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

// Scalar -> w*I, array -> diag, nested array -> full matrix.
MatrixXd json_weight(const json& j, int dim) {
  if (j.is_number()) return j.get<double>() * MatrixXd::Identity(dim, dim);
  if (j.is_array() && !j.empty() && j[0].is_array()) {
    MatrixXd m(j.size(), j[0].size());
    for (std::size_t r = 0; r < j.size(); ++r)
      for (std::size_t c = 0; c < j[r].size(); ++c) m(r, c) = j[r][c].get<double>();
    return m;
  }
  return MatrixXd(json_vector(j).asDiagonal());
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw std::runtime_error("cannot open " + path);
  json j;
  in >> j;
  return j;
}

struct SystemDefaults {
  double ts;
  int horizon;
  double lo, hi;  // excitation range per channel
  int hold;       // steps each excitation level is held
};

// Hold lengths matter: training windows must contain the near-constant input
// stretches a tracking controller produces, not just step-wise dither.
SystemDefaults defaults_for(const std::string& system) {
  if (system == "vdp") return {0.1, 10, -3.0, 3.0, 3};
  if (system == "quadtank") return {5.0, 20, 0.5, 4.0, 10};
  if (system == "cartpole") return {0.1, 40, -20.0, 20.0, 1};
  throw std::runtime_error("unknown system: " + system);
}

VectorXd default_x0(const SystemSpec& sys) {
  if (sys.name == "quadtank") {
    VectorXd u_mid(2);
    u_mid << 2.0, 2.0;
    return quadtank_equilibrium(sys, u_mid);
  }
  return VectorXd::Zero(sys.n_x);
}

// ------------------------------------------------------------ generate ----

struct GenerateArgs {
  std::string system;
  int samples = 2000;
  double ts = 0.0;  // 0 = per-system default
  int horizon = 0;
  std::string layout = "ms";
  std::string encoding = "state";
  int t_ini = 2;
  int hold = 0;  // 0 = per-system default
  int trajectories = 100;
  int traj_len = 100;
  double noise = 2.0;  // 10% of the +/-20 force range
  int explore_traj = 0;
  std::uint64_t seed = 1;
  std::string out;
  std::string name;
};

// Random-input rollouts started near the upright equilibrium. Swing-up data
// alone pairs near-upright states exclusively with the catch controller's
// inputs, so a model fit to it extrapolates poorly off that policy; these
// rollouts supply the missing falls and off-policy forcing.
Dataset cartpole_exploration(const SystemSpec& sys, int n_traj, int N, double ts,
                             std::uint64_t seed) {
  const int traj_len = 70;
  Box x0_box((VectorXd(4) << -0.5, -0.35, -0.5, -1.0).finished(),
             (VectorXd(4) << 0.5, 0.35, 0.5, 1.0).finished());
  const int n_strong = n_traj / 3;
  const int n_gentle = n_traj - n_strong;
  Dataset d =
      generate_rollout_batch(sys, x0_box, Box(-6.0, 6.0, 1), n_gentle, traj_len, N, ts, 3, seed);
  if (n_strong > 0)
    d = concat_datasets(d, generate_rollout_batch(sys, x0_box, Box(-14.0, 14.0, 1), n_strong,
                                                  traj_len, N, ts, 2, seed + 1));
  return d;
}

int cmd_generate(const GenerateArgs& a) {
  SystemDefaults d = defaults_for(a.system);
  const double ts = a.ts > 0.0 ? a.ts : d.ts;
  const int N = a.horizon > 0 ? a.horizon : d.horizon;
  SystemSpec sys = make_system(a.system);

  Dataset data;
  if (a.system == "cartpole") {
    data = generate_swingup_dataset(sys, a.trajectories, a.traj_len, N, ts, a.noise, a.seed);
    if (a.explore_traj > 0)
      data = concat_datasets(data, cartpole_exploration(sys, a.explore_traj, N, ts, a.seed + 1));
  } else {
    UniformRng rng(a.seed);
    MatrixXd u = sample_hold_input(Box(d.lo, d.hi, sys.n_u), a.samples,
                                   a.hold > 0 ? a.hold : d.hold, rng);
    DatagenOptions opts;
    opts.state_encoding = a.encoding;
    opts.t_ini = a.t_ini;
    data = generate_open_loop(sys, default_x0(sys), u, N, ts, opts);
  }
  data.system = a.system;
  data.seed = a.seed;
  if (a.layout == "std") data = build_standard_dataset(data);
  data.norm = fit_normalizer(data);

  const std::string name =
      a.name.empty() ? a.system + "_" + a.layout + "_s" + std::to_string(a.seed) : a.name;
  const fs::path dir = fs::path(out_root(a.out)) / name;
  save_dataset(dir.string(), data);
  std::printf("%s: U: %ldx%ld, Y: %ldx%ld, Z: %ldx%ld -> %s\n", a.system.c_str(), data.U.rows(),
              data.U.cols(), data.Y.rows(), data.Y.cols(), data.Z.rows(), data.Z.cols(),
              dir.c_str());
  return 0;
}

// -------------------------------------------------------- train/ablate ----

struct AblateArgs {
  std::string data;
  std::string depths = "1,2,3";
  std::string widths = "20,30,40";
  std::string ps = "20,30,40";
  int epochs = 5000;
  double lr = 1e-3;
  double lambda = 1e-8;
  double train_frac = 0.8;
  int workers = 1;
  std::uint64_t seed = 1;
  std::string out;
  std::string config;
  std::string name = "ablation";
};

std::vector<HyperConfig> grid_from_args(const AblateArgs& a) {
  if (!a.config.empty()) {
    json j = load_json(a.config);
    std::vector<HyperConfig> grid;
    for (const auto& e : j.at("grid")) {
      HyperConfig c;
      c.p = e.value("p", c.p);
      if (e.contains("widths")) {
        c.branch_widths = e["widths"].get<std::vector<int>>();
        c.trunk_widths = c.branch_widths;
      }
      if (e.contains("branch_widths")) c.branch_widths = e["branch_widths"].get<std::vector<int>>();
      if (e.contains("trunk_widths")) c.trunk_widths = e["trunk_widths"].get<std::vector<int>>();
      c.act = e.value("act", std::string("tanh")) == "relu" ? Activation::Relu : Activation::Tanh;
      c.lambda = e.value("lambda", a.lambda);
      c.lr = e.value("lr", a.lr);
      c.epochs = e.value("epochs", a.epochs);
      c.id = e.value("id", c.label());
      grid.push_back(std::move(c));
    }
    if (grid.empty()) throw std::runtime_error("config grid is empty");
    return grid;
  }
  return make_grid(parse_int_list(a.depths), parse_int_list(a.widths), parse_int_list(a.ps),
                   a.epochs, a.lambda, a.lr);
}

// Same split, per-config seeds and selection rule as the sequential library
// path; --workers only distributes the independent trainings.
int run_ablation(const Dataset& full, const std::vector<HyperConfig>& grid, const AblateArgs& a) {
  auto [train, val] = split_dataset(full, a.train_frac, a.seed);

  std::vector<TrainReport> reports(grid.size());
  std::vector<std::optional<AnyModel>> models(grid.size());
  const int workers = std::max(1, std::min(a.workers, static_cast<int>(grid.size())));
  std::atomic<std::size_t> next{0};
  std::mutex print_mu;
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < grid.size(); i = next.fetch_add(1)) {
      HyperConfig c = grid[i];
      c.seed = config_seed(c, a.seed);
      auto [model, rep] = train_model(train, &val, c);
      {
        std::lock_guard<std::mutex> lk(print_mu);
        std::printf("  %-14s train %.4e val %.4e (%.0fs)\n", rep.config_id.c_str(),
                    rep.train_loss, rep.val_loss, rep.wall_s);
      }
      models[i] = std::move(model);
      reports[i] = std::move(rep);
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  int best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const bool better = reports[i].val_loss < reports[best].val_loss ||
                        (reports[i].val_loss == reports[best].val_loss &&
                         reports[i].param_count < reports[best].param_count);
    if (better) best = static_cast<int>(i);
  }

  const fs::path dir = fs::path(out_root(a.out)) / a.name;
  fs::create_directories(dir);
  save_ablation_csv((dir / "report.csv").string(), grid, reports);
  save_model_json((dir / "model.json").string(), *models[best], grid[best].id);
  std::printf("best: %s val %.4e -> %s\n", grid[best].id.c_str(), reports[best].val_loss,
              (dir / "model.json").c_str());
  return 0;
}

int cmd_ablate(const AblateArgs& a) {
  return run_ablation(load_dataset(a.data), grid_from_args(a), a);
}

struct TrainArgs {
  std::string data;
  int p = 20;
  std::string widths = "40,40";
  int epochs = 5000;
  double lr = 1e-3;
  double lambda = 1e-8;
  std::string act = "tanh";
  double train_frac = 0.8;
  std::uint64_t seed = 1;
  std::string out;
  std::string config;
  std::string name = "train";
};

int cmd_train(const TrainArgs& t) {
  AblateArgs a;
  a.data = t.data;
  a.epochs = t.epochs;
  a.lr = t.lr;
  a.lambda = t.lambda;
  a.train_frac = t.train_frac;
  a.seed = t.seed;
  a.out = t.out;
  a.config = t.config;
  a.name = t.name;
  if (!t.config.empty()) return cmd_ablate(a);

  HyperConfig c;
  c.p = t.p;
  c.branch_widths = parse_int_list(t.widths);
  c.trunk_widths = c.branch_widths;
  c.act = t.act == "relu" ? Activation::Relu : Activation::Tanh;
  c.epochs = t.epochs;
  c.lr = t.lr;
  c.lambda = t.lambda;
  c.id = c.label();
  return run_ablation(load_dataset(t.data), {c}, a);
}

// ----------------------------------------------------------------- mpc ----

struct Scenario {
  SystemSpec sys;
  MpcProblem prob;
  VectorXd x0;
  VectorXd u_init;
  int steps = 100;
  std::vector<std::pair<double, VectorXd>> reference;
};

VectorXd reference_at(const std::vector<std::pair<double, VectorXd>>& steps, double t) {
  VectorXd r = steps.front().second;
  for (const auto& [from, v] : steps)
    if (t >= from) r = v;
  return r;
}

Scenario parse_scenario(const json& j, int N, int n_y, int n_u) {
  Scenario sc;
  std::map<std::string, double> overrides;
  if (j.contains("params"))
    for (const auto& [k, v] : j["params"].items()) overrides[k] = v.get<double>();
  sc.sys = make_system(j.at("system").get<std::string>(), overrides);

  MatrixXd Q = json_weight(j.at("Q"), n_y);
  MatrixXd P = j.contains("P") ? json_weight(j["P"], n_y) : Q;
  MatrixXd R = json_weight(j.at("R"), n_u);
  std::optional<Box> u_box, y_box;
  if (j.contains("u_box"))
    u_box = Box(json_vector(j["u_box"][0]), json_vector(j["u_box"][1]));
  if (j.contains("y_box"))
    y_box = Box(json_vector(j["y_box"][0]), json_vector(j["y_box"][1]));
  sc.prob = make_problem(Q, P, R, N, u_box, y_box);
  if (j.contains("solver")) {
    const auto& s = j["solver"];
    sc.prob.settings.max_iters = s.value("max_iters", sc.prob.settings.max_iters);
    sc.prob.settings.step_tol = s.value("step_tol", sc.prob.settings.step_tol);
    sc.prob.settings.y_penalty = s.value("y_penalty", sc.prob.settings.y_penalty);
  }

  sc.x0 = j.contains("x0") ? json_vector(j["x0"]) : default_x0(sc.sys);
  sc.u_init = j.contains("u_init") ? json_vector(j["u_init"]) : VectorXd::Zero(n_u);
  sc.steps = j.value("steps", 100);
  for (const auto& e : j.at("reference"))
    sc.reference.emplace_back(e.at("t").get<double>(), json_vector(e.at("r")));
  if (sc.reference.empty()) throw std::runtime_error("scenario needs a reference");
  return sc;
}

struct MpcOutcome {
  ClosedLoopLog log;
  double mean_solve = 0.0;
};

MpcOutcome run_scenario(const MultiStepPredictor& pred, Scenario& sc, const std::string& dir,
                        const std::string& tag, bool svg) {
  auto ref = [&sc](double t) { return reference_at(sc.reference, t); };
  ClosedLoopLog log = run_closed_loop(sc.sys, pred, sc.prob, sc.x0, ref, sc.steps, sc.u_init);
  fs::create_directories(dir);
  save_closed_loop_csv((fs::path(dir) / (tag + "_closed_loop.csv")).string(), log);
  if (svg) {
    for (int ch = 0; ch < log.outputs.rows(); ++ch) {
      ChartSeries measured{"y" + std::to_string(ch + 1), log.outputs.row(ch).transpose()};
      ChartSeries target{"r" + std::to_string(ch + 1), log.refs.row(ch).transpose()};
      save_line_chart_svg(
          (fs::path(dir) / (tag + "_y" + std::to_string(ch + 1) + ".svg")).string(),
          tag + " tracking, channel " + std::to_string(ch + 1), log.times, {measured, target});
    }
  }
  MpcOutcome out{std::move(log), 0.0};
  out.mean_solve = out.log.solve_s.size() ? out.log.solve_s.mean() : 0.0;
  return out;
}

std::unique_ptr<MultiStepPredictor> make_predictor(const AnyModel& model) {
  if (std::holds_alternative<MsDeepONet>(model))
    return std::make_unique<MsPredictor>(std::get<MsDeepONet>(model));
  return std::make_unique<StdPredictor>(std::get<StandardDeepONet>(model));
}

struct MpcArgs {
  std::string model;
  std::string scenario;
  std::string out;
  std::string name = "mpc";
  bool svg = false;
};

int cmd_mpc(const MpcArgs& a) {
  ModelFile mf = load_model_json(a.model);
  auto pred = make_predictor(mf.model);
  json j = load_json(a.scenario);
  Scenario sc = parse_scenario(j, pred->horizon(), pred->n_y(), pred->n_u());
  if (sc.sys.n_x != pred->n_z())
    throw std::runtime_error("model condition size does not match the plant state");

  const fs::path dir = fs::path(out_root(a.out)) / a.name;
  MpcOutcome res = run_scenario(*pred, sc, dir.string(), mf.config_id, a.svg);
  std::printf("AME %.4f | mean solve %.4fs | mean iters %.1f | log -> %s\n", res.log.ame,
              res.mean_solve, res.log.iters.size() ? res.log.iters.mean() : 0.0, dir.c_str());
  return 0;
}

// ----------------------------------------------------------- reproduce ----

struct ReproduceArgs {
  std::string example;
  std::uint64_t seed = 1;
  std::string out;
  bool full_scale = false;
  bool svg = true;
};

struct PipelineResult {
  TrainReport report;
  double ame = 0.0;
  double mean_solve = 0.0;
};

json builtin_scenario(const std::string& example) {
  if (example == "vdp")
    return json{{"system", "vdp"},
                {"Q", 100.0},
                {"P", 500.0},
                {"R", 1.0},
                {"steps", 180},
                {"x0", {0.0, 0.0}},
                {"u_box", {{-3.0}, {3.0}}},
                {"reference", {{{"t", 0.0}, {"r", {2.0}}}, {{"t", 9.0}, {"r", {0.5}}}}}};
  if (example == "quadtank")
    return json{{"system", "quadtank"},
                {"Q", 100.0},
                {"R", 1.0},
                {"steps", 160},
                {"u_box", {{0.0, 0.0}, {4.0, 4.0}}},
                {"reference", json::array()}};  // filled from equilibria below
  if (example == "cartpole")
    return json{{"system", "cartpole"},
                {"Q", {1.0, 1000.0, 1.0, 1.0, 1.0}},
                {"R", 0.01},
                {"steps", 50},
                {"x0", {0.0, 0.1, 0.0, 0.0}},
                {"u_box", {{-20.0}, {20.0}}},
                {"reference", {{{"t", 0.0}, {"r", {0.0, 1.0, 0.0, 0.0, 0.0}}}}}};
  throw std::runtime_error("unknown example: " + example);
}

int cmd_reproduce(const ReproduceArgs& a) {
  const fs::path dir = fs::path(out_root(a.out)) / ("reproduce_" + a.example);
  fs::create_directories(dir);

  const bool both_layouts = a.example != "cartpole";
  const int samples = a.full_scale ? 8000 : 2000;
  const int epochs = a.example == "cartpole" ? (a.full_scale ? 5000 : 600)
                                             : (a.full_scale ? 40000 : 5000);
  const int trajectories = a.full_scale ? 1100 : 100;

  SystemDefaults d = defaults_for(a.example);
  SystemSpec sys = make_system(a.example);

  // Stage 1: data.
  Dataset ms_data;
  if (a.example == "cartpole") {
    ms_data = generate_swingup_dataset(sys, trajectories, 100, d.horizon, d.ts, 1.0, a.seed);
  } else {
    UniformRng rng(a.seed);
    MatrixXd u = sample_hold_input(Box(d.lo, d.hi, sys.n_u), samples, d.hold, rng);
    ms_data = generate_open_loop(sys, default_x0(sys), u, d.horizon, d.ts);
  }
  ms_data.system = a.example;
  ms_data.seed = a.seed;
  save_dataset((dir / "dataset_ms").string(), ms_data);

  // Stage 2/3: train and run closed loop per layout.
  json sj = builtin_scenario(a.example);
  if (a.example == "quadtank") {
    VectorXd u_a(2), u_b(2);
    u_a << 2.0, 2.0;
    u_b << 2.4, 1.8;
    const VectorXd la = quadtank_equilibrium(sys, u_a);
    const VectorXd lb = quadtank_equilibrium(sys, u_b);
    sj["x0"] = {la(0), la(1), la(2), la(3)};
    sj["u_init"] = {2.0, 2.0};
    sj["reference"] = {{{"t", 0.0}, {"r", {lb(0), lb(1), lb(2), lb(3)}}},
                       {{"t", 400.0}, {"r", {la(0), la(1), la(2), la(3)}}}};
  }
  if (a.example == "cartpole" && a.full_scale) {
    sj["x0"] = {0.0, 3.14159265358979, 0.0, 0.0};
    sj["steps"] = 100;
  }

  HyperConfig cfg;
  if (a.example == "vdp") {
    cfg.p = a.full_scale ? 20 : 10;
    cfg.branch_widths = a.full_scale ? std::vector<int>{40, 40, 40} : std::vector<int>{24};
  } else if (a.example == "quadtank") {
    cfg.p = a.full_scale ? 20 : 12;
    cfg.branch_widths = a.full_scale ? std::vector<int>{20, 20} : std::vector<int>{20, 20};
  } else {
    cfg.p = a.full_scale ? 40 : 8;
    cfg.branch_widths = a.full_scale ? std::vector<int>{128, 256, 128} : std::vector<int>{48};
  }
  cfg.trunk_widths = cfg.branch_widths;
  cfg.epochs = epochs;

  std::vector<std::string> layouts{"ms"};
  if (both_layouts) layouts.insert(layouts.begin(), "std");
  std::map<std::string, PipelineResult> results;

  for (const std::string& layout : layouts) {
    Dataset full = layout == "ms" ? ms_data : build_standard_dataset(ms_data);
    auto [train, val] = split_dataset(full, 0.8, a.seed);
    HyperConfig c = cfg;
    c.seed = config_seed(c, a.seed);
    auto [model, rep] = train_model(train, &val, c);
    save_model_json((dir / ("model_" + layout + ".json")).string(), model, c.label());
    std::printf("%s: train %.4e val %.4e (%.0fs)\n", layout.c_str(), rep.train_loss,
                rep.val_loss, rep.wall_s);

    auto pred = make_predictor(model);
    Scenario sc = parse_scenario(sj, pred->horizon(), pred->n_y(), pred->n_u());
    MpcOutcome res = run_scenario(*pred, sc, dir.string(), layout, a.svg);
    results[layout] = {rep, res.log.ame, res.mean_solve};
    std::printf("%s: AME %.4f, mean solve %.4fs\n", layout.c_str(), res.log.ame, res.mean_solve);
  }

  // Stage 4: markdown summary.
  std::ofstream md(dir / "report.md");
  md << "# " << a.example << " benchmark report\n\n";
  md << "Scale: " << (a.full_scale ? "full" : "desk (reduced samples/epochs; use --full-scale "
                                              "to restore the reference settings)")
     << "\n\n";
  md << "- samples/trajectories: " << (a.example == "cartpole" ? trajectories : samples) << "\n";
  md << "- epochs: " << epochs << ", master seed: " << a.seed << "\n\n";
  md << "| metric |";
  for (const auto& l : layouts) md << ' ' << (l == "ms" ? "multi-step" : "standard") << " |";
  md << "\n|---|";
  for (std::size_t i = 0; i < layouts.size(); ++i) md << "---|";
  md << "\n";
  auto row = [&](const std::string& label, auto getter) {
    md << "| " << label << " |";
    for (const auto& l : layouts) {
      char buf[64];
      std::snprintf(buf, sizeof buf, " %.6g |", getter(results.at(l)));
      md << buf;
    }
    md << "\n";
  };
  row("validation loss", [](const PipelineResult& r) { return r.report.val_loss; });
  row("training loss", [](const PipelineResult& r) { return r.report.train_loss; });
  row("AME", [](const PipelineResult& r) { return r.ame; });
  row("mean solve time [s]", [](const PipelineResult& r) { return r.mean_solve; });
  row("training time [min]", [](const PipelineResult& r) { return r.report.wall_s / 60.0; });
  md << "\nArtifacts: dataset_ms/, model_*.json, *_closed_loop.csv";
  if (a.svg) md << ", *_y*.svg";
  md << "\n";
  std::printf("report -> %s\n", (dir / "report.md").c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"operator-network predictive control pipeline"};
  app.require_subcommand(1);

  GenerateArgs g;
  auto* cg = app.add_subcommand("generate", "sample a system into a windowed dataset");
  cg->add_option("--system", g.system, "vdp | quadtank | cartpole")->required();
  cg->add_option("--samples", g.samples, "open-loop input samples");
  cg->add_option("--ts", g.ts, "sampling time (default per system)");
  cg->add_option("--horizon", g.horizon, "window/prediction length N");
  cg->add_option("--layout", g.layout, "ms | std")->check(CLI::IsMember({"ms", "std"}));
  cg->add_option("--encoding", g.encoding, "state | shifted_io")
      ->check(CLI::IsMember({"state", "shifted_io"}));
  cg->add_option("--t-ini", g.t_ini, "past-window length for shifted_io");
  cg->add_option("--hold", g.hold, "samples each excitation level is held");
  cg->add_option("--trajectories", g.trajectories, "cartpole: number of rollouts");
  cg->add_option("--traj-len", g.traj_len, "cartpole: rollout length");
  cg->add_option("--noise", g.noise, "cartpole: excitation noise amplitude");
  cg->add_option("--explore-traj", g.explore_traj,
                 "cartpole: extra random-input rollouts from near-upright starts");
  cg->add_option("--seed", g.seed, "master seed");
  cg->add_option("--out", g.out, "output root (default $DONMPC_OUT or ./out)");
  cg->add_option("--name", g.name, "dataset directory name");

  TrainArgs t;
  auto* ct = app.add_subcommand("train", "fit a single configuration");
  ct->add_option("--data", t.data, "dataset directory")->required();
  ct->add_option("--p", t.p, "basis count");
  ct->add_option("--widths", t.widths, "hidden widths, e.g. 40,40");
  ct->add_option("--epochs", t.epochs, "training epochs");
  ct->add_option("--lr", t.lr, "Adam step size");
  ct->add_option("--lambda", t.lambda, "L2 penalty weight");
  ct->add_option("--act", t.act, "tanh | relu")->check(CLI::IsMember({"tanh", "relu"}));
  ct->add_option("--train-frac", t.train_frac, "training share of the split");
  ct->add_option("--seed", t.seed, "master seed");
  ct->add_option("--out", t.out, "output root");
  ct->add_option("--config", t.config, "JSON config with an explicit grid");
  ct->add_option("--name", t.name, "output directory name");

  AblateArgs b;
  auto* cb = app.add_subcommand("ablate", "grid-search configurations");
  cb->add_option("--data", b.data, "dataset directory")->required();
  cb->add_option("--depths", b.depths, "hidden-layer counts, e.g. 1,2,3");
  cb->add_option("--widths", b.widths, "hidden widths, e.g. 20,30,40");
  cb->add_option("--ps", b.ps, "basis counts, e.g. 20,30,40");
  cb->add_option("--epochs", b.epochs, "epochs per configuration");
  cb->add_option("--lr", b.lr, "Adam step size");
  cb->add_option("--lambda", b.lambda, "L2 penalty weight");
  cb->add_option("--train-frac", b.train_frac, "training share of the split");
  cb->add_option("--workers", b.workers, "parallel trainings");
  cb->add_option("--seed", b.seed, "master seed");
  cb->add_option("--out", b.out, "output root");
  cb->add_option("--config", b.config, "JSON config with an explicit grid");
  cb->add_option("--name", b.name, "output directory name");

  MpcArgs m;
  auto* cm = app.add_subcommand("mpc", "closed-loop run of a saved model");
  cm->add_option("--model", m.model, "model JSON path")->required();
  cm->add_option("--scenario", m.scenario, "scenario JSON path")->required();
  cm->add_option("--out", m.out, "output root");
  cm->add_option("--name", m.name, "output directory name");
  cm->add_flag("--svg", m.svg, "emit tracking charts");

  ReproduceArgs r;
  auto* cr = app.add_subcommand("reproduce", "full pipeline for a benchmark");
  cr->add_option("example", r.example, "vdp | quadtank | cartpole")
      ->required()
      ->check(CLI::IsMember({"vdp", "quadtank", "cartpole"}));
  cr->add_option("--seed", r.seed, "master seed");
  cr->add_option("--out", r.out, "output root");
  cr->add_flag("--full-scale", r.full_scale, "restore reference-scale settings");
  cr->add_flag("!--no-svg", r.svg, "skip tracking charts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (cg->parsed()) return cmd_generate(g);
    if (ct->parsed()) return cmd_train(t);
    if (cb->parsed()) return cmd_ablate(b);
    if (cm->parsed()) return cmd_mpc(m);
    if (cr->parsed()) return cmd_reproduce(r);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
