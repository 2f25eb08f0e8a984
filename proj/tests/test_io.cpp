#include "donmpc/io.hpp"

#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "test_util.hpp"

using namespace donmpc;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test case, removed on destruction.
struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("donmpc_io_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

MatrixXd awkward_matrix() {
  MatrixXd m(3, 2);
  m << 1.0 / 3.0, -2.718281828459045e-12, 0.0, 6.02214076e23, -0.1, 9.999999999999998;
  return m;
}

}  // namespace

TEST_CASE("matrix CSV round-trips doubles exactly") {
  TempDir tmp;
  const MatrixXd m = awkward_matrix();
  save_matrix_csv(tmp.file("m.csv"), m, {"a", "b"});
  std::vector<std::string> header;
  MatrixXd back = load_matrix_csv(tmp.file("m.csv"), &header);
  CHECK(header == std::vector<std::string>{"a", "b"});
  CHECK(back == m);  // 17 significant digits reproduce the bits

  save_matrix_csv(tmp.file("nohdr.csv"), m);
  CHECK(load_matrix_csv(tmp.file("nohdr.csv")) == m);

  CHECK_THROWS(load_matrix_csv(tmp.file("missing.csv")));
}

TEST_CASE("trajectory CSV round-trips exactly") {
  SystemSpec sys = make_system("vdp");
  UniformRng rng(5);
  MatrixXd u = sample_hold_input(Box(-2.0, 2.0, 1), 12, 3, rng);
  VectorXd x0(2);
  x0 << 0.3, -0.6;
  Trajectory tr = simulate(sys, x0, u, 0.1);

  TempDir tmp;
  save_trajectory_csv(tmp.file("tr.csv"), tr);
  Trajectory back = load_trajectory_csv(tmp.file("tr.csv"));
  CHECK(back.times == tr.times);
  CHECK(back.states == tr.states);
  CHECK(back.inputs == tr.inputs);
  CHECK(back.outputs == tr.outputs);
}

TEST_CASE("dataset directories carry data, metadata and the normalizer") {
  SystemSpec sys = make_system("vdp");
  UniformRng rng(7);
  MatrixXd u = sample_hold_input(Box(-2.0, 2.0, 1), 30, 2, rng);
  VectorXd x0 = VectorXd::Zero(2);
  Dataset d = generate_open_loop(sys, x0, u, 4, 0.1);
  d.system = "vdp";
  d.seed = 7;
  d.norm = fit_normalizer(d);

  TempDir tmp;
  save_dataset(tmp.file("ds"), d);
  Dataset back = load_dataset(tmp.file("ds"));
  CHECK(back.layout == "ms");
  CHECK(back.system == "vdp");
  CHECK(back.seed == 7);
  CHECK(back.N == 4);
  CHECK(back.n_u == 1);
  CHECK(back.n_y == 1);
  CHECK(back.Ts == 0.1);
  CHECK(back.state_encoding == d.state_encoding);
  CHECK(back.U == d.U);
  CHECK(back.Y == d.Y);
  CHECK(back.Z == d.Z);
  REQUIRE(back.norm.has_value());
  CHECK(back.norm->u_shift == d.norm->u_shift);
  CHECK(back.norm->y_scale == d.norm->y_scale);

  // Without a fitted normalizer the field stays empty after the round trip.
  Dataset plain = d;
  plain.norm.reset();
  save_dataset(tmp.file("plain"), plain);
  CHECK(!load_dataset(tmp.file("plain")).norm.has_value());

  // The std layout survives as well.
  Dataset sd = build_standard_dataset(d);
  save_dataset(tmp.file("sd"), sd);
  Dataset sback = load_dataset(tmp.file("sd"));
  CHECK(sback.layout == "std");
  CHECK(sback.U == sd.U);
  CHECK(sback.Z == sd.Z);
}

TEST_CASE("model JSON round-trips both layouts bit-exactly") {
  TempDir tmp;
  UniformRng rng(11);

  MsDeepONet ms = make_ms_deeponet(3, 2, 2, 4, 0.1, 5, {8, 7}, {6}, Activation::Tanh, 2);
  ms.norm.u_shift << 0.5, -0.25;
  ms.norm.y_scale << 2.0, 1.0 / 3.0;
  save_model_json(tmp.file("ms.json"), AnyModel(ms), "l2_w8_p5");
  ModelFile mf = load_model_json(tmp.file("ms.json"));
  CHECK(mf.config_id == "l2_w8_p5");
  REQUIRE(std::holds_alternative<MsDeepONet>(mf.model));
  const auto& mb = std::get<MsDeepONet>(mf.model);
  CHECK(ms_get_params(mb) == ms_get_params(ms));
  CHECK(mb.N == 3);
  CHECK(mb.n_z == 4);
  CHECK(mb.Ts == 0.1);
  CHECK(mb.norm.u_shift == ms.norm.u_shift);
  CHECK(mb.norm.y_scale == ms.norm.y_scale);
  VectorXd u(6), z(4);
  for (int i = 0; i < 6; ++i) u(i) = rng.next(-1.0, 1.0);
  for (int i = 0; i < 4; ++i) z(i) = rng.next(-1.0, 1.0);
  CHECK(ms_forward(mb, u, z) == ms_forward(ms, u, z));

  StandardDeepONet sd =
      make_std_deeponet(3, 2, 1, 2, 0.4, 4, {6}, {5, 5}, Activation::Relu, 3);
  save_model_json(tmp.file("std.json"), AnyModel(sd), "cfg");
  ModelFile sf = load_model_json(tmp.file("std.json"));
  REQUIRE(std::holds_alternative<StandardDeepONet>(sf.model));
  const auto& sb = std::get<StandardDeepONet>(sf.model);
  CHECK(std_get_params(sb) == std_get_params(sd));
  CHECK(sb.branches.size() == 2);
  CHECK(sb.n_x == 2);
  CHECK(sb.trunk.act == Activation::Relu);
}

TEST_CASE("ablation CSV lists one row per config in grid order") {
  auto grid = make_grid({1, 2}, {10}, {4}, 50);
  std::vector<TrainReport> reports(2);
  reports[0] = {grid[0].id, 0.25, 0.5, 1.5, 100, 50, false, {}};
  reports[1] = {grid[1].id, 0.125, 0.0625, 3.0, 200, 50, false, {}};

  TempDir tmp;
  save_ablation_csv(tmp.file("ab.csv"), grid, reports);
  const std::string text = slurp(tmp.file("ab.csv"));
  CHECK(text.find("config_id,l_b,l_t,p,widths,train_loss,val_loss,wall_s") == 0);
  CHECK(text.find("l1_w10_p4,1,1,4,10,0.25,0.5,") != std::string::npos);
  CHECK(text.find("l2_w10_p4,2,2,4,10x10,0.125,0.0625,") != std::string::npos);
  const auto first = text.find("l1_w10_p4");
  const auto second = text.find("l2_w10_p4");
  CHECK(first < second);
}

TEST_CASE("closed-loop CSV carries one row per solved step") {
  ClosedLoopLog log;
  const int K = 3;
  log.times = VectorXd::LinSpaced(K + 1, 0.0, 0.3);
  log.states = MatrixXd::Random(2, K + 1);
  log.inputs = MatrixXd::Random(1, K + 1);
  log.outputs = MatrixXd::Random(1, K + 1);
  log.refs = MatrixXd::Constant(1, K + 1, 1.0);
  log.solve_s = VectorXd::Constant(K, 0.01);
  log.iters = VectorXd::Constant(K, 12);
  log.cost = VectorXd::Constant(K, 0.5);

  TempDir tmp;
  save_closed_loop_csv(tmp.file("cl.csv"), log);
  const std::string text = slurp(tmp.file("cl.csv"));
  CHECK(text.find("k,t,solve_s,iters,J,x1,x2,u1,y1,r1") == 0);
  int rows = 0;
  for (char c : text)
    if (c == '\n') ++rows;
  CHECK(rows == K + 1);  // header plus K data rows

  std::vector<std::string> hdr;
  MatrixXd raw = load_matrix_csv(tmp.file("cl.csv"), &hdr);
  CHECK(raw.rows() == K);
  CHECK(raw(0, 0) == 0.0);
  CHECK(raw(2, 1) == doctest::Approx(0.2));
  CHECK(raw(1, 4) == 0.5);
  CHECK(raw(1, 5) == log.states(0, 1));
  CHECK(raw(1, 9) == 1.0);
}

TEST_CASE("SVG charts are standalone and contain every series") {
  TempDir tmp;
  VectorXd x = VectorXd::LinSpaced(20, 0.0, 1.9);
  ChartSeries a{"measured", x.array().sin()};
  ChartSeries b{"reference", VectorXd::Constant(20, 0.5)};
  save_line_chart_svg(tmp.file("c.svg"), "tracking", x, {a, b});
  const std::string text = slurp(tmp.file("c.svg"));
  CHECK(text.find("<svg") != std::string::npos);
  CHECK(text.find("</svg>") != std::string::npos);
  CHECK(text.find("tracking") != std::string::npos);
  CHECK(text.find("measured") != std::string::npos);
  CHECK(text.find("reference") != std::string::npos);
  CHECK(text.find("<polyline") != std::string::npos);
}
