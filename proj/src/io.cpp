#include "donmpc/io.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace donmpc {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  if (const fs::path parent = fs::path(path).parent_path(); !parent.empty())
    fs::create_directories(parent);
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  return f;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open for reading: " + path);
  return f;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

json vector_to_json(const VectorXd& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

VectorXd json_to_vector(const json& a) {
  VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<int>(i)) = a[i].get<double>();
  return v;
}

json matrix_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatrixXd json_to_matrix(const json& rows) {
  const int nr = static_cast<int>(rows.size());
  if (nr == 0) return MatrixXd(0, 0);
  const int nc = static_cast<int>(rows[0].size());
  MatrixXd m(nr, nc);
  for (int r = 0; r < nr; ++r)
    for (int c = 0; c < nc; ++c) m(r, c) = rows[r][c].get<double>();
  return m;
}

json ffn_to_json(const Ffn& net) {
  json j;
  j["activation"] = activation_name(net.act);
  j["W"] = json::array();
  j["b"] = json::array();
  for (std::size_t i = 0; i < net.W.size(); ++i) {
    j["W"].push_back(matrix_to_json(net.W[i]));
    j["b"].push_back(vector_to_json(net.b[i]));
  }
  return j;
}

Ffn ffn_from_json(const json& j) {
  Ffn net;
  net.act = activation_from_name(j.at("activation").get<std::string>());
  for (const auto& w : j.at("W")) net.W.push_back(json_to_matrix(w));
  for (const auto& b : j.at("b")) net.b.push_back(json_to_vector(b));
  if (net.W.size() != net.b.size() || net.W.empty())
    throw std::runtime_error("model file: malformed network");
  return net;
}

json normalizer_to_json(const Normalizer& n) {
  return json{{"u_shift", vector_to_json(n.u_shift)}, {"u_scale", vector_to_json(n.u_scale)},
              {"z_shift", vector_to_json(n.z_shift)}, {"z_scale", vector_to_json(n.z_scale)},
              {"y_shift", vector_to_json(n.y_shift)}, {"y_scale", vector_to_json(n.y_scale)}};
}

Normalizer normalizer_from_json(const json& j) {
  Normalizer n;
  n.u_shift = json_to_vector(j.at("u_shift"));
  n.u_scale = json_to_vector(j.at("u_scale"));
  n.z_shift = json_to_vector(j.at("z_shift"));
  n.z_scale = json_to_vector(j.at("z_scale"));
  n.y_shift = json_to_vector(j.at("y_shift"));
  n.y_scale = json_to_vector(j.at("y_scale"));
  return n;
}

}  // namespace

void save_matrix_csv(const std::string& path, const MatrixXd& m,
                     const std::vector<std::string>& header) {
  std::ofstream f = open_out(path);
  if (!header.empty()) {
    if (static_cast<int>(header.size()) != m.cols())
      throw std::invalid_argument("save_matrix_csv: header width mismatch");
    for (std::size_t i = 0; i < header.size(); ++i)
      f << header[i] << (i + 1 < header.size() ? "," : "\n");
  }
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) f << fmt17(m(r, c)) << (c + 1 < m.cols() ? "," : "\n");
}

MatrixXd load_matrix_csv(const std::string& path, std::vector<std::string>* header) {
  std::ifstream f = open_in(path);
  std::string line;
  std::vector<std::vector<double>> rows;
  bool first = true;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (first && header) {
      *header = cells;
      first = false;
      continue;
    }
    first = false;
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(std::stod(c));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) return MatrixXd(0, 0);
  MatrixXd m(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size()) throw std::runtime_error("ragged CSV: " + path);
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      m(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
  }
  return m;
}

void save_trajectory_csv(const std::string& path, const Trajectory& tr) {
  std::vector<std::string> header{"t"};
  for (int i = 0; i < tr.states.rows(); ++i) header.push_back("x" + std::to_string(i + 1));
  for (int i = 0; i < tr.inputs.rows(); ++i) header.push_back("u" + std::to_string(i + 1));
  for (int i = 0; i < tr.outputs.rows(); ++i) header.push_back("y" + std::to_string(i + 1));
  MatrixXd m(tr.samples(), header.size());
  m.col(0) = tr.times;
  int c = 1;
  m.middleCols(c, tr.states.rows()) = tr.states.transpose();
  c += tr.states.rows();
  m.middleCols(c, tr.inputs.rows()) = tr.inputs.transpose();
  c += tr.inputs.rows();
  m.middleCols(c, tr.outputs.rows()) = tr.outputs.transpose();
  save_matrix_csv(path, m, header);
}

Trajectory load_trajectory_csv(const std::string& path) {
  std::vector<std::string> header;
  MatrixXd m = load_matrix_csv(path, &header);
  int n_x = 0, n_u = 0, n_y = 0;
  for (const auto& h : header) {
    if (h.rfind('x', 0) == 0) ++n_x;
    else if (h.rfind('u', 0) == 0) ++n_u;
    else if (h.rfind('y', 0) == 0) ++n_y;
  }
  if (header.empty() || header[0] != "t" || 1 + n_x + n_u + n_y != static_cast<int>(header.size()))
    throw std::runtime_error("trajectory CSV: malformed header in " + path);
  Trajectory tr;
  tr.times = m.col(0);
  tr.states = m.middleCols(1, n_x).transpose();
  tr.inputs = m.middleCols(1 + n_x, n_u).transpose();
  tr.outputs = m.middleCols(1 + n_x + n_u, n_y).transpose();
  return tr;
}

void save_dataset(const std::string& dir, const Dataset& d) {
  fs::create_directories(dir);
  save_matrix_csv(dir + "/U.csv", d.U);
  save_matrix_csv(dir + "/Y.csv", d.Y);
  save_matrix_csv(dir + "/Z.csv", d.Z);
  json meta;
  meta["layout"] = d.layout;
  meta["system"] = d.system;
  meta["N"] = d.N;
  meta["n_u"] = d.n_u;
  meta["n_y"] = d.n_y;
  meta["Ts"] = d.Ts;
  meta["seed"] = d.seed;
  meta["state_encoding"] = d.state_encoding;
  meta["t_ini"] = d.t_ini;
  meta["columns"] = d.columns();
  if (d.norm) meta["normalizer"] = normalizer_to_json(*d.norm);
  std::ofstream f = open_out(dir + "/meta.json");
  f << meta.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream f = open_in(dir + "/meta.json");
  json meta = json::parse(f);
  Dataset d;
  d.layout = meta.at("layout").get<std::string>();
  d.system = meta.at("system").get<std::string>();
  d.N = meta.at("N").get<int>();
  d.n_u = meta.at("n_u").get<int>();
  d.n_y = meta.at("n_y").get<int>();
  d.Ts = meta.at("Ts").get<double>();
  d.seed = meta.at("seed").get<std::uint64_t>();
  d.state_encoding = meta.at("state_encoding").get<std::string>();
  d.t_ini = meta.at("t_ini").get<int>();
  if (meta.contains("normalizer")) d.norm = normalizer_from_json(meta["normalizer"]);
  d.U = load_matrix_csv(dir + "/U.csv");
  d.Y = load_matrix_csv(dir + "/Y.csv");
  d.Z = load_matrix_csv(dir + "/Z.csv");
  if (d.U.cols() != d.Y.cols() || d.U.cols() != d.Z.cols())
    throw std::runtime_error("dataset: column counts disagree in " + dir);
  return d;
}

void save_model_json(const std::string& path, const AnyModel& model,
                     const std::string& config_id) {
  json j;
  j["config_id"] = config_id;
  if (std::holds_alternative<MsDeepONet>(model)) {
    const auto& m = std::get<MsDeepONet>(model);
    j["layout"] = "ms";
    j["p"] = m.p;
    j["N"] = m.N;
    j["n_u"] = m.n_u;
    j["n_y"] = m.n_y;
    j["n_z"] = m.n_z;
    j["Ts"] = m.Ts;
    j["branch"] = ffn_to_json(m.branch);
    j["trunk"] = ffn_to_json(m.trunk);
    j["normalizer"] = normalizer_to_json(m.norm);
  } else {
    const auto& m = std::get<StandardDeepONet>(model);
    j["layout"] = "std";
    j["p"] = m.p;
    j["N"] = m.N;
    j["n_u"] = m.n_u;
    j["n_y"] = m.n_y;
    j["n_x"] = m.n_x;
    j["Ts"] = m.Ts;
    j["branches"] = json::array();
    for (const auto& b : m.branches) j["branches"].push_back(ffn_to_json(b));
    j["trunk"] = ffn_to_json(m.trunk);
    j["normalizer"] = normalizer_to_json(m.norm);
  }
  std::ofstream f = open_out(path);
  f << j.dump(2) << "\n";
}

ModelFile load_model_json(const std::string& path) {
  std::ifstream f = open_in(path);
  json j = json::parse(f);
  ModelFile out;
  out.config_id = j.value("config_id", "");
  const std::string layout = j.at("layout").get<std::string>();
  if (layout == "ms") {
    MsDeepONet m;
    m.p = j.at("p").get<int>();
    m.N = j.at("N").get<int>();
    m.n_u = j.at("n_u").get<int>();
    m.n_y = j.at("n_y").get<int>();
    m.n_z = j.at("n_z").get<int>();
    m.Ts = j.at("Ts").get<double>();
    m.branch = ffn_from_json(j.at("branch"));
    m.trunk = ffn_from_json(j.at("trunk"));
    m.norm = normalizer_from_json(j.at("normalizer"));
    out.model = std::move(m);
  } else if (layout == "std") {
    StandardDeepONet m;
    m.p = j.at("p").get<int>();
    m.N = j.at("N").get<int>();
    m.n_u = j.at("n_u").get<int>();
    m.n_y = j.at("n_y").get<int>();
    m.n_x = j.at("n_x").get<int>();
    m.Ts = j.at("Ts").get<double>();
    for (const auto& b : j.at("branches")) m.branches.push_back(ffn_from_json(b));
    m.trunk = ffn_from_json(j.at("trunk"));
    m.norm = normalizer_from_json(j.at("normalizer"));
    out.model = std::move(m);
  } else {
    throw std::runtime_error("model file: unknown layout " + layout);
  }
  return out;
}

void save_ablation_csv(const std::string& path, const std::vector<HyperConfig>& grid,
                       const std::vector<TrainReport>& reports) {
  if (grid.size() != reports.size())
    throw std::invalid_argument("save_ablation_csv: grid/report size mismatch");
  std::ofstream f = open_out(path);
  f << "config_id,l_b,l_t,p,widths,train_loss,val_loss,wall_s\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto& c = grid[i];
    const auto& r = reports[i];
    std::string widths;
    for (std::size_t k = 0; k < c.branch_widths.size(); ++k)
      widths += (k ? "x" : "") + std::to_string(c.branch_widths[k]);
    f << c.label() << ',' << c.branch_widths.size() << ',' << c.trunk_widths.size() << ','
      << c.p << ',' << widths << ',' << fmt17(r.train_loss) << ',' << fmt17(r.val_loss) << ','
      << fmt17(r.wall_s) << "\n";
  }
}

void save_closed_loop_csv(const std::string& path, const ClosedLoopLog& log) {
  std::ofstream f = open_out(path);
  f << "k,t,solve_s,iters,J";
  for (int i = 0; i < log.states.rows(); ++i) f << ",x" << i + 1;
  for (int i = 0; i < log.inputs.rows(); ++i) f << ",u" << i + 1;
  for (int i = 0; i < log.outputs.rows(); ++i) f << ",y" << i + 1;
  for (int i = 0; i < log.refs.rows(); ++i) f << ",r" << i + 1;
  f << "\n";
  const int K = static_cast<int>(log.solve_s.size());
  for (int k = 0; k < K; ++k) {
    f << k << ',' << fmt17(log.times(k)) << ',' << fmt17(log.solve_s(k)) << ','
      << static_cast<long>(log.iters(k)) << ',' << fmt17(log.cost(k));
    for (int i = 0; i < log.states.rows(); ++i) f << ',' << fmt17(log.states(i, k));
    for (int i = 0; i < log.inputs.rows(); ++i) f << ',' << fmt17(log.inputs(i, k));
    for (int i = 0; i < log.outputs.rows(); ++i) f << ',' << fmt17(log.outputs(i, k));
    for (int i = 0; i < log.refs.rows(); ++i) f << ',' << fmt17(log.refs(i, k));
    f << "\n";
  }
}

void save_line_chart_svg(const std::string& path, const std::string& title, const VectorXd& x,
                         const std::vector<ChartSeries>& series) {
  if (series.empty() || x.size() < 2)
    throw std::invalid_argument("save_line_chart_svg: nothing to plot");
  const int W = 860, H = 420, ml = 64, mr = 180, mt = 40, mb = 44;
  double ymin = series[0].y.minCoeff(), ymax = series[0].y.maxCoeff();
  for (const auto& s : series) {
    if (s.y.size() != x.size())
      throw std::invalid_argument("save_line_chart_svg: series length mismatch");
    ymin = std::min(ymin, s.y.minCoeff());
    ymax = std::max(ymax, s.y.maxCoeff());
  }
  if (ymax - ymin < 1e-12) {
    ymax += 0.5;
    ymin -= 0.5;
  }
  const double xmin = x.minCoeff(), xmax = x.maxCoeff();
  auto px = [&](double v) { return ml + (v - xmin) / (xmax - xmin) * (W - ml - mr); };
  auto py = [&](double v) { return H - mb - (v - ymin) / (ymax - ymin) * (H - mt - mb); };
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                  "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

  std::ofstream f = open_out(path);
  f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
  f << "<rect width='100%' height='100%' fill='white'/>\n";
  f << "<text x='" << W / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title
    << "</text>\n";
  // axes
  f << "<line x1='" << ml << "' y1='" << H - mb << "' x2='" << W - mr << "' y2='" << H - mb
    << "' stroke='black'/>\n";
  f << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << H - mb
    << "' stroke='black'/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double tx = xmin + tick * (xmax - xmin) / 4.0;
    const double ty = ymin + tick * (ymax - ymin) / 4.0;
    f << "<text x='" << px(tx) << "' y='" << H - mb + 18
      << "' text-anchor='middle' font-size='11'>" << tx << "</text>\n";
    f << "<text x='" << ml - 8 << "' y='" << py(ty) + 4
      << "' text-anchor='end' font-size='11'>" << ty << "</text>\n";
    f << "<line x1='" << ml << "' y1='" << py(ty) << "' x2='" << W - mr << "' y2='" << py(ty)
      << "' stroke='#dddddd'/>\n";
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = palette[s % 8];
    f << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
    for (int i = 0; i < x.size(); ++i) f << px(x(i)) << ',' << py(series[s].y(i)) << ' ';
    f << "'/>\n";
    const int ly = mt + 18 * static_cast<int>(s);
    f << "<line x1='" << W - mr + 12 << "' y1='" << ly << "' x2='" << W - mr + 36 << "' y2='"
      << ly << "' stroke='" << color << "' stroke-width='2'/>\n";
    f << "<text x='" << W - mr + 42 << "' y='" << ly + 4 << "' font-size='12'>"
      << series[s].label << "</text>\n";
  }
  f << "</svg>\n";
}

}  // namespace donmpc
