#include "donmpc/training.hpp"

#include <doctest.h>

#include <cmath>

#include "test_util.hpp"

using namespace donmpc;

namespace {

Dataset small_vdp_dataset(int T, int N, std::uint64_t seed) {
  SystemSpec sys = make_system("vdp");
  UniformRng rng(seed);
  MatrixXd u = sample_hold_input(Box(-2.0, 2.0, 1), T + N - 1, 2, rng);
  VectorXd x0(2);
  x0 << 0.5, -0.1;
  return generate_open_loop(sys, x0, u, N, 0.1);
}

HyperConfig tiny_config(int epochs) {
  HyperConfig c;
  c.p = 4;
  c.branch_widths = {10};
  c.trunk_widths = {10};
  c.epochs = epochs;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("relative_loss is the squared error over the reference energy") {
  MatrixXd Y(2, 2), Yhat(2, 2);
  Y << 1, 2, 3, 4;
  Yhat << 1, 2, 3, 2;
  CHECK(relative_loss(Y, Yhat) == doctest::Approx(4.0 / 30.0).epsilon(1e-15));
  CHECK(relative_loss(Y, Y) == 0.0);
  CHECK_THROWS_AS(relative_loss(Y, MatrixXd::Zero(2, 3)), std::invalid_argument);
  CHECK_THROWS_AS(relative_loss(MatrixXd::Zero(2, 2), Yhat), std::invalid_argument);
}

TEST_CASE("training reduces the loss and is bit-reproducible") {
  Dataset data = small_vdp_dataset(80, 5, 11);
  auto [train, val] = split_dataset(data, 0.8, 3);
  HyperConfig c = tiny_config(200);

  auto [model, rep] = train_model(train, &val, c);
  CHECK(rep.epochs_run == 200);
  CHECK(rep.history.size() == 200);
  CHECK(rep.history.back() < 0.2 * rep.history.front());
  CHECK(rep.train_loss < rep.history.front());
  CHECK(rep.val_loss > 0.0);
  CHECK(!rep.diverged);
  CHECK(rep.param_count == std::get<MsDeepONet>(model).param_count());

  auto [model2, rep2] = train_model(train, &val, c);
  CHECK(ms_get_params(std::get<MsDeepONet>(model)) ==
        ms_get_params(std::get<MsDeepONet>(model2)));
  CHECK(rep.train_loss == rep2.train_loss);
  CHECK(rep.val_loss == rep2.val_loss);
}

TEST_CASE("the trained model carries the training-set normalizer") {
  Dataset data = small_vdp_dataset(50, 4, 13);
  auto [model, rep] = train_model(data, nullptr, tiny_config(5));
  const Normalizer expect = fit_normalizer(data);
  const Normalizer& got = std::get<MsDeepONet>(model).norm;
  CHECK(got.u_shift == expect.u_shift);
  CHECK(got.u_scale == expect.u_scale);
  CHECK(got.z_shift == expect.z_shift);
  CHECK(got.y_scale == expect.y_scale);
  CHECK(rep.val_loss == 0.0);  // no validation set supplied

  // A normalizer stored on the dataset wins over refitting.
  Dataset tagged = data;
  tagged.norm = Normalizer::identity(1, 2, 1);
  auto [model_id, rep_id] = train_model(tagged, nullptr, tiny_config(5));
  CHECK(std::get<MsDeepONet>(model_id).norm.is_identity());
}

TEST_CASE("evaluate_loss reproduces the reported losses") {
  Dataset data = small_vdp_dataset(60, 4, 17);
  auto [train, val] = split_dataset(data, 0.75, 9);
  auto [model, rep] = train_model(train, &val, tiny_config(50));
  CHECK(evaluate_loss(model, train) == rep.train_loss);
  CHECK(evaluate_loss(model, val) == rep.val_loss);
}

TEST_CASE("the standard layout trains through the same entry point") {
  Dataset ms_data = small_vdp_dataset(60, 4, 19);
  Dataset std_data = build_standard_dataset(ms_data);
  auto [train, val] = split_dataset(std_data, 0.8, 7);
  auto [model, rep] = train_model(train, &val, tiny_config(150));
  CHECK(std::holds_alternative<StandardDeepONet>(model));
  CHECK(rep.history.back() < 0.5 * rep.history.front());
  CHECK(rep.val_loss > 0.0);
  CHECK(std::get<StandardDeepONet>(model).n_x == 2);
}

TEST_CASE("a diverging run rolls back to the last finite iterate") {
  Dataset data = small_vdp_dataset(40, 3, 23);
  HyperConfig c = tiny_config(300);
  // Adam steps are bounded by lr, so the first step puts the read-out
  // weights near 1e160 and the branch-trunk product overflows.
  c.lr = 1e160;
  auto [model, rep] = train_model(data, nullptr, c);
  CHECK(rep.diverged);
  CHECK(rep.epochs_run < 300);
  CHECK(std::isfinite(rep.train_loss));
  CHECK(ms_get_params(std::get<MsDeepONet>(model)).allFinite());
}

TEST_CASE("config seeds are stable and content-sensitive") {
  HyperConfig a = tiny_config(10);
  CHECK(config_seed(a, 42) == config_seed(a, 42));
  CHECK(config_seed(a, 42) != config_seed(a, 43));

  HyperConfig b = a;
  b.p = 5;
  CHECK(config_seed(a, 42) != config_seed(b, 42));
  HyperConfig w = a;
  w.branch_widths = {11};
  CHECK(config_seed(a, 42) != config_seed(w, 42));
  HyperConfig r = a;
  r.act = Activation::Relu;
  CHECK(config_seed(a, 42) != config_seed(r, 42));
  HyperConfig named = a;
  named.id = "other";
  CHECK(config_seed(a, 42) != config_seed(named, 42));
}

TEST_CASE("make_grid enumerates depth x width x basis combinations") {
  auto grid = make_grid({1, 2, 3}, {20, 40, 60}, {20, 40, 60}, 123, 1e-7, 2e-3);
  CHECK(grid.size() == 27);
  CHECK(grid.front().id == "l1_w20_p20");
  CHECK(grid.back().id == "l3_w60_p60");
  for (const auto& c : grid) {
    CHECK(c.epochs == 123);
    CHECK(c.lambda == 1e-7);
    CHECK(c.lr == 2e-3);
    CHECK(c.branch_widths == c.trunk_widths);
  }
  CHECK(grid[13].id == "l2_w40_p40");
  CHECK(grid[13].branch_widths == std::vector<int>{40, 40});
}

TEST_CASE("ablation picks the best validation loss with stable per-config runs") {
  Dataset data = small_vdp_dataset(70, 4, 29);
  HyperConfig a = tiny_config(120);
  a.id = "small";
  HyperConfig b = tiny_config(120);
  b.id = "wide";
  b.p = 8;
  b.branch_widths = {16};
  b.trunk_widths = {16};

  AblationResult solo = ablate(data, {a}, 0.8, 31);
  AblationResult both = ablate(data, {a, b}, 0.8, 31);
  CHECK(both.reports.size() == 2);

  // Adding a config never perturbs an existing one: same split, and each
  // config draws its init from its own content hash.
  CHECK(both.reports[0].val_loss == solo.reports[0].val_loss);
  CHECK(both.reports[0].train_loss == solo.reports[0].train_loss);

  // Growing the grid can only improve the selected validation loss.
  CHECK(both.reports[both.best_index].val_loss <= solo.reports[solo.best_index].val_loss);

  int argmin = 0;
  for (int i = 1; i < 2; ++i)
    if (both.reports[i].val_loss < both.reports[argmin].val_loss) argmin = i;
  CHECK(both.best_index == argmin);
}
