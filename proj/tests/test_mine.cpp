#include <doctest.h>

#include <cmath>

#include "dtlab/mine.hpp"

using namespace dtlab;

namespace {

// Jointly gaussian pair with correlation rho; analytic MI -0.5 ln(1 - rho^2).
std::pair<Matrix, Matrix> gaussian_pair(int n, double rho, Rng& rng) {
  Matrix x(n, 1), y(n, 1);
  for (int i = 0; i < n; ++i) {
    const double z1 = rng.gaussian();
    const double z2 = rng.gaussian();
    x(i, 0) = z1;
    y(i, 0) = rho * z1 + std::sqrt(1.0 - rho * rho) * z2;
  }
  return {x, y};
}

MineConfig quick_config(int width = 64, int iters = 300, double lr = 1e-3) {
  MineConfig c;
  c.hidden_width = width;
  c.hidden_layers = 2;
  c.iterations = iters;
  c.learning_rate = lr;
  return c;
}

}  // namespace

TEST_CASE("mine network: gradients match central finite differences at width 8") {
  mine_detail::NetSpec spec;
  spec.in_dim = 3;
  spec.hidden_width = 8;
  spec.hidden_layers = 2;
  Rng rng(1);
  Vector params = mine_detail::init_net_params(spec, rng);
  REQUIRE(params.size() == mine_detail::n_net_params(spec));

  const int n = 50;
  Matrix x(n, 2), y(n, 1);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = rng.gaussian();
    x(i, 1) = rng.gaussian();
    y(i, 0) = 0.7 * x(i, 0) + 0.3 * rng.gaussian();
  }
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = (i + 7) % n;

  Vector grads;
  mine_detail::objective_and_grads_f64(spec, params, x, y, perm, &grads);

  const double h = 1e-5;
  double max_err = 0.0;
  for (Index i = 0; i < params.size(); ++i) {
    Vector p = params;
    p[i] += h;
    const double up =
        mine_detail::objective_and_grads_f64(spec, p, x, y, perm, nullptr);
    p[i] -= 2 * h;
    const double down =
        mine_detail::objective_and_grads_f64(spec, p, x, y, perm, nullptr);
    const double fd = (up - down) / (2 * h);
    const double scale = std::max({std::abs(grads[i]), std::abs(fd), 1e-6});
    max_err = std::max(max_err, std::abs(grads[i] - fd) / scale);
  }
  CHECK(max_err <= 1e-4);
}

TEST_CASE("mine_estimate: deterministic given the seed") {
  Rng drng(2);
  const auto [x, y] = gaussian_pair(200, 0.8, drng);
  const MineConfig cfg = quick_config(32, 100);
  Rng r1(3), r2(3);
  const MiEstimate a = mine_estimate(x, y, cfg, r1);
  const MiEstimate b = mine_estimate(x, y, cfg, r2);
  CHECK_FALSE(a.excluded);
  CHECK(a.value == b.value);
}

TEST_CASE("mine_estimate: contract checks") {
  Matrix x(5, 1), y(5, 1);
  MineConfig cfg = quick_config();
  Rng rng(4);
  CHECK_THROWS_AS(mine_estimate(x, y, cfg, rng), std::invalid_argument);
  Matrix x2(12, 1), y2(11, 1);
  CHECK_THROWS_AS(mine_estimate(x2, y2, cfg, rng), std::invalid_argument);
}

TEST_CASE("mine_estimate: non-finite objective sets the excluded flag") {
  Rng drng(5);
  auto [x, y] = gaussian_pair(50, 0.5, drng);
  x(7, 0) = std::numeric_limits<double>::quiet_NaN();
  MineConfig cfg = quick_config(16, 200);
  Rng rng(6);
  const MiEstimate est = mine_estimate(x, y, cfg, rng);
  CHECK(est.excluded);
}

TEST_CASE("mine_estimate: monotone in correlation, near zero when independent") {
  Rng drng(7);
  const auto [x0, y0] = gaussian_pair(500, 0.0, drng);
  const auto [x5, y5] = gaussian_pair(500, 0.5, drng);
  const auto [x9, y9] = gaussian_pair(500, 0.9, drng);
  const MineConfig cfg = quick_config(64, 300, 1e-3);
  Rng r0(8), r5(8), r9(8);
  const double v0 = mine_estimate(x0, y0, cfg, r0).value;
  const double v5 = mine_estimate(x5, y5, cfg, r5).value;
  const double v9 = mine_estimate(x9, y9, cfg, r9).value;
  CHECK(v0 < v5);
  CHECK(v5 < v9);
  CHECK(std::abs(v0) < 0.15);
  CHECK(v9 > 0.3);
}

TEST_CASE("block_index_for_depth") {
  CHECK(block_index_for_depth(BlockDepth::kShallow, 12) == 0);
  CHECK(block_index_for_depth(BlockDepth::kMiddle, 12) == 6);
  CHECK(block_index_for_depth(BlockDepth::kDeep, 12) == 11);
  CHECK(block_index_for_depth(BlockDepth::kMiddle, 3) == 1);
}

TEST_CASE("mi profile with an identity-copy stub peaks at the copied position") {
  // Representation is an exact copy of the token input at the last state
  // position; the profile must be maximal there.
  const int n = 200;
  const int n_positions = 5;  // toy sequence, "state" position is index 4
  Rng drng(9);
  std::vector<Matrix> inputs;
  std::vector<std::string> types;
  for (int p = 0; p < n_positions; ++p) {
    Matrix m(n, 1);
    for (int i = 0; i < n; ++i) m(i, 0) = drng.gaussian();
    inputs.push_back(std::move(m));
    types.push_back("tok" + std::to_string(p));
  }
  const Matrix repr = inputs[4];  // identity-copy stub
  const MineConfig cfg = quick_config(32, 200, 1e-3);
  Rng rng(10);
  const auto points =
      mi_profile_input_to_repr(inputs, types, repr, cfg, rng, /*workers=*/2);
  REQUIRE(points.size() == 5);
  double best = -1e9;
  int best_pos = -1;
  for (const auto& p : points) {
    REQUIRE_FALSE(p.estimate.excluded);
    if (p.estimate.value > best) {
      best = p.estimate.value;
      best_pos = p.token_position;
    }
  }
  CHECK(best_pos == 4);
}

TEST_CASE("mi profile fan-out is deterministic across worker counts") {
  const int n = 100;
  Rng drng(11);
  std::vector<Matrix> inputs;
  std::vector<std::string> types;
  for (int p = 0; p < 4; ++p) {
    Matrix m(n, 1);
    for (int i = 0; i < n; ++i) m(i, 0) = drng.gaussian();
    inputs.push_back(std::move(m));
    types.push_back("tok");
  }
  Matrix repr(n, 1);
  for (int i = 0; i < n; ++i) repr(i, 0) = drng.gaussian();
  const MineConfig cfg = quick_config(16, 50);
  Rng r1(12), r2(12);
  const auto a = mi_profile_input_to_repr(inputs, types, repr, cfg, r1, 1);
  const auto b = mi_profile_input_to_repr(inputs, types, repr, cfg, r2, 2);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(a[i].estimate.value == b[i].estimate.value);
}

TEST_CASE("mi_data_level: dependence and independence are separated") {
  // Environment noise keeps states diffuse so the deterministic
  // state-to-action map stays informative at every step.
  MdpSpec spec = MdpSpec::point_control(2, 2, 12, 0.3);
  const int K = 6;
  // expert data: action is a deterministic function of state
  Rng drng1(13);
  const Dataset dependent =
      generate_medium_dataset(spec, 1.0, 40, drng1, 0.0, 100.0, 10);
  // random data: action independent of return-to-go
  Rng drng2(14);
  const Dataset independent =
      generate_medium_dataset(spec, 0.0, 40, drng2, 0.0, 100.0, 10);

  const MineConfig cfg = quick_config(48, 200, 1e-3);
  Rng r1(15), r2(15);
  const auto dep = mi_data_level(dependent, MiPair::kStateAction, K, cfg, 100, r1, 2);
  const auto ind = mi_data_level(independent, MiPair::kRtgAction, K, cfg, 100, r2, 2);
  REQUIRE(dep.size() == static_cast<std::size_t>(K));
  REQUIRE(ind.size() == static_cast<std::size_t>(K));

  double ind_band = 0.0;
  for (const auto& p : ind) {
    REQUIRE_FALSE(p.estimate.excluded);
    ind_band = std::max(ind_band, std::abs(p.estimate.value));
  }
  for (const auto& p : dep) {
    REQUIRE_FALSE(p.estimate.excluded);
    CHECK(p.estimate.value > ind_band);
  }
}
