#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <filesystem>

#include "fedgrid/approximator.hpp"
#include "fedgrid/rng.hpp"

using namespace fedgrid;

namespace {

// Central finite differences of a scalar function of the parameters.
template <typename F>
std::vector<double> fd_gradient(std::vector<double> params, F&& f, double h = 1e-5) {
  std::vector<double> grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    double keep = params[i];
    params[i] = keep + h;
    double up = f(params);
    params[i] = keep - h;
    double down = f(params);
    params[i] = keep;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double max_rel_err(std::span<const double> a, std::span<const double> b) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-6});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("all-zero parameters map any input to zero") {
  MlpSpec spec{{3, 5, 2}};
  std::vector<double> params(spec.param_count(), 0.0);
  std::vector<double> out;
  mlp_forward(spec, params, std::vector<double>{1.0, -2.0, 0.5}, out);
  CHECK(out == std::vector<double>{0.0, 0.0});
}

TEST_CASE("identity single layer reproduces its input") {
  MlpSpec spec{{3, 3}};
  std::vector<double> params(spec.param_count(), 0.0);
  // row-major weight matrix, then biases
  params[0] = params[4] = params[8] = 1.0;
  std::vector<double> in = {0.25, -1.5, 3.0};
  std::vector<double> out;
  mlp_forward(spec, params, in, out);
  CHECK(out == in);
}

TEST_CASE("a hand-computed 2-2-1 net matches to 1e-12") {
  MlpSpec spec{{2, 2, 1}};
  // W1 = [[0.1, -0.2], [0.3, 0.4]], b1 = [0.05, -0.05]
  // W2 = [[0.7, -0.6]], b2 = [0.1]
  std::vector<double> params = {0.1, -0.2, 0.3, 0.4, 0.05, -0.05, 0.7, -0.6, 0.1};
  std::vector<double> in = {0.5, -1.0};
  std::vector<double> out;
  mlp_forward(spec, params, in, out);

  double h1 = std::tanh(0.1 * 0.5 + (-0.2) * (-1.0) + 0.05);
  double h2 = std::tanh(0.3 * 0.5 + 0.4 * (-1.0) - 0.05);
  double expected = 0.7 * h1 - 0.6 * h2 + 0.1;
  CHECK(out[0] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("backward gradients match central finite differences") {
  Rng rng(5);
  MlpSpec spec{{4, 8, 8, 2}};
  for (int trial = 0; trial < 8; ++trial) {
    std::vector<double> params = mlp_init(spec, rng.next_u64());
    for (double& p : params) p += rng.normal(0.0, 0.05);  // nonzero biases too
    std::vector<double> input(4);
    for (double& v : input) v = rng.normal(0.0, 1.0);
    std::vector<double> og = {rng.normal(0.0, 1.0), rng.normal(0.0, 1.0)};

    MlpWorkspace ws;
    std::vector<double> out;
    mlp_forward(spec, params, input, out, &ws);
    std::vector<double> analytic(params.size(), 0.0);
    std::vector<double> input_grad(input.size(), 0.0);
    mlp_backward(spec, params, ws, og, analytic, input_grad);

    auto scalar = [&](const std::vector<double>& p) {
      std::vector<double> o;
      mlp_forward(spec, p, input, o);
      return og[0] * o[0] + og[1] * o[1];
    };
    CHECK(max_rel_err(analytic, fd_gradient(params, scalar)) < 1e-4);

    // input gradient against finite differences as well
    std::vector<double> in_fd = fd_gradient(input, [&](const std::vector<double>& x) {
      std::vector<double> o;
      mlp_forward(spec, params, x, o);
      return og[0] * o[0] + og[1] * o[1];
    });
    CHECK(max_rel_err(input_grad, in_fd) < 1e-4);
  }
}

TEST_CASE("zero output gradient yields zero parameter gradient") {
  MlpSpec spec{{3, 6, 2}};
  std::vector<double> params = mlp_init(spec, 9);
  MlpWorkspace ws;
  std::vector<double> out;
  mlp_forward(spec, params, std::vector<double>{0.3, 0.1, -0.7}, out, &ws);
  std::vector<double> grad(params.size(), 0.0);
  mlp_backward(spec, params, ws, std::vector<double>{0.0, 0.0}, grad);
  for (double g : grad) CHECK(g == 0.0);
}

TEST_CASE("gradient of a sum equals the sum of per-output gradients") {
  MlpSpec spec{{2, 4, 2}};
  std::vector<double> params = mlp_init(spec, 12);
  std::vector<double> input = {0.4, -0.9};

  MlpWorkspace ws;
  std::vector<double> out;
  mlp_forward(spec, params, input, out, &ws);

  std::vector<double> g_sum(params.size(), 0.0);
  mlp_backward(spec, params, ws, std::vector<double>{1.0, 1.0}, g_sum);

  std::vector<double> g0(params.size(), 0.0), g1(params.size(), 0.0);
  mlp_backward(spec, params, ws, std::vector<double>{1.0, 0.0}, g0);
  mlp_backward(spec, params, ws, std::vector<double>{0.0, 1.0}, g1);
  for (std::size_t i = 0; i < params.size(); ++i) {
    CHECK(g_sum[i] == doctest::Approx(g0[i] + g1[i]).epsilon(1e-12));
  }
}

TEST_CASE("adam leaves parameters alone under zero gradient") {
  AdamState state(3, 0.01);
  std::vector<double> params = {1.0, -2.0, 0.5};
  std::vector<double> zeros = {0.0, 0.0, 0.0};
  std::vector<double> before = params;
  adam_step(state, params, zeros);
  CHECK(params == before);
  CHECK(state.step == 1);
}

TEST_CASE("first adam step moves by about lr in the gradient sign pattern") {
  AdamState state(2, 0.01);
  std::vector<double> params = {0.0, 0.0};
  std::vector<double> grads = {0.3, -7.0};
  adam_step(state, params, grads);
  CHECK(params[0] == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(params[1] == doctest::Approx(0.01).epsilon(1e-6));
}

TEST_CASE("adam's first step is scale invariant") {
  AdamState s1(1, 0.05), s2(1, 0.05);
  std::vector<double> p1 = {0.0}, p2 = {0.0};
  std::vector<double> g1 = {0.002}, g2 = {2.0};  // 1000x apart
  adam_step(s1, p1, g1);
  adam_step(s2, p2, g2);
  CHECK(std::abs(p1[0]) == doctest::Approx(std::abs(p2[0])).epsilon(1e-4));
}

TEST_CASE("adam rejects non-finite gradients") {
  AdamState state(1, 0.01);
  std::vector<double> params = {0.0};
  std::vector<double> bad = {std::numeric_limits<double>::quiet_NaN()};
  CHECK_THROWS_AS(adam_step(state, params, bad), std::domain_error);
}

TEST_CASE("flatten and unflatten round trip bitwise") {
  ParamLayout layout{MlpSpec{{4, 8, 2}}, MlpSpec{{4, 8, 1}}, 2};
  Rng rng(77);
  std::vector<double> actor(layout.actor_count()), critic(layout.critic_count());
  for (double& v : actor) v = rng.normal(0.0, 1.0);
  for (double& v : critic) v = rng.normal(0.0, 1.0);

  ParamVector pv = flatten(layout, actor, critic);
  CHECK(pv.values.size() == layout.total_count());

  std::vector<double> actor2, critic2;
  unflatten(layout, pv, actor2, critic2);
  CHECK(actor2 == actor);
  CHECK(critic2 == critic);
}

TEST_CASE("unflatten rejects wrong lengths and wrong topologies") {
  ParamLayout layout{MlpSpec{{4, 8, 2}}, MlpSpec{{4, 8, 1}}, 2};
  std::vector<double> actor(layout.actor_count(), 0.1), critic(layout.critic_count(), 0.2);
  ParamVector pv = flatten(layout, actor, critic);

  ParamVector truncated = pv;
  truncated.values.pop_back();
  std::vector<double> a, c;
  CHECK_THROWS_AS(unflatten(layout, truncated, a, c), std::invalid_argument);

  ParamLayout other{MlpSpec{{4, 16, 2}}, MlpSpec{{4, 8, 1}}, 2};
  CHECK_THROWS_AS(unflatten(other, pv, a, c), std::invalid_argument);
  CHECK(layout.hash() != other.hash());
}

TEST_CASE("checkpoints round trip bit-exactly") {
  ParamLayout layout{MlpSpec{{6, 64, 64, 2}}, MlpSpec{{6, 64, 64, 1}}, 2};
  Rng rng(123);
  std::vector<double> actor(layout.actor_count()), critic(layout.critic_count());
  for (double& v : actor) v = rng.normal(0.0, 0.3);
  for (double& v : critic) v = rng.normal(0.0, 0.3);
  ParamVector pv = flatten(layout, actor, critic);

  auto dir = std::filesystem::temp_directory_path() / "fedgrid_approx_tests";
  std::filesystem::create_directories(dir);
  std::string path = (dir / "net.ckpt").string();
  save_checkpoint(path, layout, pv, 4242);

  Checkpoint ck = load_checkpoint(path);
  CHECK(ck.adam_step == 4242);
  CHECK(ck.params.spec_hash == pv.spec_hash);
  REQUIRE(ck.params.values.size() == pv.values.size());
  for (std::size_t i = 0; i < pv.values.size(); ++i) {
    CHECK(ck.params.values[i] == pv.values[i]);  // bitwise
  }
  CHECK(ck.layout.actor.layer_sizes == layout.actor.layer_sizes);
  CHECK(ck.layout.critic.layer_sizes == layout.critic.layer_sizes);
}

TEST_CASE("forward is deterministic and pure") {
  MlpSpec spec{{5, 32, 3}};
  std::vector<double> params = mlp_init(spec, 2718);
  std::vector<double> params_copy = params;
  std::vector<double> in = {0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<double> out1, out2;
  mlp_forward(spec, params, in, out1);
  mlp_forward(spec, params, in, out2);
  CHECK(out1 == out2);
  CHECK(params == params_copy);
}
