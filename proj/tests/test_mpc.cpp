#include <doctest.h>

#include <cmath>
#include <random>

#include "fourwisd/mpc.hpp"
#include "qp_enumeration.hpp"

using namespace fourwisd;

namespace {

qp::Problem random_qp(std::mt19937_64& rng, int n, int m) {
  std::normal_distribution<double> g(0.0, 1.0);
  MatX base(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) base(i, j) = g(rng);
  qp::Problem prob;
  prob.h = base.transpose() * base + 0.5 * MatX::Identity(n, n);
  prob.f = VecX::NullaryExpr(n, [&] { return g(rng); });
  prob.a = MatX::NullaryExpr(m, n, [&] { return g(rng); });
  // Mix of slack and tight rows so several constraints end up active.
  prob.b = VecX::NullaryExpr(m, [&] { return 0.5 * g(rng); });
  return prob;
}

}  // namespace

TEST_SUITE("mpc") {

TEST_CASE("unconstrained minimum is returned untouched") {
  qp::Problem prob;
  prob.h = 2.0 * MatX::Identity(3, 3);
  prob.f = VecX::Constant(3, -2.0);
  prob.a = MatX::Zero(0, 3);
  prob.b = VecX::Zero(0);
  const qp::Result r = qp::solve(prob);
  CHECK(r.converged);
  CHECK((r.x - VecX::Constant(3, 1.0)).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK(r.active_set_size == 0);
}

TEST_CASE("single active halfspace lands on its boundary") {
  // min 0.5 ||x||^2 subject to x0 >= 1  ->  x = (1, 0), multiplier 1.
  qp::Problem prob;
  prob.h = MatX::Identity(2, 2);
  prob.f = VecX::Zero(2);
  prob.a = MatX::Zero(1, 2);
  prob.a(0, 0) = -1.0;
  prob.b = VecX::Constant(1, -1.0);
  const qp::Result r = qp::solve(prob);
  CHECK(r.converged);
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(r.x[1] == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
  CHECK(r.lambda[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(r.active_set_size == 1);
  CHECK(r.kkt_residual < 1e-8);
}

TEST_CASE("box-clipped quadratic matches the closed form") {
  // min (x0-3)^2 + (x1+2)^2 with |x| <= 1 componentwise -> (1, -1).
  qp::Problem prob;
  prob.h = 2.0 * MatX::Identity(2, 2);
  prob.f = VecX(2);
  prob.f << -6.0, 4.0;
  prob.a = MatX(4, 2);
  prob.a << 1, 0, -1, 0, 0, 1, 0, -1;
  prob.b = VecX::Ones(4);
  const qp::Result r = qp::solve(prob);
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(r.x[1] == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(r.active_set_size == 2);
}

TEST_CASE("random problems agree with exhaustive enumeration") {
  std::mt19937_64 rng(2024);
  int compared = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 5);
    const int m = 1 + static_cast<int>(rng() % 8);
    const qp::Problem prob = random_qp(rng, n, m);
    const auto oracle = enumerate_qp(prob);
    if (!oracle) continue;  // infeasible draw
    ++compared;
    const qp::Result r = qp::solve(prob);
    CHECK((r.x - *oracle).lpNorm<Eigen::Infinity>() < 1e-6);
    CHECK(r.kkt_residual < 1e-6);
  }
  CHECK(compared > 30);
}

TEST_CASE("warm start reproduces the cold-start answer") {
  std::mt19937_64 rng(7);
  const qp::Problem prob = random_qp(rng, 6, 10);
  const qp::Result cold = qp::solve(prob);
  const qp::Result warm = qp::solve(prob, {}, &cold.lambda);
  CHECK((cold.x - warm.x).lpNorm<Eigen::Infinity>() < 1e-7);
  CHECK(warm.iterations <= cold.iterations);
}

TEST_CASE("controller holds the line when the reference is the free response")
{
  const VehicleParams p = default_params();
  ctrl::MpcController mpc(p);
  Vec5 x;
  x << 22.22, 0.0, 0.0, 0.0, 0.0;
  // Straight cruise: zero heading and zero lateral offset ahead.
  const std::vector<double> zeros(16, 0.0);
  ctrl::MpcDiagnostics diag;
  const Vec4 u = mpc.compute(x, Vec4::Zero(), 0.0, zeros, zeros, &diag);
  CHECK(u.lpNorm<Eigen::Infinity>() < 1e-9);
  CHECK(diag.cost < 1e-12);
  CHECK(diag.soft_rows == 0);
}

TEST_CASE("lateral offset reference steers the front axle toward it") {
  const VehicleParams p = default_params();
  ctrl::MpcController mpc(p);
  Vec5 x;
  x << 22.22, 0.0, 0.0, 0.0, 0.0;
  std::vector<double> phi_ref(16, 0.0), y_ref(16);
  for (int j = 0; j < 16; ++j) y_ref[j] = 0.5;  // step to the right
  ctrl::MpcDiagnostics diag;
  const Vec4 u = mpc.compute(x, Vec4::Zero(), 0.0, phi_ref, y_ref, &diag);
  CHECK(u[index(WheelId::FL)] > 0.0);
  CHECK(u[index(WheelId::FR)] > 0.0);
  CHECK(diag.converged);
  // The move must beat doing nothing.
  double free_cost = 0.0;
  for (int j = 0; j < 16; ++j) free_cost += 0.5 * 0.5;
  CHECK(diag.cost < free_cost);
}

TEST_CASE("slew and magnitude limits hold under an aggressive reference") {
  const VehicleParams p = default_params();
  ctrl::MpcController mpc(p);
  const double du_max = mpc.config().steer_rate_limit * p.dt;
  Vec5 x;
  x << 22.22, 0.0, 0.0, 0.0, 0.0;
  std::vector<double> phi_ref(16, deg2rad(15.0)), y_ref(16, 4.5);
  Vec4 prev = Vec4::Zero();
  for (int k = 0; k < 120; ++k) {
    const Vec4 u = mpc.compute(x, Vec4::Zero(), 0.0, phi_ref, y_ref);
    for (int w = 0; w < 4; ++w) {
      CHECK(std::abs(u[w] - prev[w]) <= du_max + 1e-9);
      CHECK(std::abs(u[w]) <= mpc.config().steer_limit + 1e-9);
    }
    prev = u;
  }
  // After 120 steps the front wheels should be well into the turn.
  CHECK(prev[0] > deg2rad(1.0));
}

TEST_CASE("corridor violation at start is relaxed, not fatal") {
  const VehicleParams p = default_params();
  ctrl::MpcController mpc(p);
  Vec5 x;
  x << 22.22, 0.0, 0.0, 0.0, 6.0;  // outside the 5 m lateral corridor
  const std::vector<double> phi_ref(16, 0.0);
  const std::vector<double> y_ref(16, 4.0);
  ctrl::MpcDiagnostics diag;
  const Vec4 u = mpc.compute(x, Vec4::Zero(), 0.0, phi_ref, y_ref, &diag);
  CHECK(diag.soft_rows > 0);
  CHECK(u.allFinite());
  // It should steer back toward the corridor (negative = to the left).
  CHECK(u[index(WheelId::FL)] < 0.0);
}

TEST_CASE("short reference is rejected") {
  const VehicleParams p = default_params();
  ctrl::MpcController mpc(p);
  Vec5 x;
  x << 20.0, 0.0, 0.0, 0.0, 0.0;
  const std::vector<double> refs(10, 0.0);
  CHECK_THROWS_AS(mpc.compute(x, Vec4::Zero(), 0.0, refs, refs),
                  std::invalid_argument);
}

TEST_CASE("controller output is deterministic") {
  const VehicleParams p = default_params();
  Vec5 x;
  x << 21.0, 0.2, 0.05, 0.02, 1.0;
  std::vector<double> phi_ref(16, 0.01), y_ref(16, 2.0);
  Vec4 fx;
  fx << 120.0, 110.0, 90.0, 95.0;

  ctrl::MpcController a(p), b(p);
  const Vec4 ua = a.compute(x, fx, 0.15, phi_ref, y_ref);
  const Vec4 ub = b.compute(x, fx, 0.15, phi_ref, y_ref);
  CHECK((ua - ub).lpNorm<Eigen::Infinity>() == 0.0);
}

}  // TEST_SUITE
