#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "fourwisd/dyc.hpp"

using namespace fourwisd;
using namespace fourwisd::dyc;

namespace {

// Steady state of the two-state single-track model with axle stiffnesses
// (two wheels per axle), solved as a 2x2 linear system. Independent
// cross-check for the closed-form yaw-rate target.
double bicycle_steady_yaw(double vx, double delta_f, const VehicleParams& p) {
  const double cf = 2.0 * p.C_f;
  const double cr = 2.0 * p.C_r;
  Eigen::Matrix2d a;
  Eigen::Vector2d rhs;
  // d(vy)/dt = (fyf + fyr)/m - vx*r = 0 ; d(r)/dt = (lf*fyf - lr*fyr)/Iz = 0
  a << -(cf + cr) / (p.m * vx),
      (-cf * p.l_f + cr * p.l_r) / (p.m * vx) - vx,
      (-cf * p.l_f + cr * p.l_r) / (p.I_z * vx),
      -(cf * p.l_f * p.l_f + cr * p.l_r * p.l_r) / (p.I_z * vx);
  rhs << -cf * delta_f / p.m, -cf * p.l_f * delta_f / p.I_z;
  const Eigen::Vector2d sol = a.colPivHouseholderQr().solve(rhs);
  return sol[1];
}

}  // namespace

TEST_SUITE("dyc") {

TEST_CASE("steady-state yaw target matches the single-track equilibrium") {
  const VehicleParams p = default_params();
  for (double vx : {8.0, 15.0, 22.22, 30.0}) {
    for (double df : {-0.05, 0.01, 0.02, 0.08}) {
      CHECK(steady_state_yaw_rate(vx, df, p) ==
            doctest::Approx(bicycle_steady_yaw(vx, df, p)).epsilon(1e-10));
    }
  }
  // Pinned value at the nominal operating point.
  CHECK(steady_state_yaw_rate(22.22, 0.02, p) ==
        doctest::Approx(0.13655).epsilon(2e-4));
}

TEST_CASE("friction cap limits the target on low grip") {
  const VehicleParams p = default_params();
  CHECK(yaw_rate_cap(22.22, 0.2, 0.85, 9.81) ==
        doctest::Approx(0.075054).epsilon(1e-4));
  YawReference ref;
  // Demand far above what mu = 0.2 supports; the raw target saturates.
  ref.update(22.22, 0.08, 0.2, 0.01, p);
  CHECK(ref.raw() == doctest::Approx(0.075054).epsilon(1e-4));
  YawReference neg;
  neg.update(22.22, -0.08, 0.2, 0.01, p);
  CHECK(neg.raw() == doctest::Approx(-0.075054).epsilon(1e-4));
}

TEST_CASE("target filter is an exact first-order lag") {
  const VehicleParams p = default_params();
  YawReference ref;
  const double target = steady_state_yaw_rate(20.0, 0.02, p);
  const double one = ref.update(20.0, 0.02, 0.85, 0.01, p);
  CHECK(one == doctest::Approx((1.0 - std::exp(-0.01 / 0.1)) * target));

  // Step-size invariance of the exact discretization.
  YawReference full, halves;
  full.update(20.0, 0.02, 0.85, 0.02, p);
  halves.update(20.0, 0.02, 0.85, 0.01, p);
  halves.update(20.0, 0.02, 0.85, 0.01, p);
  CHECK(full.value() == doctest::Approx(halves.value()).epsilon(1e-12));

  // Long run converges to the target.
  YawReference conv;
  double v = 0.0;
  for (int k = 0; k < 200; ++k) v = conv.update(20.0, 0.02, 0.85, 0.01, p);
  CHECK(v == doctest::Approx(target).epsilon(1e-8));
}

TEST_CASE("sliding surface and moment sign") {
  const VehicleParams p = default_params();
  // Perfect tracking with no lateral forces commands nothing.
  const SmcResult idle =
      yaw_moment(0.1, 0.1, 0.0, Vec4::Zero(), Vec4::Zero(), p);
  CHECK(idle.surface == doctest::Approx(0.0));
  CHECK(idle.moment == doctest::Approx(0.0));

  // Yaw rate above target: corrective moment must be negative.
  const SmcResult high =
      yaw_moment(0.2, 0.1, 0.0, Vec4::Zero(), Vec4::Zero(), p);
  CHECK(high.surface == doctest::Approx(0.1));
  CHECK(high.moment < 0.0);
  // Outside the boundary layer the saturated term contributes its full gain.
  CHECK(high.moment == doctest::Approx(-3000.0 - 8000.0 * 0.1));

  // The sideslip estimate biases the surface.
  const SmcResult blend =
      yaw_moment(0.1, 0.1, 0.5, Vec4::Zero(), Vec4::Zero(), p);
  CHECK(blend.surface == doctest::Approx(0.01 * 0.5));
}

TEST_CASE("moment law is continuous across the boundary layer") {
  const VehicleParams p = default_params();
  const double phi = 0.05;
  const SmcResult inside =
      yaw_moment(0.1 + 0.999 * phi, 0.1, 0.0, Vec4::Zero(), Vec4::Zero(), p);
  const SmcResult outside =
      yaw_moment(0.1 + 1.001 * phi, 0.1, 0.0, Vec4::Zero(), Vec4::Zero(), p);
  CHECK(std::abs(inside.moment - outside.moment) < 25.0);
  // Inside the layer the saturated term is linear in s.
  const SmcResult half =
      yaw_moment(0.1 + 0.5 * phi, 0.1, 0.0, Vec4::Zero(), Vec4::Zero(), p);
  CHECK(half.moment == doctest::Approx(-3000.0 * 0.5 - 8000.0 * 0.5 * phi));
}

TEST_CASE("lateral-force compensation equals the expanded trig sum") {
  const VehicleParams p = default_params();
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Vec4 delta, fy;
    for (int i = 0; i < 4; ++i) {
      delta[i] = 0.35 * u(rng);
      fy[i] = 4000.0 * u(rng);
    }
    const SmcResult r = yaw_moment(0.0, 0.0, 0.0, delta, fy, p);
    const double expected =
        p.l_f * (fy[0] * std::cos(delta[0]) + fy[1] * std::cos(delta[1])) -
        p.l_r * (fy[2] * std::cos(delta[2]) + fy[3] * std::cos(delta[3])) -
        0.5 * p.t_w *
            (fy[0] * std::sin(delta[0]) - fy[1] * std::sin(delta[1]) +
             fy[2] * std::sin(delta[2]) - fy[3] * std::sin(delta[3]));
    CHECK(r.compensation == doctest::Approx(expected).epsilon(1e-12));
    CHECK(r.moment == doctest::Approx(-expected).epsilon(1e-12));
  }
}

TEST_CASE("straight-ahead allocation alternates torque signs") {
  const VehicleParams p = default_params();
  const Vec4 fz(5064.9, 5064.9, 3201.4, 3201.4);
  const AllocationResult r =
      allocate_torques(-2000.0, Vec4::Zero(), fz, p);
  CHECK(r.torque[index(WheelId::FL)] < 0.0);
  CHECK(r.torque[index(WheelId::FR)] > 0.0);
  CHECK(r.torque[index(WheelId::RL)] < 0.0);
  CHECK(r.torque[index(WheelId::RR)] > 0.0);
  // Heavier front wheels carry more of the moment.
  CHECK(std::abs(r.torque[0]) > std::abs(r.torque[2]));
}

TEST_CASE("allocated forces reconstruct the commanded moment") {
  const VehicleParams p = default_params();
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    Vec4 delta;
    for (int i = 0; i < 4; ++i) delta[i] = deg2rad(21.0) * u(rng);
    Vec4 fz;
    for (int i = 0; i < 4; ++i) fz[i] = 3000.0 + 2500.0 * u(rng);
    const double moment = 4000.0 * u(rng);
    const AllocationResult r = allocate_torques(moment, delta, fz, p);
    double rebuilt = 0.0;
    for (WheelId w : kWheels) {
      const int i = index(w);
      rebuilt += (r.torque[i] / p.R_e) * yaw_lever_long(p, w, delta[i]);
    }
    CHECK(rebuilt ==
          doctest::Approx(moment).epsilon(1e-12).scale(std::abs(moment)));
  }
}

TEST_CASE("degenerate arm hands its share to the same side") {
  const VehicleParams p = default_params();
  // Steer the rear-left wheel so its arm collapses:
  // -l_r sin(d) + (t_w/2) cos(d) = 0  =>  d = atan(t_w / (2 l_r)).
  const double d = std::atan(0.5 * p.t_w / p.l_r);
  Vec4 delta = Vec4::Zero();
  delta[index(WheelId::RL)] = d;
  const Vec4 fz(5000.0, 5000.0, 3200.0, 3200.0);
  const AllocationResult r = allocate_torques(-1500.0, delta, fz, p);
  CHECK(r.torque[index(WheelId::RL)] == 0.0);
  CHECK(r.share[index(WheelId::RL)] == 0.0);
  CHECK(r.share[index(WheelId::FL)] ==
        doctest::Approx((5000.0 + 3200.0) / 16400.0));
  double rebuilt = 0.0;
  for (WheelId w : kWheels) {
    rebuilt += (r.torque[index(w)] / p.R_e) * yaw_lever_long(p, w, delta[index(w)]);
  }
  CHECK(rebuilt == doctest::Approx(-1500.0).epsilon(1e-12));
}

TEST_CASE("mirrored-lever variant flips the straight-ahead pattern") {
  const VehicleParams p = default_params();
  const Vec4 fz(5000.0, 5000.0, 3200.0, 3200.0);
  const AllocationResult r =
      allocate_torques(-2000.0, Vec4::Zero(), fz, p, 0.05, true);
  CHECK(r.torque[index(WheelId::FL)] > 0.0);
  CHECK(r.torque[index(WheelId::FR)] < 0.0);
  CHECK(r.torque[index(WheelId::RL)] > 0.0);
  CHECK(r.torque[index(WheelId::RR)] < 0.0);
}

TEST_CASE("allocation rejects invalid loads") {
  const VehicleParams p = default_params();
  CHECK_THROWS_AS(
      allocate_torques(100.0, Vec4::Zero(), Vec4(-1.0, 1.0, 1.0, 1.0), p),
      std::invalid_argument);
  CHECK_THROWS_AS(
      allocate_torques(100.0, Vec4::Zero(), Vec4::Zero(), p),
      std::invalid_argument);
}

TEST_CASE("sideslip stays zero under symmetric forces") {
  const VehicleParams p = default_params();
  SideslipEstimator est;
  const Vec4 fx(200.0, 200.0, 180.0, 180.0);
  for (int k = 0; k < 500; ++k) {
    est.update(20.0, Vec4::Zero(), fx, Vec4::Zero(), 0.01, p);
  }
  CHECK(est.beta() == doctest::Approx(0.0));
  CHECK_FALSE(est.saturated());
}

TEST_CASE("sideslip growth matches the analytic small-angle rate") {
  const VehicleParams p = default_params();
  SideslipEstimator est;
  const Vec4 fy = Vec4::Constant(800.0);
  const double dt = 1e-3;
  est.update(20.0, Vec4::Zero(), Vec4::Zero(), fy, dt, p);
  // At beta ~ 0 the rate is sum(fy)/(m*vx).
  const double rate0 = 4.0 * 800.0 / (p.m * 20.0);
  CHECK(est.beta() == doctest::Approx(rate0 * dt).epsilon(1e-4));
  CHECK(est.lateral_velocity(20.0) ==
        doctest::Approx(20.0 * std::tan(est.beta())));
}

TEST_CASE("sideslip clamps and flags divergence") {
  const VehicleParams p = default_params();
  SideslipEstimator est;
  const Vec4 fy = Vec4::Constant(4.0e4);
  for (int k = 0; k < 2000; ++k) {
    est.update(5.0, Vec4::Zero(), Vec4::Zero(), fy, 0.01, p);
  }
  CHECK(est.beta() == doctest::Approx(kPi / 3.0));
  CHECK(est.saturated());
  est.reset();
  CHECK(est.beta() == 0.0);
  CHECK_FALSE(est.saturated());
}

}  // TEST_SUITE
