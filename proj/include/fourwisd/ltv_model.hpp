#pragma once

#include "fourwisd/domain.hpp"

namespace fourwisd::ctrl {

// Control-oriented planar model used by the receding-horizon steering
// controller. State x = [vx, vy, yaw_rate, yaw, Y]; inputs are the four wheel
// steer angles. Per-wheel longitudinal forces and the lateral-velocity
// estimate enter as exogenous quantities: the linear tire terms are built
// from the supplied estimate rather than the vy state, so the model's
// Jacobian treats them as constants in vy.
struct ModelInputs {
  Vec4 delta = Vec4::Zero();  // wheel steer angles [rad]
  Vec4 fx = Vec4::Zero();     // wheel-frame longitudinal forces [N]
  double vy_hat = 0.0;        // lateral-velocity estimate for the slip terms
};

struct ModelOptions {
  // Lateral position propagates through the heading by default; the reduced
  // variant uses the lateral velocity alone.
  bool lateral_position_uses_heading = true;
};

// Linear tire force of one wheel at the given state. Front/rear stiffness and
// axle offset are taken from the wheel index.
double model_lateral_force(const Vec5& x, const ModelInputs& in, WheelId w,
                           const VehicleParams& p);

// Time derivative of the model state. Throws std::domain_error when the
// longitudinal speed is too small for the slip-angle terms.
Vec5 eval_dynamics(const Vec5& x, const ModelInputs& in,
                   const VehicleParams& p, const ModelOptions& opt = {});

struct Linearization {
  Mat5 a = Mat5::Zero();      // continuous-time state Jacobian
  Mat5x4 b = Mat5x4::Zero();  // continuous-time input Jacobian
  Mat5 a_d = Mat5::Zero();    // forward-Euler discretization, I + a*dt
  Mat5x4 b_d = Mat5x4::Zero();  // b*dt
};

// Analytic Jacobians of eval_dynamics at (x, in), discretized at step dt.
Linearization linearize(const Vec5& x, const ModelInputs& in,
                        const VehicleParams& p, double dt,
                        const ModelOptions& opt = {});

}  // namespace fourwisd::ctrl
