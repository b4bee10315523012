#pragma once

#include "fourwisd/domain.hpp"

namespace fourwisd::dyc {

// --- Yaw-rate target shaping ------------------------------------------------

struct YawRefConfig {
  double tau = 0.1;               // low-pass time constant [s]
  double friction_margin = 0.85;  // usable fraction of mu*g/vx
};

// Steady-state yaw rate of the single-track model for a front steer angle.
double steady_state_yaw_rate(double vx, double delta_f,
                             const VehicleParams& p);

// Friction-limited yaw-rate magnitude at the current speed.
double yaw_rate_cap(double vx, double mu, double margin, double g);

// Capped steady-state target passed through an exact first-order low-pass.
class YawReference {
 public:
  explicit YawReference(const YawRefConfig& cfg = {}) : cfg_(cfg) {}
  double update(double vx, double delta_f, double mu, double dt,
                const VehicleParams& p);
  double value() const { return state_; }
  double raw() const { return raw_; }  // post-cap, pre-filter target
  void reset(double v = 0.0) { state_ = v; raw_ = v; }

 private:
  YawRefConfig cfg_;
  double state_ = 0.0;
  double raw_ = 0.0;
};

// --- Sliding-mode yaw-moment law ---------------------------------------------

struct SmcConfig {
  double k_sat = 3000.0;     // gain on the saturated surface term
  double k_lin = 8000.0;     // linear surface gain
  double boundary = 0.05;    // boundary-layer width of sat()
  double beta_blend = 0.01;  // sideslip weight inside the surface
};

struct SmcResult {
  double surface = 0.0;       // s = yaw error + blended sideslip
  double moment = 0.0;        // commanded corrective yaw moment [N m]
  double compensation = 0.0;  // estimated lateral-force moment it cancels
};

SmcResult yaw_moment(double yaw_rate, double yaw_rate_des, double beta_hat,
                     const Vec4& delta, const Vec4& fy_hat,
                     const VehicleParams& p, const SmcConfig& cfg = {});

// --- Torque allocation -------------------------------------------------------

struct AllocationResult {
  Vec4 torque = Vec4::Zero();  // per-wheel drive torque [N m]
  Vec4 lever = Vec4::Zero();   // moment arm each wheel was allocated with
  Vec4 share = Vec4::Zero();   // vertical-load share after redistribution
};

// Split a yaw moment across the four wheels in proportion to vertical load.
// Each torque is sized so the implied longitudinal forces reconstruct the
// moment exactly. Wheels whose arm is shorter than min_lever hand their
// share to the same-side partner. mirrored_levers selects a variant with the
// track-width terms mirrored left/right, kept for comparison studies.
AllocationResult allocate_torques(double moment, const Vec4& delta,
                                  const Vec4& fz, const VehicleParams& p,
                                  double min_lever = 0.05,
                                  bool mirrored_levers = false);

// --- Sideslip propagation ----------------------------------------------------

// Integrates the body sideslip angle from estimated tire forces with a
// midpoint rule; the angle is clamped to +-60 deg and flagged when clipped.
class SideslipEstimator {
 public:
  double update(double vx, const Vec4& delta, const Vec4& fx_hat,
                const Vec4& fy_hat, double dt, const VehicleParams& p);
  double beta() const { return beta_; }
  double lateral_velocity(double vx) const;
  bool saturated() const { return saturated_; }
  void reset(double beta0 = 0.0);

 private:
  double beta_ = 0.0;
  bool saturated_ = false;
};

}  // namespace fourwisd::dyc
