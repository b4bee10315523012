#pragma once

#include "fourwisd/domain.hpp"

namespace fourwisd::est {

// Extended Kalman filter that estimates per-wheel tire forces from standard
// chassis sensors. State (15): [vx, vy, yaw_rate, omega x4, Fx x4, Fy x4].
// Longitudinal forces evolve as random walks; lateral forces follow a
// relaxation-length law toward their linear-tire value. Vertical loads are
// supplied externally (from measured accelerations), so they enter the
// model as known inputs rather than states.
struct EkfConfig {
  Mat15 q = Mat15::Identity();    // discrete process covariance
  Mat9 r = Mat9::Identity();      // measurement covariance
  double relaxation_length = 0.3;  // lateral-force lag [m]
};

EkfConfig default_ekf_config();

struct EkfInputs {
  Vec4 delta = Vec4::Zero();   // wheel steer angles [rad]
  Vec4 torque = Vec4::Zero();  // wheel drive torques [N m]
  Vec4 fz = Vec4::Zero();      // vertical loads [N]
};

// Measurement vector (9): [vx, vy, ax, ay, yaw_rate, omega x4]. The
// acceleration rows are specific-force sums over the estimated tire forces.
class ForceEkf {
 public:
  explicit ForceEkf(const VehicleParams& p,
                    const EkfConfig& cfg = default_ekf_config());

  // Kinematic channels from the first measurement; forces start at zero.
  void init_from_measurement(const Vec9& y);

  void predict(const EkfInputs& u, double dt);

  // Correct with one measurement, using the steer angles of the latest
  // predict. Returns false (and flags) when the innovation is non-finite;
  // the state is left untouched in that case.
  bool update(const Vec9& y);

  const Vec15& state() const { return x_; }
  const Mat15& covariance() const { return p_mat_; }
  Vec4 fx() const { return x_.segment<4>(7); }
  Vec4 fy() const { return x_.segment<4>(11); }
  double last_nis() const { return nis_; }
  bool skipped_update() const { return skipped_; }

  // Model pieces, exposed so they can be verified independently.
  Vec15 dynamics(const Vec15& x, const EkfInputs& u) const;
  Mat15 dynamics_jacobian(const Vec15& x, const EkfInputs& u) const;
  Vec9 measure(const Vec15& x, const EkfInputs& u) const;
  Mat9x15 measurement_jacobian(const Vec15& x, const EkfInputs& u) const;

 private:
  VehicleParams p_;
  EkfConfig cfg_;
  Vec15 x_ = Vec15::Zero();
  Mat15 p_mat_ = Mat15::Identity();
  EkfInputs last_u_;
  double nis_ = 0.0;
  bool skipped_ = false;
};

}  // namespace fourwisd::est
