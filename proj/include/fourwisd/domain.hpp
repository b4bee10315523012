#pragma once

#include <array>
#include <cmath>
#include <string>

#include <Eigen/Dense>

// Shared vocabulary for the 4WIS/4WID stack. Everything downstream — plant,
// planner, controllers, estimators — indexes wheels and reads chassis constants
// through this header.
//
// Frame conventions (used consistently everywhere):
//   body:   x forward, y to the right, z down; yaw positive clockwise seen from
//           above. Left-side wheels (FL, RL) sit at body y = -t_w/2.
//   global: X along the initial heading, Y to the right of it; the yaw angle
//           rotates body into global.

namespace fourwisd {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec5 = Eigen::Matrix<double, 5, 1>;
using Vec8 = Eigen::Matrix<double, 8, 1>;
using Vec9 = Eigen::Matrix<double, 9, 1>;
using Vec15 = Eigen::Matrix<double, 15, 1>;
using Mat2x5 = Eigen::Matrix<double, 2, 5>;
using Mat5 = Eigen::Matrix<double, 5, 5>;
using Mat5x4 = Eigen::Matrix<double, 5, 4>;
using Mat9 = Eigen::Matrix<double, 9, 9>;
using Mat15 = Eigen::Matrix<double, 15, 15>;
using Mat9x15 = Eigen::Matrix<double, 9, 15>;
using MatX = Eigen::MatrixXd;
using VecX = Eigen::VectorXd;

inline constexpr double kPi = 3.14159265358979323846;

constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }

/// Canonical wheel order. All per-wheel vectors, matrices, log columns and file
/// schemas use this order.
enum class WheelId : int { FL = 0, FR = 1, RL = 2, RR = 3 };

inline constexpr std::array<WheelId, 4> kWheels{WheelId::FL, WheelId::FR,
                                                WheelId::RL, WheelId::RR};

constexpr int index(WheelId w) { return static_cast<int>(w); }
constexpr bool is_front(WheelId w) { return w == WheelId::FL || w == WheelId::FR; }
constexpr bool is_left(WheelId w) { return w == WheelId::FL || w == WheelId::RL; }

const char* name(WheelId w);

/// Chassis and tire constants of the test vehicle.
struct VehicleParams {
  double m = 0;       ///< sprung mass [kg]
  double I_z = 0;     ///< yaw inertia [kg m^2]
  double I_w = 0;     ///< wheel spin inertia [kg m^2]
  double t_w = 0;     ///< track width [m]
  double l_f = 0;     ///< CG to front axle [m]
  double l_r = 0;     ///< CG to rear axle [m]
  double C_f = 0;     ///< front cornering stiffness, per wheel [N/rad]
  double C_r = 0;     ///< rear cornering stiffness, per wheel [N/rad]
  double R_r = 0;     ///< unloaded wheel radius [m]
  double R_e = 0;     ///< effective rolling radius [m]
  double dt = 0;      ///< controller sampling time [s]
  double g = 9.81;    ///< gravity [m/s^2]

  double wheelbase() const { return l_f + l_r; }
  /// Body-frame wheel contact position (x, y) [m].
  Vec2 wheel_position(WheelId w) const {
    const double px = is_front(w) ? l_f : -l_r;
    const double py = is_left(w) ? -0.5 * t_w : 0.5 * t_w;
    return {px, py};
  }
  /// Per-wheel cornering stiffness [N/rad].
  double stiffness(WheelId w) const { return is_front(w) ? C_f : C_r; }
};

/// Test-vehicle constants used by every default scenario.
VehicleParams default_params();

/// Moment arm about the CG of a unit wheel-frame longitudinal force, for a
/// wheel steered by delta [rad]. Positive arms turn the body clockwise.
double yaw_lever_long(const VehicleParams& p, WheelId w, double delta);

/// Moment arm about the CG of a unit wheel-frame lateral force.
double yaw_lever_lat(const VehicleParams& p, WheelId w, double delta);

std::string to_json_string(const VehicleParams& p);
VehicleParams params_from_json_string(const std::string& text);

/// Wheel-frame tire forces plus vertical loads, one entry per WheelId.
struct TireForceSet {
  Vec4 fx = Vec4::Zero();  ///< longitudinal, wheel frame [N]
  Vec4 fy = Vec4::Zero();  ///< lateral, wheel frame [N]
  Vec4 fz = Vec4::Zero();  ///< vertical load [N]

  double& fx_at(WheelId w) { return fx[index(w)]; }
  double& fy_at(WheelId w) { return fy[index(w)]; }
  double& fz_at(WheelId w) { return fz[index(w)]; }
  double fx_at(WheelId w) const { return fx[index(w)]; }
  double fy_at(WheelId w) const { return fy[index(w)]; }
  double fz_at(WheelId w) const { return fz[index(w)]; }
};

/// Per-wheel steering command limit.
inline constexpr double kSteerLimitDeg = 21.0;
inline const double kSteerLimitRad = deg2rad(kSteerLimitDeg);

/// Actuator command: per-wheel steering angle [rad] and drive torque [N m].
/// Steering magnitudes above the actuator limit are invalid.
struct ControlCommand {
  Vec4 delta = Vec4::Zero();
  Vec4 torque = Vec4::Zero();

  bool steering_within_limit(double tol = 1e-9) const {
    return delta.cwiseAbs().maxCoeff() <= kSteerLimitRad + tol;
  }
};

/// One inertial measurement: the five channels consumed by the learned
/// force estimator. Angles/rates in rad, rad/s.
struct ImuSample {
  double roll_rate = 0;
  double pitch_rate = 0;
  double yaw_rate = 0;
  double roll_angle = 0;
  double yaw_angle = 0;

  Vec5 as_vector() const {
    Vec5 v;
    v << roll_rate, pitch_rate, yaw_rate, roll_angle, yaw_angle;
    return v;
  }
};

}  // namespace fourwisd
