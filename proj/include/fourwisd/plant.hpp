#pragma once

#include <random>
#include <stdexcept>
#include <vector>

#include "fourwisd/domain.hpp"

// Nonlinear vehicle used as ground truth: magic-formula tires with a friction
// ellipse, quasi-static load transfer, per-wheel spin dynamics and a light
// second-order roll/pitch model feeding the IMU channels. Integrates at a finer
// step (1 ms) than the controllers (10 ms).

namespace fourwisd::plant {

struct PlantState {
  double vx = 0;        ///< body longitudinal speed [m/s]
  double vy = 0;        ///< body lateral speed [m/s]
  double yaw_rate = 0;  ///< [rad/s]
  double yaw = 0;       ///< global heading [rad]
  double X = 0;         ///< global position [m]
  double Y = 0;
  Vec4 omega = Vec4::Zero();  ///< wheel spin speeds [rad/s]
  double roll = 0;
  double roll_rate = 0;
  double pitch = 0;
  double pitch_rate = 0;

  double sideslip() const { return std::atan2(vy, vx); }
};

struct RoadSegment {
  double x_start = 0;
  double x_end = 0;
  double mu = 0.85;
};

/// Friction as a function of global X: piecewise-constant segments over a
/// default value. Segments must not overlap and every mu must be in (0, 1.2].
struct RoadProfile {
  double default_mu = 0.85;
  std::vector<RoadSegment> segments;

  double mu_at(double x) const;
  void validate() const;  ///< throws std::invalid_argument on bad profiles
};

/// Magic-formula shape constants plus rolling resistance. The lateral
/// stiffness factors are derived so the small-slip slope B*C*(mu*fz) equals
/// the chassis cornering stiffness at mu = 0.85 and static load.
struct MagicTireParams {
  double b_lat_front = 0;
  double b_lat_rear = 0;
  double c_lat = 1.9;
  double e_lat = 0.97;
  double b_long = 12.0;
  double c_long = 2.3;
  double e_long = 0.95;
  double f_r = 0.012;  ///< rolling-resistance coefficient [-]
};

MagicTireParams default_tire_params(const VehicleParams& p);

struct PlantConfig {
  MagicTireParams tires;
  double cg_height = 0.53;          ///< CG height for load transfer [m]
  double body_freq_hz = 2.0;        ///< roll/pitch natural frequency
  double body_damping = 0.7;        ///< roll/pitch damping ratio
  double roll_gain = 0;             ///< steady roll per lateral accel [rad/(m/s^2)]
  double pitch_gain = 0;            ///< steady pitch per decel [rad/(m/s^2)]
};

PlantConfig default_plant_config(const VehicleParams& p);

/// Sensor-noise variances in their native datasheet units. IMU channels
/// (roll rate, pitch rate, yaw rate, roll, yaw) in deg- and deg/s-squared;
/// the estimator measurement channels (vx, vy, ax, ay, yaw rate, 4x wheel
/// speed) in (m/s)^2, g^2, (rad/s)^2 and rpm^2.
struct NoiseSpec {
  std::array<double, 5> imu_var{};
  std::array<double, 9> meas_var{};
};

NoiseSpec noise_case1();
NoiseSpec noise_case2();

/// Per-channel standard deviations converted to SI (rad, rad/s, m/s, m/s^2).
std::array<double, 5> imu_sigma_si(const NoiseSpec& n);
std::array<double, 9> meas_sigma_si(const NoiseSpec& n, double g = 9.81);

/// Raised when the state leaves the model's validity region (|vy| > vx or a
/// non-finite value). The message names the offending quantity.
struct PlantDivergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Static axle loads plus longitudinal and lateral quasi-static transfer.
/// Sum is exactly m*g for any (ax, ay). ax, ay are body-frame specific
/// accelerations (force sums over mass).
Vec4 vertical_loads(const VehicleParams& p, double cg_height, double ax, double ay);

/// Wheel-frame tire forces from the current slip state. `mu` and `fz` are
/// per-wheel; combined slip is limited by the friction ellipse
/// fx^2 + fy^2 <= (mu*fz)^2. Requires vx > 0.1 m/s (slip undefined below).
TireForceSet tire_forces(const PlantState& s, const ControlCommand& cmd,
                         const Vec4& mu, const Vec4& fz, const VehicleParams& p,
                         const MagicTireParams& t);

struct BodyAccel {
  double ax = 0;  ///< sum Fx / m, body frame [m/s^2]
  double ay = 0;  ///< sum Fy / m, body frame [m/s^2]
};

/// Specific accelerations produced by the tire forces at the given state and
/// command (load transfer resolved internally by fixed-point refinement).
BodyAccel body_accel(const PlantState& s, const ControlCommand& cmd,
                     const RoadProfile& road, const VehicleParams& p,
                     const PlantConfig& cfg);

/// Tire forces at the given state/command with load transfer resolved — the
/// same evaluation the integrator uses at the start of a step.
TireForceSet current_forces(const PlantState& s, const ControlCommand& cmd,
                            const RoadProfile& road, const VehicleParams& p,
                            const PlantConfig& cfg);

/// Advance one step of size h (RK4 on the chassis, wheels and body modes).
/// Throws PlantDivergence when the new state is outside the validity region.
PlantState step(const PlantState& s, const ControlCommand& cmd,
                const RoadProfile& road, double h, const VehicleParams& p,
                const PlantConfig& cfg);

/// IMU reading at the current state; when `noise` is non-null, adds white
/// Gaussian noise per channel (converted to SI internally). `injected`, when
/// non-null, receives the noise actually added (SI units) for calibration.
ImuSample sample_imu(const PlantState& s, const NoiseSpec* noise,
                     std::mt19937_64& rng, Vec5* injected = nullptr);

/// Measurement vector for the model-based estimator:
/// [vx, vy, ax, ay, yaw rate, omega_FL..RR] with optional noise (SI).
Vec9 sample_measurement(const PlantState& s, const BodyAccel& acc,
                        const NoiseSpec* noise, std::mt19937_64& rng,
                        const VehicleParams& p, Vec9* injected = nullptr);

}  // namespace fourwisd::plant
