#include "fourwisd/plant.hpp"

#include <algorithm>
#include <cmath>

namespace fourwisd::plant {
namespace {

constexpr double kMinSpeed = 0.1;        // below this, slip quantities are undefined
constexpr double kRpmToRadS = 2.0 * kPi / 60.0;

double magic(double slip, double b, double c, double e) {
  const double bs = b * slip;
  return std::sin(c * std::atan(bs - e * (bs - std::atan(bs))));
}

// Packed integration state: [vx vy r yaw X Y w0..w3 roll droll pitch dpitch]
using StateVec = Eigen::Matrix<double, 14, 1>;

StateVec pack(const PlantState& s) {
  StateVec v;
  v << s.vx, s.vy, s.yaw_rate, s.yaw, s.X, s.Y, s.omega[0], s.omega[1],
      s.omega[2], s.omega[3], s.roll, s.roll_rate, s.pitch, s.pitch_rate;
  return v;
}

PlantState unpack(const StateVec& v) {
  PlantState s;
  s.vx = v[0];
  s.vy = v[1];
  s.yaw_rate = v[2];
  s.yaw = v[3];
  s.X = v[4];
  s.Y = v[5];
  s.omega = v.segment<4>(6);
  s.roll = v[10];
  s.roll_rate = v[11];
  s.pitch = v[12];
  s.pitch_rate = v[13];
  return s;
}

Vec4 road_mu_per_wheel(const PlantState& s, const RoadProfile& road,
                       const VehicleParams& p) {
  Vec4 mu;
  const double c = std::cos(s.yaw), sn = std::sin(s.yaw);
  for (WheelId w : kWheels) {
    const Vec2 pos = p.wheel_position(w);
    const double wheel_x = s.X + pos.x() * c - pos.y() * sn;
    mu[index(w)] = road.mu_at(wheel_x);
  }
  return mu;
}

struct ForceEval {
  TireForceSet forces;
  double sum_fx_body = 0;  // body-frame force sums
  double sum_fy_body = 0;
  double moment = 0;       // yaw moment about CG
};

ForceEval evaluate_forces(const PlantState& s, const ControlCommand& cmd,
                          const Vec4& mu, const VehicleParams& p,
                          const PlantConfig& cfg) {
  // Load transfer depends on the accelerations the forces themselves produce;
  // two fixed-point sweeps from the static distribution settle it to well
  // below tire-model accuracy.
  Vec4 fz = vertical_loads(p, cfg.cg_height, 0.0, 0.0);
  TireForceSet forces;
  double sum_fx = 0, sum_fy = 0;
  for (int pass = 0; pass < 3; ++pass) {
    forces = tire_forces(s, cmd, mu, fz, p, cfg.tires);
    sum_fx = 0;
    sum_fy = 0;
    for (WheelId w : kWheels) {
      const int i = index(w);
      const double cd = std::cos(cmd.delta[i]), sd = std::sin(cmd.delta[i]);
      sum_fx += forces.fx[i] * cd - forces.fy[i] * sd;
      sum_fy += forces.fx[i] * sd + forces.fy[i] * cd;
    }
    if (pass < 2) fz = vertical_loads(p, cfg.cg_height, sum_fx / p.m, sum_fy / p.m);
  }

  ForceEval ev;
  ev.forces = forces;
  ev.sum_fx_body = sum_fx;
  ev.sum_fy_body = sum_fy;
  for (WheelId w : kWheels) {
    const int i = index(w);
    const Vec2 pos = p.wheel_position(w);
    const double cd = std::cos(cmd.delta[i]), sd = std::sin(cmd.delta[i]);
    const double fx_body = forces.fx[i] * cd - forces.fy[i] * sd;
    const double fy_body = forces.fx[i] * sd + forces.fy[i] * cd;
    ev.moment += pos.x() * fy_body - pos.y() * fx_body;
  }
  return ev;
}

StateVec derivative(const PlantState& s, const ControlCommand& cmd,
                    const Vec4& mu, const VehicleParams& p,
                    const PlantConfig& cfg) {
  const ForceEval ev = evaluate_forces(s, cmd, mu, p, cfg);
  const double ax = ev.sum_fx_body / p.m;
  const double ay = ev.sum_fy_body / p.m;

  StateVec d;
  d[0] = ax + s.vy * s.yaw_rate;
  d[1] = ay - s.vx * s.yaw_rate;
  d[2] = ev.moment / p.I_z;
  d[3] = s.yaw_rate;
  d[4] = s.vx * std::cos(s.yaw) - s.vy * std::sin(s.yaw);
  d[5] = s.vx * std::sin(s.yaw) + s.vy * std::cos(s.yaw);
  for (int i = 0; i < 4; ++i) {
    const double rolling = cfg.tires.f_r * ev.forces.fz[i];
    d[6 + i] = (cmd.torque[i] - p.R_e * (ev.forces.fx[i] + rolling)) / p.I_w;
  }
  const double wn = 2.0 * kPi * cfg.body_freq_hz;
  d[10] = s.roll_rate;
  d[11] = wn * wn * (cfg.roll_gain * ay - s.roll) - 2.0 * cfg.body_damping * wn * s.roll_rate;
  d[12] = s.pitch_rate;
  d[13] = wn * wn * (-cfg.pitch_gain * ax - s.pitch) - 2.0 * cfg.body_damping * wn * s.pitch_rate;
  return d;
}

}  // namespace

double RoadProfile::mu_at(double x) const {
  for (const RoadSegment& seg : segments) {
    if (x >= seg.x_start && x < seg.x_end) return seg.mu;
  }
  return default_mu;
}

void RoadProfile::validate() const {
  auto check_mu = [](double mu) {
    if (!(mu > 0.0) || mu > 1.2)
      throw std::invalid_argument("road friction must be in (0, 1.2]");
  };
  check_mu(default_mu);
  for (size_t i = 0; i < segments.size(); ++i) {
    check_mu(segments[i].mu);
    if (!(segments[i].x_start < segments[i].x_end))
      throw std::invalid_argument("road segment has non-positive length");
    for (size_t j = i + 1; j < segments.size(); ++j) {
      const bool disjoint = segments[i].x_end <= segments[j].x_start ||
                            segments[j].x_end <= segments[i].x_start;
      if (!disjoint) throw std::invalid_argument("road segments overlap");
    }
  }
}

MagicTireParams default_tire_params(const VehicleParams& p) {
  MagicTireParams t;
  // Pin the small-slip slope B*C*(mu*fz) to the chassis cornering stiffness at
  // nominal friction and static load, so the linear controllers and the plant
  // agree where both are valid.
  const double mu0 = 0.85;
  const double fz_front = p.m * p.g * p.l_r / (2.0 * p.wheelbase());
  const double fz_rear = p.m * p.g * p.l_f / (2.0 * p.wheelbase());
  t.b_lat_front = p.C_f / (mu0 * fz_front * t.c_lat);
  t.b_lat_rear = p.C_r / (mu0 * fz_rear * t.c_lat);
  return t;
}

PlantConfig default_plant_config(const VehicleParams& p) {
  PlantConfig cfg;
  cfg.tires = default_tire_params(p);
  // ~3 deg of body roll at 0.5 g, a bit less pitch under the same decel.
  cfg.roll_gain = deg2rad(3.0) / (0.5 * p.g);
  cfg.pitch_gain = deg2rad(2.0) / (0.5 * p.g);
  return cfg;
}

NoiseSpec noise_case1() {
  NoiseSpec n;
  n.imu_var = {0.5, 0.031, 0.25, 0.125, 0.125};
  n.meas_var = {0.02, 0.2, 0.02, 0.02, 0.02, 6.0, 6.0, 6.0, 6.0};
  return n;
}

NoiseSpec noise_case2() {
  NoiseSpec n;
  n.imu_var = {1.0, 0.062, 0.5, 0.25, 0.25};
  n.meas_var = {0.04, 0.4, 0.04, 0.04, 0.04, 12.0, 12.0, 12.0, 12.0};
  return n;
}

std::array<double, 5> imu_sigma_si(const NoiseSpec& n) {
  std::array<double, 5> s{};
  for (int i = 0; i < 5; ++i) s[i] = deg2rad(std::sqrt(n.imu_var[i]));
  return s;
}

std::array<double, 9> meas_sigma_si(const NoiseSpec& n, double g) {
  std::array<double, 9> s{};
  s[0] = std::sqrt(n.meas_var[0]);           // vx [m/s]
  s[1] = std::sqrt(n.meas_var[1]);           // vy [m/s]
  s[2] = std::sqrt(n.meas_var[2]) * g;       // ax [g] -> [m/s^2]
  s[3] = std::sqrt(n.meas_var[3]) * g;       // ay
  s[4] = std::sqrt(n.meas_var[4]);           // yaw rate [rad/s]
  for (int i = 5; i < 9; ++i) s[i] = std::sqrt(n.meas_var[i]) * kRpmToRadS;
  return s;
}

Vec4 vertical_loads(const VehicleParams& p, double cg_height, double ax, double ay) {
  const double L = p.wheelbase();
  const double front_axle = p.m * p.g * p.l_r / L - p.m * ax * cg_height / L;
  const double rear_axle = p.m * p.g * p.l_f / L + p.m * ax * cg_height / L;
  // Lateral transfer split between the axles by their static share. Positive
  // ay (rightward) loads the left wheels, which sit at y = -t_w/2.
  const double transfer = p.m * ay * cg_height / p.t_w;
  const double share_front = p.l_r / L;
  const double share_rear = p.l_f / L;
  Vec4 fz;
  fz[index(WheelId::FL)] = 0.5 * front_axle + share_front * transfer;
  fz[index(WheelId::FR)] = 0.5 * front_axle - share_front * transfer;
  fz[index(WheelId::RL)] = 0.5 * rear_axle + share_rear * transfer;
  fz[index(WheelId::RR)] = 0.5 * rear_axle - share_rear * transfer;
  return fz;
}

TireForceSet tire_forces(const PlantState& s, const ControlCommand& cmd,
                         const Vec4& mu, const Vec4& fz, const VehicleParams& p,
                         const MagicTireParams& t) {
  if (s.vx <= kMinSpeed)
    throw std::domain_error("tire_forces: vx too small, slip undefined");

  TireForceSet out;
  out.fz = fz;
  for (WheelId w : kWheels) {
    const int i = index(w);
    const Vec2 pos = p.wheel_position(w);
    // Contact-point velocity in the body frame, then in the wheel frame.
    const double vxw = s.vx - s.yaw_rate * pos.y();
    const double vyw = s.vy + s.yaw_rate * pos.x();
    const double cd = std::cos(cmd.delta[i]), sd = std::sin(cmd.delta[i]);
    const double v_long = vxw * cd + vyw * sd;
    const double v_ref = std::max(std::abs(v_long), kMinSpeed);

    const double alpha = cmd.delta[i] - std::atan2(vyw, vxw);
    const double kappa = (p.R_e * s.omega[i] - v_long) / v_ref;

    const double b_lat = is_front(w) ? t.b_lat_front : t.b_lat_rear;
    const double peak = mu[i] * fz[i];
    double fy = peak * magic(alpha, b_lat, t.c_lat, t.e_lat);
    double fx = peak * magic(kappa, t.b_long, t.c_long, t.e_long);

    const double norm = std::hypot(fx, fy);
    if (norm > peak && norm > 0) {
      const double scale = peak / norm;
      fx *= scale;
      fy *= scale;
    }
    out.fx[i] = fx;
    out.fy[i] = fy;
  }
  return out;
}

BodyAccel body_accel(const PlantState& s, const ControlCommand& cmd,
                     const RoadProfile& road, const VehicleParams& p,
                     const PlantConfig& cfg) {
  const Vec4 mu = road_mu_per_wheel(s, road, p);
  const ForceEval ev = evaluate_forces(s, cmd, mu, p, cfg);
  return {ev.sum_fx_body / p.m, ev.sum_fy_body / p.m};
}

TireForceSet current_forces(const PlantState& s, const ControlCommand& cmd,
                            const RoadProfile& road, const VehicleParams& p,
                            const PlantConfig& cfg) {
  const Vec4 mu = road_mu_per_wheel(s, road, p);
  return evaluate_forces(s, cmd, mu, p, cfg).forces;
}

PlantState step(const PlantState& s, const ControlCommand& cmd,
                const RoadProfile& road, double h, const VehicleParams& p,
                const PlantConfig& cfg) {
  if (!cmd.steering_within_limit())
    throw std::invalid_argument("step: steering command exceeds actuator limit");

  // Friction sampled once per step at the current wheel positions; the wheels
  // move < 2.5 cm per sub-step, far below segment granularity.
  const Vec4 mu = road_mu_per_wheel(s, road, p);
  auto f = [&](const StateVec& v) {
    return derivative(unpack(v), cmd, mu, p, cfg);
  };

  const StateVec x0 = pack(s);
  const StateVec k1 = f(x0);
  const StateVec k2 = f(x0 + 0.5 * h * k1);
  const StateVec k3 = f(x0 + 0.5 * h * k2);
  const StateVec k4 = f(x0 + h * k3);
  const StateVec x1 = x0 + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

  PlantState next = unpack(x1);
  if (!x1.allFinite()) throw PlantDivergence("plant state became non-finite");
  if (std::abs(next.vy) > next.vx)
    throw PlantDivergence("lateral speed exceeded longitudinal speed");
  return next;
}

ImuSample sample_imu(const PlantState& s, const NoiseSpec* noise,
                     std::mt19937_64& rng, Vec5* injected) {
  ImuSample m;
  m.roll_rate = s.roll_rate;
  m.pitch_rate = s.pitch_rate;
  m.yaw_rate = s.yaw_rate;
  m.roll_angle = s.roll;
  m.yaw_angle = s.yaw;
  if (injected) injected->setZero();
  if (noise) {
    const auto sigma = imu_sigma_si(*noise);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vec5 add;
    for (int i = 0; i < 5; ++i) add[i] = sigma[i] * gauss(rng);
    m.roll_rate += add[0];
    m.pitch_rate += add[1];
    m.yaw_rate += add[2];
    m.roll_angle += add[3];
    m.yaw_angle += add[4];
    if (injected) *injected = add;
  }
  return m;
}

Vec9 sample_measurement(const PlantState& s, const BodyAccel& acc,
                        const NoiseSpec* noise, std::mt19937_64& rng,
                        const VehicleParams& p, Vec9* injected) {
  Vec9 y;
  y << s.vx, s.vy, acc.ax, acc.ay, s.yaw_rate, s.omega[0], s.omega[1],
      s.omega[2], s.omega[3];
  if (injected) injected->setZero();
  if (noise) {
    const auto sigma = meas_sigma_si(*noise, p.g);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < 9; ++i) {
      const double add = sigma[i] * gauss(rng);
      y[i] += add;
      if (injected) (*injected)[i] = add;
    }
  }
  return y;
}

}  // namespace fourwisd::plant
