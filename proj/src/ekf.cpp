#include "fourwisd/ekf.hpp"

#include <cmath>

#include <Eigen/Cholesky>

namespace fourwisd::est {

namespace {
constexpr double kMinSpeed = 0.1;

double safe_vx(double vx) { return std::max(vx, kMinSpeed); }
}  // namespace

EkfConfig default_ekf_config() {
  EkfConfig cfg;
  Vec15 q;
  q << 1.0, 1.0, 0.1,                  // body velocities, yaw rate
      0.001, 0.001, 0.001, 0.001,      // wheel speeds
      1.0, 1.0, 1.0, 1.0,              // longitudinal forces (random walk)
      0.001, 0.001, 0.001, 0.001;      // lateral forces (relaxation)
  cfg.q = q.asDiagonal();
  Vec9 r;
  r << 10.0, 1.0, 10.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0;
  cfg.r = r.asDiagonal();
  return cfg;
}

ForceEkf::ForceEkf(const VehicleParams& p, const EkfConfig& cfg)
    : p_(p), cfg_(cfg) {}

void ForceEkf::init_from_measurement(const Vec9& y) {
  x_.setZero();
  x_[0] = y[0];
  x_[1] = y[1];
  x_[2] = y[4];
  x_.segment<4>(3) = y.segment<4>(5);
  p_mat_ = Mat15::Identity();
  skipped_ = false;
  nis_ = 0.0;
}

Vec15 ForceEkf::dynamics(const Vec15& x, const EkfInputs& u) const {
  const double vx = safe_vx(x[0]);
  Vec15 f = Vec15::Zero();
  for (WheelId w : kWheels) {
    const int j = index(w);
    const double cu = std::cos(u.delta[j]);
    const double su = std::sin(u.delta[j]);
    const double fx = x[7 + j];
    const double fy = x[11 + j];
    f[0] += (fx * cu - fy * su) / p_.m;
    f[1] += (fx * su + fy * cu) / p_.m;
    f[2] += (fx * yaw_lever_long(p_, w, u.delta[j]) +
             fy * yaw_lever_lat(p_, w, u.delta[j])) /
            p_.I_z;
    // Wheel spin with the rolling term scaled by the vertical load.
    f[3 + j] = (u.torque[j] - p_.R_e * (fx + p_.R_r * u.fz[j])) / p_.I_w;
    // Lateral force relaxes toward its linear-tire value.
    const double off = is_front(w) ? p_.l_f : -p_.l_r;
    const double target =
        p_.stiffness(w) * (u.delta[j] - (x[1] + off * x[2]) / vx);
    f[11 + j] = (vx / cfg_.relaxation_length) * (-fy + target);
  }
  f[0] += x[1] * x[2];
  f[1] += -x[0] * x[2];
  return f;
}

Mat15 ForceEkf::dynamics_jacobian(const Vec15& x, const EkfInputs& u) const {
  const double vx = safe_vx(x[0]);
  const double sigma = cfg_.relaxation_length;
  Mat15 a = Mat15::Zero();
  a(0, 1) = x[2];
  a(0, 2) = x[1];
  a(1, 0) = -x[2];
  a(1, 2) = -x[0];
  for (WheelId w : kWheels) {
    const int j = index(w);
    const double cu = std::cos(u.delta[j]);
    const double su = std::sin(u.delta[j]);
    a(0, 7 + j) = cu / p_.m;
    a(0, 11 + j) = -su / p_.m;
    a(1, 7 + j) = su / p_.m;
    a(1, 11 + j) = cu / p_.m;
    a(2, 7 + j) = yaw_lever_long(p_, w, u.delta[j]) / p_.I_z;
    a(2, 11 + j) = yaw_lever_lat(p_, w, u.delta[j]) / p_.I_z;
    a(3 + j, 7 + j) = -p_.R_e / p_.I_w;

    const double off = is_front(w) ? p_.l_f : -p_.l_r;
    const double c = p_.stiffness(w);
    const double target = c * (u.delta[j] - (x[1] + off * x[2]) / vx);
    const int r = 11 + j;
    a(r, 0) = (-x[r] + target) / sigma + c * (x[1] + off * x[2]) / (sigma * vx);
    a(r, 1) = -c / sigma;
    a(r, 2) = -c * off / sigma;
    a(r, r) = -vx / sigma;
  }
  return a;
}

Vec9 ForceEkf::measure(const Vec15& x, const EkfInputs& u) const {
  Vec9 y;
  double ax = 0.0, ay = 0.0;
  for (int j = 0; j < 4; ++j) {
    const double cu = std::cos(u.delta[j]);
    const double su = std::sin(u.delta[j]);
    ax += (x[7 + j] * cu - x[11 + j] * su) / p_.m;
    ay += (x[7 + j] * su + x[11 + j] * cu) / p_.m;
  }
  y << x[0], x[1], ax, ay, x[2], x[3], x[4], x[5], x[6];
  return y;
}

Mat9x15 ForceEkf::measurement_jacobian(const Vec15&, const EkfInputs& u) const {
  Mat9x15 c = Mat9x15::Zero();
  c(0, 0) = 1.0;
  c(1, 1) = 1.0;
  for (int j = 0; j < 4; ++j) {
    const double cu = std::cos(u.delta[j]);
    const double su = std::sin(u.delta[j]);
    c(2, 7 + j) = cu / p_.m;
    c(2, 11 + j) = -su / p_.m;
    c(3, 7 + j) = su / p_.m;
    c(3, 11 + j) = cu / p_.m;
  }
  c(4, 2) = 1.0;
  for (int j = 0; j < 4; ++j) c(5 + j, 3 + j) = 1.0;
  return c;
}

void ForceEkf::predict(const EkfInputs& u, double dt) {
  last_u_ = u;
  const Mat15 a = dynamics_jacobian(x_, u);
  x_ += dt * dynamics(x_, u);
  const Mat15 a_d = Mat15::Identity() + dt * a;
  p_mat_ = a_d * p_mat_ * a_d.transpose() + cfg_.q;
}

bool ForceEkf::update(const Vec9& y) {
  const Vec9 innovation = y - measure(x_, last_u_);
  if (!innovation.allFinite()) {
    skipped_ = true;
    return false;
  }
  skipped_ = false;
  const Mat9x15 c = measurement_jacobian(x_, last_u_);
  const Mat9 s = c * p_mat_ * c.transpose() + cfg_.r;
  const Eigen::LLT<Mat9> llt(s);
  const Eigen::Matrix<double, 15, 9> k =
      p_mat_ * c.transpose() * llt.solve(Mat9::Identity());
  nis_ = innovation.dot(llt.solve(innovation));
  x_ += k * innovation;
  p_mat_ = (Mat15::Identity() - k * c) * p_mat_;
  p_mat_ = 0.5 * (p_mat_ + p_mat_.transpose()).eval();
  return true;
}

}  // namespace fourwisd::est
