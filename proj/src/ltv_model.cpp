#include "fourwisd/ltv_model.hpp"

#include <cmath>
#include <stdexcept>

namespace fourwisd::ctrl {

namespace {
constexpr double kMinSpeed = 0.1;

// Signed axle offset entering the slip angle: +l_f front, -l_r rear.
double axle_offset(const VehicleParams& p, WheelId w) {
  return is_front(w) ? p.l_f : -p.l_r;
}
}  // namespace

double model_lateral_force(const Vec5& x, const ModelInputs& in, WheelId w,
                           const VehicleParams& p) {
  const double slip =
      in.delta[index(w)] - (in.vy_hat + axle_offset(p, w) * x[2]) / x[0];
  return p.stiffness(w) * slip;
}

Vec5 eval_dynamics(const Vec5& x, const ModelInputs& in,
                   const VehicleParams& p, const ModelOptions& opt) {
  if (!(x[0] > kMinSpeed)) {
    throw std::domain_error("model is invalid near standstill");
  }
  double sum_fx = 0.0, sum_fy = 0.0, moment = 0.0;
  for (WheelId w : kWheels) {
    const int j = index(w);
    const double fy = model_lateral_force(x, in, w, p);
    const double cu = std::cos(in.delta[j]);
    const double su = std::sin(in.delta[j]);
    sum_fx += in.fx[j] * cu - fy * su;
    sum_fy += in.fx[j] * su + fy * cu;
    moment += in.fx[j] * yaw_lever_long(p, w, in.delta[j]) +
              fy * yaw_lever_lat(p, w, in.delta[j]);
  }
  Vec5 f;
  f[0] = sum_fx / p.m + x[1] * x[2];
  f[1] = sum_fy / p.m - x[0] * x[2];
  f[2] = moment / p.I_z;
  f[3] = x[2];
  f[4] = opt.lateral_position_uses_heading
             ? x[0] * std::sin(x[3]) + x[1] * std::cos(x[3])
             : x[1];
  return f;
}

Linearization linearize(const Vec5& x, const ModelInputs& in,
                        const VehicleParams& p, double dt,
                        const ModelOptions& opt) {
  if (!(x[0] > kMinSpeed)) {
    throw std::domain_error("model is invalid near standstill");
  }
  Linearization lin;
  Mat5& a = lin.a;
  Mat5x4& b = lin.b;

  for (WheelId w : kWheels) {
    const int j = index(w);
    const double cu = std::cos(in.delta[j]);
    const double su = std::sin(in.delta[j]);
    const double fy = model_lateral_force(x, in, w, p);
    const double c = p.stiffness(w);
    const double off = axle_offset(p, w);
    // Slip-term sensitivities; the vy state does not enter the tire forces.
    const double dfy_dvx = c * (in.vy_hat + off * x[2]) / (x[0] * x[0]);
    const double dfy_dr = -c * off / x[0];
    const double ll = yaw_lever_long(p, w, in.delta[j]);
    const double la = yaw_lever_lat(p, w, in.delta[j]);

    a(0, 0) += -su * dfy_dvx / p.m;
    a(0, 2) += -su * dfy_dr / p.m;
    a(1, 0) += cu * dfy_dvx / p.m;
    a(1, 2) += cu * dfy_dr / p.m;
    a(2, 0) += la * dfy_dvx / p.I_z;
    a(2, 2) += la * dfy_dr / p.I_z;

    b(0, j) = (-in.fx[j] * su - c * su - fy * cu) / p.m;
    b(1, j) = (in.fx[j] * cu + c * cu - fy * su) / p.m;
    // Lever arms rotate with the wheel: d(ll)/du = la, d(la)/du = -ll.
    b(2, j) = (in.fx[j] * la + c * la - fy * ll) / p.I_z;
  }

  a(0, 1) += x[2];
  a(0, 2) += x[1];
  a(1, 0) += -x[2];
  a(1, 2) += -x[0];
  a(3, 2) = 1.0;
  if (opt.lateral_position_uses_heading) {
    a(4, 0) = std::sin(x[3]);
    a(4, 1) = std::cos(x[3]);
    a(4, 3) = x[0] * std::cos(x[3]) - x[1] * std::sin(x[3]);
  } else {
    a(4, 1) = 1.0;
  }

  lin.a_d = Mat5::Identity() + a * dt;
  lin.b_d = b * dt;
  return lin;
}

}  // namespace fourwisd::ctrl
