#include "fourwisd/dyc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fourwisd::dyc {

double steady_state_yaw_rate(double vx, double delta_f,
                             const VehicleParams& p) {
  const double wb = p.wheelbase();
  const double denom =
      wb + p.m * vx * vx * (p.l_r * p.C_r - p.l_f * p.C_f) /
               (2.0 * p.C_r * p.C_f * wb);
  return vx * delta_f / denom;
}

double yaw_rate_cap(double vx, double mu, double margin, double g) {
  return margin * mu * g / std::max(vx, 0.1);
}

double YawReference::update(double vx, double delta_f, double mu, double dt,
                            const VehicleParams& p) {
  const double cap = yaw_rate_cap(vx, mu, cfg_.friction_margin, p.g);
  raw_ = std::clamp(steady_state_yaw_rate(vx, delta_f, p), -cap, cap);
  const double alpha = 1.0 - std::exp(-dt / cfg_.tau);
  state_ += alpha * (raw_ - state_);
  return state_;
}

SmcResult yaw_moment(double yaw_rate, double yaw_rate_des, double beta_hat,
                     const Vec4& delta, const Vec4& fy_hat,
                     const VehicleParams& p, const SmcConfig& cfg) {
  SmcResult out;
  out.surface = yaw_rate - yaw_rate_des + cfg.beta_blend * beta_hat;
  for (WheelId w : kWheels) {
    out.compensation += fy_hat[index(w)] * yaw_lever_lat(p, w, delta[index(w)]);
  }
  const double sat = std::clamp(out.surface / cfg.boundary, -1.0, 1.0);
  out.moment = -cfg.k_sat * sat - cfg.k_lin * out.surface - out.compensation;
  return out;
}

AllocationResult allocate_torques(double moment, const Vec4& delta,
                                  const Vec4& fz, const VehicleParams& p,
                                  double min_lever, bool mirrored_levers) {
  if (!(fz.minCoeff() >= 0.0) || fz.sum() <= 0.0) {
    throw std::invalid_argument("vertical loads must be non-negative");
  }
  AllocationResult out;
  for (WheelId w : kWheels) {
    const int i = index(w);
    out.lever[i] = yaw_lever_long(p, w, delta[i]);
    if (mirrored_levers) {
      const Vec2 pos = p.wheel_position(w);
      out.lever[i] = pos[0] * std::sin(delta[i]) + pos[1] * std::cos(delta[i]);
    }
  }
  out.share = fz / fz.sum();

  // A wheel with a near-zero arm cannot realize its part of the moment with
  // bounded force; its load share moves to the other axle on the same side.
  for (WheelId w : kWheels) {
    const int i = index(w);
    if (std::abs(out.lever[i]) < min_lever) {
      const WheelId partner = is_front(w)
                                  ? (is_left(w) ? WheelId::RL : WheelId::RR)
                                  : (is_left(w) ? WheelId::FL : WheelId::FR);
      const int j = index(partner);
      if (std::abs(out.lever[j]) >= min_lever) {
        out.share[j] += out.share[i];
      }
      out.share[i] = 0.0;
    }
  }

  for (int i = 0; i < 4; ++i) {
    out.torque[i] =
        out.share[i] == 0.0
            ? 0.0
            : out.share[i] * moment * p.R_e / out.lever[i];
  }
  return out;
}

double SideslipEstimator::lateral_velocity(double vx) const {
  return vx * std::tan(beta_);
}

void SideslipEstimator::reset(double beta0) {
  beta_ = beta0;
  saturated_ = false;
}

double SideslipEstimator::update(double vx, const Vec4& delta,
                                 const Vec4& fx_hat, const Vec4& fy_hat,
                                 double dt, const VehicleParams& p) {
  const double v = std::max(vx, 0.1);
  const auto rate = [&](double beta) {
    double sum = 0.0;
    for (int i = 0; i < 4; ++i) {
      sum += -fx_hat[i] * std::sin(beta - delta[i]) +
             fy_hat[i] * std::cos(delta[i] - beta);
    }
    return sum / (p.m * v);
  };
  const double mid = beta_ + 0.5 * dt * rate(beta_);
  double next = beta_ + dt * rate(mid);
  const double limit = kPi / 3.0;
  saturated_ = std::abs(next) > limit;
  beta_ = std::clamp(next, -limit, limit);
  return beta_;
}

}  // namespace fourwisd::dyc
