#include "fourwisd/apf.hpp"

#include <cmath>

namespace fourwisd::apf {

double obstacle_potential(double x, double y, const FieldParams& f) {
  const double dx = x - f.x_obstacle;
  const double dy = y - f.y_obstacle;
  return f.a_obstacle * std::exp(-dx * dx / (2.0 * f.sigma_x * f.sigma_x) -
                                 dy * dy / (2.0 * f.sigma_y * f.sigma_y));
}

double lane_potential(double y, const FieldParams& f) {
  const double dy = y - f.y_lane;
  return f.a_lane * std::exp(-dy * dy / (2.0 * f.sigma_lane * f.sigma_lane));
}

double road_potential(double y, const FieldParams& f) {
  const double dl = y - f.y_edge_left;
  const double dr = y - f.y_edge_right;
  return f.a_road * (1.0 / (dl * dl) + 1.0 / (dr * dr));
}

double velocity_potential(double x, const FieldParams& f) {
  return f.gamma_v * (f.v_current - f.v_desired) * x;
}

double total_potential(double x, double y, const FieldParams& f) {
  return obstacle_potential(x, y, f) + lane_potential(y, f) +
         road_potential(y, f) + velocity_potential(x, f);
}

Vec2 field_force(double x, double y, const FieldParams& f) {
  const double po = obstacle_potential(x, y, f);
  const double dx = x - f.x_obstacle;
  const double dy = y - f.y_obstacle;

  // Only the obstacle and velocity terms vary along the road.
  const double fx = po * dx / (f.sigma_x * f.sigma_x) -
                    f.gamma_v * (f.v_current - f.v_desired);

  const double dyl = y - f.y_lane;
  const double dl = y - f.y_edge_left;
  const double dr = y - f.y_edge_right;
  const double fy =
      po * dy / (f.sigma_y * f.sigma_y) +
      lane_potential(y, f) * dyl / (f.sigma_lane * f.sigma_lane) +
      2.0 * f.a_road * (1.0 / (dl * dl * dl) + 1.0 / (dr * dr * dr));

  return Vec2(fx, fy);
}

double desired_heading(double x, double y, const FieldParams& f) {
  const Vec2 force = field_force(x, y, f);
  return std::atan2(force[1], force[0]);
}

ReferenceTrajectory plan_reference(double x0, double y0, double vx, double vy,
                                   int n, double h, const FieldParams& f) {
  ReferenceTrajectory out;
  out.phi.reserve(n);
  out.y.reserve(n);
  double x = x0;
  double y = y0;
  for (int k = 0; k < n; ++k) {
    const double phi = desired_heading(x, y, f);
    x += h * (vx * std::cos(phi) - vy * std::sin(phi));
    y += h * (vx * std::sin(phi) + vy * std::cos(phi));
    out.phi.push_back(phi);
    out.y.push_back(y);
  }
  return out;
}

}  // namespace fourwisd::apf
