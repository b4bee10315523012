#pragma once

#include <vector>

#include "fourwisd/domain.hpp"

namespace fourwisd::apf {

// Planar potential field over world coordinates (X along the road, Y to the
// right of it). The field combines a Gaussian obstacle repeller, a bump over
// the occupied lane, inverse-square barriers at the road edges and a
// longitudinal pull toward the desired cruise speed.
struct FieldParams {
  double a_obstacle = 10.0;  // obstacle peak height
  double sigma_x = 12.0;     // obstacle footprint along the road
  double sigma_y = 1.2;      // obstacle footprint across the road
  double x_obstacle = 50.0;
  double y_obstacle = -1.0;

  double a_lane = 2.0;  // occupied-lane bump height
  double sigma_lane = 0.8;
  double y_lane = 0.0;  // centre of the occupied lane

  double a_road = 0.5;  // road-edge barrier gain
  double y_edge_left = -1.8;
  double y_edge_right = 5.4;

  double gamma_v = 0.05;  // longitudinal pull gain
  double v_desired = 24.22;
  double v_current = 22.22;  // updated by the caller before each plan
};

double obstacle_potential(double x, double y, const FieldParams& f);
double lane_potential(double y, const FieldParams& f);
double road_potential(double y, const FieldParams& f);
double velocity_potential(double x, const FieldParams& f);
double total_potential(double x, double y, const FieldParams& f);

// Negative gradient of the total potential, evaluated analytically.
Vec2 field_force(double x, double y, const FieldParams& f);

// Direction of the field force, in (-pi, pi].
double desired_heading(double x, double y, const FieldParams& f);

struct ReferenceTrajectory {
  std::vector<double> phi;  // heading reference over the horizon
  std::vector<double> y;    // lateral position reference over the horizon
};

// Roll the field direction forward n steps of length h from (x0, y0), holding
// the body velocities (vx, vy) constant over the horizon. Entry j holds the
// heading commanded over interval j and the lateral position it reaches.
ReferenceTrajectory plan_reference(double x0, double y0, double vx, double vy,
                                   int n, double h, const FieldParams& f);

}  // namespace fourwisd::apf
