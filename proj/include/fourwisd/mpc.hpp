#pragma once

#include <vector>

#include "fourwisd/ltv_model.hpp"

namespace fourwisd::qp {

// Dense convex quadratic program:  min 0.5 x'Hx + f'x  s.t.  a x <= b,
// with H symmetric positive definite. Solved by dual coordinate ascent with
// warm starting; answers that are not tight at the tolerance are finished by
// an exact dual active-set walk.
struct Problem {
  MatX h;
  VecX f;
  MatX a;
  VecX b;
};

struct Options {
  int max_iterations = 400;  // dual coordinate-ascent sweeps
  double tolerance = 1e-8;
};

struct Result {
  VecX x;
  VecX lambda;
  int iterations = 0;
  bool converged = false;
  int active_set_size = 0;
  double kkt_residual = 0.0;
};

// Stationarity + primal violation + complementarity, all in infinity norm.
double kkt_residual(const Problem& prob, const VecX& x, const VecX& lambda);

// Dual coordinate ascent with an equality re-solve on the identified active
// set. warm_lambda (if sized to the row count) seeds the dual iteration.
Result solve(const Problem& prob, const Options& opt = {},
             const VecX* warm_lambda = nullptr);

}  // namespace fourwisd::qp

namespace fourwisd::ctrl {

// Receding-horizon steering controller. Tracks heading and lateral-position
// references with the linearized planar model, moving all four wheel steer
// angles subject to magnitude, slew and output corridor constraints.
struct MpcConfig {
  int horizon = 16;        // prediction steps
  int control_steps = 4;   // optimized moves
  double q_output = 1.0;   // tracking weight (both outputs)
  double r_move = 1000.0;  // move-suppression weight
  // Prediction discretization step [s]; 0 means the control period
  // (VehicleParams::dt). A coarser step extends the preview window without
  // growing the horizon; the applied move per control period stays bounded
  // by steer_rate_limit over the control period either way.
  double prediction_dt = 0.0;
  double steer_limit = kSteerLimitRad;       // |u| bound [rad]
  double steer_rate_limit = deg2rad(90.0);   // |du/dt| bound [rad/s]
  double heading_limit = deg2rad(21.0);      // |yaw| corridor [rad]
  double lateral_limit = 5.0;                // |Y| corridor [m]
  double slack_penalty = 1e5;  // quadratic weight on corridor slack
  qp::Options qp;
  ModelOptions model;
};

struct MpcDiagnostics {
  double cost = 0.0;  // predicted tracking + move + slack objective
  int qp_iterations = 0;
  int active_set_size = 0;
  double kkt_residual = 0.0;
  int soft_rows = 0;     // corridor rows relaxed this step
  bool converged = true;
  Vec4 du = Vec4::Zero();  // applied steering increments
};

class MpcController {
 public:
  explicit MpcController(const VehicleParams& p, const MpcConfig& cfg = {});

  // One control update at the sampling period of VehicleParams::dt.
  // x = [vx, vy, yaw_rate, yaw, Y]; phi_ref/y_ref must hold at least
  // `horizon` entries; fx and vy_hat parameterize the prediction model.
  Vec4 compute(const Vec5& x, const Vec4& fx, double vy_hat,
               const std::vector<double>& phi_ref,
               const std::vector<double>& y_ref,
               MpcDiagnostics* diag = nullptr);

  const Vec4& previous_command() const { return u_prev_; }
  const MpcConfig& config() const { return cfg_; }
  void reset(const Vec4& u0 = Vec4::Zero());

 private:
  VehicleParams p_;
  MpcConfig cfg_;
  Vec4 u_prev_ = Vec4::Zero();
  VecX warm_lambda_;
};

}  // namespace fourwisd::ctrl
