#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "fourwisd/apf.hpp"
#include "fourwisd/csv.hpp"
#include "fourwisd/domain.hpp"
#include "fourwisd/dyc.hpp"
#include "fourwisd/lstm.hpp"
#include "fourwisd/metrics.hpp"
#include "fourwisd/mpc.hpp"
#include "fourwisd/plant.hpp"

// Closed-loop experiment runner: wires the planner, steering MPC, yaw-moment
// controller and one of three force estimators around the nonlinear plant,
// logs every control period and reduces the log to comparable metrics.

namespace fourwisd::harness {

enum class EstimatorKind { truth, ekf, lstm };
enum class NoiseCase { none, case1, case2 };

const char* name(EstimatorKind k);
const char* name(NoiseCase c);
EstimatorKind estimator_from_string(const std::string& s);
NoiseCase noise_from_string(const std::string& s);

// Everything that defines one run. The LSTM estimator needs a model: either
// an in-memory one (preferred) or a checkpoint path loaded on first use.
struct Scenario {
  double speed = 22.22;        // initial and cruise-held speed [m/s]
  double road_length = 400.0;  // run ends once X passes this [m]
  double max_duration = 0.0;   // hard time cap [s]; 0 = 3x nominal traversal
  plant::RoadProfile road;
  apf::FieldParams field;  // v_current is refreshed from the state each step
  EstimatorKind estimator = EstimatorKind::truth;
  NoiseCase noise = NoiseCase::none;
  std::uint64_t seed = 1;
  ctrl::MpcConfig mpc;
  dyc::YawRefConfig yaw_ref;
  dyc::SmcConfig smc;
  double cruise_gain = 0.4;  // proportional speed-hold gain [1/s]
  // Reference-governor heading clamp; the heading rate is additionally
  // limited to the friction-capped yaw rate at each rolled-out position.
  double ref_heading_limit = deg2rad(15.0);
  std::string model_path;
  std::shared_ptr<const nn::LstmModel> model;
};

// 400 m road, low-friction patch over [40, 140] m, obstacle at (50, -1).
Scenario desk_scenario();
// 1800 m road, patch over [400, 700] m, obstacle at (450, -1).
Scenario paper_scenario();

// JSON round trip for scenario files. Fields absent from the JSON keep the
// desk defaults; the model itself is referenced by path, never embedded.
nlohmann::json to_json(const Scenario& s);
Scenario scenario_from_json(const nlohmann::json& j);

// Feasibility-governed reference rollout: follows the field's desired heading
// but limits the heading rate to the friction-capped yaw rate at each rolled
// position and clamps the magnitude to phi_limit, then integrates the lateral
// reference from the governed heading. phi0 is the heading reference issued
// one period earlier, which keeps the commanded reference continuous.
apf::ReferenceTrajectory govern_reference(double x0, double y0, double phi0,
                                          double vx, int n, double h,
                                          const apf::FieldParams& field,
                                          const plant::RoadProfile& road,
                                          double margin, double phi_limit,
                                          const VehicleParams& p);

// One control period of the log. `state` and `truth` are sampled at the
// period start, before `command` is applied; the estimates are what the
// controllers actually consumed.
struct LoopRecord {
  double t = 0;
  plant::PlantState state;
  TireForceSet truth;
  Vec4 fx_est = Vec4::Zero();
  Vec4 fy_est = Vec4::Zero();
  double beta_hat = 0;
  double vy_hat = 0;
  double gamma_ref = 0;  // filtered yaw-rate target
  double phi_ref = 0;    // first entry of the field rollout
  double y_ref = 0;
  ControlCommand command;
  double smc_surface = 0;
  double yaw_moment = 0;
  double mpc_cost = 0;
  int qp_iterations = 0;
  bool qp_converged = true;
  int soft_rows = 0;
  double controller_seconds = 0;  // estimator + planner + controllers
};

struct RunResult {
  std::vector<LoopRecord> records;
  metrics::RunMetrics metrics;  // relative_errors stay zero for single runs
  bool failed = false;
  std::string failure_reason;
  int steps_completed = 0;
  int suspicious_inputs = 0;  // LSTM samples outside the trained input range
  double controller_seconds_max = 0;
  double controller_seconds_mean = 0;
  // Noise actually injected into the sensors (SI units), for calibration
  // checks. IMU rows at the 1 ms plant rate, measurement rows at the control
  // rate; both empty for noise-free runs.
  std::vector<std::array<double, 5>> injected_imu;
  std::vector<std::array<double, 9>> injected_meas;
};

// Run the 10 ms control loop until the road ends, the time cap strikes or a
// failure (plant divergence, controller exception, persistent QP failure)
// marks the run; the partial log is always returned.
RunResult run_closed_loop(const Scenario& s);

// Log reductions to tables. Columns are documented in the header row.
csv::Table trajectory_table(const RunResult& r);  // pose + truth forces + command
csv::Table estimate_table(const RunResult& r);    // estimated vs true forces
csv::Table mpc_table(const RunResult& r);         // QP diagnostics + references
csv::Table dyc_table(const RunResult& r);         // yaw target, surface, moment

// Deterministic metrics document: identical scenario and seed give byte-equal
// text. Wall-clock fields are intentionally excluded.
nlohmann::json run_json(const Scenario& s, const RunResult& r);
std::string run_json_text(const Scenario& s, const RunResult& r);

// The six-run comparison: {ekf, lstm} x {none, case1, case2} against one base
// scenario. Relative errors are taken against the same estimator's noise-free
// run. When out_dir is non-empty the per-run tables, metric documents, a
// summary JSON, a markdown report and overlay plots are written there.
struct SuiteRun {
  EstimatorKind estimator = EstimatorKind::ekf;
  NoiseCase noise = NoiseCase::none;
  RunResult result;
};

struct SuiteReport {
  std::vector<SuiteRun> runs;
  nlohmann::json summary;
};

SuiteReport run_experiment_suite(const Scenario& base,
                                 const std::string& out_dir);

}  // namespace fourwisd::harness
