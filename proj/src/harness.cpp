#include "fourwisd/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>

#include "fourwisd/ekf.hpp"
#include "fourwisd/parallel.hpp"
#include "fourwisd/svg.hpp"

namespace fourwisd::harness {

namespace {

constexpr int kPlantSubsteps = 10;  // 1 ms plant steps per 10 ms control period
constexpr int kMaxQpFailures = 25;  // consecutive non-converged QPs tolerated
constexpr double kRefDamping = 2.0;  // lateral-rate damping in the governor
// Lateral overshoot the governor tolerates when the field direction flips
// [m]. Shedding a heading phi at the friction-capped yaw rate sweeps about
// vx * phi^2 / cap of lateral travel, so the governed tilt is held below
// sqrt(budget * cap / vx).
constexpr double kRefOvershootBudget = 0.75;
// Fraction of the friction envelope the torque vectoring may claim: the
// commanded yaw moment is clamped to kMomentFraction * mu * m * g * t_w / 2
// so bad force estimates cannot demand longitudinal forces the tires do not
// have (which would spin the wheels and collapse the lateral forces).
constexpr double kMomentFraction = 0.25;
// Traction guard: each wheel's commanded torque is cut to this fraction of
// mu * fz * R_e. The cruise bias is friction-blind; on low grip an uncut
// speed error would spin the driven wheels and erase their lateral force.
constexpr double kTractionFraction = 0.8;
// Time constant of the reference's return to the nominal path after a
// disturbance [s]. The tracking optimizer previews only a few vehicle
// lengths, so asking it to erase a lateral error within its own horizon
// turns it into a high-gain proportional loop that weaves; a first-order
// return slower than the lateral dynamics keeps the outer loop damped.
constexpr double kReturnTime = 1.0;

std::array<double, 5> to_array(const Vec5& v) {
  return {v[0], v[1], v[2], v[3], v[4]};
}

std::array<double, 9> to_array(const Vec9& v) {
  std::array<double, 9> a;
  for (int i = 0; i < 9; ++i) a[i] = v[i];
  return a;
}

metrics::RunMetrics reduce_metrics(const std::vector<LoopRecord>& recs,
                                   double dt) {
  metrics::RunMetrics m{};
  if (recs.empty()) return m;
  const size_t n = recs.size();
  std::vector<double> truth(n), est(n);
  for (int ch = 0; ch < 8; ++ch) {
    for (size_t i = 0; i < n; ++i) {
      truth[i] = ch < 4 ? recs[i].truth.fx[ch] : recs[i].truth.fy[ch - 4];
      est[i] = ch < 4 ? recs[i].fx_est[ch] : recs[i].fy_est[ch - 4];
    }
    m.force_rmse[static_cast<size_t>(ch)] = metrics::rmse(truth, est);
  }
  std::vector<double> y(n), y_ref(n), beta(n);
  for (size_t i = 0; i < n; ++i) {
    y[i] = recs[i].state.Y;
    y_ref[i] = recs[i].y_ref;
    beta[i] = recs[i].state.sideslip();
  }
  const metrics::Departure dep = metrics::path_departure(y, y_ref);
  m.max_departure = dep.max_departure;
  m.departure_rate = dep.rate_percent;
  m.phase = metrics::phase_plane(beta, dt);
  return m;
}

}  // namespace

const char* name(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::truth: return "truth";
    case EstimatorKind::ekf: return "ekf";
    case EstimatorKind::lstm: return "lstm";
  }
  return "?";
}

const char* name(NoiseCase c) {
  switch (c) {
    case NoiseCase::none: return "none";
    case NoiseCase::case1: return "case1";
    case NoiseCase::case2: return "case2";
  }
  return "?";
}

EstimatorKind estimator_from_string(const std::string& s) {
  if (s == "truth") return EstimatorKind::truth;
  if (s == "ekf") return EstimatorKind::ekf;
  if (s == "lstm") return EstimatorKind::lstm;
  throw std::invalid_argument("unknown estimator '" + s +
                              "' (expected truth, ekf or lstm)");
}

NoiseCase noise_from_string(const std::string& s) {
  if (s == "none") return NoiseCase::none;
  if (s == "case1") return NoiseCase::case1;
  if (s == "case2") return NoiseCase::case2;
  throw std::invalid_argument("unknown noise case '" + s +
                              "' (expected none, case1 or case2)");
}

Scenario desk_scenario() {
  Scenario s;
  s.road.segments.push_back({100.0, 200.0, 0.2});
  s.mpc.prediction_dt = 0.05;
  return s;
}

Scenario paper_scenario() {
  Scenario s;
  s.road_length = 1800.0;
  s.road.segments.push_back({400.0, 700.0, 0.2});
  s.field.x_obstacle = 450.0;
  s.mpc.prediction_dt = 0.05;
  return s;
}

nlohmann::json to_json(const Scenario& s) {
  nlohmann::json road;
  road["default_mu"] = s.road.default_mu;
  road["segments"] = nlohmann::json::array();
  for (const plant::RoadSegment& seg : s.road.segments)
    road["segments"].push_back(
        {{"x_start", seg.x_start}, {"x_end", seg.x_end}, {"mu", seg.mu}});

  nlohmann::json field;
  field["a_obstacle"] = s.field.a_obstacle;
  field["sigma_x"] = s.field.sigma_x;
  field["sigma_y"] = s.field.sigma_y;
  field["x_obstacle"] = s.field.x_obstacle;
  field["y_obstacle"] = s.field.y_obstacle;
  field["a_lane"] = s.field.a_lane;
  field["sigma_lane"] = s.field.sigma_lane;
  field["y_lane"] = s.field.y_lane;
  field["a_road"] = s.field.a_road;
  field["y_edge_left"] = s.field.y_edge_left;
  field["y_edge_right"] = s.field.y_edge_right;
  field["gamma_v"] = s.field.gamma_v;
  field["v_desired"] = s.field.v_desired;

  nlohmann::json mpc;
  mpc["horizon"] = s.mpc.horizon;
  mpc["control_steps"] = s.mpc.control_steps;
  mpc["q_output"] = s.mpc.q_output;
  mpc["r_move"] = s.mpc.r_move;
  mpc["steer_limit_deg"] = rad2deg(s.mpc.steer_limit);
  mpc["steer_rate_limit_deg"] = rad2deg(s.mpc.steer_rate_limit);
  mpc["heading_limit_deg"] = rad2deg(s.mpc.heading_limit);
  mpc["lateral_limit"] = s.mpc.lateral_limit;
  mpc["slack_penalty"] = s.mpc.slack_penalty;
  mpc["prediction_dt"] = s.mpc.prediction_dt;

  nlohmann::json smc;
  smc["k_sat"] = s.smc.k_sat;
  smc["k_lin"] = s.smc.k_lin;
  smc["boundary"] = s.smc.boundary;
  smc["beta_blend"] = s.smc.beta_blend;

  nlohmann::json yaw_ref;
  yaw_ref["tau"] = s.yaw_ref.tau;
  yaw_ref["friction_margin"] = s.yaw_ref.friction_margin;

  nlohmann::json j;
  j["speed"] = s.speed;
  j["road_length"] = s.road_length;
  j["max_duration"] = s.max_duration;
  j["estimator"] = name(s.estimator);
  j["noise"] = name(s.noise);
  j["seed"] = s.seed;
  j["cruise_gain"] = s.cruise_gain;
  j["ref_heading_limit_deg"] = rad2deg(s.ref_heading_limit);
  j["model"] = s.model_path;
  j["road"] = road;
  j["field"] = field;
  j["mpc"] = mpc;
  j["smc"] = smc;
  j["yaw_ref"] = yaw_ref;
  return j;
}

Scenario scenario_from_json(const nlohmann::json& j) {
  Scenario s = desk_scenario();
  s.speed = j.value("speed", s.speed);
  s.road_length = j.value("road_length", s.road_length);
  s.max_duration = j.value("max_duration", s.max_duration);
  if (j.contains("estimator"))
    s.estimator = estimator_from_string(j.at("estimator").get<std::string>());
  if (j.contains("noise"))
    s.noise = noise_from_string(j.at("noise").get<std::string>());
  s.seed = j.value("seed", s.seed);
  s.cruise_gain = j.value("cruise_gain", s.cruise_gain);
  s.ref_heading_limit =
      deg2rad(j.value("ref_heading_limit_deg", rad2deg(s.ref_heading_limit)));
  s.model_path = j.value("model", s.model_path);

  if (j.contains("road")) {
    const nlohmann::json& road = j.at("road");
    s.road.default_mu = road.value("default_mu", s.road.default_mu);
    if (road.contains("segments")) {
      s.road.segments.clear();
      for (const nlohmann::json& seg : road.at("segments"))
        s.road.segments.push_back({seg.at("x_start").get<double>(),
                                   seg.at("x_end").get<double>(),
                                   seg.at("mu").get<double>()});
    }
    s.road.validate();
  }
  if (j.contains("field")) {
    const nlohmann::json& f = j.at("field");
    s.field.a_obstacle = f.value("a_obstacle", s.field.a_obstacle);
    s.field.sigma_x = f.value("sigma_x", s.field.sigma_x);
    s.field.sigma_y = f.value("sigma_y", s.field.sigma_y);
    s.field.x_obstacle = f.value("x_obstacle", s.field.x_obstacle);
    s.field.y_obstacle = f.value("y_obstacle", s.field.y_obstacle);
    s.field.a_lane = f.value("a_lane", s.field.a_lane);
    s.field.sigma_lane = f.value("sigma_lane", s.field.sigma_lane);
    s.field.y_lane = f.value("y_lane", s.field.y_lane);
    s.field.a_road = f.value("a_road", s.field.a_road);
    s.field.y_edge_left = f.value("y_edge_left", s.field.y_edge_left);
    s.field.y_edge_right = f.value("y_edge_right", s.field.y_edge_right);
    s.field.gamma_v = f.value("gamma_v", s.field.gamma_v);
    s.field.v_desired = f.value("v_desired", s.field.v_desired);
  }
  if (j.contains("mpc")) {
    const nlohmann::json& m = j.at("mpc");
    s.mpc.horizon = m.value("horizon", s.mpc.horizon);
    s.mpc.control_steps = m.value("control_steps", s.mpc.control_steps);
    s.mpc.q_output = m.value("q_output", s.mpc.q_output);
    s.mpc.r_move = m.value("r_move", s.mpc.r_move);
    s.mpc.steer_limit = deg2rad(m.value("steer_limit_deg", rad2deg(s.mpc.steer_limit)));
    s.mpc.steer_rate_limit =
        deg2rad(m.value("steer_rate_limit_deg", rad2deg(s.mpc.steer_rate_limit)));
    s.mpc.heading_limit =
        deg2rad(m.value("heading_limit_deg", rad2deg(s.mpc.heading_limit)));
    s.mpc.lateral_limit = m.value("lateral_limit", s.mpc.lateral_limit);
    s.mpc.slack_penalty = m.value("slack_penalty", s.mpc.slack_penalty);
    s.mpc.prediction_dt = m.value("prediction_dt", s.mpc.prediction_dt);
  }
  if (j.contains("smc")) {
    const nlohmann::json& c = j.at("smc");
    s.smc.k_sat = c.value("k_sat", s.smc.k_sat);
    s.smc.k_lin = c.value("k_lin", s.smc.k_lin);
    s.smc.boundary = c.value("boundary", s.smc.boundary);
    s.smc.beta_blend = c.value("beta_blend", s.smc.beta_blend);
  }
  if (j.contains("yaw_ref")) {
    const nlohmann::json& y = j.at("yaw_ref");
    s.yaw_ref.tau = y.value("tau", s.yaw_ref.tau);
    s.yaw_ref.friction_margin =
        y.value("friction_margin", s.yaw_ref.friction_margin);
  }
  return s;
}

apf::ReferenceTrajectory govern_reference(double x0, double y0, double phi0,
                                          double vx, int n, double h,
                                          const apf::FieldParams& field,
                                          const plant::RoadProfile& road,
                                          double margin, double phi_limit,
                                          const VehicleParams& p) {
  apf::ReferenceTrajectory out;
  out.phi.reserve(static_cast<size_t>(n));
  out.y.reserve(static_cast<size_t>(n));
  double phi = phi0, x = x0, y = y0;
  const double safe_vx = std::max(vx, 1.0);
  for (int j = 0; j < n; ++j) {
    const double raw = apf::desired_heading(x, y, field);
    const double rate = dyc::yaw_rate_cap(vx, road.mu_at(x), margin, p.g);
    // Tilt the reference only as far as can be shed again within the lateral
    // overshoot budget at this friction level.
    const double tilt = std::min(
        phi_limit, std::sqrt(kRefOvershootBudget * rate / safe_vx));
    // Damping on the current lateral rate keeps the slew-limited follower
    // from limit-cycling around the field's zero-force line: the heading
    // starts shedding before the crossing instead of at it.
    const double target =
        std::clamp(raw - kRefDamping * std::sin(phi), -tilt, tilt);
    phi += std::clamp(target - phi, -rate * h, rate * h);
    x += vx * h * std::cos(phi);
    y += vx * h * std::sin(phi);
    out.phi.push_back(phi);
    out.y.push_back(y);
  }
  return out;
}

RunResult run_closed_loop(const Scenario& sc) {
  const VehicleParams p = default_params();
  const plant::PlantConfig plant_cfg = plant::default_plant_config(p);
  sc.road.validate();

  std::shared_ptr<const nn::LstmModel> model = sc.model;
  if (sc.estimator == EstimatorKind::lstm && !model) {
    if (sc.model_path.empty())
      throw std::invalid_argument(
          "lstm estimator needs a model, in memory or by checkpoint path");
    model = std::make_shared<const nn::LstmModel>(nn::load_model(sc.model_path));
  }

  const plant::NoiseSpec case1 = plant::noise_case1();
  const plant::NoiseSpec case2 = plant::noise_case2();
  const plant::NoiseSpec* noise = sc.noise == NoiseCase::none
                                      ? nullptr
                                      : (sc.noise == NoiseCase::case1 ? &case1
                                                                      : &case2);
  std::mt19937_64 rng(sc.seed);

  plant::PlantState s;
  s.vx = sc.speed;
  s.omega = Vec4::Constant(sc.speed / p.R_e);

  est::ForceEkf ekf(p);
  std::unique_ptr<nn::StreamingEstimator> stream;
  if (sc.estimator == EstimatorKind::lstm)
    stream = std::make_unique<nn::StreamingEstimator>(*model);
  nn::ForceEstimate net_est;

  dyc::SideslipEstimator slip;
  dyc::YawReference yaw_target(sc.yaw_ref);
  ctrl::MpcController mpc(p, sc.mpc);

  // Until the first command is computed the plant rolls with straight wheels
  // and just enough torque to cancel rolling resistance.
  ControlCommand prev_cmd;
  prev_cmd.torque =
      Vec4::Constant(p.R_e * plant_cfg.tires.f_r * p.m * p.g / 4.0);

  RunResult out;
  const double t_max =
      sc.max_duration > 0 ? sc.max_duration : 3.0 * sc.road_length / sc.speed;
  const int max_steps = static_cast<int>(std::lround(t_max / p.dt));
  out.records.reserve(static_cast<size_t>(std::max(0, max_steps)));

  // Prime the learned estimator with the sample at t = 0 so its window and
  // the run start together.
  if (stream) {
    Vec5 inj = Vec5::Zero();
    const ImuSample imu = plant::sample_imu(s, noise, rng, &inj);
    net_est = stream->push(imu.as_vector());
    if (noise) out.injected_imu.push_back(to_array(inj));
    if (net_est.suspicious_input) ++out.suspicious_inputs;
  }

  // The departure metric compares the driven path against the nominal path:
  // the governed field line rolled out once from the road start at the set
  // speed, independent of where the vehicle actually went. (The per-step
  // plans below re-anchor at the vehicle, so they cannot measure drift.)
  std::vector<double> path_x, path_y, path_phi;
  {
    apf::FieldParams nominal_field = sc.field;
    nominal_field.v_current = sc.speed;
    const int n_path =
        static_cast<int>(std::lround(1.2 * sc.road_length / (sc.speed * p.dt)));
    const apf::ReferenceTrajectory nominal = govern_reference(
        0.0, 0.0, 0.0, sc.speed, n_path, p.dt, nominal_field, sc.road,
        sc.yaw_ref.friction_margin, sc.ref_heading_limit, p);
    path_x.reserve(nominal.phi.size());
    path_y = nominal.y;
    path_phi = nominal.phi;
    double x = 0.0;
    for (const double phi : nominal.phi) {
      x += sc.speed * p.dt * std::cos(phi);
      path_x.push_back(x);
    }
  }
  const auto path_sample = [&](double X, const std::vector<double>& v) {
    const auto it = std::lower_bound(path_x.begin(), path_x.end(), X);
    if (it == path_x.begin()) return v.front();
    if (it == path_x.end()) return v.back();
    const size_t j = static_cast<size_t>(it - path_x.begin());
    const double w = (X - path_x[j - 1]) / (path_x[j] - path_x[j - 1]);
    return v[j - 1] + w * (v[j] - v[j - 1]);
  };

  int qp_failures = 0;
  double time_sum = 0.0;

  for (int k = 0; k < max_steps && s.X < sc.road_length; ++k) {
    LoopRecord rec;
    rec.t = k * p.dt;
    rec.state = s;

    const auto tic = std::chrono::steady_clock::now();
    bool ok = true;
    try {
      // Ground truth at the sample instant, still under the previous command.
      const TireForceSet tf =
          plant::current_forces(s, prev_cmd, sc.road, p, plant_cfg);
      rec.truth = tf;
      double ax = 0.0, ay = 0.0;
      for (int i = 0; i < 4; ++i) {
        const double cd = std::cos(prev_cmd.delta[i]);
        const double sd = std::sin(prev_cmd.delta[i]);
        ax += tf.fx[i] * cd - tf.fy[i] * sd;
        ay += tf.fx[i] * sd + tf.fy[i] * cd;
      }
      ax /= p.m;
      ay /= p.m;

      Vec4 fx_hat = Vec4::Zero(), fy_hat = Vec4::Zero();
      switch (sc.estimator) {
        case EstimatorKind::truth:
          fx_hat = tf.fx;
          fy_hat = tf.fy;
          break;
        case EstimatorKind::ekf: {
          Vec9 inj = Vec9::Zero();
          const Vec9 y =
              plant::sample_measurement(s, {ax, ay}, noise, rng, p, &inj);
          if (noise) out.injected_meas.push_back(to_array(inj));
          if (k == 0) {
            ekf.init_from_measurement(y);
          } else {
            // Vertical loads for the filter come from the measured
            // accelerations, like the rest of its measurement vector.
            const Vec4 fz_meas =
                plant::vertical_loads(p, plant_cfg.cg_height, y[2], y[3]);
            ekf.predict({prev_cmd.delta, prev_cmd.torque, fz_meas}, p.dt);
            ekf.update(y);
          }
          fx_hat = ekf.fx();
          fy_hat = ekf.fy();
          break;
        }
        case EstimatorKind::lstm:
          if (stream->ready()) {
            fx_hat = net_est.fx;
            fy_hat = net_est.fy;
          }
          break;
      }
      rec.fx_est = fx_hat;
      rec.fy_est = fy_hat;

      rec.beta_hat = slip.update(s.vx, prev_cmd.delta, fx_hat, fy_hat, p.dt, p);
      rec.vy_hat = slip.lateral_velocity(s.vx);

      // Reference window: the nominal path sampled at the stations the
      // vehicle passes over the horizon, offset by the current lateral error
      // decaying with kReturnTime. Tracking absolute path samples keeps
      // accumulated drift visible to the optimizer (a rollout re-anchored at
      // the vehicle forgives it, and the four-wheel-steering null space then
      // parks the car in a steady crab); the decaying offset keeps the
      // commanded return rate inside what the tires can do.
      const double mu_here = sc.road.mu_at(s.X);
      const double safe_vx = std::max(s.vx, 1.0);
      const double rate_cap =
          dyc::yaw_rate_cap(s.vx, mu_here, sc.yaw_ref.friction_margin, p.g);
      const double tilt = std::min(
          sc.ref_heading_limit, std::sqrt(kRefOvershootBudget * rate_cap / safe_vx));
      const double offset = s.Y - path_sample(s.X, path_y);
      const double h_mpc =
          sc.mpc.prediction_dt > 0.0 ? sc.mpc.prediction_dt : p.dt;
      apf::ReferenceTrajectory plan;
      plan.phi.reserve(static_cast<size_t>(sc.mpc.horizon));
      plan.y.reserve(static_cast<size_t>(sc.mpc.horizon));
      for (int j = 0; j < sc.mpc.horizon; ++j) {
        const double Xj = s.X + (j + 1) * s.vx * h_mpc;
        const double decayed =
            offset * std::exp(-(j + 1) * h_mpc / kReturnTime);
        const double dphi = std::clamp(
            -decayed / (kReturnTime * safe_vx), -tilt, tilt);
        plan.phi.push_back(path_sample(Xj, path_phi) + dphi);
        plan.y.push_back(path_sample(Xj, path_y) + decayed);
      }
      rec.phi_ref = plan.phi.front();
      rec.y_ref = path_sample(s.X, path_y);

      Vec5 x5;
      x5 << s.vx, rec.vy_hat, s.yaw_rate, s.yaw, s.Y;
      ctrl::MpcDiagnostics diag;
      const Vec4 delta_cmd =
          mpc.compute(x5, fx_hat, rec.vy_hat, plan.phi, plan.y, &diag);
      rec.mpc_cost = diag.cost;
      rec.qp_iterations = diag.qp_iterations;
      rec.qp_converged = diag.converged;
      rec.soft_rows = diag.soft_rows;
      qp_failures = diag.converged ? 0 : qp_failures + 1;
      if (qp_failures > kMaxQpFailures)
        throw std::runtime_error("steering QP failed to converge for " +
                                 std::to_string(qp_failures) +
                                 " consecutive periods");

      // The yaw-rate target tracks the planned path's heading rate, passed
      // through the steady-state steer map (so the friction cap and lag of
      // the reference filter still apply). Deriving it from the commanded
      // steering instead couples the moment controller to the steering
      // controller's transients: every correction gets amplified into a
      // railed moment the steering optimizer never modelled, which builds a
      // growing heading oscillation.
      const double gamma_plan =
          plan.phi.size() > 1 ? (plan.phi[1] - plan.phi[0]) / h_mpc : 0.0;
      const double wb = p.wheelbase();
      const double steer_denom =
          wb + p.m * s.vx * s.vx * (p.l_r * p.C_r - p.l_f * p.C_f) /
                   (2.0 * p.C_r * p.C_f * wb);
      const double delta_plan =
          gamma_plan * steer_denom / std::max(s.vx, 0.1);
      rec.gamma_ref = yaw_target.update(s.vx, delta_plan, mu_here, p.dt, p);
      const dyc::SmcResult smc = dyc::yaw_moment(
          s.yaw_rate, rec.gamma_ref, rec.beta_hat, delta_cmd, fy_hat, p, sc.smc);
      rec.smc_surface = smc.surface;
      const double moment_limit =
          kMomentFraction * mu_here * p.m * p.g * 0.5 * p.t_w;
      const double moment =
          std::clamp(smc.moment, -moment_limit, moment_limit);
      rec.yaw_moment = moment;

      const Vec4 fz_alloc =
          plant::vertical_loads(p, plant_cfg.cg_height, ax, ay);
      const dyc::AllocationResult alloc =
          dyc::allocate_torques(moment, delta_cmd, fz_alloc, p);
      const double bias =
          p.R_e *
          (sc.cruise_gain * p.m * (sc.speed - s.vx) +
           plant_cfg.tires.f_r * p.m * p.g) /
          4.0;
      rec.command.delta = delta_cmd;
      rec.command.torque = alloc.torque + Vec4::Constant(bias);
      for (int i = 0; i < 4; ++i) {
        const double grip = kTractionFraction * mu_here * fz_alloc[i] * p.R_e;
        rec.command.torque[i] = std::clamp(rec.command.torque[i], -grip, grip);
      }
    } catch (const std::exception& e) {
      ok = false;
      out.failed = true;
      out.failure_reason = e.what();
    }
    const auto toc = std::chrono::steady_clock::now();
    rec.controller_seconds = std::chrono::duration<double>(toc - tic).count();
    time_sum += rec.controller_seconds;
    out.controller_seconds_max =
        std::max(out.controller_seconds_max, rec.controller_seconds);

    if (!ok) {
      out.records.push_back(rec);
      break;
    }

    try {
      const double h = p.dt / kPlantSubsteps;
      for (int i = 0; i < kPlantSubsteps; ++i) {
        s = plant::step(s, rec.command, sc.road, h, p, plant_cfg);
        Vec5 inj = Vec5::Zero();
        const ImuSample imu = plant::sample_imu(s, noise, rng, &inj);
        if (noise) out.injected_imu.push_back(to_array(inj));
        if (stream) {
          net_est = stream->push(imu.as_vector());
          if (net_est.suspicious_input) ++out.suspicious_inputs;
        }
      }
    } catch (const plant::PlantDivergence& e) {
      out.failed = true;
      out.failure_reason = e.what();
      out.records.push_back(rec);
      break;
    }

    out.records.push_back(rec);
    prev_cmd = rec.command;
    out.steps_completed = k + 1;
  }

  if (!out.records.empty()) {
    out.controller_seconds_mean =
        time_sum / static_cast<double>(out.records.size());
  }
  out.metrics = reduce_metrics(out.records, p.dt);
  return out;
}

csv::Table trajectory_table(const RunResult& r) {
  csv::Table t;
  t.header = {"t",        "X",        "Y",        "vx",       "vy",
              "yaw",      "yaw_rate", "beta",     "fx_FL",    "fx_FR",
              "fx_RL",    "fx_RR",    "fy_FL",    "fy_FR",    "fy_RL",
              "fy_RR",    "fz_FL",    "fz_FR",    "fz_RL",    "fz_RR",
              "delta_FL", "delta_FR", "delta_RL", "delta_RR", "torque_FL",
              "torque_FR", "torque_RL", "torque_RR"};
  t.rows.reserve(r.records.size());
  for (const LoopRecord& rec : r.records) {
    std::vector<double> row;
    row.reserve(t.header.size());
    row.insert(row.end(), {rec.t, rec.state.X, rec.state.Y, rec.state.vx,
                           rec.state.vy, rec.state.yaw, rec.state.yaw_rate,
                           rec.state.sideslip()});
    for (int i = 0; i < 4; ++i) row.push_back(rec.truth.fx[i]);
    for (int i = 0; i < 4; ++i) row.push_back(rec.truth.fy[i]);
    for (int i = 0; i < 4; ++i) row.push_back(rec.truth.fz[i]);
    for (int i = 0; i < 4; ++i) row.push_back(rec.command.delta[i]);
    for (int i = 0; i < 4; ++i) row.push_back(rec.command.torque[i]);
    t.rows.push_back(std::move(row));
  }
  return t;
}

csv::Table estimate_table(const RunResult& r) {
  csv::Table t;
  t.header = {"t",        "fx_hat_FL", "fx_hat_FR", "fx_hat_RL", "fx_hat_RR",
              "fy_hat_FL", "fy_hat_FR", "fy_hat_RL", "fy_hat_RR", "fx_FL",
              "fx_FR",    "fx_RL",     "fx_RR",     "fy_FL",     "fy_FR",
              "fy_RL",    "fy_RR",     "beta_hat",  "vy_hat"};
  t.rows.reserve(r.records.size());
  for (const LoopRecord& rec : r.records) {
    std::vector<double> row;
    row.reserve(t.header.size());
    row.push_back(rec.t);
    for (int i = 0; i < 4; ++i) row.push_back(rec.fx_est[i]);
    for (int i = 0; i < 4; ++i) row.push_back(rec.fy_est[i]);
    for (int i = 0; i < 4; ++i) row.push_back(rec.truth.fx[i]);
    for (int i = 0; i < 4; ++i) row.push_back(rec.truth.fy[i]);
    row.push_back(rec.beta_hat);
    row.push_back(rec.vy_hat);
    t.rows.push_back(std::move(row));
  }
  return t;
}

csv::Table mpc_table(const RunResult& r) {
  csv::Table t;
  t.header = {"t",         "cost",    "qp_iterations", "converged",
              "soft_rows", "phi_ref", "y_ref"};
  t.rows.reserve(r.records.size());
  for (const LoopRecord& rec : r.records)
    t.rows.push_back({rec.t, rec.mpc_cost,
                      static_cast<double>(rec.qp_iterations),
                      rec.qp_converged ? 1.0 : 0.0,
                      static_cast<double>(rec.soft_rows), rec.phi_ref,
                      rec.y_ref});
  return t;
}

csv::Table dyc_table(const RunResult& r) {
  csv::Table t;
  t.header = {"t", "yaw_rate", "gamma_ref", "surface", "moment", "beta_hat"};
  t.rows.reserve(r.records.size());
  for (const LoopRecord& rec : r.records)
    t.rows.push_back({rec.t, rec.state.yaw_rate, rec.gamma_ref,
                      rec.smc_surface, rec.yaw_moment, rec.beta_hat});
  return t;
}

nlohmann::json run_json(const Scenario& s, const RunResult& r) {
  nlohmann::json j;
  j["estimator"] = name(s.estimator);
  j["noise"] = name(s.noise);
  j["seed"] = s.seed;
  j["speed"] = s.speed;
  j["road_length"] = s.road_length;
  j["steps"] = r.steps_completed;
  j["failed"] = r.failed;
  j["failure_reason"] = r.failure_reason;
  j["suspicious_inputs"] = r.suspicious_inputs;
  j["metrics"] = metrics::to_json(r.metrics);
  return j;
}

std::string run_json_text(const Scenario& s, const RunResult& r) {
  return run_json(s, r).dump(2) + "\n";
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

const char* run_color(EstimatorKind e, NoiseCase c) {
  if (e == EstimatorKind::ekf) {
    switch (c) {
      case NoiseCase::none: return "#1f77b4";
      case NoiseCase::case1: return "#4292c6";
      case NoiseCase::case2: return "#9ecae1";
    }
  }
  switch (c) {
    case NoiseCase::none: return "#d62728";
    case NoiseCase::case1: return "#ef6548";
    case NoiseCase::case2: return "#fcae91";
  }
  return "#000000";
}

std::string markdown_report(const SuiteReport& rep, const Scenario& base) {
  const std::array<const char*, 8> channels = {"fx FL", "fx FR", "fx RL",
                                               "fx RR", "fy FL", "fy FR",
                                               "fy RL", "fy RR"};
  std::string md;
  md += "# Closed-loop estimator comparison\n\n";
  md += "Scenario: " + std::to_string(base.road_length) + " m road at " +
        std::to_string(base.speed) + " m/s, seed " +
        std::to_string(base.seed) + ".\n\n";

  md += "## Force estimation RMSE, noise-free run [N]\n\n";
  md += "| estimator |";
  for (const char* ch : channels) md += std::string(" ") + ch + " |";
  md += "\n|---|";
  for (size_t i = 0; i < channels.size(); ++i) md += "---|";
  md += "\n";
  for (const SuiteRun& run : rep.runs) {
    if (run.noise != NoiseCase::none) continue;
    md += std::string("| ") + name(run.estimator) + " |";
    for (double v : run.result.metrics.force_rmse) {
      char buf[32];
      std::snprintf(buf, sizeof buf, " %.1f |", v);
      md += buf;
    }
    md += "\n";
  }

  md += "\n## RMSE degradation under sensor noise, relative to the same "
        "estimator's noise-free run\n\n";
  md += "| estimator | noise |";
  for (const char* ch : channels) md += std::string(" ") + ch + " |";
  md += "\n|---|---|";
  for (size_t i = 0; i < channels.size(); ++i) md += "---|";
  md += "\n";
  for (const SuiteRun& run : rep.runs) {
    if (run.noise == NoiseCase::none) continue;
    md += std::string("| ") + name(run.estimator) + " | " + name(run.noise) +
          " |";
    for (double v : run.result.metrics.relative_errors) {
      char buf[32];
      std::snprintf(buf, sizeof buf, " %.3f |", v);
      md += buf;
    }
    md += "\n";
  }

  md += "\n## Path tracking\n\n";
  md += "| estimator | noise | max departure [m] | departure rate [%] | "
        "failed |\n|---|---|---|---|---|\n";
  for (const SuiteRun& run : rep.runs) {
    char buf[64];
    std::snprintf(buf, sizeof buf, " %.3f | %.1f | %s |\n",
                  run.result.metrics.max_departure,
                  run.result.metrics.departure_rate,
                  run.result.failed ? "yes" : "no");
    md += std::string("| ") + name(run.estimator) + " | " + name(run.noise) +
          " |" + buf;
  }
  return md;
}

}  // namespace

SuiteReport run_experiment_suite(const Scenario& base,
                                 const std::string& out_dir) {
  Scenario proto = base;
  if (!proto.model) {
    if (proto.model_path.empty())
      throw std::invalid_argument(
          "the experiment suite needs an lstm model, in memory or by path");
    proto.model =
        std::make_shared<const nn::LstmModel>(nn::load_model(proto.model_path));
  }

  const std::array<EstimatorKind, 2> estimators = {EstimatorKind::ekf,
                                                   EstimatorKind::lstm};
  const std::array<NoiseCase, 3> cases = {NoiseCase::none, NoiseCase::case1,
                                          NoiseCase::case2};

  SuiteReport rep;
  rep.runs.resize(estimators.size() * cases.size());
  std::vector<Scenario> scenarios(rep.runs.size(), proto);
  for (size_t e = 0; e < estimators.size(); ++e) {
    for (size_t c = 0; c < cases.size(); ++c) {
      const size_t i = e * cases.size() + c;
      scenarios[i].estimator = estimators[e];
      scenarios[i].noise = cases[c];
      rep.runs[i].estimator = estimators[e];
      rep.runs[i].noise = cases[c];
    }
  }

  parallel_for(static_cast<int>(rep.runs.size()), [&](int i) {
    rep.runs[static_cast<size_t>(i)].result =
        run_closed_loop(scenarios[static_cast<size_t>(i)]);
  });

  // Degradation of each noisy run against its estimator's noise-free RMSE.
  for (size_t e = 0; e < estimators.size(); ++e) {
    const auto& nominal = rep.runs[e * cases.size()].result.metrics.force_rmse;
    for (size_t c = 1; c < cases.size(); ++c) {
      auto& m = rep.runs[e * cases.size() + c].result.metrics;
      for (size_t ch = 0; ch < 8; ++ch)
        m.relative_errors[ch] =
            metrics::relative_error(m.force_rmse[ch], nominal[ch]);
    }
  }

  nlohmann::json summary;
  summary["seed"] = base.seed;
  summary["road_length"] = base.road_length;
  summary["speed"] = base.speed;
  summary["runs"] = nlohmann::json::array();
  for (size_t i = 0; i < rep.runs.size(); ++i) {
    const SuiteRun& run = rep.runs[i];
    nlohmann::json rj;
    rj["estimator"] = name(run.estimator);
    rj["noise"] = name(run.noise);
    rj["failed"] = run.result.failed;
    rj["failure_reason"] = run.result.failure_reason;
    rj["steps"] = run.result.steps_completed;
    rj["max_departure"] = run.result.metrics.max_departure;
    rj["departure_rate"] = run.result.metrics.departure_rate;
    rj["force_rmse"] = run.result.metrics.force_rmse;
    rj["relative_errors"] = run.result.metrics.relative_errors;
    rj["controller_seconds_mean"] = run.result.controller_seconds_mean;
    rj["controller_seconds_max"] = run.result.controller_seconds_max;
    summary["runs"].push_back(rj);
  }
  rep.summary = summary;

  if (!out_dir.empty()) {
    namespace fs = std::filesystem;
    const fs::path dir(out_dir);
    fs::create_directories(dir);

    for (size_t i = 0; i < rep.runs.size(); ++i) {
      const SuiteRun& run = rep.runs[i];
      const std::string stem =
          std::string(name(run.estimator)) + "_" + name(run.noise);
      csv::write_table((dir / ("trajectory_" + stem + ".csv")).string(),
                       trajectory_table(run.result));
      csv::write_table((dir / ("estimates_" + stem + ".csv")).string(),
                       estimate_table(run.result));
      csv::write_table((dir / ("mpc_" + stem + ".csv")).string(),
                       mpc_table(run.result));
      csv::write_table((dir / ("dyc_" + stem + ".csv")).string(),
                       dyc_table(run.result));
      write_text(dir / ("metrics_" + stem + ".json"),
                 run_json_text(scenarios[i], run.result));
    }
    write_text(dir / "summary.json", summary.dump(2) + "\n");
    write_text(dir / "report.md", markdown_report(rep, base));

    svg::Plot path_plot;
    path_plot.title = "Path overlay";
    path_plot.x_label = "X [m]";
    path_plot.y_label = "Y [m]";
    bool ref_added = false;
    for (const SuiteRun& run : rep.runs) {
      svg::Series ser;
      ser.label = std::string(name(run.estimator)) + " " + name(run.noise);
      ser.color = run_color(run.estimator, run.noise);
      ser.dashed = run.noise != NoiseCase::none;
      for (const LoopRecord& rec : run.result.records) {
        ser.x.push_back(rec.state.X);
        ser.y.push_back(rec.state.Y);
      }
      path_plot.add(ser);
      if (!ref_added && run.noise == NoiseCase::none) {
        svg::Series ref;
        ref.label = "reference";
        ref.color = "#888888";
        ref.dashed = true;
        for (const LoopRecord& rec : run.result.records) {
          ref.x.push_back(rec.state.X);
          ref.y.push_back(rec.y_ref);
        }
        path_plot.add(ref);
        ref_added = true;
      }
    }
    path_plot.write((dir / "trajectory_overlay.svg").string());

    svg::Plot phase_plot;
    phase_plot.title = "Sideslip phase plane";
    phase_plot.x_label = "beta [rad]";
    phase_plot.y_label = "beta rate [rad/s]";
    for (const SuiteRun& run : rep.runs) {
      if (run.noise != NoiseCase::none) continue;
      svg::Series ser;
      ser.label = name(run.estimator);
      ser.color = run_color(run.estimator, run.noise);
      for (const auto& [b, bd] : run.result.metrics.phase) {
        ser.x.push_back(b);
        ser.y.push_back(bd);
      }
      phase_plot.add(ser);
    }
    phase_plot.write((dir / "phase_plane.svg").string());

    svg::Plot force_plot;
    force_plot.title = "Front-left lateral force";
    force_plot.x_label = "t [s]";
    force_plot.y_label = "fy FL [N]";
    bool truth_added = false;
    for (const SuiteRun& run : rep.runs) {
      if (run.noise != NoiseCase::none) continue;
      if (!truth_added) {
        svg::Series truth;
        truth.label = "true";
        truth.color = "#444444";
        for (const LoopRecord& rec : run.result.records) {
          truth.x.push_back(rec.t);
          truth.y.push_back(rec.truth.fy[0]);
        }
        force_plot.add(truth);
        truth_added = true;
      }
      svg::Series ser;
      ser.label = name(run.estimator);
      ser.color = run_color(run.estimator, run.noise);
      ser.dashed = true;
      for (const LoopRecord& rec : run.result.records) {
        ser.x.push_back(rec.t);
        ser.y.push_back(rec.fy_est[0]);
      }
      force_plot.add(ser);
    }
    force_plot.write((dir / "forces_fy_front_left.svg").string());
  }

  return rep;
}

}  // namespace fourwisd::harness
