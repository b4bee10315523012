#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "fourwisd/harness.hpp"
#include "fourwisd/lstm.hpp"
#include "fourwisd/plant.hpp"

using namespace fourwisd;
namespace hn = fourwisd::harness;
namespace fs = std::filesystem;

namespace {

// Desk preset with a shorter road so loops stay cheap in unit tests.
hn::Scenario short_desk(double length) {
  hn::Scenario s = hn::desk_scenario();
  s.road_length = length;
  return s;
}

double column_max_abs(const csv::Table& t, const std::string& name) {
  const auto it = std::find(t.header.begin(), t.header.end(), name);
  REQUIRE(it != t.header.end());
  const size_t c = static_cast<size_t>(it - t.header.begin());
  double m = 0.0;
  for (const auto& row : t.rows) m = std::max(m, std::abs(row[c]));
  return m;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("estimator and noise names round trip") {
  for (const auto k : {hn::EstimatorKind::truth, hn::EstimatorKind::ekf,
                       hn::EstimatorKind::lstm})
    CHECK(hn::estimator_from_string(hn::name(k)) == k);
  for (const auto c :
       {hn::NoiseCase::none, hn::NoiseCase::case1, hn::NoiseCase::case2})
    CHECK(hn::noise_from_string(hn::name(c)) == c);
  CHECK_THROWS_AS(hn::estimator_from_string("kalman"), std::invalid_argument);
  CHECK_THROWS_AS(hn::noise_from_string("case3"), std::invalid_argument);
  CHECK_THROWS_AS(hn::estimator_from_string(""), std::invalid_argument);
}

TEST_CASE("preset scenarios") {
  const hn::Scenario desk = hn::desk_scenario();
  CHECK(desk.speed == doctest::Approx(22.22));
  CHECK(desk.road_length == 400.0);
  CHECK(desk.estimator == hn::EstimatorKind::truth);
  CHECK(desk.noise == hn::NoiseCase::none);
  CHECK(desk.seed == 1);
  CHECK(desk.mpc.prediction_dt == doctest::Approx(0.05));
  REQUIRE(desk.road.segments.size() == 1);
  CHECK(desk.road.segments[0].mu == doctest::Approx(0.2));
  CHECK(desk.road.segments[0].x_start == doctest::Approx(100.0));
  CHECK(desk.road.segments[0].x_end == doctest::Approx(200.0));
  CHECK(desk.field.x_obstacle == doctest::Approx(50.0));

  const hn::Scenario paper = hn::paper_scenario();
  CHECK(paper.road_length == 1800.0);
  REQUIRE(paper.road.segments.size() == 1);
  CHECK(paper.road.segments[0].x_start == doctest::Approx(400.0));
  CHECK(paper.road.segments[0].x_end == doctest::Approx(700.0));
  CHECK(paper.field.x_obstacle == doctest::Approx(450.0));
}

TEST_CASE("scenario json round trip and defaults") {
  hn::Scenario s = hn::paper_scenario();
  s.estimator = hn::EstimatorKind::lstm;
  s.noise = hn::NoiseCase::case2;
  s.seed = 99;
  s.model_path = "model.json";
  s.mpc.prediction_dt = 0.02;
  s.ref_heading_limit = 0.1;

  const nlohmann::json j = hn::to_json(s);
  CHECK(j.contains("mpc"));
  CHECK(j["mpc"].contains("prediction_dt"));
  const hn::Scenario back = hn::scenario_from_json(j);
  CHECK(hn::to_json(back).dump() == j.dump());
  CHECK(back.estimator == hn::EstimatorKind::lstm);
  CHECK(back.noise == hn::NoiseCase::case2);
  CHECK(back.seed == 99);
  CHECK(back.model_path == "model.json");
  CHECK(back.mpc.prediction_dt == doctest::Approx(0.02));
  CHECK(back.road_length == 1800.0);

  // Absent fields keep the desk defaults.
  const hn::Scenario sparse =
      hn::scenario_from_json(nlohmann::json{{"speed", 10.0}, {"seed", 4}});
  CHECK(sparse.speed == doctest::Approx(10.0));
  CHECK(sparse.seed == 4);
  CHECK(sparse.road_length == 400.0);
  CHECK(sparse.estimator == hn::EstimatorKind::truth);
  CHECK(sparse.mpc.horizon == hn::desk_scenario().mpc.horizon);
}

TEST_CASE("governed reference obeys heading clamp") {
  const VehicleParams p = default_params();
  const hn::Scenario s = hn::desk_scenario();
  apf::FieldParams f = s.field;
  f.v_current = s.speed;
  const apf::ReferenceTrajectory ref = hn::govern_reference(
      0.0, 0.0, 0.0, s.speed, 400, p.dt, f, s.road,
      s.yaw_ref.friction_margin, s.ref_heading_limit, p);
  REQUIRE(ref.phi.size() == 400);
  REQUIRE(ref.y.size() == 400);
  double max_rate = 0.0;
  double prev = 0.0;
  for (size_t i = 0; i < ref.phi.size(); ++i) {
    CHECK(std::abs(ref.phi[i]) <= s.ref_heading_limit + 1e-12);
    max_rate = std::max(max_rate, std::abs(ref.phi[i] - prev) / p.dt);
    prev = ref.phi[i];
  }
  // Heading rate stays under the friction-capped yaw rate at full grip.
  CHECK(max_rate <=
        dyc::yaw_rate_cap(s.speed, 0.85, s.yaw_ref.friction_margin, p.g) +
            1e-9);
  // The obstacle at y = -1 pushes the reference to positive y.
  CHECK(*std::max_element(ref.y.begin(), ref.y.end()) > 0.5);
}

TEST_CASE("straight road stays centred") {
  hn::Scenario s = short_desk(150.0);
  s.road.segments.clear();
  s.field.a_obstacle = 0.0;
  s.field.a_lane = 0.0;
  s.field.a_road = 0.0;
  const hn::RunResult r = hn::run_closed_loop(s);
  CHECK_FALSE(r.failed);
  CHECK(r.steps_completed > 500);
  double max_y = 0.0;
  for (const auto& rec : r.records) max_y = std::max(max_y, std::abs(rec.state.Y));
  CHECK(max_y < 0.05);
  CHECK(r.metrics.max_departure < 0.05);
}

TEST_CASE("desk truth run contract") {
  const hn::Scenario s = hn::desk_scenario();
  const hn::RunResult r = hn::run_closed_loop(s);
  REQUIRE_FALSE(r.failed);
  CHECK(r.failure_reason.empty());
  CHECK(r.steps_completed == static_cast<int>(r.records.size()));
  CHECK(r.steps_completed > 1500);

  // Log timeline: starts at zero, advances by the control period.
  REQUIRE(!r.records.empty());
  CHECK(r.records.front().t == 0.0);
  CHECK(r.records[1].t == doctest::Approx(0.01));

  // The run clears the low-friction patch and reaches the road end; records
  // hold the period-start state, so the last one sits within a step of it.
  CHECK(r.records.back().state.X >= s.road_length - 1.0);

  // Tracking stays inside the corridor and the avoidance detour is bounded.
  double max_y = 0.0, min_vx = 1e9, max_vx = 0.0, max_beta = 0.0;
  for (const auto& rec : r.records) {
    max_y = std::max(max_y, std::abs(rec.state.Y));
    min_vx = std::min(min_vx, rec.state.vx);
    max_vx = std::max(max_vx, rec.state.vx);
    max_beta = std::max(max_beta, std::abs(rec.state.sideslip()));
  }
  CHECK(max_y < 5.0);
  CHECK(r.metrics.max_departure < 4.0);
  CHECK(max_beta < 0.15);
  // Cruise hold keeps speed near the set point throughout.
  CHECK(min_vx > 21.0);
  CHECK(max_vx < 23.0);

  // Truth estimator feeds the controllers the exact plant forces.
  for (double v : r.metrics.force_rmse) CHECK(v == 0.0);

  // Controller work per period is far below the 10 ms budget on average.
  CHECK(r.controller_seconds_mean > 0.0);
  CHECK(r.controller_seconds_mean < 0.010);

  // Noise-free run injects nothing.
  CHECK(r.injected_imu.empty());
  CHECK(r.injected_meas.empty());
}

TEST_CASE("identical scenario and seed reproduce byte-identical outputs") {
  hn::Scenario s = short_desk(120.0);
  s.estimator = hn::EstimatorKind::ekf;
  s.noise = hn::NoiseCase::case1;
  s.seed = 42;
  const hn::RunResult a = hn::run_closed_loop(s);
  const hn::RunResult b = hn::run_closed_loop(s);
  REQUIRE_FALSE(a.failed);
  CHECK(hn::run_json_text(s, a) == hn::run_json_text(s, b));

  const csv::Table ta = hn::trajectory_table(a);
  const csv::Table tb = hn::trajectory_table(b);
  REQUIRE(ta.header == tb.header);
  REQUIRE(ta.rows.size() == tb.rows.size());
  for (size_t i = 0; i < ta.rows.size(); ++i) CHECK(ta.rows[i] == tb.rows[i]);

  // Different seed, different noise draws: the logs must diverge.
  s.seed = 43;
  const hn::RunResult c = hn::run_closed_loop(s);
  CHECK(hn::run_json_text(s, a) != hn::run_json_text(s, c));
}

TEST_CASE("log tables round trip through the csv reader") {
  hn::Scenario s = short_desk(80.0);
  const hn::RunResult r = hn::run_closed_loop(s);
  REQUIRE_FALSE(r.failed);
  const fs::path dir = fs::temp_directory_path() / "fourwisd_csv_rt";
  fs::create_directories(dir);
  for (const csv::Table& t :
       {hn::trajectory_table(r), hn::estimate_table(r), hn::mpc_table(r),
        hn::dyc_table(r)}) {
    REQUIRE(!t.rows.empty());
    for (const auto& row : t.rows)
      REQUIRE(row.size() == static_cast<size_t>(t.columns()));
    const fs::path file = dir / "table.csv";
    csv::write_table(file.string(), t);
    const csv::Table back = csv::read_table(file.string());
    REQUIRE(back.header == t.header);
    REQUIRE(back.rows.size() == t.rows.size());
    for (size_t i = 0; i < t.rows.size(); ++i) CHECK(back.rows[i] == t.rows[i]);
  }
  // Trajectory table exposes the pose used by the departure metric.
  const csv::Table traj = hn::trajectory_table(r);
  CHECK(column_max_abs(traj, "Y") < 5.0);
  fs::remove_all(dir);
}

TEST_CASE("injected sensor noise matches the configured variances") {
  hn::Scenario s = hn::desk_scenario();
  s.estimator = hn::EstimatorKind::ekf;
  s.noise = hn::NoiseCase::case1;
  s.max_duration = 10.0;
  s.seed = 7;
  const hn::RunResult r = hn::run_closed_loop(s);
  REQUIRE_FALSE(r.failed);
  // 10 s at the 10 ms control period, IMU sampled at the 1 ms plant rate.
  CHECK(r.injected_meas.size() >= 990);
  CHECK(r.injected_imu.size() >= 9900);

  const plant::NoiseSpec spec = plant::noise_case1();
  const std::array<double, 5> imu_sigma = plant::imu_sigma_si(spec);
  const std::array<double, 9> meas_sigma = plant::meas_sigma_si(spec);

  const auto check_channel = [](const auto& rows, size_t c, double sigma) {
    double sum = 0.0, sq = 0.0;
    for (const auto& row : rows) {
      sum += row[c];
      sq += row[c] * row[c];
    }
    const double n = static_cast<double>(rows.size());
    const double var = sq / n - (sum / n) * (sum / n);
    if (sigma == 0.0) {
      CHECK(var == 0.0);
    } else {
      CHECK(var == doctest::Approx(sigma * sigma).epsilon(0.20));
    }
  };
  for (size_t c = 0; c < 5; ++c) check_channel(r.injected_imu, c, imu_sigma[c]);
  for (size_t c = 0; c < 9; ++c)
    check_channel(r.injected_meas, c, meas_sigma[c]);
}

TEST_CASE("lstm estimator without a model is a configuration error") {
  hn::Scenario s = short_desk(50.0);
  s.estimator = hn::EstimatorKind::lstm;
  s.model.reset();
  s.model_path.clear();
  CHECK_THROWS_AS(hn::run_closed_loop(s), std::invalid_argument);
  CHECK_THROWS_AS(hn::run_experiment_suite(s, ""), std::invalid_argument);
}

TEST_CASE("experiment suite runs the six-way comparison") {
  // Tiny network trained briefly: enough for the plumbing, not for accuracy.
  std::mt19937 rng(3);
  nn::DatasetConfig dc = nn::desk_dataset_config();
  dc.n_train = 1500;
  dc.n_test = 300;
  dc.n_validation = 200;
  const VehicleParams p = default_params();
  const nn::Dataset data = nn::generate_dataset(p, dc, rng);
  nn::LstmModel model = nn::make_model(5, 4, 8, rng);
  nn::TrainConfig tc = nn::desk_train_config();
  tc.max_epochs = 2;
  nn::train(model, data, tc, rng);

  hn::Scenario base = short_desk(100.0);
  base.model = std::make_shared<const nn::LstmModel>(model);

  const fs::path dir = fs::temp_directory_path() / "fourwisd_suite_smoke";
  fs::remove_all(dir);
  const hn::SuiteReport rep = hn::run_experiment_suite(base, dir.string());

  REQUIRE(rep.runs.size() == 6);
  // Order: estimators ekf then lstm, noise none/case1/case2 within each.
  CHECK(rep.runs[0].estimator == hn::EstimatorKind::ekf);
  CHECK(rep.runs[0].noise == hn::NoiseCase::none);
  CHECK(rep.runs[3].estimator == hn::EstimatorKind::lstm);
  CHECK(rep.runs[5].noise == hn::NoiseCase::case2);

  REQUIRE(rep.summary.contains("runs"));
  CHECK(rep.summary["runs"].size() == 6);

  // Noise-free runs anchor the degradation columns at zero.
  for (size_t i : {size_t{0}, size_t{3}})
    for (double v : rep.runs[i].result.metrics.relative_errors) CHECK(v == 0.0);

  for (const char* file :
       {"summary.json", "report.md", "trajectory_ekf_none.csv",
        "estimates_lstm_case2.csv", "mpc_ekf_case1.csv", "dyc_lstm_none.csv",
        "metrics_ekf_none.json", "metrics_lstm_case2.json"})
    CHECK_MESSAGE(fs::exists(dir / file), file);

  // The stored per-run metric documents parse back and agree with the report.
  const nlohmann::json summary =
      nlohmann::json::parse(slurp(dir / "summary.json"));
  CHECK(summary["runs"].size() == 6);
  CHECK(summary["seed"] == base.seed);
  const std::string md = slurp(dir / "report.md");
  CHECK(md.find("ekf") != std::string::npos);
  CHECK(md.find("lstm") != std::string::npos);
  fs::remove_all(dir);
}

}  // TEST_SUITE
