#pragma once

#include <array>
#include <utility>
#include <vector>

#include <json.hpp>

namespace fourwisd::metrics {

// Root-mean-square error over aligned samples. Throws std::invalid_argument
// on length mismatch or empty input.
double rmse(const std::vector<double>& truth,
            const std::vector<double>& estimate);

// |rmse_perturbed - rmse_nominal| / rmse_nominal. Throws on nonpositive
// nominal.
double relative_error(double rmse_perturbed, double rmse_nominal);

struct Departure {
  double max_departure = 0.0;  // m
  double rate_percent = 0.0;   // relative to the reference maximum excursion
};

// Maximum |y - y_ref| and its percentage of `reference_max` (the standard
// scenario's 1.8 m reference excursion).
Departure path_departure(const std::vector<double>& y,
                         const std::vector<double>& y_ref,
                         double reference_max = 1.8);

// (beta, beta_dot) pairs with beta_dot from central differences at the given
// sample period; one-sided at the ends.
std::vector<std::pair<double, double>> phase_plane(
    const std::vector<double>& beta, double dt);

struct RunMetrics {
  std::array<double, 8> force_rmse{};       // fx FL..RR then fy FL..RR [N]
  std::array<double, 8> relative_errors{};  // vs the nominal run's RMSE
  double max_departure = 0.0;
  double departure_rate = 0.0;
  std::vector<std::pair<double, double>> phase;  // (beta, beta_dot)
};

nlohmann::json to_json(const RunMetrics& m);
RunMetrics run_metrics_from_json(const nlohmann::json& j);

}  // namespace fourwisd::metrics
