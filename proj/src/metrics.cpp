#include "fourwisd/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace fourwisd::metrics {

double rmse(const std::vector<double>& truth,
            const std::vector<double>& estimate) {
  if (truth.size() != estimate.size())
    throw std::invalid_argument("rmse: length mismatch");
  if (truth.empty()) throw std::invalid_argument("rmse: empty input");
  double sum = 0.0;
  for (size_t i = 0; i < truth.size(); ++i) {
    const double d = truth[i] - estimate[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(truth.size()));
}

double relative_error(double rmse_perturbed, double rmse_nominal) {
  if (!(rmse_nominal > 0.0))
    throw std::invalid_argument("relative_error: nominal must be positive");
  return std::abs(rmse_perturbed - rmse_nominal) / rmse_nominal;
}

Departure path_departure(const std::vector<double>& y,
                         const std::vector<double>& y_ref,
                         double reference_max) {
  if (y.size() != y_ref.size())
    throw std::invalid_argument("path_departure: length mismatch");
  Departure d;
  for (size_t i = 0; i < y.size(); ++i)
    d.max_departure = std::max(d.max_departure, std::abs(y[i] - y_ref[i]));
  d.rate_percent = d.max_departure / reference_max * 100.0;
  return d;
}

std::vector<std::pair<double, double>> phase_plane(
    const std::vector<double>& beta, double dt) {
  std::vector<std::pair<double, double>> out;
  const size_t n = beta.size();
  out.reserve(n);
  if (n == 0) return out;
  if (n == 1) {
    out.emplace_back(beta[0], 0.0);
    return out;
  }
  for (size_t i = 0; i < n; ++i) {
    double rate;
    if (i == 0)
      rate = (beta[1] - beta[0]) / dt;
    else if (i == n - 1)
      rate = (beta[n - 1] - beta[n - 2]) / dt;
    else
      rate = (beta[i + 1] - beta[i - 1]) / (2.0 * dt);
    out.emplace_back(beta[i], rate);
  }
  return out;
}

nlohmann::json to_json(const RunMetrics& m) {
  nlohmann::json j;
  j["force_rmse"] = m.force_rmse;
  j["relative_errors"] = m.relative_errors;
  j["max_departure"] = m.max_departure;
  j["departure_rate"] = m.departure_rate;
  nlohmann::json phase = nlohmann::json::array();
  for (const auto& [b, bdot] : m.phase) phase.push_back({b, bdot});
  j["phase"] = std::move(phase);
  return j;
}

RunMetrics run_metrics_from_json(const nlohmann::json& j) {
  RunMetrics m;
  m.force_rmse = j.at("force_rmse").get<std::array<double, 8>>();
  m.relative_errors = j.at("relative_errors").get<std::array<double, 8>>();
  m.max_departure = j.at("max_departure").get<double>();
  m.departure_rate = j.at("departure_rate").get<double>();
  for (const auto& pair : j.at("phase"))
    m.phase.emplace_back(pair.at(0).get<double>(), pair.at(1).get<double>());
  return m;
}

}  // namespace fourwisd::metrics
