#pragma once

#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "fourwisd/domain.hpp"

namespace fourwisd::bo {

struct Hyperparameter {
  std::string name;
  double lower = 0.0;
  double upper = 1.0;
  bool integer = false;
};

struct SearchSpace {
  std::vector<Hyperparameter> dims;
  int size() const { return static_cast<int>(dims.size()); }
  // Unit-box coordinates <-> native values (integer dims rounded on decode).
  VecX decode(const VecX& unit) const;
  VecX encode(const VecX& native) const;
};

// The 8-dimensional tuning box for the sequence model: epochs, validation
// frequency, gradient threshold, initial learning rate, drop period, drop
// factor, mini-batch size, sequence length.
SearchSpace lstm_search_space();
// Same shape with the expensive dimensions shrunk to desk scale.
SearchSpace desk_lstm_search_space();

// Matern-5/2 GP with per-dimension length scales on unit-box inputs and
// standardized targets. Factorization is cached for posterior queries.
struct GpSurrogate {
  MatX x;  // n x d, unit box
  VecX y;  // standardized
  double y_mean = 0.0, y_std = 1.0;
  VecX length_scales;  // d
  double signal_variance = 1.0;
  double noise_variance = 1e-6;
  MatX chol_lower;  // L with L L^T = K + noise I + jitter I
  VecX alpha;       // (K + ...)^{-1} y
  double best_observed = 0.0;  // min of raw values
  double log_marginal_likelihood = 0.0;
};

struct GpFitOptions {
  double jitter = 1e-8;
  double noise_floor = 1e-10;
  std::optional<double> fixed_noise;  // skip noise optimization when set
  int restarts = 48;                  // multi-start draws for the LML search
};

// Fits kernel hyperparameters by maximizing log marginal likelihood
// (multi-start random draws + coordinate polish). Throws std::invalid_argument
// on fewer than 2 points or mismatched sizes.
GpSurrogate gp_fit(const MatX& points, const VecX& values,
                   const GpFitOptions& options, std::mt19937& rng);
GpSurrogate gp_fit(const MatX& points, const VecX& values);

struct GpPosterior {
  double mean = 0.0;
  double variance = 0.0;  // >= 0
};
GpPosterior gp_predict(const GpSurrogate& gp, const VecX& x);

// Expected improvement for minimization against the best observed value;
// exactly zero when the predictive deviation vanishes.
double expected_improvement(const GpSurrogate& gp, const VecX& candidate);

struct HistoryEntry {
  VecX point;        // native coordinates
  double value = 0.0;
  double incumbent = 0.0;  // best value seen so far
  bool failed = false;
};

struct BoOptions {
  int seed_points = 5;          // Latin-hypercube initialization
  int candidates = 2048;        // random acquisition candidates
  int polish_samples = 256;     // Gaussian refinement around the best one
  double polish_sigma = 0.02;
  int batch_width = 1;          // parallel evaluations via constant liar
  GpFitOptions fit;
};

struct BoResult {
  VecX best_point;  // native coordinates
  double best_value = 0.0;
  std::vector<HistoryEntry> history;  // length == budget
};

// Minimizes the objective over the box. Objective exceptions are recorded as
// a penalty value (worse than everything observed) and the search continues.
BoResult optimize(const std::function<double(const VecX&)>& objective,
                  const SearchSpace& space, int budget, std::mt19937& rng,
                  const BoOptions& options = {});

// Plain uniform sampling baseline with the same history contract.
BoResult random_search(const std::function<double(const VecX&)>& objective,
                       const SearchSpace& space, int budget, std::mt19937& rng);

}  // namespace fourwisd::bo
