#include "fourwisd/bayes_opt.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "fourwisd/parallel.hpp"

namespace fourwisd::bo {

namespace {

constexpr double kSqrt5 = 2.23606797749978969;

double matern52(double r) {
  const double a = kSqrt5 * r;
  return (1.0 + a + a * a / 3.0) * std::exp(-a);
}

double scaled_distance(const VecX& a, const VecX& b, const VecX& ls) {
  double sum = 0.0;
  for (Eigen::Index d = 0; d < a.size(); ++d) {
    const double t = (a[d] - b[d]) / ls[d];
    sum += t * t;
  }
  return std::sqrt(sum);
}

MatX kernel_matrix(const MatX& x, const VecX& ls, double signal_var) {
  const Eigen::Index n = x.rows();
  MatX k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = signal_var;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v =
          signal_var *
          matern52(scaled_distance(x.row(i).transpose(), x.row(j).transpose(), ls));
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

// Log marginal likelihood of standardized targets for the given kernel
// parameters; -inf for factorization failures so the search avoids them.
double log_marginal(const MatX& x, const VecX& y, const VecX& ls,
                    double signal_var, double noise_var, double jitter) {
  const Eigen::Index n = x.rows();
  MatX k = kernel_matrix(x, ls, signal_var);
  k.diagonal().array() += noise_var + jitter;
  const Eigen::LLT<MatX> llt(k);
  if (llt.info() != Eigen::Success)
    return -std::numeric_limits<double>::infinity();
  const VecX alpha = llt.solve(y);
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    log_det += std::log(llt.matrixL()(i, i));
  return -0.5 * y.dot(alpha) - log_det - 0.5 * n * std::log(2.0 * kPi);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * kPi);
}

VecX latin_hypercube_row(int d, int i, int n,
                         const std::vector<std::vector<int>>& perms,
                         std::mt19937& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  VecX p(d);
  for (int k = 0; k < d; ++k)
    p[k] = (perms[k][i] + u(rng)) / static_cast<double>(n);
  return p;
}

}  // namespace

VecX SearchSpace::decode(const VecX& unit) const {
  VecX out(size());
  for (int d = 0; d < size(); ++d) {
    const double u = std::clamp(unit[d], 0.0, 1.0);
    double v = dims[d].lower + u * (dims[d].upper - dims[d].lower);
    if (dims[d].integer) v = std::round(v);
    out[d] = v;
  }
  return out;
}

VecX SearchSpace::encode(const VecX& native) const {
  VecX out(size());
  for (int d = 0; d < size(); ++d) {
    const double span = dims[d].upper - dims[d].lower;
    out[d] = std::clamp((native[d] - dims[d].lower) / span, 0.0, 1.0);
  }
  return out;
}

SearchSpace lstm_search_space() {
  SearchSpace s;
  s.dims = {
      {"max_epochs", 500, 700, true},
      {"validation_frequency", 3, 10, true},
      {"gradient_threshold", 0.5, 1.5, false},
      {"initial_learning_rate", 0.001, 0.01, false},
      {"lr_drop_period", 100, 200, true},
      {"lr_drop_factor", 0.2, 0.4, false},
      {"mini_batch_size", 32, 128, true},
      {"sequence_length", 5000, 10000, true},
  };
  return s;
}

SearchSpace desk_lstm_search_space() {
  SearchSpace s = lstm_search_space();
  s.dims[0].lower = 22;
  s.dims[0].upper = 30;
  s.dims[4].lower = 10;
  s.dims[4].upper = 20;
  s.dims[7].lower = 128;
  s.dims[7].upper = 256;
  return s;
}

GpSurrogate gp_fit(const MatX& points, const VecX& values,
                   const GpFitOptions& options, std::mt19937& rng) {
  const Eigen::Index n = points.rows();
  const Eigen::Index d = points.cols();
  if (n < 2) throw std::invalid_argument("gp_fit: need at least 2 points");
  if (values.size() != n)
    throw std::invalid_argument("gp_fit: values/points size mismatch");

  GpSurrogate gp;
  gp.x = points;
  gp.y_mean = values.mean();
  const double var =
      (values.array() - gp.y_mean).square().sum() / static_cast<double>(n);
  gp.y_std = std::sqrt(std::max(var, 1e-24));
  gp.y = (values.array() - gp.y_mean) / gp.y_std;
  gp.best_observed = values.minCoeff();

  // Hyperparameter search over log(length scales), log(signal), log(noise):
  // random multi-start followed by a multiplicative coordinate polish.
  const int n_free = static_cast<int>(d) + (options.fixed_noise ? 1 : 2);
  auto unpack = [&](const VecX& theta, VecX& ls, double& sv, double& nv) {
    ls = theta.head(d).array().exp();
    sv = std::exp(theta[d]);
    nv = options.fixed_noise ? std::max(*options.fixed_noise, options.noise_floor)
                             : std::max(std::exp(theta[d + 1]), options.noise_floor);
  };
  auto objective = [&](const VecX& theta) {
    VecX ls;
    double sv, nv;
    unpack(theta, ls, sv, nv);
    return log_marginal(gp.x, gp.y, ls, sv, nv, options.jitter);
  };

  std::uniform_real_distribution<double> u_ls(std::log(0.05), std::log(2.0));
  std::uniform_real_distribution<double> u_sv(std::log(0.05), std::log(5.0));
  std::uniform_real_distribution<double> u_nv(std::log(1e-8), std::log(1e-2));
  VecX best_theta = VecX::Zero(n_free);
  double best_lml = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, options.restarts); ++r) {
    VecX theta(n_free);
    for (Eigen::Index k = 0; k < d; ++k) theta[k] = u_ls(rng);
    theta[d] = u_sv(rng);
    if (!options.fixed_noise) theta[d + 1] = u_nv(rng);
    const double lml = objective(theta);
    if (lml > best_lml) {
      best_lml = lml;
      best_theta = theta;
    }
  }
  // Coordinate polish: step each log-parameter by +-log(1.6) while it helps.
  const double step = std::log(1.6);
  bool improved = true;
  int sweeps = 0;
  while (improved && sweeps < 8) {
    improved = false;
    ++sweeps;
    for (int k = 0; k < n_free; ++k) {
      for (const double dir : {step, -step}) {
        VecX theta = best_theta;
        theta[k] += dir;
        const double lml = objective(theta);
        if (lml > best_lml) {
          best_lml = lml;
          best_theta = theta;
          improved = true;
        }
      }
    }
  }

  unpack(best_theta, gp.length_scales, gp.signal_variance, gp.noise_variance);
  gp.log_marginal_likelihood = best_lml;
  MatX k = kernel_matrix(gp.x, gp.length_scales, gp.signal_variance);
  k.diagonal().array() += gp.noise_variance + options.jitter;
  Eigen::LLT<MatX> llt(k);
  double jitter = options.jitter;
  while (llt.info() != Eigen::Success && jitter < 1e-3) {
    jitter *= 10.0;
    MatX kj = k;
    kj.diagonal().array() += jitter;
    llt.compute(kj);
  }
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("gp_fit: kernel factorization failed");
  gp.chol_lower = llt.matrixL();
  gp.alpha = llt.solve(gp.y);
  return gp;
}

GpSurrogate gp_fit(const MatX& points, const VecX& values) {
  std::mt19937 rng(0);
  return gp_fit(points, values, GpFitOptions{}, rng);
}

GpPosterior gp_predict(const GpSurrogate& gp, const VecX& x) {
  const Eigen::Index n = gp.x.rows();
  VecX kstar(n);
  for (Eigen::Index i = 0; i < n; ++i)
    kstar[i] = gp.signal_variance *
               matern52(scaled_distance(x, gp.x.row(i).transpose(),
                                        gp.length_scales));
  GpPosterior post;
  post.mean = gp.y_mean + gp.y_std * kstar.dot(gp.alpha);
  const VecX v = gp.chol_lower.triangularView<Eigen::Lower>().solve(kstar);
  const double var_std = gp.signal_variance - v.squaredNorm();
  post.variance = std::max(0.0, var_std) * gp.y_std * gp.y_std;
  return post;
}

double expected_improvement(const GpSurrogate& gp, const VecX& candidate) {
  const GpPosterior post = gp_predict(gp, candidate);
  const double sigma = std::sqrt(post.variance);
  const double gap = gp.best_observed - post.mean;
  if (sigma < 1e-15) return 0.0;  // no uncertainty, no expected gain
  const double z = gap / sigma;
  return std::max(0.0, gap * normal_cdf(z) + sigma * normal_pdf(z));
}

namespace {

// One acquisition maximization: random candidates then Gaussian refinement.
VecX propose_unit(const GpSurrogate& gp, const SearchSpace& space,
                  const BoOptions& opt, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, opt.polish_sigma);
  const int d = space.size();
  auto snapped = [&](VecX unit) {
    // Integer dims see the surrogate at the value that would be evaluated.
    return space.encode(space.decode(unit));
  };
  VecX best;
  double best_ei = -1.0;
  for (int c = 0; c < opt.candidates; ++c) {
    VecX unit(d);
    for (int k = 0; k < d; ++k) unit[k] = u(rng);
    unit = snapped(unit);
    const double ei = expected_improvement(gp, unit);
    if (ei > best_ei) {
      best_ei = ei;
      best = unit;
    }
  }
  for (int c = 0; c < opt.polish_samples; ++c) {
    VecX unit = best;
    for (int k = 0; k < d; ++k)
      unit[k] = std::clamp(unit[k] + g(rng), 0.0, 1.0);
    unit = snapped(unit);
    const double ei = expected_improvement(gp, unit);
    if (ei > best_ei) {
      best_ei = ei;
      best = unit;
    }
  }
  return best;
}

double penalty_value(const std::vector<double>& valid) {
  if (valid.empty()) return 1e6;
  const auto [lo, hi] = std::minmax_element(valid.begin(), valid.end());
  return *hi + 3.0 * (*hi - *lo) + 1.0;
}

}  // namespace

BoResult optimize(const std::function<double(const VecX&)>& objective,
                  const SearchSpace& space, int budget, std::mt19937& rng,
                  const BoOptions& options) {
  if (budget < options.seed_points)
    throw std::invalid_argument("optimize: budget below seed count");
  const int d = space.size();
  BoResult result;
  MatX xs(0, d);
  std::vector<double> raw_values;   // what the GP is fit on (with penalties)
  std::vector<double> valid_values; // successful evaluations only

  auto evaluate = [&](const VecX& unit) {
    HistoryEntry entry;
    entry.point = space.decode(unit);
    try {
      entry.value = objective(entry.point);
      if (!std::isfinite(entry.value))
        throw std::runtime_error("non-finite objective");
    } catch (const std::exception&) {
      entry.failed = true;
    }
    return entry;
  };

  auto commit = [&](const VecX& unit, HistoryEntry entry) {
    if (entry.failed) entry.value = penalty_value(valid_values);
    else valid_values.push_back(entry.value);
    xs.conservativeResize(xs.rows() + 1, d);
    xs.row(xs.rows() - 1) = unit.transpose();
    raw_values.push_back(entry.value);
    const double prev = result.history.empty()
                            ? std::numeric_limits<double>::infinity()
                            : result.history.back().incumbent;
    entry.incumbent = std::min(prev, entry.value);
    result.history.push_back(std::move(entry));
  };

  // Latin-hypercube seeding.
  std::vector<std::vector<int>> perms(d);
  for (int k = 0; k < d; ++k) {
    perms[k].resize(options.seed_points);
    std::iota(perms[k].begin(), perms[k].end(), 0);
    std::shuffle(perms[k].begin(), perms[k].end(), rng);
  }
  for (int i = 0; i < options.seed_points; ++i) {
    const VecX unit = space.encode(space.decode(
        latin_hypercube_row(d, i, options.seed_points, perms, rng)));
    commit(unit, evaluate(unit));
  }

  while (static_cast<int>(result.history.size()) < budget) {
    const int remaining = budget - static_cast<int>(result.history.size());
    const int batch = std::clamp(options.batch_width, 1, remaining);

    // Constant-liar fill-in: propose sequentially, pretending each pending
    // point already returned the incumbent value.
    MatX xs_liar = xs;
    VecX ys_liar = Eigen::Map<const VecX>(raw_values.data(), raw_values.size());
    const double liar = *std::min_element(raw_values.begin(), raw_values.end());
    std::vector<VecX> pending;
    for (int b = 0; b < batch; ++b) {
      const GpSurrogate gp =
          gp_fit(xs_liar, ys_liar, options.fit, rng);
      const VecX unit = propose_unit(gp, space, options, rng);
      pending.push_back(unit);
      xs_liar.conservativeResize(xs_liar.rows() + 1, d);
      xs_liar.row(xs_liar.rows() - 1) = unit.transpose();
      ys_liar.conservativeResize(ys_liar.size() + 1);
      ys_liar[ys_liar.size() - 1] = liar;
    }

    if (batch == 1) {
      commit(pending[0], evaluate(pending[0]));
    } else {
      std::vector<std::future<HistoryEntry>> futures;
      futures.reserve(pending.size());
      for (const VecX& unit : pending)
        futures.push_back(std::async(std::launch::async, evaluate, unit));
      for (int b = 0; b < batch; ++b) commit(pending[b], futures[b].get());
    }
  }

  const auto best = std::min_element(
      result.history.begin(), result.history.end(),
      [](const HistoryEntry& a, const HistoryEntry& b) {
        return a.value < b.value;
      });
  result.best_point = best->point;
  result.best_value = best->value;
  return result;
}

BoResult random_search(const std::function<double(const VecX&)>& objective,
                       const SearchSpace& space, int budget,
                       std::mt19937& rng) {
  BoResult result;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> valid;
  for (int i = 0; i < budget; ++i) {
    VecX unit(space.size());
    for (int k = 0; k < space.size(); ++k) unit[k] = u(rng);
    HistoryEntry entry;
    entry.point = space.decode(unit);
    try {
      entry.value = objective(entry.point);
      if (!std::isfinite(entry.value))
        throw std::runtime_error("non-finite objective");
      valid.push_back(entry.value);
    } catch (const std::exception&) {
      entry.failed = true;
      entry.value = penalty_value(valid);
    }
    const double prev = result.history.empty()
                            ? std::numeric_limits<double>::infinity()
                            : result.history.back().incumbent;
    entry.incumbent = std::min(prev, entry.value);
    result.history.push_back(std::move(entry));
  }
  const auto best = std::min_element(
      result.history.begin(), result.history.end(),
      [](const HistoryEntry& a, const HistoryEntry& b) {
        return a.value < b.value;
      });
  result.best_point = best->point;
  result.best_value = best->value;
  return result;
}

}  // namespace fourwisd::bo
