#include "fourwisd/lstm.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "fourwisd/parallel.hpp"

namespace fourwisd::nn {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Slices of the stacked (4H) gate dimension: [input; forget; candidate; output].
struct GateSlices {
  int h;
  int input() const { return 0; }
  int forget() const { return h; }
  int candidate() const { return 2 * h; }
  int output() const { return 3 * h; }
};

nlohmann::json matrix_to_json(const MatX& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatX matrix_from_json(const nlohmann::json& j) {
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return MatX(0, 0);
  const Eigen::Index cols = static_cast<Eigen::Index>(j.at(0).size());
  MatX m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
  return m;
}

nlohmann::json vector_to_json(const VecX& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

VecX vector_from_json(const nlohmann::json& j) {
  VecX v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j.at(i).get<double>();
  return v;
}

}  // namespace

LstmModel make_model(int input_size, int hidden_size, int output_size,
                     std::mt19937& rng) {
  if (input_size < 1 || hidden_size < 1 || output_size < 1)
    throw std::invalid_argument("lstm: sizes must be positive");
  LstmModel m;
  m.input_size = input_size;
  m.hidden_size = hidden_size;
  m.output_size = output_size;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hidden_size));
  std::uniform_real_distribution<double> u(-scale, scale);
  auto fill = [&](MatX& mat, int rows, int cols) {
    mat.resize(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) mat(r, c) = u(rng);
  };
  fill(m.w_x, 4 * hidden_size, input_size);
  fill(m.w_h, 4 * hidden_size, hidden_size);
  m.b = VecX::Zero(4 * hidden_size);
  m.b.segment(hidden_size, hidden_size).setOnes();  // forget-gate bias
  fill(m.w_y, output_size, hidden_size);
  m.b_y = VecX::Zero(output_size);
  m.in_mean = VecX::Zero(input_size);
  m.in_std = VecX::Ones(input_size);
  m.out_mean = VecX::Zero(output_size);
  m.out_std = VecX::Ones(output_size);
  return m;
}

ForwardCache forward(const LstmModel& m, const MatX& sequence) {
  if (sequence.cols() != m.input_size)
    throw std::invalid_argument("lstm forward: wrong input width");
  const int t_len = static_cast<int>(sequence.rows());
  if (t_len < 1) throw std::invalid_argument("lstm forward: empty sequence");
  const int h = m.hidden_size;
  const GateSlices g{h};

  ForwardCache cache;
  cache.x = sequence;
  cache.gi.resize(t_len, h);
  cache.gf.resize(t_len, h);
  cache.gg.resize(t_len, h);
  cache.go.resize(t_len, h);
  cache.c.resize(t_len, h);
  cache.h.resize(t_len, h);
  cache.y.resize(t_len, m.output_size);

  VecX h_prev = VecX::Zero(h);
  VecX c_prev = VecX::Zero(h);
  for (int t = 0; t < t_len; ++t) {
    const VecX z = m.w_x * sequence.row(t).transpose() + m.w_h * h_prev + m.b;
    for (int k = 0; k < h; ++k) {
      const double gi = sigmoid(z[g.input() + k]);
      const double gf = sigmoid(z[g.forget() + k]);
      const double gg = std::tanh(z[g.candidate() + k]);
      const double go = sigmoid(z[g.output() + k]);
      const double c = gf * c_prev[k] + gi * gg;
      cache.gi(t, k) = gi;
      cache.gf(t, k) = gf;
      cache.gg(t, k) = gg;
      cache.go(t, k) = go;
      cache.c(t, k) = c;
      cache.h(t, k) = go * std::tanh(c);
    }
    if (!cache.h.row(t).allFinite())
      throw std::runtime_error("lstm forward: non-finite activation at step " +
                               std::to_string(t));
    cache.y.row(t) =
        (m.w_y * cache.h.row(t).transpose() + m.b_y).transpose();
    h_prev = cache.h.row(t).transpose();
    c_prev = cache.c.row(t).transpose();
  }
  return cache;
}

double Gradients::squared_norm() const {
  return w_x.squaredNorm() + w_h.squaredNorm() + b.squaredNorm() +
         w_y.squaredNorm() + b_y.squaredNorm();
}

Gradients& Gradients::operator+=(const Gradients& other) {
  w_x += other.w_x;
  w_h += other.w_h;
  b += other.b;
  w_y += other.w_y;
  b_y += other.b_y;
  return *this;
}

Gradients& Gradients::operator*=(double s) {
  w_x *= s;
  w_h *= s;
  b *= s;
  w_y *= s;
  b_y *= s;
  return *this;
}

Gradients zero_gradients(const LstmModel& m) {
  Gradients grad;
  grad.w_x = MatX::Zero(4 * m.hidden_size, m.input_size);
  grad.w_h = MatX::Zero(4 * m.hidden_size, m.hidden_size);
  grad.b = VecX::Zero(4 * m.hidden_size);
  grad.w_y = MatX::Zero(m.output_size, m.hidden_size);
  grad.b_y = VecX::Zero(m.output_size);
  return grad;
}

double mse_loss(const MatX& predictions, const MatX& targets) {
  if (predictions.rows() != targets.rows() ||
      predictions.cols() != targets.cols())
    throw std::invalid_argument("lstm loss: shape mismatch");
  return (predictions - targets).squaredNorm() /
         static_cast<double>(predictions.size());
}

Gradients backward(const LstmModel& m, const ForwardCache& cache,
                   const MatX& targets, int loss_start) {
  const int t_len = static_cast<int>(cache.x.rows());
  if (targets.rows() != t_len || targets.cols() != m.output_size)
    throw std::invalid_argument("lstm backward: target shape mismatch");
  if (loss_start < 0 || loss_start >= t_len)
    throw std::invalid_argument("lstm backward: loss_start out of range");
  const int h = m.hidden_size;
  const GateSlices g{h};
  Gradients grad = zero_gradients(m);

  const double scale =
      2.0 / static_cast<double>((t_len - loss_start) * m.output_size);
  VecX dh_next = VecX::Zero(h);
  VecX dc_next = VecX::Zero(h);
  for (int t = t_len - 1; t >= 0; --t) {
    VecX dy = VecX::Zero(m.output_size);
    if (t >= loss_start) {
      dy = scale * (cache.y.row(t) - targets.row(t)).transpose();
      grad.w_y += dy * cache.h.row(t);
      grad.b_y += dy;
    }

    VecX dh = m.w_y.transpose() * dy + dh_next;
    VecX dz(4 * h);
    VecX dc(h);
    for (int k = 0; k < h; ++k) {
      const double tanh_c = std::tanh(cache.c(t, k));
      const double go = cache.go(t, k);
      const double dok = dh[k] * tanh_c;
      dc[k] = dh[k] * go * (1.0 - tanh_c * tanh_c) + dc_next[k];
      const double c_prev = t > 0 ? cache.c(t - 1, k) : 0.0;
      const double gi = cache.gi(t, k);
      const double gf = cache.gf(t, k);
      const double gg = cache.gg(t, k);
      dz[g.input() + k] = dc[k] * gg * gi * (1.0 - gi);
      dz[g.forget() + k] = dc[k] * c_prev * gf * (1.0 - gf);
      dz[g.candidate() + k] = dc[k] * gi * (1.0 - gg * gg);
      dz[g.output() + k] = dok * go * (1.0 - go);
    }
    grad.w_x += dz * cache.x.row(t);
    if (t > 0) grad.w_h += dz * cache.h.row(t - 1);
    grad.b += dz;
    dh_next = m.w_h.transpose() * dz;
    for (int k = 0; k < h; ++k) dc_next[k] = dc[k] * cache.gf(t, k);
  }
  return grad;
}

LstmState initial_state(const LstmModel& m) {
  return {VecX::Zero(m.hidden_size), VecX::Zero(m.hidden_size)};
}

VecX step(const LstmModel& m, LstmState& state, const VecX& input_normalized) {
  const int h = m.hidden_size;
  const GateSlices g{h};
  const VecX z = m.w_x * input_normalized + m.w_h * state.h + m.b;
  for (int k = 0; k < h; ++k) {
    const double gi = sigmoid(z[g.input() + k]);
    const double gf = sigmoid(z[g.forget() + k]);
    const double gg = std::tanh(z[g.candidate() + k]);
    const double go = sigmoid(z[g.output() + k]);
    state.c[k] = gf * state.c[k] + gi * gg;
    state.h[k] = go * std::tanh(state.c[k]);
  }
  return m.w_y * state.h + m.b_y;
}

TrainConfig desk_train_config() {
  TrainConfig cfg;
  cfg.max_epochs = 30;
  cfg.validation_frequency = 10;
  cfg.gradient_threshold = 1.0;
  cfg.initial_learning_rate = 0.005;
  cfg.lr_drop_period = 15;
  cfg.lr_drop_factor = 0.4;
  cfg.mini_batch_size = 32;
  cfg.sequence_length = 256;
  return cfg;
}

double learning_rate(const TrainConfig& cfg, int epoch) {
  const int drops = (epoch - 1) / cfg.lr_drop_period;
  return cfg.initial_learning_rate * std::pow(cfg.lr_drop_factor, drops);
}

DatasetConfig desk_dataset_config() {
  DatasetConfig cfg;
  cfg.n_train = 9000;
  cfg.n_test = 2000;
  cfg.n_validation = 1000;
  cfg.road_length = 400.0;
  cfg.low_mu_start = 40.0;
  cfg.low_mu_end = 140.0;
  return cfg;
}

Dataset generate_dataset(const VehicleParams& p, const DatasetConfig& cfg,
                         std::mt19937& rng) {
  const int total = cfg.n_train + cfg.n_test + cfg.n_validation;
  if (total < 2 || cfg.n_train < 2)
    throw std::invalid_argument("dataset: splits too small");

  plant::RoadProfile road;
  road.segments.push_back({cfg.low_mu_start, cfg.low_mu_end, cfg.low_mu});
  road.validate();
  const plant::PlantConfig plant_cfg = plant::default_plant_config(p);

  plant::PlantState s;
  s.vx = cfg.speed;
  s.omega = Vec4::Constant(cfg.speed / p.R_e);

  std::mt19937_64 sensor_rng(rng());
  std::normal_distribution<double> dither(0.0, deg2rad(0.05));
  std::uniform_real_distribution<double> pulse_gap(2.2, 4.0);
  std::uniform_real_distribution<double> pulse_len(0.8, 1.4);
  std::uniform_real_distribution<double> pulse_amp(deg2rad(1.0), deg2rad(3.2));
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  MatX inputs(total, 5);
  MatX targets(total, 8);
  const double h = cfg.sample_dt;
  const double kp_v = 0.4;
  double t = 0.0;
  // Evasive-steer pulse schedule: the drive must visit the same state
  // envelope the estimator later sees behind the avoidance controller, so
  // lane-change-sized raised-cosine pulses of random amplitude, sign and
  // spacing ride on a small multi-sine.
  double pulse_start = 1.0, pulse_dur = pulse_len(rng);
  double pulse_peak = pulse_amp(rng) * (coin(rng) < 0.5 ? -1.0 : 1.0);
  double grip_gate = 1.0;  // low-pass of the friction scale under the car
  for (int k = 0; k < total; ++k) {
    double delta_f = deg2rad(1.0) * std::sin(2.0 * kPi * 0.35 * t) +
                     deg2rad(0.7) * std::sin(2.0 * kPi * 0.8 * t + 1.0);
    if (t >= pulse_start) {
      const double phase = (t - pulse_start) / pulse_dur;
      if (phase >= 1.0) {
        pulse_start = t + pulse_gap(rng);
        pulse_dur = pulse_len(rng);
        pulse_peak = pulse_amp(rng) * (coin(rng) < 0.5 ? -1.0 : 1.0);
      } else {
        delta_f += pulse_peak * 0.5 * (1.0 - std::cos(2.0 * kPi * phase));
      }
    }
    // Test-driver caution: scale the steer down with the grip actually under
    // the car (first-order, 0.2 s) — open-loop full-size pulses on the
    // low-friction stretch would spin the vehicle, and the deployed
    // controller steers gently there too.
    const double mu_scale = std::min(1.0, road.mu_at(s.X) / road.default_mu);
    grip_gate += (mu_scale - grip_gate) * (h / 0.2);
    delta_f = std::clamp(delta_f * grip_gate, -deg2rad(3.5), deg2rad(3.5));
    delta_f += dither(rng);
    const double delta_r = -0.25 * delta_f;

    ControlCommand cmd;
    cmd.delta << delta_f, delta_f, delta_r, delta_r;
    const double cruise =
        p.R_e *
        (kp_v * p.m * (cfg.speed - s.vx) + plant_cfg.tires.f_r * p.m * p.g) /
        4.0;
    // Shared accel/brake torque waves so the longitudinal-force channels move
    // visibly in the pitch data.
    const double shared = 60.0 * std::sin(2.0 * kPi * 0.15 * t) +
                          40.0 * std::sin(2.0 * kPi * 0.45 * t + 0.5);
    // Yaw-damper torque differential, the kind the deployed yaw-moment
    // controller applies: per-wheel drive forces then carry a component
    // correlated with the observable yaw motion, which is what lets the
    // network attribute part of the longitudinal force left/right.
    const double gamma_kin = s.vx * delta_f / p.wheelbase();
    const double moment =
        std::clamp(1500.0 * (gamma_kin - s.yaw_rate), -2500.0, 2500.0);
    const double diff = moment * p.R_e / (2.0 * p.t_w);
    cmd.torque = Vec4::Constant(cruise + shared);
    cmd.torque[0] += diff;  // left wheels carry the positive-moment side
    cmd.torque[2] += diff;
    cmd.torque[1] -= diff;
    cmd.torque[3] -= diff;

    const ImuSample imu = plant::sample_imu(s, nullptr, sensor_rng);
    const TireForceSet forces =
        plant::current_forces(s, cmd, road, p, plant_cfg);
    inputs.row(k) = imu.as_vector().transpose();
    targets.row(k) << forces.fx.transpose(), forces.fy.transpose();

    s = plant::step(s, cmd, road, h, p, plant_cfg);
    if (s.X > cfg.road_length) s.X = 0.0;  // wrap: friction pattern repeats
    t += h;
  }

  Dataset data;
  data.n_train = cfg.n_train;
  data.n_test = cfg.n_test;
  data.n_validation = cfg.n_validation;
  data.in_mean = inputs.topRows(cfg.n_train).colwise().mean().transpose();
  data.out_mean = targets.topRows(cfg.n_train).colwise().mean().transpose();
  auto std_of = [&](const MatX& block, const VecX& mean) {
    VecX out(block.cols());
    for (Eigen::Index c = 0; c < block.cols(); ++c) {
      const double var =
          (block.col(c).array() - mean[c]).square().sum() / block.rows();
      out[c] = std::sqrt(std::max(var, 1e-18));
    }
    return out;
  };
  data.in_std = std_of(inputs.topRows(cfg.n_train), data.in_mean);
  data.out_std = std_of(targets.topRows(cfg.n_train), data.out_mean);
  data.inputs = (inputs.rowwise() - data.in_mean.transpose()).array().rowwise() /
                data.in_std.transpose().array();
  data.targets =
      (targets.rowwise() - data.out_mean.transpose()).array().rowwise() /
      data.out_std.transpose().array();
  return data;
}

double validation_rmse(const LstmModel& m, const Dataset& data) {
  if (data.n_validation < 1) return 0.0;
  const MatX seq =
      data.inputs.middleRows(data.n_train + data.n_test, data.n_validation);
  const MatX tgt =
      data.targets.middleRows(data.n_train + data.n_test, data.n_validation);
  const ForwardCache cache = forward(m, seq);
  // Score past the streaming warmup so the number reflects what a deployed,
  // state-carrying estimator would deliver.
  const int rows = data.n_validation -
                   std::min(StreamingEstimator::kWarmupSamples,
                            data.n_validation / 2);
  return std::sqrt(
      mse_loss(cache.y.bottomRows(rows), tgt.bottomRows(rows)));
}

TrainHistory train(LstmModel& m, const Dataset& data, const TrainConfig& cfg,
                   std::mt19937& rng) {
  if (cfg.sequence_length > data.n_train)
    throw std::invalid_argument("train: sequence longer than training split");
  if (data.in_mean.size() != m.input_size ||
      data.out_mean.size() != m.output_size)
    throw std::invalid_argument("train: dataset/model width mismatch");
  // The network is deployed on raw sensor streams, so it must carry the
  // normalization that produced its training data.
  m.in_mean = data.in_mean;
  m.in_std = data.in_std;
  m.out_mean = data.out_mean;
  m.out_std = data.out_std;
  TrainHistory history;

  Gradients mom = zero_gradients(m);   // Adam first moment
  Gradients vel = zero_gradients(m);   // Adam second moment
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int adam_t = 0;

  const int iters_per_epoch =
      std::max(1, data.n_train / (cfg.mini_batch_size * 8));
  // Each window starts this many samples early. The prefix carries no loss;
  // it only brings the cell state into the distribution a state-carrying
  // estimator actually runs in. Without it the network learns features of
  // the all-zero initial state (an anchor no deployed run ever sees) and
  // streams with no skill at all.
  const int burn = std::min(StreamingEstimator::kWarmupSamples,
                            data.n_train - cfg.sequence_length);
  const int max_start = data.n_train - cfg.sequence_length - burn;
  std::uniform_int_distribution<int> pick(0, max_start);

  int iteration = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const double lr = learning_rate(cfg, epoch);
    for (int it = 0; it < iters_per_epoch; ++it) {
      ++iteration;
      std::vector<int> starts(cfg.mini_batch_size);
      for (int& s : starts) s = pick(rng);

      std::vector<Gradients> grads(starts.size());
      std::vector<double> losses(starts.size());
      parallel_for(static_cast<int>(starts.size()), [&](int b) {
        const int window = burn + cfg.sequence_length;
        const MatX seq = data.inputs.middleRows(starts[b], window);
        const MatX tgt = data.targets.middleRows(starts[b], window);
        const ForwardCache cache = forward(m, seq);
        losses[b] = mse_loss(cache.y.bottomRows(cfg.sequence_length),
                             tgt.bottomRows(cfg.sequence_length));
        grads[b] = backward(m, cache, tgt, burn);
      });

      Gradients batch = zero_gradients(m);
      double loss = 0.0;
      for (size_t b = 0; b < grads.size(); ++b) {
        batch += grads[b];
        loss += losses[b];
      }
      batch *= 1.0 / static_cast<double>(starts.size());
      loss /= static_cast<double>(starts.size());
      if (!std::isfinite(loss))
        throw std::runtime_error("train: NaN loss at epoch " +
                                 std::to_string(epoch) + " iteration " +
                                 std::to_string(iteration));
      history.loss.push_back(loss);

      const double norm = std::sqrt(batch.squared_norm());
      if (norm > cfg.gradient_threshold) batch *= cfg.gradient_threshold / norm;
      history.max_clipped_gradient_norm = std::max(
          history.max_clipped_gradient_norm, std::sqrt(batch.squared_norm()));

      ++adam_t;
      const double bc1 = 1.0 - std::pow(beta1, adam_t);
      const double bc2 = 1.0 - std::pow(beta2, adam_t);
      auto update = [&](MatX& w, MatX& mm, MatX& vv, const MatX& gg) {
        mm = beta1 * mm + (1.0 - beta1) * gg;
        vv = beta2 * vv + (1.0 - beta2) * gg.array().square().matrix();
        w.array() -= lr * (mm.array() / bc1) /
                     ((vv.array() / bc2).sqrt() + eps);
      };
      auto update_v = [&](VecX& w, VecX& mm, VecX& vv, const VecX& gg) {
        mm = beta1 * mm + (1.0 - beta1) * gg;
        vv = beta2 * vv + (1.0 - beta2) * gg.array().square().matrix();
        w.array() -= lr * (mm.array() / bc1) /
                     ((vv.array() / bc2).sqrt() + eps);
      };
      update(m.w_x, mom.w_x, vel.w_x, batch.w_x);
      update(m.w_h, mom.w_h, vel.w_h, batch.w_h);
      update_v(m.b, mom.b, vel.b, batch.b);
      update(m.w_y, mom.w_y, vel.w_y, batch.w_y);
      update_v(m.b_y, mom.b_y, vel.b_y, batch.b_y);

      if (iteration % cfg.validation_frequency == 0)
        history.validation.emplace_back(iteration, validation_rmse(m, data));
    }
  }
  history.final_validation_rmse = validation_rmse(m, data);
  return history;
}

ForceEstimate estimate_forces(const LstmModel& m, const MatX& imu_window) {
  if (imu_window.cols() != m.input_size)
    throw std::invalid_argument("estimate_forces: wrong input width");
  MatX normalized =
      (imu_window.rowwise() - m.in_mean.transpose()).array().rowwise() /
      m.in_std.transpose().array();
  ForceEstimate est;
  est.suspicious_input = normalized.array().abs().maxCoeff() > 10.0;
  const ForwardCache cache = forward(m, normalized);
  const VecX last = cache.y.row(cache.y.rows() - 1).transpose();
  const VecX denorm =
      (last.array() * m.out_std.array() + m.out_mean.array()).matrix();
  est.fx = denorm.head<4>();
  est.fy = denorm.segment<4>(4);
  return est;
}

StreamingEstimator::StreamingEstimator(const LstmModel& m)
    : m_(&m), state_(initial_state(m)) {}

void StreamingEstimator::reset() {
  state_ = initial_state(*m_);
  samples_seen_ = 0;
}

ForceEstimate StreamingEstimator::push(const VecX& imu_raw) {
  const VecX normalized =
      ((imu_raw - m_->in_mean).array() / m_->in_std.array()).matrix();
  ForceEstimate est;
  est.suspicious_input = normalized.array().abs().maxCoeff() > 10.0;
  const VecX y = step(*m_, state_, normalized);
  ++samples_seen_;
  const VecX denorm =
      (y.array() * m_->out_std.array() + m_->out_mean.array()).matrix();
  est.fx = denorm.head<4>();
  est.fy = denorm.segment<4>(4);
  return est;
}

void save_model(const std::string& path, const LstmModel& m) {
  nlohmann::json j;
  j["format"] = "fourwisd-lstm-v1";
  j["input_size"] = m.input_size;
  j["hidden_size"] = m.hidden_size;
  j["output_size"] = m.output_size;
  j["w_x"] = matrix_to_json(m.w_x);
  j["w_h"] = matrix_to_json(m.w_h);
  j["b"] = vector_to_json(m.b);
  j["w_y"] = matrix_to_json(m.w_y);
  j["b_y"] = vector_to_json(m.b_y);
  j["in_mean"] = vector_to_json(m.in_mean);
  j["in_std"] = vector_to_json(m.in_std);
  j["out_mean"] = vector_to_json(m.out_mean);
  j["out_std"] = vector_to_json(m.out_std);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model file: " + path);
  out << j.dump(1);
}

LstmModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read model file: " + path);
  nlohmann::json j;
  in >> j;
  if (j.value("format", "") != "fourwisd-lstm-v1")
    throw std::runtime_error("unrecognized model format in " + path);
  LstmModel m;
  m.input_size = j.at("input_size").get<int>();
  m.hidden_size = j.at("hidden_size").get<int>();
  m.output_size = j.at("output_size").get<int>();
  m.w_x = matrix_from_json(j.at("w_x"));
  m.w_h = matrix_from_json(j.at("w_h"));
  m.b = vector_from_json(j.at("b"));
  m.w_y = matrix_from_json(j.at("w_y"));
  m.b_y = vector_from_json(j.at("b_y"));
  m.in_mean = vector_from_json(j.at("in_mean"));
  m.in_std = vector_from_json(j.at("in_std"));
  m.out_mean = vector_from_json(j.at("out_mean"));
  m.out_std = vector_from_json(j.at("out_std"));
  if (m.w_x.rows() != 4 * m.hidden_size || m.w_x.cols() != m.input_size ||
      m.w_h.cols() != m.hidden_size || m.w_y.rows() != m.output_size ||
      (m.in_std.array() <= 0).any() || (m.out_std.array() <= 0).any())
    throw std::runtime_error("inconsistent model file: " + path);
  return m;
}

}  // namespace fourwisd::nn
