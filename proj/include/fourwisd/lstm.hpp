#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fourwisd/domain.hpp"
#include "fourwisd/plant.hpp"

namespace fourwisd::nn {

// Single-layer LSTM regression network mapping 5 IMU channels to the 8
// per-wheel tire forces [fx FL..RR, fy FL..RR]. Gate rows in every stacked
// matrix are ordered [input; forget; candidate; output], hidden rows each.
struct LstmModel {
  int input_size = 5;
  int hidden_size = 8;
  int output_size = 8;
  MatX w_x;  // (4H) x I
  MatX w_h;  // (4H) x H
  VecX b;    // 4H
  MatX w_y;  // O x H  fully connected head
  VecX b_y;  // O
  // Per-channel statistics from the training split; applied to inputs on the
  // way in and inverted on predictions on the way out.
  VecX in_mean, in_std;    // I
  VecX out_mean, out_std;  // O
};

// Uniform(-1/sqrt(H), 1/sqrt(H)) weights, zero biases except the forget gate
// bias, which starts at 1 so early training does not wash out the cell state.
LstmModel make_model(int input_size, int hidden_size, int output_size,
                     std::mt19937& rng);

// Everything backward needs, retained per step. Matrices are T x H (or T x O
// for predictions); inputs/targets are stored in normalized scale.
struct ForwardCache {
  MatX x;                   // T x I
  MatX gi, gf, gg, go;      // gate activations
  MatX c, h;                // cell and hidden states
  MatX y;                   // T x O predictions
};

// Full-sequence forward pass on a normalized T x I sequence. Throws
// std::runtime_error naming the step index if an activation goes non-finite.
ForwardCache forward(const LstmModel& m, const MatX& sequence);

struct Gradients {
  MatX w_x, w_h;
  VecX b;
  MatX w_y;
  VecX b_y;
  double squared_norm() const;
  Gradients& operator+=(const Gradients& other);
  Gradients& operator*=(double s);
};

Gradients zero_gradients(const LstmModel& m);

// Mean-squared-error loss over all T x O elements (normalized scale).
double mse_loss(const MatX& predictions, const MatX& targets);

// Full backpropagation through time for the MSE-mean loss. Rows before
// loss_start contribute no loss but still carry state: training windows use
// them as burn-in so the cell state at the scored rows matches what the
// streaming estimator would hold, instead of the all-zero state no deployed
// network ever sees.
Gradients backward(const LstmModel& m, const ForwardCache& cache,
                   const MatX& targets, int loss_start = 0);

// Streaming cell state for sample-at-a-time inference; step() must reproduce
// the full-sequence forward exactly.
struct LstmState {
  VecX h, c;
};
LstmState initial_state(const LstmModel& m);
VecX step(const LstmModel& m, LstmState& state, const VecX& input_normalized);

// Training hyperparameters (names follow the tuner's 8-dimensional box).
struct TrainConfig {
  int max_epochs = 508;
  int validation_frequency = 10;  // optimizer iterations between val checks
  double gradient_threshold = 0.886;
  double initial_learning_rate = 0.0039;
  int lr_drop_period = 162;  // epochs
  double lr_drop_factor = 0.386;
  int mini_batch_size = 116;
  int sequence_length = 6553;
};

// Small preset sized so dataset generation + training finish in seconds.
TrainConfig desk_train_config();

// Hidden width paired with the desk presets: wide enough to track the lateral
// forces through the low-friction patch, small enough to train in seconds.
inline constexpr int kDeskHiddenSize = 12;

// Piecewise-constant schedule: the initial rate multiplied by the drop factor
// after every drop period of (1-based) epochs.
double learning_rate(const TrainConfig& cfg, int epoch);

struct TrainHistory {
  std::vector<double> loss;                          // per iteration
  std::vector<std::pair<int, double>> validation;    // (iteration, rmse)
  double final_validation_rmse = 0.0;
  double max_clipped_gradient_norm = 0.0;
};

// Normalized sample streams with contiguous train / test / validation splits.
struct Dataset {
  MatX inputs;   // N x I, normalized
  MatX targets;  // N x O, normalized
  int n_train = 0, n_test = 0, n_validation = 0;
  VecX in_mean, in_std, out_mean, out_std;
  int total() const { return n_train + n_test + n_validation; }
};

struct DatasetConfig {
  int n_train = 90000, n_test = 20000, n_validation = 10000;
  double speed = 22.22;          // m/s held by a proportional cruise torque
  double road_length = 1800.0;   // m
  double low_mu_start = 400.0;   // low-friction patch [start, end]
  double low_mu_end = 700.0;
  double low_mu = 0.2;
  double sample_dt = 0.001;      // 1 kHz recording
};
DatasetConfig desk_dataset_config();

// Drives the plant with multi-sine + lane-pulse steering over the configured
// road, recording IMU channels as inputs and true wheel-frame forces as
// targets; normalization statistics come from the training split only.
Dataset generate_dataset(const VehicleParams& p, const DatasetConfig& cfg,
                         std::mt19937& rng);

// Mini-batch Adam with global-norm clipping and the drop schedule above.
// Throws std::runtime_error naming epoch/iteration if the loss goes NaN.
TrainHistory train(LstmModel& m, const Dataset& data, const TrainConfig& cfg,
                   std::mt19937& rng);

// Validation RMSE on normalized targets, running the validation split as one
// continuous sequence from a fresh state.
double validation_rmse(const LstmModel& m, const Dataset& data);

struct ForceEstimate {
  Vec4 fx = Vec4::Zero();
  Vec4 fy = Vec4::Zero();
  bool suspicious_input = false;  // some |normalized input| > 10
};

// Denormalized last-step prediction for a raw (unnormalized) T x 5 window.
ForceEstimate estimate_forces(const LstmModel& m, const MatX& imu_window);

// Sample-at-a-time wrapper used by the closed loop: feed one raw IMU sample
// per call; outputs are flagged not-ready until the warmup length has passed.
class StreamingEstimator {
 public:
  static constexpr int kWarmupSamples = 200;

  explicit StreamingEstimator(const LstmModel& m);
  ForceEstimate push(const VecX& imu_raw);
  bool ready() const { return samples_seen_ >= kWarmupSamples; }
  void reset();

 private:
  const LstmModel* m_;
  LstmState state_;
  int samples_seen_ = 0;
};

// JSON checkpoint round trip (shapes, weights, normalization statistics).
void save_model(const std::string& path, const LstmModel& m);
LstmModel load_model(const std::string& path);

}  // namespace fourwisd::nn
