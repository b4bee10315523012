#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "fourwisd/lstm.hpp"

using namespace fourwisd;
using namespace fourwisd::nn;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Plain scalar transcription of the cell recursion, used as an independent
// check on the library forward pass.
MatX naive_forward(const LstmModel& m, const MatX& seq) {
  const int t_len = static_cast<int>(seq.rows());
  const int hs = m.hidden_size;
  std::vector<double> h(hs, 0.0), c(hs, 0.0);
  MatX y(t_len, m.output_size);
  for (int t = 0; t < t_len; ++t) {
    std::vector<double> h_new(hs), c_new(hs);
    for (int k = 0; k < hs; ++k) {
      double zi = m.b[k], zf = m.b[hs + k], zg = m.b[2 * hs + k],
             zo = m.b[3 * hs + k];
      for (int j = 0; j < m.input_size; ++j) {
        zi += m.w_x(k, j) * seq(t, j);
        zf += m.w_x(hs + k, j) * seq(t, j);
        zg += m.w_x(2 * hs + k, j) * seq(t, j);
        zo += m.w_x(3 * hs + k, j) * seq(t, j);
      }
      for (int j = 0; j < hs; ++j) {
        zi += m.w_h(k, j) * h[j];
        zf += m.w_h(hs + k, j) * h[j];
        zg += m.w_h(2 * hs + k, j) * h[j];
        zo += m.w_h(3 * hs + k, j) * h[j];
      }
      c_new[k] = sigmoid(zf) * c[k] + sigmoid(zi) * std::tanh(zg);
      h_new[k] = sigmoid(zo) * std::tanh(c_new[k]);
    }
    h = h_new;
    c = c_new;
    for (int o = 0; o < m.output_size; ++o) {
      double acc = m.b_y[o];
      for (int j = 0; j < hs; ++j) acc += m.w_y(o, j) * h[j];
      y(t, o) = acc;
    }
  }
  return y;
}

MatX random_sequence(int t_len, int width, std::mt19937& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  MatX seq(t_len, width);
  for (int t = 0; t < t_len; ++t)
    for (int j = 0; j < width; ++j) seq(t, j) = n(rng);
  return seq;
}

struct ParamRef {
  double* value;
  double* grad;
};

std::vector<ParamRef> all_params(LstmModel& m, Gradients& g) {
  std::vector<ParamRef> refs;
  auto add_mat = [&](MatX& w, MatX& gw) {
    for (Eigen::Index i = 0; i < w.size(); ++i)
      refs.push_back({w.data() + i, gw.data() + i});
  };
  auto add_vec = [&](VecX& w, VecX& gw) {
    for (Eigen::Index i = 0; i < w.size(); ++i)
      refs.push_back({w.data() + i, gw.data() + i});
  };
  add_mat(m.w_x, g.w_x);
  add_mat(m.w_h, g.w_h);
  add_vec(m.b, g.b);
  add_mat(m.w_y, g.w_y);
  add_vec(m.b_y, g.b_y);
  return refs;
}

}  // namespace

TEST_SUITE("lstm") {

TEST_CASE("zero model maps every sequence to the head bias") {
  std::mt19937 rng(1);
  LstmModel m = make_model(5, 4, 8, rng);
  m.w_x.setZero();
  m.w_h.setZero();
  m.b.setZero();
  m.w_y.setZero();
  m.b_y.setZero();
  const MatX seq = random_sequence(7, 5, rng);
  const ForwardCache cache = forward(m, seq);
  CHECK(cache.y.norm() == 0.0);
  CHECK(cache.h.norm() == 0.0);
  m.b_y.setConstant(0.25);
  const ForwardCache cache2 = forward(m, seq);
  CHECK((cache2.y.array() - 0.25).abs().maxCoeff() == 0.0);
}

TEST_CASE("first-step output is causal") {
  std::mt19937 rng(2);
  LstmModel m = make_model(5, 6, 8, rng);
  const MatX seq2 = random_sequence(2, 5, rng);
  const MatX seq1 = seq2.topRows(1);
  const ForwardCache c1 = forward(m, seq1);
  const ForwardCache c2 = forward(m, seq2);
  CHECK((c1.y.row(0) - c2.y.row(0)).norm() == 0.0);
}

TEST_CASE("forward matches an independent scalar transcription") {
  std::mt19937 rng(3);
  LstmModel m = make_model(5, 4, 8, rng);
  const MatX seq = random_sequence(5, 5, rng);
  const ForwardCache cache = forward(m, seq);
  const MatX naive = naive_forward(m, seq);
  CHECK((cache.y - naive).array().abs().maxCoeff() < 1e-12);
}

TEST_CASE("streaming steps reproduce the full-sequence forward exactly") {
  std::mt19937 rng(4);
  LstmModel m = make_model(5, 8, 8, rng);
  const MatX seq = random_sequence(40, 5, rng);
  const ForwardCache cache = forward(m, seq);
  LstmState state = initial_state(m);
  for (int t = 0; t < 40; ++t) {
    const VecX y = step(m, state, seq.row(t).transpose());
    CHECK((y.transpose() - cache.y.row(t)).norm() == 0.0);
  }
}

TEST_CASE("perfect predictions give zero gradients") {
  std::mt19937 rng(5);
  LstmModel m = make_model(5, 4, 8, rng);
  const MatX seq = random_sequence(6, 5, rng);
  const ForwardCache cache = forward(m, seq);
  const Gradients g = backward(m, cache, cache.y);
  CHECK(std::sqrt(g.squared_norm()) == 0.0);
}

TEST_CASE("gradients match central finite differences") {
  std::mt19937 rng(6);
  LstmModel m = make_model(5, 4, 8, rng);
  const MatX seq = random_sequence(5, 5, rng);
  const MatX target = random_sequence(5, 8, rng);
  const ForwardCache cache = forward(m, seq);
  Gradients g = backward(m, cache, target);

  const double h = 1e-5;
  int checked = 0;
  for (ParamRef ref : all_params(m, g)) {
    const double saved = *ref.value;
    *ref.value = saved + h;
    const double lp = mse_loss(forward(m, seq).y, target);
    *ref.value = saved - h;
    const double lm = mse_loss(forward(m, seq).y, target);
    *ref.value = saved;
    const double fd = (lp - lm) / (2 * h);
    const double scale = std::max({1e-6, std::abs(fd), std::abs(*ref.grad)});
    CHECK(std::abs(*ref.grad - fd) / scale < 1e-4);
    ++checked;
  }
  CHECK(checked == 4 * 4 * 5 + 4 * 4 * 4 + 4 * 4 + 8 * 4 + 8);
}

TEST_CASE("summed gradients are additive across duplicated sequences") {
  std::mt19937 rng(7);
  LstmModel m = make_model(5, 4, 8, rng);
  const MatX seq = random_sequence(6, 5, rng);
  const MatX target = random_sequence(6, 8, rng);
  const ForwardCache cache = forward(m, seq);
  Gradients once = backward(m, cache, target);
  Gradients twice = backward(m, cache, target);
  twice += once;
  Gradients doubled = backward(m, cache, target);
  doubled *= 2.0;
  CHECK(std::sqrt((twice.w_x - doubled.w_x).squaredNorm()) < 1e-14);
  CHECK(std::abs(std::sqrt(twice.squared_norm()) -
                 std::sqrt(doubled.squared_norm())) < 1e-12);
}

TEST_CASE("learning-rate schedule drops by the factor each period") {
  TrainConfig cfg;  // full-scale defaults
  CHECK(cfg.max_epochs == 508);
  CHECK(cfg.validation_frequency == 10);
  CHECK(cfg.gradient_threshold == doctest::Approx(0.886));
  CHECK(cfg.initial_learning_rate == doctest::Approx(0.0039));
  CHECK(cfg.lr_drop_period == 162);
  CHECK(cfg.lr_drop_factor == doctest::Approx(0.386));
  CHECK(cfg.mini_batch_size == 116);
  CHECK(cfg.sequence_length == 6553);
  CHECK(learning_rate(cfg, 1) == doctest::Approx(0.0039));
  CHECK(learning_rate(cfg, 162) == doctest::Approx(0.0039));
  CHECK(learning_rate(cfg, 163) == doctest::Approx(0.0039 * 0.386));
  CHECK(learning_rate(cfg, 325) == doctest::Approx(0.0039 * 0.386 * 0.386));
}

TEST_CASE("training fits constant-zero targets and respects the clip") {
  std::mt19937 rng(8);
  LstmModel m = make_model(3, 4, 2, rng);
  Dataset data;
  data.n_train = 400;
  data.n_test = 0;
  data.n_validation = 50;
  data.inputs = random_sequence(450, 3, rng);
  data.targets = MatX::Zero(450, 2);
  data.in_mean = VecX::Zero(3);
  data.in_std = VecX::Ones(3);
  data.out_mean = VecX::Zero(2);
  data.out_std = VecX::Ones(2);

  TrainConfig cfg;
  cfg.max_epochs = 50;
  cfg.validation_frequency = 25;
  cfg.gradient_threshold = 1.0;
  cfg.initial_learning_rate = 0.01;
  cfg.lr_drop_period = 15;
  cfg.lr_drop_factor = 0.3;
  cfg.mini_batch_size = 8;
  cfg.sequence_length = 32;

  const TrainHistory hist = train(m, data, cfg, rng);
  CHECK(std::sqrt(hist.loss.back()) < 1e-3);
  CHECK(hist.max_clipped_gradient_norm <= cfg.gradient_threshold + 1e-12);
  CHECK(hist.loss.size() == 50u * (400 / (8 * 8)));
  CHECK(!hist.validation.empty());
  CHECK(hist.final_validation_rmse < 1e-3);
  // Iteration indices of validation entries honor the frequency.
  for (const auto& [it, rmse] : hist.validation) {
    CHECK(it % cfg.validation_frequency == 0);
    CHECK(rmse >= 0.0);
  }
}

TEST_CASE("desk dataset has the documented shape and normalization") {
  std::mt19937 rng(9);
  const VehicleParams p = default_params();
  DatasetConfig dc = desk_dataset_config();
  dc.n_train = 3000;
  dc.n_test = 600;
  dc.n_validation = 400;
  const Dataset data = generate_dataset(p, dc, rng);
  CHECK(data.total() == 4000);
  CHECK(data.inputs.rows() == 4000);
  CHECK(data.inputs.cols() == 5);
  CHECK(data.targets.cols() == 8);
  // Training split is standardized per channel by construction.
  const MatX train_in = data.inputs.topRows(data.n_train);
  for (int c = 0; c < 5; ++c) {
    CHECK(std::abs(train_in.col(c).mean()) < 1e-9);
    const double var = train_in.col(c).array().square().mean() -
                       std::pow(train_in.col(c).mean(), 2);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-6));
  }
  for (int c = 0; c < 8; ++c) CHECK(data.out_std[c] > 0.0);
  // The forces actually vary — the excitation is doing its job.
  for (int c = 0; c < 8; ++c) CHECK(data.out_std[c] > 1.0);
}

TEST_CASE("zero window through a zero-weight model returns zero forces") {
  std::mt19937 rng(10);
  LstmModel m = make_model(5, 4, 8, rng);
  m.w_x.setZero();
  m.w_h.setZero();
  m.b.setZero();
  m.w_y.setZero();
  m.b_y.setZero();
  const ForceEstimate est = estimate_forces(m, MatX::Zero(10, 5));
  CHECK(est.fx.norm() == 0.0);
  CHECK(est.fy.norm() == 0.0);
  CHECK_FALSE(est.suspicious_input);
}

TEST_CASE("wild inputs raise the suspicious flag") {
  std::mt19937 rng(11);
  LstmModel m = make_model(5, 4, 8, rng);
  MatX window = MatX::Zero(5, 5);
  window(3, 2) = 25.0;  // 25 sigma against unit normalization
  const ForceEstimate est = estimate_forces(m, window);
  CHECK(est.suspicious_input);
}

TEST_CASE("streaming estimator warms up and matches batch inference") {
  std::mt19937 rng(12);
  LstmModel m = make_model(5, 6, 8, rng);
  m.in_mean.setConstant(0.1);
  m.in_std.setConstant(2.0);
  m.out_mean.setConstant(50.0);
  m.out_std.setConstant(300.0);
  const MatX window = random_sequence(StreamingEstimator::kWarmupSamples + 20,
                                      5, rng);
  StreamingEstimator stream(m);
  CHECK_FALSE(stream.ready());
  ForceEstimate last;
  for (Eigen::Index t = 0; t < window.rows(); ++t)
    last = stream.push(window.row(t).transpose());
  CHECK(stream.ready());
  const ForceEstimate batch = estimate_forces(m, window);
  CHECK((last.fx - batch.fx).norm() < 1e-12);
  CHECK((last.fy - batch.fy).norm() < 1e-12);
  stream.reset();
  CHECK_FALSE(stream.ready());
}

TEST_CASE("checkpoint round trip preserves weights and statistics") {
  std::mt19937 rng(13);
  LstmModel m = make_model(5, 6, 8, rng);
  m.in_mean.setRandom();
  m.in_std = (m.in_std.array() + 1.5).matrix();
  m.out_mean.setRandom();
  const std::string path = "lstm_roundtrip_test.json";
  save_model(path, m);
  const LstmModel back = load_model(path);
  std::remove(path.c_str());
  CHECK(back.hidden_size == 6);
  CHECK((back.w_x - m.w_x).norm() == 0.0);
  CHECK((back.w_h - m.w_h).norm() == 0.0);
  CHECK((back.b - m.b).norm() == 0.0);
  CHECK((back.w_y - m.w_y).norm() == 0.0);
  CHECK((back.b_y - m.b_y).norm() == 0.0);
  CHECK((back.in_mean - m.in_mean).norm() == 0.0);
  CHECK((back.in_std - m.in_std).norm() == 0.0);
  CHECK((back.out_mean - m.out_mean).norm() == 0.0);
  CHECK((back.out_std - m.out_std).norm() == 0.0);
}

TEST_CASE("trained desk model beats the constant-mean lateral predictor") {
  std::mt19937 rng(14);
  const VehicleParams p = default_params();
  const Dataset data = generate_dataset(p, desk_dataset_config(), rng);

  LstmModel m = make_model(5, kDeskHiddenSize, 8, rng);
  m.in_mean = data.in_mean;
  m.in_std = data.in_std;
  m.out_mean = data.out_mean;
  m.out_std = data.out_std;

  TrainConfig cfg = desk_train_config();
  cfg.max_epochs = 20;
  const TrainHistory hist = train(m, data, cfg, rng);

  // Held-out test split, per-channel RMSE against the split's own std (the
  // constant-mean predictor scores 1.0). The lateral channels must win; the
  // longitudinal ones are only weakly observable from a 5-channel IMU (no
  // direct accelerations), so they just get a looseness bound.
  const MatX test_in = data.inputs.middleRows(data.n_train, data.n_test);
  const MatX test_tgt = data.targets.middleRows(data.n_train, data.n_test);
  const ForwardCache cache = forward(m, test_in);
  for (int c = 0; c < 8; ++c) {
    const double rmse = std::sqrt(
        (cache.y.col(c) - test_tgt.col(c)).squaredNorm() / test_tgt.rows());
    const double target_std = std::sqrt(test_tgt.col(c).array().square().mean() -
                                        std::pow(test_tgt.col(c).mean(), 2));
    if (c >= 4)
      CHECK(rmse < target_std);
    else
      CHECK(rmse < 2.0 * target_std);
  }
  CHECK(hist.final_validation_rmse < 2.5);
}

}  // TEST_SUITE
