// Command-line front end: closed-loop runs, dataset generation, network
// training, hyperparameter search, the six-run estimator comparison and SVG
// rendering of previously written logs.
//
// Exit codes: 0 success, 2 configuration error (bad flags, unreadable or
// inconsistent inputs), 3 numerical failure (diverged run, failed solve,
// non-finite training loss).

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fourwisd/bayes_opt.hpp"
#include "fourwisd/csv.hpp"
#include "fourwisd/harness.hpp"
#include "fourwisd/lstm.hpp"
#include "fourwisd/plant.hpp"
#include "fourwisd/svg.hpp"

using namespace fourwisd;
namespace fs = std::filesystem;
namespace hn = fourwisd::harness;

namespace {

constexpr const char* kUsage = R"(usage: fourwisd <command> [flags]

commands
  simulate   run one closed-loop scenario and write its logs
  gen-data   drive the excitation protocol and write a training dataset
  train      fit the force network on a generated dataset
  tune       Bayesian search over the eight training hyperparameters
  suite      the {ekf, lstm} x {none, case1, case2} comparison runs
  plot       re-render SVG figures from CSV logs in the output directory

common flags
  --preset <desk|paper>    problem scale (default desk)
  --scenario <file.json>   load a scenario file instead of a preset
  --out <dir>              output directory (default out)
  --seed <u64>             override the scenario / generator seed
  --help                   this text

per command
  simulate  --estimator <truth|ekf|lstm>  --noise <none|case1|case2>
            --model <model.json>
  train     --data <dir written by gen-data>  --epochs <n>  --hidden <n>
            --model-out <file.json>
  tune      --budget <n evaluations, default 100>
  suite     --model <model.json>

exit codes: 0 success, 2 configuration error, 3 numerical failure
)";

struct Args {
  std::string command;
  std::map<std::string, std::string> flags;
};

const std::map<std::string, std::set<std::string>> kCommandFlags = {
    {"simulate",
     {"--preset", "--scenario", "--out", "--seed", "--estimator", "--noise",
      "--model"}},
    {"gen-data", {"--preset", "--out", "--seed"}},
    {"train",
     {"--preset", "--out", "--seed", "--data", "--epochs", "--hidden",
      "--model-out"}},
    {"tune", {"--preset", "--out", "--seed", "--budget"}},
    {"suite", {"--preset", "--scenario", "--out", "--seed", "--model"}},
    {"plot", {"--out"}},
};

// Thrown for anything the user can fix from the command line; mapped to
// exit code 2 while every other failure maps to 3.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

Args parse_args(int argc, char** argv) {
  Args a;
  if (argc < 2) throw UsageError("missing command");
  a.command = argv[1];
  if (a.command == "--help" || a.command == "-h") {
    a.command = "help";
    return a;
  }
  const auto it = kCommandFlags.find(a.command);
  if (it == kCommandFlags.end())
    throw UsageError("unknown command '" + a.command + "'");
  for (int i = 2; i < argc; ++i) {
    const std::string flag = argv[i];
    if (flag == "--help" || flag == "-h") {
      a.command = "help";
      return a;
    }
    if (!it->second.count(flag))
      throw UsageError("unknown flag '" + flag + "' for " + a.command);
    if (i + 1 >= argc) throw UsageError("flag '" + flag + "' needs a value");
    a.flags[flag] = argv[++i];
  }
  return a;
}

std::string flag_or(const Args& a, const std::string& name,
                    const std::string& fallback) {
  const auto it = a.flags.find(name);
  return it == a.flags.end() ? fallback : it->second;
}

std::uint64_t flag_u64(const Args& a, const std::string& name,
                       std::uint64_t fallback) {
  const auto it = a.flags.find(name);
  if (it == a.flags.end()) return fallback;
  try {
    size_t used = 0;
    const std::uint64_t v = std::stoull(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw UsageError("flag '" + name + "' needs an unsigned integer, got '" +
                     it->second + "'");
  }
}

int flag_int(const Args& a, const std::string& name, int fallback) {
  const std::uint64_t v =
      flag_u64(a, name, static_cast<std::uint64_t>(fallback));
  if (v > 1000000) throw UsageError("flag '" + name + "' is implausibly big");
  return static_cast<int>(v);
}

std::string preset_of(const Args& a) {
  const std::string p = flag_or(a, "--preset", "desk");
  if (p != "desk" && p != "paper")
    throw UsageError("unknown preset '" + p + "' (expected desk or paper)");
  return p;
}

fs::path out_dir(const Args& a) { return flag_or(a, "--out", "out"); }

hn::Scenario load_scenario(const Args& a) {
  hn::Scenario s;
  if (const auto it = a.flags.find("--scenario"); it != a.flags.end()) {
    std::ifstream in(it->second);
    if (!in.good())
      throw UsageError("cannot open scenario file '" + it->second + "'");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw UsageError("scenario file '" + it->second + "': " + e.what());
    }
    s = hn::scenario_from_json(j);
  } else {
    s = preset_of(a) == "paper" ? hn::paper_scenario() : hn::desk_scenario();
  }
  s.seed = flag_u64(a, "--seed", s.seed);
  if (const auto it = a.flags.find("--estimator"); it != a.flags.end())
    s.estimator = hn::estimator_from_string(it->second);
  if (const auto it = a.flags.find("--noise"); it != a.flags.end())
    s.noise = hn::noise_from_string(it->second);
  if (const auto it = a.flags.find("--model"); it != a.flags.end())
    s.model_path = it->second;
  return s;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out.good())
    throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// ---------------------------------------------------------------------------
// simulate

int cmd_simulate(const Args& a) {
  const hn::Scenario s = load_scenario(a);
  const fs::path dir = out_dir(a);
  fs::create_directories(dir);

  const hn::RunResult r = hn::run_closed_loop(s);
  csv::write_table((dir / "trajectory.csv").string(), hn::trajectory_table(r));
  csv::write_table((dir / "estimates.csv").string(), hn::estimate_table(r));
  csv::write_table((dir / "mpc.csv").string(), hn::mpc_table(r));
  csv::write_table((dir / "dyc.csv").string(), hn::dyc_table(r));
  write_text(dir / "metrics.json", hn::run_json_text(s, r));

  std::printf(
      "%s/%s: %d steps, max departure %.3f m, controller %.2f ms mean / "
      "%.2f ms max -> %s\n",
      hn::name(s.estimator), hn::name(s.noise), r.steps_completed,
      r.metrics.max_departure, 1e3 * r.controller_seconds_mean,
      1e3 * r.controller_seconds_max, dir.string().c_str());
  if (r.failed) {
    std::fprintf(stderr, "run failed: %s\n", r.failure_reason.c_str());
    return 3;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// gen-data / train: dataset files
//
// A dataset directory holds data.csv (normalized input and target streams,
// train rows first, then test, then validation) and manifest.json (split
// sizes and the normalization statistics needed to undo the scaling).

const std::vector<std::string> kInputNames = {
    "in_roll_rate", "in_pitch_rate", "in_yaw_rate", "in_roll_angle",
    "in_yaw_angle"};
const std::vector<std::string> kTargetNames = {
    "out_fx_FL", "out_fx_FR", "out_fx_RL", "out_fx_RR",
    "out_fy_FL", "out_fy_FR", "out_fy_RL", "out_fy_RR"};

nn::DatasetConfig dataset_config_of(const std::string& preset) {
  return preset == "paper" ? nn::DatasetConfig{} : nn::desk_dataset_config();
}

nlohmann::json vec_json(const VecX& v) {
  nlohmann::json j = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

VecX vec_from_json(const nlohmann::json& j) {
  VecX v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i];
  return v;
}

void save_dataset(const fs::path& dir, const nn::Dataset& data,
                  const std::string& preset, std::uint64_t seed) {
  fs::create_directories(dir);
  csv::Table t;
  t.header = kInputNames;
  t.header.insert(t.header.end(), kTargetNames.begin(), kTargetNames.end());
  t.rows.reserve(static_cast<size_t>(data.total()));
  for (Eigen::Index r = 0; r < data.inputs.rows(); ++r) {
    std::vector<double> row;
    row.reserve(t.header.size());
    for (Eigen::Index c = 0; c < data.inputs.cols(); ++c)
      row.push_back(data.inputs(r, c));
    for (Eigen::Index c = 0; c < data.targets.cols(); ++c)
      row.push_back(data.targets(r, c));
    t.rows.push_back(std::move(row));
  }
  csv::write_table((dir / "data.csv").string(), t);

  nlohmann::json m;
  m["preset"] = preset;
  m["seed"] = seed;
  m["data"] = "data.csv";
  m["splits"] = {{"train", data.n_train},
                 {"test", data.n_test},
                 {"validation", data.n_validation}};
  m["inputs"] = kInputNames;
  m["targets"] = kTargetNames;
  m["normalization"] = {{"in_mean", vec_json(data.in_mean)},
                        {"in_std", vec_json(data.in_std)},
                        {"out_mean", vec_json(data.out_mean)},
                        {"out_std", vec_json(data.out_std)}};
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

nn::Dataset load_dataset(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in.good())
    throw UsageError("no dataset manifest in '" + dir.string() +
                     "' (run gen-data first or pass --data)");
  const nlohmann::json m = nlohmann::json::parse(in);
  const csv::Table t =
      csv::read_table((dir / m.value("data", "data.csv")).string());
  const int ni = static_cast<int>(kInputNames.size());
  const int no = static_cast<int>(kTargetNames.size());
  if (t.columns() != ni + no)
    throw UsageError("dataset table has " + std::to_string(t.columns()) +
                     " columns, expected " + std::to_string(ni + no));
  nn::Dataset data;
  data.n_train = m["splits"]["train"];
  data.n_test = m["splits"]["test"];
  data.n_validation = m["splits"]["validation"];
  if (data.total() != static_cast<int>(t.rows.size()))
    throw UsageError("dataset rows disagree with the manifest splits");
  data.inputs.resize(t.rows.size(), ni);
  data.targets.resize(t.rows.size(), no);
  for (size_t r = 0; r < t.rows.size(); ++r) {
    for (int c = 0; c < ni; ++c)
      data.inputs(static_cast<Eigen::Index>(r), c) = t.rows[r][c];
    for (int c = 0; c < no; ++c)
      data.targets(static_cast<Eigen::Index>(r), c) =
          t.rows[r][static_cast<size_t>(ni + c)];
  }
  const auto& norm = m["normalization"];
  data.in_mean = vec_from_json(norm["in_mean"]);
  data.in_std = vec_from_json(norm["in_std"]);
  data.out_mean = vec_from_json(norm["out_mean"]);
  data.out_std = vec_from_json(norm["out_std"]);
  return data;
}

int cmd_gen_data(const Args& a) {
  const std::string preset = preset_of(a);
  const nn::DatasetConfig cfg = dataset_config_of(preset);
  const std::uint64_t seed = flag_u64(a, "--seed", 1);
  std::mt19937 rng(static_cast<std::mt19937::result_type>(seed));
  const nn::Dataset data = nn::generate_dataset(default_params(), cfg, rng);
  const fs::path dir = out_dir(a);
  save_dataset(dir, data, preset, seed);
  std::printf("dataset: %d/%d/%d train/test/validation samples -> %s\n",
              data.n_train, data.n_test, data.n_validation,
              (dir / "manifest.json").string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// train

int cmd_train(const Args& a) {
  const std::string preset = preset_of(a);
  const std::uint64_t seed = flag_u64(a, "--seed", 1);
  const fs::path dir = out_dir(a);
  fs::create_directories(dir);

  nn::Dataset data;
  if (const auto it = a.flags.find("--data"); it != a.flags.end()) {
    data = load_dataset(it->second);
  } else if (fs::exists(dir / "manifest.json")) {
    data = load_dataset(dir);
  } else {
    std::printf("no dataset found, generating the %s one\n", preset.c_str());
    std::mt19937 rng(static_cast<std::mt19937::result_type>(seed));
    data = nn::generate_dataset(default_params(), dataset_config_of(preset),
                                rng);
  }

  nn::TrainConfig cfg =
      preset == "paper" ? nn::TrainConfig{} : nn::desk_train_config();
  cfg.max_epochs = flag_int(a, "--epochs", cfg.max_epochs);
  const int hidden =
      flag_int(a, "--hidden", preset == "paper" ? 128 : nn::kDeskHiddenSize);

  std::mt19937 rng(static_cast<std::mt19937::result_type>(seed) + 1);
  nn::LstmModel model = nn::make_model(5, hidden, 8, rng);
  const nn::TrainHistory hist = nn::train(model, data, cfg, rng);

  const fs::path model_path =
      flag_or(a, "--model-out", (dir / "model.json").string());
  nn::save_model(model_path.string(), model);

  csv::Table loss;
  loss.header = {"iteration", "loss"};
  for (size_t i = 0; i < hist.loss.size(); ++i)
    loss.rows.push_back({static_cast<double>(i + 1), hist.loss[i]});
  csv::write_table((dir / "training_history.csv").string(), loss);
  csv::Table val;
  val.header = {"iteration", "validation_rmse"};
  for (const auto& [it, rmse] : hist.validation)
    val.rows.push_back({static_cast<double>(it), rmse});
  csv::write_table((dir / "validation_history.csv").string(), val);

  std::printf(
      "trained hidden-%d model for %d epochs: validation RMSE %.4f, peak "
      "clipped gradient norm %.3f -> %s\n",
      hidden, cfg.max_epochs, hist.final_validation_rmse,
      hist.max_clipped_gradient_norm, model_path.string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// tune

nn::TrainConfig config_from_point(const VecX& x) {
  nn::TrainConfig c;
  c.max_epochs = static_cast<int>(std::lround(x[0]));
  c.validation_frequency = static_cast<int>(std::lround(x[1]));
  c.gradient_threshold = x[2];
  c.initial_learning_rate = x[3];
  c.lr_drop_period = static_cast<int>(std::lround(x[4]));
  c.lr_drop_factor = x[5];
  c.mini_batch_size = static_cast<int>(std::lround(x[6]));
  c.sequence_length = static_cast<int>(std::lround(x[7]));
  return c;
}

int cmd_tune(const Args& a) {
  const std::string preset = preset_of(a);
  const int budget = flag_int(a, "--budget", 100);
  if (budget < 1) throw UsageError("--budget must be at least 1");
  const std::uint64_t seed = flag_u64(a, "--seed", 1);
  const fs::path dir = out_dir(a);
  fs::create_directories(dir);

  // The search trains on a reduced split so one evaluation stays cheap; the
  // winning configuration is meant to be re-trained on the full dataset.
  nn::DatasetConfig dc = dataset_config_of(preset);
  if (preset == "desk") {
    dc.n_train = 3000;
    dc.n_test = 600;
    dc.n_validation = 400;
  }
  std::mt19937 rng(static_cast<std::mt19937::result_type>(seed));
  std::printf("generating the %s tuning dataset (%d samples)\n",
              preset.c_str(), dc.n_train + dc.n_test + dc.n_validation);
  const nn::Dataset data = nn::generate_dataset(default_params(), dc, rng);

  const bo::SearchSpace space = preset == "paper"
                                    ? bo::lstm_search_space()
                                    : bo::desk_lstm_search_space();
  const int hidden = preset == "paper" ? 128 : nn::kDeskHiddenSize;
  const std::uint32_t eval_seed =
      static_cast<std::mt19937::result_type>(seed) * 2654435761u + 1u;
  int evals = 0;
  const auto objective = [&](const VecX& x) {
    std::mt19937 local(eval_seed);  // same init/batches for every candidate
    nn::LstmModel model = nn::make_model(5, hidden, 8, local);
    const nn::TrainHistory h =
        nn::train(model, data, config_from_point(x), local);
    std::printf("  eval %3d/%d: validation RMSE %.4f\n", ++evals, budget,
                h.final_validation_rmse);
    std::fflush(stdout);
    return h.final_validation_rmse;
  };

  const bo::BoResult res = bo::optimize(objective, space, budget, rng);

  csv::Table hist;
  hist.header = {"iter"};
  for (const auto& dim : space.dims) hist.header.push_back(dim.name);
  hist.header.push_back("objective");
  hist.header.push_back("incumbent");
  for (size_t i = 0; i < res.history.size(); ++i) {
    const bo::HistoryEntry& e = res.history[i];
    std::vector<double> row{static_cast<double>(i + 1)};
    for (Eigen::Index d = 0; d < e.point.size(); ++d) row.push_back(e.point[d]);
    row.push_back(e.value);
    row.push_back(e.incumbent);
    hist.rows.push_back(std::move(row));
  }
  csv::write_table((dir / "tune_history.csv").string(), hist);

  std::printf("best validation RMSE %.4f with:\n", res.best_value);
  for (int d = 0; d < space.size(); ++d)
    std::printf("  %-22s %g\n", space.dims[static_cast<size_t>(d)].name.c_str(),
                res.best_point[d]);
  std::printf("history -> %s\n", (dir / "tune_history.csv").string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// suite

int cmd_suite(const Args& a) {
  const hn::Scenario s = load_scenario(a);
  const fs::path dir = out_dir(a);
  const hn::SuiteReport rep = hn::run_experiment_suite(s, dir.string());
  for (const hn::SuiteRun& run : rep.runs)
    std::printf("  %-5s %-6s departure %6.3f m  %s\n", hn::name(run.estimator),
                hn::name(run.noise), run.result.metrics.max_departure,
                run.result.failed ? run.result.failure_reason.c_str() : "ok");
  std::printf("report -> %s\n", (dir / "report.md").string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// plot

int column_of(const csv::Table& t, const std::string& name) {
  const auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) return -1;
  return static_cast<int>(it - t.header.begin());
}

std::vector<double> column(const csv::Table& t, int c) {
  std::vector<double> v;
  v.reserve(t.rows.size());
  for (const auto& row : t.rows) v.push_back(row[static_cast<size_t>(c)]);
  return v;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                          "#9467bd", "#ff7f0e", "#8c564b"};

int cmd_plot(const Args& a) {
  const fs::path dir = out_dir(a);
  if (!fs::exists(dir))
    throw UsageError("output directory '" + dir.string() + "' does not exist");

  std::vector<fs::path> trajectories, estimates;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string stem = entry.path().filename().string();
    if (entry.path().extension() != ".csv") continue;
    if (stem.rfind("trajectory", 0) == 0) trajectories.push_back(entry.path());
    if (stem.rfind("estimates", 0) == 0) estimates.push_back(entry.path());
  }
  std::sort(trajectories.begin(), trajectories.end());
  std::sort(estimates.begin(), estimates.end());
  if (trajectories.empty() && estimates.empty())
    throw UsageError("no trajectory/estimates CSVs in '" + dir.string() + "'");

  int written = 0;
  if (!trajectories.empty()) {
    svg::Plot path, phase;
    path.title = "Vehicle path";
    path.x_label = "X [m]";
    path.y_label = "Y [m]";
    phase.title = "Sideslip phase plane";
    phase.x_label = "beta [rad]";
    phase.y_label = "beta rate [rad/s]";
    int color = 0;
    for (const fs::path& file : trajectories) {
      const csv::Table t = csv::read_table(file.string());
      const int cx = column_of(t, "X"), cy = column_of(t, "Y");
      const int ct = column_of(t, "t"), cb = column_of(t, "beta");
      std::string label = file.stem().string();
      if (label.rfind("trajectory_", 0) == 0) label = label.substr(11);
      const char* c = kPalette[color++ % 6];
      if (cx >= 0 && cy >= 0)
        path.add({label, c, column(t, cx), column(t, cy)});
      if (ct >= 0 && cb >= 0 && t.rows.size() > 2) {
        const std::vector<double> tt = column(t, ct), beta = column(t, cb);
        std::vector<double> rate(beta.size());
        for (size_t i = 1; i + 1 < beta.size(); ++i)
          rate[i] = (beta[i + 1] - beta[i - 1]) / (tt[i + 1] - tt[i - 1]);
        rate.front() = (beta[1] - beta[0]) / (tt[1] - tt[0]);
        rate.back() = (beta[beta.size() - 1] - beta[beta.size() - 2]) /
                      (tt[tt.size() - 1] - tt[tt.size() - 2]);
        phase.add({label, c, beta, rate});
      }
    }
    path.write((dir / "path_overlay.svg").string());
    phase.write((dir / "phase_plane.svg").string());
    written += 2;
  }
  if (!estimates.empty()) {
    // Lateral-force traces of the hardest-working wheel, truth vs estimate,
    // from the first estimates table (alphabetical).
    const csv::Table t = csv::read_table(estimates.front().string());
    svg::Plot forces;
    forces.title = "Front-left lateral force: " + estimates.front().stem().string();
    forces.x_label = "t [s]";
    forces.y_label = "force [N]";
    const int ct = column_of(t, "t");
    const int truth = column_of(t, "fy_FL"), est = column_of(t, "fy_hat_FL");
    if (ct >= 0 && truth >= 0 && est >= 0) {
      forces.add({"true", kPalette[0], column(t, ct), column(t, truth)});
      svg::Series s{"estimate", kPalette[1], column(t, ct), column(t, est)};
      s.dashed = true;
      forces.add(s);
      forces.write((dir / "force_traces.svg").string());
      ++written;
    }
  }
  std::printf("wrote %d figures -> %s\n", written, dir.string().c_str());
  return 0;
}

int dispatch(const Args& a) {
  if (a.command == "help") {
    std::fputs(kUsage, stdout);
    return 0;
  }
  if (a.command == "simulate") return cmd_simulate(a);
  if (a.command == "gen-data") return cmd_gen_data(a);
  if (a.command == "train") return cmd_train(a);
  if (a.command == "tune") return cmd_tune(a);
  if (a.command == "suite") return cmd_suite(a);
  if (a.command == "plot") return cmd_plot(a);
  throw UsageError("unknown command '" + a.command + "'");
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(parse_args(argc, argv));
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n\n%s", e.what(), kUsage);
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
