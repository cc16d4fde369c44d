#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "quadlearn/config.hpp"
#include "quadlearn/dataset.hpp"
#include "quadlearn/simulate.hpp"
#include "quadlearn/training.hpp"

namespace quadlearn {

// Experiment drivers.  Each is a pure function of (config, seed, out dir):
// rerunning with the same inputs reproduces every CSV byte for byte.  Wall
// clock and latency figures live only in the JSON sidecars.

// Named model roles; msetcn is the pitcn network trained without the physics
// term.
enum class TrainKind { PITCN, MSETCN, RESTCN, PIMLP };

std::string train_kind_to_string(TrainKind k);
TrainKind train_kind_from_string(const std::string& s);
ModelKind network_of(TrainKind k);
LossSchedule default_schedule_of(TrainKind k);

// Deterministic trajectory roster: `count` paths cycling through the family
// list with seeded moderate amplitudes; the last `aggressive` entries are
// faster lemniscate / transposed-parabola analogs.
std::vector<TrajectorySpec> default_roster(int count, int aggressive, double duration,
                                           uint64_t seed);

// Config loaders shared by the drivers (all keys optional unless noted).
ModelSpec model_spec_from_config(const Config& c, TrainKind kind);
TrainConfig train_config_from_config(const Config& c, TrainKind kind, uint64_t seed);
MpcConfig mpc_from_config(const Config& c);
SensorNoise noise_from_config(const Config& c);

// ---- gen-data ----

struct GenDataResult {
  std::filesystem::path dataset_dir;
  std::vector<int> written;  // trajectory ids with a saved log
  std::vector<int> failed;   // divergent flights, reported and skipped
};

GenDataResult run_gen_data(const Config& c, uint64_t seed,
                           const std::filesystem::path& out);

// ---- train ----

struct TrainCmdResult {
  std::filesystem::path checkpoint;  // stem: <out>/<kind>
  std::filesystem::path trace_csv;
  TrainKind kind = TrainKind::PITCN;
  double final_mse = 0.0;
  int epochs = 0;
};

TrainCmdResult run_train(const Config& c, uint64_t seed, const std::filesystem::path& out);

// ---- eval-pred ----

struct EvalRow {
  int trajectory_id = -1;
  std::string family;
  std::string model;
  double rmse = 0.0;
  double rmse_dv = 0.0;
  double rmse_domega = 0.0;
  double dv_max = 0.0;      // peak ground-truth acceleration over the log
  double domega_max = 0.0;
  int samples = 0;
  std::string status = "ok";
};

struct EvalPredResult {
  std::filesystem::path csv;
  std::vector<EvalRow> rows;
  std::map<std::string, double> latency_us;  // per model, sidecar only
};

EvalPredResult run_eval_pred(const Config& c, uint64_t seed,
                             const std::filesystem::path& out);

// ---- perturb-prior ----

struct PerturbRow {
  double kf_mult = 1.0;
  double j_mult = 1.0;
  std::string model;
  uint64_t seed = 0;
  double rmse = 0.0;
  std::string status = "ok";
};

struct PerturbResult {
  std::filesystem::path csv;
  std::filesystem::path summary_csv;  // per-cell medians, heatmap ready
  std::vector<PerturbRow> rows;
};

PerturbResult run_perturb_prior(const Config& c, uint64_t seed,
                                const std::filesystem::path& out);

// ---- track ----

struct TrackRow {
  int trajectory_id = -1;
  std::string family;
  std::string backend;
  int repetitions = 0;
  double rmse_mean = 0.0;
  double rmse_std = 0.0;
  double max_err_mean = 0.0;
  int failed = 0;  // repetitions that diverged
};

struct TrackCmdResult {
  std::filesystem::path csv;
  std::vector<TrackRow> rows;
  std::map<std::string, double> solve_ms_mean;  // per backend, sidecar only
};

TrackCmdResult run_track(const Config& c, uint64_t seed, const std::filesystem::path& out);

// ---- ablate ----

struct AblateRow {
  int history = 0;  // 0 = instantaneous input, no temporal window
  bool pi_loss = false;
  uint64_t seed = 0;
  double rmse_mean = 0.0;  // across test trajectories
  double rmse_std = 0.0;
  std::string status = "ok";
};

struct AblateResult {
  std::filesystem::path csv;
  std::vector<AblateRow> rows;
  std::map<std::string, double> latency_us;  // per "T<history>" cell
};

AblateResult run_ablate(const Config& c, uint64_t seed, const std::filesystem::path& out);

// ---- domain-shift ----

struct ShiftRow {
  std::string model;
  std::string trained_on;  // "a", "b", or "-" for the prior
  uint64_t seed = 0;
  double rmse = 0.0;  // on the B-plant test split
};

struct DomainShiftResult {
  std::filesystem::path csv;
  std::vector<ShiftRow> rows;
};

DomainShiftResult run_domain_shift(const Config& c, uint64_t seed,
                                   const std::filesystem::path& out);

// CLI entry point: parses global flags (--config, --seed, --out, --jobs) and
// the subcommand, dispatches to the driver.  Returns 0 on success, 2 for an
// invalid config or bad usage, 3 for a failed experiment.
int cli_main(const std::vector<std::string>& args);

}  // namespace quadlearn
