#include "quadlearn/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

namespace quadlearn {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kReportSchema = 1;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

uint64_t mix(uint64_t a, uint64_t b, uint64_t c = 0) {
  uint64_t x = a + 0x9e3779b97f4a7c15ull * (b + 1) + 0x2545f4914f6cdd1dull * (c + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

std::vector<std::string> split_string(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(ch))) {
      cur += ch;
    }
  }
  if (!cur.empty() || !out.empty()) out.push_back(cur);
  out.erase(std::remove(out.begin(), out.end(), std::string{}), out.end());
  return out;
}

std::string g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text(const fs::path& p, const std::string& content) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw io_error("cannot write " + p.string());
  f << content;
  if (!f.good()) throw io_error("short write to " + p.string());
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

// JSON sidecar shared by every report: config snapshot, seed, wall clock.
// Timing never goes into the CSVs, which stay byte-reproducible.
void write_sidecar(const fs::path& path, const std::string& experiment, const Config& c,
                   uint64_t seed, double wall_s, ordered_json extra) {
  ordered_json j;
  j["format"] = "quadlearn-report";
  j["schema_version"] = kReportSchema;
  j["experiment"] = experiment;
  j["seed"] = seed;
  j["wall_clock_s"] = wall_s;
  ordered_json cfg = ordered_json::object();
  for (const auto& [k, v] : c.entries()) cfg[k] = v;
  j["config"] = cfg;
  for (auto& [k, v] : extra.items()) j[k] = v;
  write_text(path, j.dump(2) + "\n");
}

double median(std::vector<double> v) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return kNaN;
  return std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / (v.size() - 1));
}

std::vector<int> int_list(const Config& c, const std::string& key,
                          const std::vector<int>& fallback) {
  if (!c.has(key)) return fallback;
  std::vector<int> out;
  for (double v : c.get_list(key)) out.push_back(static_cast<int>(std::llround(v)));
  return out;
}

WindowOptions window_options_from_config(const Config& c, int T) {
  WindowOptions w;
  w.T = T;
  w.delta_t = c.get_double("window.delta_t", 0.01);
  const std::string mode = c.get_string("window.labels", "exact");
  if (mode == "exact") {
    w.labels = LabelMode::Exact;
  } else if (mode == "differentiated") {
    w.labels = LabelMode::Differentiated;
  } else {
    throw invalid_config_error("window.labels must be exact or differentiated");
  }
  w.diff_cutoff_hz = c.get_double("window.cutoff_hz", 5.0);
  return w;
}

std::vector<HistorySample> windows_for_ids(const Dataset& ds, const std::vector<int>& ids,
                                           const WindowOptions& w) {
  std::vector<HistorySample> out;
  for (int id : ids) {
    auto part = window_log(log_by_id(ds, id), w, id);
    out.insert(out.end(), std::make_move_iterator(part.begin()),
               std::make_move_iterator(part.end()));
  }
  return out;
}

Dataset load_dataset_key(const Config& c, const std::string& key) {
  const std::string dir = c.get_string(key, "");
  if (dir.empty()) throw invalid_config_error("missing required key " + key);
  return load_dataset(dir);
}

// Flights for one roster against one plant; throws flight-failed only if
// `keep_failures` is false.
struct GeneratedLogs {
  std::vector<int> ids;
  std::vector<FlightLog> logs;
  std::vector<int> failed;
};

GeneratedLogs fly_roster(const std::vector<TrajectorySpec>& roster,
                         const NominalParams& plant, const AeroParams& aero,
                         const MpcConfig& mpc, const SimOptions& base, uint64_t seed,
                         bool keep_failures) {
  GeneratedLogs out;
  for (std::size_t i = 0; i < roster.size(); ++i) {
    SimOptions opt = base;
    opt.seed = mix(seed, i);
    try {
      FlightLog log = collect_log(plant, aero, roster[i], mpc, opt);
      out.ids.push_back(static_cast<int>(i));
      out.logs.push_back(std::move(log));
    } catch (const Error& e) {
      if (!keep_failures) throw;
      out.failed.push_back(static_cast<int>(i));
    }
  }
  return out;
}

DatasetSplit split_from_config(const Config& c, const std::vector<int>& ids,
                               uint64_t seed) {
  if (c.has("split.test_ids")) {
    DatasetSplit s;
    for (double v : c.get_list("split.test_ids")) {
      s.test_ids.push_back(static_cast<int>(std::llround(v)));
    }
    std::sort(s.test_ids.begin(), s.test_ids.end());
    for (int id : ids) {
      if (!std::binary_search(s.test_ids.begin(), s.test_ids.end(), id)) {
        s.train_ids.push_back(id);
      }
    }
    for (int id : s.test_ids) {
      if (std::find(ids.begin(), ids.end(), id) == ids.end()) {
        throw invalid_config_error("split.test_ids names missing trajectory " +
                                   std::to_string(id));
      }
    }
    if (s.train_ids.empty()) throw invalid_config_error("split leaves no training data");
    return s;
  }
  const double fraction = c.get_double("split.fraction", 60.0 / 68.0);
  const uint64_t split_seed =
      c.has("split.seed") ? static_cast<uint64_t>(c.get_int("split.seed")) : seed;
  return split_dataset(ids, fraction, split_seed);
}

PhysicsBatch physics_batch_for(const Config& c, const TrainConfig& tc, int T,
                               const NominalParams& prior, uint64_t seed) {
  const double delta_t = c.get_double("window.delta_t", 0.01);
  return sample_physics_batch(PhysicsBounds{}, tc.batch_physics, T, delta_t, seed, prior);
}

// Pooled evaluation plus per-model latency bookkeeping.
struct LatencyPool {
  double us_total = 0.0;
  double samples = 0.0;

  void add(const EvalReport& r) {
    us_total += r.mean_forward_us * r.samples;
    samples += r.samples;
  }
  double mean_us() const { return samples > 0 ? us_total / samples : kNaN; }
};

}  // namespace

std::string train_kind_to_string(TrainKind k) {
  switch (k) {
    case TrainKind::PITCN: return "pitcn";
    case TrainKind::MSETCN: return "msetcn";
    case TrainKind::RESTCN: return "restcn";
    case TrainKind::PIMLP: return "pimlp";
  }
  throw invalid_argument_error("unknown train kind");
}

TrainKind train_kind_from_string(const std::string& s) {
  if (s == "pitcn") return TrainKind::PITCN;
  if (s == "msetcn") return TrainKind::MSETCN;
  if (s == "restcn") return TrainKind::RESTCN;
  if (s == "pimlp") return TrainKind::PIMLP;
  throw invalid_config_error("unknown train kind '" + s + "'");
}

ModelKind network_of(TrainKind k) {
  switch (k) {
    case TrainKind::PITCN:
    case TrainKind::MSETCN: return ModelKind::PITCN;
    case TrainKind::RESTCN: return ModelKind::RESTCN;
    case TrainKind::PIMLP: return ModelKind::PIMLP;
  }
  throw invalid_argument_error("unknown train kind");
}

LossSchedule default_schedule_of(TrainKind k) {
  return k == TrainKind::MSETCN ? LossSchedule::MseOnly : LossSchedule::Curriculum;
}

std::vector<TrajectorySpec> default_roster(int count, int aggressive, double duration,
                                           uint64_t seed) {
  if (count < 1) throw invalid_argument_error("roster needs at least one trajectory");
  if (aggressive < 0 || aggressive > count) {
    throw invalid_argument_error("aggressive count out of range");
  }
  static const TrajectoryFamily cycle[] = {
      TrajectoryFamily::Line,     TrajectoryFamily::Ellipse,
      TrajectoryFamily::WarpedEllipse, TrajectoryFamily::Lemniscate,
      TrajectoryFamily::ExtendedLemniscate, TrajectoryFamily::Parabola,
      TrajectoryFamily::TransposedParabola,
  };
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<TrajectorySpec> roster;
  const int moderate = count - aggressive;
  for (int i = 0; i < count; ++i) {
    TrajectorySpec t;
    t.duration = duration;
    t.plane = Plane::XY;
    t.phase = 2.0 * M_PI * u01(rng);
    if (i < moderate) {
      t.family = cycle[i % 7];
      t.omega = 0.5 + 0.6 * u01(rng);
      t.amplitudes = Vec3(0.6 + 0.8 * u01(rng), 0.4 + 0.6 * u01(rng), 1.0);
    } else {
      // faster figure-eight style paths, the hard half of the catalogue
      t.family = (i - moderate) % 2 == 0 ? TrajectoryFamily::Lemniscate
                                         : TrajectoryFamily::TransposedParabola;
      t.omega = 1.5 + 0.5 * u01(rng);
      t.amplitudes = Vec3(1.0 + 0.4 * u01(rng), 0.5 + 0.3 * u01(rng), 1.0);
    }
    roster.push_back(t);
  }
  return roster;
}

ModelSpec model_spec_from_config(const Config& c, TrainKind kind) {
  ModelSpec s;
  s.kind = network_of(kind);
  s.T = static_cast<int>(c.get_int("model.T", 20));
  const auto channels = int_list(c, "model.channels", s.tcn_channels);
  const auto dil = int_list(c, "model.dilations", s.dilations);
  s.tcn_channels = channels;
  s.dilations = dil;
  s.kernel = static_cast<int>(c.get_int("model.kernel", 3));
  s.mlp_hidden = int_list(c, "model.mlp", s.mlp_hidden);
  s.dropout = c.get_double("model.dropout", 0.10);
  validate_spec(s);
  return s;
}

TrainConfig train_config_from_config(const Config& c, TrainKind kind, uint64_t seed) {
  TrainConfig t;
  t.epochs = static_cast<int>(c.get_int("train.epochs", 500));
  t.batch_train = static_cast<int>(c.get_int("train.batch", 256));
  t.batch_physics = static_cast<int>(c.get_int("train.batch_physics", 256));
  t.learning_rate = c.get_double("train.lr", 1e-4);
  t.lambda = c.get_double("train.lambda", 1.0);
  t.schedule = c.has("train.schedule")
                   ? schedule_from_string(c.get_string("train.schedule"))
                   : default_schedule_of(kind);
  t.seed = mix(seed, 2);
  t.labels = window_options_from_config(c, 1).labels;
  t.validate();
  return t;
}

MpcConfig mpc_from_config(const Config& c) {
  MpcConfig m;
  m.rti = c.get_bool("mpc.rti", false);
  if (c.has("mpc.q_position")) {
    m.q_x.segment<3>(0).setConstant(c.get_double("mpc.q_position"));
  }
  if (c.has("mpc.q_velocity")) {
    m.q_x.segment<3>(3).setConstant(c.get_double("mpc.q_velocity"));
  }
  m.validate();
  return m;
}

SensorNoise noise_from_config(const Config& c) {
  SensorNoise n;
  n.sigma_v = c.get_double("noise.sigma_v", 0.0);
  n.sigma_omega = c.get_double("noise.sigma_omega", 0.0);
  n.sigma_q = c.get_double("noise.sigma_q", 0.0);
  n.sigma_u = c.get_double("noise.sigma_u", 0.0);
  return n;
}

// ---- gen-data ----

GenDataResult run_gen_data(const Config& c, uint64_t seed, const fs::path& out) {
  Stopwatch watch;
  const int count = static_cast<int>(c.get_int("gen.trajectories", 68));
  const int aggressive = static_cast<int>(c.get_int("gen.aggressive",
                                                    std::min(8, count / 2)));
  const double duration = c.get_double("gen.duration", 8.0);
  const NominalParams plant = load_nominal_params(c);
  const AeroParams aero = load_aero_params(c);
  const MpcConfig mpc = mpc_from_config(c);

  SimOptions opt;
  opt.position_bound = c.get_double("gen.position_bound", 50.0);
  opt.noise = noise_from_config(c);

  const auto roster = default_roster(count, aggressive, duration, mix(seed, 1));
  fs::create_directories(out);

  GeneratedLogs flown = fly_roster(roster, plant, aero, mpc, opt, seed, true);
  if (flown.ids.empty()) throw flight_failed_error("every trajectory diverged");

  Dataset ds;
  ds.ids = flown.ids;
  ds.logs = std::move(flown.logs);
  ds.sample_hz = opt.control_hz;
  ds.split = split_from_config(c, ds.ids, seed);

  GenDataResult result;
  result.dataset_dir = out / "dataset";
  result.written = ds.ids;
  result.failed = flown.failed;
  save_dataset(ds, result.dataset_dir);

  std::string csv = "id,family,omega,amp_a,amp_b,duration,samples,status\n";
  for (int i = 0; i < count; ++i) {
    const TrajectorySpec& t = roster[i];
    const bool ok =
        std::find(result.failed.begin(), result.failed.end(), i) == result.failed.end();
    std::size_t samples = 0;
    if (ok) {
      for (std::size_t j = 0; j < ds.ids.size(); ++j) {
        if (ds.ids[j] == i) samples = ds.logs[j].size();
      }
    }
    csv += std::to_string(i) + ',' + family_to_string(t.family) + ',' + g17(t.omega) +
           ',' + g17(t.amplitudes.x()) + ',' + g17(t.amplitudes.y()) + ',' +
           g17(t.duration) + ',' + std::to_string(samples) + ',' +
           (ok ? "ok" : "failed") + '\n';
  }
  write_text(out / "gen_report.csv", csv);

  ordered_json extra;
  extra["dataset"] = result.dataset_dir.string();
  extra["written"] = result.written;
  extra["failed"] = result.failed;
  extra["train_ids"] = ds.split.train_ids;
  extra["test_ids"] = ds.split.test_ids;
  write_sidecar(out / "gen_report.json", "gen-data", c, seed, watch.seconds(),
                std::move(extra));
  return result;
}

// ---- train ----

namespace {

struct TrainedModel {
  Model model;
  LossTrace trace;
};

// One full training run for a kind: windows come pre-built for spec.T.
TrainedModel train_kind(const Config& c, TrainKind kind, const ModelSpec& spec,
                        const std::vector<HistorySample>& train_windows,
                        const NominalParams& prior, uint64_t seed) {
  TrainConfig tc = train_config_from_config(c, kind, seed);
  tc.seed = mix(seed, 2);
  Model model = Model::create(spec, mix(seed, 1), prior);
  PhysicsBatch batch;
  if (tc.schedule != LossSchedule::MseOnly) {
    batch = physics_batch_for(c, tc, spec.T, prior, mix(seed, 3));
  }
  TrainResult r = train(std::move(model), train_windows, batch, tc);
  return TrainedModel{std::move(r.model), std::move(r.trace)};
}

double last_finite(const std::vector<double>& v) {
  for (auto it = v.rbegin(); it != v.rend(); ++it) {
    if (std::isfinite(*it)) return *it;
  }
  return kNaN;
}

}  // namespace

TrainCmdResult run_train(const Config& c, uint64_t seed, const fs::path& out) {
  Stopwatch watch;
  const TrainKind kind = train_kind_from_string(c.get_string("train.kind", "pitcn"));
  const Dataset ds = load_dataset_key(c, "train.dataset");
  const NominalParams prior = load_nominal_params(c, "prior.");
  const ModelSpec spec = model_spec_from_config(c, kind);
  const WindowOptions wopt = window_options_from_config(c, spec.T);
  const auto train_windows = windows_for_ids(ds, ds.split.train_ids, wopt);

  fs::create_directories(out);
  TrainedModel trained = train_kind(c, kind, spec, train_windows, prior, seed);

  TrainCmdResult result;
  result.kind = kind;
  result.checkpoint = out / train_kind_to_string(kind);
  result.trace_csv = out / "trace.csv";
  result.final_mse = last_finite(trained.trace.mse);
  result.epochs = static_cast<int>(trained.trace.mse.size());
  save_model(trained.model, result.checkpoint);
  save_loss_trace(trained.trace, result.trace_csv);

  ordered_json extra;
  extra["kind"] = train_kind_to_string(kind);
  extra["checkpoint"] = result.checkpoint.string();
  extra["dataset_hash"] = ds.content_hash;
  extra["epochs"] = result.epochs;
  extra["train_windows"] = train_windows.size();
  extra["final_mse"] = result.final_mse;
  extra["final_physics"] = last_finite(trained.trace.physics);
  write_sidecar(out / "train_report.json", "train", c, seed, watch.seconds(),
                std::move(extra));
  return result;
}

// ---- eval-pred ----

EvalPredResult run_eval_pred(const Config& c, uint64_t seed, const fs::path& out) {
  Stopwatch watch;
  const Dataset ds = load_dataset_key(c, "eval.dataset");
  const NominalParams prior = load_nominal_params(c, "prior.");
  const std::string which = c.get_string("eval.split", "test");
  std::vector<int> ids;
  if (which == "test") {
    ids = ds.split.test_ids;
  } else if (which == "train") {
    ids = ds.split.train_ids;
  } else if (which == "all") {
    ids = ds.ids;
  } else {
    throw invalid_config_error("eval.split must be test, train or all");
  }
  std::sort(ids.begin(), ids.end());

  struct Entry {
    std::string name;
    bool nominal = false;
    Model model;  // unused for the nominal row
    int T = 0;
  };
  std::vector<Entry> entries;
  std::vector<std::string> skipped;
  {
    Entry nom;
    nom.name = "nom";
    nom.nominal = true;
    nom.T = static_cast<int>(c.get_int("model.T", 20));
    entries.push_back(std::move(nom));
  }
  for (const std::string& stem : split_string(c.get_string("eval.checkpoints", ""), ',')) {
    const fs::path p(stem);
    if (!fs::exists(p.string() + ".json")) {
      skipped.push_back(p.stem().string());
      continue;
    }
    Entry e;
    e.model = load_model(p);
    e.name = p.stem().string();
    e.T = e.model.spec.T;
    entries.push_back(std::move(e));
  }

  EvalPredResult result;
  std::map<std::string, LatencyPool> latency;
  for (int id : ids) {
    const FlightLog& log = log_by_id(ds, id);
    double dv_max = 0.0, domega_max = 0.0;
    for (std::size_t i = 0; i < log.size(); ++i) {
      dv_max = std::max(dv_max, log.dv[i].norm());
      domega_max = std::max(domega_max, log.domega[i].norm());
    }
    for (const Entry& e : entries) {
      const WindowOptions wopt = window_options_from_config(c, e.T);
      const auto windows = window_log(log, wopt, id);
      const EvalReport r = e.nominal ? evaluate_nominal_rmse(prior, windows)
                                     : evaluate_rmse(e.model, windows);
      latency[e.name].add(r);
      EvalRow row;
      row.trajectory_id = id;
      row.family = family_to_string(log.spec.family);
      row.model = e.name;
      row.rmse = r.rmse;
      row.rmse_dv = r.rmse_dv;
      row.rmse_domega = r.rmse_domega;
      row.dv_max = dv_max;
      row.domega_max = domega_max;
      row.samples = r.samples;
      result.rows.push_back(std::move(row));
    }
  }
  for (const std::string& name : skipped) {
    EvalRow row;
    row.model = name;
    row.family = "-";
    row.rmse = row.rmse_dv = row.rmse_domega = kNaN;
    row.dv_max = row.domega_max = kNaN;
    row.status = "skipped";
    result.rows.push_back(std::move(row));
  }

  fs::create_directories(out);
  std::string csv =
      "trajectory_id,family,model,rmse,rmse_dv,rmse_domega,dv_max,domega_max,samples,"
      "status\n";
  for (const EvalRow& r : result.rows) {
    csv += std::to_string(r.trajectory_id) + ',' + r.family + ',' + r.model + ',' +
           g17(r.rmse) + ',' + g17(r.rmse_dv) + ',' + g17(r.rmse_domega) + ',' +
           g17(r.dv_max) + ',' + g17(r.domega_max) + ',' + std::to_string(r.samples) +
           ',' + r.status + '\n';
  }
  result.csv = out / "eval_report.csv";
  write_text(result.csv, csv);

  ordered_json lat = ordered_json::object();
  for (const auto& [name, pool] : latency) {
    lat[name] = pool.mean_us();
    result.latency_us[name] = pool.mean_us();
  }
  ordered_json extra;
  extra["latency_us"] = lat;
  extra["dataset_hash"] = ds.content_hash;
  extra["split"] = which;
  write_sidecar(out / "eval_report.json", "eval-pred", c, seed, watch.seconds(),
                std::move(extra));
  return result;
}

// ---- perturb-prior ----

PerturbResult run_perturb_prior(const Config& c, uint64_t seed, const fs::path& out) {
  Stopwatch watch;
  const Dataset ds = load_dataset_key(c, "perturb.dataset");
  const NominalParams base = load_nominal_params(c, "prior.");
  const int seeds = static_cast<int>(c.get_int("perturb.seeds", 3));
  std::vector<TrainKind> kinds;
  for (const std::string& s :
       split_string(c.get_string("perturb.kinds", "restcn,pitcn"), ',')) {
    kinds.push_back(train_kind_from_string(s));
  }

  // grid cells: explicit `a:b` pairs, or the cross product of the multipliers
  std::vector<std::pair<double, double>> cells;
  if (c.has("perturb.cells")) {
    for (const std::string& cell : split_string(c.get_string("perturb.cells"), ',')) {
      const auto parts = split_string(cell, ':');
      if (parts.size() != 2) {
        throw invalid_config_error("perturb.cells entries must look like kf:j");
      }
      try {
        cells.emplace_back(std::stod(parts[0]), std::stod(parts[1]));
      } catch (const std::exception&) {
        throw invalid_config_error("bad perturb.cells entry '" + cell + "'");
      }
    }
  } else {
    std::vector<double> mult = {0.5, 1.0, 1.5};
    if (c.has("perturb.multipliers")) mult = c.get_list("perturb.multipliers");
    for (double a : mult) {
      for (double b : mult) cells.emplace_back(a, b);
    }
  }

  const ModelSpec ref_spec = model_spec_from_config(c, TrainKind::PITCN);
  const WindowOptions wopt = window_options_from_config(c, ref_spec.T);
  const auto train_windows = windows_for_ids(ds, ds.split.train_ids, wopt);
  const auto test_windows = windows_for_ids(ds, ds.split.test_ids, wopt);

  PerturbResult result;
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    const auto [a, b] = cells[ci];
    NominalParams prior = base;
    prior.k_f *= a;
    prior.k_tau *= a;
    prior.J.x() *= b;
    prior.J.z() *= b;

    PerturbRow nom;
    nom.kf_mult = a;
    nom.j_mult = b;
    nom.model = "nom";
    nom.rmse = evaluate_nominal_rmse(prior, test_windows).rmse;
    result.rows.push_back(nom);

    for (TrainKind kind : kinds) {
      ModelSpec spec = model_spec_from_config(c, kind);
      for (int s = 0; s < seeds; ++s) {
        PerturbRow row;
        row.kf_mult = a;
        row.j_mult = b;
        row.model = train_kind_to_string(kind);
        row.seed = s;
        try {
          TrainedModel tm = train_kind(c, kind, spec, train_windows, prior,
                                       mix(seed, 100 + s));
          row.rmse = evaluate_rmse(tm.model, test_windows).rmse;
        } catch (const Error&) {
          row.rmse = kNaN;
          row.status = "failed";
        }
        result.rows.push_back(row);
      }
    }
  }

  fs::create_directories(out);
  std::string csv = "kf_mult,j_mult,model,seed,rmse,status\n";
  for (const PerturbRow& r : result.rows) {
    csv += g17(r.kf_mult) + ',' + g17(r.j_mult) + ',' + r.model + ',' +
           std::to_string(r.seed) + ',' + g17(r.rmse) + ',' + r.status + '\n';
  }
  result.csv = out / "perturb_report.csv";
  write_text(result.csv, csv);

  // per-cell medians, one row per (cell, model): plot-ready heatmap grid
  std::string summary = "kf_mult,j_mult,model,median_rmse\n";
  for (const auto& [a, b] : cells) {
    std::vector<std::string> models = {"nom"};
    for (TrainKind k : kinds) models.push_back(train_kind_to_string(k));
    for (const std::string& m : models) {
      std::vector<double> vals;
      for (const PerturbRow& r : result.rows) {
        if (r.kf_mult == a && r.j_mult == b && r.model == m && r.status == "ok") {
          vals.push_back(r.rmse);
        }
      }
      if (vals.empty()) continue;  // model absent or failed in this cell
      summary += g17(a) + ',' + g17(b) + ',' + m + ',' + g17(median(vals)) + '\n';
    }
  }
  result.summary_csv = out / "perturb_summary.csv";
  write_text(result.summary_csv, summary);

  write_sidecar(out / "perturb_report.json", "perturb-prior", c, seed, watch.seconds(),
                {{"cells", cells.size()}, {"dataset_hash", ds.content_hash}});
  return result;
}

// ---- track ----

TrackCmdResult run_track(const Config& c, uint64_t seed, const fs::path& out) {
  Stopwatch watch;
  const NominalParams plant = load_nominal_params(c);
  const AeroParams aero = load_aero_params(c);
  const NominalParams prior = load_nominal_params(c, "prior.");
  const MpcConfig mpc = mpc_from_config(c);
  const int reps = static_cast<int>(c.get_int("track.repetitions", 1));
  if (reps < 1) throw invalid_config_error("track.repetitions must be at least 1");

  const int count = static_cast<int>(c.get_int("track.trajectories", 2));
  const int aggressive = static_cast<int>(c.get_int("track.aggressive", 0));
  const double duration = c.get_double("track.duration", 6.0);
  const auto roster = default_roster(count, aggressive, duration, mix(seed, 1));

  SimOptions opt;
  opt.position_bound = c.get_double("track.position_bound", 50.0);
  opt.init_jitter = c.get_double("track.init_jitter", 0.0);

  // Backends: nominal and oracle by name, anything else is a checkpoint stem.
  struct BackendEntry {
    std::string name;
    std::unique_ptr<Model> model;  // keeps the learned backend's weights alive
    std::unique_ptr<MpcBackend> backend;
  };
  std::vector<BackendEntry> backends;
  for (const std::string& b :
       split_string(c.get_string("track.backends", "nominal"), ',')) {
    BackendEntry e;
    if (b == "nominal") {
      e.name = "nominal";
      e.backend = std::make_unique<NominalBackend>(prior);
    } else if (b == "oracle") {
      e.name = "oracle";
      e.backend = std::make_unique<TruePlantBackend>(plant, aero);
    } else {
      e.model = std::make_unique<Model>(load_model(b));
      e.name = fs::path(b).stem().string();
      e.backend = std::make_unique<LearnedBackend>(*e.model);
    }
    backends.push_back(std::move(e));
  }
  if (backends.empty()) throw invalid_config_error("track.backends is empty");

  TrackCmdResult result;
  std::map<std::string, std::vector<double>> solve_ms;
  for (std::size_t ti = 0; ti < roster.size(); ++ti) {
    for (const BackendEntry& e : backends) {
      TrackRow row;
      row.trajectory_id = static_cast<int>(ti);
      row.family = family_to_string(roster[ti].family);
      row.backend = e.name;
      row.repetitions = reps;
      std::vector<double> rmse, max_err;
      for (int r = 0; r < reps; ++r) {
        SimOptions o = opt;
        o.seed = mix(seed, ti, r);
        const TrackRun run =
            run_closed_loop(plant, aero, *e.backend, mpc, roster[ti], o);
        if (run.stats.failed) {
          ++row.failed;
          continue;
        }
        rmse.push_back(run.stats.rmse_pos);
        max_err.push_back(run.stats.max_pos_err);
        solve_ms[e.name].push_back(run.stats.mean_solve_ms);
      }
      row.rmse_mean = mean_of(rmse);
      row.rmse_std = sample_std(rmse);
      row.max_err_mean = mean_of(max_err);
      result.rows.push_back(std::move(row));
    }
  }

  fs::create_directories(out);
  std::string csv =
      "trajectory_id,family,backend,repetitions,rmse_mean,rmse_std,max_err_mean,failed\n";
  for (const TrackRow& r : result.rows) {
    csv += std::to_string(r.trajectory_id) + ',' + r.family + ',' + r.backend + ',' +
           std::to_string(r.repetitions) + ',' + g17(r.rmse_mean) + ',' +
           g17(r.rmse_std) + ',' + g17(r.max_err_mean) + ',' + std::to_string(r.failed) +
           '\n';
  }
  result.csv = out / "track_report.csv";
  write_text(result.csv, csv);

  ordered_json ms = ordered_json::object();
  for (auto& [name, vals] : solve_ms) {
    ms[name] = mean_of(vals);
    result.solve_ms_mean[name] = mean_of(vals);
  }
  write_sidecar(out / "track_report.json", "track", c, seed, watch.seconds(),
                {{"solve_ms_mean", ms}});
  return result;
}

// ---- ablate ----

AblateResult run_ablate(const Config& c, uint64_t seed, const fs::path& out) {
  Stopwatch watch;
  const Dataset ds = load_dataset_key(c, "ablate.dataset");
  const NominalParams prior = load_nominal_params(c, "prior.");
  const std::vector<int> history = int_list(c, "ablate.history", {20, 10, 4, 1, 0});
  const int seeds = static_cast<int>(c.get_int("ablate.seeds", 3));
  std::vector<bool> pi_axis;
  for (const std::string& s : split_string(c.get_string("ablate.pi", "on,off"), ',')) {
    if (s == "on") {
      pi_axis.push_back(true);
    } else if (s == "off") {
      pi_axis.push_back(false);
    } else {
      throw invalid_config_error("ablate.pi entries must be on or off");
    }
  }

  AblateResult result;
  std::map<std::string, LatencyPool> latency;
  for (int h : history) {
    // history 0 drops the temporal window entirely: a flat network on the
    // instantaneous state-input
    const TrainKind arch = h == 0 ? TrainKind::PIMLP : TrainKind::PITCN;
    Config hc = c;
    hc.set("model.T", std::to_string(h == 0 ? 1 : h));
    const ModelSpec spec = model_spec_from_config(hc, arch);
    const WindowOptions wopt = window_options_from_config(c, spec.T);
    const auto train_windows = windows_for_ids(ds, ds.split.train_ids, wopt);

    for (bool pi : pi_axis) {
      for (int s = 0; s < seeds; ++s) {
        AblateRow row;
        row.history = h;
        row.pi_loss = pi;
        row.seed = s;
        Config cell = c;
        cell.set("train.schedule", pi ? "curriculum" : "mse_only");
        try {
          TrainedModel tm =
              train_kind(cell, arch, spec, train_windows, prior, mix(seed, 100 + s));
          std::vector<double> per_traj;
          for (int id : ds.split.test_ids) {
            const auto w = window_log(log_by_id(ds, id), wopt, id);
            const EvalReport r = evaluate_rmse(tm.model, w);
            per_traj.push_back(r.rmse);
            latency["T" + std::to_string(h)].add(r);
          }
          row.rmse_mean = mean_of(per_traj);
          row.rmse_std = sample_std(per_traj);
        } catch (const Error&) {
          row.rmse_mean = row.rmse_std = kNaN;
          row.status = "failed";
        }
        result.rows.push_back(row);
      }
    }
  }

  fs::create_directories(out);
  std::string csv = "history,pi_loss,seed,rmse_mean,rmse_std,status\n";
  for (const AblateRow& r : result.rows) {
    csv += std::to_string(r.history) + ',' + (r.pi_loss ? "on" : "off") + ',' +
           std::to_string(r.seed) + ',' + g17(r.rmse_mean) + ',' + g17(r.rmse_std) +
           ',' + r.status + '\n';
  }
  result.csv = out / "ablate_report.csv";
  write_text(result.csv, csv);

  ordered_json lat = ordered_json::object();
  for (const auto& [name, pool] : latency) {
    lat[name] = pool.mean_us();
    result.latency_us[name] = pool.mean_us();
  }
  write_sidecar(out / "ablate_report.json", "ablate", c, seed, watch.seconds(),
                {{"latency_us", lat}, {"dataset_hash", ds.content_hash}});
  return result;
}

// ---- domain-shift ----

DomainShiftResult run_domain_shift(const Config& c, uint64_t seed, const fs::path& out) {
  Stopwatch watch;
  const int count = static_cast<int>(c.get_int("domain.trajectories", 12));
  const int aggressive = static_cast<int>(c.get_int("domain.aggressive", 2));
  const double duration = c.get_double("domain.duration", 6.0);
  const int seeds = static_cast<int>(c.get_int("domain.seeds", 3));
  const bool in_domain = c.get_bool("domain.in_domain", true);
  std::vector<TrainKind> kinds;
  for (const std::string& s :
       split_string(c.get_string("domain.kinds", "pitcn,msetcn"), ',')) {
    kinds.push_back(train_kind_from_string(s));
  }
  const NominalParams prior = load_nominal_params(c, "prior.");
  const MpcConfig mpc = mpc_from_config(c);
  SimOptions opt;
  opt.noise = noise_from_config(c);

  const auto roster = default_roster(count, aggressive, duration, mix(seed, 1));
  auto build = [&](const std::string& prefix_plant, const std::string& prefix_aero,
                   const fs::path& dir) {
    const NominalParams plant = load_nominal_params(c, prefix_plant);
    const AeroParams aero = load_aero_params(c, prefix_aero);
    GeneratedLogs flown = fly_roster(roster, plant, aero, mpc, opt, seed, false);
    Dataset ds;
    ds.ids = flown.ids;
    ds.logs = std::move(flown.logs);
    ds.sample_hz = opt.control_hz;
    ds.split = split_from_config(c, ds.ids, seed);
    save_dataset(ds, dir);
    return ds;
  };
  fs::create_directories(out);
  const Dataset a = build("plant.", "aero.", out / "dataset_a");
  const Dataset b = build("shift.plant.", "shift.aero.", out / "dataset_b");

  const ModelSpec ref_spec = model_spec_from_config(c, TrainKind::PITCN);
  const WindowOptions wopt = window_options_from_config(c, ref_spec.T);
  const auto a_train = windows_for_ids(a, a.split.train_ids, wopt);
  const auto b_train = windows_for_ids(b, b.split.train_ids, wopt);
  const auto b_test = windows_for_ids(b, b.split.test_ids, wopt);

  DomainShiftResult result;
  {
    ShiftRow nom;
    nom.model = "nom";
    nom.trained_on = "-";
    nom.rmse = evaluate_nominal_rmse(prior, b_test).rmse;
    result.rows.push_back(nom);
  }
  for (TrainKind kind : kinds) {
    const ModelSpec spec = model_spec_from_config(c, kind);
    for (int s = 0; s < seeds; ++s) {
      TrainedModel shifted = train_kind(c, kind, spec, a_train, prior, mix(seed, 100 + s));
      ShiftRow row;
      row.model = train_kind_to_string(kind);
      row.trained_on = "a";
      row.seed = s;
      row.rmse = evaluate_rmse(shifted.model, b_test).rmse;
      result.rows.push_back(row);
      if (in_domain) {
        TrainedModel retrained = train_kind(c, kind, spec, b_train, prior,
                                            mix(seed, 100 + s));
        ShiftRow in_row;
        in_row.model = train_kind_to_string(kind);
        in_row.trained_on = "b";
        in_row.seed = s;
        in_row.rmse = evaluate_rmse(retrained.model, b_test).rmse;
        result.rows.push_back(in_row);
      }
    }
  }

  std::string csv = "model,trained_on,seed,rmse\n";
  for (const ShiftRow& r : result.rows) {
    csv += r.model + ',' + r.trained_on + ',' + std::to_string(r.seed) + ',' +
           g17(r.rmse) + '\n';
  }
  result.csv = out / "shift_report.csv";
  write_text(result.csv, csv);

  write_sidecar(out / "shift_report.json", "domain-shift", c, seed, watch.seconds(),
                {{"dataset_a_hash", a.content_hash}, {"dataset_b_hash", b.content_hash}});
  return result;
}

// ---- CLI ----

int cli_main(const std::vector<std::string>& args) {
  CLI::App app{"quadrotor dynamics learning and tracking experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  uint64_t seed = 0;
  int jobs = 1;
  app.add_option("--config", config_path, "key=value experiment configuration");
  app.add_option("--seed", seed, "master seed");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--jobs", jobs, "worker processes (cells run serially per process)")
      ->check(CLI::PositiveNumber);

  int trajectories_override = -1;
  auto* gen = app.add_subcommand("gen-data", "fly a trajectory catalogue, save the logs");
  gen->add_option("--trajectories", trajectories_override,
                  "override gen.trajectories from the config");
  auto* train_cmd = app.add_subcommand("train", "fit a model on a dataset");
  auto* eval_cmd = app.add_subcommand("eval-pred", "score models on held-out flights");
  auto* perturb = app.add_subcommand("perturb-prior", "prior-perturbation grid study");
  auto* track_cmd = app.add_subcommand("track", "closed-loop tracking comparison");
  auto* ablate_cmd = app.add_subcommand("ablate", "history and loss ablation grid");
  auto* shift_cmd = app.add_subcommand("domain-shift", "cross-plant generalization study");
  // the global flags are accepted on either side of the subcommand
  for (CLI::App* s : {gen, train_cmd, eval_cmd, perturb, track_cmd, ablate_cmd, shift_cmd}) {
    s->fallthrough();
  }

  std::vector<const char*> argv;
  argv.push_back("quadlearn");
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    Config c;
    if (!config_path.empty()) {
      try {
        c = Config::load(config_path);
      } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
      }
    }
    const fs::path out(out_dir);
    if (gen->parsed()) {
      if (trajectories_override >= 0) {
        c.set("gen.trajectories", std::to_string(trajectories_override));
      }
      const GenDataResult r = run_gen_data(c, seed, out);
      std::printf("wrote %zu logs (%zu failed) to %s\n", r.written.size(),
                  r.failed.size(), r.dataset_dir.string().c_str());
    } else if (train_cmd->parsed()) {
      const TrainCmdResult r = run_train(c, seed, out);
      std::printf("checkpoint %s (final mse %s)\n", r.checkpoint.string().c_str(),
                  g17(r.final_mse).c_str());
    } else if (eval_cmd->parsed()) {
      const EvalPredResult r = run_eval_pred(c, seed, out);
      std::printf("wrote %s (%zu rows)\n", r.csv.string().c_str(), r.rows.size());
    } else if (perturb->parsed()) {
      const PerturbResult r = run_perturb_prior(c, seed, out);
      std::printf("wrote %s (%zu rows)\n", r.csv.string().c_str(), r.rows.size());
    } else if (track_cmd->parsed()) {
      const TrackCmdResult r = run_track(c, seed, out);
      std::printf("wrote %s (%zu rows)\n", r.csv.string().c_str(), r.rows.size());
    } else if (ablate_cmd->parsed()) {
      const AblateResult r = run_ablate(c, seed, out);
      std::printf("wrote %s (%zu rows)\n", r.csv.string().c_str(), r.rows.size());
    } else if (shift_cmd->parsed()) {
      const DomainShiftResult r = run_domain_shift(c, seed, out);
      std::printf("wrote %s (%zu rows)\n", r.csv.string().c_str(), r.rows.size());
    }
    return 0;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    if (e.code() == "invalid-config" || e.code() == "invalid-argument") return 2;
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}

}  // namespace quadlearn
