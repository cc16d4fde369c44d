#include "quadlearn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "json.hpp"
#include "quadlearn/errors.hpp"
#include "quadlearn/signal.hpp"

namespace quadlearn {

namespace {

constexpr int kSchemaVersion = 1;

int stride_for(const FlightLog& log, double delta_t) {
  const double period = 1.0 / log.sample_hz;
  const int s = static_cast<int>(std::lround(delta_t / period));
  if (s < 1 || std::abs(delta_t - s * period) > 1e-9) {
    throw invalid_argument_error("window spacing must be a positive multiple of the log period");
  }
  return s;
}

AccelSeries differentiated_labels(const FlightLog& log, double cutoff_hz) {
  std::vector<Vec3> v_f(log.size()), w_f(log.size());
  for (int axis = 0; axis < 3; ++axis) {
    std::vector<double> v(log.size()), w(log.size());
    for (std::size_t i = 0; i < log.size(); ++i) {
      v[i] = log.state[i].v(axis);
      w[i] = log.state[i].omega(axis);
    }
    const auto vf = butterworth_lowpass(v, cutoff_hz, log.sample_hz);
    const auto wf = butterworth_lowpass(w, cutoff_hz, log.sample_hz);
    for (std::size_t i = 0; i < log.size(); ++i) {
      v_f[i](axis) = vf[i];
      w_f[i](axis) = wf[i];
    }
  }
  return finite_diff_accel(v_f, w_f, 1.0 / log.sample_hz);
}

std::string traj_stem(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "traj_%03d", index);
  return buf;
}

}  // namespace

std::vector<HistorySample> window_log(const FlightLog& log, const WindowOptions& opt,
                                      int trajectory_id) {
  if (opt.T < 1) throw invalid_argument_error("window length T must be >= 1");
  log.validate();
  const int s = stride_for(log, opt.delta_t);
  const int n = static_cast<int>(log.size());
  int first_label = opt.T * s;
  int end_label = n;

  AccelSeries recovered;
  if (opt.labels == LabelMode::Differentiated) {
    // The zero-phase filter is unreliable near the record ends; skip one
    // cutoff period on each side so emitted labels are all settled.
    const int guard = static_cast<int>(std::lround(log.sample_hz / opt.diff_cutoff_hz));
    first_label = std::max(first_label, guard);
    end_label = n - guard;
    if (first_label < end_label) {
      recovered = differentiated_labels(log, opt.diff_cutoff_hz);
    }
  }
  if (first_label >= end_label) return {};

  std::vector<HistorySample> out;
  out.reserve(end_label - first_label);
  for (int i = first_label; i < end_label; ++i) {
    HistorySample h;
    h.X.resize(10, opt.T);
    h.U.resize(4, opt.T);
    for (int j = 0; j < opt.T; ++j) {
      const int idx = i - (opt.T - 1 - j) * s;
      h.X.block<3, 1>(0, j) = log.state[idx].v;
      h.X.block<4, 1>(3, j) = log.state[idx].q.coeffs();
      h.X.block<3, 1>(7, j) = log.state[idx].omega;
      h.U.col(j) = log.input[idx];
    }
    if (opt.labels == LabelMode::Exact) {
      h.label << log.dv[i], log.domega[i];
    } else {
      h.label << recovered.dv[i], recovered.domega[i];
    }
    h.trajectory_id = trajectory_id;
    h.t_label = log.t[i];
    out.push_back(std::move(h));
  }
  return out;
}

DatasetSplit split_dataset(std::vector<int> ids, double train_fraction, uint64_t seed) {
  if (ids.size() < 2) throw invalid_argument_error("need at least 2 trajectories to split");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw invalid_argument_error("train fraction must lie strictly inside (0, 1)");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  const auto n = static_cast<long>(ids.size());
  long cut = static_cast<long>(std::floor(train_fraction * n + 1e-9));
  cut = std::clamp(cut, 1l, n - 1);

  DatasetSplit sp;
  sp.seed = seed;
  sp.train_fraction = train_fraction;
  sp.train_ids.assign(ids.begin(), ids.begin() + cut);
  sp.test_ids.assign(ids.begin() + cut, ids.end());
  std::sort(sp.train_ids.begin(), sp.train_ids.end());
  std::sort(sp.test_ids.begin(), sp.test_ids.end());
  return sp;
}

uint64_t fnv1a(const void* data, std::size_t n, uint64_t state) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    state ^= p[i];
    state *= 0x100000001b3ull;
  }
  return state;
}

std::string hash_to_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

uint64_t hash_file(const std::filesystem::path& path, uint64_t state) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open " + path.string());
  char buf[1 << 16];
  while (f) {
    f.read(buf, sizeof(buf));
    state = fnv1a(buf, static_cast<std::size_t>(f.gcount()), state);
  }
  return state;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  if (ds.ids.size() != ds.logs.size()) {
    throw invalid_argument_error("dataset ids and logs disagree in length");
  }
  std::error_code ec;
  std::filesystem::create_directories(dir / "logs", ec);
  if (ec) throw io_error("cannot create " + (dir / "logs").string());

  uint64_t h = 0xcbf29ce484222325ull;
  nlohmann::ordered_json table = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < ds.logs.size(); ++i) {
    const std::string stem = traj_stem(ds.ids[i]);
    save_flight_log(ds.logs[i], dir / "logs" / stem);
    h = hash_file(dir / "logs" / (stem + ".csv"), h);
    table.push_back({{"id", ds.ids[i]},
                     {"stem", "logs/" + stem},
                     {"family", family_to_string(ds.logs[i].spec.family)},
                     {"samples", ds.logs[i].size()}});
  }

  nlohmann::ordered_json manifest;
  manifest["format"] = "quadlearn-dataset";
  manifest["schema_version"] = kSchemaVersion;
  manifest["sample_hz"] = ds.sample_hz;
  manifest["content_hash"] = hash_to_hex(h);
  manifest["trajectories"] = table;
  {
    std::ofstream f(dir / "manifest.json", std::ios::binary);
    if (!f) throw io_error("cannot write " + (dir / "manifest.json").string());
    f << manifest.dump(2) << '\n';
  }

  nlohmann::ordered_json split;
  split["format"] = "quadlearn-split";
  split["schema_version"] = kSchemaVersion;
  split["seed"] = ds.split.seed;
  split["train_fraction"] = ds.split.train_fraction;
  split["train_ids"] = ds.split.train_ids;
  split["test_ids"] = ds.split.test_ids;
  {
    std::ofstream f(dir / "split.json", std::ios::binary);
    if (!f) throw io_error("cannot write " + (dir / "split.json").string());
    f << split.dump(2) << '\n';
  }
}

Dataset load_dataset(const std::filesystem::path& dir) {
  nlohmann::json manifest, split;
  {
    std::ifstream f(dir / "manifest.json");
    if (!f) throw io_error("cannot open " + (dir / "manifest.json").string());
    try {
      f >> manifest;
    } catch (const nlohmann::json::exception& e) {
      throw io_error((dir / "manifest.json").string() + ": " + e.what());
    }
  }
  {
    std::ifstream f(dir / "split.json");
    if (!f) throw io_error("cannot open " + (dir / "split.json").string());
    try {
      f >> split;
    } catch (const nlohmann::json::exception& e) {
      throw io_error((dir / "split.json").string() + ": " + e.what());
    }
  }

  Dataset ds;
  try {
    if (manifest.at("format") != "quadlearn-dataset") {
      throw io_error((dir / "manifest.json").string() + ": not a dataset manifest");
    }
    if (manifest.at("schema_version").get<int>() != kSchemaVersion) {
      throw io_error((dir / "manifest.json").string() + ": unsupported schema version");
    }
    ds.sample_hz = manifest.at("sample_hz").get<double>();
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& row : manifest.at("trajectories")) {
      const int id = row.at("id").get<int>();
      const std::string stem = row.at("stem").get<std::string>();
      ds.ids.push_back(id);
      ds.logs.push_back(load_flight_log(dir / stem));
      h = hash_file(dir / (stem + ".csv"), h);
    }
    const std::string want = manifest.at("content_hash").get<std::string>();
    ds.content_hash = hash_to_hex(h);
    if (ds.content_hash != want) {
      throw io_error("dataset content hash mismatch: manifest says " + want +
                     ", files hash to " + ds.content_hash);
    }
    if (split.at("format") != "quadlearn-split") {
      throw io_error((dir / "split.json").string() + ": not a split file");
    }
    ds.split.seed = split.at("seed").get<uint64_t>();
    ds.split.train_fraction = split.at("train_fraction").get<double>();
    ds.split.train_ids = split.at("train_ids").get<std::vector<int>>();
    ds.split.test_ids = split.at("test_ids").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw io_error("dataset at " + dir.string() + ": " + e.what());
  }

  for (const int id : ds.split.train_ids) {
    for (const int other : ds.split.test_ids) {
      if (id == other) throw io_error("split has trajectory " + std::to_string(id) + " on both sides");
    }
  }
  return ds;
}

const FlightLog& log_by_id(const Dataset& ds, int id) {
  for (std::size_t i = 0; i < ds.ids.size(); ++i) {
    if (ds.ids[i] == id) return ds.logs[i];
  }
  throw invalid_argument_error("dataset has no trajectory with id " + std::to_string(id));
}

}  // namespace quadlearn
