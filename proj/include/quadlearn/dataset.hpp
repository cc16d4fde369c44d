#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "quadlearn/flight_log.hpp"
#include "quadlearn/grad.hpp"

namespace quadlearn {

// One training sample: a history window ending at the label time.  Columns
// run oldest to newest with uniform spacing delta_t; the newest column is the
// sample the label belongs to.  Motor speeds are stored in rpm; scaling to
// network units happens at batch assembly.
struct HistorySample {
  grad::Mat X;  // 10 x T: v, q (w,x,y,z), omega
  grad::Mat U;  // 4 x T: motor speeds, rpm
  Vec6 label;   // (dv, domega)
  int trajectory_id = -1;
  double t_label = 0.0;
};

// Exact: the plant's recorded accelerations.  Differentiated: zero-phase
// low-pass on v/omega followed by finite differences, the route a real
// telemetry pipeline without acceleration ground truth would take.
enum class LabelMode { Exact, Differentiated };

struct WindowOptions {
  int T = 20;
  double delta_t = 0.01;  // s; must be an integer multiple of the log period
  LabelMode labels = LabelMode::Exact;
  double diff_cutoff_hz = 5.0;  // label filtering, Differentiated mode only
};

// Sliding windows over one log.  Label indices run from T*stride to the end;
// a log with no room for a single window yields an empty list.  Differentiated
// mode additionally drops one cutoff period at each end of the record, where
// the zero-phase filter has not settled.
std::vector<HistorySample> window_log(const FlightLog& log, const WindowOptions& opt,
                                      int trajectory_id = -1);

struct DatasetSplit {
  std::vector<int> train_ids;
  std::vector<int> test_ids;
  uint64_t seed = 0;
  double train_fraction = 0.0;
};

// Seeded shuffle, then cut at floor(fraction*n), clamped so both sides are
// non-empty.  Splits by trajectory id only, never by sample.
DatasetSplit split_dataset(std::vector<int> ids, double train_fraction, uint64_t seed);

struct Dataset {
  std::vector<int> ids;         // parallel to logs
  std::vector<FlightLog> logs;
  DatasetSplit split;
  double sample_hz = 100.0;
  std::string content_hash;  // FNV-1a over the log CSVs, id order
};

// Directory layout:
//   <dir>/manifest.json            trajectory table, rate, content hash
//   <dir>/split.json               train/test ids and the split seed
//   <dir>/logs/traj_NNN.{csv,json} one flight log per trajectory
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

// 64-bit FNV-1a, running form.
uint64_t fnv1a(const void* data, std::size_t n, uint64_t state = 0xcbf29ce484222325ull);
std::string hash_to_hex(uint64_t h);

const FlightLog& log_by_id(const Dataset& ds, int id);

}  // namespace quadlearn
