#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "quadlearn/dataset.hpp"
#include "quadlearn/model.hpp"

namespace quadlearn {

// Curriculum: data term only for the first half of the epochs, then the
// composite loss with the optimizer moments reset at the switch.  MseOnly
// never enables the physics term; PhysicsOnly trains on the physics batch
// alone (one full-batch step per epoch, no flight data needed).
enum class LossSchedule { Curriculum, MseOnly, PhysicsOnly };

std::string schedule_to_string(LossSchedule s);
LossSchedule schedule_from_string(const std::string& s);

struct TrainConfig {
  int epochs = 500;  // even, so the curriculum halves are equal
  int batch_train = 256;
  int batch_physics = 256;
  double learning_rate = 1e-4;
  LossSchedule schedule = LossSchedule::Curriculum;
  double lambda = 1.0;  // physics weight in the composite halves
  uint64_t seed = 0;
  LabelMode labels = LabelMode::Exact;  // consumed at windowing time

  void validate() const;
  // The step schedule: 0 in the first half, `lambda` in the second
  // (Curriculum); 0 everywhere (MseOnly); `lambda` everywhere (PhysicsOnly).
  double lambda_at(int epoch) const;
};

// Synthetic state-input windows sampled before training and then frozen;
// labels hold the sampling prior's accelerations at the newest column, but
// the loss recomputes its target from whatever prior it is handed.
struct PhysicsBatch {
  std::vector<HistorySample> samples;
  uint64_t content_hash = 0;

  std::size_t size() const { return samples.size(); }
};

uint64_t hash_samples(const std::vector<HistorySample>& samples);

// Envelope for physics-batch sampling.  Initial states are drawn uniformly
// (velocity and rate balls, bounded tilt) and re-drawn until the nominal
// accelerations fit the dv/domega budget; motor speeds sit in a band around
// hover, clamped to the actuator range.
struct PhysicsBounds {
  double v_max = 6.0;          // m/s
  double omega_max = 6.0;      // rad/s
  double tilt_max = 0.6;       // rad from vertical
  double dv_max = 18.0;        // m/s^2, nominal, at the initial point
  double domega_max = 54.0;    // rad/s^2
  double u_spread = 2500.0;    // rpm around hover
  double u_step = 150.0;       // rpm, per-step rollout jitter
};

// Each window starts at an accepted random point and follows T-1 nominal RK4
// steps of delta_t under a smoothly jittered input, so the history is
// dynamically consistent by construction.  T=1 degenerates to i.i.d. points.
PhysicsBatch sample_physics_batch(const PhysicsBounds& bounds, int count, int T,
                                  double delta_t, uint64_t seed,
                                  const NominalParams& params);

// ---- Losses ----

// Mean over columns of the squared 6-vector error norm.
double mse_loss(const grad::Mat& predictions, const grad::Mat& labels);

// Nominal (dv, domega) at each sample's newest state/input, 6 x B.
grad::Mat physics_targets(const PhysicsBatch& batch, const NominalParams& params);

// Eval-mode network predictions on the batch scored against
// physics_targets(batch, params).
double physics_loss(const Model& model, const PhysicsBatch& batch,
                    const NominalParams& params);

// L = mse + lambda * physics.
double composite_loss(double mse, double physics, double lambda);

// 14 x (T*B) network input (motor rows scaled), 6 x B labels, and the
// per-sample newest state/input context for the residual composition.
grad::Mat assemble_batch(const std::vector<HistorySample>& samples,
                         const std::vector<int>& index, const ModelSpec& spec,
                         grad::Mat* labels, BatchContext* ctx);

// ---- Training ----

struct LossTrace {
  std::vector<double> mse;      // per-epoch means; NaN while a term is off
  std::vector<double> physics;
  std::vector<double> lambda;
};

void save_loss_trace(const LossTrace& trace, const std::filesystem::path& csv);

struct TrainResult {
  Model model;
  LossTrace trace;
};

// Minibatch Adam over the training windows with the scheduled composite
// loss.  Deterministic for a fixed (config, model seed): shuffles and dropout
// streams derive from cfg.seed.  Throws training-diverged (with the epoch)
// if any loss goes non-finite.
TrainResult train(Model model, const std::vector<HistorySample>& train_set,
                  const PhysicsBatch& physics, const TrainConfig& cfg);

// ---- Evaluation ----

struct EvalReport {
  double rmse = 0.0;         // pooled over all 6 components
  double rmse_dv = 0.0;      // translational rows only
  double rmse_domega = 0.0;  // rotational rows only
  double mean_forward_us = 0.0;
  int samples = 0;
};

EvalReport evaluate_rmse(const Model& model, const std::vector<HistorySample>& samples);

// The physics prior as a zero-training predictor through the same scoring.
EvalReport evaluate_nominal_rmse(const NominalParams& params,
                                 const std::vector<HistorySample>& samples);

}  // namespace quadlearn
