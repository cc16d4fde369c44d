#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "quadlearn/dynamics.hpp"
#include "quadlearn/grad.hpp"
#include "quadlearn/signal.hpp"
#include "quadlearn/types.hpp"

namespace quadlearn {

enum class ModelKind { PITCN, PIMLP, RESTCN };

std::string kind_to_string(ModelKind k);
ModelKind kind_from_string(const std::string& s);

// Network sizing.  All kinds map a 14 x T window (v, q, omega, scaled motor
// speeds) to a 6-vector.  PITCN/RESTCN run the TCN encoder and read its last
// time step into the MLP decoder; PIMLP flattens the window directly into
// the decoder.
struct ModelSpec {
  ModelKind kind = ModelKind::PITCN;
  int T = 20;
  std::vector<int> tcn_channels = {16, 16, 16, 16};
  int kernel = 3;
  std::vector<int> dilations = {1, 2, 4, 8};
  std::vector<int> mlp_hidden = {64, 32, 32};
  double dropout = 0.10;
  double motor_scale = kMotorScale;

  static constexpr int input_rows = 14;  // 3 v + 4 q + 3 omega + 4 u
  static constexpr int output_dim = 6;

  int receptive_field() const;
};

// Rejects unusable sizings (encoder receptive field shorter than T, dropout
// outside [0,1), mismatched channel/dilation lists).
void validate_spec(const ModelSpec& s);

struct LayerInfo {
  std::string name;
  int offset = 0;
  int rows = 0;
  int cols = 0;

  int size() const { return rows * cols; }
};

struct Model {
  ModelSpec spec;
  NominalParams prior;  // physics prior; drives the RESTCN composition
  grad::Vec theta;
  std::vector<LayerInfo> layers;
  std::vector<grad::BatchNormState> bn;  // one per TCN layer

  // Fan-in-scaled uniform weight init, zero biases, unit batchnorm.
  static Model create(const ModelSpec& spec, uint64_t seed,
                      const NominalParams& prior = NominalParams{});

  int param_count() const { return static_cast<int>(theta.size()); }
  const LayerInfo& layer(const std::string& name) const;
};

// Per-sample context the RESTCN composition needs: the window's newest raw
// state and motor command.
struct BatchContext {
  std::vector<QuadState> newest_state;
  std::vector<Control> newest_input;  // rpm, unscaled
};

// Batched forward on an existing tape.  `input` is 14 x (T*B), sample-major,
// motor rows already scaled.  Returns the 6 x B prediction node.  For RESTCN
// the context must carry one entry per sample; the returned node is the
// composed acceleration (prior + projected residual).  rng is required in
// train mode (dropout masks).
grad::Var model_forward(grad::Tape& tape, Model& model, grad::Var input, bool train,
                        std::mt19937_64* rng, const BatchContext* ctx = nullptr);

// Single-window convenience: stacks X (10 x T: v, q, omega) over U (4 x T,
// pre-scaled), runs an eval-mode forward.  Throws shape-error on mismatched
// windows.
Vec6 forward_eval(const Model& model, const grad::Mat& X, const grad::Mat& U);
Vec6 forward_eval_window(const Model& model, const grad::Mat& window14xT);

// Full state derivative from a prediction: dp = v, dq from the quaternion
// kinematics; dv/domega from the network (PITCN/PIMLP) or from
// residual_derivative with the model's prior (RESTCN).
StateDerivative predict_derivative(const Model& model, const grad::Mat& X,
                                   const grad::Mat& U);

// d(network output)/d(window) for a single window, one reverse pass per
// output row; column j is window entry (row j%14, time j/14).  For RESTCN
// this is the raw residual head.  Used by the MPC linearization of the
// learned backend.
Eigen::Matrix<double, 6, Eigen::Dynamic> input_jacobian(const Model& model,
                                                        const grad::Mat& window14xT);

// Checkpoint: `<stem>.json` manifest (topology, prior, layer table, schema
// version) plus `<stem>.bin`, a little-endian float64 blob holding theta
// followed by each batchnorm's running mean and variance.  save -> load ->
// save reproduces both files byte for byte.
void save_model(const Model& model, const std::filesystem::path& stem);
Model load_model(const std::filesystem::path& stem);

}  // namespace quadlearn
