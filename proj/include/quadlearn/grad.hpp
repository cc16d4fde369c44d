#pragma once

#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "quadlearn/errors.hpp"

namespace quadlearn::grad {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Handle to a tape node.
struct Var {
  int id = -1;
};

struct BatchNormState {
  Vec running_mean;
  Vec running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  explicit BatchNormState(int channels = 0)
      : running_mean(Vec::Zero(channels)), running_var(Vec::Ones(channels)) {}
};

// Reverse-mode tape over dense matrices.  A node's value is rows x cols;
// when `time` > 1 the columns hold `cols/time` samples of `time` steps each,
// sample-major (column b*time + t).  Parameters live in one external flat
// vector; their gradients accumulate into an optional aligned vector.
class Tape {
 public:
  explicit Tape(const Vec* theta = nullptr, Vec* theta_grad = nullptr)
      : theta_(theta), theta_grad_(theta_grad) {}

  // Untracked constant.
  Var value(Mat v, int time = 1);
  // Tracked input; its gradient is available after backward().
  Var input(Mat v, int time = 1);
  // View of theta[offset : offset + rows*cols), column-major.
  Var param(int offset, int rows, int cols);

  const Mat& val(Var v) const { return node(v.id).value; }
  const Mat& grad_of(Var v) const { return node(v.id).grad; }
  int time_of(Var v) const { return node(v.id).time; }

  // Seeds d(loss)/d(loss) = 1 and propagates to parameters and inputs.
  // Throws usage-error if `loss` is not a 1x1 node.
  void backward(Var loss);
  // Vector-Jacobian product: seeds d(out) with `seed` (same shape as out).
  // Resets all gradient buffers first, so repeated calls are independent.
  void backward(Var out, const Mat& seed);

  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  friend Var matmul(Tape&, Var, Var);
  friend Var add(Tape&, Var, Var);
  friend Var sub(Tape&, Var, Var);
  friend Var add_bias(Tape&, Var, Var);
  friend Var scale(Tape&, Var, double);
  friend Var add_scaled(Tape&, Var, Var, double);
  friend Var relu(Tape&, Var);
  friend Var dropout(Tape&, Var, double, std::mt19937_64&);
  friend Var batchnorm_1d(Tape&, Var, Var, Var, BatchNormState&, bool);
  friend Var dilated_causal_conv1d(Tape&, Var, Var, Var, int, int);
  friend Var last_time_step(Tape&, Var);
  friend Var flatten_time(Tape&, Var);
  friend Var per_sample_affine(Tape&, Var, const std::vector<Eigen::Matrix<double, 6, 6>>&,
                               const Mat&);
  friend Var mean_squared_column_norm(Tape&, Var);

  struct Node {
    Mat value;
    Mat grad;
    int time = 1;
    std::function<void()> pull;  // empty for leaves
  };

  Node& node(int id);
  const Node& node(int id) const;
  Var push(Mat v, int time, std::function<void()> pull);
  void zero_grads();

  const Vec* theta_;
  Vec* theta_grad_;
  std::vector<Node> nodes_;
  std::vector<std::pair<int, int>> param_spans_;  // node id -> theta offset
};

// ---- Primitives.  All register their backward rule on the tape. ----

// General matrix product; matrix-vector is the single-column case.
Var matmul(Tape& t, Var a, Var b);
// Elementwise sum / difference of same-shape nodes.
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
// Adds a column vector to every column.
Var add_bias(Tape& t, Var x, Var b);
Var scale(Tape& t, Var x, double s);
// a + alpha * b for scalar nodes (composite losses).
Var add_scaled(Tape& t, Var a, Var b, double alpha);
Var relu(Tape& t, Var x);
// Inverted dropout: keeps with probability 1-rate and rescales by 1/(1-rate).
// Training-time only; eval simply omits the op.
Var dropout(Tape& t, Var x, double rate, std::mt19937_64& rng);
// Per-channel normalization over all columns (batch x time).  train=true
// normalizes by batch statistics and updates running stats; train=false
// applies the stored running statistics as a fixed affine map.
Var batchnorm_1d(Tape& t, Var x, Var gamma, Var beta, BatchNormState& state, bool train);
// Causal dilated convolution: x is C_in x (T*B), w is C_out x (C_in*k) with
// tap j in columns [j*C_in, (j+1)*C_in) ordered oldest to newest, b is
// C_out x 1.  Left zero padding keeps the output length T per sample.
Var dilated_causal_conv1d(Tape& t, Var x, Var w, Var b, int k, int dilation);
// C x (T*B) -> C x B, keeping each sample's newest column.
Var last_time_step(Tape& t, Var x);
// C x (T*B) -> (C*T) x B, stacking each sample's columns oldest first.
Var flatten_time(Tape& t, Var x);
// y[:,b] = A[b] * x[:,b] + c[:,b] with constant per-sample matrices.
Var per_sample_affine(Tape& t, Var x, const std::vector<Eigen::Matrix<double, 6, 6>>& A,
                      const Mat& c);
// Scalar mean over columns of the squared Euclidean column norm.
Var mean_squared_column_norm(Tape& t, Var e);

// Adam moment buffers.
struct AdamState {
  Vec m;
  Vec v;
  long long t = 0;

  explicit AdamState(int n = 0) : m(Vec::Zero(n)), v(Vec::Zero(n)) {}
  void reset() {
    m.setZero();
    v.setZero();
    t = 0;
  }
};

// Bias-corrected Adam update in place.  Throws shape-error on length
// mismatch.
void adam_step(Vec& params, const Vec& grad, AdamState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

}  // namespace quadlearn::grad
