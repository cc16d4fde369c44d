#include "quadlearn/grad.hpp"

namespace quadlearn::grad {

namespace {

std::string shape_str(const Mat& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void check_same_shape(const char* op, const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw shape_error(std::string(op) + ": " + shape_str(a) + " vs " + shape_str(b));
  }
}

}  // namespace

Tape::Node& Tape::node(int id) {
  if (id < 0 || id >= static_cast<int>(nodes_.size())) {
    throw Error("usage-error", "tape node " + std::to_string(id) + " does not exist");
  }
  return nodes_[id];
}

const Tape::Node& Tape::node(int id) const {
  return const_cast<Tape*>(this)->node(id);
}

Var Tape::push(Mat v, int time, std::function<void()> pull) {
  Node n;
  n.grad = Mat::Zero(v.rows(), v.cols());
  n.value = std::move(v);
  n.time = time;
  n.pull = std::move(pull);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::value(Mat v, int time) { return push(std::move(v), time, nullptr); }

Var Tape::input(Mat v, int time) { return push(std::move(v), time, nullptr); }

Var Tape::param(int offset, int rows, int cols) {
  if (theta_ == nullptr) {
    throw Error("usage-error", "tape has no parameter vector attached");
  }
  if (offset < 0 || offset + rows * cols > theta_->size()) {
    throw shape_error("parameter span [" + std::to_string(offset) + ", " +
                      std::to_string(offset + rows * cols) + ") exceeds theta length " +
                      std::to_string(theta_->size()));
  }
  Mat v = Eigen::Map<const Mat>(theta_->data() + offset, rows, cols);
  const Var out = push(std::move(v), 1, nullptr);
  param_spans_.emplace_back(out.id, offset);
  return out;
}

void Tape::zero_grads() {
  for (Node& n : nodes_) n.grad.setZero();
}

void Tape::backward(Var loss) {
  if (nodes_.empty()) {
    throw Error("usage-error", "backward called before any forward op");
  }
  const Node& n = node(loss.id);
  if (n.value.rows() != 1 || n.value.cols() != 1) {
    throw Error("usage-error", "backward expects a scalar loss node, got " +
                                   shape_str(n.value));
  }
  backward(loss, Mat::Ones(1, 1));
}

void Tape::backward(Var out, const Mat& seed) {
  Node& head = node(out.id);
  check_same_shape("backward seed", head.value, seed);
  zero_grads();
  head.grad = seed;
  for (int id = out.id; id >= 0; --id) {
    if (nodes_[id].pull) nodes_[id].pull();
  }
  if (theta_grad_ != nullptr) {
    for (const auto& [id, offset] : param_spans_) {
      const Mat& g = nodes_[id].grad;
      Eigen::Map<Mat>(theta_grad_->data() + offset, g.rows(), g.cols()) += g;
    }
  }
}

Var matmul(Tape& t, Var a, Var b) {
  const Mat& A = t.val(a);
  const Mat& B = t.val(b);
  if (A.cols() != B.rows()) {
    throw shape_error("matmul: " + shape_str(A) + " vs " + shape_str(B));
  }
  const int time = t.time_of(b);
  Var out = t.push(A * B, time, nullptr);
  t.node(out.id).pull = [&t, a, b, out] {
    const Mat& G = t.node(out.id).grad;
    t.node(a.id).grad.noalias() += G * t.val(b).transpose();
    t.node(b.id).grad.noalias() += t.val(a).transpose() * G;
  };
  return out;
}

Var add(Tape& t, Var a, Var b) {
  check_same_shape("add", t.val(a), t.val(b));
  Var out = t.push(t.val(a) + t.val(b), t.time_of(a), nullptr);
  t.node(out.id).pull = [&t, a, b, out] {
    const Mat& G = t.node(out.id).grad;
    t.node(a.id).grad += G;
    t.node(b.id).grad += G;
  };
  return out;
}

Var sub(Tape& t, Var a, Var b) {
  check_same_shape("sub", t.val(a), t.val(b));
  Var out = t.push(t.val(a) - t.val(b), t.time_of(a), nullptr);
  t.node(out.id).pull = [&t, a, b, out] {
    const Mat& G = t.node(out.id).grad;
    t.node(a.id).grad += G;
    t.node(b.id).grad -= G;
  };
  return out;
}

Var add_bias(Tape& t, Var x, Var b) {
  const Mat& X = t.val(x);
  const Mat& B = t.val(b);
  if (B.cols() != 1 || B.rows() != X.rows()) {
    throw shape_error("add_bias: " + shape_str(X) + " vs " + shape_str(B));
  }
  Var out = t.push(X.colwise() + B.col(0), t.time_of(x), nullptr);
  t.node(out.id).pull = [&t, x, b, out] {
    const Mat& G = t.node(out.id).grad;
    t.node(x.id).grad += G;
    t.node(b.id).grad += G.rowwise().sum();
  };
  return out;
}

Var scale(Tape& t, Var x, double s) {
  Var out = t.push(s * t.val(x), t.time_of(x), nullptr);
  t.node(out.id).pull = [&t, x, s, out] {
    t.node(x.id).grad += s * t.node(out.id).grad;
  };
  return out;
}

Var add_scaled(Tape& t, Var a, Var b, double alpha) {
  check_same_shape("add_scaled", t.val(a), t.val(b));
  Var out = t.push(t.val(a) + alpha * t.val(b), t.time_of(a), nullptr);
  t.node(out.id).pull = [&t, a, b, alpha, out] {
    const Mat& G = t.node(out.id).grad;
    t.node(a.id).grad += G;
    t.node(b.id).grad += alpha * G;
  };
  return out;
}

Var relu(Tape& t, Var x) {
  Var out = t.push(t.val(x).cwiseMax(0.0), t.time_of(x), nullptr);
  t.node(out.id).pull = [&t, x, out] {
    const Mat& Y = t.val(out);
    const Mat& G = t.node(out.id).grad;
    t.node(x.id).grad.array() += (Y.array() > 0.0).cast<double>() * G.array();
  };
  return out;
}

Var dropout(Tape& t, Var x, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw invalid_argument_error("dropout rate must lie in [0, 1)");
  }
  const Mat& X = t.val(x);
  Mat mask(X.rows(), X.cols());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = u(rng) >= rate ? keep_scale : 0.0;
  }
  Var out = t.push(X.cwiseProduct(mask), t.time_of(x), nullptr);
  t.node(out.id).pull = [&t, x, out, mask = std::move(mask)] {
    t.node(x.id).grad += t.node(out.id).grad.cwiseProduct(mask);
  };
  return out;
}

Var batchnorm_1d(Tape& t, Var x, Var gamma, Var beta, BatchNormState& state, bool train) {
  const Mat& X = t.val(x);
  const Mat& G = t.val(gamma);
  const Mat& B = t.val(beta);
  const auto C = X.rows();
  const auto N = X.cols();
  if (G.rows() != C || G.cols() != 1 || B.rows() != C || B.cols() != 1) {
    throw shape_error("batchnorm_1d: input " + shape_str(X) + " vs scale " + shape_str(G));
  }
  if (state.running_mean.size() != C) {
    throw shape_error("batchnorm_1d: state has " + std::to_string(state.running_mean.size()) +
                      " channels, input " + std::to_string(C));
  }

  Vec istd(C);
  Mat xhat(C, N);
  if (train) {
    const Vec mu = X.rowwise().mean();
    const Mat centered = X.colwise() - mu;
    const Vec var = centered.array().square().rowwise().mean();
    istd = (var.array() + state.eps).rsqrt();
    xhat = centered.array().colwise() * istd.array();
    const double m = state.momentum;
    state.running_mean = (1.0 - m) * state.running_mean + m * mu;
    const double unbias = N > 1 ? static_cast<double>(N) / (N - 1.0) : 1.0;
    state.running_var = (1.0 - m) * state.running_var + m * unbias * var;
  } else {
    istd = (state.running_var.array() + state.eps).rsqrt();
    xhat = (X.colwise() - state.running_mean).array().colwise() * istd.array();
  }

  Mat y = (xhat.array().colwise() * G.col(0).array()).colwise() + B.col(0).array();
  Var out = t.push(std::move(y), t.time_of(x), nullptr);
  t.node(out.id).pull = [&t, x, gamma, beta, out, train, istd = std::move(istd),
                         xhat = std::move(xhat)] {
    const Mat& Gy = t.node(out.id).grad;
    const auto N = Gy.cols();
    const Vec g = t.val(gamma).col(0);

    t.node(gamma.id).grad += (Gy.cwiseProduct(xhat)).rowwise().sum();
    t.node(beta.id).grad += Gy.rowwise().sum();

    if (train) {
      const Vec sum_g = Gy.rowwise().sum();
      const Vec sum_gx = (Gy.cwiseProduct(xhat)).rowwise().sum();
      Mat tmp = static_cast<double>(N) * Gy;
      tmp.colwise() -= sum_g;
      tmp -= (xhat.array().colwise() * sum_gx.array()).matrix();
      const Vec coef = g.cwiseProduct(istd) / static_cast<double>(N);
      t.node(x.id).grad += (tmp.array().colwise() * coef.array()).matrix();
    } else {
      const Vec coef = g.cwiseProduct(istd);
      t.node(x.id).grad += (Gy.array().colwise() * coef.array()).matrix();
    }
  };
  return out;
}

namespace {

// Copies x shifted right by s columns within each sample block, zero fill.
void shift_into(const Mat& x, int T, int s, Mat& out) {
  out.setZero();
  const auto B = x.cols() / T;
  for (Eigen::Index b = 0; b < B; ++b) {
    out.block(0, b * T + s, x.rows(), T - s) = x.block(0, b * T, x.rows(), T - s);
  }
}

}  // namespace

Var dilated_causal_conv1d(Tape& t, Var x, Var w, Var b, int k, int dilation) {
  const Mat& X = t.val(x);
  const Mat& W = t.val(w);
  const Mat& Bv = t.val(b);
  const int T = t.time_of(x);
  if (k < 1 || dilation < 1) {
    throw invalid_argument_error("conv kernel size and dilation must be >= 1");
  }
  if (X.cols() % T != 0) {
    throw shape_error("conv input " + shape_str(X) + " not divisible into time length " +
                      std::to_string(T));
  }
  const auto Cin = X.rows();
  if (W.cols() != Cin * k) {
    throw shape_error("conv kernels " + shape_str(W) + " vs input channels " +
                      std::to_string(Cin) + " x k " + std::to_string(k));
  }
  if (Bv.rows() != W.rows() || Bv.cols() != 1) {
    throw shape_error("conv bias " + shape_str(Bv) + " vs kernels " + shape_str(W));
  }

  Mat y = Mat::Zero(W.rows(), X.cols());
  Mat shifted(Cin, X.cols());
  for (int j = 0; j < k; ++j) {
    const int s = (k - 1 - j) * dilation;
    if (s >= T) continue;
    shift_into(X, T, s, shifted);
    y.noalias() += W.middleCols(static_cast<Eigen::Index>(j) * Cin, Cin) * shifted;
  }
  y.colwise() += Bv.col(0);

  Var out = t.push(std::move(y), T, nullptr);
  t.node(out.id).pull = [&t, x, w, b, out, k, dilation, T] {
    const Mat& G = t.node(out.id).grad;
    const Mat& X = t.val(x);
    const Mat& W = t.val(w);
    const auto Cin = X.rows();
    const auto B = X.cols() / T;
    Mat shifted(Cin, X.cols());
    for (int j = 0; j < k; ++j) {
      const int s = (k - 1 - j) * dilation;
      if (s >= T) continue;
      const auto Wj = W.middleCols(static_cast<Eigen::Index>(j) * Cin, Cin);
      const Mat gs = Wj.transpose() * G;
      Mat& gx = t.node(x.id).grad;
      for (Eigen::Index bi = 0; bi < B; ++bi) {
        gx.block(0, bi * T, Cin, T - s) += gs.block(0, bi * T + s, Cin, T - s);
      }
      shift_into(X, T, s, shifted);
      t.node(w.id).grad.middleCols(static_cast<Eigen::Index>(j) * Cin, Cin).noalias() +=
          G * shifted.transpose();
    }
    t.node(b.id).grad += G.rowwise().sum();
  };
  return out;
}

Var last_time_step(Tape& t, Var x) {
  const Mat& X = t.val(x);
  const int T = t.time_of(x);
  if (X.cols() % T != 0) {
    throw shape_error("last_time_step input " + shape_str(X) + " vs time " +
                      std::to_string(T));
  }
  const auto B = X.cols() / T;
  Mat y(X.rows(), B);
  for (Eigen::Index b = 0; b < B; ++b) y.col(b) = X.col(b * T + T - 1);
  Var out = t.push(std::move(y), 1, nullptr);
  t.node(out.id).pull = [&t, x, out, T] {
    const Mat& G = t.node(out.id).grad;
    Mat& gx = t.node(x.id).grad;
    for (Eigen::Index b = 0; b < G.cols(); ++b) gx.col(b * T + T - 1) += G.col(b);
  };
  return out;
}

Var flatten_time(Tape& t, Var x) {
  const Mat& X = t.val(x);
  const int T = t.time_of(x);
  if (X.cols() % T != 0) {
    throw shape_error("flatten_time input " + shape_str(X) + " vs time " + std::to_string(T));
  }
  const auto C = X.rows();
  const auto B = X.cols() / T;
  Mat y(C * T, B);
  for (Eigen::Index b = 0; b < B; ++b) {
    y.col(b) = Eigen::Map<const Vec>(X.data() + b * T * C, C * T);
  }
  Var out = t.push(std::move(y), 1, nullptr);
  t.node(out.id).pull = [&t, x, out, T] {
    const Mat& G = t.node(out.id).grad;
    Mat& gx = t.node(x.id).grad;
    const auto C = gx.rows();
    for (Eigen::Index b = 0; b < G.cols(); ++b) {
      Eigen::Map<Vec>(gx.data() + b * T * C, C * T) += G.col(b);
    }
  };
  return out;
}

Var per_sample_affine(Tape& t, Var x, const std::vector<Eigen::Matrix<double, 6, 6>>& A,
                      const Mat& c) {
  const Mat& X = t.val(x);
  if (X.rows() != 6 || X.cols() != static_cast<Eigen::Index>(A.size()) ||
      c.rows() != 6 || c.cols() != X.cols()) {
    throw shape_error("per_sample_affine: input " + shape_str(X) + ", " +
                      std::to_string(A.size()) + " matrices, offset " + shape_str(c));
  }
  Mat y(6, X.cols());
  for (Eigen::Index b = 0; b < X.cols(); ++b) y.col(b) = A[b] * X.col(b) + c.col(b);
  Var out = t.push(std::move(y), 1, nullptr);
  t.node(out.id).pull = [&t, x, out, A] {
    const Mat& G = t.node(out.id).grad;
    Mat& gx = t.node(x.id).grad;
    for (Eigen::Index b = 0; b < G.cols(); ++b) gx.col(b) += A[b].transpose() * G.col(b);
  };
  return out;
}

Var mean_squared_column_norm(Tape& t, Var e) {
  const Mat& E = t.val(e);
  if (E.cols() == 0) {
    throw invalid_argument_error("mean_squared_column_norm on an empty batch");
  }
  Mat y(1, 1);
  y(0, 0) = E.squaredNorm() / static_cast<double>(E.cols());
  Var out = t.push(std::move(y), 1, nullptr);
  t.node(out.id).pull = [&t, e, out] {
    const double g = t.node(out.id).grad(0, 0);
    const Mat& E = t.val(e);
    t.node(e.id).grad += (2.0 / E.cols()) * g * E;
  };
  return out;
}

void adam_step(Vec& params, const Vec& grad, AdamState& state, double lr, double beta1,
               double beta2, double eps) {
  if (params.size() != grad.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw shape_error("adam_step: params " + std::to_string(params.size()) + ", grad " +
                      std::to_string(grad.size()) + ", moments " +
                      std::to_string(state.m.size()));
  }
  state.t += 1;
  state.m = beta1 * state.m + (1.0 - beta1) * grad;
  state.v = beta2 * state.v + (1.0 - beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  params.array() -=
      lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + eps);
}

}  // namespace quadlearn::grad
