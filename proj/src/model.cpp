#include "quadlearn/model.hpp"

#include <numeric>

#include "quadlearn/quat.hpp"

namespace quadlearn {

std::string kind_to_string(ModelKind k) {
  switch (k) {
    case ModelKind::PITCN: return "pitcn";
    case ModelKind::PIMLP: return "pimlp";
    case ModelKind::RESTCN: return "restcn";
  }
  throw invalid_argument_error("unknown model kind");
}

ModelKind kind_from_string(const std::string& s) {
  if (s == "pitcn") return ModelKind::PITCN;
  if (s == "pimlp") return ModelKind::PIMLP;
  if (s == "restcn") return ModelKind::RESTCN;
  throw invalid_argument_error("unknown model kind '" + s + "'");
}

int ModelSpec::receptive_field() const {
  const int sum = std::accumulate(dilations.begin(), dilations.end(), 0);
  return 1 + (kernel - 1) * sum;
}

namespace {

bool has_encoder(ModelKind k) { return k != ModelKind::PIMLP; }

}  // namespace

void validate_spec(const ModelSpec& s) {
  if (s.T < 1) throw invalid_argument_error("model history T must be >= 1");
  if (s.dropout < 0.0 || s.dropout >= 1.0) {
    throw invalid_argument_error("dropout rate must lie in [0, 1)");
  }
  if (s.mlp_hidden.empty()) throw invalid_argument_error("decoder needs hidden layers");
  if (has_encoder(s.kind)) {
    if (s.tcn_channels.empty() || s.tcn_channels.size() != s.dilations.size()) {
      throw invalid_argument_error("TCN needs matching channel and dilation lists");
    }
    if (s.receptive_field() < s.T) {
      throw invalid_argument_error("TCN receptive field " +
                                   std::to_string(s.receptive_field()) +
                                   " shorter than history T " + std::to_string(s.T));
    }
  }
}

namespace {

std::vector<LayerInfo> build_layers(const ModelSpec& s) {
  std::vector<LayerInfo> layers;
  int offset = 0;
  auto push = [&](const std::string& name, int rows, int cols) {
    layers.push_back({name, offset, rows, cols});
    offset += rows * cols;
  };

  int feat = ModelSpec::input_rows;
  if (has_encoder(s.kind)) {
    for (size_t i = 0; i < s.tcn_channels.size(); ++i) {
      const int c = s.tcn_channels[i];
      const std::string id = std::to_string(i + 1);
      push("conv" + id + ".W", c, feat * s.kernel);
      push("conv" + id + ".b", c, 1);
      push("bn" + id + ".gamma", c, 1);
      push("bn" + id + ".beta", c, 1);
      feat = c;
    }
  } else {
    feat = ModelSpec::input_rows * s.T;
  }
  for (size_t j = 0; j < s.mlp_hidden.size(); ++j) {
    const int h = s.mlp_hidden[j];
    const std::string id = std::to_string(j + 1);
    push("mlp" + id + ".W", h, feat);
    push("mlp" + id + ".b", h, 1);
    feat = h;
  }
  push("out.W", ModelSpec::output_dim, feat);
  push("out.b", ModelSpec::output_dim, 1);
  return layers;
}

}  // namespace

Model Model::create(const ModelSpec& spec, uint64_t seed, const NominalParams& prior) {
  validate_spec(spec);
  Model m;
  m.spec = spec;
  m.prior = prior;
  m.layers = build_layers(spec);
  const LayerInfo& last = m.layers.back();
  m.theta = grad::Vec::Zero(last.offset + last.size());

  std::mt19937_64 rng(seed);
  for (const LayerInfo& l : m.layers) {
    const bool is_weight = l.name.ends_with(".W");
    const bool is_gamma = l.name.ends_with(".gamma");
    if (is_weight) {
      const double limit = std::sqrt(6.0 / l.cols);  // cols = fan-in for W
      std::uniform_real_distribution<double> u(-limit, limit);
      for (int i = 0; i < l.size(); ++i) m.theta[l.offset + i] = u(rng);
    } else if (is_gamma) {
      m.theta.segment(l.offset, l.size()).setOnes();
    }
  }

  if (has_encoder(spec.kind)) {
    for (int c : spec.tcn_channels) m.bn.emplace_back(c);
  }
  return m;
}

const LayerInfo& Model::layer(const std::string& name) const {
  for (const LayerInfo& l : layers) {
    if (l.name == name) return l;
  }
  throw invalid_argument_error("no layer named '" + name + "'");
}

namespace {

grad::Var layer_param(grad::Tape& tape, const Model& m, const std::string& name) {
  const LayerInfo& l = m.layer(name);
  return tape.param(l.offset, l.rows, l.cols);
}

// Encoder + decoder without the RESTCN composition.
grad::Var raw_forward(grad::Tape& tape, Model& model, grad::Var input, bool train,
                      std::mt19937_64* rng) {
  const ModelSpec& s = model.spec;
  const grad::Mat& in = tape.val(input);
  if (in.rows() != ModelSpec::input_rows || tape.time_of(input) != s.T ||
      in.cols() % s.T != 0) {
    throw shape_error("model input " + std::to_string(in.rows()) + "x" +
                      std::to_string(in.cols()) + " does not match 14 x (T=" +
                      std::to_string(s.T) + " * batch)");
  }
  if (train && s.dropout > 0.0 && rng == nullptr) {
    throw invalid_argument_error("train-mode forward needs an rng for dropout");
  }

  grad::Var h = input;
  if (has_encoder(s.kind)) {
    for (size_t i = 0; i < s.tcn_channels.size(); ++i) {
      const std::string id = std::to_string(i + 1);
      h = grad::dilated_causal_conv1d(tape, h, layer_param(tape, model, "conv" + id + ".W"),
                                      layer_param(tape, model, "conv" + id + ".b"),
                                      s.kernel, s.dilations[i]);
      h = grad::relu(tape, h);
      h = grad::batchnorm_1d(tape, h, layer_param(tape, model, "bn" + id + ".gamma"),
                             layer_param(tape, model, "bn" + id + ".beta"), model.bn[i],
                             train);
      if (train && s.dropout > 0.0) h = grad::dropout(tape, h, s.dropout, *rng);
    }
    h = grad::last_time_step(tape, h);
  } else {
    h = grad::flatten_time(tape, h);
  }
  for (size_t j = 0; j < s.mlp_hidden.size(); ++j) {
    const std::string id = std::to_string(j + 1);
    h = grad::add_bias(tape, grad::matmul(tape, layer_param(tape, model, "mlp" + id + ".W"), h),
                       layer_param(tape, model, "mlp" + id + ".b"));
    h = grad::relu(tape, h);
  }
  return grad::add_bias(tape, grad::matmul(tape, layer_param(tape, model, "out.W"), h),
                        layer_param(tape, model, "out.b"));
}

}  // namespace

grad::Var model_forward(grad::Tape& tape, Model& model, grad::Var input, bool train,
                        std::mt19937_64* rng, const BatchContext* ctx) {
  grad::Var out = raw_forward(tape, model, input, train, rng);
  if (model.spec.kind != ModelKind::RESTCN) return out;

  const auto batch = tape.val(out).cols();
  if (ctx == nullptr || static_cast<Eigen::Index>(ctx->newest_state.size()) != batch ||
      static_cast<Eigen::Index>(ctx->newest_input.size()) != batch) {
    throw invalid_argument_error("RESTCN forward needs newest state/input per sample");
  }
  std::vector<Mat6> A(batch);
  grad::Mat c(6, batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const QuadState& x = ctx->newest_state[b];
    const StateDerivative nom = nominal_derivative(x, ctx->newest_input[b], model.prior);
    A[b].setZero();
    A[b].topLeftCorner<3, 3>() = quat_to_rotation(quat_normalize(x.q)) / model.prior.m;
    for (int i = 0; i < 3; ++i) A[b](3 + i, 3 + i) = 1.0 / model.prior.J(i);
    c.col(b) << nom.dv, nom.domega;
  }
  return grad::per_sample_affine(tape, out, A, c);
}

namespace {

void unpack_window(const Model& model, const grad::Mat& window, QuadState& x, Control& u) {
  const auto T = window.cols();
  x.p.setZero();
  x.v = window.block<3, 1>(0, T - 1);
  x.q = Quat::from_coeffs(window.block<4, 1>(3, T - 1));
  x.omega = window.block<3, 1>(7, T - 1);
  u = window.block<4, 1>(10, T - 1) / model.spec.motor_scale;
}

grad::Mat stack_windows(const Model& model, const grad::Mat& X, const grad::Mat& U) {
  if (X.rows() != 10 || U.rows() != 4 || X.cols() != model.spec.T ||
      U.cols() != model.spec.T) {
    throw shape_error("window shapes " + std::to_string(X.rows()) + "x" +
                      std::to_string(X.cols()) + " / " + std::to_string(U.rows()) + "x" +
                      std::to_string(U.cols()) + " vs expected 10/4 x T=" +
                      std::to_string(model.spec.T));
  }
  grad::Mat w(14, model.spec.T);
  w.topRows(10) = X;
  w.bottomRows(4) = U * model.spec.motor_scale;
  return w;
}

}  // namespace

Vec6 forward_eval_window(const Model& model, const grad::Mat& window14xT) {
  if (window14xT.rows() != ModelSpec::input_rows || window14xT.cols() != model.spec.T) {
    throw shape_error("window " + std::to_string(window14xT.rows()) + "x" +
                      std::to_string(window14xT.cols()) + " vs expected 14x" +
                      std::to_string(model.spec.T));
  }
  Model& m = const_cast<Model&>(model);  // eval mode leaves batchnorm state untouched
  grad::Tape tape(&model.theta, nullptr);
  grad::Var in = tape.value(window14xT, model.spec.T);
  BatchContext ctx;
  const BatchContext* ctx_ptr = nullptr;
  if (model.spec.kind == ModelKind::RESTCN) {
    QuadState x;
    Control u;
    unpack_window(model, window14xT, x, u);
    ctx.newest_state.push_back(x);
    ctx.newest_input.push_back(u);
    ctx_ptr = &ctx;
  }
  const grad::Var out = model_forward(tape, m, in, false, nullptr, ctx_ptr);
  return tape.val(out).col(0);
}

Vec6 forward_eval(const Model& model, const grad::Mat& X, const grad::Mat& U) {
  return forward_eval_window(model, stack_windows(model, X, U));
}

StateDerivative predict_derivative(const Model& model, const grad::Mat& X,
                                   const grad::Mat& U) {
  const grad::Mat window = stack_windows(model, X, U);
  QuadState x;
  Control u;
  unpack_window(model, window, x, u);

  if (model.spec.kind == ModelKind::RESTCN) {
    Model& m = const_cast<Model&>(model);
    grad::Tape tape(&model.theta, nullptr);
    const grad::Var out = raw_forward(tape, m, tape.value(window, model.spec.T), false,
                                      nullptr);
    const Vec6 r = tape.val(out).col(0);
    return residual_derivative(x, u, model.prior, r.head<3>(), r.tail<3>());
  }

  const Vec6 pred = forward_eval_window(model, window);
  StateDerivative d;
  d.dp = x.v;
  d.dv = pred.head<3>();
  d.dq = quat_derivative(quat_normalize(x.q), x.omega);
  d.domega = pred.tail<3>();
  return d;
}

Eigen::Matrix<double, 6, Eigen::Dynamic> input_jacobian(const Model& model,
                                                        const grad::Mat& window14xT) {
  Model& m = const_cast<Model&>(model);
  grad::Tape tape(&model.theta, nullptr);
  grad::Var in = tape.input(window14xT, model.spec.T);
  const grad::Var out = raw_forward(tape, m, in, false, nullptr);

  const auto n = window14xT.size();
  Eigen::Matrix<double, 6, Eigen::Dynamic> jac(6, n);
  grad::Mat seed = grad::Mat::Zero(6, 1);
  for (int r = 0; r < 6; ++r) {
    seed.setZero();
    seed(r, 0) = 1.0;
    tape.backward(out, seed);
    jac.row(r) = Eigen::Map<const grad::Vec>(tape.grad_of(in).data(), n);
  }
  return jac;
}

}  // namespace quadlearn
