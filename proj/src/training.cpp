#include "quadlearn/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "quadlearn/dynamics.hpp"

namespace quadlearn {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// splitmix64 finalizer over (seed, epoch, step): independent, reproducible
// RNG streams without coupling consumption across steps.
uint64_t mix(uint64_t a, uint64_t b, uint64_t c) {
  uint64_t x = a + 0x9e3779b97f4a7c15ull * (b + 1) + 0x2545f4914f6cdd1dull * (c + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

Vec3 sample_ball(std::mt19937_64& rng, double radius) {
  std::uniform_real_distribution<double> u(-radius, radius);
  while (true) {
    const Vec3 v(u(rng), u(rng), u(rng));
    if (v.norm() <= radius) return v;
  }
}

QuadState newest_state(const HistorySample& s) {
  const auto T = s.X.cols();
  QuadState x;
  x.v = s.X.block<3, 1>(0, T - 1);
  x.q = Quat::from_coeffs(s.X.block<4, 1>(3, T - 1));
  x.omega = s.X.block<3, 1>(7, T - 1);
  return x;
}

void append_g17(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace

std::string schedule_to_string(LossSchedule s) {
  switch (s) {
    case LossSchedule::Curriculum: return "curriculum";
    case LossSchedule::MseOnly: return "mse_only";
    case LossSchedule::PhysicsOnly: return "physics_only";
  }
  throw invalid_argument_error("unknown loss schedule");
}

LossSchedule schedule_from_string(const std::string& s) {
  if (s == "curriculum") return LossSchedule::Curriculum;
  if (s == "mse_only") return LossSchedule::MseOnly;
  if (s == "physics_only") return LossSchedule::PhysicsOnly;
  throw invalid_argument_error("unknown loss schedule '" + s + "'");
}

void TrainConfig::validate() const {
  if (epochs < 2 || epochs % 2 != 0) {
    throw invalid_argument_error("epochs must be even and at least 2");
  }
  if (batch_train < 1 || batch_physics < 1) {
    throw invalid_argument_error("batch sizes must be at least 1");
  }
  if (!(learning_rate > 0.0)) throw invalid_argument_error("learning rate must be positive");
  if (!(lambda >= 0.0)) throw invalid_argument_error("lambda must be non-negative");
}

double TrainConfig::lambda_at(int epoch) const {
  switch (schedule) {
    case LossSchedule::MseOnly: return 0.0;
    case LossSchedule::PhysicsOnly: return lambda;
    case LossSchedule::Curriculum: return epoch < epochs / 2 ? 0.0 : lambda;
  }
  throw invalid_argument_error("unknown loss schedule");
}

uint64_t hash_samples(const std::vector<HistorySample>& samples) {
  uint64_t h = fnv1a(nullptr, 0);
  auto feed = [&h](const double* data, std::size_t n) {
    h = fnv1a(data, n * sizeof(double), h);
  };
  for (const HistorySample& s : samples) {
    feed(s.X.data(), static_cast<std::size_t>(s.X.size()));
    feed(s.U.data(), static_cast<std::size_t>(s.U.size()));
    feed(s.label.data(), 6);
    const double meta[2] = {static_cast<double>(s.trajectory_id), s.t_label};
    feed(meta, 2);
  }
  return h;
}

PhysicsBatch sample_physics_batch(const PhysicsBounds& bounds, int count, int T,
                                  double delta_t, uint64_t seed,
                                  const NominalParams& params) {
  if (count < 1) throw invalid_argument_error("physics batch needs at least one sample");
  if (T < 1) throw invalid_argument_error("history length must be at least 1");
  if (!(delta_t > 0.0)) throw invalid_argument_error("delta_t must be positive");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> spread(-bounds.u_spread, bounds.u_spread);
  std::uniform_real_distribution<double> jitter(-bounds.u_step, bounds.u_step);
  if (params.m <= 0.0 || params.k_f <= 0.0) {
    throw invalid_argument_error("physics batch requires positive mass and k_f");
  }
  // sampling center: hover, clamped at saturation so that badly misspecified
  // priors (hover above u_max) still yield a valid distillation batch
  const Control hover = Control::Constant(
      std::min(std::sqrt(params.m * params.g / (4.0 * params.k_f)), params.u_max));
  const auto deriv = [&params](const QuadState& x, const Control& u) {
    return nominal_derivative(x, u, params);
  };

  PhysicsBatch batch;
  batch.samples.reserve(count);
  for (int i = 0; i < count; ++i) {
    QuadState x;
    Control u;
    for (int attempt = 0;; ++attempt) {
      if (attempt >= 100000) {
        throw invalid_argument_error("physics bounds reject every candidate state");
      }
      x.p.setZero();
      x.v = sample_ball(rng, bounds.v_max);
      const Vec3 rot = sample_ball(rng, bounds.tilt_max);
      const double angle = rot.norm();
      x.q = angle > 1e-12 ? quat_from_axis_angle(rot / angle, angle) : Quat();
      x.omega = sample_ball(rng, bounds.omega_max);
      for (int m = 0; m < 4; ++m) {
        u(m) = std::clamp(hover(m) + spread(rng), 0.0, params.u_max);
      }
      const StateDerivative d = deriv(x, u);
      if (d.dv.norm() <= bounds.dv_max && d.domega.norm() <= bounds.domega_max) break;
    }

    HistorySample s;
    s.X.resize(10, T);
    s.U.resize(4, T);
    s.t_label = (T - 1) * delta_t;
    for (int t = 0; t < T; ++t) {
      s.X.block<3, 1>(0, t) = x.v;
      s.X.block<4, 1>(3, t) = x.q.coeffs();
      s.X.block<3, 1>(7, t) = x.omega;
      s.U.col(t) = u;
      if (t + 1 < T) {
        x = rk4_step(deriv, x, u, delta_t);
        for (int m = 0; m < 4; ++m) {
          u(m) = std::clamp(u(m) + jitter(rng), 0.0, params.u_max);
        }
      }
    }
    const StateDerivative d = deriv(newest_state(s), s.U.col(T - 1));
    s.label.head<3>() = d.dv;
    s.label.tail<3>() = d.domega;
    batch.samples.push_back(std::move(s));
  }
  batch.content_hash = hash_samples(batch.samples);
  return batch;
}

double mse_loss(const grad::Mat& predictions, const grad::Mat& labels) {
  if (predictions.cols() == 0) throw invalid_argument_error("empty batch");
  if (predictions.rows() != labels.rows() || predictions.cols() != labels.cols()) {
    throw shape_error("predictions " + std::to_string(predictions.rows()) + "x" +
                      std::to_string(predictions.cols()) + " vs labels " +
                      std::to_string(labels.rows()) + "x" + std::to_string(labels.cols()));
  }
  return (predictions - labels).colwise().squaredNorm().mean();
}

grad::Mat physics_targets(const PhysicsBatch& batch, const NominalParams& params) {
  grad::Mat targets(6, batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const HistorySample& s = batch.samples[i];
    const StateDerivative d =
        nominal_derivative(newest_state(s), s.U.col(s.U.cols() - 1), params);
    targets.block<3, 1>(0, i) = d.dv;
    targets.block<3, 1>(3, i) = d.domega;
  }
  return targets;
}

double physics_loss(const Model& model, const PhysicsBatch& batch,
                    const NominalParams& params) {
  if (batch.size() == 0) throw invalid_argument_error("empty physics batch");
  std::vector<int> index(batch.size());
  std::iota(index.begin(), index.end(), 0);
  BatchContext ctx;
  BatchContext* ctx_ptr = model.spec.kind == ModelKind::RESTCN ? &ctx : nullptr;
  const grad::Mat input = assemble_batch(batch.samples, index, model.spec, nullptr, ctx_ptr);

  Model& m = const_cast<Model&>(model);  // eval mode leaves batchnorm state untouched
  grad::Tape tape(&model.theta, nullptr);
  const grad::Var pred =
      model_forward(tape, m, tape.value(input, model.spec.T), false, nullptr, ctx_ptr);
  return mse_loss(tape.val(pred), physics_targets(batch, params));
}

double composite_loss(double mse, double physics, double lambda) {
  if (!(lambda >= 0.0)) throw invalid_argument_error("lambda must be non-negative");
  return mse + lambda * physics;
}

grad::Mat assemble_batch(const std::vector<HistorySample>& samples,
                         const std::vector<int>& index, const ModelSpec& spec,
                         grad::Mat* labels, BatchContext* ctx) {
  if (index.empty()) throw invalid_argument_error("empty batch");
  const int T = spec.T;
  const int B = static_cast<int>(index.size());
  grad::Mat input(ModelSpec::input_rows, static_cast<Eigen::Index>(T) * B);
  if (labels) labels->resize(ModelSpec::output_dim, B);
  if (ctx) {
    ctx->newest_state.clear();
    ctx->newest_input.clear();
    ctx->newest_state.reserve(B);
    ctx->newest_input.reserve(B);
  }
  for (int b = 0; b < B; ++b) {
    const HistorySample& s = samples.at(index[b]);
    if (s.X.rows() != 10 || s.U.rows() != 4 || s.X.cols() != T || s.U.cols() != T) {
      throw shape_error("sample window " + std::to_string(s.X.rows()) + "x" +
                        std::to_string(s.X.cols()) + " vs expected 10x" + std::to_string(T));
    }
    input.block(0, static_cast<Eigen::Index>(b) * T, 10, T) = s.X;
    input.block(10, static_cast<Eigen::Index>(b) * T, 4, T) = s.U * spec.motor_scale;
    if (labels) labels->col(b) = s.label;
    if (ctx) {
      ctx->newest_state.push_back(newest_state(s));
      ctx->newest_input.push_back(s.U.col(T - 1));
    }
  }
  return input;
}

void save_loss_trace(const LossTrace& trace, const std::filesystem::path& csv) {
  std::string out = "epoch,lambda,mse,physics\n";
  for (std::size_t e = 0; e < trace.mse.size(); ++e) {
    out += std::to_string(e);
    out += ',';
    append_g17(out, trace.lambda[e]);
    out += ',';
    append_g17(out, trace.mse[e]);
    out += ',';
    append_g17(out, trace.physics[e]);
    out += '\n';
  }
  std::ofstream f(csv, std::ios::binary);
  if (!f) throw io_error("cannot write " + csv.string());
  f << out;
  if (!f.good()) throw io_error("short write to " + csv.string());
}

TrainResult train(Model model, const std::vector<HistorySample>& train_set,
                  const PhysicsBatch& physics, const TrainConfig& cfg) {
  cfg.validate();
  const bool physics_only = cfg.schedule == LossSchedule::PhysicsOnly;
  const bool wants_physics = physics_only || (cfg.schedule == LossSchedule::Curriculum &&
                                              cfg.lambda > 0.0);
  if (!physics_only && train_set.empty()) {
    throw invalid_argument_error("training set is empty");
  }
  if (wants_physics && physics.size() == 0) {
    throw invalid_argument_error("schedule needs a physics batch");
  }

  const bool restcn = model.spec.kind == ModelKind::RESTCN;
  grad::Mat phys_input;
  grad::Mat phys_target;
  BatchContext phys_ctx;
  if (wants_physics) {
    std::vector<int> all(physics.size());
    std::iota(all.begin(), all.end(), 0);
    phys_input = assemble_batch(physics.samples, all, model.spec,
                                nullptr, restcn ? &phys_ctx : nullptr);
    phys_target = physics_targets(physics, model.prior);
  }

  grad::AdamState adam(model.param_count());
  grad::Vec theta_grad = grad::Vec::Zero(model.param_count());
  LossTrace trace;
  const int half = cfg.epochs / 2;

  std::vector<int> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lam = cfg.lambda_at(epoch);
    if (cfg.schedule == LossSchedule::Curriculum && epoch == half) adam.reset();

    double mse_sum = 0.0;
    double pi_sum = 0.0;
    int steps = 0;
    bool used_mse = false;
    bool used_pi = false;

    auto run_step = [&](const std::vector<int>& idx, int step) {
      theta_grad.setZero();
      grad::Tape tape(&model.theta, &theta_grad);
      std::mt19937_64 drop_rng(mix(cfg.seed, static_cast<uint64_t>(epoch),
                                   static_cast<uint64_t>(step)));

      grad::Var loss;
      double mse_val = kNaN;
      double pi_val = kNaN;
      if (!physics_only) {
        grad::Mat target;
        BatchContext ctx;
        const grad::Mat input = assemble_batch(train_set, idx, model.spec, &target,
                                               restcn ? &ctx : nullptr);
        const grad::Var pred =
            model_forward(tape, model, tape.value(input, model.spec.T), true, &drop_rng,
                          restcn ? &ctx : nullptr);
        const grad::Var err = grad::sub(tape, pred, tape.value(target));
        const grad::Var l_mse = grad::mean_squared_column_norm(tape, err);
        mse_val = tape.val(l_mse)(0, 0);
        loss = l_mse;
        if (lam > 0.0) {
          const grad::Var ppred =
              model_forward(tape, model, tape.value(phys_input, model.spec.T), true,
                            &drop_rng, restcn ? &phys_ctx : nullptr);
          const grad::Var perr = grad::sub(tape, ppred, tape.value(phys_target));
          const grad::Var l_pi = grad::mean_squared_column_norm(tape, perr);
          pi_val = tape.val(l_pi)(0, 0);
          loss = grad::add_scaled(tape, l_mse, l_pi, lam);
        }
      } else {
        const grad::Var ppred =
            model_forward(tape, model, tape.value(phys_input, model.spec.T), true,
                          &drop_rng, restcn ? &phys_ctx : nullptr);
        const grad::Var perr = grad::sub(tape, ppred, tape.value(phys_target));
        const grad::Var l_pi = grad::mean_squared_column_norm(tape, perr);
        pi_val = tape.val(l_pi)(0, 0);
        loss = l_pi;
      }

      if (!std::isfinite(tape.val(loss)(0, 0))) {
        throw training_diverged_error("non-finite loss at epoch " + std::to_string(epoch));
      }
      tape.backward(loss);
      grad::adam_step(model.theta, theta_grad, adam, cfg.learning_rate);

      if (std::isfinite(mse_val)) {
        mse_sum += mse_val;
        used_mse = true;
      }
      if (std::isfinite(pi_val)) {
        pi_sum += pi_val;
        used_pi = true;
      }
      ++steps;
    };

    if (physics_only) {
      run_step({}, 0);
    } else {
      std::mt19937_64 shuffle_rng(mix(cfg.seed, static_cast<uint64_t>(epoch), ~0ull));
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      const int n = static_cast<int>(order.size());
      for (int start = 0, step = 1; start < n; start += cfg.batch_train, ++step) {
        const int stop = std::min(start + cfg.batch_train, n);
        run_step(std::vector<int>(order.begin() + start, order.begin() + stop), step);
      }
    }

    trace.mse.push_back(used_mse ? mse_sum / steps : kNaN);
    trace.physics.push_back(used_pi ? pi_sum / steps : kNaN);
    trace.lambda.push_back(lam);
  }

  return TrainResult{std::move(model), std::move(trace)};
}

namespace {

EvalReport score(const std::vector<Vec6>& errors, double total_us) {
  EvalReport r;
  r.samples = static_cast<int>(errors.size());
  if (r.samples == 0) return r;
  double sq = 0.0, sq_dv = 0.0, sq_dw = 0.0;
  for (const Vec6& e : errors) {
    sq += e.squaredNorm();
    sq_dv += e.head<3>().squaredNorm();
    sq_dw += e.tail<3>().squaredNorm();
  }
  const double n = static_cast<double>(r.samples);
  r.rmse = std::sqrt(sq / (6.0 * n));
  r.rmse_dv = std::sqrt(sq_dv / (3.0 * n));
  r.rmse_domega = std::sqrt(sq_dw / (3.0 * n));
  r.mean_forward_us = total_us / n;
  return r;
}

}  // namespace

EvalReport evaluate_rmse(const Model& model, const std::vector<HistorySample>& samples) {
  std::vector<Vec6> errors;
  errors.reserve(samples.size());
  double total_us = 0.0;
  for (const HistorySample& s : samples) {
    const auto t0 = std::chrono::steady_clock::now();
    const Vec6 pred = forward_eval(model, s.X, s.U);
    const auto t1 = std::chrono::steady_clock::now();
    total_us += std::chrono::duration<double, std::micro>(t1 - t0).count();
    errors.push_back(pred - s.label);
  }
  return score(errors, total_us);
}

EvalReport evaluate_nominal_rmse(const NominalParams& params,
                                 const std::vector<HistorySample>& samples) {
  std::vector<Vec6> errors;
  errors.reserve(samples.size());
  double total_us = 0.0;
  for (const HistorySample& s : samples) {
    const auto t0 = std::chrono::steady_clock::now();
    const StateDerivative d =
        nominal_derivative(newest_state(s), s.U.col(s.U.cols() - 1), params);
    const auto t1 = std::chrono::steady_clock::now();
    total_us += std::chrono::duration<double, std::micro>(t1 - t0).count();
    Vec6 e;
    e.head<3>() = d.dv - s.label.head<3>();
    e.tail<3>() = d.domega - s.label.tail<3>();
    errors.push_back(e);
  }
  return score(errors, total_us);
}

}  // namespace quadlearn
