#include "artifact/diffusion.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

namespace artifact {

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw DomainError("schedule needs at least one step");
  if (!(beta_start > 0 && beta_end < 1 && beta_start <= beta_end)) {
    throw DomainError("betas must satisfy 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.steps_ = steps;
  s.beta_.assign(static_cast<std::size_t>(steps) + 1, 0.0);
  s.alpha_bar_.assign(static_cast<std::size_t>(steps) + 1, 1.0);
  for (int t = 1; t <= steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / (steps - 1);
    s.beta_[t] = beta_start + frac * (beta_end - beta_start);
    s.alpha_bar_[t] = s.alpha_bar_[t - 1] * (1.0 - s.beta_[t]);
  }
  return s;
}

NoiseSchedule NoiseSchedule::scaled_linear(int steps) {
  if (steps < 1) throw DomainError("schedule needs at least one step");
  const double factor = 1000.0 / steps;
  return linear(steps, 1e-4 * factor, std::min(0.02 * factor, 0.999));
}

int NoiseSchedule::check(int t, int lo) const {
  if (t < lo || t > steps_) throw DomainError("timestep " + std::to_string(t) + " out of range");
  return t;
}

Eigen::VectorXd forward_noise(const Eigen::VectorXd& x0, int t, const Eigen::VectorXd& eps,
                              const NoiseSchedule& schedule) {
  if (x0.size() != eps.size()) throw DomainError("noise dimension mismatch");
  if (t < 1) throw DomainError("forward_noise needs t >= 1");
  const double ab = schedule.alpha_bar(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

double denoising_loss(const Denoiser& model, const Eigen::MatrixXd& x0, std::span<const int> t,
                      std::span<const int> c, const Eigen::MatrixXd& eps, const NoiseSchedule& schedule,
                      Eigen::VectorXd* grad) {
  Eigen::MatrixXd x_t(x0.rows(), x0.cols());
  for (Eigen::Index j = 0; j < x0.cols(); ++j) {
    const double ab = schedule.alpha_bar(t[static_cast<std::size_t>(j)]);
    x_t.col(j) = std::sqrt(ab) * x0.col(j) + std::sqrt(1.0 - ab) * eps.col(j);
  }
  Denoiser::Cache cache;
  const Eigen::MatrixXd residual = model.forward(x_t, t, c, grad ? &cache : nullptr) - eps;
  const double count = static_cast<double>(residual.size());
  if (grad) model.backward(cache, (2.0 / count) * residual, *grad);
  return residual.squaredNorm() / count;
}

Adam::Adam(Eigen::Index size, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(Eigen::VectorXd::Zero(size)),
      v_(Eigen::VectorXd::Zero(size)) {
  if (lr < 0) throw DomainError("learning rate must be non-negative");
}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (grad.size() != m_.size() || params.size() != m_.size()) throw DomainError("Adam size mismatch");
  ++t_;
  m_ = beta1_ * m_ + (1 - beta1_) * grad;
  v_ = beta2_ * v_ + (1 - beta2_) * grad.cwiseAbs2();
  const double c1 = 1 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

TrainResult train_denoiser(Denoiser model, const ExampleSampler& data, const TrainConfig& cfg,
                           const NoiseSchedule& schedule, Rng& rng) {
  if (!(cfg.learning_rate >= 0)) throw DomainError("learning rate must be non-negative");
  if (cfg.batch_size < 1) throw DomainError("batch size must be positive");
  const int dim = model.topology().state_dim;
  Adam adam(model.parameter_count(), cfg.learning_rate);
  TrainResult result{std::move(model), {}};
  result.loss_curve.reserve(static_cast<std::size_t>(std::max(cfg.steps, 0)));
  Eigen::MatrixXd x0(dim, cfg.batch_size), eps(dim, cfg.batch_size);
  std::vector<int> t(static_cast<std::size_t>(cfg.batch_size)), c(t.size());
  Eigen::VectorXd grad(result.model.parameter_count());
  for (int step = 0; step < cfg.steps; ++step) {
    for (int j = 0; j < cfg.batch_size; ++j) {
      auto [state, condition] = data(rng);
      if (state.size() != dim) throw DomainError("sampler produced a state of the wrong dimension");
      x0.col(j) = state;
      c[j] = condition;
      t[j] = 1 + static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(schedule.steps())));
      for (int i = 0; i < dim; ++i) eps(i, j) = standard_normal(rng);
    }
    grad.setZero();
    const double loss = denoising_loss(result.model, x0, t, c, eps, schedule, &grad);
    if (!std::isfinite(loss) || !grad.allFinite()) {
      throw NumericalError("denoiser training diverged at step " + std::to_string(step));
    }
    result.loss_curve.push_back(loss);
    adam.step(result.model.parameters(), grad);
  }
  return result;
}

double gaussian_log_prob(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& mean,
                         double sigma) {
  if (!(sigma > 0)) throw DomainError("Gaussian standard deviation must be positive");
  const double var = sigma * sigma;
  return -0.5 * static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi * var) -
         (x - mean).squaredNorm() / (2.0 * var);
}

Eigen::MatrixXd reverse_mean(const Eigen::MatrixXd& x_t, const Eigen::MatrixXd& eps_hat, int t,
                             const NoiseSchedule& schedule) {
  const double coef = schedule.beta(t) / std::sqrt(1.0 - schedule.alpha_bar(t));
  return (x_t - coef * eps_hat) / std::sqrt(schedule.alpha(t));
}

std::vector<Trajectory> sample_batch(const Denoiser& model, std::span<const int> conditions, std::span<Rng> rngs,
                                     const NoiseSchedule& schedule) {
  if (conditions.size() != rngs.size()) throw DomainError("need one rng per trajectory");
  const int dim = model.topology().state_dim;
  const int steps = schedule.steps();
  const auto batch = static_cast<Eigen::Index>(conditions.size());
  std::vector<Trajectory> out(conditions.size());
  Eigen::MatrixXd x(dim, batch);
  for (Eigen::Index j = 0; j < batch; ++j) {
    auto& traj = out[static_cast<std::size_t>(j)];
    traj.condition = conditions[static_cast<std::size_t>(j)];
    traj.states.resize(dim, steps + 1);
    traj.means = Eigen::MatrixXd::Zero(dim, steps + 1);
    traj.sigmas = Eigen::VectorXd::Zero(steps + 1);
    traj.log_probs = Eigen::VectorXd::Zero(steps + 1);
    for (int i = 0; i < dim; ++i) x(i, j) = standard_normal(rngs[static_cast<std::size_t>(j)]);
    traj.states.col(steps) = x.col(j);
  }
  std::vector<int> ts(conditions.size());
  for (int t = steps; t >= 1; --t) {
    std::fill(ts.begin(), ts.end(), t);
    const Eigen::MatrixXd mean = reverse_mean(x, model.forward(x, ts, conditions), t, schedule);
    const double sigma = schedule.sigma(t);
    for (Eigen::Index j = 0; j < batch; ++j) {
      auto& rng = rngs[static_cast<std::size_t>(j)];
      for (int i = 0; i < dim; ++i) x(i, j) = mean(i, j) + sigma * standard_normal(rng);
    }
    if (!x.allFinite()) throw NumericalError("non-finite state while sampling step " + std::to_string(t));
    for (Eigen::Index j = 0; j < batch; ++j) {
      auto& traj = out[static_cast<std::size_t>(j)];
      traj.states.col(t - 1) = x.col(j);
      traj.means.col(t) = mean.col(j);
      traj.sigmas[t] = sigma;
      traj.log_probs[t] = gaussian_log_prob(x.col(j), mean.col(j), sigma);
    }
  }
  return out;
}

Trajectory sample(const Denoiser& model, int condition, Rng& rng, const NoiseSchedule& schedule) {
  const int conditions[] = {condition};
  return std::move(sample_batch(model, conditions, std::span<Rng>(&rng, 1), schedule).front());
}

StepEvaluation evaluate_step(const Denoiser& model, const Eigen::MatrixXd& x_t, const Eigen::MatrixXd& x_prev, int t,
                             std::span<const int> conditions, const NoiseSchedule& schedule) {
  if (x_prev.cols() != x_t.cols() || x_prev.rows() != x_t.rows()) throw DomainError("x_t / x_prev shape mismatch");
  StepEvaluation step;
  step.t = t;
  const double sigma = schedule.sigma(t);
  std::vector<int> ts(conditions.size(), t);
  step.mean = reverse_mean(x_t, model.forward(x_t, ts, conditions, &step.cache), t, schedule);
  step.log_probs.resize(x_t.cols());
  for (Eigen::Index j = 0; j < x_t.cols(); ++j) {
    step.log_probs[j] = gaussian_log_prob(x_prev.col(j), step.mean.col(j), sigma);
  }
  return step;
}

void backprop_step(const Denoiser& model, const StepEvaluation& step, const Eigen::MatrixXd& x_prev,
                   const Eigen::VectorXd& weights, const NoiseSchedule& schedule, Eigen::VectorXd& grad) {
  if (weights.size() != x_prev.cols()) throw DomainError("one weight per column required");
  const int t = step.t;
  const double sigma = schedule.sigma(t);
  // d log p / d mean = (x_prev - mean) / sigma^2 and d mean / d eps_hat = -beta_t / (sqrt(1 - abar_t) sqrt(alpha_t)).
  const double chain = -schedule.beta(t) / (std::sqrt(1.0 - schedule.alpha_bar(t)) * std::sqrt(schedule.alpha(t)));
  Eigen::MatrixXd grad_out = (chain / (sigma * sigma)) * (x_prev - step.mean);
  grad_out *= weights.asDiagonal();
  model.backward(step.cache, grad_out, grad);
}

Eigen::VectorXd step_log_probs(const Denoiser& model, const Eigen::MatrixXd& x_t, const Eigen::MatrixXd& x_prev,
                               int t, std::span<const int> conditions, const NoiseSchedule& schedule) {
  return evaluate_step(model, x_t, x_prev, t, conditions, schedule).log_probs;
}

Eigen::VectorXd accumulate_log_prob_grad(const Denoiser& model, const Eigen::MatrixXd& x_t,
                                         const Eigen::MatrixXd& x_prev, int t, std::span<const int> conditions,
                                         const Eigen::VectorXd& weights, const NoiseSchedule& schedule,
                                         Eigen::VectorXd& grad) {
  StepEvaluation step = evaluate_step(model, x_t, x_prev, t, conditions, schedule);
  backprop_step(model, step, x_prev, weights, schedule, grad);
  return std::move(step.log_probs);
}

StepLogProb step_logprob_grad(const Denoiser& model, const Eigen::VectorXd& x_t, const Eigen::VectorXd& x_prev, int t,
                              int condition, const NoiseSchedule& schedule) {
  if (!(schedule.sigma(t) > 0)) throw DomainError("sigma_t must be positive");
  StepLogProb out{0.0, Eigen::VectorXd::Zero(model.parameter_count())};
  const int conditions[] = {condition};
  const Eigen::VectorXd log_p =
      accumulate_log_prob_grad(model, x_t, x_prev, t, conditions, Eigen::VectorXd::Ones(1), schedule, out.gradient);
  out.log_prob = log_p[0];
  return out;
}

namespace {

constexpr char kMagic[8] = {'A', 'R', 'T', 'D', 'E', 'N', 'S', '\0'};

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(std::string_view bytes, std::size_t& pos) {
  if (pos + sizeof(T) > bytes.size()) throw ParseError("checkpoint truncated");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
  }
  pos += sizeof(T);
  return value;
}

}  // namespace

std::string encode_checkpoint(const Denoiser& model) {
  std::string out(kMagic, sizeof kMagic);
  const auto& topo = model.topology();
  put_le<std::uint32_t>(out, kCheckpointVersion);
  for (int v : {topo.state_dim, topo.time_dim, topo.hidden, topo.classes}) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(v));
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(model.parameter_count()));
  for (double w : model.parameters()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(w));
  return out;
}

Denoiser decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw ParseError("not a denoiser checkpoint (bad magic)");
  }
  std::size_t pos = sizeof kMagic;
  const auto version = get_le<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) throw VersionError("unsupported checkpoint version " + std::to_string(version));
  DenoiserTopology topo;
  topo.state_dim = static_cast<int>(get_le<std::uint32_t>(bytes, pos));
  topo.time_dim = static_cast<int>(get_le<std::uint32_t>(bytes, pos));
  topo.hidden = static_cast<int>(get_le<std::uint32_t>(bytes, pos));
  topo.classes = static_cast<int>(get_le<std::uint32_t>(bytes, pos));
  const auto count = get_le<std::uint64_t>(bytes, pos);
  Denoiser model(topo);
  if (count != static_cast<std::uint64_t>(model.parameter_count())) throw ParseError("parameter count does not match topology");
  if (bytes.size() - pos != count * 8) throw ParseError("checkpoint payload size mismatch");
  for (auto& w : model.parameters()) w = std::bit_cast<double>(get_le<std::uint64_t>(bytes, pos));
  if (!model.parameters().allFinite()) throw ValidationError("checkpoint contains non-finite weights");
  return model;
}

void save_checkpoint(const Denoiser& model, const std::string& path) {
  const std::string bytes = encode_checkpoint(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Denoiser load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return decode_checkpoint(buffer.str());
}

}  // namespace artifact
