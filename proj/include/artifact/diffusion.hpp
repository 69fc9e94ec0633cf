#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "artifact/denoiser.hpp"
#include "artifact/rng.hpp"

namespace artifact {

/// Variance schedule indexed by timestep t = 1..T; index 0 holds the
/// identity (alpha_bar[0] = 1) so formulas read with natural indices.
class NoiseSchedule {
 public:
  /// Linear betas from `beta_start` to `beta_end` over `steps` steps.
  static NoiseSchedule linear(int steps, double beta_start, double beta_end);
  /// Linear schedule whose endpoints (1e-4, 0.02 at 1000 steps) are rescaled
  /// by 1000 / steps so that alpha_bar[T] stays near zero for short chains.
  static NoiseSchedule scaled_linear(int steps = 50);

  int steps() const { return steps_; }
  double beta(int t) const { return beta_[check(t)]; }
  double alpha(int t) const { return 1.0 - beta_[check(t)]; }
  double alpha_bar(int t) const { return alpha_bar_[check(t, 0)]; }
  /// Reverse-process standard deviation; sigma_t^2 = beta_t.
  double sigma(int t) const { return std::sqrt(beta_[check(t)]); }

 private:
  int check(int t, int lo = 1) const;

  int steps_ = 0;
  std::vector<double> beta_, alpha_bar_;
};

/// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps.
Eigen::VectorXd forward_noise(const Eigen::VectorXd& x0, int t, const Eigen::VectorXd& eps,
                              const NoiseSchedule& schedule);

/// Mean squared error between predicted and true noise over a batch (columns),
/// averaged over every entry. Adds dLoss/dθ to `grad` when non-null.
double denoising_loss(const Denoiser& model, const Eigen::MatrixXd& x0, std::span<const int> t,
                      std::span<const int> c, const Eigen::MatrixXd& eps, const NoiseSchedule& schedule,
                      Eigen::VectorXd* grad = nullptr);

/// Adam with bias correction. `step` descends; pass a negated gradient to ascend.
class Adam {
 public:
  explicit Adam(Eigen::Index size, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
  double learning_rate() const { return lr_; }
  long steps_taken() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  Eigen::VectorXd m_, v_;
  long t_ = 0;
};

/// One training example: an encoded state and its condition class.
using ExampleSampler = std::function<std::pair<Eigen::VectorXd, int>(Rng&)>;

struct TrainConfig {
  int steps = 4000;
  int batch_size = 128;
  double learning_rate = 1e-3;
};

struct TrainResult {
  Denoiser model;
  std::vector<double> loss_curve;  // one entry per step
};

/// Fits `model` by Adam on the noise-prediction objective.
/// Throws NumericalError if the loss stops being finite.
TrainResult train_denoiser(Denoiser model, const ExampleSampler& data, const TrainConfig& cfg,
                           const NoiseSchedule& schedule, Rng& rng);

/// Denoising chain x_T ... x_0 with everything needed to re-evaluate the
/// policy. Column t of `states` is x_t; column t of `means` is the mean of
/// p(x_{t-1} | x_t) (column 0 unused), likewise `log_probs[t]`.
struct Trajectory {
  int condition = 0;
  Eigen::MatrixXd states;
  Eigen::MatrixXd means;
  Eigen::VectorXd sigmas;
  Eigen::VectorXd log_probs;
  std::optional<double> reward;

  Eigen::VectorXd final_state() const { return states.col(0); }
};

/// log N(x; mean, sigma^2 I).
double gaussian_log_prob(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& mean,
                         double sigma);

/// Posterior mean of x_{t-1} for each column of `x_t` given predicted noise.
Eigen::MatrixXd reverse_mean(const Eigen::MatrixXd& x_t, const Eigen::MatrixXd& eps_hat, int t,
                             const NoiseSchedule& schedule);

/// Samples one trajectory per entry of `conditions`, trajectory i drawing its
/// noise from `rngs[i]`. Throws NumericalError on a non-finite state.
std::vector<Trajectory> sample_batch(const Denoiser& model, std::span<const int> conditions, std::span<Rng> rngs,
                                     const NoiseSchedule& schedule);
Trajectory sample(const Denoiser& model, int condition, Rng& rng, const NoiseSchedule& schedule);

/// Forward pass of one reverse step for a batch of columns, kept for backprop.
struct StepEvaluation {
  int t = 0;
  Eigen::VectorXd log_probs;
  Eigen::MatrixXd mean;
  Denoiser::Cache cache;
};

StepEvaluation evaluate_step(const Denoiser& model, const Eigen::MatrixXd& x_t, const Eigen::MatrixXd& x_prev, int t,
                             std::span<const int> conditions, const NoiseSchedule& schedule);

/// Adds Σ_j weights[j] ∇_θ log p_j for an evaluated step to `grad`.
void backprop_step(const Denoiser& model, const StepEvaluation& step, const Eigen::MatrixXd& x_prev,
                   const Eigen::VectorXd& weights, const NoiseSchedule& schedule, Eigen::VectorXd& grad);

/// Evaluates log p_θ(x_{t-1} | x_t, c) for each column and adds
/// Σ_j weights[j] ∇_θ log p_j to `grad`. Returns the log-probabilities.
Eigen::VectorXd accumulate_log_prob_grad(const Denoiser& model, const Eigen::MatrixXd& x_t,
                                         const Eigen::MatrixXd& x_prev, int t, std::span<const int> conditions,
                                         const Eigen::VectorXd& weights, const NoiseSchedule& schedule,
                                         Eigen::VectorXd& grad);

/// Log-probabilities only (no gradient), same arithmetic as above.
Eigen::VectorXd step_log_probs(const Denoiser& model, const Eigen::MatrixXd& x_t, const Eigen::MatrixXd& x_prev,
                               int t, std::span<const int> conditions, const NoiseSchedule& schedule);

struct StepLogProb {
  double log_prob = 0;
  Eigen::VectorXd gradient;
};

StepLogProb step_logprob_grad(const Denoiser& model, const Eigen::VectorXd& x_t, const Eigen::VectorXd& x_prev, int t,
                              int condition, const NoiseSchedule& schedule);

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout: 8-byte magic "ARTDENS\0", u32 version, u32 state_dim,
/// u32 time_dim, u32 hidden, u32 classes, u64 parameter count, then the
/// parameters as little-endian IEEE-754 doubles.
std::string encode_checkpoint(const Denoiser& model);
Denoiser decode_checkpoint(std::string_view bytes);
void save_checkpoint(const Denoiser& model, const std::string& path);
Denoiser load_checkpoint(const std::string& path);

}  // namespace artifact
