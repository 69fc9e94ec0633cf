#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "artifact/diffusion.hpp"
#include "artifact/reward.hpp"
#include "artifact/scenes.hpp"

namespace artifact {

struct DdpoConfig {
  int batch_size = 24;
  double learning_rate = 3e-4;
  int inner_epochs = 1;
  bool clip = true;
  double clip_range = 0.2;
  bool normalize_advantages = true;
  int batches = 100;
  /// Rescale the update direction to this norm when exceeded; 0 disables.
  double max_grad_norm = 0.0;
  int checkpoint_every = 0;
  std::string checkpoint_path;

  void validate() const;
};

/// Everything the trainer needs besides the model: the chain, how states
/// decode into scenes, how conditions are drawn and how scenes are scored.
struct DdpoEnvironment {
  NoiseSchedule schedule = NoiseSchedule::scaled_linear();
  SceneCodec codec;
  std::function<int(Rng&)> condition_sampler;
  /// classifier -> answer -> reward for the decoded final state.
  std::function<double(const SceneParams&)> reward;
  /// Ground-truth artifact probe used only for reporting.
  std::function<bool(const SceneParams&)> has_artifact;
};

/// Pretraining data: scenes drawn from `mix` under uniformly drawn conditions,
/// encoded with the codec of `cfg`.
ExampleSampler scene_example_sampler(const SceneMix& mix, const SceneConfig& cfg);

/// Reward pipeline classifier(question, x_0) -> answer -> ArtifactReward.
std::function<double(const SceneParams&)> make_reward_fn(const Classifier& classifier, const ArtifactReward& reward,
                                                         std::string question);

/// Environment with the oracle reward over the default taxonomy.
DdpoEnvironment oracle_environment(const SceneConfig& scene_cfg, const ArtifactReward& reward, int steps = 50);

struct Batch {
  std::vector<Trajectory> trajectories;  // rewards filled in
  int artifact_count = 0;
};

/// Samples `n` trajectories from the (frozen) `policy`; trajectory i uses the
/// stream (seed, i) for its condition and noise, and is rewarded once on x_0.
Batch collect(const Denoiser& policy, int n, const DdpoEnvironment& env, std::uint64_t seed);

/// Batch-standardized rewards, or raw rewards when normalization is off.
/// A batch whose rewards do not vary gets all-zero advantages.
Eigen::VectorXd advantages(const Batch& batch, bool normalize);

/// Importance-sampled policy gradient (ascent direction), averaged over
/// trajectories and summed over steps. The old policy is the one whose log
/// probabilities are stored in the batch. With clipping on, steps whose
/// ratio has left [1 - eps, 1 + eps] in the advantage's favour contribute
/// nothing, as in the gradient of the clipped surrogate.
Eigen::VectorXd policy_gradient(const Batch& batch, const Denoiser& policy, const DdpoConfig& cfg,
                                const NoiseSchedule& schedule);

/// Σ_t ∇ log p_θ · A averaged over trajectories, without importance weights.
Eigen::VectorXd reinforce_gradient(const Batch& batch, const Denoiser& policy, const DdpoConfig& cfg,
                                   const NoiseSchedule& schedule);

/// (1/n) Σ_i Σ_t ratio_{i,t}(θ) A_i without clipping; its gradient at the
/// old policy is the estimator above.
double surrogate_objective(const Batch& batch, const Denoiser& policy, const DdpoConfig& cfg,
                           const NoiseSchedule& schedule);

struct BatchStats {
  double mean_reward = 0, std_reward = 0, artifact_rate = 0, grad_norm = 0;
};

struct TrainingHistory {
  std::vector<BatchStats> batches;
  /// `batch,mean_reward,std_reward,artifact_rate,grad_norm`
  std::string to_csv() const;
  static TrainingHistory from_csv(const std::string& text);
};

struct DdpoResult {
  Denoiser model;
  TrainingHistory history;
};

/// Runs cfg.batches rounds of {snapshot; collect; inner epochs of Adam ascent}.
/// On non-finite weights the last good checkpoint (if configured) is kept on
/// disk and NumericalError is thrown.
DdpoResult train_loop(Denoiser model, const DdpoEnvironment& env, const DdpoConfig& cfg, std::uint64_t seed,
                      const std::function<void(int, const BatchStats&)>& on_batch = {});

/// Fraction of `n` fresh samples whose decoded scene the probe flags.
double artifact_rate(const Denoiser& model, int n, const DdpoEnvironment& env, std::uint64_t seed);

}  // namespace artifact
