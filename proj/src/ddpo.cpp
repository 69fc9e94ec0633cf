#include "artifact/ddpo.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace artifact {

void DdpoConfig::validate() const {
  if (batch_size < 1) throw DomainError("batch size must be positive");
  if (!(learning_rate >= 0)) throw DomainError("learning rate must be non-negative");
  if (inner_epochs < 1) throw DomainError("inner epochs must be positive");
  if (!(clip_range > 0 && clip_range < 1)) throw DomainError("clip range must lie in (0, 1)");
  if (batches < 0) throw DomainError("batch count must be non-negative");
  if (!(max_grad_norm >= 0)) throw DomainError("max grad norm must be non-negative");
}

ExampleSampler scene_example_sampler(const SceneMix& mix, const SceneConfig& cfg) {
  cfg.validate();
  return [mix, cfg, codec = SceneCodec(cfg)](Rng& rng) {
    const ArtifactSpec spec = mix.draw(rng);
    const int condition = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(cfg.condition_count())));
    return std::pair<Eigen::VectorXd, int>{codec.encode(sample_scene(rng, spec, condition, cfg)), condition};
  };
}

std::function<double(const SceneParams&)> make_reward_fn(const Classifier& classifier, const ArtifactReward& reward,
                                                         std::string question) {
  return [&classifier, &reward, question = std::move(question)](const SceneParams& scene) {
    return reward(classifier.answer(question, scene));
  };
}

DdpoEnvironment oracle_environment(const SceneConfig& scene_cfg, const ArtifactReward& reward, int steps) {
  auto classifier = std::make_shared<OracleClassifier>(scene_cfg, default_taxonomy());
  DdpoEnvironment env;
  env.schedule = NoiseSchedule::scaled_linear(steps);
  env.codec = SceneCodec(scene_cfg);
  const int classes = scene_cfg.condition_count();
  env.condition_sampler = [classes](Rng& rng) { return static_cast<int>(uniform_below(rng, classes)); };
  env.reward = [classifier, &reward](const SceneParams& scene) { return reward(classifier->answer("", scene)); };
  env.has_artifact = [scene_cfg](const SceneParams& scene) {
    return !classify_scene(scene, scene_cfg).is_no_artifacts();
  };
  return env;
}

Batch collect(const Denoiser& policy, int n, const DdpoEnvironment& env, std::uint64_t seed) {
  if (n < 1) throw DomainError("collect needs at least one trajectory");
  std::vector<Rng> rngs;
  std::vector<int> conditions;
  rngs.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    rngs.push_back(make_stream(seed, static_cast<std::uint64_t>(i)));
    conditions.push_back(env.condition_sampler(rngs.back()));
  }
  Batch batch{sample_batch(policy, conditions, rngs, env.schedule), 0};
  for (std::size_t i = 0; i < batch.trajectories.size(); ++i) {
    auto& traj = batch.trajectories[i];
    const SceneParams scene = env.codec.decode(traj.final_state());
    double r;
    const std::string where = "trajectory " + std::to_string(i) + ": ";
    try {
      r = env.reward(scene);
    } catch (const TransportError& e) {
      throw TransportError(where + e.what());
    } catch (const ProtocolError& e) {
      throw ProtocolError(where + e.what());
    } catch (const std::exception& e) {
      throw Error(where + e.what());
    }
    if (!std::isfinite(r)) throw NumericalError("trajectory " + std::to_string(i) + ": non-finite reward");
    traj.reward = r;
    if (env.has_artifact && env.has_artifact(scene)) ++batch.artifact_count;
  }
  return batch;
}

Eigen::VectorXd advantages(const Batch& batch, bool normalize) {
  const auto n = static_cast<Eigen::Index>(batch.trajectories.size());
  Eigen::VectorXd r(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& reward = batch.trajectories[static_cast<std::size_t>(i)].reward;
    if (!reward) throw DomainError("trajectory " + std::to_string(i) + " has no reward");
    r[i] = *reward;
  }
  if (!normalize) return r;
  if (r.maxCoeff() == r.minCoeff()) return Eigen::VectorXd::Zero(n);
  const double mean = r.mean();
  const double stddev = std::sqrt((r.array() - mean).square().mean());
  return (r.array() - mean) / (stddev + 1e-8);
}

namespace {

enum class Estimator { Importance, Reinforce };

Eigen::VectorXd estimate(const Batch& batch, const Denoiser& policy, const DdpoConfig& cfg,
                         const NoiseSchedule& schedule, Estimator estimator) {
  if (batch.trajectories.empty()) throw DomainError("policy gradient needs a non-empty batch");
  const Eigen::VectorXd adv = advantages(batch, cfg.normalize_advantages);
  const auto n = static_cast<Eigen::Index>(batch.trajectories.size());
  const int dim = policy.topology().state_dim;
  std::vector<int> conditions;
  for (const auto& traj : batch.trajectories) conditions.push_back(traj.condition);

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(policy.parameter_count());
  Eigen::MatrixXd x_t(dim, n), x_prev(dim, n);
  Eigen::VectorXd weights(n);
  for (int t = schedule.steps(); t >= 1; --t) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto& traj = batch.trajectories[static_cast<std::size_t>(j)];
      x_t.col(j) = traj.states.col(t);
      x_prev.col(j) = traj.states.col(t - 1);
    }
    const StepEvaluation step = evaluate_step(policy, x_t, x_prev, t, conditions, schedule);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (estimator == Estimator::Reinforce) {
        weights[j] = adv[j] / static_cast<double>(n);
        continue;
      }
      const double old_log_p = batch.trajectories[static_cast<std::size_t>(j)].log_probs[t];
      const double ratio = std::exp(step.log_probs[j] - old_log_p);
      if (!std::isfinite(ratio)) {
        throw NumericalError("non-finite importance ratio at step " + std::to_string(t) + " of trajectory " +
                             std::to_string(j));
      }
      const bool clipped_out = cfg.clip && ((adv[j] > 0 && ratio > 1 + cfg.clip_range) ||
                                            (adv[j] < 0 && ratio < 1 - cfg.clip_range));
      weights[j] = clipped_out ? 0.0 : ratio * adv[j] / static_cast<double>(n);
    }
    backprop_step(policy, step, x_prev, weights, schedule, grad);
  }
  return grad;
}

}  // namespace

Eigen::VectorXd policy_gradient(const Batch& batch, const Denoiser& policy, const DdpoConfig& cfg,
                                const NoiseSchedule& schedule) {
  return estimate(batch, policy, cfg, schedule, Estimator::Importance);
}

Eigen::VectorXd reinforce_gradient(const Batch& batch, const Denoiser& policy, const DdpoConfig& cfg,
                                   const NoiseSchedule& schedule) {
  return estimate(batch, policy, cfg, schedule, Estimator::Reinforce);
}

double surrogate_objective(const Batch& batch, const Denoiser& policy, const DdpoConfig& cfg,
                           const NoiseSchedule& schedule) {
  const Eigen::VectorXd adv = advantages(batch, cfg.normalize_advantages);
  const auto n = static_cast<Eigen::Index>(batch.trajectories.size());
  const int dim = policy.topology().state_dim;
  std::vector<int> conditions;
  for (const auto& traj : batch.trajectories) conditions.push_back(traj.condition);
  Eigen::MatrixXd x_t(dim, n), x_prev(dim, n);
  double total = 0;
  for (int t = schedule.steps(); t >= 1; --t) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto& traj = batch.trajectories[static_cast<std::size_t>(j)];
      x_t.col(j) = traj.states.col(t);
      x_prev.col(j) = traj.states.col(t - 1);
    }
    const Eigen::VectorXd log_p = step_log_probs(policy, x_t, x_prev, t, conditions, schedule);
    for (Eigen::Index j = 0; j < n; ++j) {
      total += std::exp(log_p[j] - batch.trajectories[static_cast<std::size_t>(j)].log_probs[t]) * adv[j];
    }
  }
  return total / static_cast<double>(n);
}

std::string TrainingHistory::to_csv() const {
  std::ostringstream out;
  out << "batch,mean_reward,std_reward,artifact_rate,grad_norm\n";
  char line[160];
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const auto& s = batches[b];
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.17g\n", b, s.mean_reward, s.std_reward,
                  s.artifact_rate, s.grad_norm);
    out << line;
  }
  return out.str();
}

TrainingHistory TrainingHistory::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("batch,mean_reward", 0) != 0) {
    throw ParseError("history CSV must start with the batch,mean_reward,... header", 1);
  }
  TrainingHistory history;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    BatchStats s;
    std::size_t index = 0;
    if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%lf", &index, &s.mean_reward, &s.std_reward, &s.artifact_rate,
                    &s.grad_norm) != 5) {
      throw ParseError("malformed history row", line_no);
    }
    if (index != history.batches.size()) throw ParseError("history rows out of order", line_no);
    history.batches.push_back(s);
  }
  return history;
}

DdpoResult train_loop(Denoiser model, const DdpoEnvironment& env, const DdpoConfig& cfg, std::uint64_t seed,
                      const std::function<void(int, const BatchStats&)>& on_batch) {
  cfg.validate();
  Adam adam(model.parameter_count(), cfg.learning_rate);
  DdpoResult result{std::move(model), {}};
  Denoiser& policy = result.model;
  Eigen::VectorXd last_good = policy.parameters();

  for (int b = 0; b < cfg.batches; ++b) {
    // The sampling policy is frozen for the batch; its log-probabilities are
    // stored in the trajectories and serve as the old policy.
    const Batch batch = collect(policy, cfg.batch_size, env, stream_seed(seed, static_cast<std::uint64_t>(b)));
    BatchStats stats;
    Eigen::VectorXd rewards(static_cast<Eigen::Index>(batch.trajectories.size()));
    for (std::size_t i = 0; i < batch.trajectories.size(); ++i) {
      rewards[static_cast<Eigen::Index>(i)] = *batch.trajectories[i].reward;
    }
    stats.mean_reward = rewards.mean();
    stats.std_reward = std::sqrt((rewards.array() - stats.mean_reward).square().mean());
    stats.artifact_rate = static_cast<double>(batch.artifact_count) / static_cast<double>(cfg.batch_size);

    for (int epoch = 0; epoch < cfg.inner_epochs; ++epoch) {
      Eigen::VectorXd grad = policy_gradient(batch, policy, cfg, env.schedule);
      const double norm = grad.norm();
      if (epoch == 0) stats.grad_norm = norm;
      if (cfg.max_grad_norm > 0 && norm > cfg.max_grad_norm) grad *= cfg.max_grad_norm / norm;
      Eigen::VectorXd ascent = -grad;
      adam.step(policy.parameters(), ascent);
      if (!policy.parameters().allFinite()) {
        policy.set_parameters(last_good);
        throw NumericalError("non-finite weights after batch " + std::to_string(b) +
                             (cfg.checkpoint_path.empty() ? "" : "; last good checkpoint kept at " + cfg.checkpoint_path));
      }
    }
    last_good = policy.parameters();
    result.history.batches.push_back(stats);
    if (on_batch) on_batch(b, stats);
    if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 && (b + 1) % cfg.checkpoint_every == 0) {
      save_checkpoint(policy, cfg.checkpoint_path);
    }
  }
  if (!cfg.checkpoint_path.empty()) save_checkpoint(policy, cfg.checkpoint_path);
  return result;
}

double artifact_rate(const Denoiser& model, int n, const DdpoEnvironment& env, std::uint64_t seed) {
  if (n < 1) throw DomainError("artifact rate needs at least one sample");
  if (!env.has_artifact) throw DomainError("environment has no artifact probe");
  constexpr int kChunk = 256;
  int flagged = 0;
  for (int start = 0; start < n; start += kChunk) {
    const int count = std::min(kChunk, n - start);
    std::vector<Rng> rngs;
    std::vector<int> conditions;
    for (int i = 0; i < count; ++i) {
      rngs.push_back(make_stream(seed, static_cast<std::uint64_t>(start + i)));
      conditions.push_back(env.condition_sampler(rngs.back()));
    }
    for (const auto& traj : sample_batch(model, conditions, rngs, env.schedule)) {
      flagged += env.has_artifact(env.codec.decode(traj.final_state())) ? 1 : 0;
    }
  }
  return static_cast<double>(flagged) / static_cast<double>(n);
}

}  // namespace artifact
