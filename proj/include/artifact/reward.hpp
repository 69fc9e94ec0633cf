#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "artifact/scenes.hpp"
#include "artifact/taxonomy.hpp"
#include "artifact/textsim.hpp"

namespace artifact {

/// Which BertScore component enters the reward.
enum class ScoreComponent { F, Precision, Recall };

struct RewardConfig {
  std::vector<std::string> phrases;  // s_1..s_N
  double alpha = 0.1;
  double beta = 1.0;
  std::string no_artifacts_phrase = "No artifacts";
  ScoreComponent component = ScoreComponent::F;

  /// Phrases are the canonical category names of `taxonomy`.
  static RewardConfig defaults(const Taxonomy& taxonomy);
};

/// r(answer) = S(no_artifacts_phrase, answer) - alpha * sum_k S(s_k, answer) + beta,
/// where S is the selected BertScore component with the phrase as candidate.
double artifact_reward(std::string_view answer, const RewardConfig& cfg, const EmbeddingModel& model);

struct CanonicalReward {
  LabelSet labels;
  std::string answer;
  double reward = 0;
};

/// Rewards of NO_ARTIFACTS and every label set with at most `max_labels`
/// categories, in enumeration order (by size, then lexicographic ids).
std::vector<CanonicalReward> enumerate_canonical_rewards(const RewardConfig& cfg, const EmbeddingModel& model,
                                                         const Taxonomy& taxonomy, int max_labels);

/// Reward function with per-answer memoization. Construction checks that the
/// reward is positive on every canonical answer of `taxonomy` and throws
/// ValidationError otherwise.
class ArtifactReward {
 public:
  ArtifactReward(RewardConfig cfg, EmbeddingModel model, const Taxonomy& taxonomy);

  double operator()(std::string_view answer) const;
  const RewardConfig& config() const { return cfg_; }
  const EmbeddingModel& embedding() const { return model_; }
  /// Smallest reward over the canonical answers seen during validation.
  double min_canonical_reward() const { return min_canonical_; }
  double max_canonical_reward() const { return max_canonical_; }

 private:
  RewardConfig cfg_;
  EmbeddingModel model_;
  double min_canonical_ = 0, max_canonical_ = 0;
  mutable std::mutex mutex_;
  mutable std::map<std::string, double, std::less<>> cache_;
};

/// Stand-in for the vision-language artifact classifier.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::string answer(std::string_view question, const SceneParams& observation) const = 0;
};

std::string oracle_answer(const SceneParams& params, const SceneConfig& cfg, const Taxonomy& taxonomy);

/// Deterministic classifier answering from the scene predicates.
class OracleClassifier final : public Classifier {
 public:
  OracleClassifier(SceneConfig cfg, const Taxonomy& taxonomy);
  std::string answer(std::string_view question, const SceneParams& observation) const override;

 private:
  SceneConfig cfg_;
  const Taxonomy& taxonomy_;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

struct RemoteOptions {
  std::chrono::milliseconds timeout{10000};
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
};

/// POSTs {"question", "image" (base64), "image_format": "pgm"} as JSON to
/// `endpoint` (http://host[:port][/path]) and returns the "answer" field of
/// the JSON reply verbatim. Network failures and 5xx replies are retried with
/// doubling backoff up to `attempts` times, then raise TransportError.
/// Malformed replies raise ProtocolError.
std::string remote_answer(std::string_view question, std::string_view image_bytes, const std::string& endpoint,
                          const RemoteOptions& options = {});

/// Renders the scene to a PGM and asks a remote classifier about it.
class RemoteClassifier final : public Classifier {
 public:
  RemoteClassifier(std::string endpoint, RemoteOptions options = {}, int resolution = 64);
  std::string answer(std::string_view question, const SceneParams& observation) const override;

 private:
  std::string endpoint_;
  RemoteOptions options_;
  int resolution_;
  mutable std::mutex mutex_;
};

std::string base64_encode(std::string_view bytes);

}  // namespace artifact
