#include "artifact/reward.hpp"

#include <cmath>
#include <functional>
#include <regex>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace artifact {
namespace {

double component_of(const ScoreTriple& s, ScoreComponent component) {
  switch (component) {
    case ScoreComponent::Precision:
      return s.precision;
    case ScoreComponent::Recall:
      return s.recall;
    case ScoreComponent::F:
      return s.f;
  }
  return s.f;
}

// Calls `visit` for every subset of {0..n-1} of size k in lexicographic order.
void for_each_combination(int n, int k, const std::function<void(const std::vector<int>&)>& visit) {
  std::vector<int> ids(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) ids[static_cast<std::size_t>(i)] = i;
  while (true) {
    visit(ids);
    int i = k - 1;
    while (i >= 0 && ids[static_cast<std::size_t>(i)] == n - k + i) --i;
    if (i < 0) return;
    ++ids[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j) ids[static_cast<std::size_t>(j)] = ids[static_cast<std::size_t>(j - 1)] + 1;
  }
}

}  // namespace

RewardConfig RewardConfig::defaults(const Taxonomy& taxonomy) {
  RewardConfig cfg;
  for (const auto& category : taxonomy.categories()) cfg.phrases.push_back(category.name);
  return cfg;
}

double artifact_reward(std::string_view answer, const RewardConfig& cfg, const EmbeddingModel& model) {
  if (tokenize(answer).empty()) throw DomainError("reward needs a non-empty answer");
  if (cfg.phrases.empty()) throw DomainError("reward needs at least one artifact phrase");
  double penalty = 0;
  for (const auto& phrase : cfg.phrases) penalty += component_of(bertscore(phrase, answer, model), cfg.component);
  return component_of(bertscore(cfg.no_artifacts_phrase, answer, model), cfg.component) - cfg.alpha * penalty +
         cfg.beta;
}

std::vector<CanonicalReward> enumerate_canonical_rewards(const RewardConfig& cfg, const EmbeddingModel& model,
                                                         const Taxonomy& taxonomy, int max_labels) {
  std::vector<CanonicalReward> out;
  const auto add = [&](const LabelSet& labels) {
    std::string answer = canonical_answer(labels, taxonomy);
    const double r = artifact_reward(answer, cfg, model);
    out.push_back({labels, std::move(answer), r});
  };
  add(LabelSet::no_artifacts());
  for (int k = 1; k <= std::min(max_labels, taxonomy.size()); ++k) {
    for_each_combination(taxonomy.size(), k, [&](const std::vector<int>& ids) { add(LabelSet::of(ids)); });
  }
  return out;
}

ArtifactReward::ArtifactReward(RewardConfig cfg, EmbeddingModel model, const Taxonomy& taxonomy)
    : cfg_(std::move(cfg)), model_(std::move(model)) {
  if (cfg_.phrases.empty()) throw ValidationError("reward config needs at least one phrase");
  if (!(cfg_.alpha >= 0)) throw ValidationError("alpha must be non-negative");
  // Checked on NO_ARTIFACTS, every singleton and the all-category answer.
  auto table = enumerate_canonical_rewards(cfg_, model_, taxonomy, 1);
  std::vector<int> all(static_cast<std::size_t>(taxonomy.size()));
  for (int i = 0; i < taxonomy.size(); ++i) all[static_cast<std::size_t>(i)] = i;
  const std::string everything = canonical_answer(LabelSet::of(all), taxonomy);
  table.push_back({LabelSet::of(all), everything, artifact_reward(everything, cfg_, model_)});
  min_canonical_ = max_canonical_ = table.front().reward;
  for (const auto& entry : table) {
    if (!(entry.reward > 0)) {
      throw ValidationError("reward is not positive for canonical answer '" + entry.answer + "' (" +
                            std::to_string(entry.reward) + "); adjust alpha/beta");
    }
    min_canonical_ = std::min(min_canonical_, entry.reward);
    max_canonical_ = std::max(max_canonical_, entry.reward);
    cache_.emplace(entry.answer, entry.reward);
  }
}

double ArtifactReward::operator()(std::string_view answer) const {
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(answer); it != cache_.end()) return it->second;
  }
  const double r = artifact_reward(answer, cfg_, model_);
  std::lock_guard lock(mutex_);
  cache_.emplace(std::string(answer), r);
  return r;
}

std::string oracle_answer(const SceneParams& params, const SceneConfig& cfg, const Taxonomy& taxonomy) {
  return canonical_answer(classify_scene(params, cfg), taxonomy);
}

OracleClassifier::OracleClassifier(SceneConfig cfg, const Taxonomy& taxonomy) : cfg_(std::move(cfg)), taxonomy_(taxonomy) {
  cfg_.validate();
  if (!taxonomy_.valid_id(category::kOutOfFrame)) {
    throw ValidationError("the oracle classifier needs a taxonomy with the built-in category ids");
  }
}

std::string OracleClassifier::answer(std::string_view, const SceneParams& observation) const {
  return oracle_answer(observation, cfg_, taxonomy_);
}

std::string base64_encode(std::string_view bytes) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const auto n = (std::uint32_t(std::uint8_t(bytes[i])) << 16) | (std::uint32_t(std::uint8_t(bytes[i + 1])) << 8) |
                   std::uint8_t(bytes[i + 2]);
    for (int shift : {18, 12, 6, 0}) out.push_back(kAlphabet[(n >> shift) & 63]);
  }
  if (const std::size_t rest = bytes.size() - i; rest > 0) {
    std::uint32_t n = std::uint32_t(std::uint8_t(bytes[i])) << 16;
    if (rest == 2) n |= std::uint32_t(std::uint8_t(bytes[i + 1])) << 8;
    out.push_back(kAlphabet[(n >> 18) & 63]);
    out.push_back(kAlphabet[(n >> 12) & 63]);
    out.push_back(rest == 2 ? kAlphabet[(n >> 6) & 63] : '=');
    out.push_back('=');
  }
  return out;
}

std::string remote_answer(std::string_view question, std::string_view image_bytes, const std::string& endpoint,
                          const RemoteOptions& options) {
  static const std::regex url_pattern(R"(^(http://[^/]+)(/.*)?$)");
  std::smatch match;
  if (!std::regex_match(endpoint, match, url_pattern)) {
    throw TransportError("unsupported endpoint '" + endpoint + "' (expected http://host[:port][/path])");
  }
  const std::string base = match[1].str();
  const std::string path = match[2].matched ? match[2].str() : "/";

  const nlohmann::json request = {
      {"question", std::string(question)}, {"image", base64_encode(image_bytes)}, {"image_format", "pgm"}};
  const std::string body = request.dump();

  httplib::Client client(base);
  const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(options.timeout);
  const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(options.timeout - seconds);
  client.set_connection_timeout(seconds.count(), micros.count());
  client.set_read_timeout(seconds.count(), micros.count());
  client.set_write_timeout(seconds.count(), micros.count());

  std::string last_failure;
  auto backoff = options.initial_backoff;
  for (int attempt = 1; attempt <= std::max(options.attempts, 1); ++attempt) {
    if (attempt > 1) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    const auto result = client.Post(path, body, "application/json");
    if (!result) {
      last_failure = "request failed: " + httplib::to_string(result.error());
      continue;
    }
    if (result->status >= 500) {
      last_failure = "server returned HTTP " + std::to_string(result->status);
      continue;
    }
    if (result->status != 200) throw ProtocolError("server returned HTTP " + std::to_string(result->status));
    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(result->body);
    } catch (const nlohmann::json::parse_error&) {
      throw ProtocolError("response body is not valid JSON");
    }
    if (!reply.is_object() || !reply.contains("answer")) throw ProtocolError("response is missing field 'answer'");
    if (!reply.at("answer").is_string()) throw ProtocolError("response field 'answer' is not a string");
    return reply.at("answer").get<std::string>();
  }
  throw TransportError(last_failure + " (after " + std::to_string(std::max(options.attempts, 1)) + " attempts)");
}

RemoteClassifier::RemoteClassifier(std::string endpoint, RemoteOptions options, int resolution)
    : endpoint_(std::move(endpoint)), options_(options), resolution_(resolution) {
  if (resolution < 16) throw DomainError("render resolution must be at least 16");
}

std::string RemoteClassifier::answer(std::string_view question, const SceneParams& observation) const {
  const std::string image = encode_pgm(render(observation, resolution_));
  std::lock_guard lock(mutex_);
  return remote_answer(question, image, endpoint_, options_);
}

}  // namespace artifact
