#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace artifact {

/// Deterministic token embeddings standing in for a contextual encoder.
///
/// In hashed mode a token is embedded as the normalized sum of pseudo-random
/// vectors, one per character 3-gram of "#token#", seeded by (3-gram, seed).
/// Table mode looks tokens up in an external table and falls back to hashing
/// for tokens the table does not contain.
class EmbeddingModel {
 public:
  enum class Mode { HashedNgram, Table };

  explicit EmbeddingModel(int dimension = 64, std::uint64_t seed = 0);

  /// Reads "token v1 ... vd" lines; blank lines and '#' comments are skipped.
  static EmbeddingModel from_table(std::string_view document, std::uint64_t seed = 0);
  static EmbeddingModel from_table_file(const std::string& path, std::uint64_t seed = 0);

  int dimension() const { return dimension_; }
  std::uint64_t seed() const { return seed_; }
  Mode mode() const { return table_ ? Mode::Table : Mode::HashedNgram; }

  /// Unit-norm embedding of a single (already lowercased) token.
  Eigen::VectorXd token_vector(std::string_view token) const;

 private:
  using Table = std::unordered_map<std::string, Eigen::VectorXd>;
  /// Hashed vectors already computed; shared by copies of the model.
  struct Memo {
    std::mutex mutex;
    Table vectors;
  };

  int dimension_;
  std::uint64_t seed_;
  std::shared_ptr<const Table> table_;
  std::shared_ptr<Memo> memo_ = std::make_shared<Memo>();
};

/// Lowercased alphanumeric runs of `text`.
std::vector<std::string> tokenize(std::string_view text);

/// One unit column per token; zero columns for text without tokens.
Eigen::MatrixXd embed(std::string_view text, const EmbeddingModel& model);

struct ScoreTriple {
  double precision = 0, recall = 0, f = 0;
};

/// Greedy-matching BertScore without idf weighting or baseline rescaling.
/// F is the harmonic mean of P and R when both are positive, and 0 otherwise.
ScoreTriple bertscore(std::string_view candidate, std::string_view reference, const EmbeddingModel& model);

}  // namespace artifact
