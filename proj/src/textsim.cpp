#include "artifact/textsim.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "artifact/errors.hpp"
#include "artifact/rng.hpp"

namespace artifact {
namespace {

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Eigen::VectorXd hashed_vector(std::string_view token, int dimension, std::uint64_t seed) {
  const std::string padded = "#" + std::string(token) + "#";
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dimension);
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
    std::uint64_t state = stream_seed(seed, fnv1a(std::string_view(padded).substr(i, 3)));
    for (int k = 0; k < dimension; ++k) {
      state = mix64(state);
      sum[k] += static_cast<double>(state >> 11) * 0x1.0p-52 - 1.0;
    }
  }
  const double norm = sum.norm();
  if (norm == 0.0) {
    sum.setZero();
    sum[0] = 1.0;
    return sum;
  }
  return sum / norm;
}

}  // namespace

EmbeddingModel::EmbeddingModel(int dimension, std::uint64_t seed) : dimension_(dimension), seed_(seed) {
  if (dimension <= 0) throw DomainError("embedding dimension must be positive");
}

EmbeddingModel EmbeddingModel::from_table(std::string_view document, std::uint64_t seed) {
  auto table = std::make_shared<Table>();
  int dimension = 0;
  std::istringstream in{std::string(document)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token) || token.front() == '#') continue;
    std::vector<double> values;
    double v;
    while (fields >> v) values.push_back(v);
    if (!fields.eof()) throw ParseError("non-numeric embedding component", line_no);
    if (values.empty()) throw ParseError("token '" + token + "' has no vector", line_no);
    if (dimension == 0) dimension = static_cast<int>(values.size());
    if (static_cast<int>(values.size()) != dimension) {
      throw ParseError("expected " + std::to_string(dimension) + " components, got " +
                           std::to_string(values.size()),
                       line_no);
    }
    Eigen::VectorXd vec = Eigen::Map<const Eigen::VectorXd>(values.data(), dimension);
    const double norm = vec.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) throw ParseError("zero or non-finite vector", line_no);
    for (auto& ch : token) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    (*table)[token] = vec / norm;
  }
  if (table->empty()) throw ParseError("embedding table is empty");
  EmbeddingModel model(dimension, seed);
  model.table_ = std::move(table);
  return model;
}

EmbeddingModel EmbeddingModel::from_table_file(const std::string& path, std::uint64_t seed) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open embedding table '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return from_table(buffer.str(), seed);
}

Eigen::VectorXd EmbeddingModel::token_vector(std::string_view token) const {
  if (table_) {
    if (auto it = table_->find(std::string(token)); it != table_->end()) return it->second;
  }
  std::lock_guard lock(memo_->mutex);
  auto [it, inserted] = memo_->vectors.try_emplace(std::string(token));
  if (inserted) it->second = hashed_vector(token, dimension_, seed_);
  return it->second;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char ch : text) {
    if (std::isalnum(ch)) {
      current.push_back(static_cast<char>(std::tolower(ch)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Eigen::MatrixXd embed(std::string_view text, const EmbeddingModel& model) {
  const auto tokens = tokenize(text);
  Eigen::MatrixXd out(model.dimension(), static_cast<Eigen::Index>(tokens.size()));
  for (std::size_t i = 0; i < tokens.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = model.token_vector(tokens[i]);
  return out;
}

ScoreTriple bertscore(std::string_view candidate, std::string_view reference, const EmbeddingModel& model) {
  const Eigen::MatrixXd cand = embed(candidate, model);
  const Eigen::MatrixXd ref = embed(reference, model);
  if (cand.cols() == 0 || ref.cols() == 0) throw DomainError("bertscore needs tokens on both sides");
  // Per-pair dots: similarity(a, b) is bitwise the transpose of similarity(b, a).
  Eigen::MatrixXd similarity(cand.cols(), ref.cols());
  for (Eigen::Index i = 0; i < cand.cols(); ++i) {
    for (Eigen::Index j = 0; j < ref.cols(); ++j) similarity(i, j) = cand.col(i).dot(ref.col(j));
  }
  const auto mean_of = [](const Eigen::VectorXd& v) {
    double total = 0;
    for (Eigen::Index k = 0; k < v.size(); ++k) total += v[k];
    return total / static_cast<double>(v.size());
  };
  ScoreTriple s;
  s.precision = mean_of(similarity.rowwise().maxCoeff());
  s.recall = mean_of(similarity.colwise().maxCoeff().transpose());
  s.f = s.precision > 0 && s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

}  // namespace artifact
