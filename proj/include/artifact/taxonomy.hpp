#pragma once

#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "artifact/errors.hpp"

namespace artifact {

enum class CoarseGroup { ObjectAware, ObjectAgnostic, Lighting, Others };

std::string_view to_string(CoarseGroup group);
CoarseGroup coarse_group_from_string(std::string_view text);

struct ArtifactCategory {
  int id = 0;
  std::string name;
  CoarseGroup coarse_group = CoarseGroup::Others;
  std::string explanation;
};

/// Ordered, immutable list of artifact categories. Ids are positions.
class Taxonomy {
 public:
  Taxonomy(std::vector<ArtifactCategory> categories, std::string version);

  std::span<const ArtifactCategory> categories() const { return categories_; }
  const ArtifactCategory& operator[](int id) const;
  int size() const { return static_cast<int>(categories_.size()); }
  const std::string& version() const { return version_; }
  bool valid_id(int id) const { return id >= 0 && id < size(); }

  /// Case-insensitive exact lookup; -1 when absent.
  int find(std::string_view name) const;

 private:
  std::vector<ArtifactCategory> categories_;
  std::string version_;
};

/// Ids of the built-in taxonomy that the scene oracle can emit.
namespace category {
inline constexpr int kIllegibleLetters = 0;
inline constexpr int kAwkwardExpression = 1;
inline constexpr int kDistortion = 2;
inline constexpr int kOmission = 3;
inline constexpr int kDuplication = 4;
inline constexpr int kOutOfFrame = 12;
}  // namespace category

/// The 13-category built-in taxonomy. The names are a reconstruction from the
/// prose description of the category system; load a file to substitute others.
const Taxonomy& default_taxonomy();

/// Parses the key/value taxonomy format (see docs/formats.md).
Taxonomy load_taxonomy(std::string_view document);
Taxonomy load_taxonomy_file(const std::string& path);
std::string serialize_taxonomy(const Taxonomy& taxonomy);

/// Either the distinguished "No artifacts" value or a non-empty set of ids.
class LabelSet {
 public:
  /// Defaults to NO_ARTIFACTS.
  LabelSet() = default;

  static LabelSet no_artifacts() { return {}; }
  /// Throws ValidationError when `ids` is empty or contains negatives.
  static LabelSet of(std::initializer_list<int> ids);
  static LabelSet of(std::span<const int> ids);

  bool is_no_artifacts() const { return ids_.empty(); }
  /// Sorted, unique category ids; empty iff NO_ARTIFACTS.
  const std::vector<int>& ids() const { return ids_; }
  bool contains(int id) const;
  void validate(const Taxonomy& taxonomy) const;

  friend bool operator==(const LabelSet&, const LabelSet&) = default;

 private:
  std::vector<int> ids_;
};

/// Raised by parse_answer when nothing in the text names a category.
class EmptyAnswerError : public Error {
 public:
  EmptyAnswerError(const std::string& what, std::vector<std::string> unmatched)
      : Error(what), unmatched_(std::move(unmatched)) {}
  const std::vector<std::string>& unmatched() const { return unmatched_; }

 private:
  std::vector<std::string> unmatched_;
};

/// Raised by parse_answer when "No artifacts" is mixed with categories.
class AnswerConflictError : public Error {
 public:
  AnswerConflictError(const std::string& what, std::vector<int> ids)
      : Error(what), ids_(std::move(ids)) {}
  const std::vector<int>& conflicting_ids() const { return ids_; }

 private:
  std::vector<int> ids_;
};

struct ParsedAnswer {
  LabelSet labels;
  std::vector<std::string> unmatched;
};

inline constexpr std::string_view kNoArtifactsAnswer = "No artifacts.";

ParsedAnswer parse_answer(std::string_view text, const Taxonomy& taxonomy);
std::string canonical_answer(const LabelSet& labels, const Taxonomy& taxonomy);

}  // namespace artifact
