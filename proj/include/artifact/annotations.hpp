#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "artifact/instructions.hpp"
#include "artifact/taxonomy.hpp"

namespace artifact {

struct ArtifactAnnotation {
  int category_id = 0;
  std::optional<BoundingBox> box;  // normalized
  std::optional<std::string> caption;

  friend bool operator==(const ArtifactAnnotation&, const ArtifactAnnotation&) = default;
};

/// Procedural-scene payload for generated items: raw scene parameters and the
/// diffusion condition they were drawn under.
struct SceneRecord {
  std::vector<double> params;
  int condition = 0;

  friend bool operator==(const SceneRecord&, const SceneRecord&) = default;
};

struct AnnotatedImage {
  std::string image_ref;
  std::string prompt;
  std::string generator;
  LabelSet labels;
  std::vector<ArtifactAnnotation> annotations;
  std::optional<SceneRecord> scene;

  friend bool operator==(const AnnotatedImage&, const AnnotatedImage&) = default;
};

struct Dataset {
  std::vector<AnnotatedImage> items;
  std::string taxonomy_version;
  std::map<std::string, std::string> metadata;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

inline constexpr int kDatasetFormatVersion = 1;

/// Checks the record-level invariants; throws ValidationError naming the record.
void validate(const Dataset& dataset, const Taxonomy* taxonomy = nullptr);

Dataset dataset_from_json(const std::string& text);
std::string dataset_to_json(const Dataset& dataset);
Dataset load_dataset(const std::string& path);
void save_dataset(const Dataset& dataset, const std::string& path);

/// Deterministic shuffle then cut at round(n * train_fraction).
std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_fraction, std::uint64_t seed);

struct DistributionSummary {
  std::vector<int> per_category;  // indexed by category id
  int no_artifacts = 0;
};

DistributionSummary summarize(const Dataset& dataset, const Taxonomy& taxonomy);
/// CSV with header `category,name,count`; the last row counts NO_ARTIFACTS.
std::string summary_csv(const DistributionSummary& summary, const Taxonomy& taxonomy);

}  // namespace artifact
