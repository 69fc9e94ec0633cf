#include "artifact/annotations.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "artifact/rng.hpp"
#include "json.hpp"

namespace artifact {
namespace {

using nlohmann::json;

constexpr const char* kFormatTag = "artifact-dataset";

std::string record_name(std::size_t index, const std::string& image_ref) {
  return "items[" + std::to_string(index) + "]" + (image_ref.empty() ? "" : " ('" + image_ref + "')");
}

json box_to_json(const BoundingBox& box) { return json::array({box.x1, box.y1, box.x2, box.y2}); }

BoundingBox box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw ParseError("'box' must be an array of 4 numbers");
  for (const auto& v : j) {
    if (!v.is_number()) throw ParseError("'box' must be an array of 4 numbers");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

json item_to_json(const AnnotatedImage& item) {
  json j;
  j["image_ref"] = item.image_ref;
  j["prompt"] = item.prompt;
  j["generator"] = item.generator;
  if (item.labels.is_no_artifacts()) j["labels"] = "no_artifacts";
  else j["labels"] = item.labels.ids();
  json annotations = json::array();
  for (const auto& a : item.annotations) {
    json aj;
    aj["category_id"] = a.category_id;
    if (a.box) aj["box"] = box_to_json(*a.box);
    if (a.caption) aj["caption"] = *a.caption;
    annotations.push_back(std::move(aj));
  }
  j["annotations"] = std::move(annotations);
  if (item.scene) j["scene"] = {{"params", item.scene->params}, {"condition", item.scene->condition}};
  return j;
}

template <typename T>
T required(const json& j, const char* key) {
  if (!j.contains(key)) throw ParseError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParseError(std::string("field '") + key + "' has the wrong type");
  }
}

AnnotatedImage item_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("record must be an object");
  AnnotatedImage item;
  item.image_ref = required<std::string>(j, "image_ref");
  item.prompt = j.value("prompt", std::string{});
  item.generator = j.value("generator", std::string{});
  if (!j.contains("labels")) throw ParseError("missing field 'labels'");
  const json& labels = j.at("labels");
  if (labels.is_string()) {
    if (labels.get<std::string>() != "no_artifacts") throw ParseError("'labels' string must be \"no_artifacts\"");
  } else if (labels.is_array()) {
    std::vector<int> ids;
    for (const auto& v : labels) {
      if (!v.is_number_integer()) throw ParseError("'labels' entries must be integers");
      ids.push_back(v.get<int>());
    }
    if (ids.empty()) throw ValidationError("'labels' array is empty; use \"no_artifacts\"");
    item.labels = LabelSet::of(ids);
  } else {
    throw ParseError("field 'labels' has the wrong type");
  }
  if (j.contains("annotations")) {
    if (!j.at("annotations").is_array()) throw ParseError("field 'annotations' must be an array");
    for (const auto& aj : j.at("annotations")) {
      ArtifactAnnotation a;
      a.category_id = required<int>(aj, "category_id");
      if (aj.contains("box")) a.box = box_from_json(aj.at("box"));
      if (aj.contains("caption")) a.caption = required<std::string>(aj, "caption");
      item.annotations.push_back(std::move(a));
    }
  }
  if (j.contains("scene")) {
    const json& sj = j.at("scene");
    item.scene = SceneRecord{required<std::vector<double>>(sj, "params"), required<int>(sj, "condition")};
  }
  return item;
}

}  // namespace

void validate(const Dataset& dataset, const Taxonomy* taxonomy) {
  std::set<std::string> refs;
  for (std::size_t i = 0; i < dataset.items.size(); ++i) {
    const auto& item = dataset.items[i];
    const auto fail = [&](const std::string& what) {
      throw ValidationError(record_name(i, item.image_ref) + ": " + what);
    };
    if (item.image_ref.empty()) fail("empty image_ref");
    if (!refs.insert(item.image_ref).second) fail("duplicate image_ref");
    if (item.labels.is_no_artifacts() != item.annotations.empty()) {
      fail("labels must be no_artifacts exactly when there are no annotations");
    }
    if (taxonomy) {
      for (int id : item.labels.ids()) {
        if (!taxonomy->valid_id(id)) fail("label " + std::to_string(id) + " not in taxonomy");
      }
    }
    for (const auto& a : item.annotations) {
      if (!item.labels.contains(a.category_id)) {
        fail("annotation category " + std::to_string(a.category_id) + " missing from labels");
      }
      if (!a.box && !a.caption) fail("annotation needs a box or a caption");
      if (a.box && (a.box->degenerate() || !a.box->within_unit_square())) {
        fail("annotation box must be normalized and non-degenerate");
      }
    }
  }
}

Dataset dataset_from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ParseError("dataset document must be a JSON object");
  if (root.value("format", std::string{}) != kFormatTag) throw ParseError("not an artifact-dataset document");
  const int version = root.value("version", 0);
  if (version != kDatasetFormatVersion) {
    throw VersionError("unsupported dataset version " + std::to_string(version));
  }
  Dataset dataset;
  dataset.taxonomy_version = root.value("taxonomy_version", std::string{});
  if (root.contains("metadata")) {
    try {
      dataset.metadata = root.at("metadata").get<std::map<std::string, std::string>>();
    } catch (const json::exception&) {
      throw ParseError("'metadata' must map strings to strings");
    }
  }
  if (!root.contains("items") || !root.at("items").is_array()) throw ParseError("missing 'items' array");
  const json& items = root.at("items");
  for (std::size_t i = 0; i < items.size(); ++i) {
    try {
      dataset.items.push_back(item_from_json(items[i]));
    } catch (const ParseError& e) {
      throw ParseError(record_name(i, items[i].is_object() ? items[i].value("image_ref", "") : "") + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(record_name(i, items[i].value("image_ref", "")) + ": " + e.what());
    }
  }
  validate(dataset);
  return dataset;
}

std::string dataset_to_json(const Dataset& dataset) {
  validate(dataset);
  json root;
  root["format"] = kFormatTag;
  root["version"] = kDatasetFormatVersion;
  root["taxonomy_version"] = dataset.taxonomy_version;
  root["metadata"] = dataset.metadata;
  json items = json::array();
  for (const auto& item : dataset.items) items.push_back(item_to_json(item));
  root["items"] = std::move(items);
  return root.dump(2) + "\n";
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dataset '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return dataset_from_json(buffer.str());
}

void save_dataset(const Dataset& dataset, const std::string& path) {
  const std::string text = dataset_to_json(dataset);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write dataset '" + path + "'");
  out << text;
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw DomainError("train fraction must lie in (0, 1)");
  const std::size_t n = dataset.items.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng{stream_seed(seed, 0)};
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_below(rng, i)]);

  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * train_fraction));
  std::pair<Dataset, Dataset> parts;
  for (auto* part : {&parts.first, &parts.second}) {
    part->taxonomy_version = dataset.taxonomy_version;
    part->metadata = dataset.metadata;
    part->metadata["split_seed"] = std::to_string(seed);
    part->metadata["split_train_fraction"] = json(train_fraction).dump();
  }
  parts.first.metadata["split_part"] = "train";
  parts.second.metadata["split_part"] = "test";
  for (std::size_t k = 0; k < n; ++k) {
    (k < n_train ? parts.first : parts.second).items.push_back(dataset.items[order[k]]);
  }
  return parts;
}

DistributionSummary summarize(const Dataset& dataset, const Taxonomy& taxonomy) {
  DistributionSummary summary;
  summary.per_category.assign(static_cast<std::size_t>(taxonomy.size()), 0);
  for (const auto& item : dataset.items) {
    if (item.labels.is_no_artifacts()) {
      ++summary.no_artifacts;
      continue;
    }
    for (int id : item.labels.ids()) {
      if (!taxonomy.valid_id(id)) throw DomainError("label " + std::to_string(id) + " not in taxonomy");
      ++summary.per_category[static_cast<std::size_t>(id)];
    }
  }
  return summary;
}

std::string summary_csv(const DistributionSummary& summary, const Taxonomy& taxonomy) {
  const auto quoted = [](const std::string& s) {
    if (s.find_first_of(",\"") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return out + "\"";
  };
  std::ostringstream out;
  out << "category,name,count\n";
  for (const auto& category : taxonomy.categories()) {
    out << category.id << "," << quoted(category.name) << ","
        << summary.per_category.at(static_cast<std::size_t>(category.id)) << "\n";
  }
  out << "no_artifacts,No artifacts," << summary.no_artifacts << "\n";
  return out.str();
}

}  // namespace artifact
