#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "artifact/annotations.hpp"
#include "doctest.h"

using namespace artifact;

namespace {

Dataset numbered(int n) {
  Dataset d;
  d.taxonomy_version = "builtin-13-v1";
  for (int i = 0; i < n; ++i) {
    AnnotatedImage item;
    item.image_ref = "images/" + std::to_string(i) + ".png";
    d.items.push_back(item);
  }
  return d;
}

std::vector<std::string> refs(const Dataset& d) {
  std::vector<std::string> out;
  for (const auto& item : d.items) out.push_back(item.image_ref);
  return out;
}

}  // namespace

TEST_CASE("fixture loads field for field") {
  const Dataset d = load_dataset(ARTIFACT_FIXTURES "/dataset_small.json");
  REQUIRE(d.items.size() == 3);
  CHECK(d.taxonomy_version == "builtin-13-v1");
  CHECK(d.metadata.at("source") == "hand-written fixture");

  const auto& first = d.items[0];
  CHECK(first.image_ref == "images/000.pgm");
  CHECK(first.generator == "toy-diffusion");
  CHECK(first.labels == LabelSet::of({2}));
  REQUIRE(first.annotations.size() == 1);
  CHECK(first.annotations[0].category_id == 2);
  CHECK(*first.annotations[0].box == BoundingBox{0.125, 0.25, 0.375, 0.5});
  CHECK(*first.annotations[0].caption == "the left arm bends twice");
  CHECK_FALSE(first.scene.has_value());

  const auto& second = d.items[1];
  CHECK(second.labels == LabelSet::of({2, 3}));
  CHECK_FALSE(second.annotations[0].box.has_value());
  CHECK(*second.annotations[0].caption == "an extra joint on the right arm");
  CHECK_FALSE(second.annotations[1].caption.has_value());
  REQUIRE(second.scene.has_value());
  CHECK(second.scene->condition == 1);
  CHECK(second.scene->params.size() == 15);

  CHECK(d.items[2].labels.is_no_artifacts());
  CHECK(d.items[2].annotations.empty());
}

TEST_CASE("dataset JSON round-trips") {
  const Dataset d = load_dataset(ARTIFACT_FIXTURES "/dataset_small.json");
  const std::string text = dataset_to_json(d);
  const Dataset back = dataset_from_json(text);
  CHECK(back == d);
  CHECK(dataset_to_json(back) == text);

  const Dataset empty;
  CHECK(dataset_from_json(dataset_to_json(empty)) == empty);

  const auto path = std::filesystem::temp_directory_path() / "artifact_dataset_roundtrip.json";
  save_dataset(d, path.string());
  CHECK(load_dataset(path.string()) == d);
  std::filesystem::remove(path);
}

TEST_CASE("dataset validation") {
  Dataset d = load_dataset(ARTIFACT_FIXTURES "/dataset_small.json");
  SUBCASE("no_artifacts with annotations") {
    d.items[2].annotations.push_back({2, std::nullopt, std::string("bent")});
    CHECK_THROWS_AS(validate(d), ValidationError);
    CHECK_THROWS_AS(dataset_from_json(dataset_to_json(d)), ValidationError);
  }
  SUBCASE("annotation outside labels") {
    d.items[0].annotations.push_back({5, std::nullopt, std::string("extra")});
    CHECK_THROWS_AS(validate(d), ValidationError);
  }
  SUBCASE("box outside the unit square") {
    d.items[0].annotations[0].box = BoundingBox{0.5, 0.5, 1.5, 0.9};
    CHECK_THROWS_AS(validate(d), ValidationError);
  }
  SUBCASE("label not in taxonomy") {
    d.items[0].labels = LabelSet::of({2, 40});
    CHECK_THROWS(validate(d, &default_taxonomy()));
  }
}

TEST_CASE("malformed dataset documents") {
  CHECK_THROWS_AS(dataset_from_json("{"), ParseError);
  CHECK_THROWS_AS(dataset_from_json(R"({"format": "other", "version": 1, "items": []})"), ParseError);
  CHECK_THROWS_AS(dataset_from_json(R"({"format": "artifact-dataset", "version": 2, "items": []})"), VersionError);
  CHECK_THROWS_AS(dataset_from_json(R"({"format": "artifact-dataset", "version": 1, "items": [{"image_ref": "a"}]})"),
                  ParseError);
}

TEST_CASE("split sizes follow the annotated-set proportions") {
  const Dataset d = numbered(1310);
  const auto [train, test] = split(d, 1045.0 / 1310.0, 42);
  CHECK(train.items.size() == 1045);
  CHECK(test.items.size() == 265);
  CHECK(train.metadata.at("split_part") == "train");
  CHECK(test.metadata.at("split_part") == "test");
}

TEST_CASE("split is a seed-stable partition") {
  const Dataset d = numbered(100);
  const auto a = split(d, 0.7, 9);
  const auto b = split(d, 0.7, 9);
  CHECK(refs(a.first) == refs(b.first));
  CHECK(refs(a.second) == refs(b.second));
  CHECK(refs(split(d, 0.7, 10).first) != refs(a.first));

  auto all = refs(a.first);
  const auto rest = refs(a.second);
  all.insert(all.end(), rest.begin(), rest.end());
  auto expected = refs(d);
  std::sort(all.begin(), all.end());
  std::sort(expected.begin(), expected.end());
  CHECK(all == expected);
  CHECK_THROWS_AS(split(d, 1.0, 1), DomainError);
}

TEST_CASE("summarize") {
  const Taxonomy& t = default_taxonomy();
  const DistributionSummary empty = summarize(Dataset{}, t);
  CHECK(empty.no_artifacts == 0);
  CHECK(std::all_of(empty.per_category.begin(), empty.per_category.end(), [](int c) { return c == 0; }));

  const Dataset d = load_dataset(ARTIFACT_FIXTURES "/dataset_small.json");
  const DistributionSummary s = summarize(d, t);
  CHECK(s.per_category[category::kDistortion] == 2);
  CHECK(s.per_category[category::kOmission] == 1);
  CHECK(s.no_artifacts == 1);
  int total = 0;
  for (int c : s.per_category) total += c;
  CHECK(total >= 2);

  const std::string csv = summary_csv(s, t);
  CHECK(csv.rfind("category,name,count\n", 0) == 0);
  CHECK(csv.find("2,Distorted components,2\n") != std::string::npos);
  CHECK(csv.find("no_artifacts,No artifacts,1\n") != std::string::npos);
}
