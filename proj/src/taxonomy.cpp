#include "artifact/taxonomy.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

namespace artifact {
namespace {

std::string lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return out;
}

std::string_view trim(std::string_view text) {
  const auto is_space = [](unsigned char ch) { return std::isspace(ch) != 0; };
  while (!text.empty() && is_space(text.front())) text.remove_prefix(1);
  while (!text.empty() && is_space(text.back())) text.remove_suffix(1);
  return text;
}

// Strips surrounding whitespace and punctuation, lowercases and collapses
// internal runs of whitespace to one space.
std::string normalize_token(std::string_view token) {
  const auto is_edge = [](unsigned char ch) {
    return std::isspace(ch) != 0 || (std::ispunct(ch) != 0 && ch != '-');
  };
  while (!token.empty() && is_edge(token.front())) token.remove_prefix(1);
  while (!token.empty() && is_edge(token.back())) token.remove_suffix(1);
  std::string out;
  bool pending_space = false;
  for (unsigned char ch : token) {
    if (std::isspace(ch)) {
      pending_space = true;
      continue;
    }
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(ch)));
  }
  return out;
}

}  // namespace

std::string_view to_string(CoarseGroup group) {
  switch (group) {
    case CoarseGroup::ObjectAware:
      return "object-aware";
    case CoarseGroup::ObjectAgnostic:
      return "object-agnostic";
    case CoarseGroup::Lighting:
      return "lighting";
    case CoarseGroup::Others:
      return "others";
  }
  return "others";
}

CoarseGroup coarse_group_from_string(std::string_view text) {
  const std::string key = lower(trim(text));
  for (auto group : {CoarseGroup::ObjectAware, CoarseGroup::ObjectAgnostic, CoarseGroup::Lighting,
                     CoarseGroup::Others}) {
    if (key == to_string(group)) return group;
  }
  throw ParseError("unknown coarse group '" + std::string(text) + "'");
}

Taxonomy::Taxonomy(std::vector<ArtifactCategory> categories, std::string version)
    : categories_(std::move(categories)), version_(std::move(version)) {
  if (categories_.empty()) throw ValidationError("taxonomy must contain at least one category");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < categories_.size(); ++i) {
    auto& category = categories_[i];
    category.id = static_cast<int>(i);
    if (trim(category.name).empty()) throw ValidationError("category " + std::to_string(i) + " has no name");
    if (trim(category.explanation).empty()) {
      throw ValidationError("category '" + category.name + "' has an empty explanation");
    }
    if (!seen.insert(normalize_token(category.name)).second) {
      throw ValidationError("duplicate category name '" + category.name + "'");
    }
  }
}

const ArtifactCategory& Taxonomy::operator[](int id) const {
  if (!valid_id(id)) throw DomainError("category id " + std::to_string(id) + " out of range");
  return categories_[static_cast<std::size_t>(id)];
}

int Taxonomy::find(std::string_view name) const {
  const std::string key = normalize_token(name);
  for (const auto& category : categories_) {
    if (normalize_token(category.name) == key) return category.id;
  }
  return -1;
}

const Taxonomy& default_taxonomy() {
  static const Taxonomy taxonomy = [] {
    using G = CoarseGroup;
    std::vector<ArtifactCategory> list = {
        {0, "Illegible letters", G::ObjectAware, "Text or letters in the image are malformed and cannot be read."},
        {0, "Awkward facial expression", G::ObjectAware,
         "A human or animal face shows an unnatural, twisted or implausible expression."},
        {0, "Distorted components", G::ObjectAgnostic,
         "A part of an object is distorted or deformed, such as bent fingers or warped limbs."},
        {0, "Omitted components", G::ObjectAgnostic,
         "A part an object should have is missing, such as fewer fingers or limbs than expected."},
        {0, "Duplicated components", G::ObjectAgnostic,
         "A part of an object appears more times than it should, such as extra fingers, limbs or ears."},
        {0, "Color mis-binding", G::ObjectAgnostic,
         "An object has a color that contradicts common sense and was not requested."},
        {0, "Texture mis-binding", G::ObjectAgnostic, "An object carries a surface texture that belongs to something else."},
        {0, "Spatial position mis-binding", G::ObjectAgnostic,
         "Objects are placed in physically implausible positions relative to each other."},
        {0, "Shape mis-binding", G::ObjectAgnostic, "An object has the overall shape of a different kind of object."},
        {0, "Luminosity anomaly", G::Lighting, "Brightness or light sources are inconsistent across the scene."},
        {0, "Shadow anomaly", G::Lighting, "Shadows are missing, misplaced or inconsistent with the lighting."},
        {0, "Blur", G::Others, "Regions that should be sharp are blurred or smeared."},
        {0, "Out of frame", G::Others, "The main subject is cut off by the image border."},
    };
    return Taxonomy(std::move(list), "builtin-13-v1");
  }();
  return taxonomy;
}

Taxonomy load_taxonomy(std::string_view document) {
  struct Pending {
    int line = 0;
    std::optional<std::string> name, group, explanation;
  };
  std::vector<ArtifactCategory> categories;
  std::string version = "custom";
  std::optional<Pending> pending;
  std::set<std::string> names;

  const auto flush = [&] {
    if (!pending) return;
    const Pending& p = *pending;
    if (!p.name) throw ParseError("category is missing 'name'", p.line);
    if (!p.group) throw ParseError("category '" + *p.name + "' is missing 'group'", p.line);
    if (!p.explanation) throw ParseError("category '" + *p.name + "' is missing 'explanation'", p.line);
    if (!names.insert(normalize_token(*p.name)).second) {
      throw ValidationError("line " + std::to_string(p.line) + ": duplicate category name '" + *p.name + "'");
    }
    CoarseGroup group;
    try {
      group = coarse_group_from_string(*p.group);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), p.line);
    }
    categories.push_back({static_cast<int>(categories.size()), *p.name, group, *p.explanation});
    pending.reset();
  };

  std::istringstream in{std::string(document)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line == "[category]") {
      flush();
      pending = Pending{line_no, {}, {}, {}};
      continue;
    }
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) throw ParseError("expected 'key: value' or '[category]'", line_no);
    const std::string key = lower(trim(line.substr(0, colon)));
    const std::string value{trim(line.substr(colon + 1))};
    if (value.empty()) throw ParseError("empty value for '" + key + "'", line_no);
    if (!pending) {
      if (key != "version") throw ParseError("unexpected key '" + key + "' outside a category", line_no);
      version = value;
      continue;
    }
    std::optional<std::string>* slot = nullptr;
    if (key == "name") slot = &pending->name;
    else if (key == "group") slot = &pending->group;
    else if (key == "explanation") slot = &pending->explanation;
    else throw ParseError("unknown key '" + key + "'", line_no);
    if (slot->has_value()) throw ParseError("repeated key '" + key + "'", line_no);
    *slot = value;
  }
  flush();
  if (categories.empty()) throw ParseError("document defines no categories");
  return Taxonomy(std::move(categories), std::move(version));
}

Taxonomy load_taxonomy_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open taxonomy file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return load_taxonomy(buffer.str());
}

std::string serialize_taxonomy(const Taxonomy& taxonomy) {
  std::ostringstream out;
  out << "version: " << taxonomy.version() << "\n";
  for (const auto& category : taxonomy.categories()) {
    out << "\n[category]\n"
        << "name: " << category.name << "\n"
        << "group: " << to_string(category.coarse_group) << "\n"
        << "explanation: " << category.explanation << "\n";
  }
  return out.str();
}

LabelSet LabelSet::of(std::initializer_list<int> ids) {
  return of(std::span<const int>(ids.begin(), ids.size()));
}

LabelSet LabelSet::of(std::span<const int> ids) {
  if (ids.empty()) throw ValidationError("a label set needs at least one category; use no_artifacts()");
  LabelSet set;
  set.ids_.assign(ids.begin(), ids.end());
  std::sort(set.ids_.begin(), set.ids_.end());
  set.ids_.erase(std::unique(set.ids_.begin(), set.ids_.end()), set.ids_.end());
  if (set.ids_.front() < 0) throw ValidationError("negative category id in label set");
  return set;
}

bool LabelSet::contains(int id) const { return std::binary_search(ids_.begin(), ids_.end(), id); }

void LabelSet::validate(const Taxonomy& taxonomy) const {
  for (int id : ids_) {
    if (!taxonomy.valid_id(id)) throw DomainError("category id " + std::to_string(id) + " not in taxonomy");
  }
}

ParsedAnswer parse_answer(std::string_view text, const Taxonomy& taxonomy) {
  std::vector<std::string> tokens;
  std::string current;
  const auto push = [&] {
    std::string token = normalize_token(current);
    if (!token.empty()) tokens.push_back(std::move(token));
    current.clear();
  };
  for (char ch : text) {
    if (ch == ',' || ch == '\n' || ch == '\r') push();
    else current.push_back(ch);
  }
  push();
  if (tokens.empty()) throw EmptyAnswerError("answer is empty", {});

  std::vector<std::string> names;
  for (const auto& category : taxonomy.categories()) names.push_back(normalize_token(category.name));

  bool said_no_artifacts = false;
  std::vector<int> ids;
  std::vector<std::string> unmatched;
  for (const auto& token : tokens) {
    if (token == "no artifacts" || token == "no artifact") {
      said_no_artifacts = true;
      continue;
    }
    int match = -1;
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == token) match = static_cast<int>(i);
    }
    if (match < 0) {
      int candidates = 0;
      for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i].starts_with(token)) {
          ++candidates;
          match = static_cast<int>(i);
        }
      }
      if (candidates != 1) match = -1;
    }
    if (match >= 0) ids.push_back(match);
    else unmatched.push_back(token);
  }

  if (said_no_artifacts && !ids.empty()) {
    throw AnswerConflictError("answer mixes 'No artifacts' with artifact categories", ids);
  }
  if (said_no_artifacts) return {LabelSet::no_artifacts(), std::move(unmatched)};
  if (ids.empty()) throw EmptyAnswerError("answer names no known category", std::move(unmatched));
  return {LabelSet::of(ids), std::move(unmatched)};
}

std::string canonical_answer(const LabelSet& labels, const Taxonomy& taxonomy) {
  if (labels.is_no_artifacts()) return std::string(kNoArtifactsAnswer);
  labels.validate(taxonomy);
  std::string out;
  for (int id : labels.ids()) {
    if (!out.empty()) out += ", ";
    out += taxonomy[id].name;
  }
  out += '.';
  return out;
}

}  // namespace artifact
