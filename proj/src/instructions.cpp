#include "artifact/instructions.hpp"

#include <algorithm>
#include <sstream>

namespace artifact {
namespace {

void write_options(std::ostringstream& out, const Taxonomy& taxonomy) {
  for (const auto& category : taxonomy.categories()) {
    out << "(" << category.id + 1 << ") " << category.name << ": " << category.explanation << "\n";
  }
}

// A reference answer that names artifacts: the first two categories, or the
// only one for a single-category taxonomy.
std::string artifact_example(const Taxonomy& taxonomy) {
  return taxonomy.size() > 1 ? canonical_answer(LabelSet::of({0, 1}), taxonomy)
                             : canonical_answer(LabelSet::of({0}), taxonomy);
}

struct Letterbox {
  double scale, pad_x, pad_y;
};

Letterbox letterbox(int width, int height) {
  if (width <= 0 || height <= 0) throw DomainError("image dimensions must be positive");
  const double scale = static_cast<double>(kCanvasSize) / std::max(width, height);
  return {scale, (kCanvasSize - width * scale) / 2.0, (kCanvasSize - height * scale) / 2.0};
}

}  // namespace

std::string build_classification_prompt(const Taxonomy& taxonomy) {
  std::ostringstream out;
  out << "You are inspecting a synthetic image produced by a generative model. "
         "Decide which kinds of artifacts the image contains. More than one kind may be present.\n\n"
      << "Options:\n";
  write_options(out, taxonomy);
  out << "\nAnswer examples:\n"
      << "Image without artifacts: " << kNoArtifactsAnswer << "\n"
      << "Image with artifacts: " << artifact_example(taxonomy) << "\n\n"
      << "Answer commands:\n"
      << "- Reply only with option names from the list, separated by \", \" and ending with a period.\n"
      << "- If the image has no artifacts, reply exactly \"" << kNoArtifactsAnswer << "\"\n"
      << "- Never combine \"No artifacts\" with any option name.\n";
  return out.str();
}

std::string build_detection_prompt(const Taxonomy& taxonomy) {
  std::ostringstream out;
  out << "You are inspecting a synthetic image produced by a generative model. "
         "Complete the four sub-tasks below in order.\n\n"
      << "1. Artifact judgement: Does the image contain any artifacts? Answer \"Yes\" or \"No\".\n\n"
      << "2. Artifact classification: If you answered \"Yes\", choose every kind of artifact present from "
         "the options below, separated by \", \".\n";
  write_options(out, taxonomy);
  out << "\n3. Artifact location: For each kind chosen in sub-task 2, give the region of the artifact as "
         "[x1,y1,x2,y2], with coordinates normalized to [0,1] on the image padded to "
      << kCanvasSize << "x" << kCanvasSize << ".\n\n"
      << "4. Other artifacts: Describe in one sentence any artifact not covered by the options, or answer "
         "\"None\".\n";
  return out.str();
}

BoundingBox normalize_box(const BoundingBox& box, int width, int height) {
  const Letterbox lb = letterbox(width, height);
  if (box.degenerate()) throw DomainError("degenerate bounding box");
  if (box.x1 < 0 || box.y1 < 0 || box.x2 > width || box.y2 > height) {
    throw DomainError("bounding box exceeds image bounds");
  }
  const double canvas = kCanvasSize;
  return {(box.x1 * lb.scale + lb.pad_x) / canvas, (box.y1 * lb.scale + lb.pad_y) / canvas,
          (box.x2 * lb.scale + lb.pad_x) / canvas, (box.y2 * lb.scale + lb.pad_y) / canvas};
}

BoundingBox denormalize_box(const BoundingBox& box, int width, int height) {
  const Letterbox lb = letterbox(width, height);
  if (box.degenerate() || !box.within_unit_square()) {
    throw DomainError("normalized box must be non-degenerate and inside [0,1]^2");
  }
  const double canvas = kCanvasSize;
  const auto to_x = [&](double v) { return std::clamp((v * canvas - lb.pad_x) / lb.scale, 0.0, double(width)); };
  const auto to_y = [&](double v) { return std::clamp((v * canvas - lb.pad_y) / lb.scale, 0.0, double(height)); };
  BoundingBox out{to_x(box.x1), to_y(box.y1), to_x(box.x2), to_y(box.y2)};
  if (out.degenerate()) throw DomainError("normalized box lies entirely in the padding region");
  return out;
}

}  // namespace artifact
