#pragma once

#include <string>

#include "artifact/taxonomy.hpp"

namespace artifact {

/// Axis-aligned box as [x1, y1, x2, y2]. Pixel units unless produced by
/// normalize_box, in which case coordinates live in [0, 1].
struct BoundingBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  bool degenerate() const { return !(x1 < x2 && y1 < y2); }
  bool within_unit_square() const { return x1 >= 0 && y1 >= 0 && x2 <= 1 && y2 <= 1; }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// Side of the square canvas the vision encoder sees.
inline constexpr int kCanvasSize = 336;

/// Bumped whenever the text of either prompt changes.
inline constexpr int kPromptTemplateVersion = 1;

std::string build_classification_prompt(const Taxonomy& taxonomy);
std::string build_detection_prompt(const Taxonomy& taxonomy);

/// Letterboxes a width x height image into the 336x336 canvas (uniform scale,
/// centered padding on the short axis) and returns the box in canvas units / 336.
BoundingBox normalize_box(const BoundingBox& box, int width, int height);

/// Inverse of normalize_box; the result is clipped to the image.
BoundingBox denormalize_box(const BoundingBox& box, int width, int height);

}  // namespace artifact
