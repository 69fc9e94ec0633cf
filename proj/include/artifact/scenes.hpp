#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "artifact/rng.hpp"
#include "artifact/taxonomy.hpp"

namespace artifact {

inline constexpr int kLimbSlots = 6;
inline constexpr int kSceneDim = 3 + 2 * kLimbSlots;

/// [cx, cy, r, (angle_0, length_0), ..., (angle_5, length_5)] in scene units,
/// where the frame is the unit square. Any real vector is a valid scene.
using SceneParams = Eigen::Matrix<double, kSceneDim, 1>;

namespace scene_index {
inline constexpr int kCenterX = 0;
inline constexpr int kCenterY = 1;
inline constexpr int kRadius = 2;
constexpr int angle(int slot) { return 3 + 2 * slot; }
constexpr int length(int slot) { return 4 + 2 * slot; }
}  // namespace scene_index

struct SceneConfig {
  double presence_threshold = 0.05;
  double length_lo = 0.15;
  double length_hi = 0.30;
  int nominal_limbs = 4;
  /// Distance kept between sampled values and every predicate boundary.
  double margin = 0.03;
  /// Gap between a clean body and the frame edge.
  double frame_margin = 0.08;
  /// Nominal body radius range per condition class.
  std::vector<std::array<double, 2>> radius_by_condition = {{0.10, 0.13}, {0.16, 0.19}};
  /// Half-width of the angular jitter around each slot's base angle.
  double angle_jitter = 0.4;

  int condition_count() const { return static_cast<int>(radius_by_condition.size()); }
  double base_angle(int slot) const;
  /// Throws ValidationError when the thresholds and margins overlap.
  void validate() const;
};

enum class ArtifactSpec { Clean, Omission, Duplication, Distortion, OutOfFrame };

std::string_view to_string(ArtifactSpec spec);
ArtifactSpec artifact_spec_from_string(std::string_view text);

/// Draws a scene whose oracle label is exactly the one `spec` names.
SceneParams sample_scene(Rng& rng, ArtifactSpec spec, int condition, const SceneConfig& cfg);

/// Categorical mixture over artifact specs, e.g. "clean=0.6,omission=0.1".
struct SceneMix {
  std::vector<std::pair<ArtifactSpec, double>> weights;

  /// 60% clean, the rest split evenly over the four artifact specs.
  static SceneMix default_mix();
  /// Fractions must be non-negative and sum to 1 (within 1e-9).
  static SceneMix parse(std::string_view text);
  std::string to_string() const;
  ArtifactSpec draw(Rng& rng) const;
};

/// The ground-truth oracle. Limbs with length >= presence_threshold are present;
/// fewer than nominal_limbs present is an omission, more is a duplication, a
/// present limb outside [length_lo, length_hi] is a distortion and a body disc
/// leaving the unit square is out of frame. A non-finite entry or non-positive
/// radius is reported as distortion alone. Ids refer to the built-in taxonomy.
LabelSet classify_scene(const SceneParams& params, const SceneConfig& cfg);

/// Fixed affine map between scene parameters and the roughly unit-scale state
/// the diffusion model operates on.
class SceneCodec {
 public:
  explicit SceneCodec(const SceneConfig& cfg = {});
  Eigen::VectorXd encode(const SceneParams& params) const;
  SceneParams decode(const Eigen::Ref<const Eigen::VectorXd>& state) const;

 private:
  SceneParams center_, scale_;
};

struct GrayImage {
  int width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, row 0 at the top

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

/// Filled body disc (255) over limb segments (128) on a black square,
/// without anti-aliasing. Scene y grows downwards.
GrayImage render(const SceneParams& params, int resolution);

/// Binary PGM (P5, maxval 255).
std::string encode_pgm(const GrayImage& image);
void write_pgm(const GrayImage& image, const std::string& path);

}  // namespace artifact
