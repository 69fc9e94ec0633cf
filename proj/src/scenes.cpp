#include "artifact/scenes.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <fstream>
#include <numbers>

namespace artifact {

namespace si = scene_index;

double SceneConfig::base_angle(int slot) const {
  return -std::numbers::pi + (slot + 0.5) * 2.0 * std::numbers::pi / kLimbSlots;
}

void SceneConfig::validate() const {
  if (!(margin > 0)) throw ValidationError("scene margin must be positive");
  if (!(presence_threshold - margin > 0 && presence_threshold + margin < length_lo - margin &&
        length_lo + margin < length_hi - margin)) {
    throw ValidationError("scene thresholds must satisfy 0 < presence < length_lo < length_hi with margins");
  }
  if (nominal_limbs < 1 || nominal_limbs >= kLimbSlots) throw ValidationError("nominal limb count out of range");
  if (radius_by_condition.empty()) throw ValidationError("at least one condition class is required");
  for (const auto& [lo, hi] : radius_by_condition) {
    if (!(0 < lo && lo <= hi && 2 * (hi + frame_margin) < 1)) throw ValidationError("radius range does not fit the frame");
  }
  if (!(frame_margin >= margin)) throw ValidationError("frame margin must be at least the margin");
}

std::string_view to_string(ArtifactSpec spec) {
  switch (spec) {
    case ArtifactSpec::Clean:
      return "clean";
    case ArtifactSpec::Omission:
      return "omission";
    case ArtifactSpec::Duplication:
      return "duplication";
    case ArtifactSpec::Distortion:
      return "distortion";
    case ArtifactSpec::OutOfFrame:
      return "out_of_frame";
  }
  return "clean";
}

ArtifactSpec artifact_spec_from_string(std::string_view text) {
  for (auto spec : {ArtifactSpec::Clean, ArtifactSpec::Omission, ArtifactSpec::Duplication,
                    ArtifactSpec::Distortion, ArtifactSpec::OutOfFrame}) {
    if (text == to_string(spec)) return spec;
  }
  throw DomainError("unknown artifact spec '" + std::string(text) + "'");
}

SceneMix SceneMix::default_mix() {
  return {{{ArtifactSpec::Clean, 0.6},
           {ArtifactSpec::Omission, 0.1},
           {ArtifactSpec::Duplication, 0.1},
           {ArtifactSpec::Distortion, 0.1},
           {ArtifactSpec::OutOfFrame, 0.1}}};
}

SceneMix SceneMix::parse(std::string_view text) {
  SceneMix mix;
  double total = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find(',', start), text.size());
    const std::string_view item = text.substr(start, end - start);
    const std::size_t eq = item.find('=');
    if (eq == std::string_view::npos) throw DomainError("mix entry '" + std::string(item) + "' is not spec=fraction");
    const ArtifactSpec spec = artifact_spec_from_string(item.substr(0, eq));
    double value = 0;
    try {
      std::size_t used = 0;
      const std::string number(item.substr(eq + 1));
      value = std::stod(number, &used);
      if (used != number.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw DomainError("mix fraction in '" + std::string(item) + "' is not a number");
    }
    if (!(value >= 0)) throw DomainError("mix fractions must be non-negative");
    for (const auto& [existing, _] : mix.weights) {
      if (existing == spec) throw DomainError("mix repeats '" + std::string(artifact::to_string(spec)) + "'");
    }
    mix.weights.emplace_back(spec, value);
    total += value;
    start = end + 1;
  }
  if (std::abs(total - 1.0) > 1e-9) throw DomainError("mix fractions must sum to 1, got " + std::to_string(total));
  return mix;
}

std::string SceneMix::to_string() const {
  std::string out;
  for (const auto& [spec, w] : weights) {
    if (!out.empty()) out += ',';
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s=%.17g", std::string(artifact::to_string(spec)).c_str(), w);
    out += buf;
  }
  return out;
}

ArtifactSpec SceneMix::draw(Rng& rng) const {
  double u = uniform01(rng);
  for (const auto& [spec, w] : weights) {
    if (u < w) return spec;
    u -= w;
  }
  for (auto it = weights.rbegin(); it != weights.rend(); ++it) {
    if (it->second > 0) return it->first;
  }
  throw DomainError("scene mix is empty");
}

SceneParams sample_scene(Rng& rng, ArtifactSpec spec, int condition, const SceneConfig& cfg) {
  if (condition < 0 || condition >= cfg.condition_count()) throw DomainError("condition out of range");
  const double m = cfg.margin;
  SceneParams p;
  const auto [r_lo, r_hi] = cfg.radius_by_condition[static_cast<std::size_t>(condition)];
  const double r = uniform(rng, r_lo, r_hi);
  p[si::kRadius] = r;
  p[si::kCenterX] = uniform(rng, r + cfg.frame_margin, 1 - r - cfg.frame_margin);
  p[si::kCenterY] = uniform(rng, r + cfg.frame_margin, 1 - r - cfg.frame_margin);

  const auto nominal = [&] { return uniform(rng, cfg.length_lo + m, cfg.length_hi - m); };
  const auto absent = [&] { return uniform(rng, 0.0, cfg.presence_threshold - m); };
  for (int slot = 0; slot < kLimbSlots; ++slot) {
    p[si::angle(slot)] = cfg.base_angle(slot) + uniform(rng, -cfg.angle_jitter, cfg.angle_jitter);
    p[si::length(slot)] = slot < cfg.nominal_limbs ? nominal() : absent();
  }

  const auto pick_nominal_slot = [&] { return static_cast<int>(uniform_below(rng, cfg.nominal_limbs)); };
  switch (spec) {
    case ArtifactSpec::Clean:
      break;
    case ArtifactSpec::Omission:
      p[si::length(pick_nominal_slot())] = absent();
      break;
    case ArtifactSpec::Duplication: {
      const int spare = kLimbSlots - cfg.nominal_limbs;
      p[si::length(cfg.nominal_limbs + static_cast<int>(uniform_below(rng, spare)))] = nominal();
      break;
    }
    case ArtifactSpec::Distortion: {
      const int slot = pick_nominal_slot();
      p[si::length(slot)] = uniform01(rng) < 0.5 ? uniform(rng, cfg.length_hi + m, cfg.length_hi + 0.15)
                                                 : uniform(rng, cfg.presence_threshold + m, cfg.length_lo - m);
      break;
    }
    case ArtifactSpec::OutOfFrame: {
      // Push the disc across one edge by between m and 4m.
      const int axis = static_cast<int>(uniform_below(rng, 2));
      const double overshoot = uniform(rng, m, 4 * m);
      p[axis] = uniform01(rng) < 0.5 ? r - overshoot : 1 - r + overshoot;
      break;
    }
  }
  return p;
}

LabelSet classify_scene(const SceneParams& params, const SceneConfig& cfg) {
  if (!params.allFinite() || !(params[si::kRadius] > 0)) return LabelSet::of({category::kDistortion});
  std::vector<int> ids;
  int present = 0;
  bool distorted = false;
  for (int slot = 0; slot < kLimbSlots; ++slot) {
    const double l = params[si::length(slot)];
    if (l < cfg.presence_threshold) continue;
    ++present;
    if (l < cfg.length_lo || l > cfg.length_hi) distorted = true;
  }
  if (distorted) ids.push_back(category::kDistortion);
  if (present < cfg.nominal_limbs) ids.push_back(category::kOmission);
  if (present > cfg.nominal_limbs) ids.push_back(category::kDuplication);
  const double cx = params[si::kCenterX], cy = params[si::kCenterY], r = params[si::kRadius];
  if (cx - r < 0 || cx + r > 1 || cy - r < 0 || cy + r > 1) ids.push_back(category::kOutOfFrame);
  return ids.empty() ? LabelSet::no_artifacts() : LabelSet::of(ids);
}

SceneCodec::SceneCodec(const SceneConfig& cfg) {
  center_.setZero();
  scale_.setOnes();
  center_[si::kCenterX] = center_[si::kCenterY] = 0.5;
  scale_[si::kCenterX] = scale_[si::kCenterY] = 0.25;
  double r_lo = cfg.radius_by_condition.front()[0], r_hi = cfg.radius_by_condition.front()[1];
  for (const auto& [lo, hi] : cfg.radius_by_condition) {
    r_lo = std::min(r_lo, lo);
    r_hi = std::max(r_hi, hi);
  }
  center_[si::kRadius] = 0.5 * (r_lo + r_hi);
  scale_[si::kRadius] = std::max(0.5 * (r_hi - r_lo), 0.01);
  for (int slot = 0; slot < kLimbSlots; ++slot) {
    center_[si::angle(slot)] = cfg.base_angle(slot);
    scale_[si::angle(slot)] = cfg.angle_jitter;
    center_[si::length(slot)] = cfg.length_lo;
    scale_[si::length(slot)] = cfg.length_hi - cfg.length_lo;
  }
}

Eigen::VectorXd SceneCodec::encode(const SceneParams& params) const {
  return ((params - center_).array() / scale_.array()).matrix();
}

SceneParams SceneCodec::decode(const Eigen::Ref<const Eigen::VectorXd>& state) const {
  if (state.size() != kSceneDim) throw DomainError("state dimension mismatch");
  return (state.array() * scale_.array()).matrix() + center_;
}

namespace {

struct Canvas {
  GrayImage& image;

  void plot(int x, int y, std::uint8_t value) {
    if (x < 0 || y < 0 || x >= image.width || y >= image.height) return;
    image.pixels[static_cast<std::size_t>(y) * image.width + x] = value;
  }

  int to_pixel(double v) const {
    return std::min(static_cast<int>(std::floor(v * image.width)), image.width - 1);
  }

  // Clips the segment to the unit square (Liang-Barsky) and draws it with
  // Bresenham between the pixels containing the clipped endpoints.
  void segment(double x0, double y0, double x1, double y1, std::uint8_t value) {
    double t0 = 0, t1 = 1;
    const double dx = x1 - x0, dy = y1 - y0;
    const double p[4] = {-dx, dx, -dy, dy};
    const double q[4] = {x0, 1 - x0, y0, 1 - y0};
    for (int i = 0; i < 4; ++i) {
      if (p[i] == 0) {
        if (q[i] < 0) return;
        continue;
      }
      const double t = q[i] / p[i];
      if (p[i] < 0) t0 = std::max(t0, t);
      else t1 = std::min(t1, t);
    }
    if (t0 > t1) return;
    int ax = to_pixel(x0 + t0 * dx), ay = to_pixel(y0 + t0 * dy);
    const int bx = to_pixel(x0 + t1 * dx), by = to_pixel(y0 + t1 * dy);
    const int sx = ax < bx ? 1 : -1, sy = ay < by ? 1 : -1;
    const int ddx = std::abs(bx - ax), ddy = -std::abs(by - ay);
    int err = ddx + ddy;
    while (true) {
      plot(ax, ay, value);
      if (ax == bx && ay == by) break;
      const int e2 = 2 * err;
      if (e2 >= ddy) {
        err += ddy;
        ax += sx;
      }
      if (e2 <= ddx) {
        err += ddx;
        ay += sy;
      }
    }
  }
};

}  // namespace

GrayImage render(const SceneParams& params, int resolution) {
  if (resolution < 16) throw DomainError("render resolution must be at least 16");
  GrayImage image{resolution, resolution, std::vector<std::uint8_t>(static_cast<std::size_t>(resolution) * resolution, 0)};
  Canvas canvas{image};
  const double cx = params[si::kCenterX], cy = params[si::kCenterY], r = params[si::kRadius];
  const bool body_ok = std::isfinite(cx) && std::isfinite(cy) && std::isfinite(r) && r > 0;
  if (!body_ok) return image;

  for (int slot = 0; slot < kLimbSlots; ++slot) {
    const double phi = params[si::angle(slot)], l = params[si::length(slot)];
    if (!std::isfinite(phi) || !std::isfinite(l) || l <= 0) continue;
    const double ux = std::cos(phi), uy = std::sin(phi);
    canvas.segment(cx + r * ux, cy + r * uy, cx + (r + l) * ux, cy + (r + l) * uy, 128);
  }
  const double n = resolution;
  for (int y = 0; y < resolution; ++y) {
    for (int x = 0; x < resolution; ++x) {
      const double px = (x + 0.5) / n - cx, py = (y + 0.5) / n - cy;
      if (px * px + py * py <= r * r) canvas.plot(x, y, 255);
    }
  }
  return image;
}

std::string encode_pgm(const GrayImage& image) {
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(image.pixels.data()), image.pixels.size());
  return out;
}

void write_pgm(const GrayImage& image, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write image '" + path + "'");
  out << encode_pgm(image);
}

}  // namespace artifact
