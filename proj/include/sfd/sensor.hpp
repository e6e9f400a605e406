#pragma once

// Forward-camera raster produced by 2D raycasting.

#include <cstdint>
#include <string>
#include <vector>

#include "sfd/world.hpp"

namespace sfd {

struct CameraSpec {
  double fov_deg = 101.0;
  int width = 96;
  int height = 48;
  double max_range = 8.0;

  void validate() const;
};

/// Row-major grayscale image, intensities in [0, 1].
struct Observation {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;
  std::int64_t tick = 0;

  Observation() = default;
  Observation(int w, int h, float fill = 0.0f)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  float at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
  float& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }

  friend bool operator==(const Observation&, const Observation&) = default;
};

/// Intensity a surface is drawn with.
namespace intensity {
inline constexpr float background = 0.0f;
inline constexpr float wall = 0.3f;
inline constexpr float cone = 0.9f;
inline constexpr float bin = 0.7f;
inline constexpr float pedestrian = 0.8f;
inline constexpr float car = 0.6f;
}  // namespace intensity

float kind_intensity(ObstacleKind kind);

/// Angle (radians, relative to heading, positive to the right) of the ray
/// cast through the centre of column `col`.
double column_angle(const CameraSpec& spec, int col);

/// What the ray through one column hit first.
struct ColumnHit {
  bool hit = false;
  double distance = 0.0;       // along the ray
  float value = intensity::background;
  double surface_height = 0.0; // metres
};

/// Cast a single ray from `origin` with absolute direction `angle`.
ColumnHit cast_ray(const Scenario& scenario, Vec2 origin, double angle, double t,
                   double max_range);

/// Render the forward view. Pure and deterministic.
Observation render(const VehicleState& state, const Scenario& scenario, double t,
                   const CameraSpec& spec = {});

/// Left-right mirror image.
Observation mirror(const Observation& obs);

/// Half-open crop window in pixel coordinates.
struct CropRect {
  int top = 0;
  int bottom = 0;
  int left = 0;
  int right = 0;
};

/// Nearest-neighbour resample of `rect` to out_w x out_h. Throws
/// InvalidInput when the rectangle does not fit inside `raw`.
Observation crop_resize(const Observation& raw, const CropRect& rect, int out_w, int out_h);

/// Stable 64-bit digest of the pixel contents (FNV-1a over the raw bytes).
std::uint64_t observation_digest(const Observation& obs);
std::string digest_hex(std::uint64_t digest);

/// Binary PGM (P5, maxval 255).
std::string encode_pgm(const Observation& obs);
Observation decode_pgm(const std::string& bytes);

/// 8-bit grayscale PNG.
std::string encode_png(const Observation& obs);

}  // namespace sfd
