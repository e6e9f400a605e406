#include "sfd/sensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include <zlib.h>

#include "sfd/error.hpp"

namespace sfd {

namespace {

constexpr double kCameraHeight = 0.25;
constexpr double kWallHeight = 1.0;

double kind_height(ObstacleKind kind) {
  switch (kind) {
    case ObstacleKind::cone: return 0.5;
    case ObstacleKind::bin: return 0.6;
    case ObstacleKind::pedestrian: return 1.2;
    case ObstacleKind::car: return 0.6;
  }
  return 0.5;
}

double deg_to_rad(double deg) { return deg * kPi / 180.0; }

struct RayHit {
  double s = std::numeric_limits<double>::infinity();
  float value = intensity::background;
  double height = 0.0;

  void offer(double candidate, float v, double h) {
    if (candidate > 0.0 && candidate < s) {
      s = candidate;
      value = v;
      height = h;
    }
  }
};

void intersect_walls(const Scenario& sc, Vec2 o, Vec2 d, RayHit& hit) {
  const auto& segs = sc.corridor;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const double lo = i == 0 ? -std::numeric_limits<double>::infinity() : segs[i].from_x;
    const double hi = i + 1 < segs.size() ? segs[i + 1].from_x
                                          : std::numeric_limits<double>::infinity();
    const double hw = segs[i].half_width;
    if (d.y != 0.0) {
      for (double side : {-1.0, 1.0}) {
        const double s = (side * hw - o.y) / d.y;
        if (s <= 0.0) continue;
        const double x = o.x + s * d.x;
        if (x >= lo && x < hi) hit.offer(s, intensity::wall, kWallHeight);
      }
    }
    // step face where the width changes
    if (i + 1 < segs.size() && d.x != 0.0) {
      const double s = (hi - o.x) / d.x;
      if (s > 0.0) {
        const double y = std::abs(o.y + s * d.y);
        const double a = std::min(hw, segs[i + 1].half_width);
        const double b = std::max(hw, segs[i + 1].half_width);
        if (y >= a && y <= b) hit.offer(s, intensity::wall, kWallHeight);
      }
    }
  }
}

void intersect_obstacles(const Scenario& sc, Vec2 o, Vec2 d, double t, RayHit& hit) {
  for (const auto& ob : sc.obstacles) {
    const Vec2 c = ob.position_at(t);
    const double cx = c.x - o.x;
    const double cy = c.y - o.y;
    const double b = cx * d.x + cy * d.y;
    const double cc = cx * cx + cy * cy - ob.radius * ob.radius;
    const double disc = b * b - cc;
    if (disc < 0.0) continue;
    const double root = std::sqrt(disc);
    const double near = b - root;
    const double s = near > 0.0 ? near : b + root;
    hit.offer(s, kind_intensity(ob.kind), kind_height(ob.kind));
  }
}

}  // namespace

void CameraSpec::validate() const {
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw InvalidInput("camera fov must be in (0, 180)");
  if (width <= 0 || height <= 0) throw InvalidInput("camera dimensions must be positive");
  if (!(max_range > 0.0)) throw InvalidInput("camera max_range must be positive");
}

float kind_intensity(ObstacleKind kind) {
  switch (kind) {
    case ObstacleKind::cone: return intensity::cone;
    case ObstacleKind::bin: return intensity::bin;
    case ObstacleKind::pedestrian: return intensity::pedestrian;
    case ObstacleKind::car: return intensity::car;
  }
  return intensity::cone;
}

Observation mirror(const Observation& obs) {
  Observation out = obs;
  for (int r = 0; r < obs.height; ++r) {
    for (int c = 0; c < obs.width; ++c) out.at(r, c) = obs.at(r, obs.width - 1 - c);
  }
  return out;
}

double column_angle(const CameraSpec& spec, int col) {
  // integer numerator keeps mirrored columns exactly antisymmetric
  const double num = 2.0 * col + 1.0 - spec.width;
  return num / (2.0 * spec.width) * deg_to_rad(spec.fov_deg);
}

ColumnHit cast_ray(const Scenario& scenario, Vec2 origin, double angle, double t,
                   double max_range) {
  const Vec2 d{std::cos(angle), std::sin(angle)};
  RayHit hit;
  intersect_walls(scenario, origin, d, hit);
  intersect_obstacles(scenario, origin, d, t, hit);
  ColumnHit out;
  if (hit.s <= max_range) {
    out.hit = true;
    out.distance = hit.s;
    out.value = hit.value;
    out.surface_height = hit.height;
  }
  return out;
}

Observation render(const VehicleState& state, const Scenario& scenario, double t,
                   const CameraSpec& spec) {
  spec.validate();
  Observation obs(spec.width, spec.height);
  const double focal = 0.5 * spec.width / std::tan(0.5 * deg_to_rad(spec.fov_deg));
  const double horizon = 0.5 * spec.height;
  const Vec2 origin{state.pose.x, state.pose.y};

  for (int col = 0; col < spec.width; ++col) {
    const double alpha = column_angle(spec, col);
    const ColumnHit h = cast_ray(scenario, origin, state.pose.heading + alpha, t, spec.max_range);
    if (!h.hit) continue;
    // perpendicular depth keeps straight walls straight
    const double depth = h.distance * std::cos(alpha);
    const double top = horizon - focal * (h.surface_height - kCameraHeight) / depth;
    const double bottom = horizon + focal * kCameraHeight / depth;
    for (int row = 0; row < spec.height; ++row) {
      const double center = row + 0.5;
      if (center >= top && center < bottom) obs.at(row, col) = h.value;
    }
  }
  return obs;
}

Observation crop_resize(const Observation& raw, const CropRect& rect, int out_w, int out_h) {
  if (rect.top < 0 || rect.left < 0 || rect.bottom > raw.height || rect.right > raw.width ||
      rect.top >= rect.bottom || rect.left >= rect.right) {
    throw InvalidInput("crop rectangle outside the image");
  }
  if (out_w <= 0 || out_h <= 0) throw InvalidInput("output size must be positive");
  const int crop_h = rect.bottom - rect.top;
  const int crop_w = rect.right - rect.left;
  Observation out(out_w, out_h);
  out.tick = raw.tick;
  for (int r = 0; r < out_h; ++r) {
    const int src_r = rect.top + static_cast<int>(static_cast<long long>(r) * crop_h / out_h);
    for (int c = 0; c < out_w; ++c) {
      const int src_c = rect.left + static_cast<int>(static_cast<long long>(c) * crop_w / out_w);
      out.at(r, c) = raw.at(src_r, src_c);
    }
  }
  return out;
}

std::uint64_t observation_digest(const Observation& obs) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  const std::int32_t dims[2] = {obs.width, obs.height};
  mix(dims, sizeof dims);
  mix(obs.pixels.data(), obs.pixels.size() * sizeof(float));
  return h;
}

std::string digest_hex(std::uint64_t digest) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = kHex[digest & 0xF];
    digest >>= 4;
  }
  return s;
}

namespace {

unsigned char to_byte(float v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

void put_be32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v >> 24));
  out.push_back(static_cast<char>(v >> 16));
  out.push_back(static_cast<char>(v >> 8));
  out.push_back(static_cast<char>(v));
}

void put_chunk(std::string& out, const char* type, const std::string& data) {
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  std::string body(type, 4);
  body += data;
  out += body;
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(body.data()),
                         static_cast<uInt>(body.size()));
  put_be32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

std::string encode_pgm(const Observation& obs) {
  std::ostringstream os;
  os << "P5\n" << obs.width << ' ' << obs.height << "\n255\n";
  std::string out = os.str();
  out.reserve(out.size() + obs.pixels.size());
  for (float v : obs.pixels) out.push_back(static_cast<char>(to_byte(v)));
  return out;
}

Observation decode_pgm(const std::string& bytes) {
  std::istringstream is(bytes);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  is >> magic >> w >> h >> maxval;
  if (magic != "P5" || w <= 0 || h <= 0 || maxval != 255) throw IoError("not a P5/255 PGM");
  is.get();  // single whitespace after header
  const auto offset = static_cast<std::size_t>(is.tellg());
  if (bytes.size() < offset + static_cast<std::size_t>(w) * h) throw IoError("truncated PGM");
  Observation obs(w, h);
  for (std::size_t i = 0; i < obs.pixels.size(); ++i) {
    obs.pixels[i] = static_cast<unsigned char>(bytes[offset + i]) / 255.0f;
  }
  return obs;
}

std::string encode_png(const Observation& obs) {
  std::string raw;
  raw.reserve(static_cast<std::size_t>(obs.height) * (obs.width + 1));
  for (int r = 0; r < obs.height; ++r) {
    raw.push_back('\0');  // filter: none
    for (int c = 0; c < obs.width; ++c) raw.push_back(static_cast<char>(to_byte(obs.at(r, c))));
  }
  uLongf packed_size = compressBound(static_cast<uLong>(raw.size()));
  std::string packed(packed_size, '\0');
  if (compress2(reinterpret_cast<Bytef*>(packed.data()), &packed_size,
                reinterpret_cast<const Bytef*>(raw.data()), static_cast<uLong>(raw.size()),
                Z_BEST_COMPRESSION) != Z_OK) {
    throw IoError("png compression failed");
  }
  packed.resize(packed_size);

  std::string png("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(obs.width));
  put_be32(ihdr, static_cast<std::uint32_t>(obs.height));
  ihdr += std::string("\x08\x00\x00\x00\x00", 5);  // 8-bit gray, no interlace
  put_chunk(png, "IHDR", ihdr);
  put_chunk(png, "IDAT", packed);
  put_chunk(png, "IEND", "");
  return png;
}

}  // namespace sfd
