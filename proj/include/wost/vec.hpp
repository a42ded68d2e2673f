#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

namespace wost {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;
inline constexpr double kFourPi = 4.0 * kPi;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2 operator/(double s) const { return {x / s, y / s}; }
  Vec2 operator-() const { return {-x, -y}; }
  Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  bool operator==(const Vec2&) const = default;
};

inline Vec2 operator*(double s, Vec2 v) { return v * s; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
// z-component of the 3D cross product of (a,0) and (b,0)
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm2(Vec2 v) { return dot(v, v); }
inline double norm(Vec2 v) { return std::sqrt(norm2(v)); }
inline Vec2 normalized(Vec2 v) { return v / norm(v); }
// left-hand perpendicular: rotate v by +90 degrees
inline Vec2 perp_left(Vec2 v) { return {-v.y, v.x}; }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3 operator+(Vec3 o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(Vec3 o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  bool operator==(const Vec3&) const = default;
};

inline Vec3 operator*(double s, Vec3 v) { return v * s; }
inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm2(Vec3 v) { return dot(v, v); }
inline double norm(Vec3 v) { return std::sqrt(norm2(v)); }
inline Vec3 normalized(Vec3 v) { return v / norm(v); }

inline Vec3 to3(Vec2 v) { return {v.x, v.y, 0.0}; }
inline Vec2 to2(Vec3 v) { return {v.x, v.y}; }

struct Bbox {
  Vec2 min{kInf, kInf};
  Vec2 max{-kInf, -kInf};

  bool contains(Vec2 p, double pad = 0.0) const {
    return p.x >= min.x - pad && p.x <= max.x + pad && p.y >= min.y - pad &&
           p.y <= max.y + pad;
  }
  Vec2 extent() const { return max - min; }
  double diagonal() const { return norm(extent()); }
  Vec2 center() const { return (min + max) * 0.5; }
  void expand(Vec2 p) {
    min.x = std::min(min.x, p.x);
    min.y = std::min(min.y, p.y);
    max.x = std::max(max.x, p.x);
    max.y = std::max(max.y, p.y);
  }
  void expand(const Bbox& b) {
    expand(b.min);
    expand(b.max);
  }
  bool valid() const { return min.x <= max.x && min.y <= max.y; }
};

// squared distance from p to the box (0 inside)
inline double box_dist2(const Bbox& b, Vec2 p) {
  double dx = std::max({b.min.x - p.x, 0.0, p.x - b.max.x});
  double dy = std::max({b.min.y - p.y, 0.0, p.y - b.max.y});
  return dx * dx + dy * dy;
}

}  // namespace wost
