#pragma once

#include <optional>
#include <vector>

#include "wost/scene.hpp"
#include "wost/vec.hpp"

namespace wost {

enum KindMask : unsigned {
  kDirichletMask = 1u,
  kNeumannMask = 2u,
  kAllKinds = 3u,
};

inline unsigned kind_bit(BoundaryKind k) {
  return k == BoundaryKind::Dirichlet ? kDirichletMask : kNeumannMask;
}

struct HitInfo {
  double t = kInf;
  Vec2 point;
  Vec2 normal;  // unit, oriented against the query ray
  int segment = -1;
  BoundaryKind kind = BoundaryKind::Dirichlet;
};

struct ClosestPoint {
  Vec2 point;
  double dist = kInf;
  int segment = -1;  // -1 means no segment of the requested kind exists
};

// closest point on segment ab to x
Vec2 closest_point_on_segment(Vec2 x, Vec2 a, Vec2 b);

// Bounding-interval hierarchy over the scene's boundary segments plus the
// Neumann vertex adjacency used for silhouette queries. Immutable after
// construction; all queries are const and safe to run concurrently.
class Accel {
 public:
  explicit Accel(const Scene& scene);

  ClosestPoint closest_point(Vec2 x, unsigned kinds) const;

  // Distance to the nearest Neumann silhouette vertex: an endpoint where the
  // incident Neumann segments face x with opposite signs, or an open curve
  // end. kInf when no such vertex exists.
  double closest_silhouette(Vec2 x) const;

  std::optional<HitInfo> ray_first_hit(Vec2 origin, Vec2 dir, double t_max,
                                       unsigned kinds,
                                       int exclude_segment = -1) const;

  // min(dist_Dirichlet, max(dist_silhouette, r_min)); throws SceneError when
  // both distances are infinite (unbounded star region).
  double star_radius(Vec2 x, double r_min) const;

  const Bbox& root_box() const { return nodes_[0].box; }
  double t_epsilon() const { return t_epsilon_; }
  size_t segment_count() const { return segments_.size(); }

  struct SilhouetteVertex {
    Vec2 pos;
    // normals of incident Neumann segments (left perpendicular of b-a)
    std::vector<Vec2> normals;
  };
  const std::vector<SilhouetteVertex>& neumann_vertices() const {
    return neumann_vertices_;
  }

 private:
  struct Seg {
    Vec2 a, b;
    BoundaryKind kind;
    int id;  // index in the scene's segment list
  };
  struct Node {
    Bbox box;
    int left = -1, right = -1;  // children; leaf when left < 0
    int begin = 0, end = 0;     // leaf range into segments_
  };

  int build(std::vector<Seg>& segs, int begin, int end);

  std::vector<Seg> segments_;
  std::vector<Node> nodes_;
  std::vector<SilhouetteVertex> neumann_vertices_;
  double t_epsilon_ = 0.0;
};

}  // namespace wost
