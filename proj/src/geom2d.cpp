#include "wost/geom2d.hpp"

#include <algorithm>
#include <cstring>
#include <unordered_map>

namespace wost {

Vec2 closest_point_on_segment(Vec2 x, Vec2 a, Vec2 b) {
  Vec2 u = b - a;
  double t = dot(x - a, u) / norm2(u);
  t = std::clamp(t, 0.0, 1.0);
  return a + t * u;
}

namespace {

constexpr int kLeafSize = 4;

struct VertexKey {
  uint64_t x, y;
  bool operator==(const VertexKey&) const = default;
};

struct VertexKeyHash {
  size_t operator()(const VertexKey& k) const {
    uint64_t h = k.x * 0x9e3779b97f4a7c15ULL;
    h ^= k.y + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    return static_cast<size_t>(h);
  }
};

VertexKey make_key(Vec2 p) {
  VertexKey k;
  std::memcpy(&k.x, &p.x, sizeof(double));
  std::memcpy(&k.y, &p.y, sizeof(double));
  return k;
}

// t at which origin + t*dir crosses segment ab, with the segment parameter s
double ray_segment(Vec2 origin, Vec2 dir, Vec2 a, Vec2 b, double* s_out) {
  Vec2 u = b - a;
  Vec2 w = a - origin;
  double denom = cross(dir, u);
  if (denom == 0.0) return kInf;  // parallel (or degenerate)
  double t = cross(w, u) / denom;
  double s = cross(w, dir) / denom;
  if (s < 0.0 || s > 1.0) return kInf;
  *s_out = s;
  return t;
}

// slab test: does the ray touch the box within [0, t_max]? Axis-parallel
// rays (zero direction component) are handled without producing NaNs.
bool ray_box(Vec2 o, Vec2 dir, Vec2 inv_dir, const Bbox& box, double t_max) {
  double tmin = 0.0, tmax = t_max;
  if (dir.x != 0.0) {
    double t1 = (box.min.x - o.x) * inv_dir.x;
    double t2 = (box.max.x - o.x) * inv_dir.x;
    if (t1 > t2) std::swap(t1, t2);
    tmin = std::max(tmin, t1);
    tmax = std::min(tmax, t2);
  } else if (o.x < box.min.x || o.x > box.max.x) {
    return false;
  }
  if (dir.y != 0.0) {
    double t1 = (box.min.y - o.y) * inv_dir.y;
    double t2 = (box.max.y - o.y) * inv_dir.y;
    if (t1 > t2) std::swap(t1, t2);
    tmin = std::max(tmin, t1);
    tmax = std::min(tmax, t2);
  } else if (o.y < box.min.y || o.y > box.max.y) {
    return false;
  }
  return tmax >= tmin;
}

}  // namespace

Accel::Accel(const Scene& scene) {
  if (scene.segments.empty())
    throw SceneError("build_accel: scene has no segments");

  segments_.reserve(scene.segments.size());
  for (size_t i = 0; i < scene.segments.size(); ++i) {
    const BoundarySegment& s = scene.segments[i];
    segments_.push_back({s.a, s.b, s.kind, static_cast<int>(i)});
  }
  nodes_.reserve(2 * segments_.size());
  build(segments_, 0, static_cast<int>(segments_.size()));
  t_epsilon_ = 1e-6 * nodes_[0].box.diagonal();

  // Neumann vertex adjacency for silhouette queries
  std::unordered_map<VertexKey, int, VertexKeyHash> index;
  auto add = [&](Vec2 p, Vec2 n) {
    auto [it, inserted] = index.try_emplace(make_key(p),
                                            static_cast<int>(neumann_vertices_.size()));
    if (inserted) neumann_vertices_.push_back({p, {}});
    neumann_vertices_[it->second].normals.push_back(n);
  };
  for (const Seg& s : segments_) {
    if (s.kind != BoundaryKind::Neumann) continue;
    Vec2 n = normalized(perp_left(s.b - s.a));
    add(s.a, n);
    add(s.b, n);
  }
}

int Accel::build(std::vector<Seg>& segs, int begin, int end) {
  Node node;
  for (int i = begin; i < end; ++i) {
    node.box.expand(segs[i].a);
    node.box.expand(segs[i].b);
  }
  int idx = static_cast<int>(nodes_.size());
  nodes_.push_back(node);

  if (end - begin <= kLeafSize) {
    nodes_[idx].begin = begin;
    nodes_[idx].end = end;
    return idx;
  }

  Vec2 ext = node.box.extent();
  bool split_x = ext.x >= ext.y;
  int mid = (begin + end) / 2;
  std::nth_element(segs.begin() + begin, segs.begin() + mid, segs.begin() + end,
                   [split_x](const Seg& a, const Seg& b) {
                     double ca = split_x ? a.a.x + a.b.x : a.a.y + a.b.y;
                     double cb = split_x ? b.a.x + b.b.x : b.a.y + b.b.y;
                     if (ca != cb) return ca < cb;
                     return a.id < b.id;  // deterministic tie-break
                   });

  int left = build(segs, begin, mid);
  int right = build(segs, mid, end);
  nodes_[idx].left = left;
  nodes_[idx].right = right;
  return idx;
}

ClosestPoint Accel::closest_point(Vec2 x, unsigned kinds) const {
  ClosestPoint best;
  double best_d2 = kInf;

  int stack[64];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    int ni = stack[--top];
    const Node& node = nodes_[ni];
    if (box_dist2(node.box, x) >= best_d2) continue;
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const Seg& s = segments_[i];
        if (!(kind_bit(s.kind) & kinds)) continue;
        Vec2 p = closest_point_on_segment(x, s.a, s.b);
        double d2 = norm2(p - x);
        if (d2 < best_d2) {
          best_d2 = d2;
          best.point = p;
          best.segment = s.id;
        }
      }
    } else {
      double dl = box_dist2(nodes_[node.left].box, x);
      double dr = box_dist2(nodes_[node.right].box, x);
      // push the farther child first so the nearer one is processed next
      if (dl <= dr) {
        if (dr < best_d2) stack[top++] = node.right;
        if (dl < best_d2) stack[top++] = node.left;
      } else {
        if (dl < best_d2) stack[top++] = node.left;
        if (dr < best_d2) stack[top++] = node.right;
      }
    }
  }
  if (best.segment >= 0) best.dist = std::sqrt(best_d2);
  return best;
}

double Accel::closest_silhouette(Vec2 x) const {
  double best = kInf;
  for (const SilhouetteVertex& v : neumann_vertices_) {
    double d = distance(v.pos, x);
    if (d >= best) continue;
    bool candidate = v.normals.size() < 2;
    if (!candidate) {
      double lo = kInf, hi = -kInf;
      for (Vec2 n : v.normals) {
        double facing = dot(n, v.pos - x);
        lo = std::min(lo, facing);
        hi = std::max(hi, facing);
      }
      candidate = lo * hi <= 0.0;  // facing flips (or grazes) across the vertex
    }
    if (candidate) best = d;
  }
  return best;
}

std::optional<HitInfo> Accel::ray_first_hit(Vec2 origin, Vec2 dir, double t_max,
                                            unsigned kinds,
                                            int exclude_segment) const {
  Vec2 inv_dir{1.0 / dir.x, 1.0 / dir.y};
  double best_t = t_max;
  const Seg* best_seg = nullptr;
  double best_s = 0.0;

  int stack[64];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    int ni = stack[--top];
    const Node& node = nodes_[ni];
    if (!ray_box(origin, dir, inv_dir, node.box, best_t)) continue;
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const Seg& s = segments_[i];
        if (!(kind_bit(s.kind) & kinds)) continue;
        if (s.id == exclude_segment) continue;
        double sp;
        double t = ray_segment(origin, dir, s.a, s.b, &sp);
        if (t > t_epsilon_ && t <= best_t) {
          best_t = t;
          best_seg = &s;
          best_s = sp;
        }
      }
    } else {
      stack[top++] = node.right;
      stack[top++] = node.left;
    }
  }

  if (!best_seg) return std::nullopt;
  HitInfo hit;
  hit.t = best_t;
  hit.point = best_seg->a + best_s * (best_seg->b - best_seg->a);
  Vec2 n = normalized(perp_left(best_seg->b - best_seg->a));
  if (dot(n, dir) > 0.0) n = -n;
  hit.normal = n;
  hit.segment = best_seg->id;
  hit.kind = best_seg->kind;
  return hit;
}

double Accel::star_radius(Vec2 x, double r_min) const {
  double dist_d = closest_point(x, kDirichletMask).dist;
  double dist_sil = closest_silhouette(x);
  if (dist_d == kInf && dist_sil == kInf)
    throw SceneError("star_radius: both Dirichlet and silhouette distances "
                     "are infinite (unbounded star region)");
  return std::min(dist_d, std::max(dist_sil, r_min));
}

}  // namespace wost
