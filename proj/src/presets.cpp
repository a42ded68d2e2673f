#include "wost/presets.hpp"

#include <cmath>
#include <stdexcept>

namespace wost {

namespace {

void add_polyline(Scene& scene, const std::vector<Vec2>& pts, bool closed,
                  BoundaryKind kind, const std::string& value_ref) {
  size_t n = pts.size();
  size_t count = closed ? n : n - 1;
  for (size_t i = 0; i < count; ++i) {
    BoundarySegment seg;
    seg.a = pts[i];
    seg.b = pts[(i + 1) % n];
    seg.kind = kind;
    seg.value_ref = value_ref;
    scene.segments.push_back(seg);
  }
}

std::vector<Vec2> circle_points(Vec2 center, double radius, int n) {
  std::vector<Vec2> pts(n);
  for (int i = 0; i < n; ++i) {
    double a = kTwoPi * i / n;
    pts[i] = center + radius * Vec2{std::cos(a), std::sin(a)};
  }
  return pts;
}

Scene disk_scene(ValueSpec boundary_value, SourceField source,
                 double epsilon_shell) {
  Scene scene;
  scene.bbox = Bbox{{-1.1, -1.1}, {1.1, 1.1}};
  scene.epsilon_shell = epsilon_shell;
  scene.values.emplace_back("g", std::move(boundary_value));
  scene.source = std::move(source);
  add_polyline(scene, circle_points({0, 0}, 1.0, 256), true,
               BoundaryKind::Dirichlet, "g");
  scene.validate();
  return scene;
}

std::vector<Vec2> ring_probes(double radius, int n) {
  std::vector<Vec2> pts(n);
  for (int i = 0; i < n; ++i) {
    double a = kTwoPi * (i + 0.37) / n;  // avoid symmetry axes
    pts[i] = radius * Vec2{std::cos(a), std::sin(a)};
  }
  return pts;
}

Scene strip_scene(ValueSpec right_value) {
  Scene scene;
  scene.bbox = Bbox{{0, 0}, {1, 1}};
  scene.epsilon_shell = default_epsilon_shell(scene.bbox);
  scene.values.emplace_back("left", ValueSpec{ValueSpec::Constant{0.0}});
  scene.values.emplace_back("right", std::move(right_value));
  scene.values.emplace_back("insulated", ValueSpec{ValueSpec::Constant{0.0}});
  scene.source.spec = SourceField::Zero{};

  BoundarySegment seg;
  seg.kind = BoundaryKind::Dirichlet;
  seg.a = {0, 0};
  seg.b = {0, 1};
  seg.value_ref = "left";
  scene.segments.push_back(seg);
  seg.a = {1, 0};
  seg.b = {1, 1};
  seg.value_ref = "right";
  scene.segments.push_back(seg);
  seg.kind = BoundaryKind::Neumann;
  seg.a = {0, 0};
  seg.b = {1, 0};
  seg.value_ref = "insulated";
  scene.segments.push_back(seg);
  seg.a = {0, 1};
  seg.b = {1, 1};
  seg.value_ref = "insulated";
  scene.segments.push_back(seg);
  scene.validate();
  return scene;
}

std::vector<Vec2> strip_probes() {
  std::vector<Vec2> pts;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      pts.push_back({0.2 + 0.2 * i, 0.14 + 0.24 * j});
  return pts;
}

// Diffusion-curve style picture: an insulated bounding box around a few
// hundred Dirichlet stroke segments with hard black/white values. Bright and
// dark features sit close together so the solution has strong directional
// structure near the strokes.
Scene curves_scene() {
  Scene scene;
  scene.bbox = Bbox{{0, 0}, {1, 1}};
  scene.epsilon_shell = default_epsilon_shell(scene.bbox);
  scene.values.emplace_back("white", ValueSpec{ValueSpec::Constant{1.0}});
  scene.values.emplace_back("black", ValueSpec{ValueSpec::Constant{0.0}});
  scene.values.emplace_back("insulated", ValueSpec{ValueSpec::Constant{0.0}});
  scene.source.spec = SourceField::Zero{};

  add_polyline(scene, {{0, 0}, {1, 0}, {1, 1}, {0, 1}}, true,
               BoundaryKind::Neumann, "insulated");

  add_polyline(scene, circle_points({0.28, 0.64}, 0.17, 64), true,
               BoundaryKind::Dirichlet, "white");
  add_polyline(scene, circle_points({0.67, 0.40}, 0.21, 64), true,
               BoundaryKind::Dirichlet, "black");
  add_polyline(scene, circle_points({0.77, 0.79}, 0.08, 48), true,
               BoundaryKind::Dirichlet, "white");
  add_polyline(scene, circle_points({0.17, 0.25}, 0.06, 48), true,
               BoundaryKind::Dirichlet, "black");

  // bright spiral in the upper middle
  std::vector<Vec2> spiral;
  for (int i = 0; i <= 96; ++i) {
    double t = static_cast<double>(i) / 96;
    double a = 3.5 * kPi * t;
    double r = 0.030 + 0.060 * t;
    spiral.push_back({0.55 + r * std::cos(a), 0.84 + r * std::sin(a)});
  }
  add_polyline(scene, spiral, false, BoundaryKind::Dirichlet, "white");

  // bright wave along the bottom
  std::vector<Vec2> wave;
  for (int i = 0; i <= 64; ++i) {
    double t = static_cast<double>(i) / 64;
    wave.push_back(
        {0.05 + 0.43 * t, 0.10 - 0.03 * t + 0.04 * std::sin(3.0 * kPi * t)});
  }
  add_polyline(scene, wave, false, BoundaryKind::Dirichlet, "white");

  // dark wave along the right edge
  std::vector<Vec2> edge;
  for (int i = 0; i <= 64; ++i) {
    double t = static_cast<double>(i) / 64;
    edge.push_back({0.915 + 0.035 * std::sin(4.0 * kPi * t), 0.55 + 0.40 * t});
  }
  add_polyline(scene, edge, false, BoundaryKind::Dirichlet, "black");

  // bright zigzag in the top-left corner
  std::vector<Vec2> zig;
  for (int i = 0; i <= 32; ++i) {
    double t = static_cast<double>(i) / 32;
    zig.push_back({0.05 + 0.25 * t, 0.93 + 0.025 * (i % 2 ? 1.0 : -1.0)});
  }
  add_polyline(scene, zig, false, BoundaryKind::Dirichlet, "white");

  // short dark bar between the waves
  std::vector<Vec2> bar;
  for (int i = 0; i <= 8; ++i) {
    double t = static_cast<double>(i) / 8;
    bar.push_back({0.55 + 0.20 * t, 0.08 + 0.06 * t});
  }
  add_polyline(scene, bar, false, BoundaryKind::Dirichlet, "black");

  scene.validate();
  return scene;
}

}  // namespace

double strip_vlin_solution(Vec2 p) {
  // u(0,y) = 0, u(1,y) = y, du/dn = 0 on the y-edges
  double u = 0.5 * p.x;
  for (int n = 1; n < 2000; n += 2) {
    double cn = -4.0 / (n * n * kPi * kPi);
    double a = n * kPi * p.x;
    double b = n * kPi;
    // sinh(a)/sinh(b) without overflow
    double ratio = std::exp(a - b) * (1.0 - std::exp(-2.0 * a)) /
                   (1.0 - std::exp(-2.0 * b));
    double term = cn * ratio * std::cos(n * kPi * p.y);
    u += term;
    if (std::abs(term) < 1e-14 && n > 64) break;
  }
  return u;
}

Preset make_preset(const std::string& name) {
  Preset p;
  p.name = name;
  if (name == "harmonic-disk") {
    ValueSpec g;
    g.spec = ValueSpec::Analytic{
        [](Vec2 q) { return q.x * q.x - q.y * q.y; }, "x^2-y^2"};
    p.scene = disk_scene(std::move(g), SourceField{SourceField::Zero{}}, 1e-4);
    p.analytic = [](Vec2 q) { return q.x * q.x - q.y * q.y; };
    p.eval_bbox = Bbox{{-0.55, -0.55}, {0.55, 0.55}};
    p.probes = ring_probes(0.5, 16);
  } else if (name == "const-source-disk") {
    // the boundary polygon sits just inside the unit circle; prescribing
    // g = |x|^2 - 1 (within 1.6e-4 of zero there) makes u = |x|^2 - 1 the
    // exact solution of the discretized problem
    ValueSpec g;
    g.spec = ValueSpec::Analytic{
        [](Vec2 q) { return q.x * q.x + q.y * q.y - 1.0; }, "r^2-1"};
    // near the disk center the estimator variance is tiny, so the shell
    // bias must sit well below it; walk length only grows logarithmically
    p.scene = disk_scene(std::move(g), SourceField{SourceField::Constant{4.0}},
                         1e-6);
    p.analytic = [](Vec2 q) { return q.x * q.x + q.y * q.y - 1.0; };
    p.eval_bbox = Bbox{{-0.55, -0.55}, {0.55, 0.55}};
    p.probes = ring_probes(0.5, 16);
    p.probes[0] = {0, 0};  // keep the center among the probes
  } else if (name == "neumann-strip") {
    p.scene = strip_scene(ValueSpec{ValueSpec::Constant{1.0}});
    p.analytic = [](Vec2 q) { return q.x; };
    p.eval_bbox = p.scene.bbox;
    p.probes = strip_probes();
  } else if (name == "neumann-strip-vlin") {
    p.scene = strip_scene(ValueSpec{ValueSpec::Linear{0.0, 0.0, 1.0}});
    p.analytic = strip_vlin_solution;
    p.eval_bbox = p.scene.bbox;
    p.probes = strip_probes();
  } else if (name == "curves") {
    p.scene = curves_scene();
    p.analytic = nullptr;
    p.eval_bbox = p.scene.bbox;
    p.probes = strip_probes();
  } else {
    throw std::invalid_argument("unknown preset '" + name + "'");
  }
  return p;
}

std::vector<std::string> preset_names() {
  return {"harmonic-disk", "const-source-disk", "neumann-strip",
          "neumann-strip-vlin", "curves"};
}

}  // namespace wost
