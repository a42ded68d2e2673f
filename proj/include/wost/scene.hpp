#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "wost/vec.hpp"

namespace wost {

struct SceneError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class BoundaryKind { Dirichlet, Neumann };

struct RasterGrid {
  int width = 0;
  int height = 0;
  Bbox bbox;
  std::vector<double> data;  // row-major, row 0 at bbox.min.y

  // nearest-cell lookup; queries outside the grid clamp to the edge cell
  double at(Vec2 p) const;
};

// Boundary-value function attached to one or more segments.
struct ValueSpec {
  struct Constant {
    double v;
  };
  struct Linear {
    double c0, cx, cy;
  };
  struct Raster {
    RasterGrid grid;
  };
  // Built-in presets only; not expressible in the scene schema.
  struct Analytic {
    std::function<double(Vec2)> fn;
    std::string name;
  };

  std::variant<Constant, Linear, Raster, Analytic> spec = Constant{0.0};

  double eval(Vec2 p) const;
  bool is_analytic() const { return std::holds_alternative<Analytic>(spec); }
};

struct SourceField {
  struct Zero {};
  struct Constant {
    double v;
  };
  struct Raster {
    RasterGrid grid;
  };

  std::variant<Zero, Constant, Raster> spec;

  bool is_zero() const { return std::holds_alternative<Zero>(spec); }
};

struct BoundarySegment {
  Vec2 a, b;
  BoundaryKind kind = BoundaryKind::Dirichlet;
  std::string value_ref;
  int value_index = -1;  // resolved index into Scene::values
};

struct Scene {
  Bbox bbox;
  double epsilon_shell = 0.0;
  std::vector<std::pair<std::string, ValueSpec>> values;
  SourceField source;
  std::vector<BoundarySegment> segments;

  double eval_dirichlet(Vec2 p, int segment) const;
  double eval_neumann(Vec2 p, int segment) const;
  // outside bbox -> 0 by convention
  double eval_source(Vec2 p) const;

  bool has_dirichlet() const;
  bool has_neumann() const;
  // false when every Neumann segment carries the constant value 0, in which
  // case the Neumann contribution term vanishes identically
  bool has_neumann_flux() const;
  int find_value(const std::string& name) const;

  // Resolves value_ref indices and checks every invariant; throws SceneError
  // naming the violated one. Called by load_scene; builders of in-code scenes
  // should call it too.
  void validate();
};

// Parses the JSON scene schema. Throws SceneError with a line/field path on
// malformed documents and validation failures.
Scene load_scene(const std::string& json_text);
Scene load_scene_file(const std::string& path);

// Inverse of load_scene up to float formatting. Analytic value specs cannot
// be serialized and raise SceneError.
std::string write_scene(const Scene& scene);

double default_epsilon_shell(const Bbox& bbox);

}  // namespace wost
