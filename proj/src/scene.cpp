#include "wost/scene.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace wost {

using nlohmann::json;

double RasterGrid::at(Vec2 p) const {
  Vec2 ext = bbox.extent();
  double u = (p.x - bbox.min.x) / ext.x;
  double v = (p.y - bbox.min.y) / ext.y;
  int i = std::clamp(static_cast<int>(u * width), 0, width - 1);
  int j = std::clamp(static_cast<int>(v * height), 0, height - 1);
  return data[static_cast<size_t>(j) * width + i];
}

double ValueSpec::eval(Vec2 p) const {
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Constant>) {
          return s.v;
        } else if constexpr (std::is_same_v<T, Linear>) {
          return s.c0 + s.cx * p.x + s.cy * p.y;
        } else if constexpr (std::is_same_v<T, Raster>) {
          return s.grid.at(p);
        } else {
          return s.fn(p);
        }
      },
      spec);
}

double Scene::eval_dirichlet(Vec2 p, int segment) const {
  const BoundarySegment& s = segments.at(segment);
  if (s.kind != BoundaryKind::Dirichlet)
    throw SceneError("eval_dirichlet: segment " + std::to_string(segment) +
                     " is not Dirichlet");
  return values[s.value_index].second.eval(p);
}

double Scene::eval_neumann(Vec2 p, int segment) const {
  const BoundarySegment& s = segments.at(segment);
  if (s.kind != BoundaryKind::Neumann)
    throw SceneError("eval_neumann: segment " + std::to_string(segment) +
                     " is not Neumann");
  return values[s.value_index].second.eval(p);
}

double Scene::eval_source(Vec2 p) const {
  if (!bbox.contains(p)) return 0.0;
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SourceField::Zero>) {
          return 0.0;
        } else if constexpr (std::is_same_v<T, SourceField::Constant>) {
          return s.v;
        } else {
          return s.grid.at(p);
        }
      },
      source.spec);
}

bool Scene::has_dirichlet() const {
  for (const auto& s : segments)
    if (s.kind == BoundaryKind::Dirichlet) return true;
  return false;
}

bool Scene::has_neumann() const {
  for (const auto& s : segments)
    if (s.kind == BoundaryKind::Neumann) return true;
  return false;
}

bool Scene::has_neumann_flux() const {
  for (const auto& s : segments) {
    if (s.kind != BoundaryKind::Neumann) continue;
    const ValueSpec& v = values[s.value_index].second;
    const auto* c = std::get_if<ValueSpec::Constant>(&v.spec);
    if (!c || c->v != 0.0) return true;
  }
  return false;
}

int Scene::find_value(const std::string& name) const {
  for (size_t i = 0; i < values.size(); ++i)
    if (values[i].first == name) return static_cast<int>(i);
  return -1;
}

double default_epsilon_shell(const Bbox& bbox) {
  return 1e-3 * bbox.diagonal();
}

namespace {

void check_raster_finite(const RasterGrid& g, const std::string& where) {
  if (g.width < 1 || g.height < 1)
    throw SceneError(where + ": raster resolution must be at least 1x1");
  if (g.data.size() != static_cast<size_t>(g.width) * g.height)
    throw SceneError(where + ": raster data size does not match width*height");
  if (!g.bbox.valid())
    throw SceneError(where + ": raster bbox is empty");
  for (double v : g.data)
    if (!std::isfinite(v))
      throw SceneError(where + ": raster carries a non-finite cell value");
}

}  // namespace

void Scene::validate() {
  if (!bbox.valid()) throw SceneError("scene bbox is empty");
  if (epsilon_shell <= 0.0)
    throw SceneError("epsilon_shell must be > 0 (got " +
                     std::to_string(epsilon_shell) + ")");
  if (segments.empty()) throw SceneError("scene has no boundary segments");

  for (auto& [name, spec] : values) {
    if (auto* r = std::get_if<ValueSpec::Raster>(&spec.spec))
      check_raster_finite(r->grid, "value '" + name + "'");
  }
  if (auto* r = std::get_if<SourceField::Raster>(&source.spec))
    check_raster_finite(r->grid, "source");

  for (size_t i = 0; i < segments.size(); ++i) {
    BoundarySegment& s = segments[i];
    std::string where = "segment " + std::to_string(i);
    if (s.a == s.b) throw SceneError(where + ": a == b (zero-length segment)");
    if (!bbox.contains(s.a) || !bbox.contains(s.b))
      throw SceneError(where + ": endpoint outside scene bbox");
    s.value_index = find_value(s.value_ref);
    if (s.value_index < 0)
      throw SceneError(where + ": value '" + s.value_ref + "' is not defined");
  }
}

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw SceneError("scene: " + path + ": " + msg);
}

Vec2 parse_vec2(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    fail(path, "expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

Bbox parse_bbox(const json& j, const std::string& path) {
  if (!j.is_object() || !j.contains("min") || !j.contains("max"))
    fail(path, "expected {min:[x,y], max:[x,y]}");
  Bbox b;
  b.min = parse_vec2(j["min"], path + ".min");
  b.max = parse_vec2(j["max"], path + ".max");
  if (!(b.min.x < b.max.x) || !(b.min.y < b.max.y))
    fail(path, "min must be strictly below max");
  return b;
}

RasterGrid parse_raster(const json& j, const std::string& path) {
  RasterGrid g;
  if (!j.contains("width") || !j.contains("height") || !j.contains("bbox") ||
      !j.contains("data"))
    fail(path, "raster needs width, height, bbox, data");
  g.width = j["width"].get<int>();
  g.height = j["height"].get<int>();
  g.bbox = parse_bbox(j["bbox"], path + ".bbox");
  const json& d = j["data"];
  if (!d.is_array()) fail(path + ".data", "expected a float array");
  g.data.reserve(d.size());
  for (const auto& v : d) {
    if (!v.is_number()) fail(path + ".data", "expected a float array");
    g.data.push_back(v.get<double>());
  }
  return g;
}

ValueSpec parse_value(const json& j, const std::string& path) {
  if (!j.is_object() || !j.contains("type")) fail(path, "expected {type: ...}");
  std::string type = j["type"].get<std::string>();
  ValueSpec out;
  if (type == "constant") {
    if (!j.contains("value")) fail(path, "constant needs 'value'");
    out.spec = ValueSpec::Constant{j["value"].get<double>()};
  } else if (type == "linear") {
    ValueSpec::Linear lin;
    lin.c0 = j.value("c0", 0.0);
    lin.cx = j.value("cx", 0.0);
    lin.cy = j.value("cy", 0.0);
    out.spec = lin;
  } else if (type == "raster") {
    out.spec = ValueSpec::Raster{parse_raster(j, path)};
  } else {
    fail(path + ".type", "unknown value type '" + type + "'");
  }
  return out;
}

SourceField parse_source(const json& j, const std::string& path) {
  SourceField out;
  if (!j.is_object() || !j.contains("type")) fail(path, "expected {type: ...}");
  std::string type = j["type"].get<std::string>();
  if (type == "zero") {
    out.spec = SourceField::Zero{};
  } else if (type == "constant") {
    if (!j.contains("value")) fail(path, "constant needs 'value'");
    out.spec = SourceField::Constant{j["value"].get<double>()};
  } else if (type == "raster") {
    out.spec = SourceField::Raster{parse_raster(j, path)};
  } else {
    fail(path + ".type", "unknown source type '" + type + "'");
  }
  return out;
}

}  // namespace

Scene load_scene(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    // count lines up to the error byte for a usable diagnostic
    size_t line = 1;
    for (size_t i = 0; i < e.byte && i < json_text.size(); ++i)
      if (json_text[i] == '\n') ++line;
    throw SceneError("scene: parse error at line " + std::to_string(line) +
                     ": " + e.what());
  }

  if (!doc.is_object()) fail("$", "top level must be an object");
  if (!doc.contains("bbox")) fail("$", "missing 'bbox'");
  if (!doc.contains("segments")) fail("$", "missing 'segments'");

  Scene scene;
  scene.bbox = parse_bbox(doc["bbox"], "bbox");
  scene.epsilon_shell = doc.contains("epsilon_shell")
                            ? doc["epsilon_shell"].get<double>()
                            : default_epsilon_shell(scene.bbox);

  if (doc.contains("values")) {
    const json& vals = doc["values"];
    if (!vals.is_object()) fail("values", "expected an object");
    for (auto it = vals.begin(); it != vals.end(); ++it)
      scene.values.emplace_back(it.key(),
                                parse_value(it.value(), "values." + it.key()));
  }

  scene.source.spec = SourceField::Zero{};
  if (doc.contains("source"))
    scene.source = parse_source(doc["source"], "source");

  const json& segs = doc["segments"];
  if (!segs.is_array()) fail("segments", "expected an array");
  for (size_t i = 0; i < segs.size(); ++i) {
    const json& js = segs[i];
    std::string path = "segments[" + std::to_string(i) + "]";
    BoundarySegment seg;
    if (!js.contains("a") || !js.contains("b") || !js.contains("kind") ||
        !js.contains("value"))
      fail(path, "segment needs a, b, kind, value");
    seg.a = parse_vec2(js["a"], path + ".a");
    seg.b = parse_vec2(js["b"], path + ".b");
    std::string kind = js["kind"].get<std::string>();
    if (kind == "dirichlet")
      seg.kind = BoundaryKind::Dirichlet;
    else if (kind == "neumann")
      seg.kind = BoundaryKind::Neumann;
    else
      fail(path + ".kind", "expected 'dirichlet' or 'neumann'");
    seg.value_ref = js["value"].get<std::string>();
    scene.segments.push_back(seg);
  }

  scene.validate();
  if (!scene.has_dirichlet())
    throw SceneError(
        "scene has no Dirichlet segments: walks could never terminate");
  return scene;
}

Scene load_scene_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SceneError("cannot open scene file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_scene(ss.str());
}

namespace {

json bbox_to_json(const Bbox& b) {
  return json{{"min", {b.min.x, b.min.y}}, {"max", {b.max.x, b.max.y}}};
}

json raster_to_json(const RasterGrid& g) {
  json j;
  j["width"] = g.width;
  j["height"] = g.height;
  j["bbox"] = bbox_to_json(g.bbox);
  j["data"] = g.data;
  return j;
}

json value_to_json(const ValueSpec& v) {
  return std::visit(
      [&](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, ValueSpec::Constant>) {
          return json{{"type", "constant"}, {"value", s.v}};
        } else if constexpr (std::is_same_v<T, ValueSpec::Linear>) {
          return json{
              {"type", "linear"}, {"c0", s.c0}, {"cx", s.cx}, {"cy", s.cy}};
        } else if constexpr (std::is_same_v<T, ValueSpec::Raster>) {
          json j = raster_to_json(s.grid);
          j["type"] = "raster";
          return j;
        } else {
          throw SceneError("write_scene: analytic value spec '" + s.name +
                           "' is not serializable");
        }
      },
      v.spec);
}

}  // namespace

std::string write_scene(const Scene& scene) {
  json doc;
  doc["bbox"] = bbox_to_json(scene.bbox);
  doc["epsilon_shell"] = scene.epsilon_shell;
  json vals = json::object();
  for (const auto& [name, spec] : scene.values) vals[name] = value_to_json(spec);
  doc["values"] = vals;
  doc["source"] = std::visit(
      [&](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SourceField::Zero>) {
          return json{{"type", "zero"}};
        } else if constexpr (std::is_same_v<T, SourceField::Constant>) {
          return json{{"type", "constant"}, {"value", s.v}};
        } else {
          json j = raster_to_json(s.grid);
          j["type"] = "raster";
          return j;
        }
      },
      scene.source.spec);
  json segs = json::array();
  for (const auto& s : scene.segments) {
    segs.push_back(json{{"a", {s.a.x, s.a.y}},
                        {"b", {s.b.x, s.b.y}},
                        {"kind", s.kind == BoundaryKind::Dirichlet
                                     ? "dirichlet"
                                     : "neumann"},
                        {"value", s.value_ref}});
  }
  doc["segments"] = segs;
  return doc.dump(2);
}

}  // namespace wost
