#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "wost/scene.hpp"

namespace wost {

// Self-contained benchmark problems. The analytic field, when present, is
// the exact solution used for zero-variance references.
struct Preset {
  std::string name;
  Scene scene;
  std::function<double(Vec2)> analytic;  // null when no closed form exists
  Bbox eval_bbox;                        // grid region fully inside the domain
  std::vector<Vec2> probes;              // interior probe points
};

// Names: harmonic-disk, const-source-disk, neumann-strip,
// neumann-strip-vlin, curves. Throws std::invalid_argument otherwise.
Preset make_preset(const std::string& name);

std::vector<std::string> preset_names();

// truncated separable series for the neumann-strip-vlin problem
double strip_vlin_solution(Vec2 p);

}  // namespace wost
