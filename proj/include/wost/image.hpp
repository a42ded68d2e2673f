#pragma once

#include <string>
#include <vector>

#include "wost/vec.hpp"
#include "wost/wost.hpp"

namespace wost {

// Per-cell running statistics over an evaluation grid; cell (i, j) is
// estimated at its center, row 0 along bbox.min.y.
struct SolutionImage {
  int width = 0;
  int height = 0;
  Bbox bbox;
  std::vector<PointStats> cells;

  PointStats& at(int i, int j) { return cells[static_cast<size_t>(j) * width + i]; }
  const PointStats& at(int i, int j) const {
    return cells[static_cast<size_t>(j) * width + i];
  }
  Vec2 cell_center(int i, int j) const {
    Vec2 ext = bbox.extent();
    return {bbox.min.x + (i + 0.5) / width * ext.x,
            bbox.min.y + (j + 0.5) / height * ext.y};
  }
  std::vector<Vec2> cell_centers() const;
};

SolutionImage make_image(int width, int height, const Bbox& bbox);

// csv rows "i,j,mean,var,count" with a fixed header; deterministic bytes
void write_csv(const SolutionImage& img, const std::string& path);
SolutionImage read_csv(const std::string& path);

// grayscale 32-bit little-endian PFM of the means (bottom-up rows)
void write_pfm(const SolutionImage& img, const std::string& path);
SolutionImage read_pfm(const std::string& path);

// 8-bit grayscale PNG of the means; the tonemap range is written to a
// "<path>.json" sidecar. Inspection only.
void write_png(const SolutionImage& img, const std::string& path,
               double range_min = 0.0, double range_max = 0.0);

// mean over cells of (est-ref)^2 / (ref^2 + delta),
// delta = (0.01 * max|ref|)^2
double compute_relmse(const SolutionImage& est, const SolutionImage& ref);

}  // namespace wost
