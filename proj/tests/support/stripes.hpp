// SPDX-License-Identifier: Apache-2.0
// Region ground truth for the synthetic scene seen head-on, from geometry alone: regions are
// vertical stripes of the jittered grid that spans [-1, 1]^2 at z = 0.
#pragma once

#include <cmath>
#include <cstddef>

#include "langfield/image.hpp"
#include "langfield/scene.hpp"

namespace langfield::testing {

/// Region per pixel for a camera at azimuth 0 and elevation 0; -1 off the grid or within
/// `margin` grid cells of a stripe boundary.
inline LabelImage stripe_regions(const Camera& cam, std::size_t n_primitives, int regions, double margin = 1.0) {
  const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n_primitives))));
  const double spacing = 2.0 / static_cast<double>(side);
  const double depth = cam.world_to_camera(2, 3);
  LabelImage out(cam.width, cam.height, 1, -1);
  auto region_of_cell = [&](double cell) {
    return static_cast<int>(static_cast<std::size_t>(cell) * static_cast<std::size_t>(regions) / side);
  };
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const double wx = (x + 0.5 - cam.cx) * depth / cam.fx;
      const double wy = (y + 0.5 - cam.cy) * depth / cam.fy;
      if (std::abs(wx) >= 1.0 || std::abs(wy) >= 1.0) continue;
      const double cell = (wx + 1.0) / spacing;
      const double lo = std::max(0.0, cell - margin);
      const double hi = std::min(static_cast<double>(side) - 1e-9, cell + margin);
      const int r = region_of_cell(cell);
      if (region_of_cell(lo) != r || region_of_cell(hi) != r) continue;
      out.at(x, y) = r;
    }
  }
  return out;
}

}  // namespace langfield::testing
