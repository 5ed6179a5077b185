#pragma once

// Checks shared by the unit tests and the acceptance binary. Oracles here are
// written independently of the library code they check.

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lfdnet/render.hpp"

namespace lfdnet::testing {

struct LayerGradCheck {
  std::string layer;
  int shapes = 0;
  std::size_t coords = 0;  // finite-difference probes
  double max_rel_error = 0;
};

/// Central differences (h = 1e-5, double precision) against every backward
/// pass: conv 1x1/3x3/7x7 at strides 1 and 2, relu, batch norm, dense,
/// max-pool, average pool and the weighted softmax cross-entropy.
std::vector<LayerGradCheck> gradient_checks(std::uint64_t seed, int shapes_per_layer);

/// Pixel-center point-in-triangle test in exact integer arithmetic. Vertex
/// coordinates must be multiples of 1/1024.
ViewImage raster_oracle(std::span<const Triangle2> triangles, int resolution);

struct RasterCheck {
  int triangles = 0;
  int images = 0;
  std::size_t pixels = 0;
  std::size_t mismatched = 0;
};
/// Random triangles (including degenerate and pixel-center-aligned ones) on
/// images of side 1..64, compared against raster_oracle.
RasterCheck rasterizer_vs_oracle(std::uint64_t seed, int triangles);

struct RigCheck {
  int directions = 0;
  int antipodal_pairs = 0;
  double worst_norm_error = 0;
  double worst_up_dot = 0;
  int vertices_with_three_neighbours = 0;  // exactly 3 nearest at one distance
  bool ok(double tol) const {
    return directions == 20 && antipodal_pairs == 10 && worst_norm_error <= tol && worst_up_dot <= tol &&
           vertices_with_three_neighbours == 20;
  }
};
RigCheck check_rig(const CameraRig& rig, double tol);

/// CADNET category sizes (name, model count) in index order.
const std::vector<std::pair<std::string, int>>& cadnet_table2();

struct SeparableCheck {
  double train_accuracy = 0;
  std::size_t leaves = 0;
  std::size_t leaf_bound_violations = 0;  // |leaf| > eta * |G| / lambda
  double max_abs_leaf = 0;
  double leaf_bound = 0;  // eta * max|G| / lambda over all leaves
};
/// 1-feature, 2-class data (x < 0 -> 0, x > 0 -> 1) boosted for `rounds`.
SeparableCheck gbdt_separable(int rounds);

}  // namespace lfdnet::testing
