#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sgsplat/grid.hpp"

namespace sgsplat {

enum class PrimitiveKind : std::uint8_t {
  kBox = 0,
  kSphere = 1,
  kCylinder = 2,  // axis along z
  kSlab = 3,      // full xy extent between two heights
};

struct Primitive {
  PrimitiveKind kind = PrimitiveKind::kBox;
  std::uint8_t label = 1;
  Eigen::Vector3d min_corner{0.0, 0.0, 0.0};  // box
  Eigen::Vector3d max_corner{0.0, 0.0, 0.0};
  Eigen::Vector3d center{0.0, 0.0, 0.0};  // sphere center, cylinder axis
  double radius = 0.0;
  double z_min = 0.0;  // cylinder and slab vertical extent
  double z_max = 0.0;
};

/// A voxel takes a primitive's label when its center lies inside (bounds
/// inclusive); later primitives overwrite earlier ones. Primitives must lie
/// within the grid volume.
LabelGrid rasterize(const GridSpec& spec, std::span<const Primitive> shapes);

/// 64 x 64 x 8 grid at 0.2 m: ground road slab with sidewalks, a few
/// buildings, parked cars, vegetation blobs, and poles. Classes 1..6 are
/// road, sidewalk, building, car, vegetation, pole.
inline constexpr int kMiniStreetClasses = 6;
GridSpec mini_street_spec();
LabelGrid mini_street(std::uint64_t seed);

/// Synthetic stand-in for a learned feature volume: each class (including
/// empty) gets a seeded unit-norm prototype; a voxel's feature is its
/// class prototype plus N(0, sigma^2) noise, with the empty prototype
/// scaled by 0.1.
FeatureVolume gen_features(const LabelGrid& labels, int channels,
                           double noise, std::uint64_t seed);

}  // namespace sgsplat
