#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "sgsplat/common.hpp"

namespace sgsplat {

/// Axis-aligned voxel lattice. Linear storage is x-major with z fastest:
/// index(i,j,k) = (i*ny + j)*nz + k. The center of voxel (i,j,k) sits at
/// origin + resolution*(i+0.5, j+0.5, k+0.5).
struct GridSpec {
  int nx = 0;
  int ny = 0;
  int nz = 0;
  double resolution = 1.0;  // meters per voxel
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();

  std::int64_t voxel_count() const {
    return static_cast<std::int64_t>(nx) * ny * nz;
  }

  std::int64_t linear_index(int i, int j, int k) const {
    return (static_cast<std::int64_t>(i) * ny + j) * nz + k;
  }

  void unravel(std::int64_t v, int& i, int& j, int& k) const {
    k = static_cast<int>(v % nz);
    const std::int64_t ij = v / nz;
    j = static_cast<int>(ij % ny);
    i = static_cast<int>(ij / ny);
  }

  Eigen::Vector3d center(int i, int j, int k) const {
    return origin + resolution * Eigen::Vector3d(i + 0.5, j + 0.5, k + 0.5);
  }

  bool contains(int i, int j, int k) const {
    return i >= 0 && i < nx && j >= 0 && j < ny && k >= 0 && k < nz;
  }

  bool operator==(const GridSpec& o) const {
    return nx == o.nx && ny == o.ny && nz == o.nz &&
           resolution == o.resolution && origin == o.origin;
  }

  void validate() const {
    if (nx <= 0 || ny <= 0 || nz <= 0)
      throw InvalidInput("grid dims must be positive");
    if (!(resolution > 0.0)) throw InvalidInput("grid resolution must be positive");
  }
};

/// Dense per-voxel payload with a fixed channel count. Channel values of one
/// voxel are contiguous (voxel-major, channel-fastest).
template <class T>
struct VoxelGrid {
  GridSpec spec;
  int channels = 1;
  std::vector<T> values;

  static VoxelGrid zeros(const GridSpec& spec, int channels = 1) {
    spec.validate();
    if (channels <= 0) throw InvalidInput("channel count must be positive");
    VoxelGrid g;
    g.spec = spec;
    g.channels = channels;
    g.values.assign(static_cast<std::size_t>(spec.voxel_count()) * channels,
                    T{});
    return g;
  }

  std::size_t value_count() const { return values.size(); }

  std::span<T> voxel(std::int64_t v) {
    return {values.data() + static_cast<std::size_t>(v) * channels,
            static_cast<std::size_t>(channels)};
  }
  std::span<const T> voxel(std::int64_t v) const {
    return {values.data() + static_cast<std::size_t>(v) * channels,
            static_cast<std::size_t>(channels)};
  }

  T& at(int i, int j, int k, int c = 0) {
    return values[static_cast<std::size_t>(spec.linear_index(i, j, k)) *
                      channels +
                  c];
  }
  const T& at(int i, int j, int k, int c = 0) const {
    return values[static_cast<std::size_t>(spec.linear_index(i, j, k)) *
                      channels +
                  c];
  }
};

using LabelGrid = VoxelGrid<std::uint8_t>;  // channels == 1, values 0..N or 255
using ScalarGrid = VoxelGrid<double>;       // channels == 1
using SemanticVolume = VoxelGrid<double>;   // channels == N+1 class logits
using FeatureVolume = VoxelGrid<double>;    // channels == C features

inline constexpr int kIgnoreLabel = 255;

}  // namespace sgsplat
