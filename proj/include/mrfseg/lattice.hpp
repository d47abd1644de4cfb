#pragma once

// 3D lattice containers shared by every stage of the segmentation pipeline.
//
// All per-voxel data is stored x-fastest (then y, then z); multi-channel
// data is channel-interleaved so the echoes of one voxel are contiguous.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mrfseg/errors.hpp"

namespace mrfseg {

inline constexpr int kMaxChannels = 2;

enum class Tissue : std::uint8_t {
  bg = 0,
  wm = 1,
  gm = 2,
  csf = 3,
  sb = 4,
  unclassified = 255,
};

/// Number of real (trainable) tissue classes.
inline constexpr std::size_t kTissueCount = 5;
inline constexpr std::array<Tissue, kTissueCount> kTissues{
    Tissue::bg, Tissue::wm, Tissue::gm, Tissue::csf, Tissue::sb};

/// Dense slot for a label: 0..4 for real tissues, 5 for unclassified.
constexpr std::size_t tissue_slot(Tissue t) {
  return t == Tissue::unclassified ? kTissueCount : static_cast<std::size_t>(t);
}

constexpr bool is_valid_label_code(std::uint8_t code) {
  return code <= static_cast<std::uint8_t>(Tissue::sb) ||
         code == static_cast<std::uint8_t>(Tissue::unclassified);
}

std::string_view tissue_name(Tissue t);
std::optional<Tissue> parse_tissue(std::string_view name);

struct Dims {
  std::size_t nx = 1;
  std::size_t ny = 1;
  std::size_t nz = 1;
  int channels = 1;

  std::size_t voxel_count() const { return nx * ny * nz; }
  std::size_t value_count() const { return voxel_count() * static_cast<std::size_t>(channels); }

  /// Throws FormatError unless every extent is positive and channels is 1 or 2.
  void validate() const;

  /// Same spatial extents; channel count is not compared.
  bool same_grid(const Dims& other) const {
    return nx == other.nx && ny == other.ny && nz == other.nz;
  }
  bool operator==(const Dims&) const = default;
};

struct Index3 {
  std::size_t x = 0;
  std::size_t y = 0;
  std::size_t z = 0;
  bool operator==(const Index3&) const = default;
};

/// x-fastest linear index. Throws BoundsError for out-of-range coordinates.
std::size_t linear_index(Index3 c, const Dims& dims);
Index3 coords_of(std::size_t index, const Dims& dims);

/// Up to six face neighbors; boundary voxels get a truncated list.
class NeighborList {
 public:
  void push(std::size_t i) { idx_[count_++] = i; }
  std::size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }
  std::size_t operator[](std::size_t k) const { return idx_[k]; }
  const std::size_t* begin() const { return idx_.data(); }
  const std::size_t* end() const { return idx_.data() + count_; }

 private:
  std::array<std::size_t, 6> idx_{};
  std::size_t count_ = 0;
};

inline NeighborList neighbors_at(Index3 c, std::size_t index, const Dims& d) {
  NeighborList out;
  const std::size_t sx = 1;
  const std::size_t sy = d.nx;
  const std::size_t sz = d.nx * d.ny;
  if (c.x > 0) out.push(index - sx);
  if (c.x + 1 < d.nx) out.push(index + sx);
  if (c.y > 0) out.push(index - sy);
  if (c.y + 1 < d.ny) out.push(index + sy);
  if (c.z > 0) out.push(index - sz);
  if (c.z + 1 < d.nz) out.push(index + sz);
  return out;
}

/// Throws BoundsError if index is not a voxel of dims.
NeighborList first_order_neighbors(std::size_t index, const Dims& dims);

/// Calls f(i, j) once per lattice edge (i < j along +x, +y, +z).
template <class F>
void for_each_edge(const Dims& d, F&& f) {
  const std::size_t sy = d.nx;
  const std::size_t sz = d.nx * d.ny;
  for (std::size_t z = 0; z < d.nz; ++z) {
    for (std::size_t y = 0; y < d.ny; ++y) {
      for (std::size_t x = 0; x < d.nx; ++x) {
        const std::size_t i = x + y * sy + z * sz;
        if (x + 1 < d.nx) f(i, i + 1);
        if (y + 1 < d.ny) f(i, i + sy);
        if (z + 1 < d.nz) f(i, i + sz);
      }
    }
  }
}

/// Multi-echo intensities (raw units).
struct Volume {
  Dims dims;
  std::vector<double> data;
  std::array<double, 3> voxel_mm{1.0, 1.0, 1.0};

  Volume() = default;
  explicit Volume(const Dims& d, double fill = 0.0);

  int channels() const { return dims.channels; }
  std::span<const double> voxel(std::size_t i) const {
    return {data.data() + i * static_cast<std::size_t>(dims.channels),
            static_cast<std::size_t>(dims.channels)};
  }
  std::span<double> voxel(std::size_t i) {
    return {data.data() + i * static_cast<std::size_t>(dims.channels),
            static_cast<std::size_t>(dims.channels)};
  }
  double& at(std::size_t i, int channel) { return data[i * dims.channels + channel]; }
  double at(std::size_t i, int channel) const { return data[i * dims.channels + channel]; }

  /// Single-channel copy of one echo.
  Volume channel(int c) const;
};

struct LabelMap {
  Dims dims;
  std::vector<Tissue> labels;

  LabelMap() = default;
  explicit LabelMap(const Dims& d, Tissue fill = Tissue::bg);

  Tissue& operator[](std::size_t i) { return labels[i]; }
  Tissue operator[](std::size_t i) const { return labels[i]; }
  std::size_t size() const { return labels.size(); }
  bool operator==(const LabelMap&) const = default;
};

/// Log-domain additive intensity correction; the corrected raw intensity is
/// exp(bias) * z per channel, and the neutral field is zero.
struct BiasField {
  Dims dims;
  std::vector<double> values;

  BiasField() = default;
  explicit BiasField(const Dims& d) : dims(d), values(d.value_count(), 0.0) {}

  std::span<const double> voxel(std::size_t i) const {
    return {values.data() + i * static_cast<std::size_t>(dims.channels),
            static_cast<std::size_t>(dims.channels)};
  }
  std::span<double> voxel(std::size_t i) {
    return {values.data() + i * static_cast<std::size_t>(dims.channels),
            static_cast<std::size_t>(dims.channels)};
  }
};

}  // namespace mrfseg
