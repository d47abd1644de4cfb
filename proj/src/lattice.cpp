#include "mrfseg/lattice.hpp"

#include <cmath>
#include <sstream>

namespace mrfseg {

std::string_view tissue_name(Tissue t) {
  switch (t) {
    case Tissue::bg: return "BG";
    case Tissue::wm: return "WM";
    case Tissue::gm: return "GM";
    case Tissue::csf: return "CSF";
    case Tissue::sb: return "SB";
    case Tissue::unclassified: return "UNCLASSIFIED";
  }
  return "?";
}

std::optional<Tissue> parse_tissue(std::string_view name) {
  for (Tissue t : kTissues) {
    if (tissue_name(t) == name) return t;
  }
  if (name == "UNCLASSIFIED") return Tissue::unclassified;
  return std::nullopt;
}

void Dims::validate() const {
  if (nx == 0 || ny == 0 || nz == 0) {
    std::ostringstream msg;
    msg << "dims must be positive, got " << nx << "x" << ny << "x" << nz;
    throw FormatError(msg.str());
  }
  if (channels != 1 && channels != 2) {
    throw FormatError("channel count must be 1 or 2, got " + std::to_string(channels));
  }
}

std::size_t linear_index(Index3 c, const Dims& dims) {
  if (c.x >= dims.nx || c.y >= dims.ny || c.z >= dims.nz) {
    std::ostringstream msg;
    msg << "coordinate (" << c.x << "," << c.y << "," << c.z << ") outside " << dims.nx
        << "x" << dims.ny << "x" << dims.nz;
    throw BoundsError(msg.str());
  }
  return c.x + dims.nx * (c.y + dims.ny * c.z);
}

Index3 coords_of(std::size_t index, const Dims& dims) {
  if (index >= dims.voxel_count()) {
    throw BoundsError("voxel index " + std::to_string(index) + " outside volume of " +
                      std::to_string(dims.voxel_count()) + " voxels");
  }
  Index3 c;
  c.x = index % dims.nx;
  const std::size_t rest = index / dims.nx;
  c.y = rest % dims.ny;
  c.z = rest / dims.ny;
  return c;
}

NeighborList first_order_neighbors(std::size_t index, const Dims& dims) {
  return neighbors_at(coords_of(index, dims), index, dims);
}

Volume::Volume(const Dims& d, double fill) : dims(d), data(d.value_count(), fill) {
  d.validate();
}

Volume Volume::channel(int c) const {
  if (c < 0 || c >= dims.channels) {
    throw BoundsError("channel " + std::to_string(c) + " not present");
  }
  Dims d = dims;
  d.channels = 1;
  Volume out(d);
  out.voxel_mm = voxel_mm;
  for (std::size_t i = 0; i < dims.voxel_count(); ++i) out.data[i] = at(i, c);
  return out;
}

LabelMap::LabelMap(const Dims& d, Tissue fill) : dims(d), labels(d.voxel_count(), fill) {
  dims.channels = 1;
  dims.validate();
}

}  // namespace mrfseg
