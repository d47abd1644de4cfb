#pragma once

// MVOL container: an ASCII magic line "MVOL1", one JSON header line
//   {"dims":[nx,ny,nz],"channels":d,"dtype":"f32"|"u8","voxel_mm":[a,b,c]}
// and raw little-endian samples, channel-interleaved, x-fastest.

#include <filesystem>
#include <iosfwd>
#include <string>

#include "mrfseg/lattice.hpp"

namespace mrfseg {

struct MvolHeader {
  Dims dims;
  std::string dtype;  // "f32" or "u8"
  std::array<double, 3> voxel_mm{1.0, 1.0, 1.0};
};

MvolHeader read_mvol_header(std::istream& in);

void write_volume(std::ostream& out, const Volume& v);
Volume read_volume(std::istream& in);

void write_labels(std::ostream& out, const LabelMap& labels,
                  const std::array<double, 3>& voxel_mm = {1.0, 1.0, 1.0});
LabelMap read_labels(std::istream& in);

/// Bias fields are stored as f32 intensity-style volumes.
void write_bias(std::ostream& out, const BiasField& bias,
                const std::array<double, 3>& voxel_mm = {1.0, 1.0, 1.0});
BiasField read_bias(std::istream& in);

Volume load_volume(const std::filesystem::path& p);
LabelMap load_labels(const std::filesystem::path& p);
BiasField load_bias(const std::filesystem::path& p);

}  // namespace mrfseg
