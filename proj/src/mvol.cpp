#include "mrfseg/mvol.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

namespace mrfseg {
namespace {

constexpr const char* kMagic = "MVOL1";

void write_header(std::ostream& out, const Dims& dims, const char* dtype,
                  const std::array<double, 3>& voxel_mm) {
  nlohmann::json h;
  h["dims"] = {dims.nx, dims.ny, dims.nz};
  h["channels"] = dims.channels;
  h["dtype"] = dtype;
  h["voxel_mm"] = {voxel_mm[0], voxel_mm[1], voxel_mm[2]};
  out << kMagic << '\n' << h.dump() << '\n';
}

void put_f32(std::ostream& out, double v) {
  const auto f = static_cast<float>(v);
  std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
  unsigned char bytes[4];
  for (int k = 0; k < 4; ++k) bytes[k] = static_cast<unsigned char>((bits >> (8 * k)) & 0xffu);
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

std::vector<double> read_f32(std::istream& in, std::size_t count) {
  std::vector<unsigned char> raw(count * 4);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
    throw FormatError("MVOL payload truncated: expected " + std::to_string(raw.size()) +
                      " bytes");
  }
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(raw[4 * i + k]) << (8 * k);
    const float f = std::bit_cast<float>(bits);
    if (!std::isfinite(f)) throw FormatError("MVOL payload contains a non-finite value");
    out[i] = f;
  }
  return out;
}

void expect_end(std::istream& in) {
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError("MVOL payload has trailing bytes");
  }
}

void check_stream(std::ostream& out) {
  if (!out) throw FormatError("failed writing MVOL stream");
}

}  // namespace

MvolHeader read_mvol_header(std::istream& in) {
  std::string magic;
  if (!std::getline(in, magic) || magic != kMagic) {
    throw FormatError("not an MVOL file (bad magic line)");
  }
  std::string line;
  if (!std::getline(in, line)) throw FormatError("MVOL header line missing");
  MvolHeader h;
  try {
    const auto j = nlohmann::json::parse(line);
    const auto& dims = j.at("dims");
    if (!dims.is_array() || dims.size() != 3) throw FormatError("MVOL dims must have 3 entries");
    for (const auto& v : dims) {
      if (!v.is_number_integer() || v.get<long long>() <= 0) {
        throw FormatError("MVOL dims must be positive integers");
      }
    }
    h.dims.nx = dims[0].get<std::size_t>();
    h.dims.ny = dims[1].get<std::size_t>();
    h.dims.nz = dims[2].get<std::size_t>();
    h.dims.channels = j.at("channels").get<int>();
    h.dtype = j.at("dtype").get<std::string>();
    if (j.contains("voxel_mm")) {
      const auto& mm = j.at("voxel_mm");
      if (!mm.is_array() || mm.size() != 3) throw FormatError("MVOL voxel_mm must have 3 entries");
      for (int k = 0; k < 3; ++k) h.voxel_mm[k] = mm[k].get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("MVOL header is not valid: ") + e.what());
  }
  h.dims.validate();
  if (h.dtype != "f32" && h.dtype != "u8") {
    throw FormatError("MVOL dtype must be f32 or u8, got " + h.dtype);
  }
  return h;
}

void write_volume(std::ostream& out, const Volume& v) {
  write_header(out, v.dims, "f32", v.voxel_mm);
  for (double x : v.data) put_f32(out, x);
  check_stream(out);
}

Volume read_volume(std::istream& in) {
  const MvolHeader h = read_mvol_header(in);
  if (h.dtype != "f32") throw FormatError("intensity volume must have dtype f32");
  Volume v(h.dims);
  v.voxel_mm = h.voxel_mm;
  v.data = read_f32(in, h.dims.value_count());
  expect_end(in);
  return v;
}

void write_labels(std::ostream& out, const LabelMap& labels, const std::array<double, 3>& voxel_mm) {
  Dims d = labels.dims;
  d.channels = 1;
  write_header(out, d, "u8", voxel_mm);
  out.write(reinterpret_cast<const char*>(labels.labels.data()),
            static_cast<std::streamsize>(labels.labels.size()));
  check_stream(out);
}

LabelMap read_labels(std::istream& in) {
  const MvolHeader h = read_mvol_header(in);
  if (h.dtype != "u8" || h.dims.channels != 1) {
    throw FormatError("label volume must be single-channel u8");
  }
  LabelMap labels(h.dims);
  std::vector<std::uint8_t> raw(h.dims.voxel_count());
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
    throw FormatError("MVOL label payload truncated");
  }
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!is_valid_label_code(raw[i])) {
      throw FormatError("invalid label code " + std::to_string(raw[i]) + " at voxel " +
                        std::to_string(i));
    }
    labels.labels[i] = static_cast<Tissue>(raw[i]);
  }
  expect_end(in);
  return labels;
}

void write_bias(std::ostream& out, const BiasField& bias, const std::array<double, 3>& voxel_mm) {
  write_header(out, bias.dims, "f32", voxel_mm);
  for (double x : bias.values) put_f32(out, x);
  check_stream(out);
}

BiasField read_bias(std::istream& in) {
  const MvolHeader h = read_mvol_header(in);
  if (h.dtype != "f32") throw FormatError("bias field must have dtype f32");
  BiasField b(h.dims);
  b.values = read_f32(in, h.dims.value_count());
  expect_end(in);
  return b;
}

namespace {
std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FormatError("cannot open " + p.string());
  return in;
}
}  // namespace

Volume load_volume(const std::filesystem::path& p) {
  auto in = open_in(p);
  return read_volume(in);
}

LabelMap load_labels(const std::filesystem::path& p) {
  auto in = open_in(p);
  return read_labels(in);
}

BiasField load_bias(const std::filesystem::path& p) {
  auto in = open_in(p);
  return read_bias(in);
}

}  // namespace mrfseg
