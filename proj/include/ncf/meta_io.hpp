#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "ncf/volume.hpp"

namespace ncf {

enum class ElementType { Short, Float, Double };

// Decoded MetaImage payload. `data` holds intensities widened to real;
// `tags` carries the NCF_* entries of the Comment header line.
struct MetaImage {
  std::array<int, 3> dims{0, 0, 0};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  ElementType etype = ElementType::Float;
  std::vector<real> data;
  std::map<std::string, std::string> tags;
};

// Reads a .mha (single file) or .mhd (+ raw payload) MetaImage.
// Little-endian, uncompressed, 3-D scalar images only.
MetaImage read_meta_image(const std::filesystem::path& path);

// Writes `img` as .mha when the extension is not .mhd, otherwise as a
// .mhd header plus sibling .raw payload.
void write_meta_image(const MetaImage& img, const std::filesystem::path& path);

Volume load_volume(const std::filesystem::path& path);
void save_volume(const Volume& v, const std::filesystem::path& path,
                 ElementType etype = ElementType::Float);

}  // namespace ncf
