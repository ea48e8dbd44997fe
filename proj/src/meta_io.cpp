#include "ncf/meta_io.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "ncf/errors.hpp"

namespace ncf {
namespace {

namespace fs = std::filesystem;

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct HeaderLine {
  std::string key, value, raw;
};

[[noreturn]] void bad_header(const std::string& line, const std::string& why) {
  throw io_error("unsupported MetaImage header: " + why + " (line: \"" + line + "\")");
}

size_t element_size(ElementType t) {
  switch (t) {
    case ElementType::Short: return 2;
    case ElementType::Float: return 4;
    case ElementType::Double: return 8;
  }
  return 0;
}

const char* element_name(ElementType t) {
  switch (t) {
    case ElementType::Short: return "MET_SHORT";
    case ElementType::Float: return "MET_FLOAT";
    case ElementType::Double: return "MET_DOUBLE";
  }
  return "";
}

std::vector<char> read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open file: " + path.string());
  in.seekg(0, std::ios::end);
  std::streamoff size = in.tellg();
  in.seekg(0);
  std::vector<char> buf(static_cast<size_t>(size));
  if (size > 0) in.read(buf.data(), size);
  if (!in) throw io_error("cannot read file: " + path.string());
  return buf;
}

std::map<std::string, std::string> parse_tags(const std::string& comment) {
  std::map<std::string, std::string> tags;
  std::istringstream ss(comment);
  std::string tok;
  while (ss >> tok) {
    size_t eq = tok.find('=');
    if (eq != std::string::npos && tok.rfind("NCF_", 0) == 0)
      tags[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return tags;
}

}  // namespace

MetaImage read_meta_image(const fs::path& path) {
  const std::vector<char> raw = read_all(path);
  MetaImage img;

  bool have_dims = false, have_type = false;
  std::string datafile;
  size_t pos = 0;
  size_t payload_start = 0;

  while (pos < raw.size()) {
    size_t eol = pos;
    while (eol < raw.size() && raw[eol] != '\n') ++eol;
    std::string line(raw.data() + pos, eol - pos);
    pos = eol + 1;

    const std::string trimmed = trim(line);
    if (trimmed.empty()) continue;
    size_t eq = trimmed.find('=');
    if (eq == std::string::npos) bad_header(line, "missing '='");
    const std::string key = trim(trimmed.substr(0, eq));
    const std::string value = trim(trimmed.substr(eq + 1));

    if (key == "ObjectType") {
      if (value != "Image") bad_header(line, "ObjectType must be Image");
    } else if (key == "NDims") {
      if (value != "3") bad_header(line, "only NDims = 3 is supported");
    } else if (key == "BinaryData") {
      if (value != "True") bad_header(line, "only binary data is supported");
    } else if (key == "CompressedData") {
      if (value != "False") bad_header(line, "compressed payloads are not supported");
    } else if (key == "ElementByteOrderMSB" || key == "BinaryDataByteOrderMSB") {
      if (value != "False") bad_header(line, "big-endian payloads are not supported");
    } else if (key == "ElementNumberOfChannels") {
      if (value != "1") bad_header(line, "multi-channel elements are not supported");
    } else if (key == "DimSize") {
      std::istringstream ss(value);
      if (!(ss >> img.dims[0] >> img.dims[1] >> img.dims[2]) || img.dims[0] < 1 ||
          img.dims[1] < 1 || img.dims[2] < 1)
        bad_header(line, "DimSize needs three positive integers");
      have_dims = true;
    } else if (key == "ElementSpacing") {
      std::istringstream ss(value);
      if (!(ss >> img.spacing[0] >> img.spacing[1] >> img.spacing[2]) ||
          img.spacing[0] <= 0 || img.spacing[1] <= 0 || img.spacing[2] <= 0)
        bad_header(line, "ElementSpacing needs three positive reals");
    } else if (key == "ElementType") {
      if (value == "MET_SHORT") img.etype = ElementType::Short;
      else if (value == "MET_FLOAT") img.etype = ElementType::Float;
      else if (value == "MET_DOUBLE") img.etype = ElementType::Double;
      else bad_header(line, "unsupported ElementType " + value);
      have_type = true;
    } else if (key == "Comment") {
      img.tags = parse_tags(value);
    } else if (key == "ElementDataFile") {
      datafile = value;
      payload_start = pos;
      break;
    }
    // other keys (Offset, TransformMatrix, ...) carry no meaning here
  }

  if (!have_dims) throw io_error("MetaImage header lacks DimSize: " + path.string());
  if (!have_type) throw io_error("MetaImage header lacks ElementType: " + path.string());
  if (datafile.empty()) throw io_error("MetaImage header lacks ElementDataFile: " + path.string());

  std::vector<char> payload;
  const char* bytes = nullptr;
  size_t nbytes = 0;
  if (datafile == "LOCAL") {
    bytes = raw.data() + payload_start;
    nbytes = raw.size() - payload_start;
  } else {
    payload = read_all(path.parent_path() / datafile);
    bytes = payload.data();
    nbytes = payload.size();
  }

  const int64_t n = spatial_numel(img.dims[0], img.dims[1], img.dims[2]);
  const size_t expect = static_cast<size_t>(n) * element_size(img.etype);
  if (nbytes != expect)
    throw io_error("payload size mismatch in " + path.string() + ": header implies " +
                   std::to_string(expect) + " bytes, found " + std::to_string(nbytes));

  img.data.resize(static_cast<size_t>(n));
  switch (img.etype) {
    case ElementType::Short: {
      std::vector<int16_t> tmp(static_cast<size_t>(n));
      std::memcpy(tmp.data(), bytes, expect);
      for (int64_t i = 0; i < n; ++i) img.data[static_cast<size_t>(i)] = real(tmp[static_cast<size_t>(i)]);
      break;
    }
    case ElementType::Float: {
      std::vector<float> tmp(static_cast<size_t>(n));
      std::memcpy(tmp.data(), bytes, expect);
      for (int64_t i = 0; i < n; ++i) img.data[static_cast<size_t>(i)] = real(tmp[static_cast<size_t>(i)]);
      break;
    }
    case ElementType::Double: {
      std::memcpy(img.data.data(), bytes, expect);
      break;
    }
  }
  return img;
}

void write_meta_image(const MetaImage& img, const fs::path& path) {
  const int64_t n = spatial_numel(img.dims[0], img.dims[1], img.dims[2]);
  if (n != static_cast<int64_t>(img.data.size()))
    throw io_error("MetaImage data length does not match dims");

  const bool split = path.extension() == ".mhd";
  const fs::path rawpath = fs::path(path).replace_extension(".raw");

  std::ostringstream head;
  head << "ObjectType = Image\n"
       << "NDims = 3\n"
       << "BinaryData = True\n"
       << "BinaryDataByteOrderMSB = False\n"
       << "CompressedData = False\n"
       << "DimSize = " << img.dims[0] << " " << img.dims[1] << " " << img.dims[2] << "\n";
  head.precision(17);
  head << "ElementSpacing = " << img.spacing[0] << " " << img.spacing[1] << " "
       << img.spacing[2] << "\n";
  if (!img.tags.empty()) {
    head << "Comment =";
    for (const auto& [k, v] : img.tags) head << " " << k << "=" << v;
    head << "\n";
  }
  head << "ElementType = " << element_name(img.etype) << "\n"
       << "ElementDataFile = " << (split ? rawpath.filename().string() : std::string("LOCAL"))
       << "\n";

  std::vector<char> payload(static_cast<size_t>(n) * element_size(img.etype));
  switch (img.etype) {
    case ElementType::Short: {
      std::vector<int16_t> tmp(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) {
        real v = std::llround(img.data[static_cast<size_t>(i)]);
        if (v < -32768) v = -32768;
        if (v > 32767) v = 32767;
        tmp[static_cast<size_t>(i)] = static_cast<int16_t>(v);
      }
      std::memcpy(payload.data(), tmp.data(), payload.size());
      break;
    }
    case ElementType::Float: {
      std::vector<float> tmp(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) tmp[static_cast<size_t>(i)] = static_cast<float>(img.data[static_cast<size_t>(i)]);
      std::memcpy(payload.data(), tmp.data(), payload.size());
      break;
    }
    case ElementType::Double: {
      std::memcpy(payload.data(), img.data.data(), payload.size());
      break;
    }
  }

  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write file: " + path.string());
    const std::string h = head.str();
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    if (!split) out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw io_error("write failed: " + path.string());
  }
  if (split) {
    std::ofstream out(rawpath, std::ios::binary);
    if (!out) throw io_error("cannot write file: " + rawpath.string());
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw io_error("write failed: " + rawpath.string());
  }
}

Volume load_volume(const fs::path& path) {
  MetaImage img = read_meta_image(path);
  Volume v;
  v.shape = img.dims;
  v.spacing = img.spacing;
  v.data = std::move(img.data);

  auto it = img.tags.find("NCF_NORMALIZED");
  if (it != img.tags.end() && it->second == "1") {
    for (real x : v.data)
      if (!(x >= real(0) && x <= real(1)))
        throw io_error("file tagged NCF_NORMALIZED=1 has intensities outside [0,1]: " +
                       path.string());
    v.unit = IntensityUnit::Normalized;
  } else {
    v.unit = IntensityUnit::HU;
  }
  return v;
}

void save_volume(const Volume& v, const fs::path& path, ElementType etype) {
  MetaImage img;
  img.dims = v.shape;
  img.spacing = v.spacing;
  img.etype = etype;
  img.data = v.data;
  if (v.unit == IntensityUnit::Normalized) img.tags["NCF_NORMALIZED"] = "1";
  write_meta_image(img, path);
}

}  // namespace ncf
