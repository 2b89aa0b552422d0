#include "ffseg/ply.hpp"

#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "ffseg/errors.hpp"

namespace ffseg {
namespace {

enum class ScalarType { kInt8, kUint8, kInt16, kUint16, kInt32, kUint32, kFloat32, kFloat64 };

struct Property {
  std::string name;
  ScalarType type;
};

ScalarType ParseType(const std::string& name, std::size_t offset) {
  if (name == "char" || name == "int8") return ScalarType::kInt8;
  if (name == "uchar" || name == "uint8") return ScalarType::kUint8;
  if (name == "short" || name == "int16") return ScalarType::kInt16;
  if (name == "ushort" || name == "uint16") return ScalarType::kUint16;
  if (name == "int" || name == "int32") return ScalarType::kInt32;
  if (name == "uint" || name == "uint32") return ScalarType::kUint32;
  if (name == "float" || name == "float32") return ScalarType::kFloat32;
  if (name == "double" || name == "float64") return ScalarType::kFloat64;
  throw FormatError("ply header", offset, "unknown property type '" + name + "'");
}

std::size_t TypeSize(ScalarType t) {
  switch (t) {
    case ScalarType::kInt8:
    case ScalarType::kUint8: return 1;
    case ScalarType::kInt16:
    case ScalarType::kUint16: return 2;
    case ScalarType::kInt32:
    case ScalarType::kUint32:
    case ScalarType::kFloat32: return 4;
    case ScalarType::kFloat64: return 8;
  }
  return 0;
}

template <typename T>
double Load(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return static_cast<double>(v);
}

double LoadBinary(ScalarType t, const char* p) {
  switch (t) {
    case ScalarType::kInt8: return Load<std::int8_t>(p);
    case ScalarType::kUint8: return Load<std::uint8_t>(p);
    case ScalarType::kInt16: return Load<std::int16_t>(p);
    case ScalarType::kUint16: return Load<std::uint16_t>(p);
    case ScalarType::kInt32: return Load<std::int32_t>(p);
    case ScalarType::kUint32: return Load<std::uint32_t>(p);
    case ScalarType::kFloat32: return Load<float>(p);
    case ScalarType::kFloat64: return Load<double>(p);
  }
  return 0.0;
}

void Assign(ColoredPoint& point, const std::string& name, double value) {
  if (name == "x") point.position.x() = value;
  else if (name == "y") point.position.y() = value;
  else if (name == "z") point.position.z() = value;
  else if (name == "red") point.color[0] = static_cast<std::uint8_t>(value);
  else if (name == "green") point.color[1] = static_cast<std::uint8_t>(value);
  else if (name == "blue") point.color[2] = static_cast<std::uint8_t>(value);
}

}  // namespace

std::string EncodePly(const std::vector<ColoredPoint>& points, PlyFormat format) {
  std::string out = "ply\n";
  out += format == PlyFormat::kAscii ? "format ascii 1.0\n" : "format binary_little_endian 1.0\n";
  out += "element vertex " + std::to_string(points.size()) + "\n";
  out += "property float x\nproperty float y\nproperty float z\n";
  out += "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  if (format == PlyFormat::kAscii) {
    char line[128];
    for (const ColoredPoint& p : points) {
      const int n = std::snprintf(line, sizeof(line), "%.9g %.9g %.9g %u %u %u\n",
                                  static_cast<double>(static_cast<float>(p.position.x())),
                                  static_cast<double>(static_cast<float>(p.position.y())),
                                  static_cast<double>(static_cast<float>(p.position.z())),
                                  unsigned{p.color[0]}, unsigned{p.color[1]}, unsigned{p.color[2]});
      out.append(line, static_cast<std::size_t>(n));
    }
  } else {
    out.reserve(out.size() + points.size() * 15);
    for (const ColoredPoint& p : points) {
      for (int k = 0; k < 3; ++k) {
        const float f = static_cast<float>(p.position(k));
        char buf[4];
        std::memcpy(buf, &f, 4);
        out.append(buf, 4);
      }
      for (std::uint8_t c : p.color) out.push_back(static_cast<char>(c));
    }
  }
  return out;
}

void WritePly(const std::vector<ColoredPoint>& points, const std::filesystem::path& path, PlyFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  const std::string bytes = EncodePly(points, format);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<ColoredPoint> DecodePly(const std::string& bytes) {
  const std::size_t header_end = bytes.find("end_header\n");
  if (bytes.rfind("ply\n", 0) != 0 || header_end == std::string::npos) {
    throw FormatError("ply header", 0, "missing 'ply' magic or 'end_header'");
  }
  std::istringstream header(bytes.substr(0, header_end));
  std::string line;
  bool ascii = false;
  bool have_format = false;
  bool in_vertex = false;
  bool vertex_seen = false;
  std::size_t count = 0;
  std::vector<Property> props;
  std::size_t offset = 0;
  while (std::getline(header, line)) {
    std::istringstream tokens(line);
    std::string kw;
    tokens >> kw;
    if (kw == "format") {
      std::string fmt;
      tokens >> fmt;
      if (fmt == "ascii") ascii = true;
      else if (fmt != "binary_little_endian") throw FormatError("ply header", offset, "unsupported format " + fmt);
      have_format = true;
    } else if (kw == "element") {
      std::string name;
      tokens >> name >> count;
      if (name == "vertex") {
        if (vertex_seen) throw FormatError("ply header", offset, "duplicate vertex element");
        if (!tokens) throw FormatError("ply header", offset, "bad vertex count");
        in_vertex = vertex_seen = true;
      } else {
        in_vertex = false;
        if (!vertex_seen) throw FormatError("ply header", offset, "elements before vertex are not supported");
      }
    } else if (kw == "property" && in_vertex) {
      std::string type;
      std::string name;
      tokens >> type >> name;
      if (type == "list") throw FormatError("ply header", offset, "list properties on vertices are not supported");
      props.push_back({name, ParseType(type, offset)});
    }
    offset += line.size() + 1;
  }
  if (!have_format || !vertex_seen) throw FormatError("ply header", 0, "missing format or vertex element");
  bool has_x = false, has_y = false, has_z = false;
  for (const Property& p : props) {
    has_x |= p.name == "x";
    has_y |= p.name == "y";
    has_z |= p.name == "z";
  }
  if (!(has_x && has_y && has_z)) throw FormatError("ply header", 0, "vertex element lacks x/y/z");

  std::size_t pos = header_end + std::strlen("end_header\n");
  std::vector<ColoredPoint> points(count);
  if (ascii) {
    for (std::size_t i = 0; i < count; ++i) {
      for (const Property& prop : props) {
        while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        double value = 0.0;
        std::from_chars_result r;
        if (prop.type == ScalarType::kFloat32) {
          float f = 0.0f;
          r = std::from_chars(bytes.data() + pos, bytes.data() + bytes.size(), f);
          value = f;
        } else {
          r = std::from_chars(bytes.data() + pos, bytes.data() + bytes.size(), value);
        }
        if (r.ec != std::errc()) throw FormatError("ply vertex " + std::to_string(i), pos, "bad number");
        pos = static_cast<std::size_t>(r.ptr - bytes.data());
        Assign(points[i], prop.name, value);
      }
    }
  } else {
    std::size_t stride = 0;
    for (const Property& p : props) stride += TypeSize(p.type);
    if (bytes.size() - pos < stride * count) {
      throw FormatError("ply vertices", bytes.size(), "truncated vertex data");
    }
    for (std::size_t i = 0; i < count; ++i) {
      for (const Property& prop : props) {
        Assign(points[i], prop.name, LoadBinary(prop.type, bytes.data() + pos));
        pos += TypeSize(prop.type);
      }
    }
  }
  return points;
}

std::vector<ColoredPoint> ReadPly(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return DecodePly({std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()});
}

}  // namespace ffseg
