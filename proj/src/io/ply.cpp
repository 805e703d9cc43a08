#include "cg3d/io/ply.hpp"

#include <cmath>
#include <cstring>
#include <map>
#include <sstream>

#include "cg3d/errors.hpp"
#include "cg3d/io/files.hpp"

namespace cg3d::io {

namespace {

constexpr const char* kGaussianProps[] = {"x",       "y",       "z",     "scale_0", "scale_1", "scale_2", "rot_0",
                                          "rot_1",   "rot_2",   "rot_3", "opacity", "f_dc_0",  "f_dc_1",  "f_dc_2"};
constexpr std::size_t kGaussianPropCount = std::size(kGaussianProps);

enum class Format { Ascii, BinaryLE };

struct Property {
  std::string name;
  std::string type;
  std::string count_type;  // non-empty for list properties
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> props;
};

struct Header {
  Format format = Format::Ascii;
  std::vector<Element> elements;
  std::size_t body = 0;  // byte offset of the data
};

std::size_t type_size(const std::string& t) {
  static const std::map<std::string, std::size_t> sizes{
      {"char", 1},   {"uchar", 1},  {"int8", 1},   {"uint8", 1},   {"short", 2},  {"ushort", 2},
      {"int16", 2},  {"uint16", 2}, {"int", 4},    {"uint", 4},    {"int32", 4},  {"uint32", 4},
      {"float", 4},  {"float32", 4}, {"double", 8}, {"float64", 8}};
  const auto it = sizes.find(t);
  if (it == sizes.end()) throw IoError("unsupported PLY property type '" + t + "'");
  return it->second;
}

double read_binary(const char* p, const std::string& t) {
  // PLY data here is little-endian; so is every platform this builds on.
  const auto get = [p]<class T>(T) {
    T v;
    std::memcpy(&v, p, sizeof v);
    return static_cast<double>(v);
  };
  if (t == "char" || t == "int8") return get(std::int8_t{});
  if (t == "uchar" || t == "uint8") return get(std::uint8_t{});
  if (t == "short" || t == "int16") return get(std::int16_t{});
  if (t == "ushort" || t == "uint16") return get(std::uint16_t{});
  if (t == "int" || t == "int32") return get(std::int32_t{});
  if (t == "uint" || t == "uint32") return get(std::uint32_t{});
  if (t == "float" || t == "float32") return get(float{});
  return get(double{});
}

Header parse_header(const std::string& bytes) {
  const std::size_t end = bytes.find("end_header");
  if (bytes.rfind("ply", 0) != 0 || end == std::string::npos) throw IoError("not a PLY file");
  std::size_t body = bytes.find('\n', end);
  if (body == std::string::npos) throw IoError("PLY header is not terminated");
  Header h;
  h.body = body + 1;
  std::istringstream in(bytes.substr(0, end));
  std::string line;
  bool have_format = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string f;
      ls >> f;
      if (f == "ascii") h.format = Format::Ascii;
      else if (f == "binary_little_endian") h.format = Format::BinaryLE;
      else throw IoError("unsupported PLY format '" + f + "'");
      have_format = true;
    } else if (word == "element") {
      Element e;
      ls >> e.name >> e.count;
      if (!ls) throw IoError("bad PLY element line: " + line);
      h.elements.push_back(e);
    } else if (word == "property") {
      if (h.elements.empty()) throw IoError("PLY property before any element");
      Property p;
      ls >> p.type;
      if (p.type == "list") ls >> p.count_type >> p.type;
      ls >> p.name;
      if (!ls) throw IoError("bad PLY property line: " + line);
      type_size(p.type);
      if (!p.count_type.empty()) type_size(p.count_type);
      h.elements.back().props.push_back(p);
    }
  }
  if (!have_format) throw IoError("PLY header has no format line");
  return h;
}

// Scalar properties of the named element, one row per item. List properties are skipped.
std::vector<std::vector<double>> read_element(const std::string& bytes, const Header& h, const std::string& name,
                                              const Element** found) {
  std::size_t pos = h.body;
  std::istringstream ascii;
  if (h.format == Format::Ascii) ascii.str(bytes.substr(h.body));
  for (const Element& e : h.elements) {
    const bool want = e.name == name;
    std::vector<std::vector<double>> rows;
    if (want) rows.reserve(e.count);
    for (std::size_t i = 0; i < e.count; ++i) {
      std::vector<double> row;
      for (const Property& p : e.props) {
        if (h.format == Format::Ascii) {
          double v = 0.0;
          if (!p.count_type.empty()) {
            std::size_t n = 0;
            if (!(ascii >> n)) throw IoError("truncated PLY list");
            for (std::size_t k = 0; k < n; ++k)
              if (!(ascii >> v)) throw IoError("truncated PLY list");
            continue;
          }
          if (!(ascii >> v)) throw IoError("truncated ASCII PLY body");
          if (want) row.push_back(v);
        } else {
          if (!p.count_type.empty()) {
            const std::size_t cs = type_size(p.count_type);
            if (pos + cs > bytes.size()) throw IoError("truncated PLY list");
            const auto n = static_cast<std::size_t>(read_binary(bytes.data() + pos, p.count_type));
            pos += cs + n * type_size(p.type);
            continue;
          }
          const std::size_t s = type_size(p.type);
          if (pos + s > bytes.size()) throw IoError("truncated binary PLY body");
          if (want) row.push_back(read_binary(bytes.data() + pos, p.type));
          pos += s;
        }
      }
      if (want) rows.push_back(std::move(row));
    }
    if (want) {
      *found = &e;
      return rows;
    }
  }
  throw IoError("PLY has no '" + name + "' element");
}

std::vector<std::size_t> column_indices(const Element& e, std::span<const char* const> names) {
  std::vector<std::size_t> out;
  for (const char* n : names) {
    std::size_t col = 0;
    bool hit = false;
    for (const Property& p : e.props) {
      if (!p.count_type.empty()) continue;
      if (p.name == n) {
        hit = true;
        break;
      }
      ++col;
    }
    if (!hit) throw IoError(std::string("PLY vertex element lacks property '") + n + "'");
    out.push_back(col);
  }
  return out;
}

}  // namespace

std::string encode_gaussian_ply(std::span<const Gaussian> gaussians) {
  std::ostringstream out;
  out << "ply\nformat binary_little_endian 1.0\nelement vertex " << gaussians.size() << "\n";
  for (const char* n : kGaussianProps) out << "property float " << n << "\n";
  out << "end_header\n";
  std::string bytes = out.str();
  const std::size_t head = bytes.size();
  bytes.resize(head + gaussians.size() * kGaussianPropCount * sizeof(float));
  char* p = bytes.data() + head;
  for (const Gaussian& g : gaussians) {
    const double o = std::clamp(g.opacity, 1e-12, 1.0 - 1e-12);
    const double row[kGaussianPropCount] = {
        g.mean.x(), g.mean.y(), g.mean.z(), std::log(g.scale.x()), std::log(g.scale.y()), std::log(g.scale.z()),
        g.rotation[0], g.rotation[1], g.rotation[2], g.rotation[3], std::log(o / (1.0 - o)),
        g.color.x(), g.color.y(), g.color.z()};
    for (double v : row) {
      const float f = static_cast<float>(v);
      std::memcpy(p, &f, sizeof f);
      p += sizeof f;
    }
  }
  return bytes;
}

std::vector<Gaussian> decode_gaussian_ply(const std::string& bytes) {
  const Header h = parse_header(bytes);
  const Element* e = nullptr;
  const auto rows = read_element(bytes, h, "vertex", &e);
  const auto cols = column_indices(*e, kGaussianProps);
  std::vector<Gaussian> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto v = [&](std::size_t k) { return rows[i][cols[k]]; };
    Gaussian& g = out[i];
    g.mean = Vec3(v(0), v(1), v(2));
    g.scale = Vec3(std::exp(v(3)), std::exp(v(4)), std::exp(v(5)));
    g.rotation = Quat(v(6), v(7), v(8), v(9));
    const double n = g.rotation.norm();
    if (!(n > 0.0)) throw IoError("PLY row " + std::to_string(i) + " has a zero rotation");
    // Float-rounded unit quaternions are left alone so that a store/load/store cycle is
    // byte-stable; other producers may store unnormalised ones.
    if (std::abs(n - 1.0) > kUnitTolerance) g.rotation /= n;
    g.opacity = 1.0 / (1.0 + std::exp(-v(10)));
    g.color = Vec3(v(11), v(12), v(13));
  }
  return out;
}

void write_gaussian_ply(const std::filesystem::path& path, std::span<const Gaussian> gaussians) {
  write_file_atomic(path, encode_gaussian_ply(gaussians));
}

std::vector<Gaussian> read_gaussian_ply(const std::filesystem::path& path) {
  return decode_gaussian_ply(read_file(path));
}

std::vector<Vec3> read_points(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  std::vector<Vec3> pts;
  if (bytes.rfind("ply", 0) == 0) {
    const Header h = parse_header(bytes);
    const Element* e = nullptr;
    const auto rows = read_element(bytes, h, "vertex", &e);
    constexpr const char* xyz[] = {"x", "y", "z"};
    const auto cols = column_indices(*e, xyz);
    for (const auto& r : rows) pts.emplace_back(r[cols[0]], r[cols[1]], r[cols[2]]);
  } else {
    std::istringstream in(bytes);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      std::istringstream ls(line);
      double x, y, z;
      if (!(ls >> x >> y >> z)) throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected 'x y z'");
      pts.emplace_back(x, y, z);
    }
  }
  if (pts.empty()) throw IoError("no points in " + path.string());
  return pts;
}

}  // namespace cg3d::io
