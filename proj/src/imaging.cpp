#include "fnav/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fnav {

Volume3D Volume3D::filled(std::array<int, 3> dims, Eigen::Vector3d spacing, Eigen::Vector3d origin,
                          float value) {
  Volume3D v;
  v.dims = dims;
  v.spacing = spacing;
  v.origin = origin;
  v.voxels.assign(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2], value);
  return v;
}

Image2D Image2D::zeros(int width, int height, Eigen::Vector2d spacing) {
  Image2D img;
  img.width = width;
  img.height = height;
  img.pixel_spacing = spacing;
  img.pixels.assign(static_cast<std::size_t>(width) * height, 0.0);
  return img;
}

namespace {

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

void write_file_or_throw(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot open for writing: " + path);
  f << text;
  if (!f) throw ParseError("write failed: " + path);
}

}  // namespace

void save_volume(const Volume3D& v, const std::string& path_base) {
  std::ostringstream header;
  header << "dims: " << v.dims[0] << " " << v.dims[1] << " " << v.dims[2] << "\n";
  header << "spacing: " << fmt_double(v.spacing.x()) << " " << fmt_double(v.spacing.y()) << " "
         << fmt_double(v.spacing.z()) << "\n";
  header << "origin: " << fmt_double(v.origin.x()) << " " << fmt_double(v.origin.y()) << " "
         << fmt_double(v.origin.z()) << "\n";
  write_file_or_throw(path_base + ".vh", header.str());

  std::ofstream raw(path_base + ".vraw", std::ios::binary);
  if (!raw) throw ParseError("cannot open for writing: " + path_base + ".vraw");
  static_assert(sizeof(float) == 4);
  raw.write(reinterpret_cast<const char*>(v.voxels.data()),
            static_cast<std::streamsize>(v.voxels.size() * 4));
  if (!raw) throw ParseError("write failed: " + path_base + ".vraw");
}

Volume3D load_volume(const std::string& path_base) {
  std::ifstream f(path_base + ".vh");
  if (!f) throw ParseError("cannot open: " + path_base + ".vh");
  Volume3D v;
  bool have_dims = false, have_spacing = false, have_origin = false;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw ParseError("malformed header line: " + line);
    const std::string key = line.substr(0, colon);
    std::istringstream vals(line.substr(colon + 1));
    if (key == "dims") {
      if (!(vals >> v.dims[0] >> v.dims[1] >> v.dims[2])) throw ParseError("bad dims");
      have_dims = true;
    } else if (key == "spacing") {
      if (!(vals >> v.spacing.x() >> v.spacing.y() >> v.spacing.z())) throw ParseError("bad spacing");
      have_spacing = true;
    } else if (key == "origin") {
      if (!(vals >> v.origin.x() >> v.origin.y() >> v.origin.z())) throw ParseError("bad origin");
      have_origin = true;
    } else {
      throw ParseError("unknown header key: " + key);
    }
  }
  if (!have_dims || !have_spacing || !have_origin) {
    throw ParseError("header missing dims/spacing/origin: " + path_base + ".vh");
  }
  if (v.dims[0] < 1 || v.dims[1] < 1 || v.dims[2] < 1) throw ParseError("dims must be >= 1");
  if (v.spacing.minCoeff() <= 0.0) throw ParseError("spacing must be > 0");

  std::ifstream raw(path_base + ".vraw", std::ios::binary | std::ios::ate);
  if (!raw) throw ParseError("cannot open: " + path_base + ".vraw");
  const auto bytes = static_cast<std::size_t>(raw.tellg());
  const std::size_t count = static_cast<std::size_t>(v.dims[0]) * v.dims[1] * v.dims[2];
  if (bytes != count * 4) {
    throw SizeMismatch("raw payload is " + std::to_string(bytes) + " bytes, expected " +
                       std::to_string(count * 4));
  }
  raw.seekg(0);
  v.voxels.resize(count);
  raw.read(reinterpret_cast<char*>(v.voxels.data()), static_cast<std::streamsize>(count * 4));
  if (!raw) throw ParseError("short read: " + path_base + ".vraw");
  return v;
}

double trilinear_sample(const Volume3D& v, const Eigen::Vector3d& p) {
  const double fx = (p.x() - v.origin.x()) / v.spacing.x();
  const double fy = (p.y() - v.origin.y()) / v.spacing.y();
  const double fz = (p.z() - v.origin.z()) / v.spacing.z();
  if (fx < 0.0 || fy < 0.0 || fz < 0.0 || fx > v.dims[0] - 1 || fy > v.dims[1] - 1 ||
      fz > v.dims[2] - 1) {
    return -1000.0;
  }
  int x0 = std::min(static_cast<int>(fx), v.dims[0] - 2);
  int y0 = std::min(static_cast<int>(fy), v.dims[1] - 2);
  int z0 = std::min(static_cast<int>(fz), v.dims[2] - 2);
  x0 = std::max(x0, 0);
  y0 = std::max(y0, 0);
  z0 = std::max(z0, 0);
  const double tx = fx - x0, ty = fy - y0, tz = fz - z0;
  const int x1 = std::min(x0 + 1, v.dims[0] - 1);
  const int y1 = std::min(y0 + 1, v.dims[1] - 1);
  const int z1 = std::min(z0 + 1, v.dims[2] - 1);

  const double c000 = v.at(x0, y0, z0), c100 = v.at(x1, y0, z0);
  const double c010 = v.at(x0, y1, z0), c110 = v.at(x1, y1, z0);
  const double c001 = v.at(x0, y0, z1), c101 = v.at(x1, y0, z1);
  const double c011 = v.at(x0, y1, z1), c111 = v.at(x1, y1, z1);

  const double c00 = c000 + (c100 - c000) * tx;
  const double c10 = c010 + (c110 - c010) * tx;
  const double c01 = c001 + (c101 - c001) * tx;
  const double c11 = c011 + (c111 - c011) * tx;
  const double c0 = c00 + (c10 - c00) * ty;
  const double c1 = c01 + (c11 - c01) * ty;
  return c0 + (c1 - c0) * tz;
}

Image2D downsample_image(const Image2D& img, int factor) {
  if (factor < 1) throw InvalidConfig("downsample factor must be >= 1");
  if (factor == 1) return img;
  const int ow = img.width / factor;
  const int oh = img.height / factor;
  if (ow == 0 || oh == 0) {
    throw EmptyOutput("downsample factor " + std::to_string(factor) + " collapses a dimension");
  }
  Image2D out = Image2D::zeros(ow, oh, img.pixel_spacing * factor);
  const double inv = 1.0 / (static_cast<double>(factor) * factor);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      double sum = 0.0;
      for (int dy = 0; dy < factor; ++dy) {
        const double* row = &img.pixels[static_cast<std::size_t>(oy * factor + dy) * img.width];
        for (int dx = 0; dx < factor; ++dx) {
          sum += row[ox * factor + dx];
        }
      }
      out.at(ox, oy) = sum * inv;
    }
  }
  return out;
}

void save_image(const Image2D& img, const std::string& pgm_path) {
  double lo = 0.0, hi = 1.0;
  if (!img.pixels.empty()) {
    lo = *std::min_element(img.pixels.begin(), img.pixels.end());
    hi = *std::max_element(img.pixels.begin(), img.pixels.end());
  }
  if (hi <= lo) hi = lo + 1.0;
  save_image(img, pgm_path, lo, hi);
}

void save_image(const Image2D& img, const std::string& pgm_path, double window_lo,
                double window_hi) {
  if (window_hi <= window_lo) throw InvalidConfig("window hi must exceed lo");
  std::ofstream f(pgm_path, std::ios::binary);
  if (!f) throw ParseError("cannot open for writing: " + pgm_path);
  f << "P5\n" << img.width << " " << img.height << "\n65535\n";
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(img.width) * img.height * 2);
  const double scale = 65535.0 / (window_hi - window_lo);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    double q = (img.pixels[i] - window_lo) * scale;
    q = std::clamp(q, 0.0, 65535.0);
    const auto u = static_cast<std::uint16_t>(std::lround(q));
    buf[2 * i] = static_cast<std::uint8_t>(u >> 8);
    buf[2 * i + 1] = static_cast<std::uint8_t>(u & 0xff);
  }
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!f) throw ParseError("write failed: " + pgm_path);

  std::ostringstream meta;
  meta << "pixel_spacing: " << fmt_double(img.pixel_spacing.x()) << " "
       << fmt_double(img.pixel_spacing.y()) << "\n";
  meta << "window: " << fmt_double(window_lo) << " " << fmt_double(window_hi) << "\n";
  write_file_or_throw(pgm_path + ".imeta", meta.str());
}

Image2D load_image(const std::string& pgm_path) {
  std::ifstream f(pgm_path, std::ios::binary);
  if (!f) throw ParseError("cannot open: " + pgm_path);
  std::string magic;
  f >> magic;
  if (magic != "P5") throw ParseError("not a binary PGM: " + pgm_path);
  int w = 0, h = 0, maxval = 0;
  f >> w >> h >> maxval;
  if (!f || w < 1 || h < 1) throw ParseError("malformed PGM header: " + pgm_path);
  if (maxval != 65535) throw ParseError("expected maxval 65535");
  f.get();  // single whitespace after maxval

  Image2D img = Image2D::zeros(w, h);
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(w) * h * 2);
  f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (f.gcount() != static_cast<std::streamsize>(buf.size())) {
    throw SizeMismatch("PGM payload shorter than width*height samples");
  }

  double lo = 0.0, hi = 65535.0;
  {
    std::ifstream meta(pgm_path + ".imeta");
    if (!meta) throw ParseError("missing sidecar: " + pgm_path + ".imeta");
    std::string line;
    bool have_spacing = false;
    while (std::getline(meta, line)) {
      if (line.empty() || line[0] == '#') continue;
      const auto colon = line.find(':');
      if (colon == std::string::npos) throw ParseError("malformed imeta line: " + line);
      const std::string key = line.substr(0, colon);
      std::istringstream vals(line.substr(colon + 1));
      if (key == "pixel_spacing") {
        if (!(vals >> img.pixel_spacing.x() >> img.pixel_spacing.y()))
          throw ParseError("bad pixel_spacing");
        have_spacing = true;
      } else if (key == "window") {
        if (!(vals >> lo >> hi)) throw ParseError("bad window");
      } else {
        throw ParseError("unknown imeta key: " + key);
      }
    }
    if (!have_spacing) throw ParseError("imeta missing pixel_spacing");
  }
  const double scale = (hi - lo) / 65535.0;
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const std::uint16_t u = static_cast<std::uint16_t>((buf[2 * i] << 8) | buf[2 * i + 1]);
    img.pixels[i] = lo + u * scale;
  }
  return img;
}

}  // namespace fnav
