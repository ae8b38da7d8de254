#include "iaunet/image_io.hpp"

#include <cmath>
#include <fstream>

namespace iaunet::imageio {

namespace {

int read_pnm_int(std::istream& is) {
  // skips whitespace and '#' comment lines
  int c = is.get();
  while (c != EOF && (std::isspace(c) || c == '#')) {
    if (c == '#')
      while (c != EOF && c != '\n') c = is.get();
    c = is.get();
  }
  if (c == EOF || !std::isdigit(c))
    throw ValidationError("malformed PNM header");
  int v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    c = is.get();
  }
  return v;
}

std::uint8_t quantize(double v) {
  const double scaled = std::round(v * 255.0);
  return static_cast<std::uint8_t>(scaled < 0.0 ? 0.0
                                                : (scaled > 255.0 ? 255.0
                                                                  : scaled));
}

}  // namespace

void write_ppm(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw ShapeError(msg("write_ppm: expected [3,H,W], got ",
                         shape_str(image.shape())));
  const int h = image.dim(1), w = image.dim(2);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(msg("cannot open '", path, "' for writing"));
  os << "P6\n" << w << " " << h << "\n255\n";
  const double* p = image.data();
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        row[x * 3 + c] = quantize(p[c * plane + y * w + x]);
    os.write(reinterpret_cast<const char*>(row.data()),
             static_cast<std::streamsize>(row.size()));
  }
  if (!os) throw IoError(msg("write to '", path, "' failed"));
}

Tensor read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(msg("cannot open image '", path, "'"));
  char m0 = 0, m1 = 0;
  is.get(m0);
  is.get(m1);
  if (m0 != 'P' || m1 != '6')
    throw ValidationError(msg("'", path, "' is not a binary PPM (P6)"));
  const int w = read_pnm_int(is);
  const int h = read_pnm_int(is);
  const int maxval = read_pnm_int(is);
  if (maxval != 255)
    throw ValidationError(msg("'", path, "': unsupported maxval ", maxval));
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(w) * h * 3);
  is.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (!is) throw ValidationError(msg("'", path, "' is truncated"));
  std::vector<double> data(raw.size());
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        data[c * plane + y * w + x] =
            raw[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0;
  return Tensor::from_data({3, h, w}, std::move(data));
}

void write_pgm(const std::string& path, const data::MaskGrid& mask) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(msg("cannot open '", path, "' for writing"));
  os << "P5\n" << mask.width << " " << mask.height << "\n255\n";
  std::vector<std::uint8_t> bytes(mask.values.size());
  for (std::size_t i = 0; i < mask.values.size(); ++i)
    bytes[i] = mask.values[i] ? 255 : 0;
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError(msg("write to '", path, "' failed"));
}

data::MaskGrid read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(msg("cannot open mask '", path, "'"));
  char m0 = 0, m1 = 0;
  is.get(m0);
  is.get(m1);
  if (m0 != 'P' || m1 != '5')
    throw ValidationError(msg("'", path, "' is not a binary PGM (P5)"));
  const int w = read_pnm_int(is);
  const int h = read_pnm_int(is);
  const int maxval = read_pnm_int(is);
  if (maxval != 255)
    throw ValidationError(msg("'", path, "': unsupported maxval ", maxval));
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(w) * h);
  is.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (!is) throw ValidationError(msg("'", path, "' is truncated"));
  data::MaskGrid mask(h, w);
  for (std::size_t i = 0; i < raw.size(); ++i)
    mask.values[i] = raw[i] >= 128 ? 1 : 0;
  return mask;
}

}  // namespace iaunet::imageio
