#include "photocon/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace photocon {

namespace {

std::string next_token(std::istream& is) {
  std::string tok;
  while (is) {
    const int c = is.peek();
    if (c == '#') {
      std::string skip;
      std::getline(is, skip);
    } else if (std::isspace(c)) {
      is.get();
    } else {
      break;
    }
  }
  is >> tok;
  return tok;
}

int parse_int(const std::string& s, const std::filesystem::path& path) {
  try {
    return std::stoi(s);
  } catch (const std::exception&) {
    throw InvalidInput(path.string() + ": malformed header field '" + s + "'");
  }
}

}  // namespace

void write_pgm(const Image& image, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  std::vector<unsigned char> buf(image.size());
  for (std::size_t k = 0; k < image.size(); ++k) {
    buf[k] = static_cast<unsigned char>(std::lround(std::clamp(image[k], 0.0, 1.0) * 255.0));
  }
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

Image read_image(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidInput("cannot open " + path.string());
  const std::string magic = next_token(is);
  if (magic != "P5" && magic != "P6") throw InvalidInput(path.string() + ": only binary PGM/PPM supported");
  const int w = parse_int(next_token(is), path);
  const int h = parse_int(next_token(is), path);
  const int maxval = parse_int(next_token(is), path);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) throw InvalidInput(path.string() + ": unsupported header");
  is.get();
  const int channels = magic == "P6" ? 3 : 1;
  std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * channels);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!is) throw InvalidInput(path.string() + ": truncated pixel data");
  Image img(h, w);
  for (std::size_t k = 0; k < img.size(); ++k) {
    if (channels == 1) {
      img[k] = buf[k] / static_cast<double>(maxval);
    } else {
      const double r = buf[3 * k], g = buf[3 * k + 1], b = buf[3 * k + 2];
      img[k] = (0.299 * r + 0.587 * g + 0.114 * b) / maxval;
    }
  }
  return img;
}

void write_pfm(const Grid<double>& map, const std::filesystem::path& path) {
  static_assert(std::endian::native == std::endian::little, "PFM writer assumes a little-endian host");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "Pf\n" << map.width << ' ' << map.height << "\n-1.0\n";
  for (int i = map.height - 1; i >= 0; --i) {
    for (int j = 0; j < map.width; ++j) {
      const auto v = static_cast<float>(map(i, j));
      os.write(reinterpret_cast<const char*>(&v), sizeof(float));
    }
  }
}

Grid<double> read_pfm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidInput("cannot open " + path.string());
  std::string magic, dims, scale_line;
  std::getline(is, magic);
  if (magic != "Pf") throw InvalidInput(path.string() + ": not a single-channel PFM");
  std::getline(is, dims);
  std::istringstream ds(dims);
  int w = 0, h = 0;
  if (!(ds >> w >> h) || w <= 0 || h <= 0) throw InvalidInput(path.string() + ": bad PFM dimensions");
  std::getline(is, scale_line);
  double scale = 0.0;
  try {
    scale = std::stod(scale_line);
  } catch (const std::exception&) {
    throw InvalidInput(path.string() + ": bad PFM scale");
  }
  const bool little = scale < 0.0;
  Grid<double> out(h, w);
  for (int i = h - 1; i >= 0; --i) {
    for (int j = 0; j < w; ++j) {
      unsigned char b[4];
      is.read(reinterpret_cast<char*>(b), 4);
      if (!is) throw InvalidInput(path.string() + ": truncated PFM data");
      if (!little) std::swap(b[0], b[3]), std::swap(b[1], b[2]);
      float v;
      std::memcpy(&v, b, 4);
      out(i, j) = v;
    }
  }
  return out;
}

}  // namespace photocon
