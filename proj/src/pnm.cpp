#include "mafn/pnm.hpp"

#include <fstream>
#include <stdexcept>

namespace mafn {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error(path + ": " + what);
}

// next whitespace-delimited token, skipping '#' comment lines
std::string next_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(char(c));
  }
  return tok;
}

}  // namespace

PnmImage read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  const std::string magic = next_token(in);
  PnmImage img;
  if (magic == "P6")
    img.channels = 3;
  else if (magic == "P5")
    img.channels = 1;
  else
    fail(path, "not a binary PPM/PGM (magic '" + magic + "')");

  try {
    img.width = std::stoi(next_token(in));
    img.height = std::stoi(next_token(in));
    const int maxval = std::stoi(next_token(in));
    if (maxval != 255) fail(path, "unsupported maxval " + std::to_string(maxval));
  } catch (const std::invalid_argument&) {
    fail(path, "malformed header");
  }
  if (img.width < 1 || img.height < 1) fail(path, "malformed dimensions");

  const size_t n = size_t(img.width) * img.height * img.channels;
  img.pixels.resize(n);
  in.read(reinterpret_cast<char*>(img.pixels.data()), std::streamsize(n));
  if (size_t(in.gcount()) != n) fail(path, "truncated payload");
  return img;
}

namespace {
void write_pnm(const std::string& path, const char* magic, int width, int height,
               int channels, const std::vector<uint8_t>& data) {
  if (int64_t(data.size()) != int64_t(width) * height * channels)
    fail(path, "pixel buffer does not match dimensions");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");
  out << magic << "\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(data.data()), std::streamsize(data.size()));
  if (!out) fail(path, "write failed");
}
}  // namespace

void write_ppm(const std::string& path, int width, int height,
               const std::vector<uint8_t>& rgb) {
  write_pnm(path, "P6", width, height, 3, rgb);
}

void write_pgm(const std::string& path, int width, int height,
               const std::vector<uint8_t>& gray) {
  write_pnm(path, "P5", width, height, 1, gray);
}

}  // namespace mafn
