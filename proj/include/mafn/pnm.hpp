#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Binary PPM (P6) / PGM (P5) with maxval 255: ASCII header, raw payload.

namespace mafn {

struct PnmImage {
  int width = 0;
  int height = 0;
  int channels = 1;                // 1 = PGM, 3 = PPM
  std::vector<uint8_t> pixels;     // row-major, interleaved
};

PnmImage read_pnm(const std::string& path);
void write_ppm(const std::string& path, int width, int height,
               const std::vector<uint8_t>& rgb);
void write_pgm(const std::string& path, int width, int height,
               const std::vector<uint8_t>& gray);

}  // namespace mafn
