#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sparta {

// Binary PGM (P5), maxval 255, row-major. Zero dependencies, bit-exact
// output for diffing in tests.
std::string encode_pgm(const std::vector<uint8_t>& pixels, int width, int height);
void write_pgm(const std::string& path, const std::vector<uint8_t>& pixels, int width, int height);

// Linear [lo, hi] -> [0, 255] quantization; a flat map renders black.
std::vector<uint8_t> quantize_gray(const std::vector<double>& values);

void write_text_file(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

} // namespace sparta
