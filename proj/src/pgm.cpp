#include "sparta/pgm.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "sparta/errors.hpp"

namespace sparta {

std::string encode_pgm(const std::vector<uint8_t>& pixels, int width, int height) {
    if (width <= 0 || height <= 0 || pixels.size() != static_cast<size_t>(width) * height)
        throw ValidationError("encode_pgm: pixel buffer does not match geometry");
    std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
    return out;
}

void write_pgm(const std::string& path, const std::vector<uint8_t>& pixels, int width,
               int height) {
    write_text_file(path, encode_pgm(pixels, width, height));
}

std::vector<uint8_t> quantize_gray(const std::vector<double>& values) {
    std::vector<uint8_t> out(values.size(), 0);
    if (values.empty()) return out;
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it, hi = *hi_it;
    if (hi <= lo) return out;
    const double scale = 255.0 / (hi - lo);
    for (size_t i = 0; i < values.size(); ++i)
        out[i] = static_cast<uint8_t>(std::min(255.0, std::max(0.0, (values[i] - lo) * scale + 0.5)));
    return out;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("short write to " + path);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace sparta
