#pragma once

#include <string>

#include "gdip/tensor.hpp"

namespace gdip {

// Binary PPM (P6, maxval 255). 8-bit -> float is v/255, float -> 8-bit is
// round(clamp(v,0,1)*255); a write/read round trip is bit-exact.
Image read_ppm(const std::string& path);
void write_ppm(const Image& img, const std::string& path);

Image read_png(const std::string& path);
void write_png(const Image& img, const std::string& path);

// Dispatch on extension (.ppm / .png).
Image read_image(const std::string& path);
void write_image(const Image& img, const std::string& path);

}  // namespace gdip
