#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include "lumen/common.hpp"
#include "lumen/image.hpp"

namespace lumen {

// Binary P6, maxval 255. Quantization is round-half-away-from-zero so the
// emitted bytes are identical across platforms.
inline Bytes write_ldr_ppm(const LdrImage& img) {
  validate(img, "write_ldr_ppm");
  std::string header = strfmt("P6\n%d %d\n255\n", img.width, img.height);
  Bytes out(header.begin(), header.end());
  out.reserve(out.size() + img.data.size());
  for (float v : img.data) {
    double q = std::floor(static_cast<double>(v) * 255.0 + 0.5);
    if (q > 255.0) q = 255.0;
    out.push_back(static_cast<std::uint8_t>(q));
  }
  return out;
}

inline LdrImage read_ldr_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto token = [&]() -> std::string {
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {  // comment line
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) ++pos;
    if (start == pos) throw IoError(strfmt("ppm: truncated header at byte offset %zu", start));
    return std::string(bytes.begin() + start, bytes.begin() + pos);
  };

  if (token() != "P6") throw IoError("ppm: bad magic (binary P6 expected)");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw IoError("ppm: malformed header");
  }
  if (w < 1 || h < 1) throw IoError(strfmt("ppm: invalid dimensions %dx%d", w, h));
  if (maxval != 255) throw IoError(strfmt("ppm: unsupported maxval %d (255 only)", maxval));
  ++pos;  // single whitespace after maxval
  std::size_t need = static_cast<std::size_t>(w) * h * 3;
  if (pos + need > bytes.size())
    throw IoError(strfmt("ppm: truncated pixel data at byte offset %zu", pos));
  LdrImage img(w, h);
  for (std::size_t i = 0; i < need; ++i)
    img.data[i] = static_cast<float>(bytes[pos + i]) / 255.0f;
  return img;
}

}  // namespace lumen
