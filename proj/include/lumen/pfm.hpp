#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>

#include "lumen/common.hpp"
#include "lumen/image.hpp"

// Portable FloatMap, the lossless interchange format used by the tests and
// the dataset writer. Binary "PF" RGB only; scanlines bottom-up; the scale
// line's sign selects endianness.

namespace lumen {

namespace detail {

inline std::string pfm_token(std::span<const std::uint8_t> buf, std::size_t& pos) {
  while (pos < buf.size() && std::isspace(buf[pos])) ++pos;
  std::size_t start = pos;
  while (pos < buf.size() && !std::isspace(buf[pos])) ++pos;
  if (start == pos) throw IoError(strfmt("pfm: truncated header at byte offset %zu", start));
  return std::string(buf.begin() + start, buf.begin() + pos);
}

inline std::uint32_t byteswap32(std::uint32_t v) {
  return ((v & 0xff000000u) >> 24) | ((v & 0x00ff0000u) >> 8) | ((v & 0x0000ff00u) << 8) |
         ((v & 0x000000ffu) << 24);
}

template <class ImageT>
Bytes write_pfm_impl(const ImageT& img) {
  std::string header = strfmt("PF\n%d %d\n-1.0\n", img.width, img.height);
  Bytes out(header.begin(), header.end());
  out.reserve(out.size() + img.data.size() * 4);
  // bottom-up scanline order per the format convention
  for (int y = img.height - 1; y >= 0; --y) {
    const float* row = img.px(0, y);
    const auto* raw = reinterpret_cast<const std::uint8_t*>(row);
    std::size_t n = static_cast<std::size_t>(img.width) * 3 * 4;
    if constexpr (std::endian::native == std::endian::big) {
      for (std::size_t i = 0; i < n; i += 4) {
        out.push_back(raw[i + 3]);
        out.push_back(raw[i + 2]);
        out.push_back(raw[i + 1]);
        out.push_back(raw[i + 0]);
      }
    } else {
      out.insert(out.end(), raw, raw + n);
    }
  }
  return out;
}

template <class ImageT>
ImageT read_pfm_impl(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  std::string magic = detail::pfm_token(bytes, pos);
  if (magic == "Pf")
    throw IoError("pfm: grayscale 'Pf' images are not supported (RGB 'PF' only)");
  if (magic != "PF")
    throw IoError(strfmt("pfm: bad magic '%s' at byte offset 0", magic.substr(0, 16).c_str()));
  int w = 0, h = 0;
  try {
    w = std::stoi(detail::pfm_token(bytes, pos));
    h = std::stoi(detail::pfm_token(bytes, pos));
  } catch (const std::exception&) {
    throw IoError("pfm: malformed dimensions");
  }
  if (w < 1 || h < 1) throw IoError(strfmt("pfm: invalid dimensions %dx%d", w, h));
  std::size_t scale_at = pos;
  double scale = 0.0;
  try {
    scale = std::stod(detail::pfm_token(bytes, pos));
  } catch (const std::exception&) {
    throw IoError(strfmt("pfm: malformed scale at byte offset %zu", scale_at));
  }
  if (scale == 0.0) throw IoError("pfm: zero scale");
  ++pos;  // single whitespace byte after the scale line
  const bool little = scale < 0.0;

  ImageT img(w, h);
  std::size_t need = static_cast<std::size_t>(w) * h * 3 * 4;
  if (pos + need > bytes.size())
    throw IoError(strfmt("pfm: truncated pixel data at byte offset %zu (need %zu bytes)",
                         pos, need));
  for (int y = h - 1; y >= 0; --y) {
    float* row = img.px(0, y);
    for (int i = 0; i < w * 3; ++i) {
      std::uint32_t u;
      std::memcpy(&u, bytes.data() + pos, 4);
      pos += 4;
      const bool host_little = std::endian::native == std::endian::little;
      if (little != host_little) u = detail::byteswap32(u);
      float f;
      std::memcpy(&f, &u, 4);
      row[i] = f;
    }
  }
  return img;
}

}  // namespace detail

// Corrupt radiance data fails loudly: non-finite or negative floats are
// rejected, not clamped.
inline HdrImage read_pfm(std::span<const std::uint8_t> bytes) {
  HdrImage img = detail::read_pfm_impl<HdrImage>(bytes);
  for (float v : img.data)
    if (!std::isfinite(v) || v < 0.0f)
      throw IoError(strfmt("pfm: component %g outside [0, inf)", v));
  return img;
}

inline Bytes write_pfm(const HdrImage& img) {
  validate(img, "write_pfm");
  return detail::write_pfm_impl(img);
}

// LDR variant used for dataset pairs; components must be in [0,1].
inline LdrImage read_pfm_ldr(std::span<const std::uint8_t> bytes) {
  LdrImage img = detail::read_pfm_impl<LdrImage>(bytes);
  validate(img, "read_pfm_ldr");
  return img;
}

inline Bytes write_pfm(const LdrImage& img) {
  validate(img, "write_pfm");
  return detail::write_pfm_impl(img);
}

}  // namespace lumen
