#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>

#include "lumen/common.hpp"
#include "lumen/image.hpp"

// Radiance RGBE codec. Pixels are stored as three 8-bit mantissas sharing one
// 8-bit exponent: component = mantissa * 2^(e-136), and e == 0 encodes exact
// zero. Scanlines are either flat RGBE quadruples or the new-style adaptive
// RLE used for widths in [8, 32767].

namespace lumen {

struct RgbePixel {
  std::uint8_t r = 0, g = 0, b = 0, e = 0;
  bool operator==(const RgbePixel&) const = default;
};

inline void decode_rgbe(RgbePixel p, float& r, float& g, float& b) {
  if (p.e == 0) {
    r = g = b = 0.0f;
    return;
  }
  float scale = std::ldexp(1.0f, static_cast<int>(p.e) - 136);
  r = p.r * scale;
  g = p.g * scale;
  b = p.b * scale;
}

inline RgbePixel encode_rgbe(float r, float g, float b) {
  float v = r > g ? r : g;
  if (b > v) v = b;
  if (!(v > 0.0f)) return {0, 0, 0, 0};
  int ex = 0;
  float f = std::frexp(v, &ex);  // v = f * 2^ex, f in [0.5, 1)
  if (ex > 127) {                // brighter than the format can carry
    return {255, 255, 255, 255};
  }
  if (ex < -127) return {0, 0, 0, 0};
  (void)f;
  float scale = std::ldexp(1.0f, 8 - ex);  // mantissa = c * 2^(8-ex)
  RgbePixel p;
  p.r = static_cast<std::uint8_t>(r * scale);
  p.g = static_cast<std::uint8_t>(g * scale);
  p.b = static_cast<std::uint8_t>(b * scale);
  p.e = static_cast<std::uint8_t>(ex + 128);
  return p;
}

namespace detail {

// Byte cursor that reports offsets in diagnostics.
struct ByteReader {
  std::span<const std::uint8_t> buf;
  std::size_t pos = 0;

  std::uint8_t u8(const char* ctx) {
    if (pos >= buf.size())
      throw IoError(strfmt("radiance: truncated %s at byte offset %zu", ctx, pos));
    return buf[pos++];
  }
  void bytes(std::uint8_t* dst, std::size_t n, const char* ctx) {
    if (pos + n > buf.size())
      throw IoError(strfmt("radiance: truncated %s at byte offset %zu", ctx, pos));
    std::memcpy(dst, buf.data() + pos, n);
    pos += n;
  }
  // Reads through the next '\n'; header lines only.
  std::string line(const char* ctx) {
    std::string out;
    for (;;) {
      char c = static_cast<char>(u8(ctx));
      if (c == '\n') return out;
      out.push_back(c);
      if (out.size() > 4096)
        throw IoError(strfmt("radiance: unterminated %s at byte offset %zu", ctx, pos));
    }
  }
};

inline void read_rle_component(ByteReader& in, std::uint8_t* row, int width) {
  int pos = 0;
  while (pos < width) {
    std::size_t at = in.pos;
    std::uint8_t count = in.u8("RLE scanline");
    if (count > 128) {
      int run = count - 128;
      std::uint8_t value = in.u8("RLE scanline");
      if (pos + run > width)
        throw IoError(strfmt("radiance: RLE run overruns row at byte offset %zu", at));
      for (int i = 0; i < run; ++i) row[pos++] = value;
    } else {
      if (count == 0)
        throw IoError(strfmt("radiance: zero-length RLE literal at byte offset %zu", at));
      if (pos + count > width)
        throw IoError(strfmt("radiance: RLE run overruns row at byte offset %zu", at));
      in.bytes(row + pos, count, "RLE scanline");
      pos += count;
    }
  }
}

inline void write_rle_component(Bytes& out, const std::uint8_t* data, int n) {
  constexpr int kMinRun = 4;
  int cur = 0;
  while (cur < n) {
    int beg = cur;
    int run = 0, old_run = 0;
    while (run < kMinRun && beg < n) {
      beg += run;
      old_run = run;
      run = 1;
      while (beg + run < n && run < 127 && data[beg] == data[beg + run]) run++;
    }
    // short run just before a long one
    if (old_run > 1 && old_run == beg - cur) {
      out.push_back(static_cast<std::uint8_t>(128 + old_run));
      out.push_back(data[cur]);
      cur = beg;
    }
    while (cur < beg) {
      int lit = beg - cur;
      if (lit > 128) lit = 128;
      out.push_back(static_cast<std::uint8_t>(lit));
      out.insert(out.end(), data + cur, data + cur + lit);
      cur += lit;
    }
    if (run >= kMinRun) {
      out.push_back(static_cast<std::uint8_t>(128 + run));
      out.push_back(data[beg]);
      cur = beg + run;
    }
  }
}

}  // namespace detail

inline HdrImage read_radiance_hdr(std::span<const std::uint8_t> bytes) {
  detail::ByteReader in{bytes};
  std::string sig = in.line("signature");
  if (sig != "#?RADIANCE" && sig != "#?RGBE")
    throw IoError(strfmt("radiance: malformed signature '%s' at byte offset 0",
                         sig.substr(0, 32).c_str()));

  // Header variables until the blank line. EXPOSURE and friends are parsed
  // and ignored; pixel values are treated as relative radiance.
  for (;;) {
    std::size_t at = in.pos;
    std::string line = in.line("header");
    if (line.empty()) break;
    if (line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    if (key == "FORMAT" && value != "32-bit_rle_rgbe")
      throw IoError(strfmt("radiance: unsupported FORMAT '%s' at byte offset %zu",
                           value.c_str(), at));
  }

  std::size_t res_at = in.pos;
  std::string res = in.line("resolution line");
  int w = 0, h = 0;
  if (std::sscanf(res.c_str(), "-Y %d +X %d", &h, &w) != 2 || w < 1 || h < 1)
    throw IoError(strfmt("radiance: unsupported resolution line '%s' at byte offset %zu",
                         res.c_str(), res_at));

  HdrImage img(w, h);
  std::vector<std::uint8_t> comp(static_cast<std::size_t>(w) * 4);
  for (int y = 0; y < h; ++y) {
    bool rle = false;
    RgbePixel first{};
    if (w >= 8 && w <= 32767) {
      std::uint8_t hdr4[4];
      in.bytes(hdr4, 4, "scanline header");
      if (hdr4[0] == 2 && hdr4[1] == 2) {
        int len = (hdr4[2] << 8) | hdr4[3];
        if (len != w)
          throw IoError(strfmt("radiance: RLE scanline length %d != width %d at byte offset %zu",
                               len, w, in.pos - 4));
        rle = true;
      } else {
        first = {hdr4[0], hdr4[1], hdr4[2], hdr4[3]};
      }
    }
    if (rle) {
      for (int c = 0; c < 4; ++c)
        detail::read_rle_component(in, comp.data() + static_cast<std::size_t>(c) * w, w);
      for (int x = 0; x < w; ++x) {
        RgbePixel p{comp[x], comp[w + x], comp[2 * w + x], comp[3 * w + x]};
        decode_rgbe(p, img.px(x, y)[0], img.px(x, y)[1], img.px(x, y)[2]);
      }
    } else {
      for (int x = 0; x < w; ++x) {
        RgbePixel p;
        if (x == 0 && w >= 8 && w <= 32767) {
          p = first;  // consumed while probing for the RLE marker
        } else {
          std::uint8_t q[4];
          in.bytes(q, 4, "flat scanline");
          p = {q[0], q[1], q[2], q[3]};
        }
        decode_rgbe(p, img.px(x, y)[0], img.px(x, y)[1], img.px(x, y)[2]);
      }
    }
  }
  return img;
}

inline Bytes write_radiance_hdr(const HdrImage& img) {
  validate(img, "write_radiance_hdr");
  Bytes out;
  std::string header = strfmt("#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y %d +X %d\n",
                              img.height, img.width);
  out.insert(out.end(), header.begin(), header.end());

  const int w = img.width;
  const bool rle = w >= 8 && w <= 32767;
  std::vector<std::uint8_t> comp(static_cast<std::size_t>(w) * 4);
  for (int y = 0; y < img.height; ++y) {
    if (rle) {
      out.push_back(2);
      out.push_back(2);
      out.push_back(static_cast<std::uint8_t>(w >> 8));
      out.push_back(static_cast<std::uint8_t>(w & 0xff));
      for (int x = 0; x < w; ++x) {
        const float* p = img.px(x, y);
        RgbePixel q = encode_rgbe(p[0], p[1], p[2]);
        comp[x] = q.r;
        comp[w + x] = q.g;
        comp[2 * w + x] = q.b;
        comp[3 * w + x] = q.e;
      }
      for (int c = 0; c < 4; ++c)
        detail::write_rle_component(out, comp.data() + static_cast<std::size_t>(c) * w, w);
    } else {
      for (int x = 0; x < w; ++x) {
        const float* p = img.px(x, y);
        RgbePixel q = encode_rgbe(p[0], p[1], p[2]);
        out.push_back(q.r);
        out.push_back(q.g);
        out.push_back(q.b);
        out.push_back(q.e);
      }
    }
  }
  return out;
}

}  // namespace lumen
