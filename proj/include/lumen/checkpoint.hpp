#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lumen/common.hpp"
#include "lumen/unet.hpp"

// Checkpoint container: a versioned header with the network configuration
// (including the skip wiring so alternatives stay representable), named
// uint64 scalars for trainer bookkeeping, and named tensors as row-major
// 32-bit little-endian floats. Save/load round-trips are bit-exact.

namespace lumen {

namespace detail {

inline void put_u16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
inline void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}
inline void put_u64(Bytes& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}
inline void put_f32(Bytes& out, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  put_u32(out, u);
}

struct BinReader {
  std::span<const std::uint8_t> buf;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) {
    if (pos + n > buf.size())
      throw IoError(strfmt("checkpoint: truncated %s at byte offset %zu", what, pos));
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = static_cast<std::uint16_t>(buf[pos] | (buf[pos + 1] << 8));
    pos += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  float f32(const char* what) {
    std::uint32_t u = u32(what);
    float f;
    std::memcpy(&f, &u, 4);
    return f;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
    pos += n;
    return s;
  }
};

}  // namespace detail

struct CheckpointTensor {
  std::vector<int> dims;
  std::vector<float> values;
};

struct Checkpoint {
  UNetConfig cfg;
  std::map<std::string, std::uint64_t> scalars;
  std::vector<std::pair<std::string, CheckpointTensor>> tensors;  // ordered

  const CheckpointTensor* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }
};

inline constexpr char kCheckpointMagic[8] = {'L', 'M', 'C', 'K', 'P', 'T', '0', '1'};

inline Bytes serialize_checkpoint(const Checkpoint& ck) {
  Bytes out;
  out.insert(out.end(), kCheckpointMagic, kCheckpointMagic + 8);
  detail::put_u32(out, static_cast<std::uint32_t>(ck.cfg.in_channels));
  detail::put_u32(out, static_cast<std::uint32_t>(ck.cfg.base_width));
  detail::put_u32(out, static_cast<std::uint32_t>(ck.cfg.depth));
  detail::put_u32(out, static_cast<std::uint32_t>(ck.cfg.input_size));
  out.push_back(0);  // skip wiring: 0 = channel concat [up output, encoder skip]
  detail::put_u32(out, static_cast<std::uint32_t>(ck.scalars.size()));
  for (const auto& [name, value] : ck.scalars) {
    detail::put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    detail::put_u64(out, value);
  }
  detail::put_u32(out, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& [name, t] : ck.tensors) {
    detail::put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(static_cast<std::uint8_t>(t.dims.size()));
    std::size_t count = 1;
    for (int d : t.dims) {
      detail::put_u32(out, static_cast<std::uint32_t>(d));
      count *= static_cast<std::size_t>(d);
    }
    if (count != t.values.size())
      throw InvalidArgument(strfmt("checkpoint: tensor '%s' dims/value mismatch", name.c_str()));
    for (float f : t.values) detail::put_f32(out, f);
  }
  return out;
}

inline Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::BinReader in{bytes};
  std::string magic = in.str(8, "magic");
  if (std::memcmp(magic.data(), kCheckpointMagic, 8) != 0)
    throw IoError("checkpoint: bad magic");
  Checkpoint ck;
  ck.cfg.in_channels = static_cast<int>(in.u32("config"));
  ck.cfg.base_width = static_cast<int>(in.u32("config"));
  ck.cfg.depth = static_cast<int>(in.u32("config"));
  ck.cfg.input_size = static_cast<int>(in.u32("config"));
  std::uint8_t skip_mode = 0;
  in.need(1, "config");
  skip_mode = bytes[in.pos++];
  if (skip_mode != 0)
    throw IoError(strfmt("checkpoint: unsupported skip wiring %u", unsigned(skip_mode)));
  std::uint32_t n_scalars = in.u32("scalar count");
  for (std::uint32_t i = 0; i < n_scalars; ++i) {
    std::uint16_t len = in.u16("scalar name");
    std::string name = in.str(len, "scalar name");
    ck.scalars[name] = in.u64("scalar value");
  }
  std::uint32_t n_tensors = in.u32("tensor count");
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::uint16_t len = in.u16("tensor name");
    std::string name = in.str(len, "tensor name");
    in.need(1, "tensor rank");
    std::uint8_t nd = bytes[in.pos++];
    CheckpointTensor t;
    std::size_t count = 1;
    for (std::uint8_t d = 0; d < nd; ++d) {
      t.dims.push_back(static_cast<int>(in.u32("tensor dims")));
      count *= static_cast<std::size_t>(t.dims.back());
    }
    t.values.resize(count);
    for (std::size_t k = 0; k < count; ++k) t.values[k] = in.f32("tensor values");
    ck.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ck;
}

template <class T>
Checkpoint make_checkpoint(UNet<T>& net) {
  Checkpoint ck;
  ck.cfg = net.config();
  for (const auto& ref : net.state()) {
    CheckpointTensor t;
    t.dims = ref.dims;
    t.values.reserve(ref.value->size());
    for (T v : *ref.value) t.values.push_back(static_cast<float>(v));
    ck.tensors.emplace_back(ref.name, std::move(t));
  }
  return ck;
}

template <class T>
void restore_net(UNet<T>& net, const Checkpoint& ck) {
  if (ck.cfg.in_channels != net.config().in_channels ||
      ck.cfg.base_width != net.config().base_width || ck.cfg.depth != net.config().depth)
    throw InvalidArgument("checkpoint: network configuration mismatch");
  for (const auto& ref : net.state()) {
    const CheckpointTensor* t = ck.find(ref.name);
    if (!t) throw IoError(strfmt("checkpoint: missing tensor '%s'", ref.name.c_str()));
    if (t->values.size() != ref.value->size())
      throw IoError(strfmt("checkpoint: tensor '%s' has %zu values, want %zu", ref.name.c_str(),
                           t->values.size(), ref.value->size()));
    for (std::size_t i = 0; i < t->values.size(); ++i)
      (*ref.value)[i] = static_cast<T>(t->values[i]);
  }
}

template <class T>
void save_checkpoint(const std::filesystem::path& path, UNet<T>& net,
                     const std::map<std::string, std::uint64_t>& scalars = {},
                     const std::vector<std::pair<std::string, CheckpointTensor>>& extra = {}) {
  Checkpoint ck = make_checkpoint(net);
  ck.scalars = scalars;
  for (const auto& e : extra) ck.tensors.push_back(e);
  write_file(path, serialize_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Bytes bytes = read_file(path);
  return parse_checkpoint(bytes);
}

}  // namespace lumen
