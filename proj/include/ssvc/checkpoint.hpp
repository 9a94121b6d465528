#pragma once

// Checkpoint container.
//
// Little-endian layout:
//   "SSVC-CKPT1"                       10 bytes
//   u32 length, config text            key = value lines (run configuration echo)
//   u32 length, state text             key = value lines (counters, rng states)
//   u32 array count, then per array:
//     u32 name length, name bytes, u32 rank, rank x u64 dims, f64 payload

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssvc/features.hpp"

namespace ssvc {

inline constexpr std::string_view kCheckpointMagic = "SSVC-CKPT1";

class checkpoint_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedArray {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<double> values;
};

struct Checkpoint {
  std::string config_text;
  std::string state_text;
  std::vector<NamedArray> arrays;

  const NamedArray& array(const std::string& name) const {
    for (const auto& a : arrays) {
      if (a.name == name) return a;
    }
    throw checkpoint_error("checkpoint has no array named " + name);
  }
  bool has_array(const std::string& name) const {
    for (const auto& a : arrays) {
      if (a.name == name) return true;
    }
    return false;
  }
};

inline std::string encode_checkpoint(const Checkpoint& ck) {
  std::string out(kCheckpointMagic);
  auto put_text = [&](const std::string& s) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out += s;
  };
  put_text(ck.config_text);
  put_text(ck.state_text);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ck.arrays.size()));
  for (const auto& a : ck.arrays) {
    std::uint64_t n = 1;
    for (auto d : a.shape) n *= d;
    if (n != a.values.size()) throw checkpoint_error("array " + a.name + " shape/payload mismatch");
    put_text(a.name);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) detail::put_le<std::uint64_t>(out, d);
    for (double v : a.values) detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

inline Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
    throw checkpoint_error("bad magic: not an SSVC checkpoint");
  }
  std::size_t pos = kCheckpointMagic.size();
  auto need = [&](std::uint64_t n) {
    if (bytes.size() - pos < n) throw checkpoint_error("truncated checkpoint");
  };
  auto p = [&] { return reinterpret_cast<const unsigned char*>(bytes.data()) + pos; };
  auto get_u32 = [&] {
    need(4);
    auto v = detail::get_le<std::uint32_t>(p());
    pos += 4;
    return v;
  };
  auto get_u64 = [&] {
    need(8);
    auto v = detail::get_le<std::uint64_t>(p());
    pos += 8;
    return v;
  };
  auto get_text = [&] {
    auto n = get_u32();
    need(n);
    std::string s(bytes.substr(pos, n));
    pos += n;
    return s;
  };
  Checkpoint ck;
  ck.config_text = get_text();
  ck.state_text = get_text();
  const auto count = get_u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = get_text();
    const auto rank = get_u32();
    std::uint64_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      a.shape.push_back(get_u64());
      if (a.shape.back() != 0 && n > (std::uint64_t{1} << 40) / a.shape.back()) {
        throw checkpoint_error("array " + a.name + " shape overflows");
      }
      n *= a.shape.back();
    }
    need(8 * n);
    a.values.resize(n);
    for (auto& v : a.values) v = std::bit_cast<double>(get_u64());
    ck.arrays.push_back(std::move(a));
  }
  if (pos != bytes.size()) throw checkpoint_error("trailing bytes in checkpoint");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw checkpoint_error("cannot open " + path.string() + " for writing");
  auto bytes = encode_checkpoint(ck);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw checkpoint_error("failed writing " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw checkpoint_error("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace ssvc
