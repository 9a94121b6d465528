#pragma once

// Acoustic feature maps, domain codes, the synthetic multi-speaker corpus,
// batch sampling and the on-disk feature format.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ssvc/random.hpp"

namespace ssvc {

// 1-based speaker identifier.
struct DomainCode {
  int id = 1;

  void validate(int n_domains) const {
    if (id < 1 || id > n_domains) {
      throw std::invalid_argument("domain code " + std::to_string(id) +
                                  " outside 1.." + std::to_string(n_domains));
    }
  }
  friend bool operator==(DomainCode, DomainCode) = default;
};

// Ordered (source, target). source == target is a valid identity pair.
struct DomainPair {
  DomainCode source;
  DomainCode target;

  void validate(int n_domains) const {
    source.validate(n_domains);
    target.validate(n_domains);
  }
  // Row of an N*N parameter table.
  std::size_t index(int n_domains) const {
    return static_cast<std::size_t>((source.id - 1) * n_domains + (target.id - 1));
  }
  friend bool operator==(DomainPair, DomainPair) = default;
};

// The 4 x 3 source != target combinations (plus identities on request),
// ordered by source then target.
inline std::vector<DomainPair> conversion_pairs(int n_domains, bool include_identity = false) {
  std::vector<DomainPair> pairs;
  for (int s = 1; s <= n_domains; ++s) {
    for (int t = 1; t <= n_domains; ++t) {
      if (s != t || include_identity) pairs.push_back({{s}, {t}});
    }
  }
  return pairs;
}

class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(std::size_t n_mcep, std::size_t n_frames, DomainCode domain = {})
      : n_mcep_(n_mcep), n_frames_(n_frames), domain_(domain), data_(n_mcep * n_frames, 0.0) {
    if (n_mcep == 0 || n_frames == 0) {
      throw std::invalid_argument("feature map needs n_mcep >= 1 and n_frames >= 1");
    }
  }
  FeatureMap(std::size_t n_mcep, std::size_t n_frames, std::vector<double> data,
             DomainCode domain = {})
      : n_mcep_(n_mcep), n_frames_(n_frames), domain_(domain), data_(std::move(data)) {
    if (n_mcep == 0 || n_frames == 0) {
      throw std::invalid_argument("feature map needs n_mcep >= 1 and n_frames >= 1");
    }
    if (data_.size() != n_mcep * n_frames) {
      throw std::invalid_argument("feature map data size does not match its shape");
    }
  }

  std::size_t n_mcep() const { return n_mcep_; }
  std::size_t n_frames() const { return n_frames_; }
  DomainCode domain() const { return domain_; }
  void set_domain(DomainCode d) { domain_ = d; }

  double& at(std::size_t dim, std::size_t frame) { return data_[dim * n_frames_ + frame]; }
  double at(std::size_t dim, std::size_t frame) const { return data_[dim * n_frames_ + frame]; }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  bool same_shape(const FeatureMap& o) const {
    return n_mcep_ == o.n_mcep_ && n_frames_ == o.n_frames_;
  }
  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  std::size_t n_mcep_ = 0;
  std::size_t n_frames_ = 0;
  DomainCode domain_{};
  std::vector<double> data_;
};

// FNV-1a over the payload bytes; used to check train/eval disjointness.
inline std::uint64_t content_hash(const FeatureMap& m) {
  std::uint64_t h = 1469598103934665603ULL;
  auto bytes = std::as_bytes(m.data());
  for (std::byte b : bytes) {
    h ^= static_cast<std::uint64_t>(b);
    h *= 1099511628211ULL;
  }
  return h;
}

struct Dataset {
  int n_domains = 0;
  std::vector<FeatureMap> items;

  bool empty() const { return items.empty(); }
  std::vector<std::size_t> indices_of(DomainCode d) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (items[i].domain() == d) out.push_back(i);
    }
    return out;
  }
};

struct SynthConfig {
  int n_domains = 4;
  std::size_t n_mcep = 16;
  std::size_t n_frames = 64;
  std::size_t train_per_domain = 80;
  std::size_t eval_per_domain = 30;
  std::uint64_t seed = 7;
  double prototype_smoothness = 1.5;  // Gaussian kernel width, in cepstral bins
  double noise_scale = 0.25;          // marginal std of the AR(1) noise
  double gain_spread = 0.1;           // per-utterance gain in [1-s, 1+s]

  void validate() const {
    if (n_domains < 1 || n_mcep < 1 || n_frames < 1 || train_per_domain < 1 ||
        eval_per_domain < 1) {
      throw std::invalid_argument("synthetic dataset counts must be positive");
    }
    if (!(prototype_smoothness > 0.0) || noise_scale < 0.0 || gain_spread < 0.0 ||
        gain_spread >= 1.0) {
      throw std::invalid_argument("synthetic dataset scales out of range");
    }
  }
};

struct SynthData {
  Dataset train;
  Dataset eval;
  std::vector<FeatureMap> prototypes;  // index d-1 holds domain d
};

inline constexpr double kArCoefficient = 0.9;

namespace detail {
// Values are kept representable in the 32-bit file payload so a generated
// corpus survives a save/load round trip unchanged.
inline double to_float_grid(double v) { return static_cast<double>(static_cast<float>(v)); }

inline std::vector<double> smooth_envelope(Rng& rng, std::size_t n, double width) {
  std::vector<double> raw(n);
  for (auto& r : raw) r = normal(rng);
  std::vector<double> env(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0, norm = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double d = (double(i) - double(j)) / width;
      double w = std::exp(-0.5 * d * d);
      acc += w * raw[j];
      norm += w;
    }
    env[i] = acc / norm;
  }
  double ms = 0.0;
  for (double v : env) ms += v * v;
  double rms = std::sqrt(ms / double(n));
  if (rms > 0.0) {
    for (auto& v : env) v /= rms;
  }
  return env;
}

inline FeatureMap synth_utterance(Rng& rng, const FeatureMap& proto, const SynthConfig& cfg) {
  FeatureMap x(cfg.n_mcep, cfg.n_frames, proto.domain());
  const double gain = 1.0 + uniform(rng, -cfg.gain_spread, cfg.gain_spread);
  const double innovation = std::sqrt(1.0 - kArCoefficient * kArCoefficient) * cfg.noise_scale;
  for (std::size_t d = 0; d < cfg.n_mcep; ++d) {
    double n = cfg.noise_scale * normal(rng);
    for (std::size_t t = 0; t < cfg.n_frames; ++t) {
      if (t > 0) n = kArCoefficient * n + innovation * normal(rng);
      x.at(d, t) = to_float_grid(gain * proto.at(d, 0) + n);
    }
  }
  return x;
}
}  // namespace detail

inline SynthData synth_dataset(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  SynthData out;
  out.train.n_domains = cfg.n_domains;
  out.eval.n_domains = cfg.n_domains;
  for (int d = 1; d <= cfg.n_domains; ++d) {
    auto env = detail::smooth_envelope(rng, cfg.n_mcep, cfg.prototype_smoothness);
    FeatureMap proto(cfg.n_mcep, cfg.n_frames, DomainCode{d});
    for (std::size_t i = 0; i < cfg.n_mcep; ++i) {
      for (std::size_t t = 0; t < cfg.n_frames; ++t) proto.at(i, t) = detail::to_float_grid(env[i]);
    }
    out.prototypes.push_back(std::move(proto));
  }
  for (const auto& proto : out.prototypes) {
    for (std::size_t u = 0; u < cfg.train_per_domain; ++u) {
      out.train.items.push_back(detail::synth_utterance(rng, proto, cfg));
    }
  }
  for (const auto& proto : out.prototypes) {
    for (std::size_t u = 0; u < cfg.eval_per_domain; ++u) {
      out.eval.items.push_back(detail::synth_utterance(rng, proto, cfg));
    }
  }
  return out;
}

struct BatchItem {
  FeatureMap x;
  DomainPair pair;  // source = x's domain, target uniform over 1..N
};

inline std::vector<BatchItem> sample_batch(const Dataset& dataset, std::size_t batch_size, Rng& rng) {
  if (dataset.empty()) throw std::invalid_argument("cannot sample from an empty dataset");
  if (batch_size < 1) throw std::invalid_argument("batch size must be at least 1");
  std::vector<BatchItem> batch;
  batch.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    const auto& x = dataset.items[uniform_index(rng, dataset.items.size())];
    DomainCode target{1 + static_cast<int>(uniform_index(rng, std::uint64_t(dataset.n_domains)))};
    batch.push_back({x, {x.domain(), target}});
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Feature file I/O
//
// Little-endian: "SSVC", u8 version (1), u16 domain, u32 n_mcep, u32 n_frames,
// then n_mcep * n_frames float32, cepstral dimension outer.

class feature_io_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class feature_format_error : public feature_io_error {
 public:
  using feature_io_error::feature_io_error;
};
class feature_truncated_error : public feature_io_error {
 public:
  using feature_io_error::feature_io_error;
};
class feature_shape_overflow_error : public feature_io_error {
 public:
  using feature_io_error::feature_io_error;
};

inline constexpr std::array<char, 4> kFeatureMagic{'S', 'S', 'V', 'C'};
inline constexpr std::uint8_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 15;
inline constexpr std::uint64_t kMaxFeatureElements = std::uint64_t{1} << 28;

namespace detail {
template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
template <typename U>
U get_le(const unsigned char* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}
}  // namespace detail

inline std::string encode_features(const FeatureMap& m) {
  if (m.n_mcep() > std::numeric_limits<std::uint32_t>::max() ||
      m.n_frames() > std::numeric_limits<std::uint32_t>::max() ||
      m.domain().id < 0 || m.domain().id > 0xFFFF) {
    throw feature_shape_overflow_error("feature map does not fit the file header");
  }
  std::string out(kFeatureMagic.begin(), kFeatureMagic.end());
  out.push_back(static_cast<char>(kFeatureVersion));
  detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(m.domain().id));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.n_mcep()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.n_frames()));
  out.reserve(out.size() + 4 * m.data().size());
  for (double v : m.data()) {
    detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

inline FeatureMap decode_features(std::string_view bytes) {
  if (bytes.size() < kFeatureMagic.size() ||
      !std::equal(kFeatureMagic.begin(), kFeatureMagic.end(), bytes.begin())) {
    throw feature_format_error("bad magic: not an SSVC feature file");
  }
  if (bytes.size() < kFeatureHeaderBytes) throw feature_truncated_error("truncated header");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (p[4] != kFeatureVersion) {
    throw feature_format_error("unsupported feature file version " + std::to_string(p[4]));
  }
  const auto domain = detail::get_le<std::uint16_t>(p + 5);
  const auto n_mcep = detail::get_le<std::uint32_t>(p + 7);
  const auto n_frames = detail::get_le<std::uint32_t>(p + 11);
  if (n_mcep == 0 || n_frames == 0) throw feature_format_error("zero-sized feature map");
  const std::uint64_t count = std::uint64_t{n_mcep} * n_frames;
  if (count > kMaxFeatureElements) {
    throw feature_shape_overflow_error("declared shape " + std::to_string(n_mcep) + "x" +
                                       std::to_string(n_frames) + " exceeds the element limit");
  }
  const std::uint64_t need = kFeatureHeaderBytes + 4 * count;
  if (bytes.size() < need) {
    throw feature_truncated_error("payload holds " + std::to_string(bytes.size() - kFeatureHeaderBytes) +
                                  " bytes, header declares " + std::to_string(4 * count));
  }
  if (bytes.size() > need) throw feature_format_error("trailing bytes after payload");
  std::vector<double> data(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    data[i] = std::bit_cast<float>(detail::get_le<std::uint32_t>(p + kFeatureHeaderBytes + 4 * i));
  }
  return FeatureMap(n_mcep, n_frames, std::move(data), DomainCode{domain});
}

inline void save_features(const std::filesystem::path& path, const FeatureMap& m) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw feature_io_error("cannot open " + path.string() + " for writing");
  auto bytes = encode_features(m);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw feature_io_error("failed writing " + path.string());
}

inline FeatureMap load_features(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw feature_io_error("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_features(bytes);
}

// Manifest: one feature-file path per line; relative paths resolve against
// the manifest's directory.
inline void write_manifest(const std::filesystem::path& path,
                           const std::vector<std::filesystem::path>& files) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw feature_io_error("cannot open " + path.string() + " for writing");
  for (const auto& f : files) os << f.generic_string() << '\n';
  if (!os) throw feature_io_error("failed writing " + path.string());
}

inline std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw feature_io_error("cannot open manifest " + path.string());
  std::vector<std::filesystem::path> out;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::filesystem::path p(line);
    out.push_back(p.is_absolute() ? p : path.parent_path() / p);
  }
  return out;
}

inline Dataset load_dataset(const std::filesystem::path& manifest, int n_domains) {
  Dataset ds;
  ds.n_domains = n_domains;
  for (const auto& f : read_manifest(manifest)) {
    auto m = load_features(f);
    m.domain().validate(n_domains);
    ds.items.push_back(std::move(m));
  }
  return ds;
}

}  // namespace ssvc
