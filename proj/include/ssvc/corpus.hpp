#pragma once

// On-disk corpus layout:
//   <dir>/train/dD_uNNN.ssvc, <dir>/eval/dD_uNNN.ssvc, <dir>/prototypes/dD.ssvc
//   <dir>/train.list, <dir>/eval.list, <dir>/prototypes.list  (relative paths)

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "ssvc/features.hpp"
#include "ssvc/trainer.hpp"

namespace ssvc {

namespace detail {

inline std::vector<std::filesystem::path> write_split(const std::filesystem::path& dir,
                                                      const std::string& split,
                                                      const std::vector<FeatureMap>& items) {
  std::filesystem::create_directories(dir / split);
  std::vector<std::filesystem::path> rel;
  std::vector<std::size_t> per_domain;
  for (const auto& m : items) {
    const auto d = std::size_t(m.domain().id);
    if (per_domain.size() <= d) per_domain.resize(d + 1, 0);
    char name[64];
    std::snprintf(name, sizeof name, "d%zu_u%03zu.ssvc", d, per_domain[d]++);
    auto r = std::filesystem::path(split) / name;
    save_features(dir / r, m);
    rel.push_back(r);
  }
  write_manifest(dir / (split + ".list"), rel);
  return rel;
}

}  // namespace detail

inline void write_corpus(const std::filesystem::path& dir, const TrainData& data) {
  std::filesystem::create_directories(dir);
  detail::write_split(dir, "train", data.train.items);
  detail::write_split(dir, "eval", data.eval.items);
  std::filesystem::create_directories(dir / "prototypes");
  std::vector<std::filesystem::path> rel;
  for (const auto& p : data.prototypes) {
    auto r = std::filesystem::path("prototypes") / ("d" + std::to_string(p.domain().id) + ".ssvc");
    save_features(dir / r, p);
    rel.push_back(r);
  }
  write_manifest(dir / "prototypes.list", rel);
}

inline TrainData load_corpus(const std::filesystem::path& dir, int n_domains) {
  TrainData data;
  data.train = load_dataset(dir / "train.list", n_domains);
  data.eval = load_dataset(dir / "eval.list", n_domains);
  Dataset protos = load_dataset(dir / "prototypes.list", n_domains);
  data.prototypes.resize(std::size_t(n_domains));
  std::vector<bool> seen(std::size_t(n_domains), false);
  for (auto& p : protos.items) {
    const auto i = std::size_t(p.domain().id - 1);
    if (seen[i]) throw feature_io_error("two prototypes for domain " + std::to_string(i + 1));
    seen[i] = true;
    data.prototypes[i] = std::move(p);
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) throw feature_io_error("no prototype for domain " + std::to_string(i + 1));
  }
  data.validate();
  return data;
}

}  // namespace ssvc
