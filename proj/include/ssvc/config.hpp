#pragma once

// Run configuration: plain "key = value" text covering the synthetic data,
// network, mask, loss and training settings. Unknown and repeated keys are
// rejected; absent keys take their defaults. echo() writes every key with
// its resolved value so that parsing the echo reproduces the configuration.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "ssvc/augment.hpp"
#include "ssvc/features.hpp"
#include "ssvc/networks.hpp"
#include "ssvc/text.hpp"
#include "ssvc/trainer.hpp"

namespace ssvc {

struct RunConfig {
  SynthConfig synth;
  std::size_t embed_dim = 8;
  std::size_t d_e = 64;
  std::size_t d_p = 64;
  double head_slope = 0.2;
  TrainConfig train;
  int precision = 32;        // 32 or 64 bit training arithmetic
  std::size_t threads = 1;   // concurrent ablation runs

  NetworkConfig network() const {
    NetworkConfig n;
    n.n_domains = synth.n_domains;
    n.n_mcep = synth.n_mcep;
    n.n_frames = synth.n_frames;
    n.embed_dim = embed_dim;
    n.d_e = d_e;
    n.d_p = d_p;
    n.head_slope = head_slope;
    return n;
  }

  void validate() const {
    synth.validate();
    network().validate();
    train.validate();
    if (precision != 32 && precision != 64) throw config_error("precision must be 32 or 64");
    if (threads < 1) throw config_error("threads must be at least 1");
    for (const MaskSpec* m : {&train.t1, &train.t2}) {
      const std::size_t extent = m->axis == MaskAxis::time ? synth.n_frames : synth.n_mcep;
      if (m->max_width > extent) {
        throw config_error("mask max_width " + std::to_string(m->max_width) +
                           " exceeds axis extent " + std::to_string(extent));
      }
    }
  }
};

namespace detail {

struct ConfigKey {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename U>
ConfigKey count_key(std::string name, U RunConfig::*outer, std::size_t U::*field) {
  return {name,
          [=](RunConfig& c, const std::string& v) {
            (c.*outer).*field = static_cast<std::size_t>(parse_u64(v, name));
          },
          [=](const RunConfig& c) { return std::to_string((c.*outer).*field); }};
}

template <typename U>
ConfigKey real_key(std::string name, U RunConfig::*outer, double U::*field) {
  return {name, [=](RunConfig& c, const std::string& v) { (c.*outer).*field = parse_double(v, name); },
          [=](const RunConfig& c) { return format_double((c.*outer).*field); }};
}

inline ConfigKey mask_keys_axis(std::string name, MaskSpec TrainConfig::*m) {
  return {name,
          [=](RunConfig& c, const std::string& v) {
            if (v == "time") {
              (c.train.*m).axis = MaskAxis::time;
            } else if (v == "frequency") {
              (c.train.*m).axis = MaskAxis::frequency;
            } else {
              throw config_error(name + ": expected time or frequency, got '" + v + "'");
            }
          },
          [=](const RunConfig& c) { return to_string((c.train.*m).axis); }};
}

inline ConfigKey mask_keys_fill(std::string name, MaskSpec TrainConfig::*m) {
  return {name,
          [=](RunConfig& c, const std::string& v) {
            if (v == "mean") {
              (c.train.*m).fill = MaskFill::mean_of_map;
            } else if (v == "zero") {
              (c.train.*m).fill = MaskFill::zero;
            } else {
              throw config_error(name + ": expected mean or zero, got '" + v + "'");
            }
          },
          [=](const RunConfig& c) { return to_string((c.train.*m).fill); }};
}

inline ConfigKey mask_count_key(std::string name, MaskSpec TrainConfig::*m, std::size_t MaskSpec::*f) {
  return {name,
          [=](RunConfig& c, const std::string& v) {
            (c.train.*m).*f = static_cast<std::size_t>(parse_u64(v, name));
          },
          [=](const RunConfig& c) { return std::to_string((c.train.*m).*f); }};
}

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    using R = RunConfig;
    // synthetic data
    k.push_back({"n_domains",
                 [](R& c, const std::string& v) {
                   auto n = parse_u64(v, "n_domains");
                   if (n > 1000) throw config_error("n_domains: too large");
                   c.synth.n_domains = static_cast<int>(n);
                 },
                 [](const R& c) { return std::to_string(c.synth.n_domains); }});
    k.push_back(count_key("n_mcep", &R::synth, &SynthConfig::n_mcep));
    k.push_back(count_key("n_frames", &R::synth, &SynthConfig::n_frames));
    k.push_back(count_key("train_per_domain", &R::synth, &SynthConfig::train_per_domain));
    k.push_back(count_key("eval_per_domain", &R::synth, &SynthConfig::eval_per_domain));
    k.push_back({"data_seed",
                 [](R& c, const std::string& v) { c.synth.seed = parse_u64(v, "data_seed"); },
                 [](const R& c) { return std::to_string(c.synth.seed); }});
    k.push_back(real_key("prototype_smoothness", &R::synth, &SynthConfig::prototype_smoothness));
    k.push_back(real_key("noise_scale", &R::synth, &SynthConfig::noise_scale));
    k.push_back(real_key("gain_spread", &R::synth, &SynthConfig::gain_spread));
    // network
    for (auto [name, field] : {std::pair{"embed_dim", &R::embed_dim}, std::pair{"d_e", &R::d_e},
                               std::pair{"d_p", &R::d_p}}) {
      std::string n = name;
      k.push_back({n,
                   [n, field](R& c, const std::string& v) {
                     c.*field = static_cast<std::size_t>(parse_u64(v, n));
                   },
                   [field](const R& c) { return std::to_string(c.*field); }});
    }
    k.push_back({"head_slope",
                 [](R& c, const std::string& v) { c.head_slope = parse_double(v, "head_slope"); },
                 [](const R& c) { return format_double(c.head_slope); }});
    // masks
    for (auto [prefix, m] : {std::pair{"t1", &TrainConfig::t1}, std::pair{"t2", &TrainConfig::t2}}) {
      std::string p = prefix;
      k.push_back(mask_keys_axis(p + ".axis", m));
      k.push_back(mask_count_key(p + ".max_width", m, &MaskSpec::max_width));
      k.push_back(mask_count_key(p + ".n_masks", m, &MaskSpec::n_masks));
      k.push_back(mask_keys_fill(p + ".fill", m));
    }
    // losses
    k.push_back({"lambda1",
                 [](R& c, const std::string& v) { c.train.weights.lambda1 = parse_double(v, "lambda1"); },
                 [](const R& c) { return format_double(c.train.weights.lambda1); }});
    k.push_back({"lambda2",
                 [](R& c, const std::string& v) { c.train.weights.lambda2 = parse_double(v, "lambda2"); },
                 [](const R& c) { return format_double(c.train.weights.lambda2); }});
    k.push_back(real_key("tau", &R::train, &TrainConfig::tau));
    // training
    k.push_back(count_key("epochs", &R::train, &TrainConfig::epochs));
    k.push_back(count_key("batch_size", &R::train, &TrainConfig::batch_size));
    k.push_back(real_key("lr_g", &R::train, &TrainConfig::lr_g));
    k.push_back(real_key("lr_d", &R::train, &TrainConfig::lr_d));
    k.push_back(real_key("adam_beta1", &R::train, &TrainConfig::adam_beta1));
    k.push_back(real_key("adam_beta2", &R::train, &TrainConfig::adam_beta2));
    k.push_back(count_key("early_stop_patience", &R::train, &TrainConfig::early_stop_patience));
    k.push_back({"seed", [](R& c, const std::string& v) { c.train.seed = parse_u64(v, "seed"); },
                 [](const R& c) { return std::to_string(c.train.seed); }});
    k.push_back(count_key("d_steps_per_g_step", &R::train, &TrainConfig::d_steps_per_g_step));
    k.push_back(count_key("steps_per_epoch", &R::train, &TrainConfig::steps_per_epoch));
    k.push_back(count_key("eval_per_pair", &R::train, &TrainConfig::eval_per_pair));
    k.push_back({"precision",
                 [](R& c, const std::string& v) {
                   auto p = parse_u64(v, "precision");
                   if (p != 32 && p != 64) throw config_error("precision: expected 32 or 64");
                   c.precision = static_cast<int>(p);
                 },
                 [](const R& c) { return std::to_string(c.precision); }});
    k.push_back({"threads",
                 [](R& c, const std::string& v) {
                   c.threads = static_cast<std::size_t>(parse_u64(v, "threads"));
                 },
                 [](const R& c) { return std::to_string(c.threads); }});
    return k;
  }();
  return keys;
}

}  // namespace detail

inline std::vector<std::string> config_key_names() {
  std::vector<std::string> out;
  for (const auto& k : detail::config_keys()) out.push_back(k.name);
  return out;
}

// Applies `file` then `overrides` (later wins) on top of the defaults. Mask
// widths left unset resolve to 20% of their axis extent.
inline RunConfig parse_run_config(std::string_view file, const KeyValues& overrides = {}) {
  KeyValues merged = parse_key_values(file);
  for (const auto& [k, v] : overrides) {
    bool replaced = false;
    for (auto& [mk, mv] : merged) {
      if (mk == k) {
        mv = v;
        replaced = true;
      }
    }
    if (!replaced) merged.emplace_back(k, v);
  }
  RunConfig c;
  const auto& keys = detail::config_keys();
  for (const auto& [k, v] : merged) {
    auto it = std::find_if(keys.begin(), keys.end(), [&](const auto& key) { return key.name == k; });
    if (it == keys.end()) throw config_error("unknown key '" + k + "'");
    it->set(c, v);
  }
  for (auto [prefix, m] : {std::pair{"t1", &c.train.t1}, std::pair{"t2", &c.train.t2}}) {
    if (!find_value(merged, std::string(prefix) + ".max_width")) {
      const std::size_t extent = m->axis == MaskAxis::time ? c.synth.n_frames : c.synth.n_mcep;
      m->max_width = MaskSpec::defaults_for(m->axis, extent).max_width;
    }
  }
  if (!find_value(merged, "early_stop_patience") && c.train.early_stop_patience > c.train.epochs) {
    c.train.early_stop_patience = c.train.epochs;
  }
  c.validate();
  return c;
}

inline std::string echo(const RunConfig& c) {
  std::string out;
  for (const auto& k : detail::config_keys()) out += k.name + " = " + k.get(c) + "\n";
  return out;
}

inline RunConfig load_run_config(const std::filesystem::path& path, const KeyValues& overrides = {}) {
  std::string text;
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) throw config_error("cannot open config " + path.string());
    text.assign(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
  }
  return parse_run_config(text, overrides);
}

}  // namespace ssvc
