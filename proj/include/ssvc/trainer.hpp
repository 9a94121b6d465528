#pragma once

// Alternating adversarial optimization, evaluation, early stopping,
// checkpointing and the loss-weight ablation grid.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "ssvc/augment.hpp"
#include "ssvc/checkpoint.hpp"
#include "ssvc/features.hpp"
#include "ssvc/losses.hpp"
#include "ssvc/metrics.hpp"
#include "ssvc/networks.hpp"
#include "ssvc/optim.hpp"
#include "ssvc/random.hpp"
#include "ssvc/text.hpp"

namespace ssvc {

// A loss term became NaN or infinite.
class divergence_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 8;
  double lr_g = 1e-3;
  double lr_d = 1e-3;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  LossWeights weights;
  double tau = kDefaultTemperature;
  std::size_t early_stop_patience = 50;
  std::uint64_t seed = 7;
  std::size_t d_steps_per_g_step = 1;
  std::size_t steps_per_epoch = 8;  // optimizer steps (generator updates) per epoch
  std::size_t eval_per_pair = 3;    // eval utterances converted per pair each epoch
  MaskSpec t1 = MaskSpec::defaults_for(MaskAxis::time, 64);
  MaskSpec t2 = MaskSpec::defaults_for(MaskAxis::frequency, 16);

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
    // A zero rate is allowed: it freezes that network.
    if (!(lr_g >= 0.0) || !(lr_d >= 0.0)) throw std::invalid_argument("learning rates must be >= 0");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
      throw std::invalid_argument("Adam betas must lie in [0, 1)");
    }
    weights.validate();
    if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
    if (early_stop_patience < 1) throw std::invalid_argument("early_stop_patience must be >= 1");
    if (early_stop_patience > epochs) {
      throw std::invalid_argument("early_stop_patience must not exceed epochs");
    }
    if (d_steps_per_g_step < 1) throw std::invalid_argument("d_steps_per_g_step must be >= 1");
    if (steps_per_epoch < 1) throw std::invalid_argument("steps_per_epoch must be >= 1");
    if (eval_per_pair < 1) throw std::invalid_argument("eval_per_pair must be >= 1");
  }
};

struct StepRecord {
  double d_loss = 0.0;
  double g_loss = 0.0;
  double adv = 0.0;
  double sim_term = 0.0;
  double con_term = 0.0;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double d_loss = 0.0;
  double g_loss = 0.0;
  double adv = 0.0;
  double sim_term = 0.0;
  double con_term = 0.0;
  double eval_mcd = 0.0;
  std::vector<double> pair_mcd;  // conversion_pairs order
  double wall_ms = 0.0;
};

// Both networks, their optimizers and every piece of run bookkeeping.
template <std::floating_point T>
struct TrainState {
  NetworkConfig net;
  Generator<T> gen;
  Discriminator<T> disc;
  Adam<T> opt_g, opt_d;
  Rng batch_rng, aug_rng;
  std::size_t epoch = 0;
  double best_mcd = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  static TrainState init(const NetworkConfig& net, const TrainConfig& cfg) {
    cfg.validate();
    TrainState s;
    s.net = net;
    Rng init_rng(cfg.seed);
    s.gen = Generator<T>(net, init_rng);
    s.disc = Discriminator<T>(net, init_rng);
    s.opt_g = Adam<T>(s.gen.parameters(), {cfg.lr_g, cfg.adam_beta1, cfg.adam_beta2});
    s.opt_d = Adam<T>(s.disc.parameters(), {cfg.lr_d, cfg.adam_beta1, cfg.adam_beta2});
    s.batch_rng = Rng(cfg.seed + 1);
    s.aug_rng = Rng(cfg.seed + 2);
    return s;
  }
};

namespace detail {

inline void require_finite(double v, const char* term) {
  if (!std::isfinite(v)) {
    throw divergence_error(std::string("non-finite ") + term + " (" + format_double(v) + ")");
  }
}

}  // namespace detail

// d_steps_per_g_step discriminator updates on the batch (fresh views each
// time), then one generator update. The record holds the first
// discriminator step's terms and the generator loss.
template <std::floating_point T>
StepRecord train_step(TrainState<T>& s, std::span<const BatchItem> batch, const TrainConfig& cfg) {
  StepRecord rec;
  for (std::size_t k = 0; k < cfg.d_steps_per_g_step; ++k) {
    s.opt_d.zero_grad();
    auto dl = discriminator_loss<T>(batch, s.gen, s.disc, cfg.weights, cfg.t1, cfg.t2, s.aug_rng,
                                    cfg.tau);
    const double adv = dl.adv.item(), sim = dl.sim.item(), con = dl.con.item();
    detail::require_finite(adv, "adversarial term");
    detail::require_finite(sim, "siamese term");
    detail::require_finite(con, "contrastive term");
    detail::require_finite(dl.total.item(), "discriminator loss");
    if (k == 0) rec = {dl.total.item(), 0.0, adv, sim, con};
    dl.total.backward();
    s.opt_d.step();
  }
  std::vector<const FeatureMap*> xs;
  std::vector<DomainPair> pairs;
  for (const auto& item : batch) {
    xs.push_back(&item.x);
    pairs.push_back(item.pair);
  }
  s.opt_g.zero_grad();
  Tensor<T> gl = generator_loss(to_tensor<T>(xs), pairs, s.gen, s.disc);
  rec.g_loss = gl.item();
  detail::require_finite(rec.g_loss, "generator loss");
  gl.backward();
  s.opt_g.step();
  return rec;
}

// The generator's own training data plus what evaluation compares against.
struct TrainData {
  Dataset train;
  Dataset eval;
  std::vector<FeatureMap> prototypes;  // index d-1 holds domain d

  static TrainData from(SynthData d) {
    return {std::move(d.train), std::move(d.eval), std::move(d.prototypes)};
  }

  void validate() const {
    if (train.empty()) throw std::invalid_argument("training set is empty");
    if (eval.empty()) throw std::invalid_argument("eval set is empty");
    if (prototypes.size() != std::size_t(train.n_domains)) {
      throw std::invalid_argument("need one prototype per domain");
    }
    for (int d = 1; d <= eval.n_domains; ++d) {
      if (eval.indices_of({d}).empty()) {
        throw std::invalid_argument("eval set has no utterance of domain " + std::to_string(d));
      }
    }
  }
};

struct PairEval {
  std::vector<DomainPair> pairs;
  std::vector<double> mcd;  // mean MCD per pair, against the target prototype
  std::vector<double> msd;  // mean MSD per pair, against target-domain eval utterances
  double mean_mcd = 0.0;
};

// Converts the first `per_pair` eval utterances of each source domain to
// each target. MCD is measured against the target prototype; MSD against the
// target domain's eval utterance of the same rank.
template <std::floating_point T>
PairEval evaluate_pairs(const Generator<T>& gen, const TrainData& data, std::size_t per_pair,
                        bool include_identity = false, bool with_msd = false) {
  const int n = data.eval.n_domains;
  PairEval out;
  out.pairs = conversion_pairs(n, include_identity);
  std::vector<const FeatureMap*> xs;
  std::vector<const FeatureMap*> msd_refs;
  std::vector<DomainPair> pairs;
  std::vector<std::size_t> owner;
  for (std::size_t p = 0; p < out.pairs.size(); ++p) {
    const auto& pr = out.pairs[p];
    auto src = data.eval.indices_of(pr.source);
    auto trg = data.eval.indices_of(pr.target);
    const std::size_t k = std::min(per_pair, src.size());
    for (std::size_t i = 0; i < k; ++i) {
      xs.push_back(&data.eval.items[src[i]]);
      msd_refs.push_back(&data.eval.items[trg[i % trg.size()]]);
      pairs.push_back(pr);
      owner.push_back(p);
    }
  }
  out.mcd.assign(out.pairs.size(), 0.0);
  out.msd.assign(out.pairs.size(), 0.0);
  std::vector<std::size_t> counts(out.pairs.size(), 0);
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < xs.size(); start += kChunk) {
    const std::size_t end = std::min(xs.size(), start + kChunk);
    std::span<const FeatureMap* const> chunk(xs.data() + start, end - start);
    std::span<const DomainPair> chunk_pairs(pairs.data() + start, end - start);
    Tensor<T> y = gen.forward(to_tensor<T>(chunk), chunk_pairs);
    for (std::size_t i = start; i < end; ++i) {
      FeatureMap conv = from_tensor(y, i - start, pairs[i].target);
      const std::size_t p = owner[i];
      out.mcd[p] += mcd(conv, data.prototypes.at(std::size_t(pairs[i].target.id - 1)));
      if (with_msd) out.msd[p] += msd(conv, *msd_refs[i]);
      ++counts[p];
    }
  }
  for (std::size_t p = 0; p < out.pairs.size(); ++p) {
    out.mcd[p] /= double(counts[p]);
    out.msd[p] /= double(counts[p]);
    out.mean_mcd += out.mcd[p];
  }
  out.mean_mcd /= double(out.pairs.size());
  return out;
}

// Number of trailing epochs the stability statistic looks at.
inline std::size_t stability_window(std::size_t logged_epochs) {
  return std::min<std::size_t>(100, std::max<std::size_t>(1, logged_epochs / 3));
}

template <std::floating_point T>
struct TrainResult {
  TrainState<T> state;
  std::vector<EpochLog> logs;
  double initial_mcd = 0.0;  // untrained generator, same eval subset
  double stability = 0.0;
  std::size_t stability_window = 0;
  bool early_stopped = false;
};

// Runs one epoch of training followed by evaluation and early-stopping
// bookkeeping. Returns true when the patience budget is exhausted.
template <std::floating_point T>
bool run_epoch(TrainState<T>& s, const TrainData& data, const TrainConfig& cfg, EpochLog& log) {
  const auto t0 = std::chrono::steady_clock::now();
  StepRecord acc;
  for (std::size_t k = 0; k < cfg.steps_per_epoch; ++k) {
    auto batch = sample_batch(data.train, cfg.batch_size, s.batch_rng);
    auto r = train_step(s, batch, cfg);
    acc.d_loss += r.d_loss;
    acc.g_loss += r.g_loss;
    acc.adv += r.adv;
    acc.sim_term += r.sim_term;
    acc.con_term += r.con_term;
  }
  const double n = double(cfg.steps_per_epoch);
  ++s.epoch;
  auto ev = evaluate_pairs(s.gen, data, cfg.eval_per_pair);
  log = {s.epoch,        acc.d_loss / n, acc.g_loss / n, acc.adv / n, acc.sim_term / n,
         acc.con_term / n, ev.mean_mcd,  ev.mcd,         0.0};
  detail::require_finite(log.eval_mcd, "eval MCD");
  if (log.eval_mcd < s.best_mcd) {
    s.best_mcd = log.eval_mcd;
    s.since_best = 0;
  } else {
    ++s.since_best;
  }
  log.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return s.since_best >= cfg.early_stop_patience;
}

template <std::floating_point T>
TrainResult<T> train(const TrainData& data, const TrainConfig& cfg, const NetworkConfig& net,
                     const std::function<void(const EpochLog&)>& on_epoch = {}) {
  cfg.validate();
  data.validate();
  TrainResult<T> r{TrainState<T>::init(net, cfg), {}, 0.0, 0.0, 0, false};
  r.initial_mcd = evaluate_pairs(r.state.gen, data, cfg.eval_per_pair).mean_mcd;
  while (r.state.epoch < cfg.epochs) {
    EpochLog log;
    const bool stop = run_epoch(r.state, data, cfg, log);
    r.logs.push_back(log);
    if (on_epoch) on_epoch(r.logs.back());
    if (stop) {
      r.early_stopped = r.state.epoch < cfg.epochs;
      break;
    }
  }
  std::vector<double> trace;
  for (const auto& l : r.logs) trace.push_back(l.d_loss);
  r.stability_window = stability_window(trace.size());
  r.stability = loss_stability(trace, r.stability_window);
  return r;
}

// ---------------------------------------------------------------------------
// Checkpointing

namespace detail {

template <std::floating_point T>
NamedArray to_array(const std::string& name, const Tensor<T>& t) {
  NamedArray a{name, {}, {}};
  for (auto d : t.shape()) a.shape.push_back(d);
  for (auto v : t.values()) a.values.push_back(static_cast<double>(v));
  return a;
}

template <std::floating_point T>
void load_params(const Checkpoint& ck, const NamedParams<T>& params) {
  for (auto [name, t] : params) {
    const auto& a = ck.array(name);
    Shape shape(a.shape.begin(), a.shape.end());
    if (shape != t.shape()) {
      throw checkpoint_error("array " + name + " has shape " + shape_string(shape) +
                             ", network expects " + shape_string(t.shape()));
    }
    auto dst = t.mutable_values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(a.values[i]);
  }
}

template <std::floating_point T>
void save_moments(Checkpoint& ck, const std::string& prefix, const NamedParams<T>& params,
                  const Adam<T>& opt) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, t] = params[i];
    std::vector<std::uint64_t> shape{t.size()};
    ck.arrays.push_back({prefix + ".m." + name, shape, opt.first_moments()[i]});
    ck.arrays.push_back({prefix + ".v." + name, shape, opt.second_moments()[i]});
  }
}

template <std::floating_point T>
void load_moments(const Checkpoint& ck, const std::string& prefix, const NamedParams<T>& params,
                  Adam<T>& opt) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& m = ck.array(prefix + ".m." + params[i].first);
    const auto& v = ck.array(prefix + ".v." + params[i].first);
    if (m.values.size() != params[i].second.size() || v.values.size() != m.values.size()) {
      throw checkpoint_error("optimizer moments for " + params[i].first + " have the wrong size");
    }
    opt.first_moments()[i] = m.values;
    opt.second_moments()[i] = v.values;
  }
}

}  // namespace detail

// config_text is stored verbatim; the caller decides how it is produced.
template <std::floating_point T>
Checkpoint to_checkpoint(const TrainState<T>& s, std::string config_text) {
  Checkpoint ck;
  ck.config_text = std::move(config_text);
  std::ostringstream st;
  st << "epoch = " << s.epoch << '\n'
     << "best_mcd = " << format_double(s.best_mcd) << '\n'
     << "since_best = " << s.since_best << '\n'
     << "opt_g.steps = " << s.opt_g.steps() << '\n'
     << "opt_d.steps = " << s.opt_d.steps() << '\n'
     << "batch_rng = " << rng_state(s.batch_rng) << '\n'
     << "aug_rng = " << rng_state(s.aug_rng) << '\n';
  ck.state_text = st.str();
  for (const auto& [name, t] : s.gen.named_parameters()) ck.arrays.push_back(detail::to_array(name, t));
  for (const auto& [name, t] : s.disc.named_parameters()) ck.arrays.push_back(detail::to_array(name, t));
  detail::save_moments(ck, "adam_g", s.gen.named_parameters(), s.opt_g);
  detail::save_moments(ck, "adam_d", s.disc.named_parameters(), s.opt_d);
  return ck;
}

// Rebuilds a state saved by to_checkpoint. `net` and `cfg` must be the ones
// the checkpoint was trained with.
template <std::floating_point T>
TrainState<T> restore_state(const Checkpoint& ck, const NetworkConfig& net, const TrainConfig& cfg) {
  TrainState<T> s = TrainState<T>::init(net, cfg);
  detail::load_params(ck, s.gen.named_parameters());
  detail::load_params(ck, s.disc.named_parameters());
  detail::load_moments(ck, "adam_g", s.gen.named_parameters(), s.opt_g);
  detail::load_moments(ck, "adam_d", s.disc.named_parameters(), s.opt_d);
  const auto kv = parse_key_values(ck.state_text);
  auto get = [&](const char* key) -> const std::string& {
    const auto* v = find_value(kv, key);
    if (!v) throw checkpoint_error(std::string("checkpoint state lacks ") + key);
    return *v;
  };
  s.epoch = parse_u64(get("epoch"), "epoch");
  s.best_mcd = parse_double(get("best_mcd"), "best_mcd");
  s.since_best = parse_u64(get("since_best"), "since_best");
  s.opt_g.set_steps(parse_u64(get("opt_g.steps"), "opt_g.steps"));
  s.opt_d.set_steps(parse_u64(get("opt_d.steps"), "opt_d.steps"));
  s.batch_rng = rng_from_state(get("batch_rng"));
  s.aug_rng = rng_from_state(get("aug_rng"));
  return s;
}

// Generator only, for inference.
template <std::floating_point T>
Generator<T> load_generator(const Checkpoint& ck, const NetworkConfig& net) {
  Rng rng(0);
  Generator<T> g(net, rng);
  detail::load_params(ck, g.named_parameters());
  return g;
}

// Pure generator inference.
template <std::floating_point T>
FeatureMap convert(const Generator<T>& gen, const FeatureMap& x, DomainPair pair) {
  const auto& net = gen.config();
  if (x.n_mcep() != net.n_mcep || x.n_frames() != net.n_frames) {
    throw std::invalid_argument("feature map is " + std::to_string(x.n_mcep()) + "x" +
                                std::to_string(x.n_frames()) + ", checkpoint expects " +
                                std::to_string(net.n_mcep) + "x" + std::to_string(net.n_frames));
  }
  pair.validate(net.n_domains);
  if (!(x.domain() == pair.source)) {
    throw std::invalid_argument("feature map is from domain " + std::to_string(x.domain().id) +
                                ", not source " + std::to_string(pair.source.id));
  }
  return gen.convert(x, pair);
}

// ---------------------------------------------------------------------------
// Ablation

struct AblationRow {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double final_mcd = 0.0;
  double stability = 0.0;
  std::size_t epochs_run = 0;
  std::string error;  // empty on success
};

inline std::vector<LossWeights> default_ablation_grid() {
  return {{0.0, 0.01}, {0.01, 0.0}, {0.01, 0.01}, {0.02, 0.05}, {0.05, 0.02}, {0.1, 0.1}};
}

// One training run per grid point, rows in grid order. Grid points are
// independent, so up to `threads` of them run concurrently.
template <std::floating_point T>
std::vector<AblationRow> ablate(const TrainData& data, const TrainConfig& base,
                                const NetworkConfig& net, const std::vector<LossWeights>& grid,
                                std::size_t threads = 1) {
  if (grid.empty()) throw std::invalid_argument("ablation grid is empty");
  std::vector<AblationRow> rows(grid.size());
  auto run = [&](std::size_t i) {
    rows[i].lambda1 = grid[i].lambda1;
    rows[i].lambda2 = grid[i].lambda2;
    try {
      TrainConfig cfg = base;
      cfg.weights = grid[i];
      auto r = train<T>(data, cfg, net);
      rows[i].final_mcd = r.logs.back().eval_mcd;
      rows[i].stability = r.stability;
      rows[i].epochs_run = r.logs.size();
    } catch (const std::exception& e) {
      rows[i].error = e.what();
    }
  };
  threads = std::clamp<std::size_t>(threads, 1, grid.size());
  if (threads == 1) {
    for (std::size_t i = 0; i < grid.size(); ++i) run(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < grid.size(); i += threads) run(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  return rows;
}

}  // namespace ssvc
