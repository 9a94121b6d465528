// ssvc: dataset generation, training, conversion, evaluation, ablation and
// loss-trace plotting for the contrastive voice conversion model.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ssvc/config.hpp"
#include "ssvc/corpus.hpp"
#include "ssvc/plot.hpp"
#include "ssvc/report.hpp"
#include "ssvc/trainer.hpp"

namespace fs = std::filesystem;
using namespace ssvc;

namespace {

// SSVC_LOG: quiet, info (default) or debug.
int log_level() {
  const char* v = std::getenv("SSVC_LOG");
  if (!v) return 1;
  std::string s(v);
  if (s == "quiet" || s == "0") return 0;
  if (s == "debug" || s == "2") return 2;
  return 1;
}

void info(const std::string& msg) {
  if (log_level() >= 1) std::cerr << "ssvc: " << msg << '\n';
}

KeyValues parse_sets(const std::vector<std::string>& sets) {
  KeyValues kv;
  for (const auto& s : sets) {
    auto eq = s.find('=');
    if (eq == std::string::npos) throw config_error("--set expects key=value, got '" + s + "'");
    std::string key = trim(s.substr(0, eq));
    for (auto& [k, v] : kv) {
      if (k == key) throw config_error("duplicate key '" + key + "' in --set");
    }
    kv.emplace_back(key, trim(s.substr(eq + 1)));
  }
  return kv;
}

struct CkptModel {
  RunConfig cfg;
  Checkpoint ck;
};

CkptModel open_checkpoint(const fs::path& path) {
  CkptModel m{RunConfig{}, load_checkpoint(path)};
  m.cfg = parse_run_config(m.ck.config_text);
  return m;
}

template <std::floating_point T>
void do_train(const RunConfig& cfg, const TrainData& data, const fs::path& out) {
  const int level = log_level();
  auto r = train<T>(data, cfg.train, cfg.network(), [&](const EpochLog& e) {
    if (level >= 2 || (level >= 1 && (e.epoch == 1 || e.epoch % 10 == 0))) {
      std::cerr << "ssvc: epoch " << e.epoch << " d_loss " << e.d_loss << " g_loss " << e.g_loss
                << " eval_mcd " << e.eval_mcd << '\n';
    }
  });
  std::string epochs = epochs_csv_header(cfg.synth.n_domains) + "\n";
  for (const auto& e : r.logs) epochs += epochs_csv_row(e) + "\n";
  write_text(out / "epochs.csv", epochs);
  write_text(out / "stability.csv", stability_csv_header() + "\n" + stability_csv_row(r) + "\n");
  write_text(out / "timing.csv", timing_csv(r.logs));
  write_text(out / "config.txt", echo(cfg));
  save_checkpoint(out / "checkpoint.ckpt", to_checkpoint(r.state, echo(cfg)));
  info("trained " + std::to_string(r.logs.size()) + " epochs; eval MCD " +
       format_double(r.initial_mcd) + " -> " + format_double(r.logs.back().eval_mcd) + " dB");
}

template <std::floating_point T>
FeatureMap do_convert(const CkptModel& m, const FeatureMap& x, DomainPair pair) {
  auto gen = load_generator<T>(m.ck, m.cfg.network());
  return convert(gen, x, pair);
}

template <std::floating_point T>
PairEval do_eval(const CkptModel& m, const TrainData& data, bool identity) {
  auto gen = load_generator<T>(m.ck, m.cfg.network());
  std::size_t per_pair = 0;
  for (int d = 1; d <= data.eval.n_domains; ++d) {
    per_pair = std::max(per_pair, data.eval.indices_of({d}).size());
  }
  return evaluate_pairs(gen, data, per_pair, identity, true);
}

std::vector<LossWeights> parse_grid(const std::string& spec) {
  if (spec == "default") return default_ablation_grid();
  std::vector<LossWeights> grid;
  std::string rest = spec;
  while (!rest.empty()) {
    auto semi = rest.find(';');
    std::string item = trim(rest.substr(0, semi));
    rest = semi == std::string::npos ? "" : rest.substr(semi + 1);
    if (item.empty()) continue;
    auto comma = item.find(',');
    if (comma == std::string::npos) {
      throw config_error("grid entry '" + item + "' is not lambda1,lambda2");
    }
    LossWeights w{parse_double(trim(item.substr(0, comma)), "grid lambda1"),
                  parse_double(trim(item.substr(comma + 1)), "grid lambda2")};
    w.validate();
    grid.push_back(w);
  }
  if (grid.empty()) throw config_error("grid is empty");
  return grid;
}

Series read_trace(const fs::path& path, const std::string& column) {
  CsvTable t;
  try {
    t = parse_numeric_csv(read_text(path));
  } catch (const csv_error& e) {
    throw csv_error(path.string() + ": " + e.what());
  }
  const auto xi = t.column("epoch");
  const auto yi = t.column(column);
  Series s{path.parent_path().filename().string(), {}, {}};
  if (s.name.empty()) s.name = path.stem().string();
  for (const auto& row : t.rows) {
    if (!s.x.empty() && row[xi] <= s.x.back()) {
      throw csv_error(path.string() + ": epochs are not strictly increasing");
    }
    s.x.push_back(row[xi]);
    s.y.push_back(row[yi]);
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrastive many-to-many voice conversion on synthetic cepstral features"};
  app.require_subcommand(1);

  std::string config_path, out_dir, data_dir, out_path, ckpt, in_path, grid = "default";
  std::vector<std::string> sets, epochs_csvs;
  std::optional<double> lambda1, lambda2;
  int src = 0, trg = 0;
  bool identity = false, csv_only = false;
  std::string column = "d_loss";
  std::size_t max_points = 300;

  auto* gen = app.add_subcommand("gen-data", "Write the synthetic corpus and manifests");
  gen->add_option("--config", config_path, "key = value run configuration");
  gen->add_option("--set", sets, "override a configuration key (key=value)");
  gen->add_option("--out-dir", out_dir, "output directory")->required();

  auto* tr = app.add_subcommand("train", "Train and write checkpoint, epochs.csv, stability.csv");
  tr->add_option("--config", config_path, "key = value run configuration");
  tr->add_option("--data", data_dir, "corpus directory from gen-data")->required();
  tr->add_option("--out", out_dir, "output directory")->required();
  tr->add_option("--lambda1", lambda1, "siamese weight (overrides config)");
  tr->add_option("--lambda2", lambda2, "contrastive weight (overrides config)");
  tr->add_option("--set", sets, "override a configuration key (key=value)");

  auto* cv = app.add_subcommand("convert", "Convert one feature file");
  cv->add_option("--ckpt", ckpt, "checkpoint")->required();
  cv->add_option("--in", in_path, "input feature file")->required();
  cv->add_option("--src", src, "source domain code")->required();
  cv->add_option("--trg", trg, "target domain code")->required();
  cv->add_option("--out", out_path, "output feature file")->required();

  auto* ev = app.add_subcommand("eval", "MCD/MSD over the conversion pairs of the eval set");
  ev->add_option("--ckpt", ckpt, "checkpoint")->required();
  ev->add_option("--data", data_dir, "corpus directory")->required();
  ev->add_flag("--include-identity", identity, "also evaluate source = target pairs");
  ev->add_option("--out", out_path, "CSV path (default: standard output)");

  auto* ab = app.add_subcommand("ablate", "One training run per (lambda1, lambda2) grid point");
  ab->add_option("--config", config_path, "key = value run configuration");
  ab->add_option("--data", data_dir, "corpus directory")->required();
  ab->add_option("--grid", grid, "'default' or 'l1,l2;l1,l2;...'");
  ab->add_option("--set", sets, "override a configuration key (key=value)");
  ab->add_option("--out", out_path, "CSV path (default: standard output)");

  auto* pl = app.add_subcommand("plot", "Plot one or two loss traces (SVG plus CSV)");
  pl->add_option("--epochs-csv", epochs_csvs, "epochs.csv (give twice to overlay)")
      ->required()
      ->expected(1, 2);
  pl->add_option("--out", out_path, "output path; .svg and .csv are written side by side")
      ->required();
  pl->add_option("--column", column, "column to plot");
  pl->add_option("--max-points", max_points, "downsample to at most this many points");
  pl->add_flag("--csv-only", csv_only, "skip the SVG");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "ssvc: error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*gen) {
      auto cfg = load_run_config(config_path, parse_sets(sets));
      fs::path dir(out_dir);
      write_corpus(dir, TrainData::from(synth_dataset(cfg.synth)));
      write_text(dir / "config.txt", echo(cfg));
      info("wrote corpus to " + dir.string());
    } else if (*tr) {
      auto kv = parse_sets(sets);
      auto put = [&](const char* key, std::optional<double> v) {
        if (!v) return;
        std::erase_if(kv, [&](const auto& p) { return p.first == key; });
        kv.emplace_back(key, format_double(*v));
      };
      put("lambda1", lambda1);
      put("lambda2", lambda2);
      auto cfg = load_run_config(config_path, kv);
      auto data = load_corpus(data_dir, cfg.synth.n_domains);
      fs::create_directories(out_dir);
      if (cfg.precision == 64) {
        do_train<double>(cfg, data, out_dir);
      } else {
        do_train<float>(cfg, data, out_dir);
      }
    } else if (*cv) {
      auto m = open_checkpoint(ckpt);
      auto x = load_features(in_path);
      DomainPair pair{{src}, {trg}};
      auto y = m.cfg.precision == 64 ? do_convert<double>(m, x, pair) : do_convert<float>(m, x, pair);
      // Feature files hold float32, so check against the rounded map.
      y = decode_features(encode_features(y));
      save_features(out_path, y);
      if (!(load_features(out_path) == y)) {
        throw feature_io_error("converted output did not survive a save/load round trip");
      }
    } else if (*ev) {
      auto m = open_checkpoint(ckpt);
      auto data = load_corpus(data_dir, m.cfg.synth.n_domains);
      auto res = m.cfg.precision == 64 ? do_eval<double>(m, data, identity)
                                       : do_eval<float>(m, data, identity);
      if (out_path.empty()) {
        std::cout << eval_csv(res);
      } else {
        write_text(out_path, eval_csv(res));
      }
    } else if (*ab) {
      auto cfg = load_run_config(config_path, parse_sets(sets));
      auto g = parse_grid(grid);
      auto data = load_corpus(data_dir, cfg.synth.n_domains);
      auto rows = cfg.precision == 64
                      ? ablate<double>(data, cfg.train, cfg.network(), g, cfg.threads)
                      : ablate<float>(data, cfg.train, cfg.network(), g, cfg.threads);
      if (out_path.empty()) {
        std::cout << ablation_csv(rows);
      } else {
        write_text(out_path, ablation_csv(rows));
      }
      for (const auto& r : rows) {
        if (!r.error.empty()) {
          std::cerr << "ssvc: error: run (" << format_double(r.lambda1) << ", "
                    << format_double(r.lambda2) << ") failed: " << r.error << '\n';
        }
      }
      for (const auto& r : rows) {
        if (!r.error.empty()) return 1;
      }
    } else if (*pl) {
      std::vector<Series> series;
      for (const auto& p : epochs_csvs) series.push_back(downsample(read_trace(p, column), max_points));
      if (series.size() == 2 && series[0].name == series[1].name) {
        series[0].name += " (1)";
        series[1].name += " (2)";
      }
      fs::path out(out_path);
      fs::path csv = out;
      csv.replace_extension(".csv");
      if (csv == out) throw std::invalid_argument("--out must not end in .csv");
      write_text(csv, plot_csv(series));
      if (!csv_only) {
        fs::path svg = out;
        svg.replace_extension(".svg");
        write_text(svg, plot_svg(series, column + " per epoch", column));
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "ssvc: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
