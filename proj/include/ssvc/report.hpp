#pragma once

// CSV writers and the strict epochs.csv reader. Real numbers are written in
// their shortest round-trip form so identical runs give identical bytes.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssvc/features.hpp"
#include "ssvc/metrics.hpp"
#include "ssvc/text.hpp"
#include "ssvc/trainer.hpp"

namespace ssvc {

class csv_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string pair_id(DomainPair p) {
  return std::to_string(p.source.id) + "-" + std::to_string(p.target.id);
}

inline std::string epochs_csv_header(int n_domains) {
  std::string h = "epoch,d_loss,g_loss,adv,sim_term,con_term,eval_mcd";
  for (auto p : conversion_pairs(n_domains)) {
    h += ",mcd_" + std::to_string(p.source.id) + "_" + std::to_string(p.target.id);
  }
  return h;
}

inline std::string epochs_csv_row(const EpochLog& e) {
  std::string r = std::to_string(e.epoch);
  for (double v : {e.d_loss, e.g_loss, e.adv, e.sim_term, e.con_term, e.eval_mcd}) {
    r += "," + format_double(v);
  }
  for (double v : e.pair_mcd) r += "," + format_double(v);
  return r;
}

inline std::string timing_csv(const std::vector<EpochLog>& logs) {
  std::string out = "epoch,wall_ms\n";
  for (const auto& e : logs) out += std::to_string(e.epoch) + "," + format_double(e.wall_ms) + "\n";
  return out;
}

inline std::string stability_csv_header() {
  return "initial_mcd,final_mcd,best_mcd,epochs_run,early_stopped,window,d_loss_std";
}

template <std::floating_point T>
std::string stability_csv_row(const TrainResult<T>& r) {
  return format_double(r.initial_mcd) + "," + format_double(r.logs.back().eval_mcd) + "," +
         format_double(r.state.best_mcd) + "," + std::to_string(r.logs.size()) + "," +
         (r.early_stopped ? "1" : "0") + "," + std::to_string(r.stability_window) + "," +
         format_double(r.stability);
}

inline std::string eval_csv(const PairEval& ev) {
  std::string out = "pair_id,source,target,mcd_db,msd_db\n";
  for (std::size_t i = 0; i < ev.pairs.size(); ++i) {
    out += pair_id(ev.pairs[i]) + "," + std::to_string(ev.pairs[i].source.id) + "," +
           std::to_string(ev.pairs[i].target.id) + "," + format_double(ev.mcd[i]) + "," +
           format_double(ev.msd[i]) + "\n";
  }
  return out;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "lambda1,lambda2,final_mcd,stability,epochs_run,status,error\n";
  for (const auto& r : rows) {
    std::string err = r.error;
    for (auto& c : err) {
      if (c == ',' || c == '\n' || c == '\r') c = ' ';
    }
    out += format_double(r.lambda1) + "," + format_double(r.lambda2) + ",";
    if (r.error.empty()) {
      out += format_double(r.final_mcd) + "," + format_double(r.stability) + "," +
             std::to_string(r.epochs_run) + ",ok,\n";
    } else {
      out += ",,,failed," + err + "\n";
    }
  }
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << text;
  os.flush();
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// A numeric CSV table with a header row.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i] == name) return i;
    }
    throw csv_error("no column named '" + name + "'");
  }
};

// Every row must have as many fields as the header and every field must be
// a finite number.
inline CsvTable parse_numeric_csv(const std::string& text) {
  CsvTable t;
  std::istringstream is(text);
  std::string line;
  std::size_t line_no = 0;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
      if (c == ',') {
        out.push_back(trim(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
    out.push_back(trim(cur));
    return out;
  };
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split(line);
    if (t.columns.empty()) {
      for (const auto& f : fields) {
        if (f.empty()) throw csv_error("line 1: empty column name");
      }
      t.columns = std::move(fields);
      continue;
    }
    if (fields.size() != t.columns.size()) {
      throw csv_error("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(t.columns.size()) + " fields, got " +
                      std::to_string(fields.size()));
    }
    std::vector<double> row;
    for (const auto& f : fields) {
      double v = 0.0;
      try {
        v = parse_double(f, "field");
      } catch (const config_error&) {
        throw csv_error("line " + std::to_string(line_no) + ": '" + f + "' is not a number");
      }
      if (!std::isfinite(v)) {
        throw csv_error("line " + std::to_string(line_no) + ": non-finite value");
      }
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  if (t.columns.empty()) throw csv_error("empty csv");
  if (t.rows.empty()) throw csv_error("csv has a header but no rows");
  return t;
}

}  // namespace ssvc
