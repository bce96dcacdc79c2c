#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cdmt/eval/attention.hpp"
#include "cdmt/eval/contrastive.hpp"
#include "cdmt/trainer/trainer.hpp"

namespace cdmt {

inline const std::vector<double>& default_sweep_values() {
  static const std::vector<double> v{1.0, 0.9, 0.7, 0.5, 0.3, 0.1, 0.01, 0.0};
  return v;
}

inline constexpr double kRecommendedCd = 0.01;

struct SweepRow {
  double cd = 0.0;
  double best_dev_current = 0.0;
  std::optional<double> accuracy;  // contrastive Disc on the given set, percent
  std::optional<double> mass;      // current-sentence attention mass on dev windows
  std::size_t best_step = 0;
  std::string run_dir;
  std::string error;  // nonempty when this run failed
};

inline std::string sweep_dir_name(double cd) {
  std::ostringstream os;
  os << "cd_" << cd;
  return os.str();
}

/// One training run per cd value with shared seed and data. A failing run is
/// recorded and the remaining values still run. Accuracy and attention mass
/// are measured on the averaged checkpoint.
template <typename T>
std::vector<SweepRow> cd_sweep(const TrainConfig& base, const std::vector<double>& cds, const TrainData& data,
                               const std::vector<ContrastiveExample>* contrastive = nullptr,
                               const std::string& out_root = "", std::ostream* progress = nullptr) {
  if (cds.empty()) throw std::invalid_argument("cd_sweep: no cd values");
  for (double cd : cds)
    if (!(cd >= 0.0 && cd <= 1.0)) throw std::invalid_argument("cd_sweep: cd values must lie in [0, 1]");
  std::vector<SweepRow> rows;
  for (double cd : cds) {
    SweepRow row;
    row.cd = cd;
    try {
      TrainConfig cfg = base;
      cfg.cd = cd;
      TrainOptions<T> opt;
      if (!out_root.empty()) opt.out_dir = row.run_dir = (std::filesystem::path(out_root) / sweep_dir_name(cd)).string();
      opt.progress = progress;
      const auto r = train<T>(cfg, data, opt);
      row.best_dev_current = r.best_loss;
      row.best_step = r.best_step;
      if (contrastive && !contrastive->empty())
        row.accuracy = aggregate(score_contrastive_set(r.averaged, *contrastive, data.src_vocab, data.tgt_vocab,
                                                       cfg.k)).disc;
      if (cfg.k > 1)
        row.mass = attention_diagnostics(r.averaged, make_windows(data.dev, cfg.k, data.src_vocab, data.tgt_vocab))
                       .mean_mass;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    if (progress)
      *progress << "cd " << cd << (row.error.empty() ? " done" : " failed: " + row.error) << "\n";
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << std::setprecision(17) << "cd,best_dev_current_loss,accuracy,attention_mass,best_step,error\n";
  for (const auto& r : rows) {
    os << r.cd << ',';
    if (r.error.empty()) os << r.best_dev_current;
    os << ',';
    if (r.accuracy) os << *r.accuracy;
    os << ',';
    if (r.mass) os << *r.mass;
    os << ',' << r.best_step << ',';
    std::string e = r.error;
    for (auto& c : e)
      if (c == ',' || c == '\n') c = ' ';
    os << e << '\n';
  }
  return os.str();
}

}  // namespace cdmt
