#pragma once

#include "json.hpp"

#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "cdmt/eval/contrastive.hpp"
#include "cdmt/eval/robustness.hpp"
#include "cdmt/eval/stats.hpp"

namespace cdmt {

namespace detail {

inline std::ostringstream csv_stream() {
  std::ostringstream os;
  os << std::setprecision(17);
  return os;
}

}  // namespace detail

/// One row per example; scores joined by ';' in candidate order.
inline std::string results_csv(const std::vector<ContrastiveResult>& rs) {
  auto os = detail::csv_stream();
  os << "id,phenomenon,distance,chosen,correct,scores\n";
  for (const auto& r : rs) {
    os << r.id << ',' << r.phenomenon << ',' << r.distance << ',' << r.chosen << ',' << (r.correct ? 1 : 0) << ',';
    for (std::size_t i = 0; i < r.scores.size(); ++i) os << (i ? ";" : "") << r.scores[i];
    os << '\n';
  }
  return os.str();
}

inline std::vector<ContrastiveResult> parse_results_csv(std::istream& in) {
  std::vector<ContrastiveResult> out;
  std::string line;
  std::getline(in, line);
  if (line != "id,phenomenon,distance,chosen,correct,scores") throw std::invalid_argument("not a results CSV");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string f[6];
    for (auto& x : f) std::getline(ls, x, ',');
    ContrastiveResult r;
    r.id = f[0];
    r.phenomenon = f[1];
    r.distance = std::stoi(f[2]);
    r.chosen = std::stoul(f[3]);
    r.correct = f[4] == "1";
    std::istringstream ss(f[5]);
    for (std::string s; std::getline(ss, s, ';');) r.scores.push_back(std::stod(s));
    out.push_back(std::move(r));
  }
  return out;
}

inline std::string categories_csv(const AccuracyReport& r) {
  auto os = detail::csv_stream();
  os << "category,n,accuracy,needs_context\n";
  for (const auto& c : r.categories) os << c.name << ',' << c.n << ',' << c.accuracy << ',' << (c.needs_context ? 1 : 0) << '\n';
  return os.str();
}

inline std::vector<CategoryAccuracy> parse_categories_csv(std::istream& in) {
  std::vector<CategoryAccuracy> out;
  std::string line;
  std::getline(in, line);
  if (line != "category,n,accuracy,needs_context") throw std::invalid_argument("not a category CSV");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string f[4];
    for (auto& x : f) std::getline(ls, x, ',');
    out.push_back({f[0], std::stod(f[2]), std::stoul(f[1]), f[3] == "1"});
  }
  return out;
}

inline nlohmann::json to_json(const AccuracyReport& r) {
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& c : r.categories)
    cats.push_back({{"name", c.name}, {"n", c.n}, {"accuracy", c.accuracy}, {"needs_context", c.needs_context}});
  nlohmann::json j{{"categories", cats}, {"disc", r.disc}, {"disc_avg", r.disc_avg}, {"n", r.n}, {"empty", r.empty}};
  j["disc_all_d"] = r.disc_all_d ? nlohmann::json(*r.disc_all_d) : nlohmann::json(nullptr);
  return j;
}

inline std::string robustness_csv(const std::vector<RobustnessRow>& rows) {
  auto os = detail::csv_stream();
  os << "size,bleu,delta,accuracy,sentences,malformed\n";
  for (const auto& r : rows) {
    os << r.size << ',' << r.bleu << ',' << r.delta << ',';
    if (r.accuracy) os << *r.accuracy;
    os << ',' << r.sentences << ',' << r.malformed << '\n';
  }
  return os.str();
}

inline nlohmann::json to_json(const RobustnessRow& r) {
  return {{"size", r.size},
          {"bleu", r.bleu},
          {"delta", r.delta},
          {"accuracy", r.accuracy ? nlohmann::json(*r.accuracy) : nlohmann::json(nullptr)},
          {"sentences", r.sentences},
          {"malformed", r.malformed}};
}

inline nlohmann::json to_json(const McNemarResult& r) {
  return {{"b", r.b}, {"c", r.c}, {"statistic", r.statistic}, {"p", r.p}};
}

}  // namespace cdmt
