#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdmt/corpus/synthetic.hpp"
#include "cdmt/model/transformer.hpp"

namespace cdmt {

struct ContrastiveResult {
  std::string id;
  std::size_t chosen = 0;
  bool correct = false;  // chosen == 0, the reference
  std::string phenomenon;
  int distance = 0;
  std::vector<double> scores;
};

enum class ScoreSpan { FullWindow, CurrentSentence };

inline ScoreSpan parse_score_span(std::string_view s) {
  if (s == "full") return ScoreSpan::FullWindow;
  if (s == "current") return ScoreSpan::CurrentSentence;
  throw std::invalid_argument("score span must be full or current, got '" + std::string(s) + "'");
}

/// Index of the best score; among exact ties the highest index, so a tie with
/// the reference never counts as correct.
inline std::size_t pick_candidate(const std::vector<double>& scores) {
  if (scores.empty()) throw std::invalid_argument("pick_candidate: no scores");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] >= scores[best]) best = i;
  return best;
}

/// Source and candidate windows of an example cut to its last `k` sentences
/// (all of them when k is 0).
inline std::vector<Window> contrastive_windows(const ContrastiveExample& ex, std::size_t k, const Vocab& src_vocab,
                                               const Vocab& tgt_vocab) {
  validate(ex);
  const std::size_t n = ex.src.size();
  const std::size_t first = k == 0 || k >= n ? 0 : n - k;
  std::vector<std::vector<std::string>> src(ex.src.begin() + static_cast<long>(first), ex.src.end());
  std::vector<Window> out;
  for (const auto& cand : ex.candidates) {
    for (const auto& s : cand)
      for (const auto& t : s)
        if (t == kPadToken) throw std::invalid_argument("contrastive example " + ex.id + ": candidate contains <PAD>");
    std::vector<std::vector<std::string>> tgt(cand.begin() + static_cast<long>(first), cand.end());
    Window w = make_window(src, tgt, src_vocab, tgt_vocab);
    w.doc_id = ex.doc_id;
    w.j = ex.j;
    out.push_back(std::move(w));
  }
  return out;
}

/// Teacher-forced log-probability of each candidate given the source window.
template <typename T>
ContrastiveResult score_contrastive(const Transformer<T>& m, const ContrastiveExample& ex, const Vocab& src_vocab,
                                    const Vocab& tgt_vocab, std::size_t k = 0,
                                    ScoreSpan span = ScoreSpan::FullWindow) {
  const auto ws = contrastive_windows(ex, k, src_vocab, tgt_vocab);
  std::vector<const Window*> ptrs;
  for (const auto& w : ws) ptrs.push_back(&w);
  const Batch b = make_batch(ptrs, m.config());
  Graph<T> g(false);
  const auto lp = m.forward(g, b).log_probs.value();
  const std::size_t L = b.tgt_len, V = m.config().tgt_vocab;

  ContrastiveResult r;
  r.id = ex.id;
  r.phenomenon = ex.phenomenon;
  r.distance = ex.distance;
  for (std::size_t i = 0; i < b.size; ++i) {
    double s = 0.0;
    for (std::size_t t = 0; t < L; ++t) {
      const std::size_t k2 = i * L + t;
      if (b.out_seg[k2] < 0) continue;
      if (span == ScoreSpan::CurrentSentence && b.out_seg[k2] != b.current_seg[i]) continue;
      s += static_cast<double>(lp[k2 * V + static_cast<std::size_t>(b.out_ids[k2])]);
    }
    if (!std::isfinite(s)) throw std::runtime_error("contrastive example " + ex.id + ": non-finite score");
    r.scores.push_back(s);
  }
  r.chosen = pick_candidate(r.scores);
  r.correct = r.chosen == 0;
  return r;
}

template <typename T>
std::vector<ContrastiveResult> score_contrastive_set(const Transformer<T>& m,
                                                     const std::vector<ContrastiveExample>& set,
                                                     const Vocab& src_vocab, const Vocab& tgt_vocab, std::size_t k = 0,
                                                     ScoreSpan span = ScoreSpan::FullWindow) {
  std::vector<ContrastiveResult> out;
  out.reserve(set.size());
  for (const auto& ex : set) out.push_back(score_contrastive(m, ex, src_vocab, tgt_vocab, k, span));
  return out;
}

// ---- aggregation ----------------------------------------------------------------

struct CategoryAccuracy {
  std::string name;
  double accuracy = 0.0;  // percent
  std::size_t n = 0;
  bool needs_context = true;  // false for the within-sentence (d = 0) category
};

struct AccuracyReport {
  std::vector<CategoryAccuracy> categories;  // in input order, empty ones excluded
  std::vector<std::string> empty;            // categories dropped for having no samples
  double disc = 0.0;                         // sample-weighted over context categories
  double disc_avg = 0.0;                     // unweighted over context categories
  std::optional<double> disc_all_d;          // weighted, within-sentence category included
  std::size_t n = 0;                         // samples in context categories
};

inline AccuracyReport aggregate(const std::vector<CategoryAccuracy>& cats) {
  if (cats.empty()) throw std::invalid_argument("aggregate: no categories");
  AccuracyReport r;
  double wsum = 0.0, usum = 0.0, all_wsum = 0.0;
  std::size_t ctx_cats = 0, all_n = 0;
  bool has_local = false;
  for (const auto& c : cats) {
    if (!(c.accuracy >= 0.0 && c.accuracy <= 100.0))
      throw std::invalid_argument("aggregate: accuracy of " + c.name + " outside [0, 100]");
    if (c.n == 0) {
      r.empty.push_back(c.name);
      continue;
    }
    r.categories.push_back(c);
    all_wsum += c.accuracy * static_cast<double>(c.n);
    all_n += c.n;
    if (!c.needs_context) {
      has_local = true;
      continue;
    }
    wsum += c.accuracy * static_cast<double>(c.n);
    usum += c.accuracy;
    r.n += c.n;
    ++ctx_cats;
  }
  if (ctx_cats == 0) throw std::invalid_argument("aggregate: no context category has samples");
  r.disc = wsum / static_cast<double>(r.n);
  r.disc_avg = usum / static_cast<double>(ctx_cats);
  if (has_local) r.disc_all_d = all_wsum / static_cast<double>(all_n);
  return r;
}

enum class GroupBy { Distance, Phenomenon };

/// Accuracy per antecedent distance ("d=0", "d=1", ...) or per phenomenon.
/// Distance 0 is the within-sentence category.
inline std::vector<CategoryAccuracy> categorize(const std::vector<ContrastiveResult>& results, GroupBy by) {
  if (results.empty()) throw std::invalid_argument("categorize: no results");
  std::map<std::string, std::pair<std::size_t, std::size_t>> counts;  // name -> (correct, total)
  std::map<std::string, bool> local;
  std::map<std::string, int> order;
  for (const auto& r : results) {
    const std::string name = by == GroupBy::Distance ? "d=" + std::to_string(r.distance) : r.phenomenon;
    auto& c = counts[name];
    c.first += r.correct ? 1 : 0;
    ++c.second;
    local[name] = by == GroupBy::Distance && r.distance == 0;
    order[name] = by == GroupBy::Distance ? r.distance : 0;
  }
  std::vector<CategoryAccuracy> out;
  for (const auto& [name, c] : counts)
    out.push_back({name, 100.0 * static_cast<double>(c.first) / static_cast<double>(c.second), c.second,
                   !local[name]});
  std::stable_sort(out.begin(), out.end(),
                   [&](const CategoryAccuracy& a, const CategoryAccuracy& b) { return order[a.name] < order[b.name]; });
  return out;
}

inline AccuracyReport aggregate(const std::vector<ContrastiveResult>& results, GroupBy by = GroupBy::Distance) {
  return aggregate(categorize(results, by));
}

/// Fraction of correct results among those with distance >= 1, in percent.
inline double inter_sentential_accuracy(const std::vector<ContrastiveResult>& results) {
  std::size_t n = 0, c = 0;
  for (const auto& r : results)
    if (r.distance >= 1) {
      ++n;
      c += r.correct ? 1 : 0;
    }
  if (n == 0) throw std::invalid_argument("no inter-sentential results");
  return 100.0 * static_cast<double>(c) / static_cast<double>(n);
}

}  // namespace cdmt
