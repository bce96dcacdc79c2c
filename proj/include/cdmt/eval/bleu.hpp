#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace cdmt {

using Sentence = std::vector<std::string>;

/// Sufficient statistics of corpus BLEU; sums over sentences are additive.
struct BleuStats {
  std::vector<std::size_t> matches, totals;  // per order 1..max_n
  std::size_t hyp_len = 0, ref_len = 0;

  explicit BleuStats(std::size_t max_n = 4) : matches(max_n, 0), totals(max_n, 0) {}

  BleuStats& operator+=(const BleuStats& o) {
    if (o.matches.size() != matches.size()) throw std::invalid_argument("BleuStats: different max n");
    for (std::size_t i = 0; i < matches.size(); ++i) {
      matches[i] += o.matches[i];
      totals[i] += o.totals[i];
    }
    hyp_len += o.hyp_len;
    ref_len += o.ref_len;
    return *this;
  }
};

/// Clipped n-gram matches of one hypothesis against one reference.
inline BleuStats sentence_stats(const Sentence& hyp, const Sentence& ref, std::size_t max_n = 4) {
  if (max_n < 1) throw std::invalid_argument("bleu: max n must be >= 1");
  if (ref.empty()) throw std::invalid_argument("bleu: empty reference");
  BleuStats s(max_n);
  s.hyp_len = hyp.size();
  s.ref_len = ref.size();
  for (std::size_t n = 1; n <= max_n; ++n) {
    std::map<std::vector<std::string>, std::size_t> ref_counts;
    for (std::size_t i = 0; i + n <= ref.size(); ++i)
      ++ref_counts[std::vector<std::string>(ref.begin() + static_cast<long>(i), ref.begin() + static_cast<long>(i + n))];
    std::map<std::vector<std::string>, std::size_t> hyp_counts;
    for (std::size_t i = 0; i + n <= hyp.size(); ++i)
      ++hyp_counts[std::vector<std::string>(hyp.begin() + static_cast<long>(i), hyp.begin() + static_cast<long>(i + n))];
    for (const auto& [gram, c] : hyp_counts) {
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) s.matches[n - 1] += std::min(c, it->second);
      s.totals[n - 1] += c;
    }
  }
  return s;
}

/// Unsmoothed BLEU in [0, 100] from accumulated statistics.
inline double bleu_from_stats(const BleuStats& s) {
  double log_p = 0.0;
  for (std::size_t i = 0; i < s.matches.size(); ++i) {
    if (s.matches[i] == 0) return 0.0;
    log_p += std::log(static_cast<double>(s.matches[i]) / static_cast<double>(s.totals[i]));
  }
  log_p /= static_cast<double>(s.matches.size());
  const double bp = s.hyp_len < s.ref_len
                        ? std::exp(1.0 - static_cast<double>(s.ref_len) / static_cast<double>(s.hyp_len))
                        : 1.0;
  return 100.0 * bp * std::exp(log_p);
}

inline std::vector<BleuStats> bleu_stats(const std::vector<Sentence>& hyps, const std::vector<Sentence>& refs,
                                         std::size_t max_n = 4) {
  if (hyps.size() != refs.size())
    throw std::invalid_argument("bleu: " + std::to_string(hyps.size()) + " hypotheses for " +
                                std::to_string(refs.size()) + " references");
  if (hyps.empty()) throw std::invalid_argument("bleu: empty corpus");
  std::vector<BleuStats> out;
  out.reserve(hyps.size());
  for (std::size_t i = 0; i < hyps.size(); ++i) out.push_back(sentence_stats(hyps[i], refs[i], max_n));
  return out;
}

inline double corpus_bleu(const std::vector<BleuStats>& stats) {
  if (stats.empty()) throw std::invalid_argument("bleu: empty corpus");
  BleuStats sum(stats.front().matches.size());
  for (const auto& s : stats) sum += s;
  return bleu_from_stats(sum);
}

/// Corpus-level BLEU over tokenized sentences, one reference each.
inline double bleu(const std::vector<Sentence>& hyps, const std::vector<Sentence>& refs, std::size_t max_n = 4) {
  return corpus_bleu(bleu_stats(hyps, refs, max_n));
}

}  // namespace cdmt
