#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "cdmt/model/transformer.hpp"

namespace cdmt {

/// ((5 + n) / 6)^alpha
inline double length_penalty(std::size_t n, double alpha) {
  return std::pow((5.0 + static_cast<double>(n)) / 6.0, alpha);
}

struct Hypothesis {
  std::vector<int> tokens;  // generated tokens, final <E> excluded
  double log_prob = 0.0;
  double score = 0.0;       // log_prob / length_penalty(generated tokens incl. <E>)
  bool finished = false;    // ended with <E> rather than at max_len
};

namespace detail {

/// Encoder states for a list of source windows, reusable across decoding
/// steps.
template <typename T>
struct EncodedSource {
  Batch batch;
  std::vector<T> memory;  // [batch.size * src_len, d_model]
  std::vector<int> shift;  // per window
};

template <typename T>
EncodedSource<T> encode_sources(const Transformer<T>& m, std::span<const Window* const> srcs) {
  EncodedSource<T> e;
  e.batch = make_batch(srcs, m.config());
  for (const auto* w : srcs) e.shift.push_back(window_shift(m.config(), *w));
  Graph<T> g(false);
  typename Transformer<T>::Context ctx{nullptr, nullptr, &e.batch};
  auto mem = m.encode(g, e.batch, ctx);
  e.memory.assign(mem.value().begin(), mem.value().end());
  return e;
}

template <typename T>
EncodedSource<T> encode_source(const Transformer<T>& m, const Window& src) {
  const Window* w = &src;
  return encode_sources(m, std::span<const Window* const>(&w, 1));
}

/// Next-token log-probabilities [prefixes.size(), V]; prefix i (start symbol
/// excluded) is decoded against source row rows[i]. All prefixes share one
/// length.
template <typename T>
std::vector<T> next_log_probs(const Transformer<T>& m, const EncodedSource<T>& src, const std::vector<std::size_t>& rows,
                              const std::vector<std::vector<int>>& prefixes) {
  const auto& cfg = m.config();
  const auto& eb = src.batch;
  const std::size_t n = prefixes.size(), S = eb.src_len, d = cfg.d_model, V = cfg.tgt_vocab;
  const std::size_t L = prefixes.front().size() + 1;
  Batch b;
  b.size = n;
  b.src_len = S;
  b.tgt_len = L;
  std::vector<T> mem;
  mem.reserve(n * S * d);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = rows[i];
    const long off = static_cast<long>(r * S);
    b.src_ids.insert(b.src_ids.end(), eb.src_ids.begin() + off, eb.src_ids.begin() + off + static_cast<long>(S));
    b.src_pos.insert(b.src_pos.end(), eb.src_pos.begin() + off, eb.src_pos.begin() + off + static_cast<long>(S));
    b.src_seg.insert(b.src_seg.end(), eb.src_seg.begin() + off, eb.src_seg.begin() + off + static_cast<long>(S));
    mem.insert(mem.end(), src.memory.begin() + off * static_cast<long>(d),
               src.memory.begin() + (off + static_cast<long>(S)) * static_cast<long>(d));
    std::vector<int> ids{kEosId};
    ids.insert(ids.end(), prefixes[i].begin(), prefixes[i].end());
    const auto seg = decoder_segments(ids);
    const auto pos = shifted_positions(seg, src.shift[r]);
    b.dec_ids.insert(b.dec_ids.end(), ids.begin(), ids.end());
    b.dec_seg.insert(b.dec_seg.end(), seg.begin(), seg.end());
    b.dec_pos.insert(b.dec_pos.end(), pos.begin(), pos.end());
    b.src_lengths.push_back(eb.src_lengths[r]);
    b.tgt_lengths.push_back(L);
    b.current_seg.push_back(seg.back());
  }
  b.out_ids.assign(n * L, kPadId);
  b.out_seg.assign(n * L, -1);

  Graph<T> g(false);
  typename Transformer<T>::Context ctx{nullptr, nullptr, &b};
  auto memory = g.constant({n * S, d}, std::move(mem));
  auto lp = m.project(g, m.decode(g, memory, b, ctx), n, L);
  const auto v = lp.value();
  std::vector<T> out(n * V);
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(v.data() + (i * L + L - 1) * V, V, out.data() + i * V);
  return out;
}

template <typename T>
std::vector<T> next_log_probs(const Transformer<T>& m, const EncodedSource<T>& src,
                              const std::vector<std::vector<int>>& prefixes) {
  return next_log_probs(m, src, std::vector<std::size_t>(prefixes.size(), 0), prefixes);
}

/// Most probable non-padding token of a row of log-probabilities.
template <typename T>
int argmax_token(const T* lp, std::size_t V) {
  int best = -1;
  for (std::size_t t = 0; t < V; ++t) {
    if (static_cast<int>(t) == kPadId) continue;
    if (best < 0 || lp[t] > lp[static_cast<std::size_t>(best)]) best = static_cast<int>(t);
  }
  return best;
}

}  // namespace detail

/// Argmax decoding (score = log_prob); stops at <E> or after max_len generated tokens.
template <typename T>
Hypothesis greedy_decode(const Transformer<T>& m, const Window& src, std::size_t max_len) {
  if (max_len < 1) throw std::invalid_argument("greedy_decode: max_len must be >= 1");
  max_len = std::min(max_len, m.config().max_len - 1);
  const auto enc = detail::encode_source(m, src);
  const std::size_t V = m.config().tgt_vocab;
  Hypothesis h;
  std::vector<std::vector<int>> prefix(1);
  for (std::size_t step = 0; step < max_len; ++step) {
    const auto lp = detail::next_log_probs(m, enc, prefix);
    const int best = detail::argmax_token(lp.data(), V);
    h.log_prob += static_cast<double>(lp[static_cast<std::size_t>(best)]);
    if (best == kEosId) {
      h.finished = true;
      break;
    }
    prefix[0].push_back(best);
  }
  h.tokens = prefix[0];
  h.score = h.log_prob;
  return h;
}

/// Greedy decoding of many windows at once; a window leaves the batch when it
/// emits <E>. Matches greedy_decode up to rounding from source padding.
template <typename T>
std::vector<Hypothesis> greedy_decode_batch(const Transformer<T>& m, std::span<const Window* const> srcs,
                                            std::size_t max_len) {
  if (max_len < 1) throw std::invalid_argument("greedy_decode_batch: max_len must be >= 1");
  if (srcs.empty()) return {};
  max_len = std::min(max_len, m.config().max_len - 1);
  const auto enc = detail::encode_sources(m, srcs);
  const std::size_t V = m.config().tgt_vocab;
  std::vector<Hypothesis> out(srcs.size());
  std::vector<std::size_t> active(srcs.size());
  std::iota(active.begin(), active.end(), std::size_t{0});
  for (std::size_t step = 0; step < max_len && !active.empty(); ++step) {
    std::vector<std::vector<int>> prefixes;
    for (auto i : active) prefixes.push_back(out[i].tokens);
    const auto lp = detail::next_log_probs(m, enc, active, prefixes);
    std::vector<std::size_t> still;
    for (std::size_t a = 0; a < active.size(); ++a) {
      auto& h = out[active[a]];
      const int best = detail::argmax_token(lp.data() + a * V, V);
      h.log_prob += static_cast<double>(lp[a * V + static_cast<std::size_t>(best)]);
      if (best == kEosId) {
        h.finished = true;
      } else {
        h.tokens.push_back(best);
        still.push_back(active[a]);
      }
    }
    active = std::move(still);
  }
  for (auto& h : out) h.score = h.log_prob;
  return out;
}

/// Beam search with length-normalised final scores.
///
/// Each step ranks the 2*beam best (hypothesis, token) extensions. An <E>
/// extension ranked within the first `beam` completes a hypothesis; the best
/// `beam` other extensions stay active. Search ends once `beam` hypotheses
/// have completed or max_len tokens were generated. With beam 1 this is
/// exactly greedy decoding.
template <typename T>
Hypothesis beam_search(const Transformer<T>& m, const Window& src, std::size_t beam, double alpha,
                       std::size_t max_len) {
  if (beam < 1) throw std::invalid_argument("beam_search: beam must be >= 1");
  if (max_len < 1) throw std::invalid_argument("beam_search: max_len must be >= 1");
  max_len = std::min(max_len, m.config().max_len - 1);
  const auto enc = detail::encode_source(m, src);
  const std::size_t V = m.config().tgt_vocab;

  std::vector<std::vector<int>> active(1);
  std::vector<double> active_lp(1, 0.0);
  std::vector<Hypothesis> done;
  for (std::size_t step = 0; step < max_len && done.size() < beam; ++step) {
    const auto lp = detail::next_log_probs(m, enc, active);
    std::vector<std::size_t> cand;
    cand.reserve(active.size() * V);
    for (std::size_t a = 0; a < active.size(); ++a)
      for (std::size_t t = 0; t < V; ++t)
        if (static_cast<int>(t) != kPadId) cand.push_back(a * V + t);
    auto total = [&](std::size_t c) { return active_lp[c / V] + static_cast<double>(lp[c]); };
    const std::size_t keep = std::min(cand.size(), 2 * beam);
    std::partial_sort(cand.begin(), cand.begin() + static_cast<long>(keep), cand.end(),
                      [&](std::size_t x, std::size_t y) {
                        const double sx = total(x), sy = total(y);
                        return sx > sy || (sx == sy && x < y);
                      });
    std::vector<std::vector<int>> next;
    std::vector<double> next_lp;
    for (std::size_t r = 0; r < keep; ++r) {
      const std::size_t c = cand[r];
      const int tok = static_cast<int>(c % V);
      const double s = total(c);
      if (tok == kEosId) {
        if (r < beam && done.size() < beam)
          done.push_back({active[c / V], s, s / length_penalty(step + 1, alpha), true});
      } else if (next.size() < beam) {
        auto toks = active[c / V];
        toks.push_back(tok);
        next.push_back(std::move(toks));
        next_lp.push_back(s);
      }
    }
    active = std::move(next);
    active_lp = std::move(next_lp);
    if (step + 1 == max_len && done.size() < beam)
      for (std::size_t a = 0; a < active.size(); ++a)
        done.push_back({active[a], active_lp[a], active_lp[a] / length_penalty(active[a].size(), alpha), false});
  }
  auto best = std::max_element(done.begin(), done.end(),
                               [](const Hypothesis& x, const Hypothesis& y) { return x.score < y.score; });
  return *best;
}

}  // namespace cdmt
