#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdmt/corpus/window.hpp"
#include "cdmt/model/transformer.hpp"
#include "cdmt/tensor/tensor.hpp"

namespace cdmt {

struct DiscountConfig {
  double cd = 1.0;
  double label_smoothing = 0.1;

  void validate() const {
    if (!(cd >= 0.0 && cd <= 1.0)) throw std::invalid_argument("cd must lie in [0, 1]");
    if (!(label_smoothing >= 0.0 && label_smoothing < 1.0))
      throw std::invalid_argument("label smoothing must lie in [0, 1)");
  }
};

/// Raw loss sums for one window or a set of windows.
struct LossBreakdown {
  double current = 0.0;  // summed over the current span, <E> included
  double context = 0.0;  // summed over all earlier tokens, their <S> included
  double total = 0.0;    // cd * context + current
  std::size_t current_tokens = 0;
  std::size_t context_tokens = 0;
  std::size_t context_sentences = 0;
  std::size_t windows = 0;

  LossBreakdown& operator+=(const LossBreakdown& o) {
    current += o.current;
    context += o.context;
    total += o.total;
    current_tokens += o.current_tokens;
    context_tokens += o.context_tokens;
    context_sentences += o.context_sentences;
    windows += o.windows;
    return *this;
  }
};

inline void check_smoothing(double eps) {
  if (!(eps >= 0.0 && eps < 1.0)) throw std::invalid_argument("label smoothing must lie in [0, 1)");
}

/// Per-token label-smoothed negative log-likelihood over log_probs [..., V]:
/// (1 - eps) * -log p[target] + eps * mean_v(-log p[v]). Rows whose `keep`
/// entry is 0 contribute 0; an empty `keep` keeps every row.
template <typename T>
Var<T> smoothed_nll(Graph<T>& g, Var<T> log_probs, std::span<const int> targets, double eps,
                    std::span<const std::uint8_t> keep = {}) {
  check_smoothing(eps);
  const Shape& s = g.shape(log_probs);
  if (s.empty()) throw ShapeError("smoothed_nll", s, "has no vocabulary axis");
  const std::size_t V = s.back();
  const std::size_t n = g.value(log_probs).size() / V;
  if (targets.size() != n) throw ShapeError("smoothed_nll", s, Shape{targets.size()});
  if (!keep.empty() && keep.size() != n) throw ShapeError("smoothed_nll", s, Shape{keep.size()});
  std::vector<int> tg(targets.begin(), targets.end());
  for (std::size_t i = 0; i < n; ++i)
    if (!keep.empty() && !keep[i]) tg[i] = -1;
  const auto& lp = g.value(log_probs);
  const T a = static_cast<T>(1.0 - eps), b = static_cast<T>(eps / static_cast<double>(V));
  std::vector<T> out(n, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    if (tg[i] == -1) continue;
    if (tg[i] < 0 || static_cast<std::size_t>(tg[i]) >= V)
      throw std::out_of_range("smoothed_nll: target id " + std::to_string(tg[i]) + " outside vocabulary of " +
                              std::to_string(V));
    const T* row = lp.data() + i * V;
    T sum = T(0);
    for (std::size_t c = 0; c < V; ++c) sum += row[c];
    out[i] = -a * row[tg[i]] - b * sum;
  }
  return g.custom({n}, std::move(out), {log_probs}, [log_probs, tg = std::move(tg), V, a, b](Graph<T>& g, Var<T> out) {
    const auto& go = g.grad(out);
    auto& gl = g.grad(log_probs);
    for (std::size_t i = 0; i < tg.size(); ++i) {
      if (tg[i] < 0 || go[i] == T(0)) continue;
      T* row = gl.data() + i * V;
      for (std::size_t c = 0; c < V; ++c) row[c] -= b * go[i];
      row[tg[i]] -= a * go[i];
    }
  });
}

/// Non-padding output positions of a batch.
inline std::vector<std::uint8_t> output_mask(const Batch& b) {
  std::vector<std::uint8_t> keep(b.out_seg.size());
  for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = b.out_seg[i] >= 0;
  return keep;
}

/// Plain-array version of smoothed_nll for one row.
inline double smoothed_nll_row(std::span<const double> log_probs, int target, double eps) {
  check_smoothing(eps);
  if (target < 0 || static_cast<std::size_t>(target) >= log_probs.size())
    throw std::out_of_range("smoothed_nll: target id outside vocabulary");
  double sum = 0;
  for (double v : log_probs) sum += v;
  return -(1.0 - eps) * log_probs[static_cast<std::size_t>(target)] - eps / static_cast<double>(log_probs.size()) * sum;
}

namespace detail {

inline void check_window_losses(std::span<const double> losses, const Window& w) {
  if (losses.size() != w.tgt_ids.size())
    throw std::invalid_argument("loss vector has " + std::to_string(losses.size()) + " entries for a target of " +
                                std::to_string(w.tgt_ids.size()) + " tokens");
  if (w.tgt_seg.size() != w.tgt_ids.size() || w.current_begin > w.current_end || w.current_end > w.tgt_ids.size())
    throw std::invalid_argument("window spans are inconsistent with its target");
}

}  // namespace detail

/// Sum over every target position of the window: context, current, <S> and <E>.
inline double concat_loss(std::span<const double> losses, const Window& w) {
  detail::check_window_losses(losses, w);
  double s = 0.0;
  for (double v : losses) s += v;
  return s;
}

/// Split per-token losses of one window into its current and context parts.
inline LossBreakdown context_discounted_loss(std::span<const double> losses, const Window& w, double cd) {
  if (!(cd >= 0.0 && cd <= 1.0)) throw std::invalid_argument("cd must lie in [0, 1]");
  detail::check_window_losses(losses, w);
  if (w.current_begin >= w.current_end) throw std::invalid_argument("window has an empty current span");
  LossBreakdown r;
  const int cur = w.current_segment();
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (w.tgt_seg[i] == cur) {
      r.current += losses[i];
      ++r.current_tokens;
    } else {
      r.context += losses[i];
      ++r.context_tokens;
    }
  }
  r.total = cd * r.context + r.current;
  r.context_sentences = w.context_sentences();
  r.windows = 1;
  return r;
}

/// Differentiable discounted loss for a batch.
template <typename T>
struct BatchLoss {
  Var<T> total;                        // cd * context + current, summed over the batch
  std::vector<LossBreakdown> windows;  // per window, unnormalised
  LossBreakdown sum;
};

/// token_losses is [batch * tgt_len] as produced by smoothed_nll on the
/// batch's output ids. Positions are assigned by sentence index: tokens of
/// the last sentence (with <E>) are current, all others context.
template <typename T>
BatchLoss<T> context_discounted_loss(Graph<T>& g, Var<T> token_losses, const Batch& b, double cd) {
  if (!(cd >= 0.0 && cd <= 1.0)) throw std::invalid_argument("cd must lie in [0, 1]");
  const std::size_t L = b.tgt_len;
  if (g.value(token_losses).size() != b.size * L)
    throw ShapeError("context_discounted_loss", g.shape(token_losses), Shape{b.size * L});
  std::vector<T> cur_w(b.size * L, T(0)), ctx_w(b.size * L, T(0));
  BatchLoss<T> out;
  const auto& lv = g.value(token_losses);
  for (std::size_t i = 0; i < b.size; ++i) {
    LossBreakdown r;
    for (std::size_t t = 0; t < L; ++t) {
      const std::size_t k = i * L + t;
      if (b.out_seg[k] < 0) continue;
      if (b.out_seg[k] == b.current_seg[i]) {
        cur_w[k] = T(1);
        r.current += static_cast<double>(lv[k]);
        ++r.current_tokens;
      } else {
        ctx_w[k] = T(1);
        r.context += static_cast<double>(lv[k]);
        ++r.context_tokens;
      }
    }
    if (r.current_tokens == 0) throw std::invalid_argument("window has an empty current span");
    r.total = cd * r.context + r.current;
    r.context_sentences = static_cast<std::size_t>(b.current_seg[i]);
    r.windows = 1;
    out.sum += r;
    out.windows.push_back(r);
  }
  auto current = g.weighted_sum(token_losses, std::move(cur_w));
  auto context = g.weighted_sum(token_losses, std::move(ctx_w));
  out.total = g.add(g.scale(context, static_cast<T>(cd)), current);
  return out;
}

/// Mean per-sentence current loss over mean per-sentence context loss, over
/// windows that have at least one context sentence.
inline double loss_ratio(std::span<const LossBreakdown> windows) {
  double cur = 0.0, ctx = 0.0;
  std::size_t n = 0;
  for (const auto& w : windows) {
    if (w.context_sentences == 0) continue;
    cur += w.current;
    ctx += w.context / static_cast<double>(w.context_sentences);
    ++n;
  }
  if (n == 0) throw std::invalid_argument("loss_ratio: no window has a context sentence");
  if (ctx == 0.0) throw std::domain_error("loss_ratio: context loss is zero");
  return (cur / static_cast<double>(n)) / (ctx / static_cast<double>(n));
}

}  // namespace cdmt
