#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdmt/model/transformer.hpp"

namespace cdmt {

inline void check_attention_row(const std::vector<double>& row) {
  double s = 0.0;
  for (double w : row) {
    if (!(w >= 0.0)) throw std::invalid_argument("attention row has a negative or NaN weight");
    s += w;
  }
  if (std::abs(s - 1.0) > 1e-4)
    throw std::invalid_argument("attention row sums to " + std::to_string(s) + ", not 1");
}

/// -sum w ln w with 0 ln 0 = 0.
inline double row_entropy(const std::vector<double>& row) {
  check_attention_row(row);
  double h = 0.0;
  for (double w : row)
    if (w > 0.0) h -= w * std::log(w);
  return h;
}

/// Mean entropy over every query row of every head, layer and attention kind.
inline double attention_entropy(const std::vector<AttentionRecord>& records) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : records)
    for (const auto& row : r.rows) {
      sum += row_entropy(row);
      ++n;
    }
  if (n == 0) throw std::invalid_argument("attention_entropy: no attention rows");
  return sum / static_cast<double>(n);
}

/// Mean weight that current-sentence queries of encoder and decoder
/// self-attention put on current-sentence keys.
inline double current_attention_mass(const std::vector<AttentionRecord>& records) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : records) {
    if (r.kind == AttentionKind::Cross) continue;
    if (r.query_seg.size() != r.rows.size()) throw std::invalid_argument("attention record: query segments mismatch");
    for (std::size_t q = 0; q < r.rows.size(); ++q) {
      if (r.query_seg[q] != r.current_seg) continue;
      const auto& row = r.rows[q];
      if (row.size() != r.key_seg.size()) throw std::invalid_argument("attention record: key segments mismatch");
      check_attention_row(row);
      double m = 0.0;
      for (std::size_t k = 0; k < row.size(); ++k)
        if (r.key_seg[k] == r.current_seg) m += row[k];
      sum += m;
      ++n;
    }
  }
  if (n == 0) throw std::invalid_argument("current_attention_mass: no current-sentence queries");
  return sum / static_cast<double>(n);
}

/// Per-window diagnostics of a model on teacher-forced windows.
struct AttentionDiagnostics {
  std::vector<double> entropy;  // per window
  std::vector<double> mass;     // per window
  double mean_entropy = 0.0;    // over all rows of all windows
  double mean_mass = 0.0;       // over all current-sentence queries of all windows
};

template <typename T>
AttentionDiagnostics attention_diagnostics(const Transformer<T>& m, const std::vector<Window>& ws,
                                           std::size_t batch_windows = 16) {
  if (ws.empty()) throw std::invalid_argument("attention_diagnostics: no windows");
  AttentionDiagnostics d;
  double h_sum = 0.0, m_sum = 0.0;
  std::size_t h_n = 0, m_n = 0;
  for (std::size_t start = 0; start < ws.size(); start += batch_windows) {
    std::vector<const Window*> ptrs;
    for (std::size_t i = start; i < std::min(ws.size(), start + batch_windows); ++i) ptrs.push_back(&ws[i]);
    const Batch b = make_batch(ptrs, m.config());
    Graph<T> g(false);
    const auto out = m.forward(g, b, {nullptr, true});
    for (const auto& recs : out.attention) {
      d.entropy.push_back(attention_entropy(recs));
      d.mass.push_back(current_attention_mass(recs));
      for (const auto& r : recs) {
        for (const auto& row : r.rows) h_sum += row_entropy(row);
        h_n += r.rows.size();
        if (r.kind == AttentionKind::Cross) continue;
        for (std::size_t q = 0; q < r.rows.size(); ++q) {
          if (r.query_seg[q] != r.current_seg) continue;
          for (std::size_t k = 0; k < r.rows[q].size(); ++k)
            if (r.key_seg[k] == r.current_seg) m_sum += r.rows[q][k];
          ++m_n;
        }
      }
    }
  }
  d.mean_entropy = h_sum / static_cast<double>(h_n);
  d.mean_mass = m_sum / static_cast<double>(m_n);
  return d;
}

}  // namespace cdmt
