#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cdmt/tensor/rng.hpp"
#include "cdmt/tensor/tensor.hpp"

namespace cdmt {

enum class PositionScheme { Plain, Shifted };
enum class SegmentVariant { None, Sinusoidal, Learned };

inline PositionScheme parse_position_scheme(std::string_view s) {
  if (s == "plain") return PositionScheme::Plain;
  if (s == "shifted") return PositionScheme::Shifted;
  throw std::invalid_argument("position_scheme must be plain or shifted, got '" + std::string(s) + "'");
}

inline std::string to_string(PositionScheme s) { return s == PositionScheme::Plain ? "plain" : "shifted"; }

inline SegmentVariant parse_segment_variant(std::string_view s) {
  if (s == "none") return SegmentVariant::None;
  if (s == "sin") return SegmentVariant::Sinusoidal;
  if (s == "learned") return SegmentVariant::Learned;
  throw std::invalid_argument("segment_variant must be none, sin or learned, got '" + std::string(s) + "'");
}

inline std::string to_string(SegmentVariant v) {
  switch (v) {
    case SegmentVariant::None: return "none";
    case SegmentVariant::Sinusoidal: return "sin";
    case SegmentVariant::Learned: return "learned";
  }
  return {};
}

/// Interleaved sine/cosine encoding: [sin(p w_0), cos(p w_0), sin(p w_1), ...]
/// with w_i = 10000^(-2i/dim). Closed form, so any position is valid.
template <typename T = double>
void sinusoidal_pe_into(long position, std::size_t dim, T* out) {
  if (dim % 2 != 0) throw std::invalid_argument("sinusoidal_pe: dim must be even, got " + std::to_string(dim));
  if (position < 0) throw std::invalid_argument("sinusoidal_pe: position must be >= 0");
  const double p = static_cast<double>(position);
  for (std::size_t i = 0; i < dim / 2; ++i) {
    const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
    out[2 * i] = static_cast<T>(std::sin(p * freq));
    out[2 * i + 1] = static_cast<T>(std::cos(p * freq));
  }
}

template <typename T = double>
std::vector<T> sinusoidal_pe(long position, std::size_t dim) {
  std::vector<T> v(dim);
  sinusoidal_pe_into<T>(position, dim, v.data());
  return v;
}

inline void check_segments(std::span<const int> seg) {
  for (std::size_t i = 0; i < seg.size(); ++i) {
    if (seg[i] < 0) throw std::invalid_argument("segment indices must be >= 0");
    if (i > 0 && (seg[i] < seg[i - 1] || seg[i] > seg[i - 1] + 1))
      throw std::invalid_argument("segment indices must be non-decreasing with steps of at most 1");
  }
}

/// Effective position of token i: i + seg[i] * shift.
inline std::vector<int> shifted_positions(std::span<const int> seg, int shift) {
  if (shift < 0) throw std::invalid_argument("shifted_positions: shift must be >= 0");
  check_segments(seg);
  std::vector<int> out(seg.size());
  for (std::size_t i = 0; i < seg.size(); ++i) out[i] = static_cast<int>(i) + seg[i] * shift;
  return out;
}

struct PositionPlan {
  std::vector<int> positions;  // effective position per token
  std::vector<int> segments;   // sentence index per token
  PositionScheme scheme = PositionScheme::Plain;
  int shift = 0;
  SegmentVariant variant = SegmentVariant::None;
};

inline PositionPlan make_position_plan(std::span<const int> seg, PositionScheme scheme, int shift,
                                       SegmentVariant variant) {
  PositionPlan p;
  p.scheme = scheme;
  p.shift = scheme == PositionScheme::Shifted ? shift : 0;
  p.variant = variant;
  p.segments.assign(seg.begin(), seg.end());
  p.positions = shifted_positions(seg, p.shift);
  return p;
}

/// Trainable per-sentence-index embedding table of shape (max K, dim).
template <typename T>
struct LearnedSegmentTable {
  Parameter<T> table;

  LearnedSegmentTable() = default;
  LearnedSegmentTable(std::size_t max_k, std::size_t dim, CounterRng& rng, double stddev = 0.02)
      : table("segment.learned", {max_k, dim}) {
    for (auto& v : table.value) v = static_cast<T>(rng.normal(0.0, stddev));
  }

  std::size_t rows() const { return table.shape.empty() ? 0 : table.shape[0]; }
};

/// Additive segment vector for sentence index k. `learned` is required for
/// the learned variant only.
template <typename T>
std::vector<T> segment_embedding(int k, std::size_t dim, SegmentVariant variant,
                                 const LearnedSegmentTable<T>* learned = nullptr) {
  switch (variant) {
    case SegmentVariant::None: return std::vector<T>(dim, T(0));
    case SegmentVariant::Sinusoidal: return sinusoidal_pe<T>(k, dim);
    case SegmentVariant::Learned: {
      if (!learned) throw std::invalid_argument("segment_embedding: learned variant needs a table");
      if (k < 0 || static_cast<std::size_t>(k) >= learned->rows())
        throw std::out_of_range("segment_embedding: sentence index " + std::to_string(k) + " outside table of " +
                                std::to_string(learned->rows()) + " rows");
      if (learned->table.shape[1] != dim) throw std::invalid_argument("segment_embedding: dim mismatch");
      const auto* row = learned->table.value.data() + static_cast<std::size_t>(k) * dim;
      return std::vector<T>(row, row + dim);
    }
  }
  return {};
}

}  // namespace cdmt
