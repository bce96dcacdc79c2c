#pragma once

#include "json.hpp"

#include <stdexcept>
#include <string>

#include "cdmt/corpus/window.hpp"
#include "cdmt/positions/positions.hpp"

namespace cdmt {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t d_model = 128;
  std::size_t d_ff = 256;
  double dropout = 0.3;
  std::size_t max_k = 4;      // rows of the learned segment table
  std::size_t max_len = 256;  // tokens per side, separators included
  std::size_t src_vocab = 0;
  std::size_t tgt_vocab = 0;
  PositionScheme position_scheme = PositionScheme::Plain;
  SegmentVariant segment_variant = SegmentVariant::None;
  ShiftStrategy shift{ShiftStrategy::Kind::Fixed, 0};  // avg-corpus keeps its resolved value here

  void validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("model config: " + m); };
    if (layers < 1) fail("layers must be >= 1");
    if (heads < 1 || d_model % heads != 0) fail("d_model must be divisible by heads");
    if (d_model % 2 != 0) fail("d_model must be even for sinusoidal encodings");
    if (d_ff < 1) fail("d_ff must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
    if (max_k < 1) fail("max_k must be >= 1");
    if (max_len < 2) fail("max_len must be >= 2");
    if (src_vocab <= static_cast<std::size_t>(kNumReserved) || tgt_vocab <= static_cast<std::size_t>(kNumReserved))
      fail("vocabularies must contain more than the reserved tokens");
  }

  nlohmann::json to_json() const {
    return {{"layers", layers},
            {"heads", heads},
            {"d_model", d_model},
            {"d_ff", d_ff},
            {"dropout", dropout},
            {"max_k", max_k},
            {"max_len", max_len},
            {"src_vocab", src_vocab},
            {"tgt_vocab", tgt_vocab},
            {"position_scheme", to_string(position_scheme)},
            {"segment_variant", to_string(segment_variant)},
            {"shift_strategy", shift.str()},
            {"shift_value", shift.value}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.layers = j.at("layers").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.d_ff = j.at("d_ff").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.max_k = j.at("max_k").get<std::size_t>();
    c.max_len = j.at("max_len").get<std::size_t>();
    c.src_vocab = j.at("src_vocab").get<std::size_t>();
    c.tgt_vocab = j.at("tgt_vocab").get<std::size_t>();
    c.position_scheme = parse_position_scheme(j.at("position_scheme").get<std::string>());
    c.segment_variant = parse_segment_variant(j.at("segment_variant").get<std::string>());
    c.shift = ShiftStrategy::parse(j.at("shift_strategy").get<std::string>());
    c.shift.value = j.at("shift_value").get<int>();
    c.validate();
    return c;
  }

  friend bool operator==(const ModelConfig& a, const ModelConfig& b) { return a.to_json() == b.to_json(); }
};

/// Shift applied to one window: zero for plain positions, otherwise resolved
/// from the strategy (per window for avg-sequence).
inline int window_shift(const ModelConfig& c, const Window& w) {
  if (c.position_scheme == PositionScheme::Plain) return 0;
  if (c.shift.kind == ShiftStrategy::Kind::AvgSequence) return avg_sequence_shift(w);
  return c.shift.value;
}

}  // namespace cdmt
