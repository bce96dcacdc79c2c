#pragma once

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdmt/model/config.hpp"

namespace cdmt {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Everything a training run needs besides the data. Keys of the flat text
/// format are the hyphenated field names listed by TrainConfig::keys().
struct TrainConfig {
  // windows and model
  std::size_t k = 2;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t d_model = 128;
  std::size_t d_ff = 256;
  double dropout = 0.3;
  std::size_t max_k = 4;
  std::size_t max_len = 256;
  PositionScheme position_scheme = PositionScheme::Plain;
  SegmentVariant segment_variant = SegmentVariant::None;
  ShiftStrategy shift{ShiftStrategy::Kind::Fixed, 0};

  // optimisation
  double peak_lr = 1e-3;
  std::size_t warmup = 400;
  std::size_t batch_tokens = 1024;
  std::size_t max_epochs = 30;
  std::size_t max_steps = 0;  // 0: bounded by max_epochs only
  std::size_t valid_interval = 200;
  std::size_t patience = 12;
  std::size_t average = 5;
  double cd = 1.0;
  double label_smoothing = 0.1;
  double clip_norm = 0.0;  // 0 disables clipping
  std::uint64_t seed = 1;
  std::string precision = "float";

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
    if (k < 1) fail("k must be >= 1");
    if (k > max_k) fail("k must not exceed max-k");
    if (warmup < 1) fail("warmup must be >= 1");
    if (batch_tokens < 1) fail("batch-tokens must be >= 1");
    if (patience < 1) fail("patience must be >= 1");
    if (valid_interval < 1) fail("valid-interval must be >= 1");
    if (average < 1) fail("average must be >= 1");
    if (max_epochs < 1) fail("max-epochs must be >= 1");
    if (!(peak_lr > 0.0)) fail("peak-lr must be positive");
    if (!(cd >= 0.0 && cd <= 1.0)) fail("cd must lie in [0, 1]");
    if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) fail("label-smoothing must lie in [0, 1)");
    if (!(clip_norm >= 0.0)) fail("clip-norm must be >= 0");
    if (precision != "float" && precision != "double") fail("precision must be float or double");
    ModelConfig m = model_config(kNumReserved + 1, kNumReserved + 1);
    try {
      m.validate();
    } catch (const std::invalid_argument& e) {
      fail(e.what());
    }
  }

  ModelConfig model_config(std::size_t src_vocab, std::size_t tgt_vocab) const {
    ModelConfig m;
    m.layers = layers;
    m.heads = heads;
    m.d_model = d_model;
    m.d_ff = d_ff;
    m.dropout = dropout;
    m.max_k = max_k;
    m.max_len = max_len;
    m.src_vocab = src_vocab;
    m.tgt_vocab = tgt_vocab;
    m.position_scheme = position_scheme;
    m.segment_variant = segment_variant;
    m.shift = shift;
    return m;
  }

  /// Schedule scale that puts the warmup peak at peak_lr.
  double lr_scale() const {
    return peak_lr * std::sqrt(static_cast<double>(d_model)) * std::sqrt(static_cast<double>(warmup));
  }

  struct Key {
    std::string name;
    std::function<void(TrainConfig&, const std::string&)> set;
    std::function<std::string(const TrainConfig&)> get;
  };

  static const std::vector<Key>& keys();

  static std::string valid_keys() {
    std::string s;
    for (const auto& k : keys()) s += (s.empty() ? "" : ", ") + k.name;
    return s;
  }

  void set(const std::string& key, const std::string& value) {
    for (const auto& k : keys())
      if (k.name == key) {
        try {
          k.set(*this, value);
        } catch (const ConfigError&) {
          throw;
        } catch (const std::exception& e) {
          throw ConfigError("invalid value '" + value + "' for " + key + ": " + e.what());
        }
        return;
      }
    throw ConfigError("unknown config key '" + key + "'; valid keys: " + valid_keys());
  }

  std::string get(const std::string& key) const {
    for (const auto& k : keys())
      if (k.name == key) return k.get(*this);
    throw ConfigError("unknown config key '" + key + "'; valid keys: " + valid_keys());
  }

  /// `key = value` lines; `#` starts a comment.
  static TrainConfig parse(std::istream& in) { return parse(in, TrainConfig()); }

  static TrainConfig parse(std::istream& in, TrainConfig base) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
      base.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return base;
  }

  static TrainConfig load(const std::string& path) { return load(path, TrainConfig()); }

  static TrainConfig load(const std::string& path, TrainConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    return parse(in, std::move(base));
  }

  std::string to_text() const {
    std::string s;
    for (const auto& k : keys()) s += k.name + " = " + k.get(*this) + "\n";
    return s;
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& k : keys()) j[k.name] = k.get(*this);
    return j;
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    for (const auto& [key, v] : j.items()) c.set(key, v.is_string() ? v.get<std::string>() : v.dump());
    return c;
  }

  friend bool operator==(const TrainConfig& a, const TrainConfig& b) { return a.to_json() == b.to_json(); }
};

namespace detail {

inline std::size_t parse_count(const std::string& v) {
  std::size_t used = 0;
  if (v.empty() || v[0] == '-') throw std::invalid_argument("expected a nonnegative integer");
  const auto n = std::stoull(v, &used);
  if (used != v.size()) throw std::invalid_argument("expected a nonnegative integer");
  return static_cast<std::size_t>(n);
}

inline double parse_real(const std::string& v) {
  std::size_t used = 0;
  const double x = std::stod(v, &used);
  if (used != v.size()) throw std::invalid_argument("expected a number");
  return x;
}

inline std::string format_real(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

}  // namespace detail

inline const std::vector<TrainConfig::Key>& TrainConfig::keys() {
  using C = TrainConfig;
  auto count = [](std::size_t C::*f, const char* name) {
    return Key{name, [f](C& c, const std::string& v) { c.*f = detail::parse_count(v); },
               [f](const C& c) { return std::to_string(c.*f); }};
  };
  auto real = [](double C::*f, const char* name) {
    return Key{name, [f](C& c, const std::string& v) { c.*f = detail::parse_real(v); },
               [f](const C& c) { return detail::format_real(c.*f); }};
  };
  static const std::vector<Key> table = {
      count(&C::k, "k"),
      count(&C::layers, "layers"),
      count(&C::heads, "heads"),
      count(&C::d_model, "d-model"),
      count(&C::d_ff, "d-ff"),
      real(&C::dropout, "dropout"),
      count(&C::max_k, "max-k"),
      count(&C::max_len, "max-len"),
      Key{"position-scheme", [](C& c, const std::string& v) { c.position_scheme = parse_position_scheme(v); },
          [](const C& c) { return to_string(c.position_scheme); }},
      Key{"segment-variant", [](C& c, const std::string& v) { c.segment_variant = parse_segment_variant(v); },
          [](const C& c) { return to_string(c.segment_variant); }},
      Key{"shift-strategy", [](C& c, const std::string& v) { c.shift = ShiftStrategy::parse(v); },
          [](const C& c) { return c.shift.str(); }},
      real(&C::peak_lr, "peak-lr"),
      count(&C::warmup, "warmup"),
      count(&C::batch_tokens, "batch-tokens"),
      count(&C::max_epochs, "max-epochs"),
      count(&C::max_steps, "max-steps"),
      count(&C::valid_interval, "valid-interval"),
      count(&C::patience, "patience"),
      count(&C::average, "average"),
      real(&C::cd, "cd"),
      real(&C::label_smoothing, "label-smoothing"),
      real(&C::clip_norm, "clip-norm"),
      Key{"seed", [](C& c, const std::string& v) { c.seed = detail::parse_count(v); },
          [](const C& c) { return std::to_string(c.seed); }},
      Key{"precision", [](C& c, const std::string& v) { c.precision = v; }, [](const C& c) { return c.precision; }},
  };
  return table;
}

/// scale * d^-0.5 * min(step^-0.5, step * warmup^-1.5)
inline double lr_at(std::size_t step, std::size_t d_model, std::size_t warmup, double scale) {
  if (step == 0) throw std::invalid_argument("lr_at: steps are counted from 1");
  if (warmup == 0 || d_model == 0) throw std::invalid_argument("lr_at: warmup and d_model must be positive");
  const double s = static_cast<double>(step), w = static_cast<double>(warmup);
  return scale / std::sqrt(static_cast<double>(d_model)) * std::min(1.0 / std::sqrt(s), s * std::pow(w, -1.5));
}

/// Candidate peak learning rates; kept as data, not searched automatically.
inline const std::vector<double>& peak_lr_grid() {
  static const std::vector<double> g{7e-4, 9e-4, 1e-3, 3e-3};
  return g;
}

}  // namespace cdmt
