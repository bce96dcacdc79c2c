#pragma once

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cdmt/corpus/document.hpp"
#include "cdmt/corpus/window.hpp"
#include "cdmt/model/io.hpp"
#include "cdmt/objective/objective.hpp"
#include "cdmt/trainer/config.hpp"

namespace cdmt {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when the loss or gradient stops being finite. what() is a JSON
/// object with step, lr, grad_norm and loss.
class TrainAborted : public TrainError {
 public:
  TrainAborted(std::size_t step, double lr, double grad_norm, double loss)
      : TrainError(nlohmann::json{{"error", "non-finite loss"},
                                  {"step", step},
                                  {"lr", lr},
                                  {"grad_norm", finite_or_string(grad_norm)},
                                  {"loss", finite_or_string(loss)}}
                       .dump()),
        step(step), lr(lr), grad_norm(grad_norm), loss(loss) {}

  std::size_t step;
  double lr, grad_norm, loss;

 private:
  static nlohmann::json finite_or_string(double x) {
    if (std::isfinite(x)) return x;
    return std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf");
  }
};

// ---- optimiser -----------------------------------------------------------------

/// Adam with bias correction.
template <typename T>
struct Adam {
  double beta1 = 0.9, beta2 = 0.98, eps = 1e-9;
  std::size_t t = 0;
  std::vector<std::vector<T>> m, v;

  void init(std::span<Parameter<T>* const> ps) {
    t = 0;
    m.clear();
    v.clear();
    for (auto* p : ps) {
      m.emplace_back(p->size(), T(0));
      v.emplace_back(p->size(), T(0));
    }
  }

  void step(std::span<Parameter<T>* const> ps, double lr) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    const T b1 = static_cast<T>(beta1), b2 = static_cast<T>(beta2);
    const T step_size = static_cast<T>(lr / c1), root_c2 = static_cast<T>(std::sqrt(c2)), e = static_cast<T>(eps);
    for (std::size_t i = 0; i < ps.size(); ++i) {
      auto& p = *ps[i];
      auto& mi = m[i];
      auto& vi = v[i];
      for (std::size_t j = 0; j < p.size(); ++j) {
        const T g = p.grad[j];
        mi[j] = b1 * mi[j] + (T(1) - b1) * g;
        vi[j] = b2 * vi[j] + (T(1) - b2) * g * g;
        p.value[j] -= step_size * mi[j] / (std::sqrt(vi[j]) / root_c2 + e);
      }
    }
  }
};

template <typename T>
double grad_norm(std::span<Parameter<T>* const> ps) {
  double s = 0.0;
  for (const auto* p : ps)
    for (T g : p->grad) s += static_cast<double>(g) * static_cast<double>(g);
  return std::sqrt(s);
}

// ---- batching ------------------------------------------------------------------

/// Group window indices so that rows * longest side stays within
/// batch_tokens (a single oversized window still forms its own batch).
/// Windows are length-sorted to limit padding; with an rng the order within
/// equal lengths and the order of batches are shuffled.
inline std::vector<std::vector<std::size_t>> token_batches(const std::vector<Window>& ws, std::size_t batch_tokens,
                                                            CounterRng* rng = nullptr) {
  if (batch_tokens < 1) throw std::invalid_argument("token_batches: batch_tokens must be >= 1");
  std::vector<std::size_t> idx(ws.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (rng) shuffle(idx.begin(), idx.end(), *rng);
  auto len = [&](std::size_t i) { return std::max(ws[i].src_ids.size(), ws[i].tgt_ids.size()); };
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return len(a) < len(b); });
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> cur;
  std::size_t longest = 0;
  for (auto i : idx) {
    const std::size_t l = std::max(longest, len(i));
    if (!cur.empty() && (cur.size() + 1) * l > batch_tokens) {
      out.push_back(std::move(cur));
      cur.clear();
      longest = 0;
    }
    cur.push_back(i);
    longest = std::max(longest, len(i));
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  if (rng) shuffle(out.begin(), out.end(), *rng);
  return out;
}

inline Batch batch_of(const std::vector<Window>& ws, const std::vector<std::size_t>& idx, const ModelConfig& cfg) {
  std::vector<const Window*> ptrs;
  ptrs.reserve(idx.size());
  for (auto i : idx) ptrs.push_back(&ws[i]);
  return make_batch(ptrs, cfg);
}

// ---- evaluation of the training objective ---------------------------------------

struct LossSummary {
  LossBreakdown sum;
  std::vector<LossBreakdown> windows;  // in input order

  double current_per_token() const {
    return sum.current_tokens ? sum.current / static_cast<double>(sum.current_tokens) : 0.0;
  }
  double context_per_token() const {
    return sum.context_tokens ? sum.context / static_cast<double>(sum.context_tokens)
                              : std::numeric_limits<double>::quiet_NaN();
  }
  /// NaN when no window carries context.
  double ratio() const {
    try {
      return loss_ratio(windows);
    } catch (const std::exception&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  }
};

/// Teacher-forced losses without dropout.
template <typename T>
LossSummary evaluate_loss(const Transformer<T>& m, const std::vector<Window>& ws, std::size_t batch_tokens, double cd,
                          double label_smoothing) {
  LossSummary out;
  out.windows.resize(ws.size());
  for (const auto& idx : token_batches(ws, batch_tokens)) {
    const Batch b = batch_of(ws, idx, m.config());
    Graph<T> g(false);
    auto fw = m.forward(g, b);
    auto tok = smoothed_nll(g, fw.log_probs, b.out_ids, label_smoothing, output_mask(b));
    auto bl = context_discounted_loss(g, tok, b, cd);
    for (std::size_t i = 0; i < idx.size(); ++i) out.windows[idx[i]] = bl.windows[i];
  }
  for (const auto& w : out.windows) out.sum += w;
  return out;
}

// ---- early stopping and checkpoint averaging ----------------------------------------

/// Tracks the best validation loss; a strictly lower loss is required to
/// improve, so the earliest of equal losses stays best.
struct EarlyStopping {
  std::size_t patience = 12;
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_step = 0;
  std::size_t bad = 0;

  /// Returns true when training should stop.
  bool update(std::size_t step, double loss) {
    if (loss < best) {
      best = loss;
      best_step = step;
      bad = 0;
      return false;
    }
    return ++bad >= patience;
  }
};

/// The `count` steps closest to `best` (best included), ties to the earlier.
inline std::vector<std::size_t> average_window(std::vector<std::size_t> steps, std::size_t best, std::size_t count) {
  if (std::find(steps.begin(), steps.end(), best) == steps.end())
    throw std::invalid_argument("average_window: best step is not among the checkpoints");
  auto dist = [best](std::size_t s) { return s > best ? s - best : best - s; };
  std::sort(steps.begin(), steps.end(), [&](std::size_t a, std::size_t b) {
    return dist(a) != dist(b) ? dist(a) < dist(b) : a < b;
  });
  steps.resize(std::min(count, steps.size()));
  std::sort(steps.begin(), steps.end());
  return steps;
}

template <typename T>
using ParamSnapshot = std::vector<std::vector<T>>;

template <typename T>
ParamSnapshot<T> snapshot(std::span<const Parameter<T>* const> ps) {
  ParamSnapshot<T> s;
  for (const auto* p : ps) s.push_back(p->value);
  return s;
}

/// Parameter-wise arithmetic mean, as a running mean so that equal inputs
/// reproduce themselves exactly.
template <typename T>
ParamSnapshot<T> average_snapshots(const std::vector<const ParamSnapshot<T>*>& snaps) {
  if (snaps.empty()) throw std::invalid_argument("average_snapshots: nothing to average");
  ParamSnapshot<T> out = *snaps.front();
  for (std::size_t k = 1; k < snaps.size(); ++k) {
    if (snaps[k]->size() != out.size()) throw std::invalid_argument("average_snapshots: mismatched parameter sets");
    const T inv = T(1) / static_cast<T>(k + 1);
    for (std::size_t i = 0; i < out.size(); ++i) {
      if ((*snaps[k])[i].size() != out[i].size())
        throw std::invalid_argument("average_snapshots: mismatched parameter sizes");
      for (std::size_t j = 0; j < out[i].size(); ++j) out[i][j] += ((*snaps[k])[i][j] - out[i][j]) * inv;
    }
  }
  return out;
}

template <typename T>
void restore(std::span<Parameter<T>* const> ps, const ParamSnapshot<T>& s) {
  if (s.size() != ps.size()) throw std::invalid_argument("restore: mismatched parameter sets");
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (s[i].size() != ps[i]->size()) throw std::invalid_argument("restore: mismatched sizes for " + ps[i]->name);
    ps[i]->value = s[i];
  }
}

// ---- training loop ------------------------------------------------------------

struct LogRow {
  std::size_t epoch = 0, step = 0;
  double current_loss = 0, context_loss = 0, ratio = 0, cd = 0;
};

inline std::string log_csv(const std::vector<LogRow>& rows) {
  std::ostringstream os;
  os << "epoch,step,current_loss,context_loss,ratio,cd\n";
  os << std::setprecision(17);
  for (const auto& r : rows)
    os << r.epoch << ',' << r.step << ',' << r.current_loss << ',' << r.context_loss << ',' << r.ratio << ',' << r.cd
       << '\n';
  return os.str();
}

struct TrainData {
  std::vector<Document> train, dev;
  Vocab src_vocab, tgt_vocab;
};

template <typename T>
struct TrainOptions {
  std::string out_dir;         // empty: keep everything in memory
  bool resume = false;         // continue from out_dir/state.bin
  std::size_t stop_after = 0;  // nonzero: save state and return after this step
  std::ostream* progress = nullptr;
  std::function<void(Transformer<T>&)> on_init;  // runs once after initialisation
};

template <typename T>
struct TrainResult {
  std::vector<LogRow> log;
  std::size_t steps = 0;
  std::size_t best_step = 0;
  double best_loss = 0.0;
  bool early_stopped = false;
  bool interrupted = false;
  int shift = 0;
  std::vector<std::size_t> averaged_steps;
  Transformer<T> best, averaged;
  std::string best_path, averaged_path, log_path;
};

namespace detail {

inline std::string checkpoint_name(std::size_t step) { return "checkpoint_" + std::to_string(step) + ".bin"; }

inline void write_file(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw TrainError("cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw TrainError("failed writing " + p.string());
}

}  // namespace detail

/// Token-batched training with warmup schedule, Adam, periodic validation on
/// dev current-sentence loss, early stopping and checkpoint averaging.
///
/// Every random draw depends only on the seed and the step or epoch, so a run
/// resumed from its saved state continues exactly as it would have.
template <typename T>
TrainResult<T> train(TrainConfig cfg, const TrainData& data, const TrainOptions<T>& opt = {}) {
  namespace fs = std::filesystem;
  cfg.validate();
  if (data.train.empty()) throw TrainError("training corpus is empty");
  if (data.dev.empty()) throw TrainError("dev corpus is empty");
  if (opt.resume && opt.out_dir.empty()) throw TrainError("resume needs an output directory");

  if (cfg.shift.kind == ShiftStrategy::Kind::AvgCorpus) cfg.shift.value = avg_corpus_shift(data.train);
  const ModelConfig mcfg = cfg.model_config(data.src_vocab.size(), data.tgt_vocab.size());
  mcfg.validate();
  if (opt.progress)
    *opt.progress << "position scheme " << to_string(mcfg.position_scheme) << ", shift " << mcfg.shift.str()
                  << " = " << mcfg.shift.value << "\n";

  const auto train_ws = make_windows(data.train, cfg.k, data.src_vocab, data.tgt_vocab);
  const auto dev_ws = make_windows(data.dev, cfg.k, data.src_vocab, data.tgt_vocab);
  for (const auto* set : {&train_ws, &dev_ws})
    for (const auto& w : *set)
      if (w.src_ids.size() > mcfg.max_len || w.tgt_ids.size() > mcfg.max_len)
        throw TrainError("window " + w.doc_id + ":" + std::to_string(w.j) + " exceeds max-len");

  const fs::path dir = opt.out_dir;
  if (!opt.out_dir.empty()) fs::create_directories(dir);

  TrainResult<T> res;
  res.shift = mcfg.shift.value;
  Transformer<T> model(mcfg, cfg.seed);
  auto ps = model.parameters();
  Adam<T> adam;
  adam.init(ps);
  EarlyStopping es{cfg.patience};
  std::map<std::size_t, ParamSnapshot<T>> kept;  // checkpoints near the best or recent
  std::size_t step = 0, epoch = 0, cursor = 0;
  bool stopped = false;

  const nlohmann::json meta_base{{"train_config", cfg.to_json()}};
  auto meta = [&](std::size_t s) {
    auto m = meta_base;
    m["step"] = s;
    return m;
  };

  // ---- state persistence ----
  auto save_state = [&] {
    if (opt.out_dir.empty()) return;
    std::vector<std::size_t> steps;
    for (const auto& [s, _] : kept) steps.push_back(s);
    nlohmann::json log = nlohmann::json::array();
    for (const auto& r : res.log) log.push_back({r.epoch, r.step, r.current_loss, r.context_loss, r.ratio, r.cd});
    nlohmann::json h{{"kind", "train-state"},
                     {"train_config", cfg.to_json()},
                     {"step", step},
                     {"epoch", epoch},
                     {"cursor", cursor},
                     {"stopped", stopped},
                     {"adam_t", adam.t},
                     {"es_best", es.best},
                     {"es_best_step", es.best_step},
                     {"es_bad", es.bad},
                     {"kept", steps},
                     {"log", log}};
    std::vector<Parameter<T>> extra;
    extra.reserve(2 * ps.size());
    for (std::size_t i = 0; i < ps.size(); ++i) {
      extra.emplace_back("adam.m." + ps[i]->name, ps[i]->shape);
      extra.back().value = adam.m[i];
      extra.emplace_back("adam.v." + ps[i]->name, ps[i]->shape);
      extra.back().value = adam.v[i];
    }
    std::vector<const Parameter<T>*> all(ps.begin(), ps.end());
    for (const auto& p : extra) all.push_back(&p);
    detail::write_file(dir / "state.tmp", encode_checkpoint<T>(h.dump(), all));
    fs::rename(dir / "state.tmp", dir / "state.bin");
  };

  if (opt.resume) {
    const auto ck = load_checkpoint((dir / "state.bin").string());
    const auto h = nlohmann::json::parse(ck.header);
    if (TrainConfig::from_json(h.at("train_config")) != cfg)
      throw TrainError("saved state was produced with a different configuration");
    step = h.at("step").get<std::size_t>();
    epoch = h.at("epoch").get<std::size_t>();
    cursor = h.at("cursor").get<std::size_t>();
    stopped = h.at("stopped").get<bool>();
    adam.t = h.at("adam_t").get<std::size_t>();
    es.best = h.at("es_best").is_null() ? std::numeric_limits<double>::infinity() : h.at("es_best").get<double>();
    es.best_step = h.at("es_best_step").get<std::size_t>();
    es.bad = h.at("es_bad").get<std::size_t>();
    auto real = [](const nlohmann::json& x) {
      return x.is_null() ? std::numeric_limits<double>::quiet_NaN() : x.get<double>();
    };
    for (const auto& r : h.at("log"))
      res.log.push_back({r[0].get<std::size_t>(), r[1].get<std::size_t>(), real(r[2]), real(r[3]), real(r[4]),
                         real(r[5])});
    assign_parameters<T>(ck, ps);
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const auto& m = ck.find("adam.m." + ps[i]->name).values;
      const auto& v = ck.find("adam.v." + ps[i]->name).values;
      for (std::size_t j = 0; j < m.size(); ++j) {
        adam.m[i][j] = static_cast<T>(m[j]);
        adam.v[i][j] = static_cast<T>(v[j]);
      }
    }
    for (auto s : h.at("kept").get<std::vector<std::size_t>>()) {
      Transformer<T> tmp = model_from_checkpoint<T>(load_checkpoint((dir / detail::checkpoint_name(s)).string())).model;
      kept[s] = snapshot<T>(std::as_const(tmp).parameters());
    }
  } else if (opt.on_init) {
    opt.on_init(model);
  }

  auto validate = [&] {
    const auto dev = evaluate_loss(model, dev_ws, cfg.batch_tokens, cfg.cd, cfg.label_smoothing);
    const LogRow row{epoch, step, dev.current_per_token(), dev.context_per_token(), dev.ratio(), cfg.cd};
    res.log.push_back(row);
    if (opt.progress)
      *opt.progress << "epoch " << epoch << " step " << step << " dev current " << row.current_loss << " context "
                    << row.context_loss << "\n";
    kept[step] = snapshot<T>(std::as_const(model).parameters());
    if (!opt.out_dir.empty())
      detail::write_file(dir / detail::checkpoint_name(step), encode_model(model, data.src_vocab, data.tgt_vocab,
                                                                              meta(step)));
    const bool stop = es.update(step, row.current_loss);
    // keep what could still join the average around the current or a later best
    const std::size_t reach = (cfg.average - 1) * cfg.valid_interval;
    for (auto it = kept.begin(); it != kept.end();) {
      const std::size_t s = it->first;
      const bool near_best = (s > es.best_step ? s - es.best_step : es.best_step - s) <= reach;
      const bool recent = step - s < cfg.average * cfg.valid_interval;
      if (near_best || recent) {
        ++it;
      } else {
        if (!opt.out_dir.empty()) fs::remove(dir / detail::checkpoint_name(s));
        it = kept.erase(it);
      }
    }
    if (!opt.out_dir.empty()) detail::write_file(dir / "log.csv", log_csv(res.log));
    return stop;
  };

  const CounterRng shuffle_root(cfg.seed, 0x5f1e);
  const CounterRng dropout_root(cfg.seed, 0xd409);
  const double scale = cfg.lr_scale();
  while (!stopped && epoch < cfg.max_epochs) {
    CounterRng srng = shuffle_root.fork(epoch);
    const auto batches = token_batches(train_ws, cfg.batch_tokens, &srng);
    for (; cursor < batches.size(); ++cursor) {
      if (cfg.max_steps && step >= cfg.max_steps) {
        stopped = true;
        break;
      }
      if (opt.stop_after && step == opt.stop_after) {
        save_state();
        res.interrupted = true;
        res.steps = step;
        res.best_step = es.best_step;
        res.best_loss = es.best;
        return res;
      }
      ++step;
      const double lr = lr_at(step, cfg.d_model, cfg.warmup, scale);
      const Batch b = batch_of(train_ws, batches[cursor], mcfg);
      CounterRng drng = dropout_root.fork(step);
      Graph<T> g;
      auto fw = model.forward(g, b, {&drng, false});
      auto tok = smoothed_nll(g, fw.log_probs, b.out_ids, cfg.label_smoothing, output_mask(b));
      auto bl = context_discounted_loss(g, tok, b, cfg.cd);
      auto loss = g.scale(bl.total, static_cast<T>(1.0 / static_cast<double>(bl.sum.current_tokens)));
      const double lv = static_cast<double>(loss.item());
      if (!std::isfinite(lv)) throw TrainAborted(step, lr, std::numeric_limits<double>::quiet_NaN(), lv);
      g.backward(loss);
      const double gn = grad_norm<T>(ps);
      if (!std::isfinite(gn)) throw TrainAborted(step, lr, gn, lv);
      if (cfg.clip_norm > 0.0 && gn > cfg.clip_norm) {
        const T c = static_cast<T>(cfg.clip_norm / gn);
        for (auto* p : ps)
          for (auto& x : p->grad) x *= c;
      }
      adam.step(ps, lr);
      model.zero_grad();
      if (step % cfg.valid_interval == 0 && validate()) {
        stopped = true;
        res.early_stopped = true;
        ++cursor;
        break;
      }
    }
    if (!stopped) {
      ++epoch;
      cursor = 0;
    }
  }
  stopped = true;
  if (res.log.empty() || res.log.back().step != step) validate();
  save_state();

  res.steps = step;
  res.best_step = es.best_step;
  res.best_loss = es.best;
  std::vector<std::size_t> steps;
  for (const auto& [s, _] : kept) steps.push_back(s);
  res.averaged_steps = average_window(steps, es.best_step, cfg.average);
  std::vector<const ParamSnapshot<T>*> sel;
  for (auto s : res.averaged_steps) sel.push_back(&kept.at(s));

  res.best = Transformer<T>(mcfg, cfg.seed);
  restore<T>(res.best.parameters(), kept.at(es.best_step));
  res.averaged = Transformer<T>(mcfg, cfg.seed);
  restore<T>(res.averaged.parameters(), average_snapshots<T>(sel));
  if (!opt.out_dir.empty()) {
    auto m = meta(es.best_step);
    res.best_path = (dir / "best.bin").string();
    save_model(res.best_path, res.best, data.src_vocab, data.tgt_vocab, m);
    m["averaged_steps"] = res.averaged_steps;
    res.averaged_path = (dir / "averaged.bin").string();
    save_model(res.averaged_path, res.averaged, data.src_vocab, data.tgt_vocab, m);
    res.log_path = (dir / "log.csv").string();
    detail::write_file(res.log_path, log_csv(res.log));
  }
  return res;
}

}  // namespace cdmt
