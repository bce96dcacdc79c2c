#pragma once

// Command implementations behind the `cdmt` executable. run_cli() parses
// arguments and dispatches; every command writes its results below an
// output directory together with a manifest.json.

#include "CLI11.hpp"
#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cdmt/corpus/synthetic.hpp"
#include "cdmt/eval/attention.hpp"
#include "cdmt/eval/report.hpp"
#include "cdmt/trainer/sweep.hpp"
#include "cdmt/version.hpp"

namespace cdmt::cli {

namespace fs = std::filesystem;
using nlohmann::json;

/// Bad flags or preconditions the caller can fix; exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// ---- files -------------------------------------------------------------------

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << s;
  if (!out) throw std::runtime_error("failed writing " + p.string());
}

inline std::string hex_digest(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline std::string file_digest(const fs::path& p) { return hex_digest(fnv1a64(read_file(p))); }

/// Create `dir`; an existing non-empty directory needs --force and is
/// cleared first so reruns produce the same files.
inline void prepare_output(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_directory(dir)) throw UsageError(dir.string() + " exists and is not a directory");
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) throw UsageError("output directory " + dir.string() + " is not empty; pass --force to overwrite");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

struct Manifest {
  std::string command;
  json config = json::object();
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;  // path -> digest
  std::vector<std::string> outputs;

  void add_input(const fs::path& p) { inputs[p.string()] = file_digest(p); }

  void write(const fs::path& dir) const {
    json j{{"command", command},     {"config", config},   {"seed", seed},
           {"inputs", inputs},       {"outputs", outputs}, {"version", std::string(kVersion)}};
    write_file(dir / "manifest.json", j.dump(2) + "\n");
  }
};

// ---- data directories ----------------------------------------------------------

inline constexpr const char* kSplits[] = {"train", "dev", "test"};

inline fs::path corpus_file(const fs::path& dir, const std::string& split) { return dir / (split + ".txt"); }
inline fs::path contrastive_file(const fs::path& dir, const std::string& split) {
  return dir / ("contrastive_" + split + ".jsonl");
}

inline void save_vocabs(const fs::path& dir, const Vocab& src, const Vocab& tgt) {
  json j{{"src", src.tokens()}, {"tgt", tgt.tokens()}, {"src_digest", src.digest()}, {"tgt_digest", tgt.digest()}};
  write_file(dir / "vocab.json", j.dump() + "\n");
}

struct DataDir {
  fs::path dir;
  Vocab src_vocab, tgt_vocab;

  explicit DataDir(fs::path d) : dir(std::move(d)) {
    if (!fs::is_directory(dir)) throw UsageError("data directory " + dir.string() + " does not exist");
    const auto j = json::parse(read_file(dir / "vocab.json"));
    src_vocab = Vocab::from_tokens(j.at("src").get<std::vector<std::string>>());
    tgt_vocab = Vocab::from_tokens(j.at("tgt").get<std::vector<std::string>>());
  }

  std::vector<Document> corpus(const std::string& split) const {
    return load_corpus(corpus_file(dir, split).string(), split);
  }
  std::vector<ContrastiveExample> contrastive(const std::string& split) const {
    const auto p = contrastive_file(dir, split);
    return fs::exists(p) ? load_contrastive(p.string()) : std::vector<ContrastiveExample>{};
  }
  void record_inputs(Manifest& m, std::initializer_list<std::string> files) const {
    m.add_input(dir / "vocab.json");
    for (const auto& f : files)
      if (fs::exists(dir / f)) m.add_input(dir / f);
  }
};

inline void check_split(const std::string& s) {
  for (const char* k : kSplits)
    if (s == k) return;
  throw UsageError("split must be train, dev or test, got '" + s + "'");
}

/// "80/10/10" -> document counts for n documents; test takes the remainder.
inline std::array<std::size_t, 3> split_counts(const std::string& spec, std::size_t n) {
  std::array<double, 3> pct{};
  std::istringstream in(spec);
  std::string part;
  std::size_t i = 0;
  while (std::getline(in, part, '/')) {
    if (i == 3) throw UsageError("--split needs three parts, e.g. 80/10/10");
    try {
      pct[i++] = cdmt::detail::parse_real(part);
    } catch (const std::exception&) {
      throw UsageError("--split: bad percentage '" + part + "'");
    }
  }
  if (i != 3) throw UsageError("--split needs three parts, e.g. 80/10/10");
  for (double p : pct)
    if (p < 0) throw UsageError("--split: negative percentage");
  if (std::abs(pct[0] + pct[1] + pct[2] - 100.0) > 1e-9) throw UsageError("--split percentages must sum to 100");
  const auto a = static_cast<std::size_t>(std::floor(static_cast<double>(n) * pct[0] / 100.0 + 1e-9));
  const auto b = static_cast<std::size_t>(std::floor(static_cast<double>(n) * pct[1] / 100.0 + 1e-9));
  return {a, b, n - a - b};
}

// ---- models ---------------------------------------------------------------------

/// Load a model checkpoint at its stored precision and hand it to f.
template <typename F>
auto with_model(const std::string& path, F&& f) {
  const auto ck = load_checkpoint(path);
  if (ck.records.empty()) throw std::runtime_error(path + " holds no tensors");
  if (ck.records.front().width == 4) {
    auto m = model_from_checkpoint<float>(ck);
    return f(m);
  }
  auto m = model_from_checkpoint<double>(ck);
  return f(m);
}

template <typename T>
void check_vocab_digest(const LoadedModel<T>& m, const DataDir& data) {
  const auto& h = m.header;
  if (h.at("src_vocab_digest").template get<std::uint64_t>() != data.src_vocab.digest() ||
      h.at("tgt_vocab_digest").template get<std::uint64_t>() != data.tgt_vocab.digest())
    throw std::runtime_error("vocabulary digest of the checkpoint does not match " +
                             (data.dir / "vocab.json").string());
}

/// Window size the model was trained with, or `fallback` when unknown.
template <typename T>
std::size_t trained_k(const LoadedModel<T>& m, std::size_t fallback) {
  const auto& meta = m.header.value("meta", json::object());
  if (meta.contains("train_config")) return cdmt::detail::parse_count(meta["train_config"].at("k").template get<std::string>());
  return fallback;
}

inline std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::istringstream in(s);
  for (std::string p; std::getline(in, p, ',');) {
    try {
      out.push_back(cdmt::detail::parse_count(p));
    } catch (const std::exception&) {
      throw UsageError("bad window size '" + p + "'");
    }
    if (out.back() == 0) throw UsageError("window sizes must be >= 1");
  }
  if (out.empty()) throw UsageError("no window sizes given");
  return out;
}

inline std::vector<double> parse_reals(const std::string& s) {
  std::vector<double> out;
  std::istringstream in(s);
  for (std::string p; std::getline(in, p, ',');) {
    try {
      out.push_back(cdmt::detail::parse_real(p));
    } catch (const std::exception&) {
      throw UsageError("bad number '" + p + "'");
    }
  }
  if (out.empty()) throw UsageError("empty list");
  return out;
}

// ---- commands ------------------------------------------------------------------

struct GenDataArgs {
  std::string out, split = "80/10/10";
  GeneratorConfig gen;
  bool force = false;
};

inline json cmd_gen_data(const GenDataArgs& a) {
  const auto counts_probe = split_counts(a.split, a.gen.n_docs);
  (void)counts_probe;
  const fs::path dir = a.out;
  prepare_output(dir, a.force);
  const auto c = gen_synthetic(a.gen);
  const auto counts = split_counts(a.split, c.documents.size());
  std::map<std::string, std::string> split_of;
  json summary{{"documents", json::object()}, {"sentences", json::object()}, {"contrastive", json::object()}};
  Manifest man{"gen-data", a.gen.to_json(), a.gen.seed};
  man.config["split"] = a.split;
  std::size_t start = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    const std::string name = kSplits[s];
    const std::vector<Document> docs(c.documents.begin() + static_cast<long>(start),
                                     c.documents.begin() + static_cast<long>(start + counts[s]));
    start += counts[s];
    std::size_t sents = 0;
    for (const auto& d : docs) {
      split_of[d.id] = name;
      sents += d.sentences.size();
    }
    std::vector<ContrastiveExample> cs;
    for (const auto& ex : c.contrastive)
      if (split_of.count(ex.doc_id) && split_of[ex.doc_id] == name) cs.push_back(ex);
    save_corpus(corpus_file(dir, name).string(), docs);
    save_contrastive(contrastive_file(dir, name).string(), cs);
    man.outputs.push_back(corpus_file(dir, name).string());
    man.outputs.push_back(contrastive_file(dir, name).string());
    summary["documents"][name] = docs.size();
    summary["sentences"][name] = sents;
    summary["contrastive"][name] = cs.size();
  }
  save_vocabs(dir, c.src_vocab, c.tgt_vocab);
  write_file(dir / "generator.json", a.gen.to_json().dump(2) + "\n");
  man.outputs.push_back((dir / "vocab.json").string());
  man.outputs.push_back((dir / "generator.json").string());
  man.write(dir);
  summary["generator"] = a.gen.to_json();
  return summary;
}

struct TrainArgs {
  std::string data, out, config;
  std::map<std::string, std::string> overrides;  // key -> value from flags
  bool force = false, resume = false, verbose = false;
};

inline TrainConfig resolve_config(const std::string& path, const std::map<std::string, std::string>& overrides) {
  TrainConfig c = path.empty() ? TrainConfig() : TrainConfig::load(path);
  for (const auto& [k, v] : overrides) c.set(k, v);
  c.validate();
  return c;
}

inline TrainData load_train_data(const DataDir& d) {
  return {d.corpus("train"), d.corpus("dev"), d.src_vocab, d.tgt_vocab};
}

namespace detail {

struct TeeBuf : std::streambuf {
  std::streambuf *a, *b;
  TeeBuf(std::streambuf* x, std::streambuf* y) : a(x), b(y) {}
  int overflow(int c) override {
    if (c == EOF) return !EOF;
    const int r1 = a->sputc(static_cast<char>(c));
    const int r2 = b ? b->sputc(static_cast<char>(c)) : c;
    return r1 == EOF || r2 == EOF ? EOF : c;
  }
  int sync() override { return a->pubsync() | (b ? b->pubsync() : 0); }
};

}  // namespace detail

inline json cmd_train(const TrainArgs& a, std::ostream& out) {
  const TrainConfig cfg = resolve_config(a.config, a.overrides);
  const DataDir data(a.data);
  const fs::path dir = a.out;
  if (a.resume) {
    if (!fs::exists(dir / "state.bin")) throw UsageError("--resume: no saved state in " + dir.string());
  } else {
    prepare_output(dir, a.force);
  }
  const auto td = load_train_data(data);
  Manifest man{"train", cfg.to_json(), cfg.seed};
  data.record_inputs(man, {"train.txt", "dev.txt"});
  if (!a.config.empty()) man.add_input(a.config);
  write_file(dir / "config.txt", cfg.to_text());

  std::ofstream progress_file(dir / "progress.log", a.resume ? std::ios::app : std::ios::trunc);
  detail::TeeBuf tee(progress_file.rdbuf(), a.verbose ? out.rdbuf() : nullptr);
  std::ostream progress(&tee);

  auto run = [&](auto tag) {
    using T = decltype(tag);
    TrainOptions<T> opt{dir.string()};
    opt.resume = a.resume;
    opt.progress = &progress;
    const auto r = train<T>(cfg, td, opt);
    return json{{"steps", r.steps},
                {"best_step", r.best_step},
                {"best_dev_current_loss", r.best_loss},
                {"early_stopped", r.early_stopped},
                {"averaged_steps", r.averaged_steps},
                {"shift", r.shift},
                {"best", r.best_path},
                {"averaged", r.averaged_path},
                {"log", r.log_path}};
  };
  const json summary = cfg.precision == "double" ? run(double{}) : run(float{});
  progress.flush();
  write_file(dir / "summary.json", summary.dump(2) + "\n");
  for (const char* f : {"config.txt", "log.csv", "best.bin", "averaged.bin", "state.bin", "summary.json"})
    man.outputs.push_back((dir / f).string());
  man.config["resolved_shift"] = summary["shift"];
  man.write(dir);
  return summary;
}

struct SweepArgs {
  TrainArgs train;
  std::string cds;
};

inline json cmd_sweep(const SweepArgs& a, std::ostream& out) {
  const TrainConfig cfg = resolve_config(a.train.config, a.train.overrides);
  const auto cds = a.cds.empty() ? default_sweep_values() : parse_reals(a.cds);
  for (double cd : cds)
    if (!(cd >= 0.0 && cd <= 1.0)) throw UsageError("cd values must lie in [0, 1]");
  const DataDir data(a.train.data);
  const fs::path dir = a.train.out;
  prepare_output(dir, a.train.force);
  const auto td = load_train_data(data);
  const auto contrastive = data.contrastive("dev");
  Manifest man{"sweep", cfg.to_json(), cfg.seed};
  man.config["cds"] = cds;
  data.record_inputs(man, {"train.txt", "dev.txt", "contrastive_dev.jsonl"});

  std::ofstream progress_file(dir / "progress.log");
  detail::TeeBuf tee(progress_file.rdbuf(), a.train.verbose ? out.rdbuf() : nullptr);
  std::ostream progress(&tee);
  const auto rows = cfg.precision == "double"
                        ? cd_sweep<double>(cfg, cds, td, &contrastive, dir.string(), &progress)
                        : cd_sweep<float>(cfg, cds, td, &contrastive, dir.string(), &progress);
  progress.flush();
  json table = json::array();
  for (const auto& r : rows)
    table.push_back({{"cd", r.cd},
                     {"best_dev_current_loss", r.error.empty() ? json(r.best_dev_current) : json(nullptr)},
                     {"accuracy", r.accuracy ? json(*r.accuracy) : json(nullptr)},
                     {"attention_mass", r.mass ? json(*r.mass) : json(nullptr)},
                     {"best_step", r.best_step},
                     {"run_dir", r.run_dir},
                     {"error", r.error}});
  write_file(dir / "sweep.csv", sweep_csv(rows));
  write_file(dir / "sweep.json", table.dump(2) + "\n");
  man.outputs = {(dir / "sweep.csv").string(), (dir / "sweep.json").string()};
  man.write(dir);
  return json{{"sweep", table}};
}

struct EvalArgs {
  std::string model, data, split = "test", out, sizes, span = "full", log;
  std::size_t k = 0, beam = 1;
  double alpha = 1.0;
  bool force = false, with_contrastive = false;
};

/// Output directory is optional for the evaluation commands.
inline std::optional<fs::path> eval_output(const EvalArgs& a) {
  if (a.out.empty()) return std::nullopt;
  prepare_output(a.out, a.force);
  return fs::path(a.out);
}

inline json cmd_evaluate(const EvalArgs& a) {
  check_split(a.split);
  const DataDir data(a.data);
  return with_model(a.model, [&](auto& m) {
    check_vocab_digest(m, data);
    const std::size_t k = a.k ? a.k : trained_k(m, 1);
    const auto sizes = a.sizes.empty() ? std::vector<std::size_t>{k} : parse_sizes(a.sizes);
    const auto docs = data.corpus(a.split);
    const auto contrastive = data.contrastive(a.split);
    DecodeOptions opt;
    opt.beam = a.beam;
    opt.alpha = a.alpha;
    const auto rows = robustness_eval(m.model, docs, data.src_vocab, data.tgt_vocab, sizes, k, opt,
                                      a.with_contrastive ? &contrastive : nullptr);
    json table = json::array();
    for (const auto& r : rows) table.push_back(to_json(r));
    json summary{{"bleu", rows.front().bleu}, {"train_k", k}, {"robustness", table}};
    if (const auto dir = eval_output(a)) {
      Manifest man{"evaluate", {{"split", a.split}, {"sizes", sizes}, {"beam", a.beam}, {"alpha", a.alpha}}, 0};
      man.add_input(a.model);
      data.record_inputs(man, {a.split + ".txt", "contrastive_" + a.split + ".jsonl"});
      write_file(*dir / "robustness.csv", robustness_csv(rows));
      man.outputs.push_back((*dir / "robustness.csv").string());
      for (const auto& r : rows) {
        std::ostringstream os;
        os << "hyp_len,ref_len";
        for (std::size_t n = 1; n <= 4; ++n) os << ",match" << n << ",total" << n;
        os << '\n';
        for (const auto& s : r.stats) {
          os << s.hyp_len << ',' << s.ref_len;
          for (std::size_t n = 0; n < s.matches.size(); ++n) os << ',' << s.matches[n] << ',' << s.totals[n];
          os << '\n';
        }
        const auto p = *dir / ("bleu_stats_k" + std::to_string(r.size) + ".csv");
        write_file(p, os.str());
        man.outputs.push_back(p.string());
        std::string hyps;
        for (const auto& h : r.hyps) hyps += join(h) + "\n";
        const auto hp = *dir / ("hyps_k" + std::to_string(r.size) + ".txt");
        write_file(hp, hyps);
        man.outputs.push_back(hp.string());
      }
      write_file(*dir / "summary.json", summary.dump(2) + "\n");
      man.outputs.push_back((*dir / "summary.json").string());
      man.write(*dir);
    }
    return summary;
  });
}

inline json cmd_contrastive(const EvalArgs& a) {
  check_split(a.split);
  const DataDir data(a.data);
  ScoreSpan span;
  try {
    span = parse_score_span(a.span);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return with_model(a.model, [&](auto& m) {
    check_vocab_digest(m, data);
    const std::size_t k = a.k ? a.k : trained_k(m, 1);
    const auto set = data.contrastive(a.split);
    if (set.empty()) throw std::runtime_error("no contrastive examples for split " + a.split);
    const auto results = score_contrastive_set(m.model, set, data.src_vocab, data.tgt_vocab, k, span);
    const auto rep = aggregate(results);
    json summary = to_json(rep);
    summary["k"] = k;
    summary["span"] = a.span;
    summary["examples"] = results.size();
    try {
      summary["inter_sentential_accuracy"] = inter_sentential_accuracy(results);
    } catch (const std::invalid_argument&) {
      summary["inter_sentential_accuracy"] = nullptr;
    }
    if (const auto dir = eval_output(a)) {
      Manifest man{"contrastive", {{"split", a.split}, {"k", k}, {"span", a.span}}, 0};
      man.add_input(a.model);
      data.record_inputs(man, {"contrastive_" + a.split + ".jsonl"});
      write_file(*dir / "results.csv", results_csv(results));
      write_file(*dir / "categories.csv", categories_csv(rep));
      write_file(*dir / "summary.json", summary.dump(2) + "\n");
      man.outputs = {(*dir / "results.csv").string(), (*dir / "categories.csv").string(),
                     (*dir / "summary.json").string()};
      man.write(*dir);
    }
    return summary;
  });
}

inline std::vector<LogRow> read_log_csv(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::getline(in, line);
  if (line != "epoch,step,current_loss,context_loss,ratio,cd") throw std::runtime_error(path + " is not a training log");
  std::vector<LogRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string f[6];
    for (auto& x : f) std::getline(ls, x, ',');
    rows.push_back({std::stoul(f[0]), std::stoul(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4]),
                    std::stod(f[5])});
  }
  return rows;
}

inline json cmd_diagnose(const EvalArgs& a) {
  check_split(a.split);
  const DataDir data(a.data);
  return with_model(a.model, [&](auto& m) {
    check_vocab_digest(m, data);
    const std::size_t k = a.k ? a.k : trained_k(m, 1);
    const auto ws = make_windows(data.corpus(a.split), k, data.src_vocab, data.tgt_vocab);
    const auto d = attention_diagnostics(m.model, ws);
    const auto loss = evaluate_loss(m.model, ws, 1024, 1.0, 0.0);
    auto num = [](double x) { return std::isfinite(x) ? json(x) : json(nullptr); };
    json summary{{"k", k},
                 {"windows", ws.size()},
                 {"attention_entropy", d.mean_entropy},
                 {"current_attention_mass", d.mean_mass},
                 {"current_loss", loss.current_per_token()},
                 {"context_loss", num(loss.context_per_token())},
                 {"loss_ratio", num(loss.ratio())}};
    if (!a.log.empty()) {
      json series = json::array();
      for (const auto& r : read_log_csv(a.log)) series.push_back({{"step", r.step}, {"ratio", num(r.ratio)}});
      summary["ratio_series"] = series;
    }
    if (const auto dir = eval_output(a)) {
      Manifest man{"diagnose", {{"split", a.split}, {"k", k}}, 0};
      man.add_input(a.model);
      data.record_inputs(man, {a.split + ".txt"});
      std::ostringstream os;
      os << std::setprecision(17) << "window,entropy,mass\n";
      for (std::size_t i = 0; i < ws.size(); ++i)
        os << ws[i].doc_id << ':' << ws[i].j << ',' << d.entropy[i] << ',' << d.mass[i] << '\n';
      write_file(*dir / "diagnostics.csv", os.str());
      write_file(*dir / "summary.json", summary.dump(2) + "\n");
      man.outputs = {(*dir / "diagnostics.csv").string(), (*dir / "summary.json").string()};
      man.write(*dir);
    }
    return summary;
  });
}

struct StatsArgs {
  std::string a, b;
  std::size_t permutations = 0;  // 0: default for the file kind
  std::uint64_t seed = 1;
};

namespace detail {

inline std::vector<std::vector<std::string>> csv_rows(const std::string& path, std::string& header) {
  std::istringstream in(read_file(path));
  std::getline(in, header);
  std::vector<std::vector<std::string>> rows;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    for (std::string x; std::getline(ls, x, ',');) f.push_back(x);
    rows.push_back(std::move(f));
  }
  return rows;
}

}  // namespace detail

/// Compare two result files of the same kind: per-example contrastive
/// results (McNemar), per-sentence BLEU statistics or per-window attention
/// diagnostics (approximate randomization).
inline json cmd_stats(const StatsArgs& a) {
  std::string ha, hb;
  const auto ra = detail::csv_rows(a.a, ha), rb = detail::csv_rows(a.b, hb);
  if (ha != hb) throw UsageError("files are of different kinds");
  if (ra.size() != rb.size()) throw std::runtime_error("files have different numbers of items");
  if (ha == "id,phenomenon,distance,chosen,correct,scores") {
    std::vector<bool> ca, cb;
    for (std::size_t i = 0; i < ra.size(); ++i) {
      if (ra[i][0] != rb[i][0]) throw std::runtime_error("example ids differ at row " + std::to_string(i + 1));
      ca.push_back(ra[i][4] == "1");
      cb.push_back(rb[i][4] == "1");
    }
    auto j = to_json(mcnemar(ca, cb));
    j["test"] = "mcnemar";
    j["items"] = ca.size();
    return j;
  }
  if (ha.rfind("hyp_len,ref_len", 0) == 0) {
    auto parse = [](const std::vector<std::vector<std::string>>& rows) {
      std::vector<BleuStats> out;
      for (const auto& r : rows) {
        BleuStats s((r.size() - 2) / 2);
        s.hyp_len = std::stoul(r[0]);
        s.ref_len = std::stoul(r[1]);
        for (std::size_t n = 0; n < s.matches.size(); ++n) {
          s.matches[n] = std::stoul(r[2 + 2 * n]);
          s.totals[n] = std::stoul(r[3 + 2 * n]);
        }
        out.push_back(s);
      }
      return out;
    };
    const auto sa = parse(ra), sb = parse(rb);
    const std::size_t perms = a.permutations ? a.permutations : kBleuPermutations;
    const std::function<double(const std::vector<BleuStats>&)> stat = [](const auto& s) { return corpus_bleu(s); };
    return {{"test", "approximate-randomization"},
            {"metric", "bleu"},
            {"a", corpus_bleu(sa)},
            {"b", corpus_bleu(sb)},
            {"permutations", perms},
            {"p", approx_randomization<BleuStats>(sa, sb, perms, a.seed, stat)}};
  }
  if (ha == "window,entropy,mass") {
    std::vector<double> ea, eb, ma, mb;
    for (std::size_t i = 0; i < ra.size(); ++i) {
      ea.push_back(std::stod(ra[i][1]));
      eb.push_back(std::stod(rb[i][1]));
      ma.push_back(std::stod(ra[i][2]));
      mb.push_back(std::stod(rb[i][2]));
    }
    const std::size_t perms = a.permutations ? a.permutations : kEntropyPermutations;
    return {{"test", "approximate-randomization"},
            {"permutations", perms},
            {"entropy", {{"a", mean_of(ea)}, {"b", mean_of(eb)}, {"p", approx_randomization(ea, eb, perms, a.seed)}}},
            {"mass", {{"a", mean_of(ma)}, {"b", mean_of(mb)}, {"p", approx_randomization(ma, mb, perms, a.seed)}}}};
  }
  throw UsageError("unrecognised result file header: " + ha);
}

// ---- argument parsing ------------------------------------------------------------

inline void add_config_flags(CLI::App* sub, std::map<std::string, CLI::Option*>& opts,
                             std::map<std::string, std::string>& values) {
  for (const auto& k : TrainConfig::keys())
    opts[k.name] = sub->add_option("--" + k.name, values[k.name], "config key " + k.name);
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Context-aware translation toolkit: synthetic data, training and evaluation", "cdmt"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  GenDataArgs gen;
  auto* g = app.add_subcommand("gen-data", "generate a synthetic document corpus and contrastive sets");
  g->add_option("--out", gen.out, "output directory")->required();
  g->add_option("--seed", gen.gen.seed, "generator seed");
  g->add_option("--docs", gen.gen.n_docs, "number of documents");
  g->add_option("--sentences", gen.gen.sentences_per_doc, "sentences per document");
  g->add_option("--vocab", gen.gen.vocab_size, "source word types");
  g->add_option("--inter-rate", gen.gen.inter_rate, "share of inter-sentential ambiguous items");
  g->add_option("--amb-rate", gen.gen.amb_rate, "share of sentences with an ambiguous item");
  g->add_option("--min-len", gen.gen.min_len, "shortest sentence");
  g->add_option("--max-len", gen.gen.max_len, "longest sentence");
  g->add_option("--max-context", gen.gen.max_context, "context sentences stored per contrastive example");
  g->add_option("--split", gen.split, "train/dev/test percentages");
  g->add_flag("--force", gen.force, "overwrite a non-empty output directory");

  TrainArgs tr;
  std::map<std::string, CLI::Option*> tr_opts;
  std::map<std::string, std::string> tr_vals;
  auto* t = app.add_subcommand("train", "train one model");
  t->add_option("--data", tr.data, "data directory from gen-data")->required();
  t->add_option("--out", tr.out, "run directory")->required();
  t->add_option("--config", tr.config, "flat key = value config file");
  t->add_flag("--force", tr.force, "overwrite a non-empty run directory");
  t->add_flag("--resume", tr.resume, "continue from the run directory's saved state");
  t->add_flag("--verbose", tr.verbose, "echo progress to stdout");
  add_config_flags(t, tr_opts, tr_vals);

  SweepArgs sw;
  std::map<std::string, CLI::Option*> sw_opts;
  std::map<std::string, std::string> sw_vals;
  auto* s = app.add_subcommand("sweep", "train one model per context discount");
  s->add_option("--data", sw.train.data, "data directory from gen-data")->required();
  s->add_option("--out", sw.train.out, "sweep directory")->required();
  s->add_option("--config", sw.train.config, "flat key = value config file");
  s->add_option("--cds", sw.cds, "comma-separated cd values (default 1,0.9,0.7,0.5,0.3,0.1,0.01,0)");
  s->add_flag("--force", sw.train.force, "overwrite a non-empty output directory");
  s->add_flag("--verbose", sw.train.verbose, "echo progress to stdout");
  add_config_flags(s, sw_opts, sw_vals);

  EvalArgs ev, co, di;
  auto eval_common = [](CLI::App* c, EvalArgs& a, const std::string& split) {
    a.split = split;
    c->add_option("--model", a.model, "model checkpoint")->required();
    c->add_option("--data", a.data, "data directory")->required();
    c->add_option("--split", a.split, "train, dev or test");
    c->add_option("--k", a.k, "window size (default: the model's training size)");
    c->add_option("--out", a.out, "report directory");
    c->add_flag("--force", a.force, "overwrite a non-empty report directory");
  };
  auto* e = app.add_subcommand("evaluate", "BLEU on current sentences and robustness to window size");
  eval_common(e, ev, "test");
  e->add_option("--window-sizes", ev.sizes, "comma-separated evaluation window sizes");
  e->add_option("--beam", ev.beam, "beam size (1: greedy)");
  e->add_option("--alpha", ev.alpha, "length penalty exponent");
  e->add_flag("--contrastive", ev.with_contrastive, "also score the contrastive set at each size");
  auto* c = app.add_subcommand("contrastive", "contrastive accuracy");
  eval_common(c, co, "test");
  c->add_option("--span", co.span, "full or current");
  auto* d = app.add_subcommand("diagnose", "attention entropy, current-sentence attention mass, loss ratio");
  eval_common(d, di, "dev");
  d->add_option("--log", di.log, "training log.csv for the loss-ratio series");

  StatsArgs st;
  auto* x = app.add_subcommand("stats", "significance test between two result files");
  x->add_option("--a", st.a, "first result file")->required();
  x->add_option("--b", st.b, "second result file")->required();
  x->add_option("--permutations", st.permutations, "randomization permutations");
  x->add_option("--seed", st.seed, "randomization seed");

  auto fail = [&](int code, const std::string& kind, const std::string& msg) {
    json j{{"error", msg}, {"kind", kind}};
    err << j.dump() << std::endl;
    return code;
  };
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    if (ex.get_exit_code() == 0) return app.exit(ex, out, err);
    std::string msg = ex.what();
    if (dynamic_cast<const CLI::ExtrasError*>(&ex) && (t->parsed() || s->parsed()))
      msg += "; valid keys: " + TrainConfig::valid_keys();
    return fail(kExitUsage, "usage", msg);
  }

  auto collect = [](const std::map<std::string, CLI::Option*>& opts, const std::map<std::string, std::string>& vals) {
    std::map<std::string, std::string> o;
    for (const auto& [k, opt] : opts)
      if (opt->count()) o[k] = vals.at(k);
    return o;
  };
  try {
    json result;
    if (g->parsed()) result = cmd_gen_data(gen);
    if (t->parsed()) {
      tr.overrides = collect(tr_opts, tr_vals);
      result = cmd_train(tr, out);
    }
    if (s->parsed()) {
      sw.train.overrides = collect(sw_opts, sw_vals);
      result = cmd_sweep(sw, out);
    }
    if (e->parsed()) result = cmd_evaluate(ev);
    if (c->parsed()) result = cmd_contrastive(co);
    if (d->parsed()) result = cmd_diagnose(di);
    if (x->parsed()) result = cmd_stats(st);
    out << result.dump(2) << std::endl;
    return kExitOk;
  } catch (const UsageError& ex) {
    return fail(kExitUsage, "usage", ex.what());
  } catch (const ConfigError& ex) {
    return fail(kExitUsage, "usage", ex.what());
  } catch (const std::exception& ex) {
    return fail(kExitRuntime, "runtime", ex.what());
  }
}

}  // namespace cdmt::cli
