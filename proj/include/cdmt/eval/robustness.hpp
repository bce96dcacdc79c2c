#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdmt/corpus/document.hpp"
#include "cdmt/eval/bleu.hpp"
#include "cdmt/eval/contrastive.hpp"
#include "cdmt/model/decode.hpp"

namespace cdmt {

struct ExtractedSentence {
  std::vector<int> tokens;
  bool malformed = false;  // separator count differs from the window's
};

/// Tokens after the last <S> of a decoded window (the whole output when it
/// has none); <E> and anything after it is dropped.
inline ExtractedSentence extract_current(const std::vector<int>& out, std::size_t sentences) {
  ExtractedSentence r;
  std::size_t end = out.size(), seps = 0, start = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] == kEosId) {
      end = i;
      break;
    }
    if (out[i] == kSepId) {
      ++seps;
      start = i + 1;
    }
  }
  r.tokens.assign(out.begin() + static_cast<long>(start), out.begin() + static_cast<long>(end));
  r.malformed = seps + 1 != sentences;
  return r;
}

struct DecodeOptions {
  std::size_t beam = 1;     // 1: batched greedy decoding
  double alpha = 1.0;       // length penalty exponent for beam > 1
  std::size_t batch = 32;   // windows per greedy batch
  std::size_t extra = 10;   // output budget beyond twice the source length
};

struct TranslationSet {
  std::vector<Sentence> hyps, refs;  // current sentences only
  std::size_t malformed = 0;
};

/// Decode every window and keep the current sentence of each output.
template <typename T>
TranslationSet translate_windows(const Transformer<T>& m, const std::vector<Window>& ws,
                                 const std::vector<Document>& docs, const Vocab& tgt_vocab,
                                 const DecodeOptions& opt = {}) {
  if (opt.beam < 1) throw std::invalid_argument("beam must be >= 1");
  std::map<std::string, const Document*> by_id;
  for (const auto& d : docs) by_id[d.id] = &d;
  TranslationSet out;
  auto budget = [&](const Window& w) { return 2 * w.src_ids.size() + opt.extra; };
  auto take = [&](const Window& w, const Hypothesis& h) {
    const auto cur = extract_current(h.tokens, w.sentences);
    out.malformed += cur.malformed ? 1 : 0;
    out.hyps.push_back(tgt_vocab.decode(cur.tokens));
    auto it = by_id.find(w.doc_id);
    if (it == by_id.end()) throw std::invalid_argument("window of unknown document " + w.doc_id);
    out.refs.push_back(it->second->sentences.at(w.j).tgt);
  };
  if (opt.beam == 1) {
    for (std::size_t s = 0; s < ws.size(); s += opt.batch) {
      std::vector<const Window*> chunk;
      std::size_t len = 1;
      for (std::size_t i = s; i < std::min(ws.size(), s + opt.batch); ++i) {
        chunk.push_back(&ws[i]);
        len = std::max(len, budget(ws[i]));
      }
      const auto hs = greedy_decode_batch(m, chunk, len);
      for (std::size_t i = 0; i < chunk.size(); ++i) take(*chunk[i], hs[i]);
    }
  } else {
    for (const auto& w : ws) take(w, beam_search(m, w, opt.beam, opt.alpha, budget(w)));
  }
  return out;
}

struct RobustnessRow {
  std::size_t size = 0;
  double bleu = 0.0;
  double delta = 0.0;  // BLEU minus that of the training window size, when evaluated
  std::optional<double> accuracy;  // contrastive, percent
  std::size_t sentences = 0, malformed = 0;
  std::vector<BleuStats> stats;    // per sentence, for significance tests
  std::vector<Sentence> hyps;      // current sentences as decoded
};

/// Translate the test documents with windows of each size and score the
/// current sentences; optionally also score a contrastive set at that size.
template <typename T>
std::vector<RobustnessRow> robustness_eval(const Transformer<T>& m, const std::vector<Document>& docs,
                                           const Vocab& src_vocab, const Vocab& tgt_vocab,
                                           const std::vector<std::size_t>& sizes, std::size_t train_k,
                                           const DecodeOptions& opt = {},
                                           const std::vector<ContrastiveExample>* contrastive = nullptr) {
  if (sizes.empty()) throw std::invalid_argument("robustness_eval: no window sizes");
  const auto& cfg = m.config();
  std::vector<RobustnessRow> rows;
  for (auto k : sizes) {
    if (k < 1) throw std::invalid_argument("robustness_eval: window sizes must be >= 1");
    const auto ws = make_windows(docs, k, src_vocab, tgt_vocab);
    for (const auto& w : ws)
      if (w.src_ids.size() > cfg.max_len || w.tgt_ids.size() > cfg.max_len)
        throw std::length_error("window size " + std::to_string(k) + " exceeds the model's max length " +
                                std::to_string(cfg.max_len));
    RobustnessRow r;
    r.size = k;
    const auto tr = translate_windows(m, ws, docs, tgt_vocab, opt);
    r.stats = bleu_stats(tr.hyps, tr.refs);
    r.bleu = corpus_bleu(r.stats);
    r.sentences = tr.hyps.size();
    r.malformed = tr.malformed;
    r.hyps = tr.hyps;
    if (contrastive && !contrastive->empty())
      r.accuracy = aggregate(score_contrastive_set(m, *contrastive, src_vocab, tgt_vocab, k)).disc;
    rows.push_back(std::move(r));
  }
  for (const auto& base : rows)
    if (base.size == train_k)
      for (auto& r : rows) r.delta = r.bleu - base.bleu;
  return rows;
}

}  // namespace cdmt
