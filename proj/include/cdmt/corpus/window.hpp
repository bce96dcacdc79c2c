#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdmt/corpus/document.hpp"
#include "cdmt/corpus/vocab.hpp"

namespace cdmt {

/// One sliding-window unit: sentence j of a document preceded by up to K-1
/// context sentences, on both sides, joined by <S> and closed by <E>.
///
/// Segment indices are 0 for the oldest included sentence and
/// `sentences - 1` for the current one. Each <S> belongs to the sentence it
/// closes; <E> belongs to the current sentence.
struct Window {
  std::string doc_id;
  std::size_t j = 0;          // index of the current sentence in its document
  std::size_t sentences = 0;  // sentences actually included (<= requested K)
  std::vector<int> src_ids, tgt_ids;
  std::vector<int> src_seg, tgt_seg;
  std::size_t current_begin = 0, current_end = 0;  // [begin, end) in tgt_ids, includes <E>
  std::vector<std::size_t> src_lengths;            // per-sentence source lengths without <S>/<E>

  int current_segment() const { return static_cast<int>(sentences) - 1; }
  std::size_t context_sentences() const { return sentences - 1; }
};

namespace detail {

inline void append_side(std::span<const std::vector<std::string>> sents, const Vocab& vocab, std::vector<int>& ids,
                        std::vector<int>& seg, std::vector<std::size_t>* lengths) {
  for (std::size_t k = 0; k < sents.size(); ++k) {
    for (const auto& t : sents[k]) {
      if (is_reserved_token(t)) throw CorpusError("sentence contains reserved token " + t);
      ids.push_back(vocab.id(t));
      seg.push_back(static_cast<int>(k));
    }
    if (lengths) lengths->push_back(sents[k].size());
    ids.push_back(k + 1 < sents.size() ? kSepId : kEosId);
    seg.push_back(static_cast<int>(k));
  }
}

}  // namespace detail

/// Build a window from explicit sentence lists (context first, current last).
inline Window make_window(std::span<const std::vector<std::string>> src_sents,
                          std::span<const std::vector<std::string>> tgt_sents, const Vocab& src_vocab,
                          const Vocab& tgt_vocab, std::string doc_id = {}, std::size_t j = 0) {
  if (src_sents.empty() || src_sents.size() != tgt_sents.size())
    throw CorpusError("make_window: need equal, nonzero source and target sentence counts");
  Window w;
  w.doc_id = std::move(doc_id);
  w.j = j;
  w.sentences = src_sents.size();
  detail::append_side(src_sents, src_vocab, w.src_ids, w.src_seg, &w.src_lengths);
  detail::append_side(tgt_sents, tgt_vocab, w.tgt_ids, w.tgt_seg, nullptr);
  const int cur = w.current_segment();
  w.current_begin = static_cast<std::size_t>(std::find(w.tgt_seg.begin(), w.tgt_seg.end(), cur) - w.tgt_seg.begin());
  w.current_end = w.tgt_ids.size();
  return w;
}

/// One window per sentence. Windows near the document start are truncated
/// to the sentences that exist.
inline std::vector<Window> make_windows(const Document& doc, std::size_t K, const Vocab& src_vocab,
                                        const Vocab& tgt_vocab) {
  if (K < 1) throw CorpusError("make_windows: window size K must be >= 1");
  validate(doc);
  std::vector<Window> out;
  out.reserve(doc.sentences.size());
  for (std::size_t j = 0; j < doc.sentences.size(); ++j) {
    const std::size_t first = j + 1 >= K ? j + 1 - K : 0;
    std::vector<std::vector<std::string>> src, tgt;
    for (std::size_t s = first; s <= j; ++s) {
      src.push_back(doc.sentences[s].src);
      tgt.push_back(doc.sentences[s].tgt);
    }
    out.push_back(make_window(src, tgt, src_vocab, tgt_vocab, doc.id, j));
  }
  return out;
}

inline std::vector<Window> make_windows(const std::vector<Document>& docs, std::size_t K, const Vocab& src_vocab,
                                        const Vocab& tgt_vocab) {
  std::vector<Window> out;
  for (const auto& d : docs) {
    auto w = make_windows(d, K, src_vocab, tgt_vocab);
    out.insert(out.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  return out;
}

// ---- shift values ----------------------------------------------------------------

struct ShiftStrategy {
  enum class Kind { Fixed, AvgCorpus, AvgSequence };
  Kind kind = Kind::Fixed;
  int value = 0;  // Fixed: the shift; AvgCorpus: the resolved shift

  /// "fixed:<n>", "avg-corpus" or "avg-sequence".
  static ShiftStrategy parse(std::string_view s) {
    if (s == "avg-corpus") return {Kind::AvgCorpus, 0};
    if (s == "avg-sequence") return {Kind::AvgSequence, 0};
    if (s.starts_with("fixed:")) {
      const std::string num(s.substr(6));
      std::size_t used = 0;
      int v = -1;
      try {
        v = std::stoi(num, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != num.size() || num.empty() || v < 0)
        throw std::invalid_argument("shift strategy: '" + std::string(s) + "' needs a nonnegative integer");
      return {Kind::Fixed, v};
    }
    throw std::invalid_argument("shift strategy must be fixed:<n>, avg-corpus or avg-sequence, got '" +
                                std::string(s) + "'");
  }

  std::string str() const {
    switch (kind) {
      case Kind::Fixed: return "fixed:" + std::to_string(value);
      case Kind::AvgCorpus: return "avg-corpus";
      case Kind::AvgSequence: return "avg-sequence";
    }
    return {};
  }
};

/// Rounded mean source-sentence length over a corpus, special tokens excluded.
inline int avg_corpus_shift(const std::vector<Document>& corpus) {
  std::size_t total = 0, count = 0;
  for (const auto& d : corpus)
    for (const auto& s : d.sentences) {
      total += s.src.size();
      ++count;
    }
  if (count == 0) throw CorpusError("avg-corpus shift: empty corpus");
  return static_cast<int>(std::lround(static_cast<double>(total) / static_cast<double>(count)));
}

/// Rounded mean source-sentence length within one window.
inline int avg_sequence_shift(const Window& w) {
  if (w.src_lengths.empty()) throw CorpusError("avg-sequence shift: empty window");
  std::size_t total = 0;
  for (auto l : w.src_lengths) total += l;
  return static_cast<int>(std::lround(static_cast<double>(total) / static_cast<double>(w.src_lengths.size())));
}

inline int compute_shift(const ShiftStrategy& s, const std::vector<Document>* corpus, const Window* window) {
  switch (s.kind) {
    case ShiftStrategy::Kind::Fixed: return s.value;
    case ShiftStrategy::Kind::AvgCorpus:
      if (!corpus) throw std::invalid_argument("avg-corpus shift requires a corpus");
      return avg_corpus_shift(*corpus);
    case ShiftStrategy::Kind::AvgSequence:
      if (!window) throw std::invalid_argument("avg-sequence shift requires a window");
      return avg_sequence_shift(*window);
  }
  return 0;
}

}  // namespace cdmt
