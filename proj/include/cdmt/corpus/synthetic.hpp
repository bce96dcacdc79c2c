#pragma once

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdmt/corpus/document.hpp"
#include "cdmt/corpus/window.hpp"
#include "cdmt/tensor/rng.hpp"

namespace cdmt {

/// A test item: the source sentences (context first, current last) and the
/// candidate target sentence lists; candidate 0 is the reference.
struct ContrastiveExample {
  std::string id;
  std::string doc_id;
  std::size_t j = 0;
  std::vector<std::vector<std::string>> src;
  std::vector<std::vector<std::vector<std::string>>> candidates;
  std::string phenomenon;
  int distance = 0;  // sentences between the ambiguous item and its antecedent

  /// Window over the last min(K, available) sentences for one candidate.
  Window window(std::size_t K, std::size_t candidate, const Vocab& src_vocab, const Vocab& tgt_vocab) const {
    if (K < 1) throw CorpusError("contrastive window: K must be >= 1");
    const std::size_t n = src.size();
    const std::size_t take = std::min(K, n);
    std::span<const std::vector<std::string>> s(src.data() + (n - take), take);
    const auto& c = candidates.at(candidate);
    std::span<const std::vector<std::string>> t(c.data() + (n - take), take);
    return make_window(s, t, src_vocab, tgt_vocab, doc_id, j);
  }

  friend bool operator==(const ContrastiveExample&, const ContrastiveExample&) = default;
};

inline void validate(const ContrastiveExample& ex) {
  if (ex.src.empty()) throw CorpusError("contrastive example " + ex.id + ": no source sentences");
  if (ex.candidates.size() < 2) throw CorpusError("contrastive example " + ex.id + ": needs at least 2 candidates");
  for (const auto& c : ex.candidates) {
    if (c.size() != ex.src.size())
      throw CorpusError("contrastive example " + ex.id + ": candidate sentence count differs from source");
    for (std::size_t s = 0; s + 1 < c.size(); ++s)
      if (c[s] != ex.candidates[0][s])
        throw CorpusError("contrastive example " + ex.id + ": candidates differ outside the current sentence");
  }
}

inline nlohmann::json to_json(const ContrastiveExample& ex) {
  auto sents = [](const std::vector<std::vector<std::string>>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& s : v) a.push_back(join(s));
    return a;
  };
  nlohmann::json cands = nlohmann::json::array();
  for (const auto& c : ex.candidates) cands.push_back(sents(c));
  return {{"id", ex.id},         {"doc_id", ex.doc_id},         {"j", ex.j},          {"src", sents(ex.src)},
          {"candidates", cands}, {"phenomenon", ex.phenomenon}, {"distance", ex.distance}};
}

inline ContrastiveExample contrastive_from_json(const nlohmann::json& j) {
  ContrastiveExample ex;
  ex.id = j.at("id").get<std::string>();
  ex.doc_id = j.value("doc_id", std::string{});
  ex.j = j.value("j", std::size_t{0});
  for (const auto& s : j.at("src")) ex.src.push_back(tokenize(s.get<std::string>()));
  for (const auto& c : j.at("candidates")) {
    std::vector<std::vector<std::string>> cand;
    for (const auto& s : c) cand.push_back(tokenize(s.get<std::string>()));
    ex.candidates.push_back(std::move(cand));
  }
  ex.phenomenon = j.at("phenomenon").get<std::string>();
  ex.distance = j.at("distance").get<int>();
  validate(ex);
  return ex;
}

/// One canonical JSON object per line (keys sorted, no whitespace).
inline void write_contrastive(std::ostream& out, const std::vector<ContrastiveExample>& set) {
  for (const auto& ex : set) out << to_json(ex).dump() << '\n';
}

inline std::vector<ContrastiveExample> read_contrastive(std::istream& in) {
  std::vector<ContrastiveExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (tokenize(line).empty()) continue;
    try {
      out.push_back(contrastive_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw CorpusError("contrastive line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline void save_contrastive(const std::string& path, const std::vector<ContrastiveExample>& set) {
  std::ofstream out(path);
  if (!out) throw CorpusError("cannot write " + path);
  write_contrastive(out, set);
}

inline std::vector<ContrastiveExample> load_contrastive(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open contrastive set " + path);
  return read_contrastive(in);
}

// ---- synthetic discourse corpus ------------------------------------------------

struct GeneratorConfig {
  std::uint64_t seed = 1;
  std::size_t n_docs = 5000;
  std::size_t sentences_per_doc = 4;
  std::size_t vocab_size = 64;  // source word types: nouns of both classes, fillers, AMB
  double inter_rate = 0.7;      // P(antecedent in the previous sentence | AMB sentence, j >= 1)
  double amb_rate = 0.5;        // P(sentence carries an ambiguous token)
  std::size_t min_len = 4;
  std::size_t max_len = 9;
  std::size_t max_context = 3;  // context sentences stored with each contrastive example

  nlohmann::json to_json() const {
    return {{"seed", seed},         {"n_docs", n_docs},   {"sentences_per_doc", sentences_per_doc},
            {"vocab_size", vocab_size}, {"inter_rate", inter_rate}, {"amb_rate", amb_rate},
            {"min_len", min_len},   {"max_len", max_len}, {"max_context", max_context}};
  }
};

inline constexpr std::string_view kAmbSource = "amb";
inline constexpr std::string_view kAmbTargetA = "amb_a";
inline constexpr std::string_view kAmbTargetB = "amb_b";

/// Word inventory derived from vocab_size.
struct SyntheticLexicon {
  std::vector<std::string> nouns_a, nouns_b, fillers;

  explicit SyntheticLexicon(std::size_t vocab_size) {
    const std::size_t per_class = std::max<std::size_t>(2, (vocab_size - 1) / 4);
    const std::size_t n_fill = vocab_size - 1 - 2 * per_class;
    for (std::size_t i = 0; i < per_class; ++i) {
      nouns_a.push_back("na" + std::to_string(i));
      nouns_b.push_back("nb" + std::to_string(i));
    }
    for (std::size_t i = 0; i < n_fill; ++i) fillers.push_back("f" + std::to_string(i));
  }

  static std::string translate(const std::string& src) {
    std::string t = src;
    for (auto& c : t) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return t;
  }

  std::vector<std::string> source_tokens() const {
    std::vector<std::string> v(nouns_a);
    v.insert(v.end(), nouns_b.begin(), nouns_b.end());
    v.insert(v.end(), fillers.begin(), fillers.end());
    v.emplace_back(kAmbSource);
    return v;
  }
  std::vector<std::string> target_tokens() const {
    std::vector<std::string> v;
    for (const auto& s : source_tokens())
      if (s != kAmbSource) v.push_back(translate(s));
    v.emplace_back(kAmbTargetA);
    v.emplace_back(kAmbTargetB);
    return v;
  }
};

struct SyntheticCorpus {
  std::vector<Document> documents;
  std::vector<ContrastiveExample> contrastive;
  Vocab src_vocab, tgt_vocab;
};

namespace detail {

struct Token {
  std::string word;
  int cls = -1;  // 0 / 1 for nouns, -1 otherwise
};

}  // namespace detail

/// Deterministic toy discourse corpus.
///
/// Each sentence mixes filler words with nouns from two disjoint classes and
/// contains at least one noun. An ambiguous source token `amb` must be
/// rendered `amb_a` or `amb_b` after the class of the most recent noun before
/// it. For inter-sentential items only fillers precede `amb` in its sentence,
/// so that noun is the last noun of the previous sentence (distance 1).
/// Targets copy sources word by word (upper-cased), except for `amb`.
/// Every ambiguous current sentence yields one contrastive example whose
/// distractor flips the realisation.
inline SyntheticCorpus gen_synthetic(const GeneratorConfig& cfg) {
  if (cfg.inter_rate < 0.0 || cfg.inter_rate > 1.0) throw std::invalid_argument("gen_synthetic: inter-sentential rate must lie in [0, 1]");
  if (cfg.amb_rate < 0.0 || cfg.amb_rate > 1.0) throw std::invalid_argument("gen_synthetic: ambiguity rate must lie in [0, 1]");
  if (cfg.vocab_size < 20) throw std::invalid_argument("gen_synthetic: vocab size must be >= 20");
  if (cfg.sentences_per_doc < 2) throw std::invalid_argument("gen_synthetic: need >= 2 sentences per document");
  if (cfg.min_len < 3 || cfg.max_len < cfg.min_len) throw std::invalid_argument("gen_synthetic: bad sentence length range");

  const SyntheticLexicon lex(cfg.vocab_size);
  SyntheticCorpus out;
  out.src_vocab = Vocab::build(lex.source_tokens());
  out.tgt_vocab = Vocab::build(lex.target_tokens());
  const CounterRng root(cfg.seed, 0x5e9);

  auto noun = [&](CounterRng& r) {
    const int cls = static_cast<int>(r.below(2));
    const auto& pool = cls == 0 ? lex.nouns_a : lex.nouns_b;
    return detail::Token{pool[r.below(pool.size())], cls};
  };
  auto filler = [&](CounterRng& r) { return detail::Token{lex.fillers[r.below(lex.fillers.size())], -1}; };
  auto mixed = [&](CounterRng& r) { return r.bernoulli(0.4) ? noun(r) : filler(r); };

  for (std::size_t d = 0; d < cfg.n_docs; ++d) {
    CounterRng rng = root.fork(d);
    Document doc;
    doc.id = "doc" + std::to_string(d);
    std::vector<std::vector<detail::Token>> sents;
    std::vector<int> amb_pos, amb_dist, amb_cls;
    for (std::size_t j = 0; j < cfg.sentences_per_doc; ++j) {
      const std::size_t len = cfg.min_len + rng.below(cfg.max_len - cfg.min_len + 1);
      std::vector<detail::Token> s(len);
      int pos = -1, dist = -1;
      if (rng.bernoulli(cfg.amb_rate)) {
        const bool inter = j > 0 && rng.bernoulli(cfg.inter_rate);
        if (inter) {
          pos = static_cast<int>(rng.below(std::min<std::size_t>(3, len - 1)));
          for (int i = 0; i < pos; ++i) s[i] = filler(rng);
          for (std::size_t i = pos + 1; i < len; ++i) s[i] = mixed(rng);
          dist = 1;
        } else {
          pos = 1 + static_cast<int>(rng.below(len - 1));
          for (std::size_t i = 0; i < len; ++i)
            if (static_cast<int>(i) != pos) s[i] = mixed(rng);
          s[rng.below(static_cast<std::size_t>(pos))] = noun(rng);
          dist = 0;
        }
        s[pos] = detail::Token{std::string(kAmbSource), -1};
      } else {
        for (auto& t : s) t = mixed(rng);
      }
      bool has_noun = false;
      for (const auto& t : s) has_noun = has_noun || t.cls >= 0;
      if (!has_noun) {
        // place a noun after the ambiguous token, or anywhere when there is none
        const std::size_t at = pos >= 0 ? pos + 1 + rng.below(len - pos - 1) : rng.below(len);
        s[at] = noun(rng);
      }
      // resolve the antecedent class
      int cls = -1;
      if (pos >= 0) {
        for (int i = pos - 1; i >= 0 && cls < 0; --i) cls = s[i].cls;
        if (cls < 0 && !sents.empty())
          for (std::size_t i = sents.back().size(); cls < 0 && i-- > 0;) cls = sents.back()[i].cls;
      }
      sents.push_back(std::move(s));
      amb_pos.push_back(pos);
      amb_dist.push_back(dist);
      amb_cls.push_back(cls);
    }

    for (std::size_t j = 0; j < sents.size(); ++j) {
      SentencePair p;
      for (std::size_t i = 0; i < sents[j].size(); ++i) {
        p.src.push_back(sents[j][i].word);
        if (static_cast<int>(i) == amb_pos[j])
          p.tgt.emplace_back(amb_cls[j] == 0 ? kAmbTargetA : kAmbTargetB);
        else
          p.tgt.push_back(SyntheticLexicon::translate(sents[j][i].word));
      }
      doc.sentences.push_back(std::move(p));
    }

    for (std::size_t j = 0; j < sents.size(); ++j) {
      if (amb_pos[j] < 0) continue;
      ContrastiveExample ex;
      ex.id = doc.id + "." + std::to_string(j);
      ex.doc_id = doc.id;
      ex.j = j;
      ex.phenomenon = "anaphora";
      ex.distance = amb_dist[j];
      const std::size_t first = j > cfg.max_context ? j - cfg.max_context : 0;
      std::vector<std::vector<std::string>> ref;
      for (std::size_t s = first; s <= j; ++s) {
        ex.src.push_back(doc.sentences[s].src);
        ref.push_back(doc.sentences[s].tgt);
      }
      auto flipped = ref;
      auto& w = flipped.back()[static_cast<std::size_t>(amb_pos[j])];
      w = std::string(w == kAmbTargetA ? kAmbTargetB : kAmbTargetA);
      ex.candidates = {std::move(ref), std::move(flipped)};
      out.contrastive.push_back(std::move(ex));
    }
    out.documents.push_back(std::move(doc));
  }
  return out;
}

}  // namespace cdmt
