#pragma once

#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdmt/corpus/vocab.hpp"

namespace cdmt {

struct SentencePair {
  std::vector<std::string> src;
  std::vector<std::string> tgt;

  friend bool operator==(const SentencePair&, const SentencePair&) = default;
};

struct Document {
  std::string id;
  std::vector<SentencePair> sentences;

  friend bool operator==(const Document&, const Document&) = default;
};

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void validate(const Document& doc) {
  if (doc.sentences.empty()) throw CorpusError("document '" + doc.id + "' has no sentences");
  for (std::size_t j = 0; j < doc.sentences.size(); ++j) {
    for (const auto* side : {&doc.sentences[j].src, &doc.sentences[j].tgt})
      for (const auto& t : *side)
        if (is_reserved_token(t))
          throw CorpusError("document '" + doc.id + "' sentence " + std::to_string(j) + " contains reserved token " +
                            t);
  }
}

using Tokenizer = std::function<std::vector<std::string>(std::string_view)>;

/// Corpus text format: one "source ||| target" pair per line, documents
/// separated by one or more blank lines. Documents get ids "<prefix><index>".
inline std::vector<Document> read_corpus(std::istream& in, const std::string& id_prefix = "doc",
                                         const Tokenizer& tok = tokenize) {
  std::vector<Document> docs;
  Document cur;
  auto flush = [&] {
    if (cur.sentences.empty()) return;
    cur.id = id_prefix + std::to_string(docs.size());
    validate(cur);
    docs.push_back(std::move(cur));
    cur = Document{};
  };
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (tokenize(line).empty()) {
      flush();
      continue;
    }
    const auto bar = line.find("|||");
    if (bar == std::string::npos)
      throw CorpusError("corpus line " + std::to_string(lineno) + ": missing '|||' separator");
    if (line.find("|||", bar + 3) != std::string::npos)
      throw CorpusError("corpus line " + std::to_string(lineno) + ": more than one '|||' separator");
    SentencePair p{tok(std::string_view(line).substr(0, bar)), tok(std::string_view(line).substr(bar + 3))};
    cur.sentences.push_back(std::move(p));
  }
  flush();
  return docs;
}

inline std::vector<Document> load_corpus(const std::string& path, const std::string& id_prefix = "doc") {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus " + path);
  return read_corpus(in, id_prefix);
}

inline void write_corpus(std::ostream& out, const std::vector<Document>& docs) {
  for (std::size_t d = 0; d < docs.size(); ++d) {
    if (d) out << '\n';
    for (const auto& s : docs[d].sentences) out << join(s.src) << " ||| " << join(s.tgt) << '\n';
  }
}

inline void save_corpus(const std::string& path, const std::vector<Document>& docs) {
  std::ofstream out(path);
  if (!out) throw CorpusError("cannot write corpus " + path);
  write_corpus(out, docs);
}

template <typename F>
void for_each_token(const std::vector<Document>& docs, bool source, F&& f) {
  for (const auto& d : docs)
    for (const auto& s : d.sentences)
      for (const auto& t : source ? s.src : s.tgt) f(t);
}

inline Vocab build_vocab(const std::vector<Document>& docs, bool source) {
  std::vector<std::string> toks;
  for_each_token(docs, source, [&](const std::string& t) { toks.push_back(t); });
  return Vocab::build(toks);
}

}  // namespace cdmt
