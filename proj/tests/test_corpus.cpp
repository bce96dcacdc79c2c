#include <gtest/gtest.h>

#include <sstream>

#include "cdmt/corpus/document.hpp"
#include "cdmt/corpus/synthetic.hpp"
#include "cdmt/corpus/window.hpp"

using namespace cdmt;

namespace {

Document numbered_doc(std::size_t n) {
  Document d;
  d.id = "d";
  for (std::size_t j = 0; j < n; ++j)
    d.sentences.push_back({{"s" + std::to_string(j), "x"}, {"t" + std::to_string(j), "y", "z"}});
  return d;
}

struct Vocabs {
  Vocab src, tgt;
};

Vocabs vocabs_for(const std::vector<Document>& docs) { return {build_vocab(docs, true), build_vocab(docs, false)}; }

std::size_t count(const std::vector<int>& v, int x) { return static_cast<std::size_t>(std::count(v.begin(), v.end(), x)); }

}  // namespace

TEST(Windows, FullWindowJoinsLastKSentences) {
  auto doc = numbered_doc(6);
  auto [sv, tv] = vocabs_for({doc});
  auto ws = make_windows(doc, 4, sv, tv);
  ASSERT_EQ(ws.size(), 6u);
  const auto& w = ws[5];
  EXPECT_EQ(w.sentences, 4u);
  std::vector<std::string> expect{"s2", "x", "<S>", "s3", "x", "<S>", "s4", "x", "<S>", "s5", "x", "<E>"};
  EXPECT_EQ(sv.decode(w.src_ids), expect);
  EXPECT_EQ(count(w.tgt_ids, kSepId), 3u);
  EXPECT_EQ(w.tgt_ids.back(), kEosId);
}

TEST(Windows, DocumentStartIsTruncated) {
  auto doc = numbered_doc(6);
  auto [sv, tv] = vocabs_for({doc});
  auto w = make_windows(doc, 4, sv, tv)[0];
  EXPECT_EQ(w.sentences, 1u);
  EXPECT_EQ(count(w.src_ids, kSepId), 0u);
  EXPECT_EQ(sv.decode(w.src_ids), (std::vector<std::string>{"s0", "x", "<E>"}));
}

TEST(Windows, SizeOneIsSentencePlusEnd) {
  auto doc = numbered_doc(5);
  auto [sv, tv] = vocabs_for({doc});
  for (const auto& w : make_windows(doc, 1, sv, tv)) {
    EXPECT_EQ(w.sentences, 1u);
    EXPECT_EQ(w.src_ids.size(), 3u);
    EXPECT_EQ(w.tgt_ids.size(), 4u);
    EXPECT_EQ(w.current_begin, 0u);
    EXPECT_EQ(w.current_end, 4u);
  }
}

TEST(Windows, Errors) {
  auto [sv, tv] = vocabs_for({numbered_doc(2)});
  EXPECT_THROW(make_windows(numbered_doc(2), 0, sv, tv), CorpusError);
  Document empty{"e", {}};
  EXPECT_THROW(make_windows(empty, 2, sv, tv), CorpusError);
  auto bad = numbered_doc(2);
  bad.sentences[1].tgt.push_back("<S>");
  EXPECT_THROW(make_windows(bad, 2, sv, tv), CorpusError);
}

TEST(Windows, SegmentAssignment) {
  auto doc = numbered_doc(3);
  auto [sv, tv] = vocabs_for({doc});
  auto w = make_windows(doc, 3, sv, tv)[2];
  // t0 y z <S> t1 y z <S> t2 y z <E>
  EXPECT_EQ(w.tgt_seg, (std::vector<int>{0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2}));
  EXPECT_EQ(w.current_begin, 8u);
  EXPECT_EQ(w.current_end, 12u);
}

// Structural invariants over the synthetic corpus at several window sizes.
TEST(Windows, InvariantsHoldOnSyntheticDocuments) {
  GeneratorConfig cfg;
  cfg.n_docs = 60;
  cfg.sentences_per_doc = 6;
  auto corpus = gen_synthetic(cfg);
  for (std::size_t K = 1; K <= 5; ++K) {
    for (const auto& doc : corpus.documents) {
      auto ws = make_windows(doc, K, corpus.src_vocab, corpus.tgt_vocab);
      ASSERT_EQ(ws.size(), doc.sentences.size());
      for (std::size_t j = 0; j < ws.size(); ++j) {
        const auto& w = ws[j];
        EXPECT_EQ(w.sentences, std::min(K, j + 1));
        for (const auto* ids : {&w.src_ids, &w.tgt_ids}) {
          EXPECT_EQ(count(*ids, kSepId), w.sentences - 1);
          EXPECT_EQ(count(*ids, kEosId), 1u);
          EXPECT_EQ(ids->back(), kEosId);
        }
        for (auto [ids, seg] : {std::pair{&w.src_ids, &w.src_seg}, std::pair{&w.tgt_ids, &w.tgt_seg}}) {
          ASSERT_EQ(ids->size(), seg->size());
          EXPECT_EQ((*seg)[0], 0);
          for (std::size_t i = 1; i < seg->size(); ++i)
            EXPECT_EQ((*seg)[i], (*seg)[i - 1] + ((*ids)[i - 1] == kSepId ? 1 : 0));
        }
        EXPECT_LT(w.current_begin, w.current_end);
        for (std::size_t i = 0; i < w.tgt_ids.size(); ++i)
          EXPECT_EQ(w.tgt_seg[i] == w.current_segment(), i >= w.current_begin && i < w.current_end);
        std::vector<int> cur(w.tgt_ids.begin() + static_cast<long>(w.current_begin), w.tgt_ids.end() - 1);
        EXPECT_EQ(corpus.tgt_vocab.decode(cur), doc.sentences[j].tgt);
      }
    }
  }
}

TEST(Vocab, ReservedIdsAndRoundTrip) {
  Vocab v = Vocab::build(std::vector<std::string>{"b", "a", "c", "a"});
  EXPECT_EQ(v.token(0), "<PAD>");
  EXPECT_EQ(v.token(1), "<UNK>");
  EXPECT_EQ(v.token(2), "<S>");
  EXPECT_EQ(v.token(3), "<E>");
  EXPECT_EQ(v.size(), 7u);
  std::vector<std::string> s{"c", "a", "b", "b"};
  EXPECT_EQ(v.decode(v.encode(s)), s);
  EXPECT_EQ(v.id("zzz"), kUnkId);
  EXPECT_EQ(Vocab::from_tokens(v.tokens()), v);
  EXPECT_EQ(Vocab::from_tokens(v.tokens()).digest(), v.digest());
  EXPECT_THROW(Vocab::from_tokens({"a", "b"}), std::invalid_argument);
}

TEST(Vocab, SyntheticTextRoundTrips) {
  GeneratorConfig cfg;
  cfg.n_docs = 30;
  auto c = gen_synthetic(cfg);
  for (const auto& d : c.documents)
    for (const auto& s : d.sentences) {
      EXPECT_EQ(c.src_vocab.decode(c.src_vocab.encode(s.src)), s.src);
      EXPECT_EQ(c.tgt_vocab.decode(c.tgt_vocab.encode(s.tgt)), s.tgt);
    }
}

TEST(Shift, Strategies) {
  EXPECT_EQ(compute_shift(ShiftStrategy::parse("fixed:100"), nullptr, nullptr), 100);
  Document d{"d", {{std::vector<std::string>(6, "a"), {"x"}}, {std::vector<std::string>(10, "a"), {"x"}}}};
  std::vector<Document> corpus{d};
  EXPECT_EQ(compute_shift(ShiftStrategy::parse("avg-corpus"), &corpus, nullptr), 8);

  Vocab v = Vocab::build(std::vector<std::string>{"a", "x"});
  std::vector<std::vector<std::string>> src{std::vector<std::string>(3, "a"), std::vector<std::string>(5, "a"),
                                            std::vector<std::string>(4, "a"), std::vector<std::string>(4, "a")};
  std::vector<std::vector<std::string>> tgt(4, {"x"});
  auto w = make_window(src, tgt, v, v);
  EXPECT_EQ(compute_shift(ShiftStrategy::parse("avg-sequence"), nullptr, &w), 4);

  std::vector<Document> none;
  EXPECT_THROW(avg_corpus_shift(none), CorpusError);
  EXPECT_THROW(compute_shift(ShiftStrategy::parse("avg-corpus"), nullptr, nullptr), std::invalid_argument);
  EXPECT_THROW(ShiftStrategy::parse("fixed:-3"), std::invalid_argument);
  EXPECT_THROW(ShiftStrategy::parse("avg"), std::invalid_argument);
  EXPECT_EQ(ShiftStrategy::parse("fixed:7").str(), "fixed:7");
}

TEST(CorpusFile, ReadWriteRoundTrip) {
  GeneratorConfig cfg;
  cfg.n_docs = 20;
  auto c = gen_synthetic(cfg);
  std::stringstream ss;
  write_corpus(ss, c.documents);
  auto back = read_corpus(ss);
  ASSERT_EQ(back.size(), c.documents.size());
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_EQ(back[i].sentences, c.documents[i].sentences);
}

TEST(CorpusFile, BadLinesRejected) {
  std::stringstream missing("a b ||| A B\nc d\n");
  EXPECT_THROW(read_corpus(missing), CorpusError);
  std::stringstream reserved("a <E> ||| A\n");
  EXPECT_THROW(read_corpus(reserved), CorpusError);
  std::stringstream blanks("a ||| A\n\n\n b ||| B\n c ||| C\n");
  auto docs = read_corpus(blanks);
  ASSERT_EQ(docs.size(), 2u);
  EXPECT_EQ(docs[1].sentences.size(), 2u);
}

TEST(Synthetic, DeterministicGivenSeed) {
  GeneratorConfig cfg;
  cfg.n_docs = 200;
  cfg.seed = 7;
  auto dump = [&] {
    auto c = gen_synthetic(cfg);
    std::stringstream ss;
    write_corpus(ss, c.documents);
    write_contrastive(ss, c.contrastive);
    return ss.str();
  };
  EXPECT_EQ(dump(), dump());
  cfg.seed = 8;
  const auto other = dump();
  cfg.seed = 7;
  EXPECT_NE(dump(), other);
}

TEST(Synthetic, ZeroRateMeansIntraSentential) {
  GeneratorConfig cfg;
  cfg.n_docs = 300;
  cfg.inter_rate = 0.0;
  auto c = gen_synthetic(cfg);
  ASSERT_FALSE(c.contrastive.empty());
  for (const auto& ex : c.contrastive) EXPECT_EQ(ex.distance, 0);
}

TEST(Synthetic, ParameterValidation) {
  GeneratorConfig cfg;
  cfg.inter_rate = 1.5;
  EXPECT_THROW(gen_synthetic(cfg), std::invalid_argument);
  cfg.inter_rate = -0.1;
  EXPECT_THROW(gen_synthetic(cfg), std::invalid_argument);
  cfg = {};
  cfg.vocab_size = 19;
  EXPECT_THROW(gen_synthetic(cfg), std::invalid_argument);
  cfg = {};
  cfg.sentences_per_doc = 1;
  EXPECT_THROW(gen_synthetic(cfg), std::invalid_argument);
}

// Independent re-derivation of every realisation from the source text alone.
TEST(Synthetic, RealisationFollowsMostRecentNoun) {
  GeneratorConfig cfg;
  cfg.n_docs = 500;
  auto c = gen_synthetic(cfg);
  std::size_t checked = 0;
  for (const auto& d : c.documents) {
    std::string last_cls;
    for (const auto& s : d.sentences) {
      ASSERT_EQ(s.src.size(), s.tgt.size());
      for (std::size_t i = 0; i < s.src.size(); ++i) {
        const auto& w = s.src[i];
        if (w == "amb") {
          ASSERT_FALSE(last_cls.empty());
          EXPECT_EQ(s.tgt[i], last_cls == "na" ? "amb_a" : "amb_b");
          ++checked;
        } else {
          EXPECT_EQ(s.tgt[i], SyntheticLexicon::translate(w));
          if (w.starts_with("na") || w.starts_with("nb")) last_cls = w.substr(0, 2);
        }
      }
    }
  }
  EXPECT_GT(checked, 500u);
}

TEST(Synthetic, ContrastiveDistractorsDifferOnlyInCurrentSpan) {
  GeneratorConfig cfg;
  cfg.n_docs = 200;
  auto c = gen_synthetic(cfg);
  for (const auto& ex : c.contrastive) {
    ASSERT_EQ(ex.candidates.size(), 2u);
    for (std::size_t K = 1; K <= 4; ++K) {
      auto ref = ex.window(K, 0, c.src_vocab, c.tgt_vocab);
      auto dis = ex.window(K, 1, c.src_vocab, c.tgt_vocab);
      ASSERT_EQ(ref.tgt_ids.size(), dis.tgt_ids.size());
      std::size_t diffs = 0;
      for (std::size_t i = 0; i < ref.tgt_ids.size(); ++i)
        if (ref.tgt_ids[i] != dis.tgt_ids[i]) {
          ++diffs;
          EXPECT_GE(i, ref.current_begin);
        }
      EXPECT_EQ(diffs, 1u);
    }
    if (ex.distance == 1) EXPECT_GE(ex.j, 1u);
  }
}

TEST(Synthetic, DefaultMajorityOracleIsAtChance) {
  auto c = gen_synthetic(GeneratorConfig{});
  std::size_t hits = 0;
  for (const auto& ex : c.contrastive) {
    // always answer amb_a
    const auto& ref = ex.candidates[0].back();
    if (std::find(ref.begin(), ref.end(), "amb_a") != ref.end()) ++hits;
  }
  const double acc = static_cast<double>(hits) / static_cast<double>(c.contrastive.size());
  EXPECT_NEAR(acc, 0.5, 0.02);
  RecordProperty("majority_accuracy", std::to_string(acc));
}

TEST(Contrastive, JsonLinesRoundTrip) {
  GeneratorConfig cfg;
  cfg.n_docs = 40;
  auto c = gen_synthetic(cfg);
  std::stringstream ss;
  write_contrastive(ss, c.contrastive);
  auto back = read_contrastive(ss);
  EXPECT_EQ(back, c.contrastive);

  std::stringstream bad(R"({"id":"x","src":["a"],"candidates":[["A"]],"phenomenon":"p","distance":0})");
  EXPECT_THROW(read_contrastive(bad), CorpusError);
}
