#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cdmt/eval/attention.hpp"
#include "cdmt/eval/report.hpp"

using namespace cdmt;

namespace {

const SyntheticCorpus& corpus() {
  static const SyntheticCorpus c = [] {
    GeneratorConfig g;
    g.n_docs = 30;
    g.vocab_size = 24;
    g.seed = 11;
    return gen_synthetic(g);
  }();
  return c;
}

ModelConfig small_config(SegmentVariant v = SegmentVariant::None) {
  ModelConfig m;
  m.layers = 2;
  m.heads = 2;
  m.d_model = 16;
  m.d_ff = 24;
  m.dropout = 0.0;
  m.src_vocab = corpus().src_vocab.size();
  m.tgt_vocab = corpus().tgt_vocab.size();
  m.position_scheme = PositionScheme::Shifted;
  m.shift = ShiftStrategy::parse("fixed:5");
  m.segment_variant = v;
  return m;
}

// Upper tail of chi-squared(1) as 2 * (1 - Phi(sqrt(x))), Phi by Simpson
// integration of the normal density.
double chi2_1_tail_oracle(double x) {
  const double z = std::sqrt(x);
  const int n = 20000;
  const double h = z / n;
  auto pdf = [](double t) { return std::exp(-t * t / 2) / std::sqrt(2 * M_PI); };
  double s = pdf(0) + pdf(z);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4 : 2) * pdf(i * h);
  return 2 * (0.5 - s * h / 3);
}

// Brute-force corpus BLEU: every n-gram occurrence is compared against all
// reference positions.
double bleu_oracle(const std::vector<Sentence>& hyps, const std::vector<Sentence>& refs) {
  double log_p = 0;
  std::size_t c = 0, r = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    c += hyps[i].size();
    r += refs[i].size();
  }
  for (std::size_t n = 1; n <= 4; ++n) {
    std::size_t match = 0, total = 0;
    for (std::size_t s = 0; s < hyps.size(); ++s) {
      const auto& h = hyps[s];
      const auto& ref = refs[s];
      std::vector<bool> used(ref.size() + 1, false);
      for (std::size_t i = 0; i + n <= h.size(); ++i) {
        ++total;
        for (std::size_t j = 0; j + n <= ref.size(); ++j) {
          if (used[j]) continue;
          if (std::equal(h.begin() + i, h.begin() + i + n, ref.begin() + j)) {
            used[j] = true;
            ++match;
            break;
          }
        }
      }
    }
    if (match == 0) return 0.0;
    log_p += std::log(static_cast<double>(match) / total) / 4;
  }
  const double bp = c < r ? std::exp(1 - static_cast<double>(r) / c) : 1.0;
  return 100 * bp * std::exp(log_p);
}

Sentence words(const std::string& s) { return tokenize(s); }

AttentionRecord record(AttentionKind kind, std::vector<std::vector<double>> rows, std::vector<int> qs,
                       std::vector<int> ks, int cur) {
  AttentionRecord r;
  r.kind = kind;
  r.rows = std::move(rows);
  r.query_seg = std::move(qs);
  r.key_seg = std::move(ks);
  r.current_seg = cur;
  return r;
}

}  // namespace

// ---- aggregation ---------------------------------------------------------------

TEST(Aggregate, PublishedBaseRows) {
  const std::vector<CategoryAccuracy> de{
      {"d=1", 32.89, 7075}, {"d=2", 43.97, 1510}, {"d=3", 47.99, 573}, {"d>3", 70.58, 442}};
  const auto r = aggregate(de);
  EXPECT_NEAR(r.disc, 37.27, 0.005);
  EXPECT_NEAR(r.disc_avg, 48.86, 0.005);
  EXPECT_EQ(r.n, 9600u);
  EXPECT_FALSE(r.disc_all_d.has_value());

  const std::vector<CategoryAccuracy> ru{
      {"deixis", 50.00, 2500}, {"lex.c", 45.87, 1500}, {"ell.infl", 51.80, 500}, {"ell.VP", 27.00, 500}};
  EXPECT_NEAR(aggregate(ru).disc, 46.64, 0.005);
}

TEST(Aggregate, Properties) {
  CounterRng rng(1, 0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<CategoryAccuracy> cats;
    const std::size_t k = 1 + rng.below(6);
    for (std::size_t i = 0; i < k; ++i)
      cats.push_back({"c" + std::to_string(i), 100 * rng.uniform(), 1 + rng.below(1000)});
    const auto r = aggregate(cats);
    const auto [lo, hi] = std::minmax_element(cats.begin(), cats.end(),
                                              [](auto& a, auto& b) { return a.accuracy < b.accuracy; });
    EXPECT_GE(r.disc, lo->accuracy - 1e-9);
    EXPECT_LE(r.disc, hi->accuracy + 1e-9);
    auto shuffled = cats;
    shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_NEAR(aggregate(shuffled).disc, r.disc, 1e-9);
    EXPECT_NEAR(aggregate(shuffled).disc_avg, r.disc_avg, 1e-9);
    for (auto& c : cats) c.n = 37;
    const auto eq = aggregate(cats);
    EXPECT_NEAR(eq.disc, eq.disc_avg, 1e-9);
  }
}

TEST(Aggregate, EmptyCategoriesAndAllDistances) {
  const std::vector<CategoryAccuracy> cats{
      {"d=0", 90.0, 100, false}, {"d=1", 60.0, 300}, {"d=2", 0.0, 0}, {"d=3", 40.0, 100}};
  const auto r = aggregate(cats);
  EXPECT_EQ(r.empty, std::vector<std::string>{"d=2"});
  EXPECT_EQ(r.categories.size(), 3u);
  EXPECT_NEAR(r.disc, 55.0, 1e-12);
  EXPECT_NEAR(r.disc_avg, 50.0, 1e-12);
  ASSERT_TRUE(r.disc_all_d.has_value());
  EXPECT_NEAR(*r.disc_all_d, (9000.0 + 18000 + 4000) / 500, 1e-12);
  EXPECT_THROW(aggregate(std::vector<CategoryAccuracy>{}), std::invalid_argument);
  EXPECT_THROW(aggregate(std::vector<CategoryAccuracy>{{"d=0", 50, 10, false}}), std::invalid_argument);
  EXPECT_THROW(aggregate(std::vector<CategoryAccuracy>{{"x", 101, 10}}), std::invalid_argument);
}

TEST(Aggregate, FromResultsByDistance) {
  std::vector<ContrastiveResult> rs;
  auto add = [&](int d, bool ok) { rs.push_back({"", ok ? 0u : 1u, ok, "anaphora", d, {}}); };
  for (int i = 0; i < 4; ++i) add(1, i < 3);
  for (int i = 0; i < 2; ++i) add(0, true);
  add(2, false);
  const auto cats = categorize(rs, GroupBy::Distance);
  ASSERT_EQ(cats.size(), 3u);
  EXPECT_EQ(cats[0].name, "d=0");
  EXPECT_FALSE(cats[0].needs_context);
  EXPECT_EQ(cats[1].accuracy, 75.0);
  const auto r = aggregate(rs);
  EXPECT_NEAR(r.disc, 60.0, 1e-12);
  EXPECT_NEAR(*r.disc_all_d, 100.0 * 5 / 7, 1e-12);
  EXPECT_NEAR(inter_sentential_accuracy(rs), 60.0, 1e-12);
  EXPECT_EQ(aggregate(rs, GroupBy::Phenomenon).categories.size(), 1u);
}

// ---- contrastive scoring ------------------------------------------------------------

TEST(Contrastive, TiesCountAsIncorrect) {
  EXPECT_EQ(pick_candidate({-1.0, -1.0}), 1u);
  EXPECT_EQ(pick_candidate({-1.0, -2.0, -1.0}), 2u);
  EXPECT_EQ(pick_candidate({-0.5, -2.0, -1.0}), 0u);

  Transformer<double> m(small_config(), 3);
  auto ex = corpus().contrastive.front();
  ex.candidates[1] = ex.candidates[0];
  const auto r = score_contrastive(m, ex, corpus().src_vocab, corpus().tgt_vocab);
  EXPECT_EQ(r.scores[0], r.scores[1]);
  EXPECT_FALSE(r.correct);
  EXPECT_EQ(r.chosen, 1u);
}

TEST(Contrastive, RandomScoresGiveChanceAccuracy) {
  CounterRng rng(8, 0);
  std::size_t correct = 0;
  const std::size_t n = 2000;
  for (std::size_t i = 0; i < n; ++i) correct += pick_candidate({rng.normal(), rng.normal()}) == 0 ? 1 : 0;
  EXPECT_NEAR(100.0 * correct / n, 50.0, 3.0);
}

TEST(Contrastive, PadCandidateRejected) {
  Transformer<double> m(small_config(), 3);
  auto ex = corpus().contrastive.front();
  ex.candidates[1].back().push_back(std::string(kPadToken));
  EXPECT_THROW(score_contrastive(m, ex, corpus().src_vocab, corpus().tgt_vocab), std::invalid_argument);
}

// Candidates share their context, so context positions contribute equally to
// both full-window scores.
TEST(Contrastive, FullWindowAndCurrentSpanAgreeOnDifferences) {
  Transformer<double> m(small_config(SegmentVariant::Learned), 5);
  std::size_t checked = 0;
  for (const auto& ex : corpus().contrastive) {
    if (ex.src.size() < 2) continue;
    for (std::size_t k : {2u, 3u}) {
      const auto full = score_contrastive(m, ex, corpus().src_vocab, corpus().tgt_vocab, k);
      const auto cur =
          score_contrastive(m, ex, corpus().src_vocab, corpus().tgt_vocab, k, ScoreSpan::CurrentSentence);
      EXPECT_NEAR(full.scores[0] - full.scores[1], cur.scores[0] - cur.scores[1], 1e-9);
      EXPECT_LT(full.scores[0], cur.scores[0]);
      ++checked;
    }
  }
  EXPECT_GT(checked, 10u);
}

TEST(Contrastive, WindowCutKeepsLastSentences) {
  const auto& ex = *std::find_if(corpus().contrastive.begin(), corpus().contrastive.end(),
                                 [](const auto& e) { return e.src.size() >= 3; });
  const auto& sv = corpus().src_vocab;
  const auto& tv = corpus().tgt_vocab;
  const auto w1 = contrastive_windows(ex, 1, sv, tv);
  ASSERT_EQ(w1.size(), 2u);
  EXPECT_EQ(w1[0].sentences, 1u);
  EXPECT_EQ(w1[0].src_ids.size(), ex.src.back().size() + 1);
  EXPECT_EQ(contrastive_windows(ex, 0, sv, tv)[0].sentences, ex.src.size());
  EXPECT_EQ(contrastive_windows(ex, 99, sv, tv)[0].sentences, ex.src.size());
}

TEST(Contrastive, DeterministicAndFinite) {
  Transformer<float> m(small_config(), 9);
  const std::vector<ContrastiveExample> set(corpus().contrastive.begin(), corpus().contrastive.begin() + 10);
  const auto a = score_contrastive_set(m, set, corpus().src_vocab, corpus().tgt_vocab, 2);
  const auto b = score_contrastive_set(m, set, corpus().src_vocab, corpus().tgt_vocab, 2);
  ASSERT_EQ(a.size(), set.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].scores, b[i].scores);
    EXPECT_EQ(a[i].id, set[i].id);
    EXPECT_EQ(a[i].correct, a[i].chosen == 0);
    for (double s : a[i].scores) EXPECT_TRUE(std::isfinite(s));
  }
}

// ---- BLEU ------------------------------------------------------------------------

TEST(Bleu, PerfectAndZero) {
  const std::vector<Sentence> refs{words("a b c d e"), words("f g h i")};
  EXPECT_DOUBLE_EQ(bleu(refs, refs), 100.0);
  const std::vector<Sentence> no4{words("a b c x d e"), words("f g x h i")};
  EXPECT_EQ(bleu(no4, refs), 0.0);
  EXPECT_GT(bleu(no4, refs, 3), 0.0);
}

TEST(Bleu, MicroCorpusMatchesBruteForce) {
  const std::vector<Sentence> hyps{words("the cat sat on the mat"), words("there is a cat on the mat")};
  const std::vector<Sentence> refs{words("the cat is on the mat"), words("there is a cat on the red mat")};
  const double b = bleu(hyps, refs);
  EXPECT_NEAR(b, bleu_oracle(hyps, refs), 1e-9);
  // hand count: 1-grams 12/13, 2-grams 8/11, 3-grams 5/9, 4-grams 3/7, brevity exp(1 - 14/13)
  const double hand = 100 * std::exp(1 - 14.0 / 13) *
                      std::exp((std::log(12.0 / 13) + std::log(8.0 / 11) + std::log(5.0 / 9) + std::log(3.0 / 7)) / 4);
  EXPECT_NEAR(b, hand, 1e-9);
}

TEST(Bleu, RandomCorporaMatchOracleAndOrderInvariance) {
  CounterRng rng(12, 0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Sentence> h, r;
    for (int s = 0; s < 6; ++s) {
      Sentence a, b;
      for (std::size_t i = 0, n = 3 + rng.below(8); i < n; ++i) a.push_back(std::string(1, char('a' + rng.below(4))));
      for (std::size_t i = 0, n = 3 + rng.below(8); i < n; ++i) b.push_back(std::string(1, char('a' + rng.below(4))));
      h.push_back(a);
      r.push_back(b);
    }
    const double b = bleu(h, r);
    EXPECT_NEAR(b, bleu_oracle(h, r), 1e-9);
    EXPECT_GE(b, 0.0);
    EXPECT_LE(b, 100.0);
    std::vector<std::size_t> perm{0, 1, 2, 3, 4, 5};
    shuffle(perm.begin(), perm.end(), rng);
    std::vector<Sentence> hp, rp;
    for (auto i : perm) {
      hp.push_back(h[i]);
      rp.push_back(r[i]);
    }
    EXPECT_NEAR(bleu(hp, rp), b, 1e-9);
    EXPECT_DOUBLE_EQ(bleu(h, h), 100.0);
  }
}

TEST(Bleu, Errors) {
  EXPECT_THROW(bleu({words("a")}, {Sentence{}}), std::invalid_argument);
  EXPECT_THROW(bleu({words("a")}, {}), std::invalid_argument);
  EXPECT_THROW(bleu({}, {}), std::invalid_argument);
  EXPECT_EQ(bleu({Sentence{}}, {words("a b c d")}), 0.0);
}

// ---- attention ---------------------------------------------------------------------

TEST(Attention, EntropyExtremes) {
  for (std::size_t n : {1u, 2u, 7u, 40u}) {
    auto r = record(AttentionKind::Cross, {std::vector<double>(n, 1.0 / n)}, {0}, std::vector<int>(n, 0), 0);
    EXPECT_NEAR(attention_entropy({r}), std::log(static_cast<double>(n)), 1e-12);
    std::vector<double> one(n, 0.0);
    one[n / 2] = 1.0;
    r.rows = {one};
    EXPECT_EQ(attention_entropy({r}), 0.0);
  }
  auto bad = record(AttentionKind::Cross, {{0.5, 0.4}}, {0}, {0, 0}, 0);
  EXPECT_THROW(attention_entropy({bad}), std::invalid_argument);
  EXPECT_THROW(attention_entropy({}), std::invalid_argument);
}

TEST(Attention, MassOnCurrentSentence) {
  // uniform attention over two equal-length sentences
  std::vector<std::vector<double>> rows(6, std::vector<double>(6, 1.0 / 6));
  auto enc = record(AttentionKind::EncoderSelf, rows, {0, 0, 0, 1, 1, 1}, {0, 0, 0, 1, 1, 1}, 1);
  auto cross = record(AttentionKind::Cross, {{0.0, 0.0, 0.0, 0.0, 0.0, 1.0}}, {1}, {0, 0, 0, 1, 1, 1}, 1);
  EXPECT_NEAR(current_attention_mass({enc, cross}), 0.5, 1e-12);
  auto none = record(AttentionKind::EncoderSelf, {{1.0}}, {0}, {0}, 1);
  EXPECT_THROW(current_attention_mass({none}), std::invalid_argument);
}

TEST(Attention, ModelDiagnosticsWithinBounds) {
  Transformer<double> m(small_config(), 2);
  for (std::size_t K : {1u, 2u, 3u}) {
    const auto ws = make_windows(corpus().documents, K, corpus().src_vocab, corpus().tgt_vocab);
    const std::vector<Window> some(ws.begin(), ws.begin() + 12);
    const auto d = attention_diagnostics(m, some, 5);
    ASSERT_EQ(d.entropy.size(), 12u);
    std::size_t max_keys = 0;
    for (const auto& w : some) max_keys = std::max({max_keys, w.src_ids.size(), w.tgt_ids.size()});
    for (double h : d.entropy) {
      EXPECT_GE(h, 0.0);
      EXPECT_LE(h, std::log(static_cast<double>(max_keys)) + 1e-12);
    }
    if (K == 1) {
      EXPECT_NEAR(d.mean_mass, 1.0, 1e-12);
    } else {
      EXPECT_GT(d.mean_mass, 0.0);
      EXPECT_LT(d.mean_mass, 1.0);
    }
  }
}

// ---- significance tests ------------------------------------------------------------

TEST(Significance, McNemarOracle) {
  const auto r = mcnemar_counts(15, 5);
  EXPECT_DOUBLE_EQ(r.statistic, 4.05);
  EXPECT_NEAR(r.p, chi2_1_tail_oracle(4.05), 1e-9);
  EXPECT_NEAR(r.p, 0.044, 0.005);
  const auto s = mcnemar_counts(10, 10);
  EXPECT_DOUBLE_EQ(s.statistic, 0.05);
  EXPECT_NEAR(s.p, chi2_1_tail_oracle(0.05), 1e-9);
  EXPECT_NEAR(s.p, 0.82, 0.005);

  std::vector<bool> a, b;
  for (int i = 0; i < 15; ++i) a.push_back(true), b.push_back(false);
  for (int i = 0; i < 5; ++i) a.push_back(false), b.push_back(true);
  for (int i = 0; i < 30; ++i) a.push_back(i % 2), b.push_back(i % 2);
  const auto t = mcnemar(a, b);
  EXPECT_EQ(t.b, 15u);
  EXPECT_EQ(t.c, 5u);
  EXPECT_EQ(t.p, r.p);
  EXPECT_EQ(mcnemar(a, a).p, 1.0);
  EXPECT_THROW(mcnemar(a, {true}), std::invalid_argument);
}

TEST(Significance, ApproximateRandomization) {
  CounterRng rng(3, 0);
  std::vector<double> a(100), b(100);
  for (auto& x : a) x = rng.normal();
  EXPECT_EQ(approx_randomization(a, a, 1000, 1), 1.0);
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = a[i] + 10.0;
  const double p = approx_randomization(a, b, 1000, 1);
  EXPECT_LE(p, 0.01);
  EXPECT_GT(p, 0.0);
  for (auto& x : b) x = rng.normal();
  const double q = approx_randomization(a, b, 200, 2);
  EXPECT_GT(q, 0.0);
  EXPECT_LE(q, 1.0);
  EXPECT_EQ(approx_randomization(a, b, 200, 2), q);
  EXPECT_THROW(approx_randomization(std::vector<double>{}, std::vector<double>{}, 10, 1), std::invalid_argument);
  EXPECT_THROW(approx_randomization(a, b, 0, 1), std::invalid_argument);
  EXPECT_THROW(approx_randomization(a, std::vector<double>(3), 10, 1), std::invalid_argument);
  EXPECT_EQ(kBleuPermutations, 10000u);
  EXPECT_EQ(kEntropyPermutations, 1000u);
}

TEST(Significance, RandomizationOverBleuStatistics) {
  const std::vector<Sentence> refs{words("a b c d e"), words("f g h i j"), words("k l m n o")};
  const std::vector<Sentence> good = refs;
  const std::vector<Sentence> poor{words("a b x d e"), words("f x h i j"), words("k l x n o")};
  const auto sa = bleu_stats(good, refs), sb = bleu_stats(poor, refs);
  const std::function<double(const std::vector<BleuStats>&)> stat = [](const auto& s) { return corpus_bleu(s); };
  EXPECT_EQ(approx_randomization<BleuStats>(sa, sa, 100, 4, stat), 1.0);
  const double p = approx_randomization<BleuStats>(sa, sb, 100, 4, stat);
  // with three items only 2 of 8 swap patterns reach the observed difference
  EXPECT_GT(p, 0.1);
}

// ---- decoding and robustness -------------------------------------------------------

TEST(Robustness, ExtractCurrentSentence) {
  auto e = extract_current({5, 6, kSepId, 7, 8, kEosId}, 2);
  EXPECT_EQ(e.tokens, (std::vector<int>{7, 8}));
  EXPECT_FALSE(e.malformed);
  e = extract_current({5, kSepId, 6, kSepId, 7}, 2);
  EXPECT_EQ(e.tokens, std::vector<int>{7});
  EXPECT_TRUE(e.malformed);
  e = extract_current({5, 6}, 2);
  EXPECT_EQ(e.tokens, (std::vector<int>{5, 6}));
  EXPECT_TRUE(e.malformed);
  EXPECT_TRUE(extract_current({5, kSepId, kEosId}, 2).tokens.empty());
}

TEST(Robustness, BatchedGreedyMatchesSingleWindow) {
  Transformer<double> m(small_config(), 4);
  const auto ws = make_windows(corpus().documents, 2, corpus().src_vocab, corpus().tgt_vocab);
  std::vector<const Window*> ptrs;
  for (std::size_t i = 0; i < 9; ++i) ptrs.push_back(&ws[i * 3]);
  const auto batch = greedy_decode_batch(m, std::span<const Window* const>(ptrs), 12);
  for (std::size_t i = 0; i < ptrs.size(); ++i) {
    const auto one = greedy_decode(m, *ptrs[i], 12);
    EXPECT_EQ(batch[i].tokens, one.tokens);
    EXPECT_EQ(batch[i].finished, one.finished);
    EXPECT_NEAR(batch[i].log_prob, one.log_prob, 1e-9);
  }
}

TEST(Robustness, TrainingSizeMatchesStandardEvaluation) {
  Transformer<double> m(small_config(), 4);
  const std::vector<Document> docs(corpus().documents.begin(), corpus().documents.begin() + 4);
  const auto& sv = corpus().src_vocab;
  const auto& tv = corpus().tgt_vocab;
  DecodeOptions opt;
  opt.extra = 2;
  const auto rows = robustness_eval(m, docs, sv, tv, {2, 3}, 2, opt);
  ASSERT_EQ(rows.size(), 2u);
  const auto tr = translate_windows(m, make_windows(docs, 2, sv, tv), docs, tv, opt);
  EXPECT_EQ(rows[0].bleu, bleu(tr.hyps, tr.refs));
  EXPECT_EQ(rows[0].delta, 0.0);
  EXPECT_EQ(rows[1].delta, rows[1].bleu - rows[0].bleu);
  EXPECT_EQ(rows[0].sentences, 16u);
  EXPECT_THROW(robustness_eval(m, docs, sv, tv, {0}, 2, opt), std::invalid_argument);
  auto tight = small_config();
  tight.max_len = 12;
  Transformer<double> short_model(tight, 4);
  EXPECT_THROW(robustness_eval(short_model, docs, sv, tv, {4}, 2, opt), std::length_error);
}

// ---- reports ----------------------------------------------------------------------

TEST(Reports, CsvRoundTripsAndDiscRecomputes) {
  Transformer<double> m(small_config(), 6);
  const auto rs = score_contrastive_set(m, corpus().contrastive, corpus().src_vocab, corpus().tgt_vocab, 2);
  std::istringstream in(results_csv(rs));
  const auto back = parse_results_csv(in);
  ASSERT_EQ(back.size(), rs.size());
  for (std::size_t i = 0; i < rs.size(); ++i) {
    EXPECT_EQ(back[i].id, rs[i].id);
    EXPECT_EQ(back[i].correct, rs[i].correct);
    EXPECT_EQ(back[i].scores, rs[i].scores);
  }
  const auto rep = aggregate(rs);
  std::istringstream cats(categories_csv(rep));
  const auto again = aggregate(parse_categories_csv(cats));
  EXPECT_NEAR(again.disc, rep.disc, 1e-12);
  EXPECT_NEAR(again.disc_avg, rep.disc_avg, 1e-12);
  const auto j = to_json(rep);
  EXPECT_EQ(j.at("disc").get<double>(), rep.disc);
}
