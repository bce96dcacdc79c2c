#include <gtest/gtest.h>

#include <cmath>

#include "cdmt/corpus/synthetic.hpp"
#include "cdmt/model/decode.hpp"
#include "cdmt/model/io.hpp"
#include "cdmt/tensor/gradcheck.hpp"

using namespace cdmt;

namespace {

struct Fixture {
  SyntheticCorpus corpus;
  std::vector<Window> windows;
};

const Fixture& data() {
  static const Fixture f = [] {
    GeneratorConfig g;
    g.n_docs = 40;
    g.vocab_size = 24;
    Fixture f{gen_synthetic(g), {}};
    f.windows = make_windows(f.corpus.documents, 2, f.corpus.src_vocab, f.corpus.tgt_vocab);
    return f;
  }();
  return f;
}

ModelConfig small_config(PositionScheme scheme = PositionScheme::Plain,
                         SegmentVariant seg = SegmentVariant::None) {
  ModelConfig c;
  c.layers = 2;
  c.heads = 2;
  c.d_model = 16;
  c.d_ff = 24;
  c.dropout = 0.0;
  c.src_vocab = data().corpus.src_vocab.size();
  c.tgt_vocab = data().corpus.tgt_vocab.size();
  c.position_scheme = scheme;
  c.segment_variant = seg;
  c.shift = ShiftStrategy::parse("fixed:5");
  return c;
}

template <typename T>
std::vector<T> log_probs(const Transformer<T>& m, std::vector<const Window*> ws) {
  auto b = make_batch(ws, m.config());
  Graph<T> g(false);
  auto out = m.forward(g, b);
  return {out.log_probs.value().begin(), out.log_probs.value().end()};
}

// Rows of window i in a batch, trimmed to its own target length.
template <typename T>
std::vector<T> rows_of(const std::vector<T>& lp, const Batch& b, std::size_t i, std::size_t V) {
  auto first = lp.begin() + static_cast<long>(i * b.tgt_len * V);
  return {first, first + static_cast<long>(b.tgt_lengths[i] * V)};
}

}  // namespace

TEST(Transformer, LogProbRowsNormalised) {
  Transformer<double> m(small_config(), 1);
  const auto& ws = data().windows;
  auto lp = log_probs(m, {&ws[0], &ws[1], &ws[5]});
  const std::size_t V = m.config().tgt_vocab;
  for (std::size_t r = 0; r < lp.size() / V; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < V; ++c) s += std::exp(lp[r * V + c]);
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Transformer, BatchOrderDoesNotLeak) {
  for (auto variant : {SegmentVariant::None, SegmentVariant::Sinusoidal, SegmentVariant::Learned}) {
    Transformer<double> m(small_config(PositionScheme::Shifted, variant), 2);
    const auto& ws = data().windows;
    std::vector<const Window*> a{&ws[3], &ws[8], &ws[12]}, b{&ws[12], &ws[3], &ws[8]};
    const auto ba = make_batch(a, m.config()), bb = make_batch(b, m.config());
    const auto la = log_probs(m, a), lb = log_probs(m, b);
    const std::size_t V = m.config().tgt_vocab;
    const std::size_t map[3] = {1, 2, 0};
    for (std::size_t i = 0; i < 3; ++i) {
      auto x = rows_of(la, ba, i, V), y = rows_of(lb, bb, map[i], V);
      ASSERT_EQ(x.size(), y.size());
      for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(x[k], y[k], 1e-12);
    }
  }
}

TEST(Transformer, PaddingDoesNotChangeOutputs) {
  Transformer<double> m(small_config(PositionScheme::Shifted, SegmentVariant::Sinusoidal), 3);
  const auto& ws = data().windows;
  const std::size_t V = m.config().tgt_vocab;
  for (std::size_t i = 0; i < 10; ++i) {
    const Window* longest = &ws[0];
    for (const auto& w : ws)
      if (w.src_ids.size() + w.tgt_ids.size() > longest->src_ids.size() + longest->tgt_ids.size()) longest = &w;
    std::vector<const Window*> alone{&ws[i]}, padded{&ws[i], longest};
    const auto b = make_batch(padded, m.config());
    const auto x = log_probs(m, alone), y = rows_of(log_probs(m, padded), b, 0, V);
    ASSERT_EQ(x.size(), y.size());
    for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(x[k], y[k], 1e-12);
  }
}

TEST(Transformer, CausalityUnderTargetPerturbation) {
  Transformer<double> m(small_config(PositionScheme::Shifted, SegmentVariant::Learned), 4);
  const auto& ws = data().windows;
  const std::size_t V = m.config().tgt_vocab;
  CounterRng rng(9, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const Window& w = ws[rng.below(ws.size())];
    const std::size_t n = w.tgt_ids.size();
    const std::size_t t = rng.below(n);
    Window p = w;
    // Changing output token j alters decoder input j+1 onward; keep <S> so
    // that segment structure stays valid.
    for (std::size_t j = t; j < n; ++j)
      if (p.tgt_ids[j] != kSepId && p.tgt_ids[j] != kEosId)
        p.tgt_ids[j] = kNumReserved + static_cast<int>(rng.below(V - kNumReserved));
    const auto a = log_probs(m, {&w}), b = log_probs(m, {&p});
    for (std::size_t k = 0; k < (t + 1) * V; ++k) ASSERT_EQ(a[k], b[k]) << "trial " << trial << " row " << k / V;
  }
}

TEST(Transformer, AttentionRecordsAreDistributions) {
  Transformer<double> m(small_config(PositionScheme::Shifted, SegmentVariant::None), 5);
  const auto& ws = data().windows;
  std::vector<const Window*> batch{&ws[1], &ws[2], &ws[7]};
  const auto b = make_batch(batch, m.config());
  Graph<double> g(false);
  auto out = m.forward(g, b, {nullptr, true});
  ASSERT_EQ(out.attention.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    ASSERT_EQ(out.attention[i].size(), 2u * 3u * 2u);  // layers * kinds * heads
    for (const auto& r : out.attention[i]) {
      EXPECT_EQ(r.rows.size(), r.query_seg.size());
      for (std::size_t q = 0; q < r.rows.size(); ++q) {
        ASSERT_EQ(r.rows[q].size(), r.key_seg.size());
        double s = 0;
        for (std::size_t k = 0; k < r.rows[q].size(); ++k) {
          EXPECT_GE(r.rows[q][k], 0.0);
          s += r.rows[q][k];
          if (r.kind == AttentionKind::DecoderSelf && k > q) EXPECT_EQ(r.rows[q][k], 0.0);
        }
        EXPECT_NEAR(s, 1.0, 1e-6);
      }
      EXPECT_EQ(r.current_seg, batch[i]->current_segment());
    }
  }
}

TEST(Transformer, DeterministicForward) {
  auto cfg = small_config();
  Transformer<float> a(cfg, 6), b(cfg, 6);
  const auto& ws = data().windows;
  EXPECT_EQ(log_probs(a, {&ws[4]}), log_probs(b, {&ws[4]}));

  cfg.dropout = 0.3;
  Transformer<float> c(cfg, 6);
  auto run = [&] {
    std::vector<const Window*> one{&ws[4]};
    auto batch = make_batch(one, cfg);
    CounterRng rng(11, 2);
    Graph<float> g;
    auto out = c.forward(g, batch, {&rng, false});
    return std::vector<float>(out.log_probs.value().begin(), out.log_probs.value().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(Transformer, LengthLimits) {
  auto cfg = small_config();
  cfg.max_len = 8;
  Transformer<double> m(cfg, 1);
  const auto& ws = data().windows;
  std::vector<const Window*> one{&ws[1]};
  EXPECT_THROW(make_batch(one, cfg), std::length_error);

  auto learned = small_config(PositionScheme::Plain, SegmentVariant::Learned);
  learned.max_k = 1;
  EXPECT_THROW(make_batch(one, learned), std::length_error);
}

TEST(ModelConfig, Validation) {
  auto cfg = small_config();
  cfg.heads = 3;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = small_config();
  cfg.dropout = 1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = small_config(PositionScheme::Shifted, SegmentVariant::Learned);
  cfg.shift = ShiftStrategy::parse("avg-corpus");
  cfg.shift.value = 7;
  EXPECT_EQ(ModelConfig::from_json(cfg.to_json()), cfg);
}

TEST(Checkpoint, ModelRoundTripIsBitwise) {
  const auto& d = data();
  auto run = [&]<typename T>(T) {
    Transformer<T> m(small_config(PositionScheme::Shifted, SegmentVariant::Learned), 8);
    const std::string bytes = encode_model(m, d.corpus.src_vocab, d.corpus.tgt_vocab, {{"step", 3}});
    auto loaded = model_from_checkpoint<T>(decode_checkpoint(bytes));
    EXPECT_EQ(loaded.model.config(), m.config());
    EXPECT_EQ(loaded.src_vocab, d.corpus.src_vocab);
    EXPECT_EQ(loaded.header.at("meta").at("step"), 3);
    for (std::size_t i = 0; i < 20; ++i)
      EXPECT_EQ(log_probs(m, {&d.windows[i]}), log_probs(loaded.model, {&d.windows[i]}));
  };
  run(0.0f);
  run(0.0);
}

TEST(Decode, LengthPenalty) {
  EXPECT_NEAR(length_penalty(7, 0.6), std::pow(2.0, 0.6), 1e-12);
  EXPECT_NEAR(length_penalty(7, 0.6), 1.5157, 1e-4);
  for (std::size_t n : {1u, 5u, 40u}) EXPECT_EQ(length_penalty(n, 0.0), 1.0);
}

TEST(Decode, BeamOneEqualsGreedy) {
  const auto& ws = data().windows;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Transformer<double> m(small_config(PositionScheme::Shifted, SegmentVariant::Sinusoidal), seed);
    for (std::size_t i = 0; i < 8; ++i) {
      auto g = greedy_decode(m, ws[i], 12);
      auto b = beam_search(m, ws[i], 1, 0.6, 12);
      EXPECT_EQ(g.tokens, b.tokens);
      EXPECT_EQ(g.finished, b.finished);
      EXPECT_NEAR(g.log_prob, b.log_prob, 1e-12);
    }
  }
}

TEST(Decode, BeamScoresAreLengthNormalised) {
  Transformer<double> m(small_config(), 4);
  const auto& w = data().windows[3];
  auto h = beam_search(m, w, 4, 0.6, 10);
  const std::size_t n = h.tokens.size() + (h.finished ? 1 : 0);
  EXPECT_NEAR(h.score, h.log_prob / length_penalty(n, 0.6), 1e-12);
  EXPECT_LE(h.tokens.size(), 10u);
  // a wider beam never finds a worse normalised score than the greedy path's
  auto g = beam_search(m, w, 1, 0.6, 10);
  EXPECT_GE(h.score + 1e-12, g.score);
}

TEST(Decode, Errors) {
  Transformer<double> m(small_config(), 1);
  const auto& w = data().windows[0];
  EXPECT_THROW(beam_search(m, w, 0, 0.6, 5), std::invalid_argument);
  EXPECT_THROW(beam_search(m, w, 2, 0.6, 0), std::invalid_argument);
  EXPECT_THROW(greedy_decode(m, w, 0), std::invalid_argument);
}

TEST(GradCheck, SmallModelParameters) {
  const auto& ws = data().windows;
  auto cfg = small_config(PositionScheme::Shifted, SegmentVariant::Learned);
  Transformer<double> m(cfg, 12);
  std::vector<const Window*> batch{&ws[2], &ws[9]};
  const auto b = make_batch(batch, cfg);
  auto loss = [&](Graph<double>& g) {
    auto lp = m.forward(g, b).log_probs;
    std::vector<double> w(lp.size(), 0.0);
    const std::size_t V = cfg.tgt_vocab;
    for (std::size_t i = 0; i < b.out_ids.size(); ++i)
      if (b.out_ids[i] != kPadId) w[i * V + static_cast<std::size_t>(b.out_ids[i])] = -1.0;
    return g.weighted_sum(lp, std::move(w));
  };
  auto ps = m.parameters();
  CounterRng rng(3, 0);
  auto res = finite_diff_check<double>(loss, ps, 1e-5, 6, rng);
  EXPECT_LT(res.max_rel_error, 1e-4) << "worst index " << res.worst_index;
  EXPECT_GT(res.checked, 100u);
  EXPECT_LT(res.below_floor * 10, res.checked);
}
