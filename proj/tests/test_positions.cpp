#include <gtest/gtest.h>

#include <cmath>

#include "cdmt/corpus/synthetic.hpp"
#include "cdmt/positions/positions.hpp"

using namespace cdmt;

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST(Sinusoidal, PositionZero) {
  auto v = sinusoidal_pe(0, 8);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(v[i], i % 2 == 0 ? 0.0 : 1.0);
}

TEST(Sinusoidal, SquaredNormIsHalfDim) {
  CounterRng rng(1, 0);
  for (int t = 0; t < 200; ++t) {
    const long p = static_cast<long>(rng.below(100000));
    const std::size_t d = 2 * (1 + rng.below(64));
    auto v = sinusoidal_pe(p, d);
    EXPECT_NEAR(dot(v, v), static_cast<double>(d) / 2.0, 1e-9);
  }
}

TEST(Sinusoidal, DotProductDependsOnlyOnOffset) {
  CounterRng rng(2, 0);
  for (int t = 0; t < 200; ++t) {
    const long delta = static_cast<long>(rng.below(300));
    const long t1 = static_cast<long>(rng.below(2000)), t2 = static_cast<long>(rng.below(2000));
    const double a = dot(sinusoidal_pe(t1, 64), sinusoidal_pe(t1 + delta, 64));
    const double b = dot(sinusoidal_pe(t2, 64), sinusoidal_pe(t2 + delta, 64));
    EXPECT_NEAR(a, b, 1e-9);
  }
}

TEST(Sinusoidal, Errors) {
  EXPECT_THROW(sinusoidal_pe(3, 7), std::invalid_argument);
  EXPECT_THROW(sinusoidal_pe(-1, 8), std::invalid_argument);
}

TEST(Shifted, TwoSentenceExample) {
  // sentence 0 = raw positions 0..4 with its <S> at 4
  std::vector<int> seg{0, 0, 0, 0, 0, 1, 1, 1};
  auto p = shifted_positions(seg, 10);
  EXPECT_EQ(p, (std::vector<int>{0, 1, 2, 3, 4, 15, 16, 17}));
}

TEST(Shifted, ZeroShiftIsIdentity) {
  std::vector<int> seg{0, 0, 1, 1, 2, 2, 2};
  auto p = shifted_positions(seg, 0);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(p[i], static_cast<int>(i));
}

TEST(Shifted, Errors) {
  std::vector<int> seg{0, 1};
  EXPECT_THROW(shifted_positions(seg, -1), std::invalid_argument);
  std::vector<int> jump{0, 2};
  EXPECT_THROW(shifted_positions(jump, 1), std::invalid_argument);
  std::vector<int> down{1, 0};
  EXPECT_THROW(shifted_positions(down, 1), std::invalid_argument);
}

TEST(Shifted, PropertiesOverSyntheticWindows) {
  GeneratorConfig cfg;
  cfg.n_docs = 40;
  cfg.sentences_per_doc = 6;
  auto c = gen_synthetic(cfg);
  for (int shift : {0, 1, 7, 100}) {
    for (std::size_t K = 1; K <= 4; ++K) {
      for (const auto& w : make_windows(c.documents, K, c.src_vocab, c.tgt_vocab)) {
        auto plain = shifted_positions(w.src_seg, 0);
        auto p = shifted_positions(w.src_seg, shift);
        for (std::size_t i = 1; i < p.size(); ++i) {
          EXPECT_GT(p[i], p[i - 1]);
          if (w.src_seg[i] != w.src_seg[i - 1]) EXPECT_EQ(p[i] - p[i - 1], 1 + shift);
        }
        for (std::size_t a = 0; a < p.size(); ++a)
          for (std::size_t b = 0; b < p.size(); ++b)
            if (w.src_seg[a] == w.src_seg[b]) EXPECT_EQ(p[a] - p[b], plain[a] - plain[b]);
      }
    }
  }
}

// The current sentence sees the same relative position structure (Gram matrix
// of its encodings) inside a shifted window as it does standalone.
TEST(Shifted, CurrentSentenceMatchesStandaloneUpToOffset) {
  GeneratorConfig cfg;
  cfg.n_docs = 20;
  auto c = gen_synthetic(cfg);
  for (const auto& w : make_windows(c.documents, 4, c.src_vocab, c.tgt_vocab)) {
    auto p = shifted_positions(w.src_seg, 9);
    std::vector<long> cur;
    for (std::size_t i = 0; i < p.size(); ++i)
      if (w.src_seg[i] == w.current_segment()) cur.push_back(p[i]);
    const long offset = cur[0];
    for (std::size_t a = 0; a < cur.size(); ++a) {
      EXPECT_EQ(cur[a] - offset, static_cast<long>(a));
      for (std::size_t b = 0; b < cur.size(); ++b)
        EXPECT_NEAR(dot(sinusoidal_pe(cur[a], 32), sinusoidal_pe(cur[b], 32)),
                    dot(sinusoidal_pe(static_cast<long>(a), 32), sinusoidal_pe(static_cast<long>(b), 32)), 1e-9);
    }
  }
}

TEST(Plan, PlainSchemeIsSequenceIndex) {
  std::vector<int> seg{0, 0, 1, 1, 1};
  auto plan = make_position_plan(seg, PositionScheme::Plain, 50, SegmentVariant::None);
  EXPECT_EQ(plan.positions, (std::vector<int>{0, 1, 2, 3, 4}));
  EXPECT_EQ(plan.shift, 0);
  auto shifted = make_position_plan(seg, PositionScheme::Shifted, 50, SegmentVariant::Sinusoidal);
  EXPECT_EQ(shifted.positions, (std::vector<int>{0, 1, 52, 53, 54}));
}

TEST(Segment, Variants) {
  auto s = segment_embedding<double>(0, 6, SegmentVariant::Sinusoidal);
  EXPECT_EQ(s, (std::vector<double>{0, 1, 0, 1, 0, 1}));
  EXPECT_EQ(segment_embedding<double>(3, 6, SegmentVariant::None), std::vector<double>(6, 0.0));
  CounterRng rng(4, 0);
  LearnedSegmentTable<double> table(4, 6, rng);
  EXPECT_EQ(table.table.shape, (Shape{4, 6}));
  auto row = segment_embedding<double>(2, 6, SegmentVariant::Learned, &table);
  EXPECT_EQ(row, std::vector<double>(table.table.value.begin() + 12, table.table.value.begin() + 18));
  EXPECT_THROW(segment_embedding<double>(4, 6, SegmentVariant::Learned, &table), std::out_of_range);
  EXPECT_THROW(segment_embedding<double>(0, 6, SegmentVariant::Learned), std::invalid_argument);
}

TEST(Segment, LearnedInitIsSmallGaussian) {
  CounterRng rng(5, 0);
  LearnedSegmentTable<double> table(64, 128, rng);
  double m = 0, v = 0;
  for (double x : table.table.value) m += x;
  m /= static_cast<double>(table.table.size());
  for (double x : table.table.value) v += (x - m) * (x - m);
  v /= static_cast<double>(table.table.size());
  EXPECT_NEAR(m, 0.0, 0.002);
  EXPECT_NEAR(std::sqrt(v), 0.02, 0.002);
}

TEST(Config, Parsing) {
  EXPECT_EQ(parse_position_scheme("shifted"), PositionScheme::Shifted);
  EXPECT_EQ(parse_segment_variant("learned"), SegmentVariant::Learned);
  EXPECT_THROW(parse_position_scheme("rotary"), std::invalid_argument);
  EXPECT_THROW(parse_segment_variant("bert"), std::invalid_argument);
}
