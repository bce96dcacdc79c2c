#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cdmt/corpus/window.hpp"
#include "cdmt/model/config.hpp"
#include "cdmt/positions/positions.hpp"
#include "cdmt/tensor/rng.hpp"
#include "cdmt/tensor/tensor.hpp"

namespace cdmt {

enum class AttentionKind { EncoderSelf, DecoderSelf, Cross };

inline std::string to_string(AttentionKind k) {
  switch (k) {
    case AttentionKind::EncoderSelf: return "enc-self";
    case AttentionKind::DecoderSelf: return "dec-self";
    case AttentionKind::Cross: return "cross";
  }
  return {};
}

/// Attention weights of one head for one window. rows[q][k] covers every
/// non-padding key; causally masked keys carry exactly zero weight.
struct AttentionRecord {
  std::size_t layer = 0;
  std::size_t head = 0;
  AttentionKind kind = AttentionKind::EncoderSelf;
  std::vector<std::vector<double>> rows;
  std::vector<int> query_seg, key_seg;
  int current_seg = 0;
};

/// Padded model inputs for a list of windows. The decoder reads the target
/// shifted right by one with <E> as the start symbol; each decoder input
/// token keeps the sentence index of the token it was copied from.
struct Batch {
  std::size_t size = 0, src_len = 0, tgt_len = 0;
  std::vector<int> src_ids, src_pos, src_seg;  // [size * src_len]
  std::vector<int> dec_ids, dec_pos, dec_seg;  // [size * tgt_len]
  std::vector<int> out_ids;                    // [size * tgt_len], kPadId beyond each length
  std::vector<int> out_seg;                    // sentence index of each output token, -1 on padding
  std::vector<std::size_t> src_lengths, tgt_lengths;
  std::vector<int> current_seg;  // sentences - 1 per window
};

/// Decoder input segments for a (possibly partial) target sequence whose
/// first element is the start symbol.
inline std::vector<int> decoder_segments(std::span<const int> dec_ids) {
  std::vector<int> seg(dec_ids.size(), 0);
  for (std::size_t i = 2; i < dec_ids.size(); ++i) seg[i] = seg[i - 1] + (dec_ids[i - 1] == kSepId ? 1 : 0);
  return seg;
}

inline Batch make_batch(std::span<const Window* const> windows, const ModelConfig& cfg) {
  if (windows.empty()) throw std::invalid_argument("make_batch: no windows");
  Batch b;
  b.size = windows.size();
  for (const auto* w : windows) {
    if (w->src_ids.size() > cfg.max_len || w->tgt_ids.size() > cfg.max_len)
      throw std::length_error("window of " + std::to_string(std::max(w->src_ids.size(), w->tgt_ids.size())) +
                              " tokens exceeds max_len " + std::to_string(cfg.max_len));
    if (cfg.segment_variant == SegmentVariant::Learned && w->sentences > cfg.max_k)
      throw std::length_error("window of " + std::to_string(w->sentences) + " sentences exceeds max_k " +
                              std::to_string(cfg.max_k));
    b.src_len = std::max(b.src_len, w->src_ids.size());
    b.tgt_len = std::max(b.tgt_len, w->tgt_ids.size());
  }
  const std::size_t S = b.src_len, L = b.tgt_len;
  b.src_ids.assign(b.size * S, kPadId);
  b.src_pos.assign(b.size * S, 0);
  b.src_seg.assign(b.size * S, 0);
  b.dec_ids.assign(b.size * L, kPadId);
  b.dec_pos.assign(b.size * L, 0);
  b.dec_seg.assign(b.size * L, 0);
  b.out_ids.assign(b.size * L, kPadId);
  b.out_seg.assign(b.size * L, -1);
  for (std::size_t i = 0; i < b.size; ++i) {
    const Window& w = *windows[i];
    const int shift = window_shift(cfg, w);
    const auto spos = shifted_positions(w.src_seg, shift);
    std::copy(w.src_ids.begin(), w.src_ids.end(), b.src_ids.begin() + static_cast<long>(i * S));
    std::copy(w.src_seg.begin(), w.src_seg.end(), b.src_seg.begin() + static_cast<long>(i * S));
    std::copy(spos.begin(), spos.end(), b.src_pos.begin() + static_cast<long>(i * S));

    const std::size_t n = w.tgt_ids.size();
    std::vector<int> din(n), dseg(n, 0);
    din[0] = kEosId;
    for (std::size_t t = 1; t < n; ++t) {
      din[t] = w.tgt_ids[t - 1];
      dseg[t] = w.tgt_seg[t - 1];
    }
    const auto dpos = shifted_positions(dseg, shift);
    std::copy(din.begin(), din.end(), b.dec_ids.begin() + static_cast<long>(i * L));
    std::copy(dseg.begin(), dseg.end(), b.dec_seg.begin() + static_cast<long>(i * L));
    std::copy(dpos.begin(), dpos.end(), b.dec_pos.begin() + static_cast<long>(i * L));
    std::copy(w.tgt_ids.begin(), w.tgt_ids.end(), b.out_ids.begin() + static_cast<long>(i * L));
    std::copy(w.tgt_seg.begin(), w.tgt_seg.end(), b.out_seg.begin() + static_cast<long>(i * L));
    b.src_lengths.push_back(w.src_ids.size());
    b.tgt_lengths.push_back(n);
    b.current_seg.push_back(w.current_segment());
  }
  return b;
}

template <typename T>
struct Linear {
  Parameter<T> w, b;  // w: [in, out]
};

template <typename T>
struct Norm {
  Parameter<T> gamma, beta;
};

template <typename T>
struct AttentionBlock {
  Linear<T> q, k, v, o;
};

template <typename T>
struct EncoderLayer {
  AttentionBlock<T> self;
  Norm<T> ln1;
  Linear<T> ff1, ff2;
  Norm<T> ln2;
};

template <typename T>
struct DecoderLayer {
  AttentionBlock<T> self;
  Norm<T> ln1;
  AttentionBlock<T> cross;
  Norm<T> ln2;
  Linear<T> ff1, ff2;
  Norm<T> ln3;
};

struct ForwardOptions {
  CounterRng* dropout_rng = nullptr;  // null: no dropout
  bool capture_attention = false;
};

template <typename T>
struct ForwardOutput {
  Var<T> log_probs;  // [batch, tgt_len, tgt_vocab]
  std::vector<std::vector<AttentionRecord>> attention;  // per window, when captured
};

/// Post-norm encoder-decoder transformer over concatenated windows.
///
/// Token embeddings are scaled by sqrt(d_model) and summed with the
/// sinusoidal encoding of each token's effective position and with the
/// segment vector of its sentence index.
template <typename T>
class Transformer {
 public:
  Transformer() = default;

  Transformer(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    CounterRng rng(seed, 0x1417);
    const std::size_t d = cfg_.d_model;
    auto normal_init = [&](Parameter<T>& p, double sd) {
      for (auto& v : p.value) v = static_cast<T>(rng.normal(0.0, sd));
    };
    src_emb_ = Parameter<T>("src.embed", {cfg_.src_vocab, d});
    tgt_emb_ = Parameter<T>("tgt.embed", {cfg_.tgt_vocab, d});
    normal_init(src_emb_, 1.0 / std::sqrt(static_cast<double>(d)));
    normal_init(tgt_emb_, 1.0 / std::sqrt(static_cast<double>(d)));
    if (cfg_.segment_variant == SegmentVariant::Learned) {
      segment_ = LearnedSegmentTable<T>(cfg_.max_k, d, rng);
    }
    auto linear = [&](const std::string& name, std::size_t in, std::size_t out) {
      Linear<T> l{Parameter<T>(name + ".w", {in, out}), Parameter<T>(name + ".b", {out})};
      const double lim = std::sqrt(6.0 / static_cast<double>(in + out));
      for (auto& v : l.w.value) v = static_cast<T>(rng.uniform(-lim, lim));
      return l;
    };
    auto norm = [&](const std::string& name) {
      Norm<T> n{Parameter<T>(name + ".gamma", {d}), Parameter<T>(name + ".beta", {d})};
      std::fill(n.gamma.value.begin(), n.gamma.value.end(), T(1));
      return n;
    };
    auto attn = [&](const std::string& name) {
      return AttentionBlock<T>{linear(name + ".q", d, d), linear(name + ".k", d, d), linear(name + ".v", d, d),
                               linear(name + ".o", d, d)};
    };
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      const std::string p = "enc." + std::to_string(l);
      enc_.push_back({attn(p + ".self"), norm(p + ".ln1"), linear(p + ".ff1", d, cfg_.d_ff),
                      linear(p + ".ff2", cfg_.d_ff, d), norm(p + ".ln2")});
    }
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      const std::string p = "dec." + std::to_string(l);
      dec_.push_back({attn(p + ".self"), norm(p + ".ln1"), attn(p + ".cross"), norm(p + ".ln2"),
                      linear(p + ".ff1", d, cfg_.d_ff), linear(p + ".ff2", cfg_.d_ff, d), norm(p + ".ln3")});
    }
    out_ = linear("out", d, cfg_.tgt_vocab);
  }

  const ModelConfig& config() const { return cfg_; }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> ps{&src_emb_, &tgt_emb_};
    if (cfg_.segment_variant == SegmentVariant::Learned) ps.push_back(&segment_.table);
    auto lin = [&](Linear<T>& l) { ps.insert(ps.end(), {&l.w, &l.b}); };
    auto nrm = [&](Norm<T>& n) { ps.insert(ps.end(), {&n.gamma, &n.beta}); };
    auto att = [&](AttentionBlock<T>& a) {
      lin(a.q);
      lin(a.k);
      lin(a.v);
      lin(a.o);
    };
    for (auto& e : enc_) {
      att(e.self);
      nrm(e.ln1);
      lin(e.ff1);
      lin(e.ff2);
      nrm(e.ln2);
    }
    for (auto& e : dec_) {
      att(e.self);
      nrm(e.ln1);
      att(e.cross);
      nrm(e.ln2);
      lin(e.ff1);
      lin(e.ff2);
      nrm(e.ln3);
    }
    lin(out_);
    return ps;
  }

  std::vector<const Parameter<T>*> parameters() const {
    auto ps = const_cast<Transformer*>(this)->parameters();
    return {ps.begin(), ps.end()};
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : parameters()) n += p->size();
    return n;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  ForwardOutput<T> forward(Graph<T>& g, const Batch& b, ForwardOptions opt = {}) const {
    Context ctx{opt.dropout_rng, nullptr, &b};
    ForwardOutput<T> out;
    if (opt.capture_attention) {
      out.attention.resize(b.size);
      ctx.records = &out.attention;
    }
    auto memory = encode(g, b, ctx);
    auto h = decode(g, memory, b, ctx);
    out.log_probs = project(g, h, b.size, b.tgt_len);
    return out;
  }

  // ---- building blocks, also used by incremental decoding -------------------

  struct Context {
    CounterRng* rng = nullptr;
    std::vector<std::vector<AttentionRecord>>* records = nullptr;
    const Batch* batch = nullptr;
  };

  /// Encoder states [batch * src_len, d_model].
  Var<T> encode(Graph<T>& g, const Batch& b, Context& ctx) const {
    const std::size_t B = b.size, S = b.src_len;
    auto x = embed(g, src_emb_, b.src_ids, b.src_pos, b.src_seg, ctx);
    std::vector<std::uint8_t> mask(B * S * S);
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t q = 0; q < S; ++q)
        for (std::size_t k = 0; k < S; ++k) mask[(i * S + q) * S + k] = k < b.src_lengths[i];
    for (std::size_t l = 0; l < enc_.size(); ++l) {
      const auto& L = enc_[l];
      auto a = attend(g, x, x, L.self, S, S, mask, ctx, l, AttentionKind::EncoderSelf);
      x = norm(g, g.add(x, drop(g, a, ctx)), L.ln1);
      x = norm(g, g.add(x, drop(g, feed_forward(g, x, L.ff1, L.ff2, ctx), ctx)), L.ln2);
    }
    return x;
  }

  /// Decoder states [batch * tgt_len, d_model] given encoder states.
  Var<T> decode(Graph<T>& g, Var<T> memory, const Batch& b, Context& ctx) const {
    const std::size_t B = b.size, S = b.src_len, L = b.tgt_len;
    auto x = embed(g, tgt_emb_, b.dec_ids, b.dec_pos, b.dec_seg, ctx);
    std::vector<std::uint8_t> self_mask(B * L * L), cross_mask(B * L * S);
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t q = 0; q < L; ++q) {
        for (std::size_t k = 0; k < L; ++k) self_mask[(i * L + q) * L + k] = k <= q && k < b.tgt_lengths[i];
        for (std::size_t k = 0; k < S; ++k) cross_mask[(i * L + q) * S + k] = k < b.src_lengths[i];
      }
    for (std::size_t l = 0; l < dec_.size(); ++l) {
      const auto& D = dec_[l];
      auto a = attend(g, x, x, D.self, L, L, self_mask, ctx, l, AttentionKind::DecoderSelf);
      x = norm(g, g.add(x, drop(g, a, ctx)), D.ln1);
      auto c = attend(g, x, memory, D.cross, L, S, cross_mask, ctx, l, AttentionKind::Cross);
      x = norm(g, g.add(x, drop(g, c, ctx)), D.ln2);
      x = norm(g, g.add(x, drop(g, feed_forward(g, x, D.ff1, D.ff2, ctx), ctx)), D.ln3);
    }
    return x;
  }

  /// Log-probabilities [batch, len, tgt_vocab] from decoder states.
  Var<T> project(Graph<T>& g, Var<T> h, std::size_t batch, std::size_t len) const {
    auto logits = linear(g, h, out_);
    return g.log_softmax(g.reshape(logits, {batch, len, cfg_.tgt_vocab}));
  }

 private:
  // Gradients are only written by backward() on a recording graph, which
  // requires a mutable training loop; read-only use never touches them.
  static Var<T> p(Graph<T>& g, const Parameter<T>& param) { return g.param(const_cast<Parameter<T>&>(param)); }

  Var<T> linear(Graph<T>& g, Var<T> x, const Linear<T>& l) const {
    return g.add_bias(g.matmul(x, p(g, l.w)), p(g, l.b));
  }

  Var<T> norm(Graph<T>& g, Var<T> x, const Norm<T>& n) const { return g.layer_norm(x, p(g, n.gamma), p(g, n.beta)); }

  Var<T> drop(Graph<T>& g, Var<T> x, Context& ctx) const {
    if (!ctx.rng || cfg_.dropout == 0.0) return x;
    return g.dropout(x, cfg_.dropout, *ctx.rng);
  }

  Var<T> feed_forward(Graph<T>& g, Var<T> x, const Linear<T>& a, const Linear<T>& b, Context&) const {
    return linear(g, g.relu(linear(g, x, a)), b);
  }

  Var<T> embed(Graph<T>& g, const Parameter<T>& table, const std::vector<int>& ids, const std::vector<int>& pos,
               const std::vector<int>& seg, Context& ctx) const {
    const std::size_t d = cfg_.d_model, n = ids.size();
    auto tok = g.scale(g.embedding(p(g, table), ids), static_cast<T>(std::sqrt(static_cast<double>(d))));
    std::vector<T> add(n * d);
    for (std::size_t i = 0; i < n; ++i) {
      T* row = add.data() + i * d;
      sinusoidal_pe_into<T>(pos[i], d, row);
      if (cfg_.segment_variant == SegmentVariant::Sinusoidal) {
        std::vector<T> s(d);
        sinusoidal_pe_into<T>(seg[i], d, s.data());
        for (std::size_t c = 0; c < d; ++c) row[c] += s[c];
      }
    }
    auto x = g.add(tok, g.constant({n, d}, std::move(add)));
    if (cfg_.segment_variant == SegmentVariant::Learned) {
      std::vector<int> rows(seg.begin(), seg.end());
      for (auto& r : rows) r = std::min<int>(r, static_cast<int>(cfg_.max_k) - 1);
      x = g.add(x, g.embedding(p(g, segment_.table), rows));
    }
    return drop(g, x, ctx);
  }

  Var<T> attend(Graph<T>& g, Var<T> xq, Var<T> xkv, const AttentionBlock<T>& a, std::size_t Lq, std::size_t Lk,
                const std::vector<std::uint8_t>& mask, Context& ctx, std::size_t layer, AttentionKind kind) const {
    const std::size_t B = ctx.batch->size, H = cfg_.heads, d = cfg_.d_model, dh = d / H;
    auto split = [&](Var<T> x, std::size_t len) {
      return g.reshape(g.permute(g.reshape(x, {B, len, H, dh}), {0, 2, 1, 3}), {B * H, len, dh});
    };
    auto q = split(g.scale(linear(g, xq, a.q), static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)))), Lq);
    auto k = split(linear(g, xkv, a.k), Lk);
    auto v = split(linear(g, xkv, a.v), Lk);
    auto w = g.masked_softmax(g.matmul(q, k, false, true), mask, H);
    if (ctx.records) capture(g.value(w), Lq, Lk, layer, kind, *ctx.batch, *ctx.records);
    auto heads = g.matmul(w, v);
    auto merged = g.reshape(g.permute(g.reshape(heads, {B, H, Lq, dh}), {0, 2, 1, 3}), {B * Lq, d});
    return linear(g, merged, a.o);
  }

  void capture(std::span<const T> w, std::size_t Lq, std::size_t Lk, std::size_t layer, AttentionKind kind,
               const Batch& b, std::vector<std::vector<AttentionRecord>>& out) const {
    const std::size_t H = cfg_.heads;
    const bool q_src = kind == AttentionKind::EncoderSelf;
    const bool k_src = kind != AttentionKind::DecoderSelf;
    for (std::size_t i = 0; i < b.size; ++i) {
      const std::size_t nq = q_src ? b.src_lengths[i] : std::min(b.tgt_lengths[i], Lq);
      const std::size_t nk = k_src ? b.src_lengths[i] : std::min(b.tgt_lengths[i], Lk);
      const auto& qs = q_src ? b.src_seg : b.dec_seg;
      const auto& ks = k_src ? b.src_seg : b.dec_seg;
      for (std::size_t h = 0; h < H; ++h) {
        AttentionRecord r;
        r.layer = layer;
        r.head = h;
        r.kind = kind;
        r.current_seg = b.current_seg[i];
        r.query_seg.assign(qs.begin() + static_cast<long>(i * Lq), qs.begin() + static_cast<long>(i * Lq + nq));
        r.key_seg.assign(ks.begin() + static_cast<long>(i * Lk), ks.begin() + static_cast<long>(i * Lk + nk));
        const T* base = w.data() + ((i * H + h) * Lq) * Lk;
        for (std::size_t q = 0; q < nq; ++q) r.rows.emplace_back(base + q * Lk, base + q * Lk + nk);
        out[i].push_back(std::move(r));
      }
    }
  }

  ModelConfig cfg_;
  Parameter<T> src_emb_, tgt_emb_;
  LearnedSegmentTable<T> segment_;
  std::vector<EncoderLayer<T>> enc_;
  std::vector<DecoderLayer<T>> dec_;
  Linear<T> out_;
};

}  // namespace cdmt
