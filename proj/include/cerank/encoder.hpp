#pragma once

// Pluggable sentence encoder. The reference implementation is an embedding
// lookup followed by a single bidirectional GRU layer; the sentence vector is
// the bidirectional hidden state at position 0.

#include <atomic>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "cerank/init.hpp"
#include "cerank/tensor.hpp"

namespace cerank {

struct EncoderConfig {
  int embedding_dim = 64;
  int hidden_dim = 32;  // output vector size d; split d/2 per direction
  int max_seq_len = 64;
  int vocab_size = 0;

  void validate() const {
    if (embedding_dim <= 0 || hidden_dim <= 0 || max_seq_len <= 0 ||
        vocab_size <= 0)
      throw std::invalid_argument("encoder config: all sizes must be positive");
    if (hidden_dim % 2 != 0)
      throw std::invalid_argument("encoder config: hidden_dim must be even");
  }
};

// Counts every sentence encoding performed in this process. Tests and the
// latency bench use deltas to prove cached vectors are never recomputed.
inline std::atomic<std::uint64_t>& encode_call_counter() {
  static std::atomic<std::uint64_t> counter{0};
  return counter;
}

template <typename S>
struct GruCell {
  Tensor<S> wz, uz, bz;
  Tensor<S> wr, ur, br;
  Tensor<S> wh, uh, bh;
  int input_dim = 0;
  int hidden_dim = 0;

  static GruCell init(int input_dim, int hidden_dim, std::mt19937_64& rng) {
    GruCell c;
    c.input_dim = input_dim;
    c.hidden_dim = hidden_dim;
    auto mk = [&](int rows, int cols) {
      auto t = Tensor<S>::zeros({rows, cols}, true);
      init_uniform(t, cols, rng);
      return t;
    };
    auto mkb = [&](int rows, int fan_in) {
      auto t = Tensor<S>::zeros({rows}, true);
      init_uniform(t, fan_in, rng);
      return t;
    };
    c.wz = mk(hidden_dim, input_dim);
    c.uz = mk(hidden_dim, hidden_dim);
    c.bz = mkb(hidden_dim, input_dim);
    c.wr = mk(hidden_dim, input_dim);
    c.ur = mk(hidden_dim, hidden_dim);
    c.br = mkb(hidden_dim, input_dim);
    c.wh = mk(hidden_dim, input_dim);
    c.uh = mk(hidden_dim, hidden_dim);
    c.bh = mkb(hidden_dim, input_dim);
    return c;
  }

  // z = sig(Wz x + Uz h + bz); r = sig(Wr x + Ur h + br)
  // hb = tanh(Wh x + Uh (r*h) + bh); h' = (1-z)*h + z*hb
  Tensor<S> step(const Tensor<S>& x, const Tensor<S>& h, Tape<S>* tape) const {
    auto z = sigmoid(add(add(matvec(wz, x, tape), matvec(uz, h, tape), tape), bz, tape), tape);
    auto r = sigmoid(add(add(matvec(wr, x, tape), matvec(ur, h, tape), tape), br, tape), tape);
    auto hb = tanh(add(add(matvec(wh, x, tape), matvec(uh, mul(r, h, tape), tape), tape), bh, tape), tape);
    auto ones = Tensor<S>::zeros({hidden_dim});
    std::fill(ones.value().begin(), ones.value().end(), S{1});
    return add(mul(sub(ones, z, tape), h, tape), mul(z, hb, tape), tape);
  }

  template <typename Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    fn(prefix + ".wz", wz); fn(prefix + ".uz", uz); fn(prefix + ".bz", bz);
    fn(prefix + ".wr", wr); fn(prefix + ".ur", ur); fn(prefix + ".br", br);
    fn(prefix + ".wh", wh); fn(prefix + ".uh", uh); fn(prefix + ".bh", bh);
  }
};

// All hidden states of one GRU direction over a sequence, from a zero state.
template <typename S>
std::vector<Tensor<S>> gru_sequence(const GruCell<S>& cell,
                                    std::span<const Tensor<S>> inputs,
                                    Tape<S>* tape) {
  std::vector<Tensor<S>> states;
  states.reserve(inputs.size());
  Tensor<S> h = Tensor<S>::zeros({cell.hidden_dim});
  for (const auto& x : inputs) {
    h = cell.step(x, h, tape);
    states.push_back(h);
  }
  return states;
}

template <typename S>
struct Encoder {
  EncoderConfig cfg;
  Tensor<S> embedding;  // vocab_size x embedding_dim
  GruCell<S> fwd, bwd;

  static Encoder init(const EncoderConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    Encoder e;
    e.cfg = cfg;
    e.embedding = Tensor<S>::zeros({cfg.vocab_size, cfg.embedding_dim}, true);
    init_uniform(e.embedding, cfg.embedding_dim, rng);
    e.fwd = GruCell<S>::init(cfg.embedding_dim, cfg.hidden_dim / 2, rng);
    e.bwd = GruCell<S>::init(cfg.embedding_dim, cfg.hidden_dim / 2, rng);
    return e;
  }

  // Sentence vector of size d: [forward state at position 0 ; backward state
  // at position 0]. Forward states past position 0 do not feed the result,
  // so only the one needed step runs in that direction.
  Tensor<S> encode(std::span<const int> ids, Tape<S>* tape = nullptr) const {
    if (ids.empty())
      throw std::invalid_argument("encode: empty token sequence");
    encode_call_counter().fetch_add(1, std::memory_order_relaxed);
    std::vector<Tensor<S>> embs;
    embs.reserve(ids.size());
    for (const int id : ids) {
      if (id < 0 || id >= cfg.vocab_size)
        throw std::invalid_argument("encode: token id " + std::to_string(id) +
                                    " outside vocabulary of size " +
                                    std::to_string(cfg.vocab_size));
      embs.push_back(select_row(embedding, id, tape));
    }
    Tensor<S> h0f = Tensor<S>::zeros({cfg.hidden_dim / 2});
    Tensor<S> f0 = fwd.step(embs.front(), h0f, tape);
    Tensor<S> hb = Tensor<S>::zeros({cfg.hidden_dim / 2});
    for (std::size_t i = embs.size(); i-- > 0;) {
      hb = bwd.step(embs[i], hb, tape);
    }
    return concat<S>({f0, hb}, tape);
  }

  template <typename Fn>
  void visit(Fn&& fn) {
    fn(std::string("encoder.embedding"), embedding);
    fwd.visit("encoder.gru_fwd", fn);
    bwd.visit("encoder.gru_bwd", fn);
  }
};

}  // namespace cerank
