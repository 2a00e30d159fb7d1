#pragma once

// Context-enrichment head: compare the live context vector against the k
// training contexts most similar to a candidate response, aggregate the
// comparisons with a bidirectional GRU plus additive attention, fuse the
// result into the context through a sigmoid gate, and score the fused
// vector against the response.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "cerank/encoder.hpp"
#include "cerank/matching.hpp"
#include "cerank/store.hpp"

namespace cerank {

template <typename S>
struct CeHead {
  GruCell<S> fwd, bwd;     // input 5d -> hidden d per direction
  Tensor<S> w11;           // a x 2d
  Tensor<S> w12;           // a x d
  Tensor<S> w13;           // 1 x a
  Tensor<S> w21, b21;      // h x 5d, h
  Tensor<S> w22, b22;      // 1 x h, 1
  int d = 0;
  int attn = 0;
  int h = 0;

  // Attention width defaults to d and scorer hidden width to 2d.
  static CeHead init(int d, std::mt19937_64& rng, int attn = 0, int hidden = 0) {
    CeHead head;
    head.d = d;
    head.attn = attn > 0 ? attn : d;
    head.h = hidden > 0 ? hidden : 2 * d;
    head.fwd = GruCell<S>::init(5 * d, d, rng);
    head.bwd = GruCell<S>::init(5 * d, d, rng);
    auto mk = [&](int rows, int cols) {
      auto t = Tensor<S>::zeros({rows, cols}, true);
      init_uniform(t, cols, rng);
      return t;
    };
    head.w11 = mk(head.attn, 2 * d);
    head.w12 = mk(head.attn, d);
    head.w13 = mk(1, head.attn);
    head.w21 = mk(head.h, 5 * d);
    head.b21 = Tensor<S>::zeros({head.h}, true);
    init_uniform(head.b21, 5 * d, rng);
    head.w22 = mk(1, head.h);
    head.b22 = Tensor<S>::zeros({1}, true);
    init_uniform(head.b22, head.h, rng);
    return head;
  }

  template <typename Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    fwd.visit(prefix + ".gru_fwd", fn);
    bwd.visit(prefix + ".gru_bwd", fn);
    fn(prefix + ".w11", w11);
    fn(prefix + ".w12", w12);
    fn(prefix + ".w13", w13);
    fn(prefix + ".w21", w21);
    fn(prefix + ".b21", b21);
    fn(prefix + ".w22", w22);
    fn(prefix + ".b22", b22);
  }
};

// Per-query inspection record of the enrichment dataflow.
struct EnrichmentTrace {
  std::vector<std::uint64_t> retrieved_ids;
  std::vector<double> similarities;
  std::vector<double> attention;      // weights a_i, sum to 1
  std::vector<double> gate;           // sigmoid(G), each in (0,1)
  std::vector<double> enriched_half;  // C_e
  std::vector<double> gate_half;      // raw G
  int requested_k = 0;
  int used_k = 0;
  bool fallback = false;  // true when the plain score path was used
};

// Element i is submult(C, neighbor_i) with the literal variant.
template <typename S>
std::vector<Tensor<S>> compare_contexts(const Tensor<S>& context,
                                        std::span<const Tensor<S>> neighbors,
                                        Tape<S>* tape = nullptr) {
  if (neighbors.empty())
    throw std::invalid_argument("compare_contexts: need at least one neighbor");
  std::vector<Tensor<S>> out;
  out.reserve(neighbors.size());
  for (const auto& n : neighbors)
    out.push_back(submult(context, n, SubMultVariant::literal, tape));
  return out;
}

// H_i = [forward GRU state at i ; backward GRU state at i], each 2d wide.
template <typename S>
std::vector<Tensor<S>> bigru_states(const GruCell<S>& fwd_cell,
                                    const GruCell<S>& bwd_cell,
                                    std::span<const Tensor<S>> inputs,
                                    Tape<S>* tape = nullptr) {
  if (inputs.empty())
    throw std::invalid_argument("bigru_states: empty input sequence");
  const auto fwd_states = gru_sequence(fwd_cell, inputs, tape);
  std::vector<Tensor<S>> reversed(inputs.rbegin(), inputs.rend());
  auto bwd_states = gru_sequence(
      bwd_cell, std::span<const Tensor<S>>(reversed), tape);
  std::vector<Tensor<S>> out;
  out.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    out.push_back(concat<S>({fwd_states[i], bwd_states[inputs.size() - 1 - i]}, tape));
  }
  return out;
}

template <typename S>
struct AttendResult {
  Tensor<S> aggregated;        // 2d
  Tensor<S> weights;           // k, softmax output
};

// s_i = W13 tanh(W11 H_i + W12 R); a = softmax(s); out = sum_i a_i H_i.
template <typename S>
AttendResult<S> attend(std::span<const Tensor<S>> states, const Tensor<S>& response,
                       const CeHead<S>& head, Tape<S>* tape = nullptr) {
  if (states.empty())
    throw std::invalid_argument("attend: empty state list");
  auto proj_r = matvec(head.w12, response, tape);
  std::vector<Tensor<S>> scores;
  scores.reserve(states.size());
  for (const auto& h : states) {
    auto hidden = tanh(add(matvec(head.w11, h, tape), proj_r, tape), tape);
    scores.push_back(matvec(head.w13, hidden, tape));
  }
  auto weights = softmax(concat(std::span<const Tensor<S>>(scores), tape), tape);
  Tensor<S> agg;
  for (std::size_t i = 0; i < states.size(); ++i) {
    auto term = scale_by(slice(weights, static_cast<std::int64_t>(i), 1, tape),
                         states[i], tape);
    agg = i == 0 ? term : add(agg, term, tape);
  }
  return {agg, weights};
}

// Unweighted mean of the states; stand-in for attention in the ablation.
template <typename S>
Tensor<S> mean_states(std::span<const Tensor<S>> states, Tape<S>* tape = nullptr) {
  if (states.empty())
    throw std::invalid_argument("mean_states: empty state list");
  Tensor<S> acc = states[0];
  for (std::size_t i = 1; i < states.size(); ++i)
    acc = add(acc, states[i], tape);
  return scale(acc, static_cast<S>(1.0 / static_cast<double>(states.size())), tape);
}

template <typename S>
struct GateResult {
  Tensor<S> fused;      // d
  Tensor<S> gate;       // sigmoid(G), d
  Tensor<S> enriched;   // C_e, d
  Tensor<S> control;    // raw G, d
};

// Splits the aggregated vector into [C_e ; G] and interpolates per
// coordinate: fused = sigmoid(G) * C_e + (1 - sigmoid(G)) * C.
template <typename S>
GateResult<S> gate_fuse(const Tensor<S>& aggregated, const Tensor<S>& context,
                        Tape<S>* tape = nullptr) {
  if (aggregated.rank() != 1 || context.rank() != 1 ||
      aggregated.numel() != 2 * context.numel()) {
    throw std::invalid_argument("gate_fuse: aggregated " +
                                shape_str(aggregated.shape()) +
                                " must be twice context " +
                                shape_str(context.shape()));
  }
  const auto d = context.numel();
  auto enriched = slice(aggregated, 0, d, tape);
  auto control = slice(aggregated, d, d, tape);
  auto g = sigmoid(control, tape);
  auto ones = Tensor<S>::zeros({d});
  std::fill(ones.value().begin(), ones.value().end(), S{1});
  auto fused = add(mul(g, enriched, tape),
                   mul(sub(ones, g, tape), context, tape), tape);
  return {fused, g, enriched, control};
}

// Final matching logit: two-layer feed-forward over the literal SubMult of
// the fused context and the response.
template <typename S>
Tensor<S> ce_score(const Tensor<S>& fused, const Tensor<S>& response,
                   const CeHead<S>& head, Tape<S>* tape = nullptr) {
  auto features = submult(fused, response, SubMultVariant::literal, tape);
  if (features.numel() != head.w21.dim(1)) {
    throw std::invalid_argument("ce_score: feature width " +
                                std::to_string(features.numel()) +
                                " does not match head input " +
                                std::to_string(head.w21.dim(1)));
  }
  auto hidden = relu(add(matvec(head.w21, features, tape), head.b21, tape), tape);
  return add(matvec(head.w22, hidden, tape), head.b22, tape);
}

struct CeOptions {
  int k = 20;
  bool use_attention = true;           // false: unweighted mean of states
  bool use_gate = true;                // false: C_f = C_e directly
  std::optional<std::uint64_t> exclude_id;  // drop this id from retrieval
  bool record_trace = true;
};

template <typename S>
struct CeScoreResult {
  Tensor<S> score;
  EnrichmentTrace trace;
};

// Scores one (context vector, cached response) pair given the already
// retrieved neighbor vectors. Neighbor vectors are cache constants; the
// gradient flows through the context vector and all head parameters.
template <typename S>
CeScoreResult<S> ce_score_with_neighbors(
    const Tensor<S>& context_vec, const Tensor<S>& response_vec,
    std::span<const Tensor<S>> neighbor_vecs, std::span<const TopKHit> hits,
    const BiEncoderHead<S>& bi_head, const CeHead<S>& ce_head,
    const CeOptions& opts, Tape<S>* tape = nullptr) {
  CeScoreResult<S> result;
  result.trace.requested_k = opts.k;
  result.trace.used_k = static_cast<int>(neighbor_vecs.size());
  if (opts.record_trace) {
    for (const auto& h : hits) {
      result.trace.retrieved_ids.push_back(h.id);
      result.trace.similarities.push_back(h.similarity);
    }
  }
  if (neighbor_vecs.empty()) {
    result.trace.fallback = true;
    result.score = biencoder_score(context_vec, response_vec, bi_head, tape);
    return result;
  }
  auto compared = compare_contexts(context_vec, neighbor_vecs, tape);
  auto states = bigru_states(ce_head.fwd, ce_head.bwd,
                             std::span<const Tensor<S>>(compared), tape);
  Tensor<S> aggregated;
  if (opts.use_attention) {
    auto att = attend(std::span<const Tensor<S>>(states), response_vec,
                      ce_head, tape);
    aggregated = att.aggregated;
    if (opts.record_trace) {
      for (const auto w : att.weights.value())
        result.trace.attention.push_back(static_cast<double>(w));
    }
  } else {
    aggregated = mean_states(std::span<const Tensor<S>>(states), tape);
  }
  auto gated = gate_fuse(aggregated, context_vec, tape);
  const Tensor<S>& fused = opts.use_gate ? gated.fused : gated.enriched;
  if (opts.record_trace) {
    for (const auto v : gated.gate.value())
      result.trace.gate.push_back(static_cast<double>(v));
    for (const auto v : gated.enriched.value())
      result.trace.enriched_half.push_back(static_cast<double>(v));
    for (const auto v : gated.control.value())
      result.trace.gate_half.push_back(static_cast<double>(v));
  }
  result.score = ce_score(fused, response_vec, ce_head, tape);
  return result;
}

template <typename S>
Tensor<S> tensor_from_cached(std::span<const float> row) {
  std::vector<S> data(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) data[i] = static_cast<S>(row[i]);
  return Tensor<S>::from_data({static_cast<std::int64_t>(row.size())},
                              std::move(data));
}

// Retrieves up to k training contexts similar to the cached response vector.
// A request larger than the store is clamped, never an error.
template <typename S>
std::pair<std::vector<Tensor<S>>, std::vector<TopKHit>> retrieve_neighbors(
    const EmbeddingStore& context_store, std::span<const float> response_row,
    const CeOptions& opts) {
  std::vector<Tensor<S>> vecs;
  std::vector<TopKHit> hits;
  if (opts.k > 0) {
    std::unordered_set<std::uint64_t> exclude;
    if (opts.exclude_id) exclude.insert(*opts.exclude_id);
    hits = top_k(context_store, response_row, opts.k, exclude);
    vecs.reserve(hits.size());
    for (const auto& h : hits)
      vecs.push_back(tensor_from_cached<S>(context_store.row(h.row)));
  }
  return {std::move(vecs), std::move(hits)};
}

// Scores an already encoded live context against one cached response.
template <typename S>
CeScoreResult<S> ce_forward_from_context(
    const Tensor<S>& context_vec, std::uint64_t response_id,
    const EmbeddingStore& context_store, const EmbeddingStore& response_store,
    const BiEncoderHead<S>& bi_head, const CeHead<S>& ce_head,
    const CeOptions& opts, Tape<S>* tape = nullptr) {
  const auto response_row = response_store.vector_of(response_id);
  auto response_vec = tensor_from_cached<S>(response_row);
  auto [neighbor_vecs, hits] =
      retrieve_neighbors<S>(context_store, response_row, opts);
  return ce_score_with_neighbors(context_vec, response_vec,
                                 std::span<const Tensor<S>>(neighbor_vecs),
                                 std::span<const TopKHit>(hits), bi_head,
                                 ce_head, opts, tape);
}

// Full pipeline for one (live context, cached response id) pair: encodes the
// context, retrieves neighbors for the response, runs the enrichment head.
// With k == 0 this returns the plain Bi-Encoder score.
template <typename S>
CeScoreResult<S> ce_forward(const Encoder<S>& encoder,
                            const BiEncoderHead<S>& bi_head,
                            const CeHead<S>& ce_head,
                            std::span<const int> context_tokens,
                            std::uint64_t response_id,
                            const EmbeddingStore& context_store,
                            const EmbeddingStore& response_store,
                            const CeOptions& opts, Tape<S>* tape = nullptr) {
  auto context_vec = encoder.encode(context_tokens, tape);
  return ce_forward_from_context(context_vec, response_id, context_store,
                                 response_store, bi_head, ce_head, opts, tape);
}

}  // namespace cerank
