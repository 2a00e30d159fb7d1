#pragma once

// Bi-Encoder scoring head: vector comparison via SubMult plus a two-layer
// feed-forward scorer producing an unbounded matching logit.

#include <random>
#include <stdexcept>
#include <string>

#include "cerank/init.hpp"
#include "cerank/tensor.hpp"

namespace cerank {

// literal   : [a, b, a-b, a-b, (a-b)*(b-a)]        width 5d
// canonical : [a, b, a*b, (a-b)*(a-b)]             width 4d
// concat_only keeps just [a, b] and exists for the ablation harness.
enum class SubMultVariant { literal, canonical, concat_only };

inline const char* submult_variant_name(SubMultVariant v) {
  switch (v) {
    case SubMultVariant::literal: return "literal";
    case SubMultVariant::canonical: return "canonical";
    case SubMultVariant::concat_only: return "concat_only";
  }
  return "?";
}

inline SubMultVariant submult_variant_from_name(const std::string& name) {
  if (name == "literal") return SubMultVariant::literal;
  if (name == "canonical") return SubMultVariant::canonical;
  if (name == "concat_only") return SubMultVariant::concat_only;
  throw std::invalid_argument("unknown submult variant '" + name + "'");
}

inline int submult_width(SubMultVariant v, int d) {
  switch (v) {
    case SubMultVariant::literal: return 5 * d;
    case SubMultVariant::canonical: return 4 * d;
    case SubMultVariant::concat_only: return 2 * d;
  }
  return 0;
}

template <typename S>
Tensor<S> submult(const Tensor<S>& vc, const Tensor<S>& vr,
                  SubMultVariant variant = SubMultVariant::literal,
                  Tape<S>* tape = nullptr) {
  if (vc.rank() != 1 || vr.rank() != 1 || vc.numel() != vr.numel()) {
    throw std::invalid_argument("submult: length mismatch " +
                                shape_str(vc.shape()) + " vs " +
                                shape_str(vr.shape()));
  }
  switch (variant) {
    case SubMultVariant::literal: {
      auto diff = sub(vc, vr, tape);
      auto neg = sub(vr, vc, tape);
      auto prod = mul(diff, neg, tape);
      return concat<S>({vc, vr, diff, diff, prod}, tape);
    }
    case SubMultVariant::canonical: {
      auto diff = sub(vc, vr, tape);
      return concat<S>({vc, vr, mul(vc, vr, tape), mul(diff, diff, tape)}, tape);
    }
    case SubMultVariant::concat_only:
      return concat<S>({vc, vr}, tape);
  }
  throw std::logic_error("submult: unreachable");
}

template <typename S>
struct BiEncoderHead {
  Tensor<S> w1, b1;  // h x width, h
  Tensor<S> w2, b2;  // 1 x h, 1
  SubMultVariant variant = SubMultVariant::literal;
  int d = 0;
  int h = 0;

  // h defaults to 2d when passed as 0.
  static BiEncoderHead init(int d, SubMultVariant variant, std::mt19937_64& rng,
                            int hidden = 0) {
    BiEncoderHead head;
    head.variant = variant;
    head.d = d;
    head.h = hidden > 0 ? hidden : 2 * d;
    const int width = submult_width(variant, d);
    head.w1 = Tensor<S>::zeros({head.h, width}, true);
    init_uniform(head.w1, width, rng);
    head.b1 = Tensor<S>::zeros({head.h}, true);
    init_uniform(head.b1, width, rng);
    head.w2 = Tensor<S>::zeros({1, head.h}, true);
    init_uniform(head.w2, head.h, rng);
    head.b2 = Tensor<S>::zeros({1}, true);
    init_uniform(head.b2, head.h, rng);
    return head;
  }

  template <typename Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    fn(prefix + ".w1", w1);
    fn(prefix + ".b1", b1);
    fn(prefix + ".w2", w2);
    fn(prefix + ".b2", b2);
  }
};

template <typename S>
Tensor<S> biencoder_score(const Tensor<S>& vc, const Tensor<S>& vr,
                          const BiEncoderHead<S>& head, Tape<S>* tape = nullptr) {
  auto features = submult(vc, vr, head.variant, tape);
  if (features.numel() != head.w1.dim(1)) {
    throw std::invalid_argument(
        "biencoder_score: feature width " + std::to_string(features.numel()) +
        " does not match head input " + std::to_string(head.w1.dim(1)));
  }
  auto hidden = relu(add(matvec(head.w1, features, tape), head.b1, tape), tape);
  return add(matvec(head.w2, hidden, tape), head.b2, tape);
}

}  // namespace cerank
