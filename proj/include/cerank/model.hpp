#pragma once

// Full ranking model: encoder, Bi-Encoder scoring head, and the enrichment
// head, plus name-keyed access to every learned tensor.

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cerank/encoder.hpp"
#include "cerank/enrichment.hpp"
#include "cerank/matching.hpp"

namespace cerank {

template <typename S>
struct CeModel {
  EncoderConfig cfg;
  SubMultVariant variant = SubMultVariant::literal;
  Encoder<S> encoder;
  BiEncoderHead<S> bi_head;
  CeHead<S> ce_head;

  template <typename Fn>
  void visit(Fn&& fn) {
    encoder.visit(fn);
    bi_head.visit("bi_head", fn);
    ce_head.visit("ce_head", fn);
  }
};

template <typename S>
CeModel<S> init_model(const EncoderConfig& cfg, SubMultVariant variant,
                      std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  CeModel<S> m;
  m.cfg = cfg;
  m.variant = variant;
  m.encoder = Encoder<S>::init(cfg, rng);
  m.bi_head = BiEncoderHead<S>::init(cfg.hidden_dim, variant, rng);
  m.ce_head = CeHead<S>::init(cfg.hidden_dim, rng);
  return m;
}

template <typename S>
using NamedTensors = std::vector<std::pair<std::string, Tensor<S>*>>;

template <typename S, typename Part>
NamedTensors<S> named_tensors(Part& part) {
  NamedTensors<S> out;
  part.visit([&](const std::string& name, Tensor<S>& t) {
    out.emplace_back(name, &t);
  });
  return out;
}

template <typename S, typename Part>
NamedTensors<S> named_tensors(const std::string& prefix, Part& part) {
  NamedTensors<S> out;
  part.visit(prefix, [&](const std::string& name, Tensor<S>& t) {
    out.emplace_back(name, &t);
  });
  return out;
}

template <typename S>
void zero_all_grads(const NamedTensors<S>& params) {
  for (auto& [name, t] : params) t->zero_grad();
}

template <typename S>
double grad_norm(const NamedTensors<S>& params) {
  double sq = 0.0;
  for (const auto& [name, t] : params)
    for (const auto g : t->grad()) sq += static_cast<double>(g) * g;
  return std::sqrt(sq);
}

template <typename S>
CeModel<S> clone_model(const CeModel<S>& model) {
  CeModel<S> copy = model;  // shares tensor nodes
  NamedTensors<S> src = named_tensors<S>(const_cast<CeModel<S>&>(model));
  copy.visit([&, i = std::size_t{0}](const std::string&, Tensor<S>& t) mutable {
    t = Tensor<S>::from_data(Shape(src[i].second->shape()),
                             std::vector<S>(src[i].second->value().begin(),
                                            src[i].second->value().end()),
                             src[i].second->requires_grad());
    ++i;
  });
  return copy;
}

}  // namespace cerank
