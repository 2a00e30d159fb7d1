#pragma once

// Ranking metrics, paired significance testing, candidate ranking harness,
// and wall-clock latency benchmarking of the per-query path.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cerank/data.hpp"
#include "cerank/enrichment.hpp"
#include "cerank/model.hpp"
#include "cerank/vocab.hpp"

namespace cerank {

// Permutation of candidate indices by descending score, ties by ascending
// index.
inline std::vector<int> rank_candidates(std::span<const double> scores) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  return order;
}

// 1-based rank of the positive candidate under the tie rule above.
inline int positive_rank(std::span<const double> scores, int positive_index) {
  if (positive_index < 0 ||
      positive_index >= static_cast<int>(scores.size()))
    throw std::invalid_argument("positive_rank: index out of range");
  const auto order = rank_candidates(scores);
  for (std::size_t i = 0; i < order.size(); ++i)
    if (order[i] == positive_index) return static_cast<int>(i) + 1;
  throw std::logic_error("positive_rank: unreachable");
}

inline double recall_at_k(std::span<const int> ranks, int n, int k) {
  if (k < 1 || k > n)
    throw std::invalid_argument("recall_at_k: k must be in [1, n]");
  if (ranks.empty()) return 0.0;
  std::size_t hits = 0;
  for (const int r : ranks) {
    if (r < 1 || r > n)
      throw std::invalid_argument("recall_at_k: rank " + std::to_string(r) +
                                  " outside [1, " + std::to_string(n) + "]");
    if (r <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

inline double mrr(std::span<const int> ranks) {
  if (ranks.empty()) throw std::invalid_argument("mrr: empty rank list");
  double acc = 0.0;
  for (const int r : ranks) {
    if (r < 1) throw std::invalid_argument("mrr: rank must be >= 1");
    acc += 1.0 / static_cast<double>(r);
  }
  return acc / static_cast<double>(ranks.size());
}

namespace detail {

// Continued fraction for the incomplete beta function (modified Lentz).
inline double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

// Regularized incomplete beta I_x(a, b).
inline double betai(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) -
                          std::lgamma(b) + a * std::log(x) +
                          b * std::log(1.0 - x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

}  // namespace detail

inline double student_t_two_tailed_p(double t, double df) {
  if (!(df > 0)) throw std::invalid_argument("t-test: df must be positive");
  return detail::betai(df / 2.0, 0.5, df / (df + t * t));
}

// Paired two-tailed t-test. Identical inputs give p = 1.0; zero variance with
// a nonzero mean difference is degenerate and reported as p = 0.
inline double paired_t_test(std::span<const double> a,
                            std::span<const double> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("paired_t_test: length mismatch");
  if (a.size() < 2)
    throw std::invalid_argument("paired_t_test: need at least 2 pairs");
  const std::size_t n = a.size();
  std::vector<double> diff(n);
  bool all_zero = true;
  for (std::size_t i = 0; i < n; ++i) {
    diff[i] = a[i] - b[i];
    all_zero = all_zero && diff[i] == 0.0;
  }
  if (all_zero) return 1.0;
  double mean = 0.0;
  for (const double d : diff) mean += d;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (const double d : diff) var += (d - mean) * (d - mean);
  var /= static_cast<double>(n - 1);
  if (var == 0.0) {
    std::cerr << "warning: paired_t_test with zero-variance nonzero-mean "
                 "differences; reporting p=0\n";
    return 0.0;
  }
  const double t = mean / std::sqrt(var / static_cast<double>(n));
  return student_t_two_tailed_p(t, static_cast<double>(n - 1));
}

// ---------------------------------------------------------------------------
// Group scoring harness

using GroupScorer = std::function<std::vector<double>(const EvalGroup&)>;

struct RankingOutcome {
  std::vector<std::uint64_t> group_ids;
  std::vector<int> ranks;  // 1-based rank of each group's positive
  std::vector<int> sizes;

  std::vector<double> hit_indicators(int k) const {
    std::vector<double> out(ranks.size());
    for (std::size_t i = 0; i < ranks.size(); ++i)
      out[i] = ranks[i] <= k ? 1.0 : 0.0;
    return out;
  }
  std::vector<double> reciprocal_ranks() const {
    std::vector<double> out(ranks.size());
    for (std::size_t i = 0; i < ranks.size(); ++i)
      out[i] = 1.0 / static_cast<double>(ranks[i]);
    return out;
  }
  double recall_at(int k) const {
    int n = 0;
    for (const int s : sizes) n = std::max(n, s);
    return recall_at_k(ranks, n, k);
  }
  double mrr_value() const { return mrr(ranks); }
};

inline RankingOutcome evaluate_groups(std::span<const EvalGroup> groups,
                                      const GroupScorer& scorer) {
  RankingOutcome out;
  out.group_ids.reserve(groups.size());
  for (const auto& g : groups) {
    const auto scores = scorer(g);
    if (scores.size() != g.candidates.size())
      throw std::logic_error("evaluate_groups: scorer returned wrong size");
    out.group_ids.push_back(g.id);
    out.ranks.push_back(positive_rank(scores, g.positive_index));
    out.sizes.push_back(static_cast<int>(g.candidates.size()));
  }
  return out;
}

// Cached candidate vectors for a group list, encoded outside any timed path.
struct CandidateCache {
  std::vector<std::vector<std::vector<float>>> vecs;  // [group][candidate][d]
};

template <typename S>
CandidateCache encode_candidates(const Encoder<S>& encoder,
                                 const Vocabulary& vocab,
                                 std::span<const EvalGroup> groups) {
  CandidateCache cache;
  cache.vecs.resize(groups.size());
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    cache.vecs[gi].resize(groups[gi].candidates.size());
  }
  parallel_for(groups.size(), [&](std::size_t gi) {
    const auto& g = groups[gi];
    for (std::size_t ci = 0; ci < g.candidates.size(); ++ci) {
      const auto ids = tokenize(g.candidates[ci], vocab, encoder.cfg.max_seq_len);
      auto vec = encoder.encode(ids, nullptr);
      cache.vecs[gi][ci].assign(vec.value().begin(), vec.value().end());
    }
  });
  return cache;
}

inline std::shared_ptr<std::unordered_map<std::uint64_t, std::size_t>>
group_index(std::span<const EvalGroup> groups) {
  auto map = std::make_shared<std::unordered_map<std::uint64_t, std::size_t>>();
  for (std::size_t i = 0; i < groups.size(); ++i) map->emplace(groups[i].id, i);
  return map;
}

// Plain Bi-Encoder scorer over cached candidate vectors.
template <typename S>
GroupScorer make_biencoder_scorer(const Encoder<S>& encoder,
                                  const BiEncoderHead<S>& bi_head,
                                  const Vocabulary& vocab,
                                  const CandidateCache& cache,
                                  std::span<const EvalGroup> groups) {
  auto idx = group_index(groups);
  return [&encoder, &bi_head, &vocab, &cache, idx](const EvalGroup& g) {
    const std::size_t gi = idx->at(g.id);
    const auto ids = tokenize(join_context(g.context), vocab, encoder.cfg.max_seq_len);
    auto c = encoder.encode(ids, nullptr);
    std::vector<double> scores(g.candidates.size());
    for (std::size_t ci = 0; ci < g.candidates.size(); ++ci) {
      auto r = tensor_from_cached<S>(cache.vecs[gi][ci]);
      scores[ci] = static_cast<double>(
          biencoder_score(c, r, bi_head, nullptr).item());
    }
    return scores;
  };
}

// Enriched scorer: encodes the live context once per group, then scores each
// cached candidate with neighbors retrieved from the context store.
template <typename S>
GroupScorer make_ce_scorer(const CeModel<S>& model, const Vocabulary& vocab,
                           const EmbeddingStore& context_store,
                           const CandidateCache& cache,
                           std::span<const EvalGroup> groups,
                           const CeOptions& opts) {
  const EvalGroup* base = groups.data();
  return [&model, &vocab, &context_store, &cache, base, opts](const EvalGroup& g) {
    const std::size_t gi = static_cast<std::size_t>(&g - base);
    const auto ids = tokenize(join_context(g.context), vocab, model.cfg.max_seq_len);
    auto c = model.encoder.encode(ids, nullptr);
    CeOptions o = opts;
    o.record_trace = false;
    o.exclude_id.reset();  // nothing is excluded at inference
    std::vector<double> scores(g.candidates.size());
    for (std::size_t ci = 0; ci < g.candidates.size(); ++ci) {
      auto r = tensor_from_cached<S>(cache.vecs[gi][ci]);
      auto [neighbors, hits] = retrieve_neighbors<S>(
          context_store, std::span<const float>(cache.vecs[gi][ci]), o);
      auto res = ce_score_with_neighbors(
          c, r, std::span<const Tensor<S>>(neighbors),
          std::span<const TopKHit>(hits), model.bi_head, model.ce_head, o,
          nullptr);
      scores[ci] = static_cast<double>(res.score.item());
    }
    return scores;
  };
}

// ---------------------------------------------------------------------------
// Latency

struct LatencyStats {
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double p95_ms = 0.0;
  int warmup = 0;
  int repeats = 0;
};

// Times repeated calls of one per-query path. The queried work must already
// have every cache built; nothing here is allowed to rebuild stores.
template <typename QueryFn>
LatencyStats latency_bench(std::size_t n_queries, QueryFn&& run_query,
                           int warmup = 50, int repeats = 500) {
  if (n_queries == 0)
    throw std::invalid_argument("latency_bench: empty query set");
  for (int i = 0; i < warmup; ++i) run_query(i % n_queries);
  std::vector<double> ms(repeats);
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    run_query(i % n_queries);
    const auto t1 = std::chrono::steady_clock::now();
    ms[i] = std::chrono::duration<double, std::milli>(t1 - t0).count();
  }
  LatencyStats stats;
  stats.warmup = warmup;
  stats.repeats = repeats;
  stats.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / ms.size();
  std::sort(ms.begin(), ms.end());
  stats.median_ms = ms[ms.size() / 2];
  stats.p95_ms = ms[std::min(ms.size() - 1,
                             static_cast<std::size_t>(ms.size() * 0.95))];
  return stats;
}

// ---------------------------------------------------------------------------
// Reports

struct EvalReport {
  std::string model_id;
  int k = 0;
  std::uint64_t seed = 0;
  RankingOutcome outcome;
  std::optional<LatencyStats> latency;

  double r1() const { return outcome.recall_at(1); }
  double r2() const { return outcome.recall_at(2); }
  double r5() const { return outcome.recall_at(5); }
  double mrr_value() const { return outcome.mrr_value(); }
};

inline std::string format_metric(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  return os.str();
}

// Line-delimited report: one line per query, then aggregates. A sample is
// one context ranked against its full candidate group.
inline void write_report(const EvalReport& rep, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("report: cannot write " + path);
  out << "# model=" << rep.model_id << " k=" << rep.k << " seed=" << rep.seed
      << "\n";
  out << "# sample = one context scored against its full candidate group\n";
  for (std::size_t i = 0; i < rep.outcome.ranks.size(); ++i) {
    out << "group=" << rep.outcome.group_ids[i]
        << " rank=" << rep.outcome.ranks[i]
        << " n=" << rep.outcome.sizes[i] << "\n";
  }
  out << "r10@1=" << format_metric(rep.r1()) << "\n";
  out << "r10@2=" << format_metric(rep.r2()) << "\n";
  out << "r10@5=" << format_metric(rep.r5()) << "\n";
  out << "mrr=" << format_metric(rep.mrr_value()) << "\n";
}

inline void write_summary(const EvalReport& rep, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("summary: cannot write " + path);
  out << "model=" << rep.model_id << "\n";
  out << "k=" << rep.k << "\n";
  out << "seed=" << rep.seed << "\n";
  out << "groups=" << rep.outcome.ranks.size() << "\n";
  out << "r10_at_1=" << format_metric(rep.r1()) << "\n";
  out << "r10_at_2=" << format_metric(rep.r2()) << "\n";
  out << "r10_at_5=" << format_metric(rep.r5()) << "\n";
  out << "mrr=" << format_metric(rep.mrr_value()) << "\n";
  if (rep.latency) {
    out << "latency_mean_ms=" << rep.latency->mean_ms << "\n";
    out << "latency_median_ms=" << rep.latency->median_ms << "\n";
    out << "latency_p95_ms=" << rep.latency->p95_ms << "\n";
    out << "latency_warmup=" << rep.latency->warmup << "\n";
    out << "latency_repeats=" << rep.latency->repeats << "\n";
  }
}

}  // namespace cerank
