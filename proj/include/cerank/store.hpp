#pragma once

// Precomputed embedding store: id-indexed rows of encoder outputs with their
// norms, exact cosine top-k over them, and a versioned binary file format.

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "cerank/encoder.hpp"

namespace cerank {

struct EmbeddingStore {
  enum class Kind : std::uint32_t { context = 0, response = 1 };

  Kind kind = Kind::context;
  int d = 0;
  std::vector<std::uint64_t> ids;
  std::vector<float> vectors;  // N x d row-major
  std::vector<float> norms;    // Euclidean norms, strictly positive

  std::size_t size() const { return ids.size(); }

  std::span<const float> row(std::size_t i) const {
    return {vectors.data() + i * static_cast<std::size_t>(d),
            static_cast<std::size_t>(d)};
  }

  std::optional<std::size_t> find(std::uint64_t id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::span<const float> vector_of(std::uint64_t id) const {
    auto r = find(id);
    if (!r)
      throw std::invalid_argument("store: unknown id " + std::to_string(id));
    return row(*r);
  }

  void rebuild_index() {
    index_.clear();
    index_.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!index_.emplace(ids[i], i).second)
        throw std::invalid_argument("store: duplicate id " +
                                    std::to_string(ids[i]));
    }
  }

 private:
  std::unordered_map<std::uint64_t, std::size_t> index_;
};

inline int env_thread_cap() {
  if (const char* env = std::getenv("CERANK_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0, n) across worker threads; results must be written
// by index so the output is identical regardless of the thread count.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const int threads = std::min<int>(env_thread_cap(), static_cast<int>(n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

// Encodes every item with frozen encoder parameters. Rows are exactly the
// encode() outputs; zero-norm vectors and duplicate ids are rejected.
template <typename S>
EmbeddingStore build_store(
    EmbeddingStore::Kind kind, const Encoder<S>& encoder,
    std::span<const std::pair<std::uint64_t, std::vector<int>>> items) {
  EmbeddingStore store;
  store.kind = kind;
  store.d = encoder.cfg.hidden_dim;
  const std::size_t n = items.size();
  store.ids.resize(n);
  store.vectors.resize(n * static_cast<std::size_t>(store.d));
  store.norms.resize(n);
  parallel_for(n, [&](std::size_t i) {
    store.ids[i] = items[i].first;
    auto vec = encoder.encode(items[i].second, nullptr);
    double sq = 0.0;
    for (std::int64_t j = 0; j < vec.numel(); ++j) {
      const float v = static_cast<float>(vec.value()[j]);
      store.vectors[i * store.d + j] = v;
      sq += static_cast<double>(v) * v;
    }
    store.norms[i] = static_cast<float>(std::sqrt(sq));
  });
  for (std::size_t i = 0; i < n; ++i) {
    if (!(store.norms[i] > 0.0f))
      throw std::runtime_error("store: zero-norm vector for id " +
                               std::to_string(store.ids[i]));
  }
  store.rebuild_index();
  return store;
}

struct TopKHit {
  std::uint64_t id = 0;
  double similarity = 0.0;
  std::size_t row = 0;
};

// Exact cosine top-k: full scan, descending similarity, ties broken by
// ascending id. Returns min(k, remaining) hits and never touches the encoder.
inline std::vector<TopKHit> top_k(
    const EmbeddingStore& store, std::span<const float> query, int k,
    const std::unordered_set<std::uint64_t>& exclude = {}) {
  if (k < 0) throw std::invalid_argument("top_k: k must be >= 0");
  if (query.size() != static_cast<std::size_t>(store.d))
    throw std::invalid_argument("top_k: query dim " +
                                std::to_string(query.size()) +
                                " does not match store dim " +
                                std::to_string(store.d));
  double qsq = 0.0;
  for (const float v : query) qsq += static_cast<double>(v) * v;
  if (!(qsq > 0.0)) throw std::invalid_argument("top_k: zero query vector");
  const double qnorm = std::sqrt(qsq);

  std::vector<TopKHit> hits;
  hits.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (!exclude.empty() && exclude.count(store.ids[i])) continue;
    const float* row = store.vectors.data() + i * store.d;
    double dot = 0.0;
    for (int j = 0; j < store.d; ++j)
      dot += static_cast<double>(row[j]) * query[j];
    hits.push_back({store.ids[i], dot / (qnorm * store.norms[i]), i});
  }
  const auto better = [](const TopKHit& a, const TopKHit& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.id < b.id;
  };
  const std::size_t take = std::min<std::size_t>(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + take, hits.end(), better);
  hits.resize(take);
  return hits;
}

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}
inline std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}
inline void put_f32(std::string& out, float f) {
  put_u32(out, std::bit_cast<std::uint32_t>(f));
}
inline float get_f32(const char* p) {
  return std::bit_cast<float>(get_u32(p));
}

}  // namespace detail

inline constexpr char kStoreMagic[8] = {'C', 'E', 'S', 'T', 'O', 'R', 'E', '1'};

inline void save_store(const EmbeddingStore& store, const std::string& path) {
  std::string buf;
  const std::size_t n = store.size();
  buf.reserve(28 + n * (8 + (store.d + 1) * 4));
  buf.append(kStoreMagic, 8);
  detail::put_u32(buf, 1u);
  detail::put_u32(buf, static_cast<std::uint32_t>(store.kind));
  detail::put_u64(buf, n);
  detail::put_u32(buf, static_cast<std::uint32_t>(store.d));
  for (const auto id : store.ids) detail::put_u64(buf, id);
  for (const float v : store.vectors) detail::put_f32(buf, v);
  for (const float v : store.norms) detail::put_f32(buf, v);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("store: cannot write " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("store: short write to " + path);
}

// expected_d < 0 skips the dimension check.
inline EmbeddingStore load_store(const std::string& path, int expected_d = -1) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("store: cannot read " + path);
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  if (buf.size() < 28 || std::memcmp(buf.data(), kStoreMagic, 8) != 0)
    throw std::runtime_error("store: bad magic in " + path);
  const std::uint32_t version = detail::get_u32(buf.data() + 8);
  if (version != 1)
    throw std::runtime_error("store: unsupported version " +
                             std::to_string(version) + " in " + path);
  const std::uint32_t kind = detail::get_u32(buf.data() + 12);
  if (kind > 1) throw std::runtime_error("store: bad kind field in " + path);
  const std::uint64_t n = detail::get_u64(buf.data() + 16);
  const std::uint32_t d = detail::get_u32(buf.data() + 24);
  if (expected_d >= 0 && d != static_cast<std::uint32_t>(expected_d))
    throw std::runtime_error("store: dimension " + std::to_string(d) +
                             " does not match expected " +
                             std::to_string(expected_d) + " in " + path);
  const std::size_t need = 28 + n * 8 + n * d * 4 + n * 4;
  if (buf.size() != need)
    throw std::runtime_error("store: truncated file " + path + " (" +
                             std::to_string(buf.size()) + " bytes, expected " +
                             std::to_string(need) + ")");
  EmbeddingStore store;
  store.kind = static_cast<EmbeddingStore::Kind>(kind);
  store.d = static_cast<int>(d);
  store.ids.resize(n);
  store.vectors.resize(n * d);
  store.norms.resize(n);
  const char* p = buf.data() + 28;
  for (std::size_t i = 0; i < n; ++i, p += 8) store.ids[i] = detail::get_u64(p);
  for (std::size_t i = 0; i < n * d; ++i, p += 4)
    store.vectors[i] = detail::get_f32(p);
  for (std::size_t i = 0; i < n; ++i, p += 4) {
    store.norms[i] = detail::get_f32(p);
    if (!(store.norms[i] > 0.0f) || !std::isfinite(store.norms[i]))
      throw std::runtime_error("store: non-positive norm at row " +
                               std::to_string(i) + " in " + path);
  }
  store.rebuild_index();
  return store;
}

}  // namespace cerank
