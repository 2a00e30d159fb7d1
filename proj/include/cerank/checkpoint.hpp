#pragma once

// Versioned binary checkpoint: a JSON config echo followed by name-keyed
// parameter tensors, so later phases can warm-start from a subset.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cerank/model.hpp"
#include "cerank/store.hpp"

namespace cerank {

inline constexpr char kCheckpointMagic[8] = {'C', 'E', 'R', 'A', 'N', 'K', 'P', '1'};

struct Checkpoint {
  nlohmann::json meta;
  std::map<std::string, std::pair<Shape, std::vector<float>>> tensors;
};

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::string buf;
  buf.append(kCheckpointMagic, 8);
  detail::put_u32(buf, 1u);
  const std::string meta = ckpt.meta.dump();
  detail::put_u64(buf, meta.size());
  buf += meta;
  detail::put_u64(buf, ckpt.tensors.size());
  for (const auto& [name, entry] : ckpt.tensors) {
    detail::put_u32(buf, static_cast<std::uint32_t>(name.size()));
    buf += name;
    detail::put_u32(buf, static_cast<std::uint32_t>(entry.first.size()));
    for (const auto dim : entry.first)
      detail::put_u64(buf, static_cast<std::uint64_t>(dim));
    for (const float v : entry.second) detail::put_f32(buf, v);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("checkpoint: short write to " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot read " + path);
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  auto need = [&](std::size_t n) {
    if (pos + n > buf.size())
      throw std::runtime_error("checkpoint: truncated file " + path);
  };
  need(12);
  if (std::memcmp(buf.data(), kCheckpointMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  pos = 8;
  const auto version = detail::get_u32(buf.data() + pos);
  pos += 4;
  if (version != 1)
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version));
  need(8);
  const auto meta_len = detail::get_u64(buf.data() + pos);
  pos += 8;
  need(meta_len);
  Checkpoint ckpt;
  ckpt.meta = nlohmann::json::parse(buf.substr(pos, meta_len));
  pos += meta_len;
  need(8);
  const auto count = detail::get_u64(buf.data() + pos);
  pos += 8;
  for (std::uint64_t i = 0; i < count; ++i) {
    need(4);
    const auto name_len = detail::get_u32(buf.data() + pos);
    pos += 4;
    need(name_len + 4);
    std::string name = buf.substr(pos, name_len);
    pos += name_len;
    const auto ndim = detail::get_u32(buf.data() + pos);
    pos += 4;
    need(ndim * 8);
    Shape shape(ndim);
    for (std::uint32_t d = 0; d < ndim; ++d, pos += 8)
      shape[d] = static_cast<std::int64_t>(detail::get_u64(buf.data() + pos));
    const auto numel = static_cast<std::size_t>(shape_numel(shape));
    need(numel * 4);
    std::vector<float> data(numel);
    for (std::size_t j = 0; j < numel; ++j, pos += 4)
      data[j] = detail::get_f32(buf.data() + pos);
    ckpt.tensors.emplace(std::move(name), std::make_pair(std::move(shape), std::move(data)));
  }
  if (pos != buf.size())
    throw std::runtime_error("checkpoint: trailing bytes in " + path);
  return ckpt;
}

template <typename Part>
void checkpoint_put(Checkpoint& ckpt, Part& part) {
  part.visit([&](const std::string& name, Tensor<float>& t) {
    ckpt.tensors[name] = {t.shape(), std::vector<float>(t.value().begin(),
                                                        t.value().end())};
  });
}

template <typename Part>
void checkpoint_put(Checkpoint& ckpt, const std::string& prefix, Part& part) {
  part.visit(prefix, [&](const std::string& name, Tensor<float>& t) {
    ckpt.tensors[name] = {t.shape(), std::vector<float>(t.value().begin(),
                                                        t.value().end())};
  });
}

// Copies checkpoint tensors into the visited parameters by name. Names
// absent from the checkpoint are left untouched when `partial`, otherwise
// they raise. Shape mismatches always raise.
template <typename Visitable>
void checkpoint_restore(const Checkpoint& ckpt, Visitable&& visit_fn,
                        bool partial = false) {
  visit_fn([&](const std::string& name, Tensor<float>& t) {
    auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end()) {
      if (partial) return;
      throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
    }
    if (it->second.first != t.shape())
      throw std::runtime_error("checkpoint: shape mismatch for '" + name +
                               "': file " + shape_str(it->second.first) +
                               " vs model " + shape_str(t.shape()));
    std::vector<float> data = it->second.second;
    for (std::size_t i = 0; i < data.size(); ++i) t.value()[i] = data[i];
  });
}

}  // namespace cerank
