#include "frl/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace frl {

namespace {

constexpr char kMagic[4] = {'F', 'R', 'L', '1'};

void put_u32(std::string& buf, uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
               static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  buf.append(b, 4);
}

uint32_t get_u32(const std::string& buf, size_t& pos) {
  if (pos + 4 > buf.size()) throw std::runtime_error("checkpoint: truncated file");
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + pos);
  pos += 4;
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<NamedParam>& params) {
  std::string buf;
  buf.append(kMagic, 4);
  for (const auto& p : params) {
    put_u32(buf, static_cast<uint32_t>(p.name.size()));
    buf.append(p.name);
    put_u32(buf, static_cast<uint32_t>(p.tensor->shape.size()));
    for (const int64_t d : p.tensor->shape) put_u32(buf, static_cast<uint32_t>(d));
    for (const float v : *p.tensor->data) {
      uint32_t bits;
      std::memcpy(&bits, &v, 4);
      put_u32(buf, bits);
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

std::map<std::string, LoadedParam> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  size_t pos = 4;
  std::map<std::string, LoadedParam> out;
  while (pos < buf.size()) {
    const uint32_t name_len = get_u32(buf, pos);
    if (pos + name_len > buf.size()) throw std::runtime_error("checkpoint: truncated file");
    std::string name(buf.data() + pos, name_len);
    pos += name_len;
    const uint32_t rank = get_u32(buf, pos);
    LoadedParam param;
    int64_t numel = 1;
    for (uint32_t i = 0; i < rank; ++i) {
      const uint32_t d = get_u32(buf, pos);
      param.shape.push_back(static_cast<int64_t>(d));
      numel *= d;
    }
    param.data.resize(static_cast<size_t>(numel));
    for (int64_t i = 0; i < numel; ++i) {
      const uint32_t bits = get_u32(buf, pos);
      std::memcpy(&param.data[i], &bits, 4);
    }
    if (out.count(name)) throw std::runtime_error("checkpoint: duplicate parameter " + name);
    out.emplace(std::move(name), std::move(param));
  }
  return out;
}

void assign_params(const std::map<std::string, LoadedParam>& loaded,
                   const std::vector<NamedParam>& params) {
  if (loaded.size() != params.size())
    throw std::runtime_error("checkpoint: parameter count mismatch (file has " +
                             std::to_string(loaded.size()) + ", model has " +
                             std::to_string(params.size()) + ")");
  for (const auto& p : params) {
    auto it = loaded.find(p.name);
    if (it == loaded.end()) throw std::runtime_error("checkpoint: missing parameter " + p.name);
    if (it->second.shape != p.tensor->shape)
      throw std::runtime_error("checkpoint: shape mismatch for " + p.name + " (file " +
                               shape_str(it->second.shape) + ", model " +
                               shape_str(p.tensor->shape) + ")");
    *p.tensor->data = it->second.data;
  }
}

}  // namespace frl
