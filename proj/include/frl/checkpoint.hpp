#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "frl/tensor.hpp"

namespace frl {

using NamedParam = NamedParamT<float>;

// Binary checkpoint: magic "FRL1", then for each parameter in order
//   u32 name length, name bytes, u32 rank, u32 dims..., float32 payload,
// all little-endian. Reruns of the same training produce byte-identical
// files, so the format carries no timestamps or versions beyond the magic.
void save_checkpoint(const std::string& path, const std::vector<NamedParam>& params);

struct LoadedParam {
  Shape shape;
  std::vector<float> data;
};

// Parses a checkpoint. Throws on bad magic, truncation, or trailing bytes.
std::map<std::string, LoadedParam> load_checkpoint(const std::string& path);

// Copies loaded values into the model's parameters, validating that the
// name sets and shapes match exactly.
void assign_params(const std::map<std::string, LoadedParam>& loaded,
                   const std::vector<NamedParam>& params);

}  // namespace frl
