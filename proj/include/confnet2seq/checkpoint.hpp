#pragma once

// Checkpoint layout: `<prefix>.json` holds the manifest (tensor names and
// shapes in blob order, step counter, free-form config) and `<prefix>.bin`
// holds the concatenated tensor values as little-endian float64.

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "confnet2seq/optim.hpp"

namespace confnet2seq::num {

struct Checkpoint {
  std::size_t step = 0;
  nlohmann::json config;
  std::vector<NamedTensor> tensors;

  // Throws CompatibilityError if absent.
  const Tensor& find(const std::string& name) const;
  bool contains(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& prefix, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& prefix);

std::filesystem::path manifest_path(const std::filesystem::path& prefix);
std::filesystem::path blob_path(const std::filesystem::path& prefix);

}  // namespace confnet2seq::num
