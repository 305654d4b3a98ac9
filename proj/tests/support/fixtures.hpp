#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tcb/linalg.hpp"
#include "tcb/tensor_store.hpp"
#include "temp_dir.hpp"

namespace tcb::testing {

// Builds a manifest in `dir`: tensors are written next to it and the
// manifest path is returned.
class ManifestBuilder {
 public:
  explicit ManifestBuilder(const std::filesystem::path& dir) : dir_(dir) {}

  ManifestBuilder& weights(const Matrix& w, DType dtype = DType::float64) {
    add("W", TensorRole::W, TensorBlock(dtype, {w.rows, w.cols}, w.values));
    return *this;
  }

  ManifestBuilder& vector(const std::string& name, TensorRole role, std::vector<double> v,
                          DType dtype = DType::float64) {
    const std::uint64_t n = v.size();
    add(name, role, TensorBlock(dtype, {n}, std::move(v)));
    return *this;
  }

  ManifestBuilder& metadata(const std::string& key, nlohmann::json value) {
    manifest_.metadata[key] = std::move(value);
    return *this;
  }

  std::filesystem::path save(const std::string& name = "manifest.json") {
    const auto path = dir_ / name;
    save_manifest(manifest_, path);
    return path;
  }

 private:
  void add(const std::string& name, TensorRole role, const TensorBlock& block) {
    const std::string file = name + ".tcb";
    write_tensor(block, dir_ / file);
    manifest_.entries.push_back({name, file, block.dtype(), block.shape(), role});
  }

  std::filesystem::path dir_;
  TensorManifest manifest_;
};

}  // namespace tcb::testing
