#pragma once

// On-disk tensor container shared with the extractor.
//
//   magic "TCB1" | dtype:u8 | rank:u8 | extents:u64-LE x rank | payload:LE scalars
//
// dtype codes: 0 = float32, 1 = float64. Scalars are row-major.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tcb/linalg.hpp"

namespace tcb {

enum class DType : std::uint8_t { float32 = 0, float64 = 1 };

inline constexpr std::size_t kMaxRank = 8;

const char* to_string(DType dtype);
DType parse_dtype(const std::string& name);
std::size_t dtype_size(DType dtype);

// Values are held as float64 regardless of dtype. For float32 blocks every
// value is rounded to the nearest float on construction so that a write/read
// cycle is bit-exact.
class TensorBlock {
 public:
  TensorBlock() = default;
  TensorBlock(DType dtype, std::vector<std::uint64_t> shape, std::vector<double> data);

  DType dtype() const noexcept { return dtype_; }
  const std::vector<std::uint64_t>& shape() const noexcept { return shape_; }
  const std::vector<double>& data() const noexcept { return data_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t element_count() const noexcept { return data_.size(); }

  bool all_finite() const;

  friend bool operator==(const TensorBlock&, const TensorBlock&) = default;

 private:
  DType dtype_ = DType::float64;
  std::vector<std::uint64_t> shape_;
  std::vector<double> data_;
};

std::uint64_t shape_product(const std::vector<std::uint64_t>& shape);

struct ReadOptions {
  bool allow_non_finite = false;
};

void write_tensor(const TensorBlock& block, const std::filesystem::path& path);
TensorBlock read_tensor(const std::filesystem::path& path, ReadOptions options = {});

struct TensorHeader {
  DType dtype = DType::float64;
  std::vector<std::uint64_t> shape;
};
TensorHeader read_tensor_header(const std::filesystem::path& path);

// Rank-2 block to matrix (rows x cols); rank-1 blocks via as_vector.
Matrix as_matrix(const TensorBlock& block);
std::vector<double> as_vector(const TensorBlock& block);

enum class TensorRole { W, h, logits, probs };

const char* to_string(TensorRole role);
TensorRole parse_role(const std::string& name);

struct ManifestEntry {
  std::string name;
  std::filesystem::path path;  // as written in the manifest (relative paths resolve against the manifest directory)
  DType dtype = DType::float32;
  std::vector<std::uint64_t> shape;
  TensorRole role = TensorRole::h;
};

struct TensorManifest {
  std::filesystem::path base_dir;
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<ManifestEntry> entries;

  const ManifestEntry* find(const std::string& name) const;
  std::vector<const ManifestEntry*> with_role(TensorRole role) const;
  std::filesystem::path resolve(const ManifestEntry& entry) const;
};

// Parses and validates: schema, referenced files present with matching
// headers, shapes consistent with role tags and metadata V/d.
TensorManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const TensorManifest& manifest, const std::filesystem::path& path);

TensorBlock load_entry(const TensorManifest& manifest, const std::string& name, ReadOptions options = {});

}  // namespace tcb
