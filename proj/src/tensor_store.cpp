#include "tcb/tensor_store.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "tcb/error.hpp"

namespace tcb {

namespace {

constexpr std::array<char, 4> kMagic{'T', 'C', 'B', '1'};

template <typename T>
void put_le(std::vector<unsigned char>& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.insert(out.end(), bytes.begin(), bytes.end());
}

template <typename T>
T get_le(const unsigned char* in) {
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), in, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::missing_file, path.string());
    throw Error(ErrorCode::io, "cannot open " + path.string());
  }
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

struct ParsedHeader {
  TensorHeader header;
  std::size_t payload_offset = 0;
};

ParsedHeader parse_header(const std::vector<unsigned char>& bytes, const std::filesystem::path& path) {
  if (bytes.size() < kMagic.size() || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw Error(ErrorCode::bad_magic, path.string());
  }
  if (bytes.size() < 6) throw Error(ErrorCode::truncated, path.string() + ": header");
  ParsedHeader parsed;
  const unsigned char dtype_code = bytes[4];
  if (dtype_code > 1) throw Error(ErrorCode::unsupported, "dtype code " + std::to_string(dtype_code));
  parsed.header.dtype = static_cast<DType>(dtype_code);
  const std::size_t rank = bytes[5];
  if (rank > kMaxRank) throw Error(ErrorCode::unsupported, "rank " + std::to_string(rank) + " > 8");
  if (bytes.size() < 6 + 8 * rank) throw Error(ErrorCode::truncated, path.string() + ": header extents");
  for (std::size_t k = 0; k < rank; ++k) parsed.header.shape.push_back(get_le<std::uint64_t>(&bytes[6 + 8 * k]));
  parsed.payload_offset = 6 + 8 * rank;
  return parsed;
}

}  // namespace

const char* to_string(DType dtype) { return dtype == DType::float32 ? "float32" : "float64"; }

DType parse_dtype(const std::string& name) {
  if (name == "float32") return DType::float32;
  if (name == "float64") return DType::float64;
  throw Error(ErrorCode::schema, "unknown dtype '" + name + "'");
}

std::size_t dtype_size(DType dtype) { return dtype == DType::float32 ? 4 : 8; }

std::uint64_t shape_product(const std::vector<std::uint64_t>& shape) {
  std::uint64_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

TensorBlock::TensorBlock(DType dtype, std::vector<std::uint64_t> shape, std::vector<double> data)
    : dtype_(dtype), shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.size() > kMaxRank) throw Error(ErrorCode::unsupported, "rank > 8");
  if (shape_product(shape_) != data_.size()) {
    throw Error(ErrorCode::shape_mismatch, "data length " + std::to_string(data_.size()) +
                                               " != product of shape " + std::to_string(shape_product(shape_)));
  }
  if (dtype_ == DType::float32) {
    for (auto& x : data_) x = static_cast<double>(static_cast<float>(x));
  }
}

bool TensorBlock::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

void write_tensor(const TensorBlock& block, const std::filesystem::path& path) {
  if (block.rank() > kMaxRank) throw Error(ErrorCode::unsupported, "rank > 8");
  std::vector<unsigned char> bytes(kMagic.begin(), kMagic.end());
  bytes.push_back(static_cast<unsigned char>(block.dtype()));
  bytes.push_back(static_cast<unsigned char>(block.rank()));
  for (auto e : block.shape()) put_le<std::uint64_t>(bytes, e);
  bytes.reserve(bytes.size() + block.element_count() * dtype_size(block.dtype()));
  for (double x : block.data()) {
    if (block.dtype() == DType::float32) {
      put_le<float>(bytes, static_cast<float>(x));
    } else {
      put_le<double>(bytes, x);
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

TensorHeader read_tensor_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::missing_file, path.string());
    throw Error(ErrorCode::io, "cannot open " + path.string());
  }
  std::vector<unsigned char> bytes(6 + 8 * kMaxRank);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  bytes.resize(static_cast<std::size_t>(in.gcount()));
  return parse_header(bytes, path).header;
}

TensorBlock read_tensor(const std::filesystem::path& path, ReadOptions options) {
  const auto bytes = read_all(path);
  const auto parsed = parse_header(bytes, path);
  const auto& header = parsed.header;
  const std::uint64_t count = shape_product(header.shape);
  const std::size_t width = dtype_size(header.dtype);
  const std::size_t available = bytes.size() - parsed.payload_offset;
  if (available / width < count) {
    throw Error(ErrorCode::truncated, path.string() + ": expected " + std::to_string(count) + " scalars, found " +
                                          std::to_string(available / width));
  }
  if (available != count * width) {
    throw Error(ErrorCode::truncated, path.string() + ": trailing bytes after payload");
  }

  std::vector<double> data(count);
  const unsigned char* p = bytes.data() + parsed.payload_offset;
  for (std::uint64_t i = 0; i < count; ++i, p += width) {
    data[i] = header.dtype == DType::float32 ? static_cast<double>(get_le<float>(p)) : get_le<double>(p);
    if (!options.allow_non_finite && !std::isfinite(data[i])) {
      throw Error(ErrorCode::non_finite, path.string() + ": element " + std::to_string(i));
    }
  }
  return TensorBlock(header.dtype, header.shape, std::move(data));
}

Matrix as_matrix(const TensorBlock& block) {
  if (block.rank() != 2) throw Error(ErrorCode::shape_mismatch, "expected a rank-2 tensor");
  return Matrix(block.shape()[0], block.shape()[1], block.data());
}

std::vector<double> as_vector(const TensorBlock& block) {
  if (block.rank() != 1) throw Error(ErrorCode::shape_mismatch, "expected a rank-1 tensor");
  return block.data();
}

const char* to_string(TensorRole role) {
  switch (role) {
    case TensorRole::W: return "W";
    case TensorRole::h: return "h";
    case TensorRole::logits: return "logits";
    case TensorRole::probs: return "probs";
  }
  return "?";
}

TensorRole parse_role(const std::string& name) {
  if (name == "W") return TensorRole::W;
  if (name == "h") return TensorRole::h;
  if (name == "logits") return TensorRole::logits;
  if (name == "probs") return TensorRole::probs;
  throw Error(ErrorCode::schema, "unknown role '" + name + "'");
}

const ManifestEntry* TensorManifest::find(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

std::vector<const ManifestEntry*> TensorManifest::with_role(TensorRole role) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries) {
    if (e.role == role) out.push_back(&e);
  }
  return out;
}

std::filesystem::path TensorManifest::resolve(const ManifestEntry& entry) const {
  return entry.path.is_absolute() ? entry.path : base_dir / entry.path;
}

namespace {

std::string shape_str(const std::vector<std::uint64_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

void validate_roles(const TensorManifest& m) {
  std::optional<std::uint64_t> vocab;
  std::optional<std::uint64_t> hidden;
  if (m.metadata.contains("V")) vocab = m.metadata["V"].get<std::uint64_t>();
  if (m.metadata.contains("d")) hidden = m.metadata["d"].get<std::uint64_t>();

  for (const auto* w : m.with_role(TensorRole::W)) {
    if (w->shape.size() != 2) throw Error(ErrorCode::shape_mismatch, w->name + ": W must be rank-2");
    if (vocab && *vocab != w->shape[0]) {
      throw Error(ErrorCode::shape_mismatch, w->name + ": rows " + std::to_string(w->shape[0]) +
                                                 " disagree with metadata V=" + std::to_string(*vocab));
    }
    if (hidden && *hidden != w->shape[1]) {
      throw Error(ErrorCode::shape_mismatch, w->name + ": cols " + std::to_string(w->shape[1]) +
                                                 " disagree with metadata d=" + std::to_string(*hidden));
    }
    if (!vocab) vocab = w->shape[0];
    if (!hidden) hidden = w->shape[1];
    if (*vocab != w->shape[0] || *hidden != w->shape[1]) {
      throw Error(ErrorCode::shape_mismatch, w->name + ": W entries disagree on shape");
    }
  }

  for (const auto& e : m.entries) {
    if (e.role == TensorRole::W) continue;
    if (e.shape.size() != 1) {
      throw Error(ErrorCode::shape_mismatch, e.name + ": role " + to_string(e.role) + " must be rank-1");
    }
    const auto expected = e.role == TensorRole::h ? hidden : vocab;
    if (expected && *expected != e.shape[0]) {
      throw Error(ErrorCode::shape_mismatch, e.name + ": length " + std::to_string(e.shape[0]) +
                                                 " inconsistent with expected " + std::to_string(*expected));
    }
  }
}

}  // namespace

TensorManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::missing_file, path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::schema, path.string() + ": " + e.what());
  }

  TensorManifest m;
  m.base_dir = path.parent_path();
  try {
    if (!doc.is_object()) throw Error(ErrorCode::schema, "manifest must be a JSON object");
    if (doc.value("version", 0) != 1) throw Error(ErrorCode::schema, "unsupported manifest version");
    if (doc.contains("metadata")) {
      if (!doc["metadata"].is_object()) throw Error(ErrorCode::schema, "metadata must be an object");
      m.metadata = doc["metadata"];
    }
    if (!doc.contains("entries") || !doc["entries"].is_array()) {
      throw Error(ErrorCode::schema, "entries must be an array");
    }
    for (const auto& j : doc["entries"]) {
      ManifestEntry e;
      e.name = j.at("name").get<std::string>();
      e.path = j.at("path").get<std::string>();
      e.dtype = parse_dtype(j.at("dtype").get<std::string>());
      e.shape = j.at("shape").get<std::vector<std::uint64_t>>();
      e.role = parse_role(j.at("role").get<std::string>());
      if (m.find(e.name)) throw Error(ErrorCode::schema, "duplicate entry name '" + e.name + "'");
      m.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::schema, path.string() + ": " + e.what());
  }

  validate_roles(m);

  for (const auto& e : m.entries) {
    const auto file = m.resolve(e);
    if (!std::filesystem::exists(file)) throw Error(ErrorCode::missing_file, e.name + ": " + file.string());
    const auto header = read_tensor_header(file);
    if (header.shape != e.shape || header.dtype != e.dtype) {
      throw Error(ErrorCode::shape_mismatch, e.name + ": file holds " + to_string(header.dtype) + " " +
                                                 shape_str(header.shape) + ", manifest declares " +
                                                 to_string(e.dtype) + " " + shape_str(e.shape));
    }
  }
  return m;
}

void save_manifest(const TensorManifest& manifest, const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["version"] = 1;
  doc["metadata"] = manifest.metadata;
  doc["entries"] = nlohmann::json::array();
  for (const auto& e : manifest.entries) {
    doc["entries"].push_back({{"name", e.name},
                              {"path", e.path.generic_string()},
                              {"dtype", to_string(e.dtype)},
                              {"shape", e.shape},
                              {"role", to_string(e.role)}});
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

TensorBlock load_entry(const TensorManifest& manifest, const std::string& name, ReadOptions options) {
  const auto* entry = manifest.find(name);
  if (!entry) throw Error(ErrorCode::schema, "manifest has no entry '" + name + "'");
  auto block = read_tensor(manifest.resolve(*entry), options);
  if (block.shape() != entry->shape) throw Error(ErrorCode::shape_mismatch, name + ": shape changed on disk");
  return block;
}

}  // namespace tcb
