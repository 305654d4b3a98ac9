#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include "doctest.h"
#include "../support/fixtures.hpp"
#include "tcb/error.hpp"
#include "tcb/tensor_store.hpp"

using namespace tcb;
using tcb::testing::ManifestBuilder;
using tcb::testing::TempDir;

namespace {

ErrorCode code_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected tcb::Error");
  return ErrorCode::io;
}

}  // namespace

TEST_SUITE("tensor_store") {

TEST_CASE("float64 vector writes a 30-byte file and round-trips bit-exactly") {
  TempDir tmp;
  const TensorBlock b(DType::float64, {2}, {1.0, -1.0});
  write_tensor(b, tmp / "v.tcb");
  const auto bytes = tcb::testing::read_file(tmp / "v.tcb");
  REQUIRE(bytes.size() == 30);
  CHECK(bytes.substr(0, 4) == "TCB1");
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 1);
  CHECK(bytes[6] == 2);  // extent, little endian
  for (int i = 7; i < 14; ++i) CHECK(bytes[i] == 0);

  const auto back = read_tensor(tmp / "v.tcb");
  CHECK(back == b);
  double first;
  std::memcpy(&first, bytes.data() + 14, 8);
  CHECK(first == 1.0);
}

TEST_CASE("float32 matrix round-trips") {
  TempDir tmp;
  const TensorBlock b(DType::float32, {2, 2}, {1, 2, 3, 4});
  write_tensor(b, tmp / "m.tcb");
  CHECK(tcb::testing::read_file(tmp / "m.tcb").size() == 4 + 2 + 16 + 16);
  CHECK(read_tensor(tmp / "m.tcb") == b);
  const auto m = as_matrix(read_tensor(tmp / "m.tcb"));
  CHECK(m.rows == 2);
  CHECK(m(1, 0) == 3.0);
}

TEST_CASE("float32 blocks hold float-rounded values") {
  const TensorBlock b(DType::float32, {1}, {0.1});
  CHECK(b.data()[0] == static_cast<double>(0.1f));
}

TEST_CASE("non-finite data is written but rejected on read unless allowed") {
  TempDir tmp;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  write_tensor(TensorBlock(DType::float64, {3}, {1.0, nan, 2.0}), tmp / "n.tcb");
  CHECK(code_of([&] { read_tensor(tmp / "n.tcb"); }) == ErrorCode::non_finite);
  const auto b = read_tensor(tmp / "n.tcb", {.allow_non_finite = true});
  CHECK(std::isnan(b.data()[1]));
  CHECK_FALSE(b.all_finite());
}

TEST_CASE("bad magic") {
  TempDir tmp;
  write_tensor(TensorBlock(DType::float64, {1}, {1.0}), tmp / "x.tcb");
  auto bytes = tcb::testing::read_file(tmp / "x.tcb");
  bytes.replace(0, 4, "XXXX");
  tcb::testing::write_file(tmp / "x.tcb", bytes);
  CHECK(code_of([&] { read_tensor(tmp / "x.tcb"); }) == ErrorCode::bad_magic);
}

TEST_CASE("payload shorter than the declared shape is truncation") {
  TempDir tmp;
  write_tensor(TensorBlock(DType::float64, {2}, {1.0, 2.0}), tmp / "t.tcb");
  auto bytes = tcb::testing::read_file(tmp / "t.tcb");
  bytes[6] = 3;  // declare [3] while only two scalars follow
  tcb::testing::write_file(tmp / "t.tcb", bytes);
  CHECK(code_of([&] { read_tensor(tmp / "t.tcb"); }) == ErrorCode::truncated);

  tcb::testing::write_file(tmp / "h.tcb", std::string("TCB1\x01", 5));
  CHECK(code_of([&] { read_tensor(tmp / "h.tcb"); }) == ErrorCode::truncated);
}

TEST_CASE("trailing bytes and unknown dtype are rejected") {
  TempDir tmp;
  write_tensor(TensorBlock(DType::float64, {1}, {1.0}), tmp / "t.tcb");
  auto bytes = tcb::testing::read_file(tmp / "t.tcb");
  tcb::testing::write_file(tmp / "long.tcb", bytes + "z");
  CHECK_THROWS_AS(read_tensor(tmp / "long.tcb"), Error);
  bytes[4] = 7;
  tcb::testing::write_file(tmp / "dt.tcb", bytes);
  CHECK_THROWS_AS(read_tensor(tmp / "dt.tcb"), Error);
}

TEST_CASE("missing file") {
  TempDir tmp;
  CHECK(code_of([&] { read_tensor(tmp / "nope.tcb"); }) == ErrorCode::missing_file);
}

TEST_CASE("shape and data length must agree") {
  CHECK_THROWS_AS(TensorBlock(DType::float64, {3}, {1.0, 2.0}), Error);
}

TEST_CASE("round-trip over random shapes up to rank 4") {
  TempDir tmp;
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> rank_dist(0, 4), extent(0, 5), dt(0, 1);
  std::normal_distribution<double> value;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::uint64_t> shape(rank_dist(rng));
    for (auto& s : shape) s = extent(rng);
    std::vector<double> data(shape_product(shape));
    for (auto& x : data) x = value(rng);
    const TensorBlock b(dt(rng) ? DType::float64 : DType::float32, shape, data);
    const auto path = tmp / ("r" + std::to_string(trial) + ".tcb");
    write_tensor(b, path);
    REQUIRE(read_tensor(path) == b);
    const auto header = read_tensor_header(path);
    CHECK(header.shape == shape);
    CHECK(header.dtype == b.dtype());
  }
}

TEST_CASE("valid manifest with W[4,3] and h[3]") {
  TempDir tmp;
  Matrix w(4, 3);
  for (std::size_t i = 0; i < 12; ++i) w.values[i] = static_cast<double>(i);
  const auto path = ManifestBuilder(tmp.path()).weights(w).vector("h0", TensorRole::h, {1, 2, 3}).save();
  const auto m = load_manifest(path);
  REQUIRE(m.entries.size() == 2);
  REQUIRE(m.find("h0"));
  CHECK(m.with_role(TensorRole::W).size() == 1);
  CHECK(as_vector(load_entry(m, "h0")) == std::vector<double>{1, 2, 3});
  CHECK(as_matrix(load_entry(m, "W")) == w);
}

TEST_CASE("manifest with W[4,3] and h[5] is a shape mismatch") {
  TempDir tmp;
  const auto path =
      ManifestBuilder(tmp.path()).weights(Matrix(4, 3)).vector("h0", TensorRole::h, {1, 2, 3, 4, 5}).save();
  CHECK(code_of([&] { load_manifest(path); }) == ErrorCode::shape_mismatch);
}

TEST_CASE("manifest logits must have length V") {
  TempDir tmp;
  const auto path =
      ManifestBuilder(tmp.path()).weights(Matrix(4, 3)).vector("z", TensorRole::logits, {1, 2, 3}).save();
  CHECK(code_of([&] { load_manifest(path); }) == ErrorCode::shape_mismatch);
}

TEST_CASE("manifest metadata must agree with W") {
  TempDir tmp;
  const auto path = ManifestBuilder(tmp.path()).weights(Matrix(4, 3)).metadata("V", 5).save();
  CHECK(code_of([&] { load_manifest(path); }) == ErrorCode::shape_mismatch);
}

TEST_CASE("manifest referencing an absent file") {
  TempDir tmp;
  const auto path = ManifestBuilder(tmp.path()).weights(Matrix(4, 3)).vector("h0", TensorRole::h, {1, 2, 3}).save();
  std::filesystem::remove(tmp / "h0.tcb");
  CHECK(code_of([&] { load_manifest(path); }) == ErrorCode::missing_file);
}

TEST_CASE("manifest entry disagreeing with its file header") {
  TempDir tmp;
  const auto path = ManifestBuilder(tmp.path()).weights(Matrix(4, 3)).vector("h0", TensorRole::h, {1, 2, 3}).save();
  write_tensor(TensorBlock(DType::float32, {3}, {1, 2, 3}), tmp / "h0.tcb");
  CHECK(code_of([&] { load_manifest(path); }) == ErrorCode::shape_mismatch);
}

TEST_CASE("malformed manifests are schema errors") {
  TempDir tmp;
  tcb::testing::write_file(tmp / "a.json", "{\"version\": 2, \"entries\": []}");
  CHECK(code_of([&] { load_manifest(tmp / "a.json"); }) == ErrorCode::schema);
  tcb::testing::write_file(tmp / "b.json", "{\"version\": 1, \"entries\": [{\"name\": \"x\"}]}");
  CHECK(code_of([&] { load_manifest(tmp / "b.json"); }) == ErrorCode::schema);
  tcb::testing::write_file(tmp / "c.json", "not json");
  CHECK(code_of([&] { load_manifest(tmp / "c.json"); }) == ErrorCode::schema);
  tcb::testing::write_file(tmp / "d.json",
                           "{\"version\": 1, \"entries\": [{\"name\": \"x\", \"path\": \"x.tcb\", \"dtype\": "
                           "\"float64\", \"shape\": [1], \"role\": \"bogus\"}]}");
  CHECK(code_of([&] { load_manifest(tmp / "d.json"); }) == ErrorCode::schema);
}

TEST_CASE("duplicate entry names are rejected") {
  TempDir tmp;
  write_tensor(TensorBlock(DType::float64, {3}, {1, 2, 3}), tmp / "h.tcb");
  tcb::testing::write_file(tmp / "m.json",
                           R"({"version": 1, "entries": [
      {"name": "h", "path": "h.tcb", "dtype": "float64", "shape": [3], "role": "h"},
      {"name": "h", "path": "h.tcb", "dtype": "float64", "shape": [3], "role": "h"}]})");
  CHECK(code_of([&] { load_manifest(tmp / "m.json"); }) == ErrorCode::schema);
}

}  // TEST_SUITE
