#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "pamcl/checkpoint.hpp"
#include "pamcl/errors.hpp"
#include "pamcl/hash.hpp"
#include "testutil.hpp"

using namespace pamcl;

namespace {
std::filesystem::path tmp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}
}  // namespace

TEST_CASE("sha256 known vectors") {
  CHECK(sha256_hex(std::string("")) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex(std::string("abc")) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("state dict round trip is exact") {
  StateDict d;
  d["a.weight"] = testutil::random_tensor({3, 2, 3, 3}, 1);
  d["b.bias"] = testutil::random_tensor({7}, 2);
  d["deep.nested.running_var"] = testutil::random_tensor({1, 5}, 3);
  const auto path = tmp_file("pamcl_ckpt_test.bin");
  save_state_dict(path, d);
  const StateDict back = load_state_dict(path);
  REQUIRE(back.size() == d.size());
  for (const auto& [name, t] : d) {
    REQUIRE(back.count(name) == 1);
    CHECK(back.at(name).equals(t));
  }
  std::filesystem::remove(path);
}

TEST_CASE("loading garbage fails cleanly") {
  const auto path = tmp_file("pamcl_ckpt_garbage.bin");
  {
    std::ofstream out(path, std::ios::binary);
    out << "definitely not a checkpoint";
  }
  CHECK_THROWS_AS(load_state_dict(path), IngestionError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_state_dict(tmp_file("pamcl_missing.bin")), IngestionError);
}

TEST_CASE("manifest round trip") {
  const auto path = tmp_file("pamcl_ckpt_manifest.bin");
  {
    StateDict d;
    d["x"] = testutil::random_tensor({2}, 4);
    save_state_dict(path, d);
  }
  CheckpointManifest m;
  m.variant = "tiny";
  m.source = "unit-test";
  m.sha256 = file_sha256(path);
  m.input_size = 32;
  m.norm_mean = {0.4f, 0.45f, 0.5f};
  m.norm_std = {0.2f, 0.21f, 0.22f};
  save_manifest(path, m);
  const CheckpointManifest back = load_manifest(path);
  CHECK(back.variant == m.variant);
  CHECK(back.sha256 == m.sha256);
  CHECK(back.norm_mean == m.norm_mean);
  CHECK(back.input_size == 32);
  std::filesystem::remove(path);
  std::filesystem::remove(CheckpointManifest::path_for(path));
}
