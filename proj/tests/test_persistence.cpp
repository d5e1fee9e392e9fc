#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "swapvae/checkpoint.hpp"
#include "swapvae/manifest.hpp"
#include "swapvae/sha256.hpp"

using swapvae::Checkpoint;
using swapvae::Matrix;
using swapvae::StateDict;

namespace {

std::filesystem::path temp_dir(const std::string& tag) {
  auto p = std::filesystem::temp_directory_path() / ("swapvae_test_" + tag);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << content;
}

}  // namespace

TEST_CASE("sha256 matches the FIPS 180-4 reference vectors") {
  CHECK(swapvae::sha256_hex("") ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(swapvae::sha256_hex("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(swapvae::sha256_hex("The quick brown fox jumps over the lazy dog") ==
        "d7a8fbb307d7809469ca9abcb0082e4f8d5651e46d3cdb762d02d0bf37c9e592");
  CHECK(swapvae::sha256_hex(std::string(1000000, 'a')) ==
        "cdc76e5c9914fb9281a1c7e284d73e67f1809a48a497200e046d39ccc7112cd0");
}

TEST_CASE("sha256_file agrees with in-memory digest") {
  auto dir = temp_dir("sha");
  const std::string payload = "spike counts\n\0binary-ish";
  write_file(dir / "f.bin", payload);
  CHECK(swapvae::sha256_file((dir / "f.bin").string()) == swapvae::sha256_hex(payload));
}

TEST_CASE("checkpoint round trip restores every bit") {
  auto dir = temp_dir("ckpt");
  Matrix a(2, 3), b(1, 4);
  a.data = {1.5, -0.0, 1e-310, 3.141592653589793, -2.5e300, 7.0};
  b.data = {0.0, -1.0, 4.9406564584124654e-324, 42.0};
  StateDict sd{{"layer.w", &a}, {"layer.b", &b}};
  std::map<std::string, std::string> counters{{"iteration", "17"}, {"adam_t", "17"}};
  nlohmann::json cfg{{"kind", "swap"}, {"d", 3}};
  const std::string prefix = (dir / "model").string();
  swapvae::save_checkpoint(prefix, sd, counters, cfg);

  Checkpoint ck = swapvae::load_checkpoint(prefix);
  REQUIRE(ck.tensors.size() == 2);
  CHECK(ck.model_config.at("kind") == "swap");
  CHECK(swapvae::counter_u64(ck, "iteration") == 17);

  Matrix a2(2, 3), b2(1, 4);
  StateDict sd2{{"layer.w", &a2}, {"layer.b", &b2}};
  swapvae::restore_state(ck, sd2);
  CHECK(std::memcmp(a.data.data(), a2.data.data(), a.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(b.data.data(), b2.data.data(), b.size() * sizeof(double)) == 0);
}

TEST_CASE("checkpoint save is deterministic byte for byte") {
  auto dir = temp_dir("ckpt_det");
  Matrix a(3, 3);
  for (std::size_t i = 0; i < a.size(); ++i) a.data[i] = double(i) * 0.37 - 1.0;
  StateDict sd{{"w", &a}};
  std::map<std::string, std::string> counters{{"iteration", "5"}, {"adam_t", "5"}};
  swapvae::save_checkpoint((dir / "one").string(), sd, counters, {{"k", 1}});
  swapvae::save_checkpoint((dir / "two").string(), sd, counters, {{"k", 1}});
  CHECK(swapvae::sha256_file((dir / "one.bin").string()) ==
        swapvae::sha256_file((dir / "two.bin").string()));
  CHECK(swapvae::sha256_file((dir / "one.json").string()) ==
        swapvae::sha256_file((dir / "two.json").string()));
}

TEST_CASE("checkpoint rejects corruption and shape mismatches") {
  auto dir = temp_dir("ckpt_bad");
  Matrix a(2, 2);
  a.data = {1, 2, 3, 4};
  StateDict sd{{"w", &a}};
  const std::string prefix = (dir / "m").string();
  swapvae::save_checkpoint(prefix, sd, {{"iteration", "0"}}, {});

  SECTION("missing file") {
    CHECK_THROWS_AS(swapvae::load_checkpoint((dir / "absent").string()), swapvae::data_error);
  }
  SECTION("truncated payload") {
    auto path = prefix + ".bin";
    auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size - 9);
    CHECK_THROWS_AS(swapvae::load_checkpoint(prefix), swapvae::data_error);
  }
  SECTION("unknown format tag") {
    std::ifstream in(prefix + ".json");
    nlohmann::json manifest;
    in >> manifest;
    in.close();
    manifest["format"] = "swapvae-ckpt-999";
    std::ofstream out(prefix + ".json", std::ios::trunc);
    out << manifest.dump(2) << "\n";
    out.close();
    CHECK_THROWS_AS(swapvae::load_checkpoint(prefix), swapvae::data_error);
  }
  SECTION("restore into a different shape") {
    Checkpoint ck = swapvae::load_checkpoint(prefix);
    Matrix wrong(3, 2);
    StateDict sd2{{"w", &wrong}};
    CHECK_THROWS_AS(swapvae::restore_state(ck, sd2), swapvae::data_error);
  }
  SECTION("restore with a missing tensor name") {
    Checkpoint ck = swapvae::load_checkpoint(prefix);
    Matrix other(2, 2);
    StateDict sd2{{"unknown", &other}};
    CHECK_THROWS_AS(swapvae::restore_state(ck, sd2), swapvae::data_error);
  }
}

TEST_CASE("manifest verifies intact runs and flags tampering") {
  auto dir = temp_dir("manifest");
  write_file(dir / "a.csv", "trial_id,time_bin\n1,0\n");
  write_file(dir / "b.json", "{}\n");

  swapvae::RunManifest man(nlohmann::json{{"run", "test"}});
  man.add_file((dir / "a.csv").string());
  man.add_file((dir / "b.json").string());
  { auto t = man.time_stage("train"); }
  const std::string mpath = (dir / "manifest.json").string();
  man.write(mpath);

  CHECK_NOTHROW(swapvae::verify_manifest(mpath));

  SECTION("modified file fails with its name in the message") {
    write_file(dir / "a.csv", "trial_id,time_bin\n1,1\n");
    try {
      swapvae::verify_manifest(mpath);
      FAIL("expected digest mismatch");
    } catch (const swapvae::data_error& e) {
      CHECK(std::string(e.what()).find("a.csv") != std::string::npos);
    }
  }
  SECTION("missing file fails") {
    std::filesystem::remove(dir / "b.json");
    CHECK_THROWS_AS(swapvae::verify_manifest(mpath), swapvae::data_error);
  }
}
