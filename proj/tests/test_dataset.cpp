#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "swapvae/dataset.hpp"
#include "swapvae/rng.hpp"

using swapvae::BinnedDataset;
using swapvae::Matrix;
using swapvae::Rng;
using swapvae::TrialSpikes;

namespace {

std::filesystem::path temp_dir(const std::string& tag) {
  auto p = std::filesystem::temp_directory_path() / ("swapvae_test_" + tag);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

BinnedDataset toy_dataset() {
  BinnedDataset ds;
  ds.X = Matrix(8, 3);
  for (std::size_t i = 0; i < ds.X.size(); ++i) ds.X.data[i] = double((i * 7) % 5);
  ds.y_dir = {0, 0, 0, 0, 1, 1, 1, 1};
  ds.y_time = {0, 1, 2, 3, 0, 1, 2, 3};
  ds.trial_id = {0, 0, 0, 0, 1, 1, 1, 1};
  ds.l = 2;
  ds.bin_width_ms = 100;
  ds.validate();
  return ds;
}

}  // namespace

TEST_CASE("binning counts spikes into right-open 100ms bins") {
  TrialSpikes tr;
  tr.trial_id = 0;
  tr.direction = 0;
  tr.spikes_per_neuron = {{0.05, 0.12, 0.31}};
  BinnedDataset ds = swapvae::bin_spike_times({tr}, 100, 5);
  REQUIRE(ds.n() == 5);
  REQUIRE(ds.d() == 1);
  std::vector<double> want = {1, 1, 0, 1, 0};
  for (std::size_t i = 0; i < 5; ++i) CHECK(ds.X(i, 0) == want[i]);
  CHECK(ds.y_time == std::vector<int>{0, 1, 2, 3, 4});
}

TEST_CASE("binning boundary and truncation conventions") {
  SECTION("spike exactly at 0.1 s lands in bin 1") {
    TrialSpikes tr{0, 0, {{0.1}}};
    BinnedDataset ds = swapvae::bin_spike_times({tr}, 100, 3);
    CHECK(ds.X(0, 0) == 0.0);
    CHECK(ds.X(1, 0) == 1.0);
  }
  SECTION("empty trial yields all-zero bins") {
    TrialSpikes tr{0, 0, {{}}};
    BinnedDataset ds = swapvae::bin_spike_times({tr}, 100, 4);
    for (double v : ds.X.data) CHECK(v == 0.0);
  }
  SECTION("spikes beyond max_bins are dropped, in-window total conserved") {
    TrialSpikes tr{0, 0, {{0.01, 0.02, 0.15, 0.95}}};
    BinnedDataset ds = swapvae::bin_spike_times({tr}, 100, 3);
    double total = 0;
    for (double v : ds.X.data) total += v;
    CHECK(total == 3.0);
  }
  SECTION("negative spike time is rejected") {
    TrialSpikes tr{0, 0, {{-0.5}}};
    CHECK_THROWS_AS(swapvae::bin_spike_times({tr}, 100, 3), swapvae::data_error);
  }
}

TEST_CASE("static neuron filter removes zero-variance columns and is idempotent") {
  BinnedDataset ds = toy_dataset();
  for (std::size_t i = 0; i < ds.n(); ++i) ds.X(i, 1) = 3.0;  // constant column

  auto [filtered, removed] = swapvae::filter_static_neurons(ds);
  CHECK(filtered.d() == 2);
  CHECK(removed == std::vector<std::size_t>{1});
  for (std::size_t i = 0; i < ds.n(); ++i) {
    CHECK(filtered.X(i, 0) == ds.X(i, 0));
    CHECK(filtered.X(i, 1) == ds.X(i, 2));
  }

  auto [again, removed2] = swapvae::filter_static_neurons(filtered);
  CHECK(removed2.empty());
  CHECK(again.X.data == filtered.X.data);

  BinnedDataset all_static = toy_dataset();
  all_static.X.fill(2.0);
  CHECK_THROWS_AS(swapvae::filter_static_neurons(all_static), swapvae::data_error);
}

TEST_CASE("train/test split is seeded, disjoint, and covering") {
  Rng rng(9);
  auto s = swapvae::train_test_split(std::size_t{10}, 0.8, rng);
  CHECK(s.train_rows.size() == 8);
  CHECK(s.test_rows.size() == 2);

  Rng r1(42), r2(42);
  auto a = swapvae::train_test_split(std::size_t{100}, 0.8, r1);
  auto b = swapvae::train_test_split(std::size_t{100}, 0.8, r2);
  CHECK(a.train_rows == b.train_rows);
  CHECK(a.test_rows == b.test_rows);

  for (std::size_t n : {2u, 3u, 17u, 64u, 101u}) {
    Rng r(n);
    auto sp = swapvae::train_test_split(std::size_t{n}, 0.8, r);
    std::set<std::size_t> seen(sp.train_rows.begin(), sp.train_rows.end());
    for (auto row : sp.test_rows) CHECK(seen.insert(row).second);
    CHECK(seen.size() == n);
    CHECK(*seen.rbegin() == n - 1);
    CHECK(double(sp.train_rows.size()) == Catch::Approx(0.8 * double(n)).margin(0.51));
  }

  Rng r(0);
  CHECK_THROWS_AS(swapvae::train_test_split(std::size_t{1}, 0.8, r), swapvae::data_error);
  CHECK_THROWS_AS(swapvae::train_test_split(std::size_t{10}, 1.0, r), swapvae::config_error);
}

TEST_CASE("csv round trip reproduces the dataset exactly") {
  auto dir = temp_dir("csv");
  BinnedDataset ds = toy_dataset();
  ds.X(0, 0) = 0.30000000000000004;  // non-representable decimal exercises exact formatting
  const std::string path = (dir / "ds.csv").string();
  swapvae::save_csv(ds, path);
  BinnedDataset back = swapvae::load_csv(path);
  CHECK(back.X.rows == ds.X.rows);
  CHECK(back.X.data == ds.X.data);
  CHECK(back.y_dir == ds.y_dir);
  CHECK(back.y_time == ds.y_time);
  CHECK(back.trial_id == ds.trial_id);
  CHECK(back.l == ds.l);
  CHECK(back.bin_width_ms == ds.bin_width_ms);
}

TEST_CASE("csv loader reports malformed input with line numbers") {
  auto dir = temp_dir("csv_bad");
  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream out(dir / name);
    out << content;
    return (dir / name).string();
  };

  SECTION("missing neuron column") {
    auto p = write("short.csv", "trial_id,time_bin,direction,n0,n1\n0,0,0,1\n");
    CHECK_THROWS_WITH(swapvae::load_csv(p), Catch::Matchers::ContainsSubstring("line 2"));
  }
  SECTION("non-numeric cell") {
    auto p = write("text.csv", "trial_id,time_bin,direction,n0\n0,0,0,abc\n");
    CHECK_THROWS_WITH(swapvae::load_csv(p), Catch::Matchers::ContainsSubstring("abc"));
  }
  SECTION("negative count") {
    auto p = write("neg.csv", "trial_id,time_bin,direction,n0\n0,0,0,-2\n");
    CHECK_THROWS_AS(swapvae::load_csv(p), swapvae::data_error);
  }
  SECTION("wrong header") {
    auto p = write("hdr.csv", "a,b,c,n0\n0,0,0,1\n");
    CHECK_THROWS_AS(swapvae::load_csv(p), swapvae::data_error);
  }
}
