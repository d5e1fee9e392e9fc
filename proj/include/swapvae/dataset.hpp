#pragma once

// Binned spike-count datasets: construction from spike times, CSV
// persistence with exact numeric round trip, static-neuron filtering, and
// shuffled train/test splitting.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "swapvae/errors.hpp"
#include "swapvae/matrix.hpp"
#include "swapvae/rng.hpp"

namespace swapvae {

struct BinnedDataset {
  Matrix X;                       // n x d counts (reals allowed, >= 0)
  std::vector<int> y_dir;         // direction label per row, 0..l-1
  std::vector<int> y_time;        // time-bin index per row
  std::vector<int64_t> trial_id;  // per row; rows of a trial are contiguous
  int l = 0;                      // number of direction classes
  double bin_width_ms = 0.0;

  size_t n() const { return X.rows; }
  size_t d() const { return X.cols; }
  int t_span() const {
    int t = 0;
    for (int v : y_time) t = std::max(t, v + 1);
    return t;
  }

  void validate() const {
    if (X.rows == 0 || X.cols == 0) throw data_error("dataset is empty");
    if (y_dir.size() != X.rows || y_time.size() != X.rows || trial_id.size() != X.rows)
      throw data_error("dataset label arrays disagree with row count");
    if (l < 1) throw data_error("dataset needs at least one direction class");
    std::vector<int64_t> seen;
    for (size_t i = 0; i < X.rows; ++i) {
      if (y_dir[i] < 0 || y_dir[i] >= l)
        throw data_error("direction label out of range at row " + std::to_string(i));
      if (y_time[i] < 0) throw data_error("negative time bin at row " + std::to_string(i));
      if (i > 0 && trial_id[i] != trial_id[i - 1]) {
        if (std::find(seen.begin(), seen.end(), trial_id[i]) != seen.end())
          throw data_error("trial rows not contiguous: trial " + std::to_string(trial_id[i]));
        seen.push_back(trial_id[i - 1]);
      } else if (i > 0 && y_time[i] != y_time[i - 1] + 1) {
        throw data_error("time bins not consecutive within trial " +
                         std::to_string(trial_id[i]));
      }
    }
    for (double v : X.data)
      if (!(v >= 0.0)) throw data_error("negative or non-finite count in dataset");
  }
};

struct SplitIndex {
  std::vector<size_t> train_rows, test_rows;
};

// One trial's raw spikes: one vector of spike times (seconds) per neuron.
struct TrialSpikes {
  int64_t trial_id = 0;
  int direction = 0;
  std::vector<std::vector<double>> spikes_per_neuron;
};

inline BinnedDataset bin_spike_times(const std::vector<TrialSpikes>& trials,
                                     double bin_width_ms = 100.0, int max_bins = 9) {
  if (trials.empty()) throw data_error("no trials to bin");
  if (bin_width_ms <= 0) throw config_error("bin width must be positive");
  if (max_bins < 1) throw config_error("max_bins must be >= 1");
  const size_t d = trials[0].spikes_per_neuron.size();
  if (d == 0) throw data_error("trials carry no neurons");
  const double bin_s = bin_width_ms / 1000.0;

  BinnedDataset ds;
  ds.X = Matrix(trials.size() * static_cast<size_t>(max_bins), d);
  ds.bin_width_ms = bin_width_ms;
  size_t row0 = 0;
  for (const auto& tr : trials) {
    if (tr.spikes_per_neuron.size() != d)
      throw data_error("neuron count differs across trials");
    for (size_t j = 0; j < d; ++j)
      for (double t : tr.spikes_per_neuron[j]) {
        if (t < 0) throw data_error("negative spike time in trial " +
                                    std::to_string(tr.trial_id));
        // right-open bins [k*w, (k+1)*w)
        auto bin = static_cast<long>(std::floor(t / bin_s));
        if (bin < max_bins) ds.X(row0 + static_cast<size_t>(bin), j) += 1.0;
      }
    for (int b = 0; b < max_bins; ++b) {
      ds.y_dir.push_back(tr.direction);
      ds.y_time.push_back(b);
      ds.trial_id.push_back(tr.trial_id);
    }
    ds.l = std::max(ds.l, tr.direction + 1);
    row0 += static_cast<size_t>(max_bins);
  }
  ds.validate();
  return ds;
}

// Removes columns whose values are identical across all rows; returns the
// filtered dataset and the removed column indices.
inline std::pair<BinnedDataset, std::vector<size_t>> filter_static_neurons(
    const BinnedDataset& ds) {
  std::vector<size_t> removed, kept;
  for (size_t j = 0; j < ds.d(); ++j) {
    bool static_col = true;
    for (size_t i = 1; i < ds.n() && static_col; ++i)
      static_col = ds.X(i, j) == ds.X(0, j);
    (static_col ? removed : kept).push_back(j);
  }
  if (kept.empty()) throw data_error("all neurons are static; nothing left to model");
  BinnedDataset out = ds;
  out.X = Matrix(ds.n(), kept.size());
  for (size_t i = 0; i < ds.n(); ++i)
    for (size_t j = 0; j < kept.size(); ++j) out.X(i, j) = ds.X(i, kept[j]);
  return {std::move(out), std::move(removed)};
}

inline SplitIndex train_test_split(size_t n_rows, double fraction, Rng& rng) {
  if (n_rows < 2) throw data_error("need at least 2 rows to split");
  if (!(fraction > 0.0 && fraction < 1.0))
    throw config_error("split fraction must lie in (0, 1)");
  std::vector<size_t> idx(n_rows);
  for (size_t i = 0; i < n_rows; ++i) idx[i] = i;
  rng.shuffle(idx);
  const auto n_train = static_cast<size_t>(std::llround(fraction * double(n_rows)));
  SplitIndex s;
  s.train_rows.assign(idx.begin(), idx.begin() + static_cast<long>(n_train));
  s.test_rows.assign(idx.begin() + static_cast<long>(n_train), idx.end());
  return s;
}

inline SplitIndex train_test_split(const BinnedDataset& ds, double fraction, Rng& rng) {
  return train_test_split(ds.n(), fraction, rng);
}

namespace detail {
inline std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw data_error("failed to format numeric value");
  return std::string(buf, p);
}

inline double parse_double(const std::string& cell, size_t line_no) {
  double v = 0;
  auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || p != cell.data() + cell.size())
    throw data_error("non-numeric cell '" + cell + "' at line " + std::to_string(line_no));
  return v;
}

inline long long parse_int(const std::string& cell, size_t line_no) {
  long long v = 0;
  auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || p != cell.data() + cell.size())
    throw data_error("non-integer cell '" + cell + "' at line " + std::to_string(line_no));
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  size_t start = 0;
  while (true) {
    size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return cells;
}
}  // namespace detail

inline std::string csv_header(size_t d) {
  std::string h = "trial_id,time_bin,direction";
  for (size_t j = 0; j < d; ++j) h += ",n" + std::to_string(j);
  return h;
}

// Writes the dataset CSV plus a "<path>.json" sidecar carrying bin_width_ms,
// l, and a provenance note. Numeric cells use the shortest representation
// that round-trips exactly.
inline void save_csv(const BinnedDataset& ds, const std::string& path,
                     const std::string& provenance = "saved by data-io") {
  ds.validate();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw data_error("cannot write dataset: " + path);
  out << csv_header(ds.d()) << "\n";
  for (size_t i = 0; i < ds.n(); ++i) {
    out << ds.trial_id[i] << ',' << ds.y_time[i] << ',' << ds.y_dir[i];
    for (size_t j = 0; j < ds.d(); ++j) out << ',' << detail::format_double(ds.X(i, j));
    out << '\n';
  }
  out.close();
  if (!out) throw data_error("short write on dataset: " + path);
  nlohmann::json sidecar = {{"bin_width_ms", ds.bin_width_ms},
                            {"l", ds.l},
                            {"provenance", provenance}};
  std::ofstream sc(path + ".json", std::ios::trunc);
  if (!sc) throw data_error("cannot write dataset sidecar: " + path + ".json");
  sc << sidecar.dump(2) << "\n";
}

inline BinnedDataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open dataset: " + path);
  std::string line;
  if (!std::getline(in, line)) throw data_error("empty dataset file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = detail::split_csv_line(line);
  if (header.size() < 4 || header[0] != "trial_id" || header[1] != "time_bin" ||
      header[2] != "direction")
    throw data_error("unexpected CSV header in " + path);
  const size_t d = header.size() - 3;
  for (size_t j = 0; j < d; ++j)
    if (header[3 + j] != "n" + std::to_string(j))
      throw data_error("unexpected neuron column '" + header[3 + j] + "' in " + path);

  BinnedDataset ds;
  std::vector<double> values;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != 3 + d)
      throw data_error("expected " + std::to_string(3 + d) + " cells, got " +
                       std::to_string(cells.size()) + " at line " + std::to_string(line_no));
    ds.trial_id.push_back(detail::parse_int(cells[0], line_no));
    ds.y_time.push_back(static_cast<int>(detail::parse_int(cells[1], line_no)));
    ds.y_dir.push_back(static_cast<int>(detail::parse_int(cells[2], line_no)));
    for (size_t j = 0; j < d; ++j) {
      double v = detail::parse_double(cells[3 + j], line_no);
      if (!(v >= 0.0))
        throw data_error("negative count at line " + std::to_string(line_no));
      values.push_back(v);
    }
  }
  if (values.empty()) throw data_error("dataset has no rows: " + path);
  ds.X = Matrix(values.size() / d, d);
  ds.X.data = std::move(values);

  std::ifstream sc(path + ".json");
  if (sc) {
    nlohmann::json sidecar;
    try {
      sc >> sidecar;
    } catch (const nlohmann::json::exception& e) {
      throw data_error("malformed sidecar " + path + ".json: " + std::string(e.what()));
    }
    ds.bin_width_ms = sidecar.value("bin_width_ms", 0.0);
    ds.l = sidecar.value("l", 0);
  }
  if (ds.l == 0) {
    for (int v : ds.y_dir) ds.l = std::max(ds.l, v + 1);
  }
  ds.validate();
  return ds;
}

}  // namespace swapvae
