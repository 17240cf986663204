#pragma once

// Multi-view multivariate time series: in-memory model, on-disk format,
// length alignment and train/test splitting.
//
// On-disk layout of a dataset directory:
//   manifest.json  {"views": V, "samples": [...], "labels": {id: label},
//                   "view_files": [...], "groups": {id: group} (optional)}
//   view_<v>.csv   long format, header "sample_id,channel,t,value"

#include <mvtl/error.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace mvtl {

/// One channel of observations, X = [x_1 ... x_T].
using Series = std::vector<double>;

/// d channels of common length m.
struct MultivariateSeries {
  std::vector<Series> channels;

  MultivariateSeries() = default;
  explicit MultivariateSeries(std::vector<Series> ch) : channels(std::move(ch)) {}

  std::size_t channel_count() const { return channels.size(); }
  std::size_t length() const { return channels.empty() ? 0 : channels.front().size(); }
  std::span<const double> channel(std::size_t k) const { return channels.at(k); }

  bool operator==(const MultivariateSeries&) const = default;
};

/// All N samples of one view.
struct View {
  std::vector<MultivariateSeries> samples;

  std::size_t channel_count() const { return samples.empty() ? 0 : samples.front().channel_count(); }

  /// True when every sample has the same length.
  bool aligned() const {
    return std::all_of(samples.begin(), samples.end(),
                       [&](const auto& s) { return s.length() == samples.front().length(); });
  }

  /// Common length m_v; throws when the view is not aligned.
  std::size_t length() const {
    if (samples.empty()) return 0;
    if (!aligned()) throw Error("view is not length-aligned");
    return samples.front().length();
  }

  bool operator==(const View&) const = default;
};

/// V views of the same N labelled samples.
struct MultiViewDataset {
  std::vector<std::string> sample_ids;
  std::vector<std::size_t> labels;        // index into class_names
  std::vector<std::string> class_names;   // sorted, unique
  std::vector<std::string> groups;        // empty, or one group id per sample
  std::vector<View> views;

  std::size_t size() const { return sample_ids.size(); }
  std::size_t view_count() const { return views.size(); }
  std::size_t class_count() const { return class_names.size(); }

  bool operator==(const MultiViewDataset&) const = default;

  /// Checks every structural invariant; throws Error naming the first violation.
  void validate() const;
};

inline void MultiViewDataset::validate() const {
  const std::size_t n = sample_ids.size();
  if (views.size() < 2) throw Error("dataset needs at least 2 views, got " + std::to_string(views.size()));
  if (class_names.size() < 2) throw Error("dataset needs at least 2 classes, got " + std::to_string(class_names.size()));
  if (labels.size() != n) throw Error("label count does not match sample count");
  if (!groups.empty() && groups.size() != n) throw Error("group count does not match sample count");
  std::set<std::string> seen;
  for (const auto& id : sample_ids) {
    if (!seen.insert(id).second) throw Error("duplicate sample_id '" + id + "'");
  }
  for (std::size_t label : labels) {
    if (label >= class_names.size()) throw Error("label index out of range");
  }
  for (std::size_t v = 0; v < views.size(); ++v) {
    const auto& view = views[v];
    if (view.samples.size() != n) {
      throw Error("view " + std::to_string(v) + " holds " + std::to_string(view.samples.size()) +
                  " samples, expected " + std::to_string(n));
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto& s = view.samples[i];
      if (s.channel_count() == 0) throw Error("view " + std::to_string(v) + " sample '" + sample_ids[i] + "' has no channels");
      if (s.channel_count() != view.channel_count()) {
        throw Error("view " + std::to_string(v) + " sample '" + sample_ids[i] + "' has a different channel count");
      }
      for (const auto& ch : s.channels) {
        if (ch.size() != s.length()) {
          throw Error("view " + std::to_string(v) + " sample '" + sample_ids[i] + "' has channels of unequal length");
        }
        if (ch.empty()) throw Error("view " + std::to_string(v) + " sample '" + sample_ids[i] + "' is empty");
        for (double x : ch) {
          if (!std::isfinite(x)) throw Error("view " + std::to_string(v) + " sample '" + sample_ids[i] + "' has a non-finite value");
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// I/O

namespace detail {

inline std::string format_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc()) throw Error("cannot format floating-point value");
  return std::string(buf, ptr);
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

// One view file parsed into samples indexed like `sample_ids`.
inline View read_view_csv(const std::filesystem::path& path, const std::vector<std::string>& sample_ids,
                          const std::unordered_map<std::string, std::size_t>& index) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open view file " + path.string());
  const std::string file = path.filename().string();

  // per sample -> per channel -> (t, value)
  std::vector<std::map<std::size_t, std::vector<std::pair<std::size_t, double>>>> cells(sample_ids.size());

  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw Error(file + ": empty file");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "sample_id,channel,t,value") {
    throw Error(file + ":1: expected header 'sample_id,channel,t,value'");
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto where = file + ":" + std::to_string(line_no);
    auto fields = split_csv_line(line);
    if (fields.size() != 4) throw Error(where + ": expected 4 fields, got " + std::to_string(fields.size()));
    auto it = index.find(std::string(fields[0]));
    if (it == index.end()) throw Error(where + ": unknown sample_id '" + std::string(fields[0]) + "'");
    std::size_t channel = 0, t = 0;
    double value = 0.0;
    if (!parse_number(fields[1], channel)) throw Error(where + ": bad channel index '" + std::string(fields[1]) + "'");
    if (!parse_number(fields[2], t)) throw Error(where + ": bad timestamp index '" + std::string(fields[2]) + "'");
    if (!parse_number(fields[3], value)) throw Error(where + ": bad value '" + std::string(fields[3]) + "'");
    if (!std::isfinite(value)) throw Error(where + ": non-finite value '" + std::string(fields[3]) + "'");
    cells[it->second][channel].emplace_back(t, value);
  }

  View view;
  view.samples.reserve(sample_ids.size());
  for (std::size_t i = 0; i < sample_ids.size(); ++i) {
    auto& by_channel = cells[i];
    if (by_channel.empty()) throw Error(file + ": no observations for sample '" + sample_ids[i] + "'");
    MultivariateSeries s;
    std::size_t expected_channel = 0;
    for (auto& [channel, obs] : by_channel) {
      if (channel != expected_channel) {
        throw Error(file + ": sample '" + sample_ids[i] + "' is missing channel " + std::to_string(expected_channel));
      }
      ++expected_channel;
      std::sort(obs.begin(), obs.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      Series values;
      values.reserve(obs.size());
      for (std::size_t k = 0; k < obs.size(); ++k) {
        if (obs[k].first != k) {
          if (k > 0 && obs[k].first == obs[k - 1].first) {
            throw Error(file + ": duplicate observation (" + sample_ids[i] + ", " + std::to_string(channel) + ", " +
                        std::to_string(obs[k].first) + ")");
          }
          throw Error(file + ": sample '" + sample_ids[i] + "' channel " + std::to_string(channel) +
                      " is missing timestamp " + std::to_string(k));
        }
        values.push_back(obs[k].second);
      }
      if (!s.channels.empty() && values.size() != s.length()) {
        throw Error(file + ": sample '" + sample_ids[i] + "' has channels of unequal length");
      }
      s.channels.push_back(std::move(values));
    }
    if (!view.samples.empty() && s.channel_count() != view.samples.front().channel_count()) {
      throw Error(file + ": sample '" + sample_ids[i] + "' has " + std::to_string(s.channel_count()) +
                  " channels, expected " + std::to_string(view.samples.front().channel_count()));
    }
    view.samples.push_back(std::move(s));
  }
  return view;
}

}  // namespace detail

/// Reads a dataset directory (manifest.json plus one CSV per view).
inline MultiViewDataset load_dataset(const std::filesystem::path& root) {
  const auto manifest_path = root / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) throw Error("missing manifest: " + manifest_path.string());
  const auto manifest = detail::read_json_file(manifest_path);

  MultiViewDataset ds;
  std::vector<std::string> view_files;
  std::map<std::string, std::string> label_of;
  try {
    const auto view_count = manifest.at("views").get<std::size_t>();
    ds.sample_ids = manifest.at("samples").get<std::vector<std::string>>();
    label_of = manifest.at("labels").get<std::map<std::string, std::string>>();
    view_files = manifest.at("view_files").get<std::vector<std::string>>();
    if (view_files.size() != view_count) {
      throw Error("manifest.json: 'views' is " + std::to_string(view_count) + " but " +
                  std::to_string(view_files.size()) + " view_files are listed");
    }
    if (manifest.contains("groups")) {
      auto group_of = manifest.at("groups").get<std::map<std::string, std::string>>();
      for (const auto& [id, g] : group_of) {
        if (std::find(ds.sample_ids.begin(), ds.sample_ids.end(), id) == ds.sample_ids.end()) {
          throw Error("manifest.json: group for unknown sample_id '" + id + "'");
        }
      }
      for (const auto& id : ds.sample_ids) {
        auto it = group_of.find(id);
        if (it == group_of.end()) throw Error("manifest.json: no group for sample '" + id + "'");
        ds.groups.push_back(it->second);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("manifest.json: " + std::string(e.what()));
  }

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < ds.sample_ids.size(); ++i) {
    if (!index.emplace(ds.sample_ids[i], i).second) {
      throw Error("manifest.json: duplicate sample_id '" + ds.sample_ids[i] + "'");
    }
  }
  for (const auto& [id, label] : label_of) {
    if (!index.contains(id)) throw Error("manifest.json: label for unknown sample_id '" + id + "'");
  }
  std::set<std::string> names;
  for (const auto& id : ds.sample_ids) {
    auto it = label_of.find(id);
    if (it == label_of.end()) throw Error("manifest.json: no label for sample '" + id + "'");
    names.insert(it->second);
  }
  ds.class_names.assign(names.begin(), names.end());
  for (const auto& id : ds.sample_ids) {
    const auto& label = label_of.at(id);
    ds.labels.push_back(static_cast<std::size_t>(
        std::lower_bound(ds.class_names.begin(), ds.class_names.end(), label) - ds.class_names.begin()));
  }

  for (const auto& f : view_files) ds.views.push_back(detail::read_view_csv(root / f, ds.sample_ids, index));
  ds.validate();
  return ds;
}

/// Writes `dataset` in the directory format read by load_dataset. Values
/// use the shortest representation that round-trips exactly.
inline void emit_dataset(const MultiViewDataset& dataset, const std::filesystem::path& root) {
  dataset.validate();
  for (const auto& id : dataset.sample_ids) {
    if (id.find_first_of(",\n\r") != std::string::npos) throw Error("sample_id '" + id + "' cannot be written to CSV");
  }
  std::filesystem::create_directories(root);

  nlohmann::json manifest;
  manifest["views"] = dataset.view_count();
  manifest["samples"] = dataset.sample_ids;
  nlohmann::json labels = nlohmann::json::object();
  for (std::size_t i = 0; i < dataset.size(); ++i) labels[dataset.sample_ids[i]] = dataset.class_names[dataset.labels[i]];
  manifest["labels"] = labels;
  std::vector<std::string> files;
  for (std::size_t v = 0; v < dataset.view_count(); ++v) files.push_back("view_" + std::to_string(v) + ".csv");
  manifest["view_files"] = files;
  if (!dataset.groups.empty()) {
    nlohmann::json groups = nlohmann::json::object();
    for (std::size_t i = 0; i < dataset.size(); ++i) groups[dataset.sample_ids[i]] = dataset.groups[i];
    manifest["groups"] = groups;
  }
  {
    std::ofstream out(root / "manifest.json", std::ios::binary);
    if (!out) throw Error("cannot write " + (root / "manifest.json").string());
    out << manifest.dump(2) << '\n';
  }

  for (std::size_t v = 0; v < dataset.view_count(); ++v) {
    std::ofstream out(root / files[v], std::ios::binary);
    if (!out) throw Error("cannot write " + (root / files[v]).string());
    out << "sample_id,channel,t,value\n";
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const auto& s = dataset.views[v].samples[i];
      for (std::size_t k = 0; k < s.channel_count(); ++k) {
        for (std::size_t t = 0; t < s.length(); ++t) {
          out << dataset.sample_ids[i] << ',' << k << ',' << t << ',' << detail::format_double(s.channels[k][t]) << '\n';
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Alignment

enum class AlignmentStrategy { zero_pad, last_value_pad, truncate_to_min, average_length };

inline std::string to_string(AlignmentStrategy s) {
  switch (s) {
    case AlignmentStrategy::zero_pad: return "zero-pad";
    case AlignmentStrategy::last_value_pad: return "last-value-pad";
    case AlignmentStrategy::truncate_to_min: return "truncate-to-min";
    case AlignmentStrategy::average_length: return "average-length";
  }
  return "?";
}

inline AlignmentStrategy parse_alignment(std::string_view name) {
  if (name == "zero-pad") return AlignmentStrategy::zero_pad;
  if (name == "last-value-pad") return AlignmentStrategy::last_value_pad;
  if (name == "truncate-to-min") return AlignmentStrategy::truncate_to_min;
  if (name == "average-length") return AlignmentStrategy::average_length;
  throw Error("unknown alignment strategy '" + std::string(name) + "'");
}

namespace detail {

inline void resize_series(Series& x, std::size_t length, double fill) {
  if (x.size() >= length) {
    x.resize(length);
  } else {
    x.resize(length, fill);
  }
}

}  // namespace detail

/// Brings every sample of each view to one common length. Views are
/// aligned independently, so different views may keep different lengths.
inline MultiViewDataset align_lengths(MultiViewDataset dataset, AlignmentStrategy strategy) {
  for (std::size_t v = 0; v < dataset.view_count(); ++v) {
    auto& samples = dataset.views[v].samples;
    if (samples.empty()) continue;
    std::size_t lo = samples.front().length(), hi = lo, total = 0;
    for (const auto& s : samples) {
      lo = std::min(lo, s.length());
      hi = std::max(hi, s.length());
      total += s.length();
    }
    std::size_t target = hi;
    switch (strategy) {
      case AlignmentStrategy::zero_pad:
      case AlignmentStrategy::last_value_pad:
        target = hi;
        break;
      case AlignmentStrategy::truncate_to_min:
        if (lo == 0) throw Error("cannot truncate view " + std::to_string(v) + ": its shortest series is empty");
        target = lo;
        break;
      case AlignmentStrategy::average_length:
        // round half up
        target = (2 * total + samples.size()) / (2 * samples.size());
        if (target == 0) throw Error("average length of view " + std::to_string(v) + " is zero");
        break;
    }
    for (auto& s : samples) {
      for (auto& ch : s.channels) {
        double fill = 0.0;
        if (strategy == AlignmentStrategy::last_value_pad && !ch.empty()) fill = ch.back();
        detail::resize_series(ch, target, fill);
      }
    }
  }
  return dataset;
}

/// Z-scores every channel of every view over all samples and timestamps.
/// Constant channels are only centred.
inline MultiViewDataset standardize_channels(MultiViewDataset dataset) {
  for (auto& view : dataset.views) {
    for (std::size_t k = 0; k < view.channel_count(); ++k) {
      double sum = 0.0, sq = 0.0;
      std::size_t count = 0;
      for (const auto& s : view.samples) {
        for (double x : s.channels[k]) {
          sum += x;
          ++count;
        }
      }
      const double mean = sum / static_cast<double>(count);
      for (const auto& s : view.samples) {
        for (double x : s.channels[k]) sq += (x - mean) * (x - mean);
      }
      const double sd = std::sqrt(sq / static_cast<double>(count));
      const double scale = sd > 0.0 ? 1.0 / sd : 1.0;
      for (auto& s : view.samples) {
        for (double& x : s.channels[k]) x = (x - mean) * scale;
      }
    }
  }
  return dataset;
}

// ---------------------------------------------------------------------------
// Splitting

struct SplitSpec {
  enum class Mode { fraction, by_group };

  Mode mode = Mode::fraction;
  double train_fraction = 0.7;
  /// sample_id -> group id; when empty the dataset's own groups are used.
  std::map<std::string, std::string> group_assignment;
  std::set<std::string> train_groups;
  unsigned long long seed = 0;
};

/// Samples at `indices`, in that order, across all views.
inline MultiViewDataset subset(const MultiViewDataset& dataset, std::span<const std::size_t> indices) {
  MultiViewDataset out;
  out.class_names = dataset.class_names;
  out.views.resize(dataset.view_count());
  for (std::size_t i : indices) {
    out.sample_ids.push_back(dataset.sample_ids.at(i));
    out.labels.push_back(dataset.labels.at(i));
    if (!dataset.groups.empty()) out.groups.push_back(dataset.groups.at(i));
    for (std::size_t v = 0; v < dataset.view_count(); ++v) out.views[v].samples.push_back(dataset.views[v].samples.at(i));
  }
  return out;
}

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Index-level split; both lists are in ascending sample order.
inline SplitIndices split_indices(const MultiViewDataset& dataset, const SplitSpec& spec) {
  const std::size_t n = dataset.size();
  SplitIndices out;
  if (spec.mode == SplitSpec::Mode::fraction) {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) throw Error("train_fraction must lie in (0, 1)");
    if (n < 2) throw Error("cannot split fewer than 2 samples");
    auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(n)));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(spec.seed);
    std::shuffle(order.begin(), order.end(), rng);
    out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  } else {
    std::vector<std::string> group_of(n);
    if (!spec.group_assignment.empty()) {
      for (std::size_t i = 0; i < n; ++i) {
        auto it = spec.group_assignment.find(dataset.sample_ids[i]);
        if (it == spec.group_assignment.end()) throw Error("no group for sample '" + dataset.sample_ids[i] + "'");
        group_of[i] = it->second;
      }
    } else if (dataset.groups.size() == n) {
      group_of = dataset.groups;
    } else {
      throw Error("by-group split needs group assignments");
    }
    std::set<std::string> present(group_of.begin(), group_of.end());
    for (const auto& g : spec.train_groups) {
      if (!present.contains(g)) throw Error("train group '" + g + "' is referenced by no sample");
    }
    for (std::size_t i = 0; i < n; ++i) {
      (spec.train_groups.contains(group_of[i]) ? out.train : out.test).push_back(i);
    }
  }
  if (out.train.empty() || out.test.empty()) throw Error("split produced an empty partition");
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

inline std::pair<MultiViewDataset, MultiViewDataset> split_dataset(const MultiViewDataset& dataset, const SplitSpec& spec) {
  auto idx = split_indices(dataset, spec);
  return {subset(dataset, idx.train), subset(dataset, idx.test)};
}

}  // namespace mvtl
