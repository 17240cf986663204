#pragma once

// End-to-end experiment: score source views on the training split, allocate
// the pretraining budget, pretrain one network across the source views,
// fine-tune and evaluate on the target view; optionally a target-only
// baseline. Repeated with seeds base_seed + r.

#include <mvtl/dataset.hpp>
#include <mvtl/density.hpp>
#include <mvtl/distance.hpp>
#include <mvtl/error.hpp>
#include <mvtl/importance.hpp>
#include <mvtl/nn.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace mvtl {

enum class RunMode { baseline, transfer, both };

inline std::string to_string(RunMode m) {
  switch (m) {
    case RunMode::baseline: return "baseline";
    case RunMode::transfer: return "transfer";
    case RunMode::both: return "both";
  }
  return "?";
}

inline RunMode parse_run_mode(std::string_view name) {
  if (name == "baseline") return RunMode::baseline;
  if (name == "transfer") return RunMode::transfer;
  if (name == "both") return RunMode::both;
  throw Error("unknown mode '" + std::string(name) + "' (expected baseline, transfer or both)");
}

struct ExperimentConfig {
  /// As written in the config file; resolved against `base_dir`.
  std::string dataset;
  std::filesystem::path base_dir;
  std::size_t target_view = 0;
  AlignmentStrategy alignment = AlignmentStrategy::zero_pad;
  bool standardize = false;
  SplitSpec split;
  ScoringSettings scoring;
  std::size_t total_pretrain_epochs = 100;
  std::size_t finetune_epochs = 50;
  /// Replaces the computed allocation (one entry per source view).
  std::optional<std::vector<std::size_t>> forced_epochs;
  nn::NetworkConfig network;
  nn::TrainConfig train;
  bool freeze_conv = false;
  bool shuffle_view_order = false;
  std::size_t repeats = 5;
  std::uint64_t base_seed = 0;
  RunMode mode = RunMode::both;

  std::filesystem::path dataset_path() const {
    const std::filesystem::path p(dataset);
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  }

  void validate() const {
    if (dataset.empty()) throw Error("config: dataset path is required");
    if (repeats == 0) throw Error("config: repeats must be at least 1");
    train.validate();
    if (scoring.sampling.batch_size == 0) throw Error("config: sampling batch_size must be positive");
  }
};

// ---------------------------------------------------------------------------
// Seeds

/// Every random stream of one repeat, derived from base_seed + repeat by
/// fixed offsets.
struct RepeatSeeds {
  std::uint64_t repeat = 0;
  std::uint64_t density = 0;
  std::uint64_t sampling = 0;
  std::uint64_t init = 0;
  std::uint64_t view_order = 0;
  std::uint64_t finetune = 0;
  std::uint64_t pretrain = 0;  // view v uses pretrain + v

  static RepeatSeeds derive(std::uint64_t base_seed, std::size_t r) {
    RepeatSeeds s;
    s.repeat = base_seed + r;
    s.density = s.repeat + 1000;
    s.sampling = s.repeat + 2000;
    s.init = s.repeat + 3000;
    s.view_order = s.repeat + 4000;
    s.finetune = s.repeat + 5000;
    s.pretrain = s.repeat + 6000;
    return s;
  }
};

inline nlohmann::json to_json(const RepeatSeeds& s) {
  return {{"repeat_seed", s.repeat}, {"density", s.density},     {"sampling", s.sampling}, {"init", s.init},
          {"view_order", s.view_order}, {"finetune", s.finetune}, {"pretrain", s.pretrain}};
}

// ---------------------------------------------------------------------------
// Config (de)serialization

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["dataset"] = c.dataset;
  j["target_view"] = c.target_view;
  j["alignment"] = to_string(c.alignment);
  j["standardize"] = c.standardize;
  nlohmann::json split;
  if (c.split.mode == SplitSpec::Mode::fraction) {
    split = {{"mode", "fraction"}, {"train_fraction", c.split.train_fraction}, {"seed", c.split.seed}};
  } else {
    split = {{"mode", "by_group"}, {"train_groups", c.split.train_groups}};
    if (!c.split.group_assignment.empty()) split["group_assignment"] = c.split.group_assignment;
  }
  j["split"] = split;
  j["measure"] = to_string(c.scoring.measure.kind);
  if (c.scoring.measure.dtw.band_radius) j["dtw_band_radius"] = *c.scoring.measure.dtw.band_radius;
  if (c.scoring.measure.sfa) {
    const auto& p = *c.scoring.measure.sfa;
    j["sfa"] = {{"window_length", p.window_length}, {"word_length", p.word_length},
                {"alphabet_size", p.alphabet_size}, {"mean_normalize", p.mean_normalize}};
  }
  j["normalize_distances"] = c.scoring.normalize_distances;
  j["density"] = c.scoring.density.method ? to_string(*c.scoring.density.method) : "auto";
  const auto& bw = c.scoring.density.bandwidth;
  if (bw.kind == BandwidthRule::Kind::fixed) {
    j["kde_bandwidth"] = bw.h;
  } else {
    j["kde_bandwidth"] = bw.kind == BandwidthRule::Kind::silverman ? "silverman" : "scott";
  }
  auto flow = to_json(c.scoring.density.flow);
  flow.erase("seed");
  j["flow"] = flow;
  j["sampling"] = {{"batch_size", c.scoring.sampling.batch_size},
                   {"norm", to_string(c.scoring.sampling.norm)},
                   {"invert_importance", c.scoring.sampling.invert_importance},
                   {"mode", to_string(c.scoring.sampling.mode)}};
  j["total_pretrain_epochs"] = c.total_pretrain_epochs;
  j["finetune_epochs"] = c.finetune_epochs;
  if (c.forced_epochs) j["forced_epochs"] = *c.forced_epochs;
  j["network"] = {{"arch", nn::to_string(c.network.arch)},
                  {"dropout_rate", c.network.dropout_rate},
                  {"kernel_sizes", c.network.kernel_sizes},
                  {"filters", c.network.filters},
                  {"hidden_units", c.network.hidden_units}};
  j["train"] = {{"batch_size", c.train.batch_size},
                {"learning_rate", c.train.adam.learning_rate},
                {"beta1", c.train.adam.beta1},
                {"beta2", c.train.adam.beta2},
                {"epsilon", c.train.adam.epsilon}};
  j["freeze_conv"] = c.freeze_conv;
  j["shuffle_view_order"] = c.shuffle_view_order;
  j["repeats"] = c.repeats;
  j["base_seed"] = c.base_seed;
  j["mode"] = to_string(c.mode);
  return j;
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  try {
    ExperimentConfig c;
    c.base_dir = base_dir;
    c.dataset = j.at("dataset").get<std::string>();
    c.target_view = j.value("target_view", c.target_view);
    if (j.contains("alignment")) c.alignment = parse_alignment(j.at("alignment").get<std::string>());
    c.standardize = j.value("standardize", c.standardize);
    if (j.contains("split")) {
      const auto& s = j.at("split");
      const auto mode = s.value("mode", std::string("fraction"));
      if (mode == "fraction") {
        c.split.mode = SplitSpec::Mode::fraction;
        c.split.train_fraction = s.value("train_fraction", c.split.train_fraction);
        c.split.seed = s.value("seed", c.split.seed);
      } else if (mode == "by_group") {
        c.split.mode = SplitSpec::Mode::by_group;
        c.split.train_groups = s.at("train_groups").get<std::set<std::string>>();
        if (s.contains("group_assignment")) c.split.group_assignment = s.at("group_assignment").get<std::map<std::string, std::string>>();
      } else {
        throw Error("config: unknown split mode '" + mode + "'");
      }
    }
    auto& m = c.scoring.measure;
    if (j.contains("measure")) m.kind = parse_measure(j.at("measure").get<std::string>());
    if (j.contains("dtw_band_radius")) m.dtw.band_radius = j.at("dtw_band_radius").get<std::size_t>();
    if (j.contains("sfa")) {
      const auto& s = j.at("sfa");
      SfaParams p;
      p.window_length = s.value("window_length", p.window_length);
      p.word_length = s.value("word_length", p.word_length);
      p.alphabet_size = s.value("alphabet_size", p.alphabet_size);
      p.mean_normalize = s.value("mean_normalize", p.mean_normalize);
      validate(p);
      m.sfa = p;
    }
    c.scoring.normalize_distances = j.value("normalize_distances", c.scoring.normalize_distances);
    if (j.contains("density")) {
      const auto d = j.at("density").get<std::string>();
      if (d != "auto") c.scoring.density.method = parse_density_method(d);
    }
    if (j.contains("kde_bandwidth")) {
      const auto& b = j.at("kde_bandwidth");
      if (b.is_number()) {
        c.scoring.density.bandwidth = BandwidthRule::fixed(b.get<double>());
      } else {
        const auto rule = b.get<std::string>();
        if (rule == "silverman") c.scoring.density.bandwidth = BandwidthRule::silverman();
        else if (rule == "scott") c.scoring.density.bandwidth = BandwidthRule::scott();
        else throw Error("config: unknown kde_bandwidth '" + rule + "'");
      }
    }
    if (j.contains("flow")) c.scoring.density.flow = flow_config_from_json(j.at("flow"), c.scoring.density.flow);
    if (j.contains("sampling")) {
      const auto& s = j.at("sampling");
      auto& sc = c.scoring.sampling;
      sc.batch_size = s.value("batch_size", sc.batch_size);
      if (s.contains("norm")) sc.norm = parse_norm_kind(s.at("norm").get<std::string>());
      sc.invert_importance = s.value("invert_importance", sc.invert_importance);
      if (s.contains("mode")) sc.mode = parse_sampling_mode(s.at("mode").get<std::string>());
    }
    c.total_pretrain_epochs = j.value("total_pretrain_epochs", c.total_pretrain_epochs);
    c.finetune_epochs = j.value("finetune_epochs", c.finetune_epochs);
    if (j.contains("forced_epochs") && !j.at("forced_epochs").is_null()) {
      c.forced_epochs = j.at("forced_epochs").get<std::vector<std::size_t>>();
    }
    if (j.contains("network")) c.network = nn::network_config_from_json(j.at("network"), c.network);
    if (j.contains("train")) {
      const auto& t = j.at("train");
      c.train.batch_size = t.value("batch_size", c.train.batch_size);
      c.train.adam.learning_rate = t.value("learning_rate", c.train.adam.learning_rate);
      c.train.adam.beta1 = t.value("beta1", c.train.adam.beta1);
      c.train.adam.beta2 = t.value("beta2", c.train.adam.beta2);
      c.train.adam.epsilon = t.value("epsilon", c.train.adam.epsilon);
    }
    c.freeze_conv = j.value("freeze_conv", c.freeze_conv);
    c.shuffle_view_order = j.value("shuffle_view_order", c.shuffle_view_order);
    c.repeats = j.value("repeats", c.repeats);
    c.base_seed = j.value("base_seed", c.base_seed);
    if (j.contains("mode")) c.mode = parse_run_mode(j.at("mode").get<std::string>());
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  auto j = detail::read_json_file(path);
  return experiment_config_from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Data preparation

/// Loaded, aligned, optionally standardized dataset with its split.
struct PreparedData {
  MultiViewDataset full;
  MultiViewDataset train;
  MultiViewDataset test;
};

inline PreparedData prepare_data(const ExperimentConfig& config) {
  PreparedData p;
  p.full = align_lengths(load_dataset(config.dataset_path()), config.alignment);
  if (config.standardize) p.full = standardize_channels(std::move(p.full));
  if (config.target_view >= p.full.view_count()) {
    throw Error("target view " + std::to_string(config.target_view) + " is out of range for " +
                std::to_string(p.full.view_count()) + " views");
  }
  auto idx = split_indices(p.full, config.split);
  p.train = subset(p.full, idx.train);
  p.test = subset(p.full, idx.test);
  return p;
}

inline ScoringSettings scoring_for_repeat(const ExperimentConfig& config, const RepeatSeeds& seeds) {
  ScoringSettings s = config.scoring;
  s.density.flow.seed = seeds.density;
  s.sampling.seed = seeds.sampling;
  return s;
}

/// Scores computed on the training split; epochs replaced by
/// `forced_epochs` when configured.
inline TransferSchedule compute_schedule(const ExperimentConfig& config, const MultiViewDataset& train_data, const RepeatSeeds& seeds) {
  auto schedule = build_schedule(train_data, config.target_view, scoring_for_repeat(config, seeds), config.total_pretrain_epochs);
  if (config.forced_epochs) {
    if (config.forced_epochs->size() != schedule.source_views.size()) {
      throw Error("forced_epochs has " + std::to_string(config.forced_epochs->size()) + " entries for " +
                  std::to_string(schedule.source_views.size()) + " source views");
    }
    schedule.epochs = *config.forced_epochs;
    schedule.total_epochs = std::accumulate(schedule.epochs.begin(), schedule.epochs.end(), std::size_t{0});
  }
  return schedule;
}

inline TransferSchedule compute_schedule(const ExperimentConfig& config, std::size_t repeat = 0) {
  const auto data = prepare_data(config);
  return compute_schedule(config, data.train, RepeatSeeds::derive(config.base_seed, repeat));
}

// ---------------------------------------------------------------------------
// Runs

struct CurveRow {
  std::string mode;
  std::size_t repeat = 0;
  std::size_t epoch = 0;  // cumulative within (mode, repeat)
  std::string phase;
  double loss = 0.0;
  double accuracy = 0.0;
};

struct RunResult {
  double accuracy = 0.0;
  std::vector<CurveRow> curves;
  nn::Network network;
};

namespace detail {

inline nn::NetworkConfig network_for(const ExperimentConfig& config, const MultiViewDataset& data, std::uint64_t init_seed) {
  nn::NetworkConfig n = config.network;
  const auto& target = data.views[config.target_view];
  n.input_channels = target.channel_count();
  n.input_length = target.length();
  n.class_count = data.class_names.size();
  n.seed = init_seed;
  return n;
}

inline void append_curves(std::vector<CurveRow>& rows, const nn::TrainingLog& log, std::string_view mode, std::size_t repeat,
                          const std::string& phase) {
  for (const auto& r : log) {
    const std::size_t epoch = rows.empty() ? 1 : rows.back().epoch + 1;
    rows.push_back({std::string(mode), repeat, epoch, phase, r.loss, r.accuracy});
  }
}

inline void require_shape(const MultiViewDataset& data, std::size_t view, std::size_t target_view) {
  const auto& a = data.views[view];
  const auto& b = data.views[target_view];
  if (a.channel_count() != b.channel_count()) {
    throw Error("view " + std::to_string(view) + " has " + std::to_string(a.channel_count()) + " channels but target view has " +
                std::to_string(b.channel_count()) + "; weight transfer needs equal d");
  }
  if (a.length() != b.length()) {
    throw Error("view " + std::to_string(view) + " has length " + std::to_string(a.length()) + " but target view has " +
                std::to_string(b.length()) + " after alignment; weight transfer needs equal m");
  }
}

}  // namespace detail

/// Pretrains across source views per `schedule`, fine-tunes on the target
/// view and evaluates on the target test split.
inline RunResult run_transfer(const ExperimentConfig& config, const PreparedData& data, const TransferSchedule& schedule,
                              const RepeatSeeds& seeds, std::size_t repeat = 0) {
  for (std::size_t v : schedule.source_views) detail::require_shape(data.full, v, config.target_view);
  RunResult out;
  out.network = nn::init_network(detail::network_for(config, data.full, seeds.init));
  std::vector<std::size_t> order(schedule.source_views.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (config.shuffle_view_order) {
    std::mt19937_64 rng(seeds.view_order);
    std::shuffle(order.begin(), order.end(), rng);
  }
  for (std::size_t i : order) {
    const std::size_t v = schedule.source_views[i];
    nn::TrainConfig tc = config.train;
    tc.seed = seeds.pretrain + v;
    auto log = nn::train(out.network, nn::make_batch(data.train, v), tc, schedule.epochs[i]);
    detail::append_curves(out.curves, log, "transfer", repeat, "pretrain_view_" + std::to_string(v));
  }
  nn::TrainConfig tc = config.train;
  tc.seed = seeds.finetune;
  tc.freeze_features = config.freeze_conv;
  auto log = nn::train(out.network, nn::make_batch(data.train, config.target_view), tc, config.finetune_epochs);
  detail::append_curves(out.curves, log, "transfer", repeat, "finetune");
  out.accuracy = nn::evaluate(out.network, nn::make_batch(data.test, config.target_view));
  return out;
}

/// Target-only training for the fine-tune budget, same seeds as the
/// fine-tune phase of `run_transfer`.
inline RunResult run_baseline(const ExperimentConfig& config, const PreparedData& data, const RepeatSeeds& seeds, std::size_t repeat = 0) {
  RunResult out;
  out.network = nn::init_network(detail::network_for(config, data.full, seeds.init));
  nn::TrainConfig tc = config.train;
  tc.seed = seeds.finetune;
  auto log = nn::train(out.network, nn::make_batch(data.train, config.target_view), tc, config.finetune_epochs);
  detail::append_curves(out.curves, log, "baseline", repeat, "finetune");
  out.accuracy = nn::evaluate(out.network, nn::make_batch(data.test, config.target_view));
  return out;
}

struct ExperimentReport {
  nlohmann::json config;
  std::vector<RepeatSeeds> seeds;
  std::vector<double> baseline_accuracies;
  std::vector<double> transfer_accuracies;
  std::vector<TransferSchedule> schedules;
  std::vector<nlohmann::json> score_documents;
  std::vector<CurveRow> curves;
  /// Seconds per repeat and stage; kept out of the report document so it
  /// stays byte-reproducible.
  std::vector<nlohmann::json> timings;

  bool has_baseline() const { return !baseline_accuracies.empty(); }
  bool has_transfer() const { return !transfer_accuracies.empty(); }
};

inline double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline ExperimentReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  using clock = std::chrono::steady_clock;
  auto seconds = [](clock::time_point a, clock::time_point b) { return std::chrono::duration<double>(b - a).count(); };
  const auto data = prepare_data(config);
  ExperimentReport report;
  report.config = to_json(config);
  const bool do_baseline = config.mode != RunMode::transfer;
  const bool do_transfer = config.mode != RunMode::baseline;
  for (std::size_t r = 0; r < config.repeats; ++r) {
    const auto seeds = RepeatSeeds::derive(config.base_seed, r);
    report.seeds.push_back(seeds);
    nlohmann::json t = {{"repeat", r}};
    try {
      if (do_baseline) {
        const auto t0 = clock::now();
        auto res = run_baseline(config, data, seeds, r);
        t["baseline_seconds"] = seconds(t0, clock::now());
        report.baseline_accuracies.push_back(res.accuracy);
        report.curves.insert(report.curves.end(), res.curves.begin(), res.curves.end());
      }
      if (do_transfer) {
        const auto t0 = clock::now();
        auto schedule = compute_schedule(config, data.train, seeds);
        const auto t1 = clock::now();
        auto res = run_transfer(config, data, schedule, seeds, r);
        t["scoring_seconds"] = seconds(t0, t1);
        t["transfer_seconds"] = seconds(t1, clock::now());
        report.transfer_accuracies.push_back(res.accuracy);
        report.score_documents.push_back(scores_document(schedule, scoring_for_repeat(config, seeds)));
        report.schedules.push_back(std::move(schedule));
        report.curves.insert(report.curves.end(), res.curves.begin(), res.curves.end());
      }
    } catch (const Error& e) {
      throw Error("repeat " + std::to_string(r) + ": " + e.what());
    }
    report.timings.push_back(std::move(t));
  }
  return report;
}

inline nlohmann::json to_json(const ExperimentReport& r) {
  nlohmann::json j;
  j["config"] = r.config;
  j["repeats"] = r.seeds.size();
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& s : r.seeds) seeds.push_back(to_json(s));
  j["seeds"] = seeds;
  if (r.has_baseline()) j["baseline"] = {{"accuracies", r.baseline_accuracies}, {"mean", mean_of(r.baseline_accuracies)}};
  if (r.has_transfer()) {
    nlohmann::json schedules = nlohmann::json::array();
    for (const auto& s : r.schedules) schedules.push_back(to_json(s));
    j["transfer"] = {{"accuracies", r.transfer_accuracies}, {"mean", mean_of(r.transfer_accuracies)}, {"schedules", schedules}};
  }
  return j;
}

inline void write_curves(const std::vector<CurveRow>& rows, std::ostream& out) {
  out << "mode,repeat,epoch,phase,loss,accuracy\n";
  for (const auto& c : rows) {
    out << c.mode << ',' << c.repeat << ',' << c.epoch << ',' << c.phase << ',' << detail::format_double(c.loss) << ','
        << detail::format_double(c.accuracy) << '\n';
  }
}

inline void write_json_file(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

/// report.json, curves.csv, scores_repeat<r>.json and timings.json under `dir`.
inline void write_experiment_outputs(const ExperimentReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_json_file(to_json(report), dir / "report.json");
  {
    std::ofstream out(dir / "curves.csv", std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / "curves.csv").string());
    write_curves(report.curves, out);
  }
  for (std::size_t r = 0; r < report.score_documents.size(); ++r) {
    write_json_file(report.score_documents[r], dir / ("scores_repeat" + std::to_string(r) + ".json"));
  }
  write_json_file(nlohmann::json(report.timings), dir / "timings.json");
}

}  // namespace mvtl
