// mvtl command-line driver. Exit codes: 0 success, 1 runtime failure,
// 2 usage error.

#include <mvtl/mvtl.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct UsageError : mvtl::Error {
  using mvtl::Error::Error;
};

/// Failure inside a named stage; reported as "<stage>: <message>".
struct StageError : mvtl::Error {
  StageError(const std::string& stage, const std::string& what) : mvtl::Error(stage + ": " + what) {}
};

template <typename F>
auto in_stage(const std::string& stage, F&& f) {
  try {
    return f();
  } catch (const UsageError&) {
    throw;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw mvtl::Error("cannot write " + path.string());
  out << text;
}

fs::path prepare_out(const std::string& out) {
  fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw UsageError("cannot create output directory " + out + ": " + ec.message());
  return dir;
}

// ---------------------------------------------------------------------------

struct ImportanceArgs {
  std::string dataset;
  std::size_t target_view = 0;
  std::string measure = "dtw";
  std::string density = "auto";
  std::string norm = "frobenius";
  std::string sampling_mode = "draw";
  std::string alignment;
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;
  std::size_t total_epochs = 100;
  bool invert = false;
  bool raw_distances = false;
  bool save_artifacts = false;
  std::string out = ".";
};

int cmd_importance(const ImportanceArgs& a, const CLI::App& sub) {
  mvtl::ScoringSettings settings;
  try {
    settings.measure.kind = mvtl::parse_measure(a.measure);
    if (a.density != "auto") settings.density.method = mvtl::parse_density_method(a.density);
    settings.sampling.norm = mvtl::parse_norm_kind(a.norm);
    settings.sampling.mode = mvtl::parse_sampling_mode(a.sampling_mode);
  } catch (const mvtl::Error& e) {
    throw UsageError(e.what());
  }
  if (a.batch_size == 0) throw UsageError("--batch-size must be positive");
  settings.sampling.batch_size = a.batch_size;
  settings.sampling.invert_importance = a.invert;
  settings.normalize_distances = !a.raw_distances;
  const auto seeds = mvtl::RepeatSeeds::derive(a.seed, 0);
  settings.density.flow.seed = seeds.density;
  settings.sampling.seed = seeds.sampling;

  auto ds = in_stage("load dataset", [&] { return mvtl::load_dataset(a.dataset); });
  if (!a.alignment.empty()) {
    mvtl::AlignmentStrategy strategy;
    try {
      strategy = mvtl::parse_alignment(a.alignment);
    } catch (const mvtl::Error& e) {
      throw UsageError(e.what());
    }
    ds = in_stage("align", [&] { return mvtl::align_lengths(std::move(ds), strategy); });
  }
  if (a.target_view >= ds.view_count()) {
    std::cerr << sub.help();
    throw UsageError("--target-view " + std::to_string(a.target_view) + " is out of range for a dataset with " +
                     std::to_string(ds.view_count()) + " views");
  }
  const auto dir = prepare_out(a.out);
  std::vector<mvtl::ScoreArtifacts> artifacts;
  auto schedule = in_stage("importance", [&] {
    return mvtl::build_schedule(ds, a.target_view, settings, a.total_epochs, a.save_artifacts ? &artifacts : nullptr);
  });
  mvtl::write_json_file(mvtl::scores_document(schedule, settings), dir / "scores.json");
  for (const auto& art : artifacts) {
    const auto v = std::to_string(art.latent.source_view);
    mvtl::write_json_file(mvtl::to_json(art.latent), dir / ("latent_view" + v + ".json"));
    mvtl::write_json_file(mvtl::to_json(art.density), dir / ("density_view" + v + ".json"));
  }
  return 0;
}

// ---------------------------------------------------------------------------

mvtl::ExperimentConfig load_config(const std::string& path) {
  if (!fs::is_regular_file(path)) throw UsageError("config file " + path + " does not exist");
  try {
    return mvtl::load_experiment_config(path);
  } catch (const mvtl::Error& e) {
    throw UsageError(e.what());
  }
}

struct ScheduleArgs {
  std::string config;
  std::size_t repeat = 0;
  std::string out = ".";
};

int cmd_schedule(const ScheduleArgs& a) {
  auto config = load_config(a.config);
  const auto dir = prepare_out(a.out);
  const auto data = in_stage("load dataset", [&] { return mvtl::prepare_data(config); });
  const auto seeds = mvtl::RepeatSeeds::derive(config.base_seed, a.repeat);
  auto schedule = in_stage("schedule", [&] { return mvtl::compute_schedule(config, data.train, seeds); });
  mvtl::write_json_file(mvtl::scores_document(schedule, mvtl::scoring_for_repeat(config, seeds)), dir / "scores.json");
  return 0;
}

struct TrainArgs {
  std::string config;
  std::string mode;
  std::optional<std::size_t> repeats;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

int cmd_train(const TrainArgs& a) {
  auto config = load_config(a.config);
  if (!a.mode.empty()) {
    try {
      config.mode = mvtl::parse_run_mode(a.mode);
    } catch (const mvtl::Error& e) {
      throw UsageError(e.what());
    }
  }
  if (a.repeats) {
    if (*a.repeats == 0) throw UsageError("--repeats must be at least 1");
    config.repeats = *a.repeats;
  }
  if (a.seed) config.base_seed = *a.seed;
  const auto dir = prepare_out(a.out);
  in_stage("load dataset", [&] { return mvtl::prepare_data(config); });
  auto report = in_stage("train", [&] { return mvtl::run_experiment(config); });
  in_stage("write outputs", [&] {
    mvtl::write_experiment_outputs(report, dir);
    return 0;
  });
  return 0;
}

// ---------------------------------------------------------------------------

struct GridArgs {
  std::string model;
  std::vector<std::size_t> project;
  std::vector<double> lower, upper;
  std::vector<std::size_t> points{101};
  std::vector<double> at;
  std::string out = ".";
  std::string file = "density_grid.csv";
};

int cmd_density_grid(const GridArgs& a) {
  if (!fs::is_regular_file(a.model)) throw UsageError("model file " + a.model + " does not exist");
  auto model = in_stage("load model", [&] { return mvtl::density_model_from_json(mvtl::detail::read_json_file(a.model)); });
  const std::size_t d = model.dimension();

  std::vector<std::size_t> axes = a.project;
  if (axes.empty()) {
    if (d > 2) throw UsageError("model has dimension " + std::to_string(d) + "; grids are 1-D or 2-D, pass --project");
    for (std::size_t k = 0; k < d; ++k) axes.push_back(k);
  }
  if (axes.size() > 2) throw UsageError("--project takes one or two coordinates");
  for (std::size_t ax : axes)
    if (ax >= d) throw UsageError("--project coordinate " + std::to_string(ax) + " is out of range for dimension " + std::to_string(d));

  auto per_axis = [&](auto values, const char* flag) {
    if (values.size() == 1 && axes.size() == 2) values.push_back(values[0]);
    if (values.size() != axes.size()) {
      throw UsageError(std::string(flag) + " needs one value per grid axis (" + std::to_string(axes.size()) + ")");
    }
    return values;
  };
  mvtl::DensityGrid grid;
  grid.lower = per_axis(a.lower, "--lower");
  grid.upper = per_axis(a.upper, "--upper");
  grid.points = per_axis(a.points, "--points");
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (!(grid.lower[i] < grid.upper[i])) throw UsageError("grid bounds are reversed or empty on axis " + std::to_string(axes[i]));
    if (grid.points[i] < 2) throw UsageError("--points must be at least 2");
  }

  // KDE grids over a subset of coordinates are exact marginals; flow grids
  // are slices through the anchor point.
  mvtl::DensityModel evaluated = model;
  if (model.method() == mvtl::DensityMethod::kde && axes.size() < d) {
    evaluated = mvtl::DensityModel(mvtl::marginal_kde(model.kde(), axes));
    grid.axes.clear();
    for (std::size_t i = 0; i < axes.size(); ++i) grid.axes.push_back(i);
    grid.fixed = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(axes.size()));
  } else {
    grid.axes = axes;
    if (!a.at.empty()) {
      if (a.at.size() != d) throw UsageError("--at needs " + std::to_string(d) + " values");
      grid.fixed = mvtl::detail::to_eigen(a.at);
    } else {
      grid.fixed = model.method() == mvtl::DensityMethod::kde ? Eigen::VectorXd(model.kde().support().colwise().mean().transpose())
                                                              : model.flow().mean();
    }
  }
  const auto dir = prepare_out(a.out);
  std::ostringstream csv;
  in_stage("density grid", [&] {
    mvtl::write_density_grid(evaluated, grid, csv);
    return 0;
  });
  write_text(dir / a.file, csv.str());
  return 0;
}

// ---------------------------------------------------------------------------

struct ValidateArgs {
  std::string dataset;
  std::string alignment;
  std::string out;
};

int cmd_validate_dataset(const ValidateArgs& a) {
  auto ds = in_stage("load dataset", [&] { return mvtl::load_dataset(a.dataset); });
  if (!a.alignment.empty()) {
    mvtl::AlignmentStrategy strategy;
    try {
      strategy = mvtl::parse_alignment(a.alignment);
    } catch (const mvtl::Error& e) {
      throw UsageError(e.what());
    }
    ds = in_stage("align", [&] { return mvtl::align_lengths(std::move(ds), strategy); });
  }
  nlohmann::json summary;
  summary["samples"] = ds.size();
  summary["classes"] = ds.class_names;
  nlohmann::json views = nlohmann::json::array();
  for (const auto& v : ds.views) {
    nlohmann::json vj;
    vj["channels"] = v.channel_count();
    vj["aligned"] = v.aligned();
    if (v.aligned()) vj["length"] = v.length();
    views.push_back(vj);
  }
  summary["views"] = views;
  const std::string text = summary.dump(2) + "\n";
  if (a.out.empty()) {
    std::cout << text;
  } else {
    write_text(prepare_out(a.out) / "dataset_summary.json", text);
  }
  return 0;
}

struct SyntheticArgs {
  mvtl::SyntheticSpec spec;
  std::string out;
};

int cmd_make_synthetic(const SyntheticArgs& a) {
  try {
    a.spec.validate();
  } catch (const mvtl::Error& e) {
    throw UsageError(e.what());
  }
  auto ds = mvtl::make_synthetic(a.spec);
  mvtl::emit_dataset(ds, prepare_out(a.out));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive transfer scheduling for multi-view time series", "mvtl"};
  app.require_subcommand(1);

  ImportanceArgs imp;
  auto* importance = app.add_subcommand("importance", "Score every source view against a target view and write scores.json");
  importance->add_option("--dataset", imp.dataset, "Dataset directory (manifest.json + view CSVs)")->required();
  importance->add_option("--target-view", imp.target_view, "Target view index")->required();
  importance->add_option("--measure", imp.measure, "dtw or boss")->required();
  importance->add_option("--density", imp.density, "auto, kde or flow");
  importance->add_option("--norm", imp.norm, "frobenius, spectral or entrywise_l1");
  importance->add_option("--sampling-mode", imp.sampling_mode, "draw or density_weights");
  importance->add_option("--alignment", imp.alignment, "zero-pad, last-value-pad, truncate-to-min or average-length");
  importance->add_option("--batch-size", imp.batch_size, "Importance sample count m");
  importance->add_option("--seed", imp.seed, "Seed for density fitting and sampling");
  importance->add_option("--total-epochs", imp.total_epochs, "Pretraining budget T to allocate");
  importance->add_flag("--invert", imp.invert, "Score 1/(1+g) instead of g");
  importance->add_flag("--raw-distances", imp.raw_distances, "Do not length-normalize distances");
  importance->add_flag("--save-artifacts", imp.save_artifacts, "Also write latent sets and fitted densities");
  importance->add_option("--out", imp.out, "Output directory");

  ScheduleArgs sch;
  auto* schedule = app.add_subcommand("schedule", "Compute the transfer schedule for an experiment config");
  schedule->add_option("--config", sch.config, "Experiment config (JSON)")->required();
  schedule->add_option("--repeat", sch.repeat, "Repeat index whose seeds to use");
  schedule->add_option("--out", sch.out, "Output directory");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Run an experiment; writes report.json and curves.csv");
  train->add_option("--config", tr.config, "Experiment config (JSON)")->required();
  train->add_option("--mode", tr.mode, "baseline, transfer or both");
  train->add_option("--repeats", tr.repeats, "Override the repeat count");
  train->add_option("--seed", tr.seed, "Override the base seed");
  train->add_option("--out", tr.out, "Output directory");

  GridArgs gr;
  auto* grid = app.add_subcommand("density-grid", "Evaluate a saved density model on a 1-D or 2-D grid");
  grid->add_option("--model", gr.model, "Density model JSON")->required();
  grid->add_option("--lower", gr.lower, "Lower bound per axis")->required()->delimiter(',');
  grid->add_option("--upper", gr.upper, "Upper bound per axis")->required()->delimiter(',');
  grid->add_option("--points", gr.points, "Grid points per axis")->delimiter(',');
  grid->add_option("--project", gr.project, "Coordinates to grid over (required above 2-D)")->delimiter(',');
  grid->add_option("--at", gr.at, "Anchor for flow slices (default: the data mean)")->delimiter(',');
  grid->add_option("--file", gr.file, "Output file name");
  grid->add_option("--out", gr.out, "Output directory");

  ValidateArgs va;
  auto* validate = app.add_subcommand("validate-dataset", "Load and validate a dataset, printing a summary");
  validate->add_option("--dataset", va.dataset, "Dataset directory")->required();
  validate->add_option("--alignment", va.alignment, "Alignment to apply before summarizing");
  validate->add_option("--out", va.out, "Write dataset_summary.json here instead of stdout");

  SyntheticArgs sy;
  auto* synth = app.add_subcommand("make-synthetic", "Write a synthetic multi-view dataset");
  synth->add_option("--out", sy.out, "Output directory")->required();
  synth->add_option("--views", sy.spec.views, "View count (>= 2)");
  synth->add_option("--classes", sy.spec.classes, "Class count");
  synth->add_option("--samples-per-class", sy.spec.samples_per_class, "Samples per class");
  synth->add_option("--channels", sy.spec.channels, "Channels per view");
  synth->add_option("--length", sy.spec.length, "Series length");
  synth->add_option("--signal-noise", sy.spec.signal_noise, "Noise on the class signal");
  synth->add_option("--correlated-noise", sy.spec.correlated_noise, "Noise separating view 1 from view 0");
  synth->add_option("--seed", sy.spec.seed, "Generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*importance) return cmd_importance(imp, *importance);
    if (*schedule) return cmd_schedule(sch);
    if (*train) return cmd_train(tr);
    if (*grid) return cmd_density_grid(gr);
    if (*validate) return cmd_validate_dataset(va);
    if (*synth) return cmd_make_synthetic(sy);
  } catch (const UsageError& e) {
    std::cerr << "mvtl: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "mvtl: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
