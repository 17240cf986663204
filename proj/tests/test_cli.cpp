#include "oracles.hpp"
#include "test_support.hpp"

#include <mvtl/density.hpp>
#include <mvtl/pipeline.hpp>

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

/// Runs the CLI with `args`, stdout and stderr captured to `log`; returns the exit code.
int run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + MVTL_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string synthetic_dir() { return (test_support::source_dir() / "data" / "synthetic").string(); }

std::vector<std::vector<double>> read_csv_numbers(const fs::path& path, std::string* header = nullptr) {
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  if (header) *header = line;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

/// A small experiment config pointing at the bundled dataset.
fs::path quick_config(const fs::path& dir) {
  auto c = mvtl::load_experiment_config(test_support::source_dir() / "configs" / "synthetic.json");
  auto j = mvtl::to_json(c);
  j["dataset"] = synthetic_dir();
  j["repeats"] = 2;
  j["total_pretrain_epochs"] = 4;
  j["finetune_epochs"] = 2;
  j["sampling"]["batch_size"] = 32;
  mvtl::write_json_file(j, dir / "config.json");
  return dir / "config.json";
}

}  // namespace

TEST(Cli, HelpAndUnknownSubcommand) {
  const auto dir = test_support::scratch_dir("cli_help");
  EXPECT_EQ(run("--help", dir / "log"), 0);
  EXPECT_NE(test_support::read_file(dir / "log").find("importance"), std::string::npos);
  EXPECT_EQ(run("frobnicate", dir / "log"), 2);
  EXPECT_EQ(run("", dir / "log"), 2);
}

TEST(Cli, ImportanceWritesScoresAndIsRepeatable) {
  const auto dir = test_support::scratch_dir("cli_importance");
  const std::string common = "importance --dataset \"" + synthetic_dir() + "\" --target-view 0 --measure dtw --invert --batch-size 64 --seed 3";
  ASSERT_EQ(run(common + " --save-artifacts --out \"" + (dir / "a").string() + "\"", dir / "log"), 0) << test_support::read_file(dir / "log");
  ASSERT_EQ(run(common + " --out \"" + (dir / "b").string() + "\"", dir / "log"), 0);
  const auto a = test_support::read_file(dir / "a" / "scores.json");
  EXPECT_EQ(a, test_support::read_file(dir / "b" / "scores.json"));

  auto j = nlohmann::json::parse(a);
  EXPECT_EQ(j.at("source_views"), nlohmann::json::array({1, 2}));
  EXPECT_EQ(j.at("measure"), "dtw");
  EXPECT_TRUE(j.at("invert_importance").get<bool>());
  EXPECT_TRUE(fs::exists(dir / "a" / "latent_view1.json"));
  EXPECT_TRUE(fs::exists(dir / "a" / "density_view2.json"));
}

TEST(Cli, ImportanceUsageErrors) {
  const auto dir = test_support::scratch_dir("cli_importance_errors");
  EXPECT_EQ(run("importance --dataset \"" + synthetic_dir() + "\" --target-view 7 --measure dtw --out \"" + dir.string() + "\"",
                dir / "log"),
            2);
  EXPECT_EQ(run("importance --dataset \"" + synthetic_dir() + "\" --target-view 0 --measure cosine --out \"" + dir.string() + "\"",
                dir / "log"),
            2);
  EXPECT_EQ(run("importance --target-view 0 --measure dtw", dir / "log"), 2);
}

TEST(Cli, RuntimeFailuresExitWithOne) {
  const auto dir = test_support::scratch_dir("cli_runtime");
  mvtl::emit_dataset(mvtl::load_dataset(synthetic_dir()), dir / "broken");
  {
    std::ofstream out(dir / "broken" / "view_1.csv", std::ios::app);
    out << "s000,0,999,nan\n";
  }
  EXPECT_EQ(run("validate-dataset --dataset \"" + (dir / "broken").string() + "\"", dir / "log"), 1);
  EXPECT_NE(test_support::read_file(dir / "log").find("mvtl: "), std::string::npos);
}

TEST(Cli, ScheduleAndMissingConfig) {
  const auto dir = test_support::scratch_dir("cli_schedule");
  const auto config = quick_config(dir);
  ASSERT_EQ(run("schedule --config \"" + config.string() + "\" --out \"" + dir.string() + "\"", dir / "log"), 0)
      << test_support::read_file(dir / "log");
  auto j = nlohmann::json::parse(test_support::read_file(dir / "scores.json"));
  const auto epochs = j.at("epochs").get<std::vector<std::size_t>>();
  EXPECT_EQ(epochs[0] + epochs[1], 4u);
  EXPECT_EQ(run("schedule --config \"" + (dir / "missing.json").string() + "\"", dir / "log"), 2);
}

TEST(Cli, TrainWritesDeterministicOutputs) {
  const auto dir = test_support::scratch_dir("cli_train");
  const auto config = quick_config(dir);
  for (const char* sub : {"a", "b"}) {
    ASSERT_EQ(run("train --config \"" + config.string() + "\" --out \"" + (dir / sub).string() + "\"", dir / "log"), 0)
        << test_support::read_file(dir / "log");
  }
  for (const char* file : {"report.json", "curves.csv"})
    EXPECT_EQ(test_support::read_file(dir / "a" / file), test_support::read_file(dir / "b" / file)) << file;
  std::string header;
  auto curves = test_support::read_file(dir / "a" / "curves.csv");
  EXPECT_EQ(curves.substr(0, curves.find('\n')), "mode,repeat,epoch,phase,loss,accuracy");
  EXPECT_EQ(std::count(curves.begin(), curves.end(), '\n'), 1 + 2 * 2 + 2 * (4 + 2));

  EXPECT_EQ(run("train --config \"" + config.string() + "\" --mode sideways --out \"" + (dir / "c").string() + "\"", dir / "log"), 2);
  ASSERT_EQ(run("train --config \"" + config.string() + "\" --mode baseline --repeats 1 --out \"" + (dir / "d").string() + "\"",
                dir / "log"),
            0);
  auto report = nlohmann::json::parse(test_support::read_file(dir / "d" / "report.json"));
  EXPECT_FALSE(report.contains("transfer"));
  EXPECT_EQ(report.at("repeats"), 1);
}

TEST(Cli, DensityGridOneDimensionalKde) {
  const auto dir = test_support::scratch_dir("cli_grid_kde");
  Eigen::MatrixXd pts(5, 1);
  pts << -1.0, -0.2, 0.0, 0.4, 1.5;
  mvtl::write_json_file(mvtl::to_json(mvtl::DensityModel(mvtl::fit_kde(pts, mvtl::BandwidthRule::fixed(0.5)))), dir / "kde.json");
  ASSERT_EQ(run("density-grid --model \"" + (dir / "kde.json").string() + "\" --lower -7 --upper 8 --out \"" + dir.string() + "\"",
                dir / "log"),
            0)
      << test_support::read_file(dir / "log");
  std::string header;
  auto rows = read_csv_numbers(dir / "density_grid.csv", &header);
  EXPECT_EQ(header, "x1,density");
  ASSERT_EQ(rows.size(), 101u);
  std::vector<double> y;
  for (const auto& r : rows) y.push_back(r[1]);
  EXPECT_NEAR(oracle::trapezoid(y, 15.0 / 100.0), 1.0, 1e-2);

  EXPECT_EQ(run("density-grid --model \"" + (dir / "kde.json").string() + "\" --lower 3 --upper -3 --out \"" + dir.string() + "\"",
                dir / "log"),
            2);
  EXPECT_EQ(run("density-grid --model \"" + (dir / "nope.json").string() + "\" --lower 0 --upper 1", dir / "log"), 2);
}

TEST(Cli, DensityGridProjectionOfThreeDimensionalKde) {
  const auto dir = test_support::scratch_dir("cli_grid_project");
  Eigen::MatrixXd pts(4, 3);
  pts << 0, 0, 0, 1, 0, 2, 0, 1, -1, 2, 2, 1;
  mvtl::write_json_file(mvtl::to_json(mvtl::DensityModel(mvtl::fit_kde(pts, mvtl::BandwidthRule::fixed(0.6)))), dir / "kde.json");
  const std::string model = "density-grid --model \"" + (dir / "kde.json").string() + "\" --out \"" + dir.string() + "\"";
  EXPECT_EQ(run(model + " --lower -5 --upper 5", dir / "log"), 2);
  ASSERT_EQ(run(model + " --project 2 --lower -6 --upper 7 --points 201", dir / "log"), 0) << test_support::read_file(dir / "log");
  auto rows = read_csv_numbers(dir / "density_grid.csv");
  ASSERT_EQ(rows.size(), 201u);
  std::vector<double> y;
  for (const auto& r : rows) y.push_back(r[1]);
  EXPECT_NEAR(oracle::trapezoid(y, 13.0 / 200.0), 1.0, 1e-2);
}

TEST(Cli, DensityGridTwoDimensionalFlow) {
  const auto dir = test_support::scratch_dir("cli_grid_flow");
  Eigen::MatrixXd pts(32, 2);
  for (Eigen::Index i = 0; i < 32; ++i) pts.row(i) << std::sin(0.7 * static_cast<double>(i)), std::cos(1.3 * static_cast<double>(i));
  mvtl::FlowConfig cfg;
  cfg.layers = 2;
  cfg.width = 8;
  cfg.iterations = 20;
  mvtl::write_json_file(mvtl::to_json(mvtl::DensityModel(mvtl::fit_flow(pts, cfg))), dir / "flow.json");
  ASSERT_EQ(run("density-grid --model \"" + (dir / "flow.json").string() +
                    "\" --lower -3,-3 --upper 3,3 --points 51 --file flow.csv --out \"" + dir.string() + "\"",
                dir / "log"),
            0)
      << test_support::read_file(dir / "log");
  std::string header;
  auto rows = read_csv_numbers(dir / "flow.csv", &header);
  EXPECT_EQ(header, "x1,x2,density");
  ASSERT_EQ(rows.size(), 2601u);
  for (const auto& r : rows) EXPECT_GE(r[2], 0.0);
}

TEST(Cli, ValidateDataset) {
  const auto dir = test_support::scratch_dir("cli_validate");
  ASSERT_EQ(run("validate-dataset --dataset \"" + synthetic_dir() + "\" --out \"" + dir.string() + "\"", dir / "log"), 0);
  auto j = nlohmann::json::parse(test_support::read_file(dir / "dataset_summary.json"));
  EXPECT_EQ(j.at("samples"), 120);
  EXPECT_EQ(j.at("views").size(), 3u);
  EXPECT_EQ(j.at("views")[0].at("length"), 32);
  EXPECT_EQ(run("validate-dataset --dataset \"" + synthetic_dir() + "\" --alignment stretch", dir / "log"), 2);
}

TEST(Cli, MakeSyntheticRoundTrips) {
  const auto dir = test_support::scratch_dir("cli_synthetic");
  ASSERT_EQ(run("make-synthetic --out \"" + (dir / "ds").string() + "\" --views 2 --classes 2 --samples-per-class 5 --length 8",
                dir / "log"),
            0)
      << test_support::read_file(dir / "log");
  auto ds = mvtl::load_dataset(dir / "ds");
  EXPECT_EQ(ds.size(), 10u);
  EXPECT_EQ(ds.view_count(), 2u);
  EXPECT_EQ(run("make-synthetic --out \"" + (dir / "bad").string() + "\" --views 1", dir / "log"), 2);
}
