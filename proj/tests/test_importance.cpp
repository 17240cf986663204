#include "oracles.hpp"
#include "test_support.hpp"

#include <mvtl/importance.hpp>
#include <mvtl/synthetic.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

using namespace mvtl;

// --- norms -------------------------------------------------------------------

TEST(MatrixNorm, HandExamples) {
  Eigen::MatrixXd row(1, 2);
  row << 3.0, 4.0;
  EXPECT_DOUBLE_EQ(matrix_norm(row, NormKind::frobenius), 5.0);
  EXPECT_NEAR(matrix_norm(row, NormKind::spectral), 5.0, 1e-9);
  EXPECT_DOUBLE_EQ(matrix_norm(row, NormKind::entrywise_l1), 7.0);

  Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(2, 2);
  EXPECT_DOUBLE_EQ(matrix_norm(eye, NormKind::frobenius), std::sqrt(2.0));
  EXPECT_NEAR(matrix_norm(eye, NormKind::spectral), 1.0, 1e-9);
  EXPECT_DOUBLE_EQ(matrix_norm(eye, NormKind::entrywise_l1), 2.0);

  EXPECT_EQ(matrix_norm(Eigen::MatrixXd::Zero(3, 2), NormKind::spectral), 0.0);
  EXPECT_THROW(matrix_norm(Eigen::MatrixXd(0, 0), NormKind::frobenius), Error);
}

TEST(MatrixNorm, SpectralMatchesClosedFormForTwoColumns) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::MatrixXd m(7, 2);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    const Eigen::Matrix2d g = m.transpose() * m;
    const double expected = std::sqrt(oracle::largest_eigenvalue_2x2(g(0, 0), g(0, 1), g(1, 1)));
    EXPECT_NEAR(matrix_norm(m, NormKind::spectral), expected, 1e-8 * expected);
  }
}

TEST(MatrixNorm, SpectralHandlesStartOrthogonalToTopVector) {
  // The all-ones start vector lies in the null space of this Gram matrix.
  Eigen::MatrixXd m(2, 2);
  m << 1.0, -1.0, 1.0, -1.0;
  EXPECT_NEAR(matrix_norm(m, NormKind::spectral), 2.0, 1e-9);
}

TEST(MatrixNorm, HomogeneityAndTriangleInequality) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto kind : {NormKind::frobenius, NormKind::spectral, NormKind::entrywise_l1}) {
    for (int trial = 0; trial < 30; ++trial) {
      Eigen::MatrixXd a(5, 3), b(5, 3);
      for (Eigen::Index i = 0; i < a.size(); ++i) {
        a.data()[i] = normal(rng);
        b.data()[i] = normal(rng);
      }
      const double alpha = -2.5;
      EXPECT_NEAR(matrix_norm(alpha * a, kind), std::abs(alpha) * matrix_norm(a, kind), 1e-8);
      EXPECT_LE(matrix_norm(a + b, kind), matrix_norm(a, kind) + matrix_norm(b, kind) + 1e-9);
      EXPECT_GE(matrix_norm(a, kind), 0.0);
    }
  }
}

TEST(MatrixNorm, NamesRoundTrip) {
  for (auto kind : {NormKind::frobenius, NormKind::spectral, NormKind::entrywise_l1}) EXPECT_EQ(parse_norm_kind(to_string(kind)), kind);
  EXPECT_THROW(parse_norm_kind("nuclear"), Error);
  EXPECT_EQ(parse_sampling_mode("density_weights"), SamplingMode::density_weights);
}

// --- allocation --------------------------------------------------------------

TEST(AllocateEpochs, HandExamples) {
  EXPECT_EQ(allocate_epochs(std::vector<double>{1, 1, 1, 1}, 200), (std::vector<std::size_t>{50, 50, 50, 50}));
  EXPECT_EQ(allocate_epochs(std::vector<double>{3, 1}, 100), (std::vector<std::size_t>{75, 25}));
  EXPECT_EQ(allocate_epochs(std::vector<double>{1, 1, 1}, 100), (std::vector<std::size_t>{34, 33, 33}));
  EXPECT_EQ(allocate_epochs(std::vector<double>{1, 1, 1}, 2), (std::vector<std::size_t>{1, 1, 0}));
  EXPECT_EQ(allocate_epochs(std::vector<double>{0.2, 0.5, 0.3}, 0), (std::vector<std::size_t>{0, 0, 0}));
  EXPECT_EQ(allocate_epochs(std::vector<double>{2.0}, 17), (std::vector<std::size_t>{17}));
}

TEST(AllocateEpochs, AllZeroScoresAreUniformWithWarning) {
  test_support::WarningCapture capture;
  EXPECT_EQ(allocate_epochs(std::vector<double>{0, 0, 0}, 10), (std::vector<std::size_t>{4, 3, 3}));
  EXPECT_EQ(capture.messages.size(), 1u);
}

TEST(AllocateEpochs, Errors) {
  EXPECT_THROW(allocate_epochs(std::vector<double>{}, 10), Error);
  EXPECT_THROW(allocate_epochs(std::vector<double>{1.0, std::nan("")}, 10), Error);
}

TEST(AllocateEpochs, MatchesIntegerOracleAndInvariants) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> count(1, 8);
  std::uniform_int_distribution<unsigned long long> score(0, 1000);
  std::uniform_int_distribution<std::size_t> total(0, 500);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<unsigned long long> ints(static_cast<std::size_t>(count(rng)));
    for (auto& s : ints) s = score(rng);
    if (std::accumulate(ints.begin(), ints.end(), 0ULL) == 0) ints[0] = 1;
    const std::size_t t = total(rng);
    std::vector<double> scores(ints.begin(), ints.end());
    auto got = allocate_epochs(scores, t);
    EXPECT_EQ(std::accumulate(got.begin(), got.end(), std::size_t{0}), t);
    EXPECT_EQ(got, oracle::largest_remainder(ints, t));

    for (double c : {0.001, 3.0, 1e6}) {
      std::vector<double> scaled;
      for (double s : scores) scaled.push_back(s * c);
      EXPECT_EQ(allocate_epochs(scaled, t), got);
    }
    // Each share is within one epoch of its exact proportion.
    const double sum = std::accumulate(scores.begin(), scores.end(), 0.0);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_LT(std::abs(static_cast<double>(got[i]) - scores[i] / sum * t), 1.0);
  }
}

TEST(AllocateEpochs, NegativeScoresUseMagnitude) {
  EXPECT_EQ(allocate_epochs(std::vector<double>{-3, 1}, 100), (std::vector<std::size_t>{75, 25}));
}

// --- sampling ----------------------------------------------------------------

TEST(ImportanceMatrix, ShapeAndDeterminism) {
  Eigen::MatrixXd pts(4, 2);
  pts << 0, 0, 1, 0, 0, 1, 1, 1;
  DensityModel model(fit_kde(pts));
  SamplingConfig cfg;
  cfg.batch_size = 33;
  cfg.seed = 9;
  auto a = draw_importance_matrix(model, cfg);
  EXPECT_EQ(a.rows(), 33);
  EXPECT_EQ(a.cols(), 2);
  EXPECT_EQ(a.values, draw_importance_matrix(model, cfg).values);
  cfg.seed = 10;
  EXPECT_NE(a.values, draw_importance_matrix(model, cfg).values);

  cfg.mode = SamplingMode::density_weights;
  auto w = draw_importance_matrix(model, cfg);
  EXPECT_EQ(w.rows(), 33);
  EXPECT_EQ(w.cols(), 1);
  EXPECT_TRUE((w.values.array() > 0.0).all());

  cfg.batch_size = 0;
  EXPECT_THROW(draw_importance_matrix(model, cfg), Error);
}

// --- scoring -----------------------------------------------------------------

namespace {

MultiViewDataset scoring_fixture() {
  SyntheticSpec spec;
  spec.views = 3;
  spec.samples_per_class = 10;
  spec.length = 16;
  auto ds = make_synthetic(spec);
  return ds;
}

ScoringSettings default_settings(std::uint64_t seed = 0) {
  ScoringSettings s;
  s.sampling.batch_size = 128;
  s.sampling.seed = seed;
  s.density.flow.seed = seed;
  return s;
}

}  // namespace

TEST(Scoring, IdenticalViewScoresNearZero) {
  auto ds = scoring_fixture();
  ds.views[2] = ds.views[0];
  test_support::WarningCapture capture;  // zero-variance bandwidth warnings
  EXPECT_LT(score_source_view(ds, 2, 0, default_settings()), 1e-4);
}

TEST(Scoring, DuplicateViewScoresBelowNoiseView) {
  auto ds = scoring_fixture();
  auto s = default_settings(5);
  const double near = score_source_view(ds, 1, 0, s);
  const double noise = score_source_view(ds, 2, 0, s);
  EXPECT_LT(near, noise);

  s.sampling.invert_importance = true;
  const double near_inv = score_source_view(ds, 1, 0, s);
  const double noise_inv = score_source_view(ds, 2, 0, s);
  EXPECT_GT(near_inv, noise_inv);
  EXPECT_NEAR(near_inv, 1.0 / (1.0 + near), 1e-12);

  s.measure.kind = Measure::boss;
  EXPECT_LT(score_source_view(ds, 1, 0, s), 1.0);
}

TEST(Scoring, DeterministicForFixedSeeds) {
  auto ds = scoring_fixture();
  auto s = default_settings(4);
  EXPECT_EQ(score_source_view(ds, 1, 0, s), score_source_view(ds, 1, 0, s));
  auto a = build_schedule(ds, 0, s, 40);
  auto b = build_schedule(ds, 0, s, 40);
  EXPECT_EQ(a, b);
}

TEST(Scoring, FlowPathForHighDimensionalLatents) {
  SyntheticSpec spec;
  spec.views = 2;
  spec.channels = 4;
  spec.samples_per_class = 6;
  spec.length = 12;
  auto ds = make_synthetic(spec);
  auto s = default_settings(1);
  s.density.flow.iterations = 20;
  s.density.flow.width = 8;
  s.density.flow.layers = 2;
  ScoreArtifacts a = score_source_view_detailed(ds, 1, 0, s);
  EXPECT_EQ(a.density.method(), DensityMethod::flow);
  EXPECT_EQ(a.matrix.cols(), 4);
  EXPECT_GT(a.norm, 0.0);
}

TEST(Schedule, BuildsForEverySourceAndSumsToTotal) {
  auto ds = scoring_fixture();
  auto s = default_settings(2);
  s.sampling.invert_importance = true;
  auto schedule = build_schedule(ds, 1, s, 97);
  EXPECT_EQ(schedule.source_views, (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(schedule.epochs.size(), 2u);
  EXPECT_EQ(schedule.epochs[0] + schedule.epochs[1], 97u);
  EXPECT_GT(schedule.epochs[0], schedule.epochs[1]);
  EXPECT_THROW(build_schedule(ds, 3, s, 10), Error);

  auto zero = build_schedule(ds, 1, s, 0);
  EXPECT_EQ(zero.epochs, (std::vector<std::size_t>{0, 0}));
}

TEST(Schedule, JsonRoundTrip) {
  TransferSchedule s{2, {0, 1, 3}, {0.5, 0.25, 0.25}, {1.0, 3.0, 3.0}, {50, 25, 25}, 100};
  EXPECT_EQ(schedule_from_json(nlohmann::json::parse(to_json(s).dump())), s);

  auto j = to_json(s);
  j.erase("source_views");
  EXPECT_EQ(schedule_from_json(j).source_views, (std::vector<std::size_t>{0, 1, 3}));
  j["epochs"] = {1, 2};
  EXPECT_THROW(schedule_from_json(j), Error);
  EXPECT_THROW(schedule_from_json(nlohmann::json::object()), Error);
}

TEST(Schedule, ScoresDocumentRecordsSettings) {
  TransferSchedule s{0, {1}, {0.5}, {1.0}, {10}, 10};
  auto settings = default_settings(3);
  settings.sampling.norm = NormKind::spectral;
  auto doc = scores_document(s, settings);
  EXPECT_EQ(doc.at("norm"), "spectral");
  EXPECT_EQ(doc.at("measure"), "dtw");
  EXPECT_EQ(doc.at("density"), "auto");
  EXPECT_EQ(doc.at("epochs"), nlohmann::json::array({10}));
}
