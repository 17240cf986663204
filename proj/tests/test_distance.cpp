#include "oracles.hpp"

#include <mvtl/distance.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace mvtl;

namespace {

std::vector<double> random_integer_series(std::mt19937_64& rng, std::size_t max_len) {
  std::uniform_int_distribution<std::size_t> len(1, max_len);
  std::uniform_int_distribution<int> val(-4, 4);
  std::vector<double> x(len(rng));
  for (double& v : x) v = val(rng);
  return x;
}

std::vector<double> random_series(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> x(n);
  for (double& v : x) v = normal(rng);
  return x;
}

MultivariateSeries series_of(std::vector<Series> channels) {
  MultivariateSeries s;
  s.channels = std::move(channels);
  return s;
}

MultiViewDataset dataset_from(std::vector<std::vector<MultivariateSeries>> views) {
  MultiViewDataset ds;
  ds.class_names = {"a", "b"};
  for (std::size_t i = 0; i < views[0].size(); ++i) {
    ds.sample_ids.push_back("s" + std::to_string(i));
    ds.labels.push_back(i % 2);
  }
  for (auto& v : views) ds.views.push_back(View{std::move(v)});
  return ds;
}

}  // namespace

// --- DTW -------------------------------------------------------------------

TEST(Dtw, HandExamples) {
  EXPECT_EQ(dtw_distance(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}), 0.0);
  EXPECT_EQ(dtw_distance(std::vector<double>{1}, std::vector<double>{5}), 4.0);
  EXPECT_EQ(dtw_distance(std::vector<double>{0, 0}, std::vector<double>{1, 1}), 2.0);
  // Warping absorbs a repeated value.
  EXPECT_EQ(dtw_distance(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 2, 3}), 0.0);
}

TEST(Dtw, MatchesWarpPathEnumeration) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    auto x = random_integer_series(rng, 6);
    auto y = random_integer_series(rng, 6);
    EXPECT_EQ(dtw_distance(x, y), oracle::dtw_brute_force(x, y));
  }
}

TEST(Dtw, MetricLikeProperties) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = random_series(rng, 12);
    auto y = random_series(rng, 12);
    EXPECT_EQ(dtw_distance(x, x), 0.0);
    EXPECT_EQ(dtw_distance(x, y), dtw_distance(y, x));
    EXPECT_GE(dtw_distance(x, y), 0.0);
    double pointwise = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) pointwise += std::abs(x[i] - y[i]);
    EXPECT_LE(dtw_distance(x, y), pointwise + 1e-12);
  }
}

TEST(Dtw, BandZeroIsPointwiseAndWideBandIsUnconstrained) {
  std::mt19937_64 rng(9);
  auto x = random_series(rng, 10);
  auto y = random_series(rng, 10);
  double pointwise = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) pointwise += std::abs(x[i] - y[i]);
  EXPECT_NEAR(dtw_distance(x, y, DtwParams{0}), pointwise, 1e-12);
  EXPECT_EQ(dtw_distance(x, y, DtwParams{10}), dtw_distance(x, y));
  EXPECT_GE(dtw_distance(x, y, DtwParams{1}), dtw_distance(x, y));
}

TEST(Dtw, Errors) {
  EXPECT_THROW(dtw_distance(std::vector<double>{}, std::vector<double>{1}), Error);
  EXPECT_THROW(dtw_distance(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1}, DtwParams{2}), Error);
  EXPECT_NO_THROW(dtw_distance(std::vector<double>{1, 2, 3}, std::vector<double>{1}, DtwParams{2}));
}

// --- SFA -------------------------------------------------------------------

TEST(Sfa, ConstantCorpusGivesZeroBreakpoints) {
  std::vector<std::vector<double>> corpus(3, std::vector<double>(16, 2.5));
  auto bins = sfa_fit(corpus, SfaParams{8, 4, 4, true});
  ASSERT_EQ(bins.breakpoints.size(), 4u);
  for (const auto& row : bins.breakpoints) {
    ASSERT_EQ(row.size(), 3u);
    for (double b : row) EXPECT_NEAR(b, 0.0, 1e-12);
  }
  auto hist = sfa_transform(corpus[0], bins);
  EXPECT_EQ(hist.size(), 1u);
  EXPECT_EQ(hist.begin()->second, 1u);
}

TEST(Sfa, BinaryAlphabetBreakpointIsMedian) {
  std::mt19937_64 rng(21);
  std::vector<std::vector<double>> corpus;
  for (int i = 0; i < 5; ++i) corpus.push_back(random_series(rng, 14));
  const SfaParams p{6, 4, 2, true};
  auto bins = sfa_fit(corpus, p);
  for (std::size_t pos = 0; pos < p.word_length; ++pos) {
    std::vector<double> values;
    for (const auto& x : corpus)
      for (std::size_t s = 0; s + p.window_length <= x.size(); ++s)
        values.push_back(sfa_coefficients(std::span(x).subspan(s, p.window_length), p)[pos]);
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    const double median = n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
    ASSERT_EQ(bins.breakpoints[pos].size(), 1u);
    EXPECT_NEAR(bins.breakpoints[pos][0], median, 1e-12);
  }
}

TEST(Sfa, BreakpointsAreNonDecreasing) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<double>> corpus;
    for (int i = 0; i < 4; ++i) corpus.push_back(random_series(rng, 20));
    auto bins = sfa_fit(corpus, SfaParams{8, 6, 5, trial % 2 == 0});
    for (const auto& row : bins.breakpoints) EXPECT_TRUE(std::is_sorted(row.begin(), row.end()));
  }
}

TEST(Sfa, MatchesNaiveReference) {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::vector<double>> corpus;
    for (int i = 0; i < 6; ++i) corpus.push_back(random_series(rng, 20));
    const bool mean_normalize = trial % 3 != 0;
    const SfaParams p{8, 4, 3, mean_normalize};
    auto bins = sfa_fit(corpus, p);
    oracle::Sfa ref{8, 4, 3, mean_normalize, {}};
    ref.fit(corpus);
    for (std::size_t pos = 0; pos < 4; ++pos)
      for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(bins.breakpoints[pos][j], ref.breakpoints[pos][j], 1e-12);
    for (const auto& x : corpus) EXPECT_EQ(sfa_transform(x, bins), ref.histogram(x));
  }
}

TEST(Sfa, IdenticalSeriesGiveIdenticalHistograms) {
  std::mt19937_64 rng(8);
  auto x = random_series(rng, 25);
  auto copy = x;
  std::vector<std::vector<double>> corpus{x};
  auto bins = sfa_fit(corpus, SfaParams{});
  EXPECT_EQ(sfa_transform(x, bins), sfa_transform(copy, bins));
}

TEST(Sfa, Errors) {
  std::vector<std::vector<double>> corpus{std::vector<double>(5, 1.0)};
  EXPECT_THROW(sfa_fit(corpus, SfaParams{8, 4, 4, true}), Error);
  EXPECT_THROW(sfa_fit(corpus, SfaParams{4, 3, 4, true}), Error);
  EXPECT_THROW(sfa_fit(corpus, SfaParams{4, 4, 1, true}), Error);
  auto bins = sfa_fit(corpus, SfaParams{4, 2, 2, true});
  EXPECT_THROW(sfa_transform(std::vector<double>{1, 2, 3}, bins), Error);
}

TEST(Sfa, DefaultParameters) {
  auto p = default_sfa_params(100);
  EXPECT_EQ(p.window_length, 25u);
  EXPECT_EQ(p.word_length, 4u);
  EXPECT_EQ(p.alphabet_size, 4u);
  EXPECT_EQ(default_sfa_params(20).window_length, 8u);
  EXPECT_EQ(default_sfa_params(5).window_length, 5u);
}

// --- BOSS ------------------------------------------------------------------

TEST(Boss, HandExamples) {
  WordHistogram a{{"ab", 2}};
  EXPECT_EQ(boss_distance(a, a), 0.0);
  EXPECT_EQ(boss_distance(a, {}), 2.0);
  EXPECT_EQ(boss_distance({}, a), 2.0);
  WordHistogram b{{"ab", 1}, {"ba", 3}};
  // D(a,b) = 1, D(b,a) = 1 + 9
  EXPECT_EQ(boss_distance(a, b), 5.5);
}

TEST(Boss, MatchesTwoLoopReference) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> count(0, 5), letter(0, 2);
  for (int trial = 0; trial < 200; ++trial) {
    WordHistogram a, b;
    for (auto* h : {&a, &b}) {
      const int words = count(rng);
      for (int k = 0; k < words; ++k) {
        std::string w{static_cast<char>('a' + letter(rng)), static_cast<char>('a' + letter(rng))};
        (*h)[w] += static_cast<std::size_t>(count(rng) + 1);
      }
    }
    EXPECT_NEAR(boss_distance(a, b), oracle::boss_two_loop(a, b), 1e-12);
    EXPECT_EQ(boss_distance(a, b), boss_distance(b, a));
  }
}

// --- Latent set ------------------------------------------------------------

TEST(ChannelDistances, ComposesScalarDtw) {
  auto src = series_of({{1, 0}, {0, 0}});
  auto tgt = series_of({{5, 0}, {1, 1}});
  DistanceMeasure m;
  auto raw = channel_pairwise_distances(src, tgt, m, false);
  ASSERT_EQ(raw.components.size(), 2u);
  EXPECT_EQ(raw.components[0], dtw_distance(src.channels[0], tgt.channels[0]));
  EXPECT_EQ(raw.components[1], 2.0);
  auto norm = channel_pairwise_distances(src, tgt, m, true);
  EXPECT_EQ(norm.components[0], raw.components[0] / 2.0);
  EXPECT_EQ(norm.components[1], raw.components[1] / 2.0);
}

TEST(ChannelDistances, IdenticalSamplesGiveZero) {
  std::mt19937_64 rng(2);
  auto s = series_of({random_series(rng, 16), random_series(rng, 16), random_series(rng, 16)});
  for (auto kind : {Measure::dtw, Measure::boss}) {
    DistanceMeasure m;
    m.kind = kind;
    auto v = channel_pairwise_distances(s, s, m);
    EXPECT_EQ(v.components, std::vector<double>(3, 0.0));
  }
}

TEST(ChannelDistances, RejectsChannelMismatch) {
  EXPECT_THROW(channel_pairwise_distances(series_of({{1.0}}), series_of({{1.0}, {2.0}}), DistanceMeasure{}), Error);
}

TEST(LatentSet, DuplicateViewGivesZeroSet) {
  std::mt19937_64 rng(6);
  std::vector<MultivariateSeries> view;
  for (int i = 0; i < 5; ++i) view.push_back(series_of({random_series(rng, 20), random_series(rng, 20)}));
  auto ds = dataset_from({view, view});
  for (auto kind : {Measure::dtw, Measure::boss}) {
    DistanceMeasure m;
    m.kind = kind;
    auto set = build_latent_set(ds, 1, 0, m);
    EXPECT_EQ(set.dimension, 2u);
    for (const auto& v : set.vectors) EXPECT_EQ(v.components, std::vector<double>(2, 0.0));
  }
}

TEST(LatentSet, VectorsComposeChannelDistances) {
  std::mt19937_64 rng(7);
  std::vector<MultivariateSeries> a, b;
  for (int i = 0; i < 3; ++i) {
    a.push_back(series_of({random_series(rng, 9), random_series(rng, 9)}));
    b.push_back(series_of({random_series(rng, 9), random_series(rng, 9)}));
  }
  auto ds = dataset_from({a, b});
  DistanceMeasure m;
  auto set = build_latent_set(ds, 0, 1, m);
  ASSERT_EQ(set.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(set.vectors[i].components, channel_pairwise_distances(a[i], b[i], m).components);
    EXPECT_EQ(set.raw[i], channel_pairwise_distances(a[i], b[i], m, false).components);
    EXPECT_EQ(set.vectors[i].sample_id, ds.sample_ids[i]);
  }
}

TEST(LatentSet, BossUsesBinsFittedOnBothViews) {
  std::mt19937_64 rng(10);
  std::vector<MultivariateSeries> a, b;
  for (int i = 0; i < 4; ++i) {
    a.push_back(series_of({random_series(rng, 24)}));
    b.push_back(series_of({random_series(rng, 24)}));
  }
  auto ds = dataset_from({a, b});
  DistanceMeasure m;
  m.kind = Measure::boss;
  auto set = build_latent_set(ds, 0, 1, m, false);
  std::vector<std::vector<double>> corpus;
  for (const auto& s : a) corpus.push_back(s.channels[0]);
  for (const auto& s : b) corpus.push_back(s.channels[0]);
  auto bins = sfa_fit(corpus, default_sfa_params(24));
  for (std::size_t i = 0; i < 4; ++i) {
    const double expected = boss_distance(sfa_transform(a[i].channels[0], bins), sfa_transform(b[i].channels[0], bins));
    EXPECT_EQ(set.vectors[i].components[0], expected);
  }
}

TEST(LatentSet, PermutationGivesSameMultiset) {
  std::mt19937_64 rng(11);
  std::vector<MultivariateSeries> a, b;
  for (int i = 0; i < 6; ++i) {
    a.push_back(series_of({random_series(rng, 10), random_series(rng, 10)}));
    b.push_back(series_of({random_series(rng, 10), random_series(rng, 10)}));
  }
  auto base = build_latent_set(dataset_from({a, b}), 0, 1, DistanceMeasure{});
  std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  std::vector<MultivariateSeries> pa, pb;
  for (auto i : perm) {
    pa.push_back(a[i]);
    pb.push_back(b[i]);
  }
  auto permuted = build_latent_set(dataset_from({pa, pb}), 0, 1, DistanceMeasure{});
  auto sorted = [](const ImportanceLatentSet& s) {
    std::vector<std::vector<double>> v;
    for (const auto& x : s.vectors) v.push_back(x.components);
    std::sort(v.begin(), v.end());
    return v;
  };
  EXPECT_EQ(sorted(base), sorted(permuted));
}

TEST(LatentSet, Errors) {
  std::vector<MultivariateSeries> a{series_of({{1, 2}}), series_of({{3, 4}})};
  std::vector<MultivariateSeries> b{series_of({{1, 2}, {1, 1}}), series_of({{3, 4}, {1, 1}})};
  auto ds = dataset_from({a, a, b});
  EXPECT_THROW(build_latent_set(ds, 0, 0, DistanceMeasure{}), Error);
  EXPECT_THROW(build_latent_set(ds, 0, 5, DistanceMeasure{}), Error);
  EXPECT_THROW(build_latent_set(ds, 0, 2, DistanceMeasure{}), Error);
}

TEST(LatentSet, JsonRoundTrip) {
  std::mt19937_64 rng(13);
  std::vector<MultivariateSeries> a, b;
  for (int i = 0; i < 3; ++i) {
    a.push_back(series_of({random_series(rng, 12), random_series(rng, 12)}));
    b.push_back(series_of({random_series(rng, 12), random_series(rng, 12)}));
  }
  auto set = build_latent_set(dataset_from({a, b}), 1, 0, DistanceMeasure{});
  auto j = to_json(set);
  EXPECT_EQ(j.at("K"), 2);
  EXPECT_EQ(j.at("measure"), "dtw");
  EXPECT_EQ(j.at("vectors").size(), 3u);
  auto back = latent_set_from_json(j);
  EXPECT_EQ(back.matrix(), set.matrix());
  EXPECT_EQ(back.raw, set.raw);
  EXPECT_EQ(back.source_view, 1u);
}
