#pragma once

// Channel-wise distances between corresponding samples of two views and the
// resulting latent observation set {S_1 ... S_N}.

#include <mvtl/dataset.hpp>
#include <mvtl/distance/dtw.hpp>
#include <mvtl/distance/sfa.hpp>
#include <mvtl/error.hpp>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mvtl {

enum class Measure { dtw, boss };

inline std::string to_string(Measure m) { return m == Measure::dtw ? "dtw" : "boss"; }

inline Measure parse_measure(std::string_view name) {
  if (name == "dtw") return Measure::dtw;
  if (name == "boss") return Measure::boss;
  throw Error("unknown distance measure '" + std::string(name) + "'");
}

/// A univariate distance plus its parameters. For BOSS, `bins` holds one
/// fitted binning per channel; when empty, bins are fitted on the pair.
struct DistanceMeasure {
  Measure kind = Measure::dtw;
  DtwParams dtw;
  std::optional<SfaParams> sfa;
  std::vector<SfaBins> bins;
};

/// S_j: one distance per channel for a single sample pair.
struct ImportanceVector {
  std::vector<double> components;
  std::string sample_id;
};

struct ImportanceLatentSet {
  Measure measure = Measure::dtw;
  std::size_t source_view = 0;
  std::size_t target_view = 0;
  std::size_t dimension = 0;
  bool normalized = true;
  std::vector<ImportanceVector> vectors;
  /// Unnormalised distances, kept alongside `vectors`.
  std::vector<std::vector<double>> raw;

  std::size_t size() const { return vectors.size(); }

  /// N x K matrix of `vectors`.
  Eigen::MatrixXd matrix() const {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(vectors.size()), static_cast<Eigen::Index>(dimension));
    for (std::size_t i = 0; i < vectors.size(); ++i) {
      for (std::size_t k = 0; k < dimension; ++k) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = vectors[i].components[k];
    }
    return m;
  }
};

namespace detail {

inline SfaParams sfa_params_for(const DistanceMeasure& m, std::size_t length) {
  return m.sfa ? *m.sfa : default_sfa_params(length);
}

inline double channel_distance(std::span<const double> x, std::span<const double> y, const DistanceMeasure& m,
                               std::size_t channel) {
  if (m.kind == Measure::dtw) return dtw_distance(x, y, m.dtw);
  SfaBins bins;
  if (channel < m.bins.size()) {
    bins = m.bins[channel];
  } else {
    const std::vector<std::vector<double>> pair{{x.begin(), x.end()}, {y.begin(), y.end()}};
    bins = sfa_fit(pair, sfa_params_for(m, std::min(x.size(), y.size())));
  }
  return boss_distance(sfa_transform(x, bins), sfa_transform(y, bins));
}

}  // namespace detail

/// Distance per channel between two samples with the same channel count.
/// With `normalize`, each component is divided by the mean of the two
/// series lengths.
inline ImportanceVector channel_pairwise_distances(const MultivariateSeries& source, const MultivariateSeries& target,
                                                   const DistanceMeasure& measure, bool normalize = true) {
  if (source.channel_count() != target.channel_count()) {
    throw Error("channel_pairwise_distances: source has " + std::to_string(source.channel_count()) +
                " channels but target has " + std::to_string(target.channel_count()));
  }
  ImportanceVector out;
  out.components.reserve(source.channel_count());
  const double scale = 0.5 * static_cast<double>(source.length() + target.length());
  for (std::size_t k = 0; k < source.channel_count(); ++k) {
    double d = detail::channel_distance(source.channel(k), target.channel(k), measure, k);
    if (normalize) d /= scale;
    out.components.push_back(d);
  }
  return out;
}

/// Fits one SFA binning per channel on the union of both views' series.
inline std::vector<SfaBins> fit_boss_bins(const MultiViewDataset& dataset, std::size_t source_view, std::size_t target_view,
                                          const std::optional<SfaParams>& params) {
  const auto& src = dataset.views.at(source_view);
  const auto& tgt = dataset.views.at(target_view);
  std::vector<SfaBins> bins;
  for (std::size_t k = 0; k < src.channel_count(); ++k) {
    std::vector<std::vector<double>> corpus;
    std::size_t shortest = std::numeric_limits<std::size_t>::max();
    for (const auto* view : {&src, &tgt}) {
      for (const auto& s : view->samples) {
        corpus.push_back(s.channels[k]);
        shortest = std::min(shortest, s.length());
      }
    }
    bins.push_back(sfa_fit(corpus, params ? *params : default_sfa_params(shortest)));
  }
  return bins;
}

/// One importance vector per corresponding sample pair, in sample order.
inline ImportanceLatentSet build_latent_set(const MultiViewDataset& dataset, std::size_t source_view,
                                            std::size_t target_view, DistanceMeasure measure, bool normalize = true) {
  if (source_view >= dataset.view_count() || target_view >= dataset.view_count()) {
    throw Error("build_latent_set: view index out of range (dataset has " + std::to_string(dataset.view_count()) + " views)");
  }
  if (source_view == target_view) throw Error("build_latent_set: source and target view must differ");
  const auto& src = dataset.views[source_view];
  const auto& tgt = dataset.views[target_view];
  if (src.channel_count() != tgt.channel_count()) {
    throw Error("build_latent_set: view " + std::to_string(source_view) + " has " + std::to_string(src.channel_count()) +
                " channels, view " + std::to_string(target_view) + " has " + std::to_string(tgt.channel_count()));
  }
  if (dataset.size() < 2) throw Error("build_latent_set: need at least 2 samples");
  if (measure.kind == Measure::boss && measure.bins.empty()) {
    measure.bins = fit_boss_bins(dataset, source_view, target_view, measure.sfa);
  }

  ImportanceLatentSet set;
  set.measure = measure.kind;
  set.source_view = source_view;
  set.target_view = target_view;
  set.dimension = src.channel_count();
  set.normalized = normalize;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    auto raw = channel_pairwise_distances(src.samples[i], tgt.samples[i], measure, false);
    ImportanceVector v;
    v.sample_id = dataset.sample_ids[i];
    v.components = raw.components;
    if (normalize) {
      const double scale = 0.5 * static_cast<double>(src.samples[i].length() + tgt.samples[i].length());
      for (double& c : v.components) c /= scale;
    }
    set.raw.push_back(std::move(raw.components));
    set.vectors.push_back(std::move(v));
  }
  return set;
}

inline nlohmann::json to_json(const ImportanceLatentSet& set) {
  nlohmann::json j;
  j["measure"] = to_string(set.measure);
  j["source_view"] = set.source_view;
  j["target_view"] = set.target_view;
  j["K"] = set.dimension;
  j["normalized"] = set.normalized;
  nlohmann::json ids = nlohmann::json::array(), vectors = nlohmann::json::array();
  for (const auto& v : set.vectors) {
    ids.push_back(v.sample_id);
    vectors.push_back(v.components);
  }
  j["sample_ids"] = ids;
  j["vectors"] = vectors;
  j["raw_vectors"] = set.raw;
  return j;
}

inline ImportanceLatentSet latent_set_from_json(const nlohmann::json& j) {
  try {
    ImportanceLatentSet set;
    set.measure = parse_measure(j.at("measure").get<std::string>());
    set.source_view = j.at("source_view").get<std::size_t>();
    set.target_view = j.at("target_view").get<std::size_t>();
    set.dimension = j.at("K").get<std::size_t>();
    set.normalized = j.value("normalized", true);
    const auto vectors = j.at("vectors").get<std::vector<std::vector<double>>>();
    std::vector<std::string> ids = j.value("sample_ids", std::vector<std::string>{});
    for (std::size_t i = 0; i < vectors.size(); ++i) {
      if (vectors[i].size() != set.dimension) throw Error("latent vector " + std::to_string(i) + " has the wrong dimension");
      set.vectors.push_back({vectors[i], i < ids.size() ? ids[i] : std::to_string(i)});
    }
    set.raw = j.value("raw_vectors", vectors);
    return set;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("latent set: ") + e.what());
  }
}

}  // namespace mvtl
