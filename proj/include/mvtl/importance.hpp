#pragma once

// Inter-view importance: draw a mini-batch from Q, stack it into an m x K
// matrix, take its norm g_t, and share a pretraining budget of T epochs
// across source views in proportion to |g_t|.

#include <mvtl/dataset.hpp>
#include <mvtl/density.hpp>
#include <mvtl/distance.hpp>
#include <mvtl/error.hpp>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mvtl {

enum class NormKind { frobenius, spectral, entrywise_l1 };

inline std::string to_string(NormKind k) {
  switch (k) {
    case NormKind::frobenius: return "frobenius";
    case NormKind::spectral: return "spectral";
    case NormKind::entrywise_l1: return "entrywise_l1";
  }
  return "?";
}

inline NormKind parse_norm_kind(std::string_view name) {
  if (name == "frobenius") return NormKind::frobenius;
  if (name == "spectral") return NormKind::spectral;
  if (name == "entrywise_l1" || name == "l1") return NormKind::entrywise_l1;
  throw Error("unknown matrix norm '" + std::string(name) + "'");
}

/// How rows of the importance matrix are produced.
///  draw:            rows are K-vectors sampled from Q.
///  density_weights: rows are the scalars Q(z) for z ~ N(0, I).
enum class SamplingMode { draw, density_weights };

inline std::string to_string(SamplingMode m) { return m == SamplingMode::draw ? "draw" : "density_weights"; }

inline SamplingMode parse_sampling_mode(std::string_view name) {
  if (name == "draw") return SamplingMode::draw;
  if (name == "density_weights") return SamplingMode::density_weights;
  throw Error("unknown sampling mode '" + std::string(name) + "'");
}

struct SamplingConfig {
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;
  NormKind norm = NormKind::frobenius;
  /// Report 1 / (1 + g_t) instead of g_t.
  bool invert_importance = false;
  SamplingMode mode = SamplingMode::draw;
};

/// m sampled rows S^t_1 ... S^t_m.
struct ImportanceMatrix {
  Eigen::MatrixXd values;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

inline ImportanceMatrix draw_importance_matrix(const DensityModel& model, const SamplingConfig& config) {
  if (config.batch_size == 0) throw Error("importance batch size must be positive");
  ImportanceMatrix out;
  if (config.mode == SamplingMode::draw) {
    out.values = model.sample(config.batch_size, config.seed);
  } else {
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    out.values.resize(static_cast<Eigen::Index>(config.batch_size), 1);
    Eigen::VectorXd z(static_cast<Eigen::Index>(model.dimension()));
    for (Eigen::Index i = 0; i < out.values.rows(); ++i) {
      for (Eigen::Index k = 0; k < z.size(); ++k) z(k) = normal(rng);
      out.values(i, 0) = std::exp(model.log_density(z));
    }
  }
  if (!out.values.allFinite()) throw Error("importance matrix has non-finite entries");
  return out;
}

inline constexpr double kPowerIterationTolerance = 1e-10;
inline constexpr int kPowerIterationMaxSteps = 10000;

/// Largest singular value by power iteration on M^T M.
inline double spectral_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) throw Error("spectral_norm: empty matrix");
  const Eigen::MatrixXd gram = m.transpose() * m;
  if (gram.cwiseAbs().maxCoeff() == 0.0) return 0.0;
  const Eigen::Index k = gram.rows();
  // Start from the all-ones vector; fall back to basis vectors if it lies in
  // the null space.
  for (Eigen::Index start = -1; start < k; ++start) {
    Eigen::VectorXd v = start < 0 ? Eigen::VectorXd(Eigen::VectorXd::Ones(k)) : Eigen::VectorXd(Eigen::VectorXd::Unit(k, start));
    v.normalize();
    double lambda = 0.0;
    bool null_start = false;
    for (int step = 0; step < kPowerIterationMaxSteps; ++step) {
      Eigen::VectorXd w = gram * v;
      const double next = w.norm();
      if (next == 0.0) {
        null_start = true;
        break;
      }
      v = w / next;
      if (std::abs(next - lambda) <= kPowerIterationTolerance * next) return std::sqrt(next);
      lambda = next;
    }
    if (!null_start) {
      throw ConvergenceError("spectral_norm: power iteration did not converge in " + std::to_string(kPowerIterationMaxSteps) +
                             " steps");
    }
  }
  return 0.0;
}

inline double matrix_norm(const Eigen::MatrixXd& m, NormKind kind) {
  if (m.size() == 0) throw Error("matrix_norm: empty matrix");
  switch (kind) {
    case NormKind::frobenius: return std::sqrt(m.array().square().sum());
    case NormKind::entrywise_l1: return m.cwiseAbs().sum();
    case NormKind::spectral: return spectral_norm(m);
  }
  return 0.0;
}

inline double matrix_norm(const ImportanceMatrix& m, NormKind kind) { return matrix_norm(m.values, kind); }

// ---------------------------------------------------------------------------
// Scoring

struct ScoringSettings {
  DistanceMeasure measure;
  bool normalize_distances = true;
  DensityOptions density;
  SamplingConfig sampling;
};

/// Intermediate results of one source-view score.
struct ScoreArtifacts {
  ImportanceLatentSet latent;
  DensityModel density;
  ImportanceMatrix matrix;
  double norm = 0.0;
  NormKind norm_used = NormKind::frobenius;
  double score = 0.0;
};

/// latent set -> density -> importance matrix -> norm. With
/// invert_importance the result is 1 / (1 + norm).
inline ScoreArtifacts score_source_view_detailed(const MultiViewDataset& dataset, std::size_t source_view,
                                                 std::size_t target_view, const ScoringSettings& settings) {
  ScoreArtifacts a;
  a.latent = build_latent_set(dataset, source_view, target_view, settings.measure, settings.normalize_distances);
  a.density = fit_density(a.latent, settings.density);
  a.matrix = draw_importance_matrix(a.density, settings.sampling);
  a.norm_used = settings.sampling.norm;
  try {
    a.norm = matrix_norm(a.matrix, settings.sampling.norm);
  } catch (const ConvergenceError& e) {
    warn(std::string(e.what()) + "; falling back to the Frobenius norm");
    a.norm_used = NormKind::frobenius;
    a.norm = matrix_norm(a.matrix, NormKind::frobenius);
  }
  a.score = settings.sampling.invert_importance ? 1.0 / (1.0 + a.norm) : a.norm;
  return a;
}

inline double score_source_view(const MultiViewDataset& dataset, std::size_t source_view, std::size_t target_view,
                                const ScoringSettings& settings) {
  return score_source_view_detailed(dataset, source_view, target_view, settings).score;
}

// ---------------------------------------------------------------------------
// Epoch allocation

/// Integer shares of `total` proportional to |scores| (largest remainder;
/// equal remainders go to the lower index). All-zero scores are treated
/// as equal.
inline std::vector<std::size_t> allocate_epochs(std::span<const double> scores, std::size_t total) {
  if (scores.empty()) throw Error("allocate_epochs: no scores");
  std::vector<double> s;
  for (double x : scores) {
    if (!std::isfinite(x)) throw Error("allocate_epochs: non-finite score");
    s.push_back(std::abs(x));
  }
  double sum = std::accumulate(s.begin(), s.end(), 0.0);
  if (sum == 0.0) {
    warn("allocate_epochs: all scores are zero; allocating uniformly");
    std::fill(s.begin(), s.end(), 1.0);
    sum = static_cast<double>(s.size());
  }
  const double t = static_cast<double>(total);
  std::vector<std::size_t> out(s.size());
  std::vector<long long> remainder(s.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    double share = s[i] / sum * t;
    // Absorb rounding noise so that rescaled scores give identical shares.
    const double nearest = std::round(share);
    if (std::abs(share - nearest) < 1e-9 * std::max(1.0, share)) share = nearest;
    const double whole = std::floor(share);
    out[i] = static_cast<std::size_t>(whole);
    remainder[i] = std::llround((share - whole) * 1e9);
    assigned += out[i];
  }
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++out[order[k % order.size()]];
  return out;
}

struct TransferSchedule {
  std::size_t target_view = 0;
  std::vector<std::size_t> source_views;
  std::vector<double> scores;
  std::vector<double> norms;
  std::vector<std::size_t> epochs;
  std::size_t total_epochs = 0;

  bool operator==(const TransferSchedule&) const = default;
};

/// Every view other than `target_view`, ascending.
inline std::vector<std::size_t> source_views_for(std::size_t view_count, std::size_t target_view) {
  std::vector<std::size_t> out;
  for (std::size_t v = 0; v < view_count; ++v)
    if (v != target_view) out.push_back(v);
  return out;
}

/// Scores every source view against `target_view` and allocates `total_epochs`.
/// All source views share the same density and sampling seeds.
inline TransferSchedule build_schedule(const MultiViewDataset& dataset, std::size_t target_view, const ScoringSettings& settings,
                                       std::size_t total_epochs, std::vector<ScoreArtifacts>* artifacts = nullptr) {
  if (target_view >= dataset.view_count()) throw Error("target view " + std::to_string(target_view) + " is out of range");
  TransferSchedule schedule;
  schedule.target_view = target_view;
  schedule.total_epochs = total_epochs;
  schedule.source_views = source_views_for(dataset.view_count(), target_view);
  if (schedule.source_views.empty()) throw Error("dataset has no source views");
  for (std::size_t v : schedule.source_views) {
    auto a = score_source_view_detailed(dataset, v, target_view, settings);
    schedule.scores.push_back(a.score);
    schedule.norms.push_back(a.norm);
    if (artifacts) artifacts->push_back(std::move(a));
  }
  schedule.epochs = total_epochs == 0 ? std::vector<std::size_t>(schedule.scores.size(), 0)
                                      : allocate_epochs(schedule.scores, total_epochs);
  return schedule;
}

inline nlohmann::json to_json(const TransferSchedule& s) {
  return {{"target_view", s.target_view}, {"source_views", s.source_views}, {"scores", s.scores},
          {"norms", s.norms},             {"epochs", s.epochs},             {"total_epochs", s.total_epochs}};
}

inline TransferSchedule schedule_from_json(const nlohmann::json& j) {
  try {
    TransferSchedule s;
    s.target_view = j.at("target_view").get<std::size_t>();
    s.scores = j.at("scores").get<std::vector<double>>();
    s.epochs = j.at("epochs").get<std::vector<std::size_t>>();
    s.total_epochs = j.at("total_epochs").get<std::size_t>();
    s.norms = j.value("norms", std::vector<double>{});
    if (j.contains("source_views")) {
      s.source_views = j.at("source_views").get<std::vector<std::size_t>>();
    } else {
      for (std::size_t i = 0; i < s.scores.size(); ++i) s.source_views.push_back(i < s.target_view ? i : i + 1);
    }
    if (s.scores.size() != s.source_views.size() || s.epochs.size() != s.source_views.size()) {
      throw Error("schedule: scores, epochs and source_views differ in length");
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("schedule: ") + e.what());
  }
}

/// The scores.json document: schedule plus the settings that produced it.
inline nlohmann::json scores_document(const TransferSchedule& s, const ScoringSettings& settings) {
  auto j = to_json(s);
  j["measure"] = to_string(settings.measure.kind);
  j["norm"] = to_string(settings.sampling.norm);
  j["density"] = settings.density.method ? to_string(*settings.density.method) : "auto";
  j["invert_importance"] = settings.sampling.invert_importance;
  j["sampling_mode"] = to_string(settings.sampling.mode);
  j["batch_size"] = settings.sampling.batch_size;
  j["normalize_distances"] = settings.normalize_distances;
  j["seeds"] = {{"density", settings.density.flow.seed}, {"sampling", settings.sampling.seed}};
  return j;
}

}  // namespace mvtl
