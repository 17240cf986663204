#pragma once

// Q(S): the density fitted over a latent set, either a KDE (low dimension)
// or a normalizing flow (high dimension), plus (de)serialization and grid
// evaluation for plotting.

#include <mvtl/density/flow.hpp>
#include <mvtl/density/kde.hpp>
#include <mvtl/distance/latent.hpp>
#include <mvtl/error.hpp>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace mvtl {

enum class DensityMethod { kde, flow };

inline std::string to_string(DensityMethod m) { return m == DensityMethod::kde ? "kde" : "flow"; }

inline DensityMethod parse_density_method(std::string_view name) {
  if (name == "kde") return DensityMethod::kde;
  if (name == "flow") return DensityMethod::flow;
  throw Error("unknown density method '" + std::string(name) + "'");
}

/// Dimensions up to this value use the KDE by default.
inline constexpr std::size_t kMaxKdeDimension = 3;

inline DensityMethod select_density_method(std::size_t dimension, std::optional<DensityMethod> override_method = {}) {
  if (dimension == 0) throw Error("select_density_method: dimension must be positive");
  if (override_method) return *override_method;
  return dimension <= kMaxKdeDimension ? DensityMethod::kde : DensityMethod::flow;
}

struct DensityOptions {
  std::optional<DensityMethod> method;
  BandwidthRule bandwidth;
  FlowConfig flow;
};

class DensityModel {
 public:
  DensityModel() = default;
  explicit DensityModel(KdeModel kde) : model_(std::move(kde)) {}
  explicit DensityModel(FlowModel flow) : model_(std::move(flow)) {}

  DensityMethod method() const { return std::holds_alternative<KdeModel>(model_) ? DensityMethod::kde : DensityMethod::flow; }
  std::size_t dimension() const {
    return std::visit([](const auto& m) { return m.dimension(); }, model_);
  }
  const KdeModel& kde() const { return std::get<KdeModel>(model_); }
  const FlowModel& flow() const { return std::get<FlowModel>(model_); }

  double log_density(const Eigen::VectorXd& x) const {
    if (method() == DensityMethod::kde) return kde_log_density(kde(), x);
    return flow().log_density(x.transpose())(0);
  }

  /// `count` draws, one per row; deterministic in `seed`.
  Eigen::MatrixXd sample(std::size_t count, std::uint64_t seed) const;

 private:
  std::variant<KdeModel, FlowModel> model_;
};

/// Standard-normal latents pushed through the inverse flow.
inline Eigen::MatrixXd sample_flow(const FlowModel& model, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd latent(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(model.dimension()));
  for (Eigen::Index i = 0; i < latent.rows(); ++i)
    for (Eigen::Index k = 0; k < latent.cols(); ++k) latent(i, k) = normal(rng);
  return model.inverse(latent);
}

inline Eigen::MatrixXd DensityModel::sample(std::size_t count, std::uint64_t seed) const {
  if (method() == DensityMethod::kde) return sample_kde(kde(), count, seed);
  return sample_flow(flow(), count, seed);
}

inline KdeModel fit_kde(const ImportanceLatentSet& latent, const BandwidthRule& rule = {}) {
  return fit_kde(latent.matrix(), rule);
}

inline FlowModel fit_flow(const ImportanceLatentSet& latent, const FlowConfig& config) {
  return fit_flow(latent.matrix(), config);
}

inline DensityModel fit_density(const ImportanceLatentSet& latent, const DensityOptions& options) {
  const auto method = select_density_method(latent.dimension, options.method);
  if (method == DensityMethod::kde) return DensityModel(fit_kde(latent, options.bandwidth));
  return DensityModel(fit_flow(latent, options.flow));
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw Error("matrix data has the wrong length");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j2 = 0; j2 < cols; ++j2) m(i, j2) = data[static_cast<std::size_t>(i * cols + j2)];
  return m;
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace detail

inline nlohmann::json to_json(const FlowConfig& c) {
  return {{"layers", c.layers},
          {"width", c.width},
          {"iterations", c.iterations},
          {"learning_rate", c.learning_rate},
          {"perturbation", c.perturbation},
          {"seed", c.seed}};
}

inline FlowConfig flow_config_from_json(const nlohmann::json& j, FlowConfig c = {}) {
  c.layers = j.value("layers", c.layers);
  c.width = j.value("width", c.width);
  c.iterations = j.value("iterations", c.iterations);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.perturbation = j.value("perturbation", c.perturbation);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

inline nlohmann::json to_json(const DensityModel& model) {
  nlohmann::json j;
  j["variant"] = to_string(model.method());
  j["dimension"] = model.dimension();
  if (model.method() == DensityMethod::kde) {
    j["support_points"] = detail::matrix_to_json(model.kde().support());
    j["bandwidth"] = detail::to_std(model.kde().bandwidth());
    j["H_diagonal"] = detail::to_std(model.kde().bandwidth_matrix_diagonal());
  } else {
    const auto& f = model.flow();
    j["config"] = to_json(f.config());
    j["mean"] = detail::to_std(f.mean());
    j["scale"] = detail::to_std(f.scale());
    static constexpr const char* names[] = {"W1", "b1", "W2", "b2", "W3", "b3"};
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& L : f.layers()) {
      nlohmann::json lj;
      lj["mask"] = L.mask;
      for (int p = 0; p < CouplingLayer::kParamCount; ++p) lj[names[p]] = detail::matrix_to_json(L.params[static_cast<std::size_t>(p)]);
      layers.push_back(lj);
    }
    j["layers"] = layers;
  }
  return j;
}

inline DensityModel density_model_from_json(const nlohmann::json& j) {
  try {
    const auto method = parse_density_method(j.at("variant").get<std::string>());
    const auto d = j.at("dimension").get<std::size_t>();
    if (method == DensityMethod::kde) {
      KdeModel kde(detail::matrix_from_json(j.at("support_points")), detail::to_eigen(j.at("bandwidth").get<std::vector<double>>()));
      if (kde.dimension() != d) throw Error("KDE dimension mismatch");
      return DensityModel(std::move(kde));
    }
    FlowModel flow(d, flow_config_from_json(j.at("config")));
    flow.set_standardization(detail::to_eigen(j.at("mean").get<std::vector<double>>()),
                             detail::to_eigen(j.at("scale").get<std::vector<double>>()));
    const auto& layers = j.at("layers");
    if (layers.size() != flow.layers().size()) throw Error("flow layer count does not match its config");
    static constexpr const char* names[] = {"W1", "b1", "W2", "b2", "W3", "b3"};
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto& L = flow.layers()[l];
      if (layers[l].at("mask").get<std::vector<int>>() != L.mask) throw Error("flow mask mismatch in layer " + std::to_string(l));
      for (int p = 0; p < CouplingLayer::kParamCount; ++p) {
        auto m = detail::matrix_from_json(layers[l].at(names[p]));
        auto& target = L.params[static_cast<std::size_t>(p)];
        if (m.rows() != target.rows() || m.cols() != target.cols()) {
          throw Error(std::string("flow parameter ") + names[p] + " has the wrong shape in layer " + std::to_string(l));
        }
        target = std::move(m);
      }
    }
    return DensityModel(std::move(flow));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("density model: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Grid evaluation

/// Regular grid over one or two coordinates. Coordinates not on the grid
/// are held at `fixed` (a slice through the density).
struct DensityGrid {
  std::vector<std::size_t> axes;   // 1 or 2 coordinate indices
  std::vector<double> lower, upper;
  std::vector<std::size_t> points;  // per axis, >= 2
  Eigen::VectorXd fixed;            // full-dimension anchor point

  void validate(std::size_t dimension) const {
    if (axes.empty() || axes.size() > 2) throw Error("density grids are 1-D or 2-D");
    if (lower.size() != axes.size() || upper.size() != axes.size() || points.size() != axes.size()) {
      throw Error("grid bounds and resolution must match the number of axes");
    }
    for (std::size_t a = 0; a < axes.size(); ++a) {
      if (axes[a] >= dimension) throw Error("grid axis out of range");
      if (!(lower[a] < upper[a])) throw Error("grid lower bound must be below the upper bound");
      if (points[a] < 2) throw Error("grid needs at least 2 points per axis");
    }
    if (fixed.size() != static_cast<Eigen::Index>(dimension)) throw Error("grid anchor has the wrong dimension");
  }
};

/// Marginal of a diagonal-bandwidth KDE over the coordinates in `axes`,
/// which is again a KDE on the selected support columns.
inline KdeModel marginal_kde(const KdeModel& model, const std::vector<std::size_t>& axes) {
  if (axes.empty()) throw Error("marginal_kde: no axes selected");
  Eigen::MatrixXd support(model.support().rows(), static_cast<Eigen::Index>(axes.size()));
  Eigen::VectorXd bandwidth(static_cast<Eigen::Index>(axes.size()));
  for (std::size_t a = 0; a < axes.size(); ++a) {
    if (axes[a] >= model.dimension()) throw Error("marginal_kde: axis " + std::to_string(axes[a]) + " is out of range");
    support.col(static_cast<Eigen::Index>(a)) = model.support().col(static_cast<Eigen::Index>(axes[a]));
    bandwidth(static_cast<Eigen::Index>(a)) = model.bandwidth()(static_cast<Eigen::Index>(axes[a]));
  }
  return KdeModel(std::move(support), std::move(bandwidth));
}

/// Writes CSV "x<axis>...,density" with one row per grid point (first axis
/// varies slowest).
inline void write_density_grid(const DensityModel& model, const DensityGrid& grid, std::ostream& out) {
  grid.validate(model.dimension());
  for (std::size_t a : grid.axes) out << 'x' << (a + 1) << ',';
  out << "density\n";
  auto coord = [&](std::size_t a, std::size_t i) {
    return grid.lower[a] + (grid.upper[a] - grid.lower[a]) * static_cast<double>(i) / static_cast<double>(grid.points[a] - 1);
  };
  const std::size_t n0 = grid.points[0];
  const std::size_t n1 = grid.axes.size() == 2 ? grid.points[1] : 1;
  Eigen::VectorXd x = grid.fixed;
  for (std::size_t i = 0; i < n0; ++i) {
    x(static_cast<Eigen::Index>(grid.axes[0])) = coord(0, i);
    for (std::size_t k = 0; k < n1; ++k) {
      if (grid.axes.size() == 2) x(static_cast<Eigen::Index>(grid.axes[1])) = coord(1, k);
      const double density = std::exp(model.log_density(x));
      out << detail::format_double(coord(0, i)) << ',';
      if (grid.axes.size() == 2) out << detail::format_double(coord(1, k)) << ',';
      out << detail::format_double(density) << '\n';
    }
  }
}

}  // namespace mvtl
