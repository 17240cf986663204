#pragma once

// Classifiers used for pretraining and fine-tuning:
//   mlp: Dense(128)+ReLU, Dense(128)+ReLU, Dense(c), softmax over the
//        flattened d x m input.
//   fcn: 3 x [Conv1D(128/256/128) + BatchNorm + ReLU + Dropout(0.2)],
//        global average pooling, Dense(c), softmax.

#include <mvtl/adam.hpp>
#include <mvtl/dataset.hpp>
#include <mvtl/error.hpp>
#include <mvtl/nn/layers.hpp>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mvtl::nn {

enum class Architecture { mlp, fcn };

inline std::string to_string(Architecture a) { return a == Architecture::mlp ? "mlp" : "fcn"; }

inline Architecture parse_architecture(std::string_view name) {
  if (name == "mlp") return Architecture::mlp;
  if (name == "fcn") return Architecture::fcn;
  throw Error("unknown architecture '" + std::string(name) + "'");
}

struct NetworkConfig {
  Architecture arch = Architecture::mlp;
  std::size_t input_channels = 1;
  std::size_t input_length = 1;
  std::size_t class_count = 2;
  double dropout_rate = 0.2;
  std::array<std::size_t, 3> kernel_sizes{8, 5, 3};
  std::array<std::size_t, 3> filters{128, 256, 128};
  std::size_t hidden_units = 128;
  std::uint64_t seed = 0;

  void validate() const {
    if (input_channels == 0 || input_length == 0) throw Error("network input must be non-empty");
    if (class_count < 2) throw Error("network needs at least 2 classes");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw Error("dropout rate must lie in [0, 1)");
    if (arch == Architecture::mlp && hidden_units == 0) throw Error("MLP hidden width must be positive");
    if (arch == Architecture::fcn) {
      for (std::size_t k : kernel_sizes) {
        if (k == 0 || k > input_length) {
          throw Error("FCN kernel size " + std::to_string(k) + " does not fit input length " + std::to_string(input_length));
        }
      }
      for (std::size_t f : filters)
        if (f == 0) throw Error("FCN filter counts must be positive");
    }
  }

  /// Name of the first field that makes two configs shape-incompatible, or empty.
  std::string shape_mismatch(const NetworkConfig& o) const {
    if (arch != o.arch) return "architecture";
    if (input_channels != o.input_channels) return "input_channels (d)";
    if (input_length != o.input_length) return "input_length (m)";
    if (class_count != o.class_count) return "class_count (c)";
    if (arch == Architecture::fcn && kernel_sizes != o.kernel_sizes) return "kernel_sizes";
    if (arch == Architecture::fcn && filters != o.filters) return "filters";
    if (arch == Architecture::mlp && hidden_units != o.hidden_units) return "hidden_units";
    return {};
  }
};

class Network {
 public:
  Network() = default;
  Network(const Network& o) : config_(o.config_), mode_(o.mode_), rng_(o.rng_) {
    for (const auto& l : o.layers_) layers_.push_back(l->clone());
  }
  Network& operator=(const Network& o) {
    if (this != &o) {
      Network copy(o);
      *this = std::move(copy);
    }
    return *this;
  }
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  explicit Network(const NetworkConfig& config);

  const NetworkConfig& config() const { return config_; }
  Mode mode() const { return mode_; }
  void set_mode(Mode m) { mode_ = m; }
  /// Reseeds the generator behind dropout masks.
  void seed_dropout(std::uint64_t seed) { rng_.seed(seed); }

  std::size_t input_features() const { return config_.input_channels * config_.input_length; }
  std::vector<std::unique_ptr<Layer>>& layers() { return layers_; }
  const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }

  /// Unnormalized class scores in the current mode.
  Mat logits(const Mat& x);
  /// Softmax probabilities in the current mode.
  Mat forward(const Mat& x);
  /// Mean categorical cross-entropy; parameter gradients are left in the layers.
  /// Optionally hands back the logits of that forward pass.
  double loss_and_gradients(const Mat& x, std::span<const std::size_t> labels, Mat* logits_out = nullptr);

  /// Parameters in a fixed order, named "<layer index>.<kind>.<name>".
  std::vector<Param> parameters();
  std::vector<Buffer> buffers();
  std::size_t parameter_count();

 private:
  NetworkConfig config_;
  std::vector<std::unique_ptr<Layer>> layers_;
  Mode mode_ = Mode::train;
  std::mt19937_64 rng_;
};

inline Network::Network(const NetworkConfig& config) : config_(config), rng_(config.seed) {
  config.validate();
  std::mt19937_64 init(config.seed);
  const std::size_t d = config.input_channels, m = config.input_length, c = config.class_count;
  if (config.arch == Architecture::mlp) {
    layers_.push_back(std::make_unique<Dense>(d * m, config.hidden_units, init));
    layers_.push_back(std::make_unique<ReLU>());
    layers_.push_back(std::make_unique<Dense>(config.hidden_units, config.hidden_units, init));
    layers_.push_back(std::make_unique<ReLU>());
    layers_.push_back(std::make_unique<Dense>(config.hidden_units, c, init));
  } else {
    std::size_t in = d;
    for (std::size_t b = 0; b < 3; ++b) {
      layers_.push_back(std::make_unique<Conv1D>(in, config.filters[b], config.kernel_sizes[b], m, init));
      layers_.push_back(std::make_unique<BatchNorm1D>(config.filters[b], m));
      layers_.push_back(std::make_unique<ReLU>());
      layers_.push_back(std::make_unique<Dropout>(config.dropout_rate));
      in = config.filters[b];
    }
    layers_.push_back(std::make_unique<GlobalAveragePool>(in, m));
    layers_.push_back(std::make_unique<Dense>(in, c, init));
  }
}

inline Network init_network(const NetworkConfig& config) { return Network(config); }

inline Mat Network::logits(const Mat& x) {
  if (x.cols() != static_cast<Eigen::Index>(input_features())) {
    throw Error("network expects " + std::to_string(input_features()) + " features per sample, got " + std::to_string(x.cols()));
  }
  Mat h = x;
  for (auto& l : layers_) h = l->forward(h, mode_, rng_);
  return h;
}

namespace detail {

inline Mat softmax_rows(const Mat& z) {
  Mat p = z;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double top = z.row(i).maxCoeff();
    p.row(i) = (z.row(i).array() - top).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

}  // namespace detail

inline Mat Network::forward(const Mat& x) { return detail::softmax_rows(logits(x)); }

inline double Network::loss_and_gradients(const Mat& x, std::span<const std::size_t> labels, Mat* logits_out) {
  if (static_cast<Eigen::Index>(labels.size()) != x.rows()) throw Error("label count does not match batch size");
  if (x.rows() == 0) throw Error("empty batch");
  const Mat z = logits(x);
  const double n = static_cast<double>(x.rows());
  Mat g(z.rows(), z.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const auto y = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)]);
    if (y >= z.cols()) throw Error("label " + std::to_string(y) + " is out of range");
    const double top = z.row(i).maxCoeff();
    const double lse = top + std::log((z.row(i).array() - top).exp().sum());
    loss -= z(i, y) - lse;
    g.row(i) = (z.row(i).array() - lse).exp() / n;
    g(i, y) -= 1.0 / n;
  }
  loss /= n;
  if (!std::isfinite(loss)) throw Error("non-finite loss");
  if (logits_out) *logits_out = z;
  Mat grad = g;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) grad = (*it)->backward(grad);
  return loss;
}

inline std::vector<Param> Network::parameters() {
  std::vector<Param> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    for (auto p : layers_[i]->params()) {
      p.name = std::to_string(i) + "." + layers_[i]->kind() + "." + p.name;
      out.push_back(p);
    }
  }
  return out;
}

inline std::vector<Buffer> Network::buffers() {
  std::vector<Buffer> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    for (auto b : layers_[i]->buffers()) {
      b.name = std::to_string(i) + "." + layers_[i]->kind() + "." + b.name;
      out.push_back(b);
    }
  }
  return out;
}

inline std::size_t Network::parameter_count() {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += static_cast<std::size_t>(p.value->size());
  return n;
}

// ---------------------------------------------------------------------------
// Data

/// Labelled samples flattened to rows (channel-major).
struct Batch {
  Mat inputs;
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
};

/// All samples of `view`, flattened.
inline Batch make_batch(const MultiViewDataset& dataset, std::size_t view) {
  const auto& v = dataset.views.at(view);
  Batch b;
  const std::size_t d = v.channel_count(), m = v.length();
  b.inputs.resize(static_cast<Eigen::Index>(dataset.size()), static_cast<Eigen::Index>(d * m));
  for (std::size_t i = 0; i < dataset.size(); ++i)
    for (std::size_t k = 0; k < d; ++k)
      for (std::size_t t = 0; t < m; ++t)
        b.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k * m + t)) = v.samples[i].channels[k][t];
  b.labels = dataset.labels;
  return b;
}

// ---------------------------------------------------------------------------
// Optimization

using OptimizerState = AdamState<Mat>;

struct TrainConfig {
  std::size_t batch_size = 64;
  AdamConfig adam;
  std::uint64_t seed = 0;
  /// Only update the final dense layer.
  bool freeze_features = false;

  void validate() const {
    if (batch_size == 0) throw Error("training batch size must be positive");
    adam.validate();
  }
};

/// One AdaM update from the gradients currently stored in `net`.
inline void adam_step(Network& net, OptimizerState& state, const TrainConfig& config) {
  auto params = net.parameters();
  std::vector<Mat*> values;
  std::vector<const Mat*> grads;
  const std::string last_prefix = std::to_string(net.layers().size() - 1) + ".";
  for (auto& p : params) {
    if (config.freeze_features && p.name.rfind(last_prefix, 0) != 0) continue;
    values.push_back(p.value);
    grads.push_back(p.grad);
  }
  state.step(values, grads, config.adam);
}

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

using TrainingLog = std::vector<EpochRecord>;

namespace detail {

inline std::size_t argmax_row(const Mat& p, Eigen::Index row) {
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < p.cols(); ++j)
    if (p(row, j) > p(row, best)) best = j;
  return static_cast<std::size_t>(best);
}

}  // namespace detail

/// Mini-batch AdaM for `epochs` epochs with a fresh optimizer state. Each
/// epoch reshuffles the data; loss and accuracy are averaged over the
/// training-mode forward passes of that epoch. Leaves `net` in eval mode.
inline TrainingLog train(Network& net, const Batch& data, const TrainConfig& config, std::size_t epochs) {
  config.validate();
  TrainingLog log;
  if (epochs == 0) return log;
  if (data.size() == 0) throw Error("train: empty training data");
  std::mt19937_64 shuffle_rng(config.seed);
  net.seed_dropout(config.seed ^ 0x5bd1e9955bd1e995ULL);
  OptimizerState state;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    net.set_mode(Mode::train);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      Mat x(static_cast<Eigen::Index>(stop - start), data.inputs.cols());
      std::vector<std::size_t> y;
      for (std::size_t i = start; i < stop; ++i) {
        x.row(static_cast<Eigen::Index>(i - start)) = data.inputs.row(static_cast<Eigen::Index>(order[i]));
        y.push_back(data.labels[order[i]]);
      }
      double loss = 0.0;
      Mat z;
      try {
        loss = net.loss_and_gradients(x, y, &z);
      } catch (const Error& err) {
        throw Error("train: " + std::string(err.what()) + " at epoch " + std::to_string(e + 1));
      }
      for (Eigen::Index i = 0; i < z.rows(); ++i)
        if (detail::argmax_row(z, i) == y[static_cast<std::size_t>(i)]) ++correct;
      loss_sum += loss * static_cast<double>(stop - start);
      adam_step(net, state, config);
    }
    EpochRecord r;
    r.epoch = e + 1;
    r.loss = loss_sum / static_cast<double>(data.size());
    r.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    log.push_back(r);
  }
  net.set_mode(Mode::eval);
  return log;
}

/// Fraction of samples whose arg-max class (lowest index on ties) matches
/// the label, in eval mode.
inline double evaluate(Network& net, const Batch& data) {
  if (data.size() == 0) throw Error("evaluate: empty data");
  const Mode previous = net.mode();
  net.set_mode(Mode::eval);
  const Mat p = net.forward(data.inputs);
  net.set_mode(previous);
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    if (detail::argmax_row(p, i) == data.labels[static_cast<std::size_t>(i)]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

/// Copies every parameter and batch-norm statistic of `source` into
/// `target`. The configs must describe identically shaped networks.
inline Network& transfer_weights(Network& source, Network& target) {
  const auto mismatch = source.config().shape_mismatch(target.config());
  if (!mismatch.empty()) throw Error("transfer_weights: networks differ in " + mismatch);
  auto sp = source.parameters();
  auto tp = target.parameters();
  for (std::size_t i = 0; i < sp.size(); ++i) *tp[i].value = *sp[i].value;
  auto sb = source.buffers();
  auto tb = target.buffers();
  for (std::size_t i = 0; i < sb.size(); ++i) *tb[i].value = *sb[i].value;
  return target;
}

// ---------------------------------------------------------------------------
// Persistence

inline nlohmann::json to_json(const NetworkConfig& c) {
  return {{"arch", to_string(c.arch)},
          {"input_channels", c.input_channels},
          {"input_length", c.input_length},
          {"class_count", c.class_count},
          {"dropout_rate", c.dropout_rate},
          {"kernel_sizes", c.kernel_sizes},
          {"filters", c.filters},
          {"hidden_units", c.hidden_units},
          {"seed", c.seed}};
}

/// Reads the keys present in `j` on top of `c`.
inline NetworkConfig network_config_from_json(const nlohmann::json& j, NetworkConfig c = {}) {
  if (j.contains("arch")) c.arch = parse_architecture(j.at("arch").get<std::string>());
  c.input_channels = j.value("input_channels", c.input_channels);
  c.input_length = j.value("input_length", c.input_length);
  c.class_count = j.value("class_count", c.class_count);
  c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
  c.kernel_sizes = j.value("kernel_sizes", c.kernel_sizes);
  c.filters = j.value("filters", c.filters);
  c.hidden_units = j.value("hidden_units", c.hidden_units);
  c.seed = j.value("seed", c.seed);
  return c;
}

namespace detail {

inline nlohmann::json tensor_to_json(const Mat& m) {
  return {{"shape", {m.rows(), m.cols()}}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

inline void tensor_from_json(const nlohmann::json& j, Mat& target, const std::string& name) {
  const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (shape.size() != 2 || shape[0] != target.rows() || shape[1] != target.cols() ||
      static_cast<Eigen::Index>(data.size()) != target.size()) {
    throw Error("checkpoint tensor " + name + " has the wrong shape");
  }
  std::copy(data.begin(), data.end(), target.data());
}

}  // namespace detail

/// Checkpoint with the config, every parameter tensor and batch-norm
/// statistic (row-major), and the seeds that produced it.
inline nlohmann::json checkpoint_to_json(Network& net, const nlohmann::json& seeds = nlohmann::json::object()) {
  nlohmann::json j;
  j["config"] = to_json(net.config());
  nlohmann::json params = nlohmann::json::object();
  for (const auto& p : net.parameters()) params[p.name] = detail::tensor_to_json(*p.value);
  j["parameters"] = params;
  nlohmann::json stats = nlohmann::json::object();
  for (const auto& b : net.buffers()) stats[b.name] = detail::tensor_to_json(*b.value);
  j["batchnorm_statistics"] = stats;
  j["seeds"] = seeds;
  return j;
}

inline Network checkpoint_from_json(const nlohmann::json& j) {
  try {
    Network net(network_config_from_json(j.at("config")));
    for (auto& p : net.parameters()) detail::tensor_from_json(j.at("parameters").at(p.name), *p.value, p.name);
    for (auto& b : net.buffers()) detail::tensor_from_json(j.at("batchnorm_statistics").at(b.name), *b.value, b.name);
    net.set_mode(Mode::eval);
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint: ") + e.what());
  }
}

/// CSV "epoch,loss,train_accuracy".
inline void write_training_log(const TrainingLog& log, std::ostream& out) {
  out << "epoch,loss,train_accuracy\n";
  for (const auto& r : log) out << r.epoch << ',' << mvtl::detail::format_double(r.loss) << ',' << mvtl::detail::format_double(r.accuracy) << '\n';
}

}  // namespace mvtl::nn
