#pragma once

// Generator for small multi-view fixtures with a known relationship between
// views: view 0 carries a class-dependent signal, view 1 is view 0 plus
// small Gaussian noise, and any further views are independent noise.

#include <mvtl/dataset.hpp>
#include <mvtl/error.hpp>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>

namespace mvtl {

struct SyntheticSpec {
  std::size_t views = 3;
  std::size_t classes = 3;
  std::size_t samples_per_class = 40;
  std::size_t channels = 2;
  std::size_t length = 32;
  /// Noise added to the class signal in view 0.
  double signal_noise = 1.2;
  /// Standard deviation separating view 1 from view 0.
  double correlated_noise = 0.1;
  std::size_t groups = 4;
  std::uint64_t seed = 7;

  void validate() const {
    if (views < 2) throw Error("synthetic data needs at least 2 views");
    if (classes < 2) throw Error("synthetic data needs at least 2 classes");
    if (samples_per_class == 0 || channels == 0 || length == 0) throw Error("synthetic sizes must be positive");
    if (!(signal_noise >= 0.0) || !(correlated_noise >= 0.0)) throw Error("noise levels must be non-negative");
    if (groups == 0) throw Error("synthetic data needs at least 1 group");
  }
};

inline MultiViewDataset make_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> jitter(-0.5, 0.5);
  const std::size_t n = spec.classes * spec.samples_per_class;

  MultiViewDataset ds;
  for (std::size_t k = 0; k < spec.classes; ++k) ds.class_names.push_back("class_" + std::to_string(k));
  ds.views.resize(spec.views);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % spec.classes;
    ds.sample_ids.push_back("s" + std::string(i < 10 ? "00" : i < 100 ? "0" : "") + std::to_string(i));
    ds.labels.push_back(label);
    ds.groups.push_back("g" + std::to_string(i % spec.groups));

    MultivariateSeries target;
    const double freq = static_cast<double>(label + 1);
    const double phase = jitter(rng);
    for (std::size_t ch = 0; ch < spec.channels; ++ch) {
      Series x(spec.length);
      for (std::size_t t = 0; t < spec.length; ++t) {
        const double angle = 2.0 * std::numbers::pi * freq * static_cast<double>(t) / static_cast<double>(spec.length);
        x[t] = std::sin(angle + phase + 0.5 * static_cast<double>(ch)) + spec.signal_noise * normal(rng);
      }
      target.channels.push_back(std::move(x));
    }
    MultivariateSeries near = target;
    for (auto& ch : near.channels)
      for (double& v : ch) v += spec.correlated_noise * normal(rng);
    ds.views[0].samples.push_back(std::move(target));
    ds.views[1].samples.push_back(std::move(near));
    for (std::size_t v = 2; v < spec.views; ++v) {
      MultivariateSeries noise;
      for (std::size_t ch = 0; ch < spec.channels; ++ch) {
        Series x(spec.length);
        for (double& value : x) value = normal(rng);
        noise.channels.push_back(std::move(x));
      }
      ds.views[v].samples.push_back(std::move(noise));
    }
  }
  ds.validate();
  return ds;
}

}  // namespace mvtl
