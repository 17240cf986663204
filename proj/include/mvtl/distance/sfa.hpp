#pragma once

// Symbolic Fourier Approximation and the Bag-of-SFA-Symbols distance.

#include <mvtl/error.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace mvtl {

struct SfaParams {
  std::size_t window_length = 8;
  /// Number of real values kept per window (l/2 complex coefficients).
  std::size_t word_length = 4;
  std::size_t alphabet_size = 4;
  /// Centre each window and drop the DC coefficient.
  bool mean_normalize = true;

  bool operator==(const SfaParams&) const = default;
};

/// Defaults for series of length m: w = max(8, ceil(m/4)) capped at m,
/// l = 4 (or the largest even value <= w), a = 4.
inline SfaParams default_sfa_params(std::size_t m) {
  SfaParams p;
  p.window_length = std::min(m, std::max<std::size_t>(8, (m + 3) / 4));
  p.word_length = std::min<std::size_t>(4, p.window_length - p.window_length % 2);
  p.alphabet_size = 4;
  p.mean_normalize = true;
  return p;
}

inline void validate(const SfaParams& p) {
  if (p.window_length == 0) throw Error("SFA window length must be positive");
  if (p.word_length == 0 || p.word_length % 2 != 0) throw Error("SFA word length must be a positive even number");
  if (p.word_length > p.window_length) throw Error("SFA word length exceeds the window length");
  if (p.alphabet_size < 2 || p.alphabet_size > 26) throw Error("SFA alphabet size must lie in [2, 26]");
}

/// Multiple-coefficient-binning breakpoints: one row of a-1 non-decreasing
/// values per retained coefficient.
struct SfaBins {
  SfaParams params;
  std::vector<std::vector<double>> breakpoints;

  bool operator==(const SfaBins&) const = default;
};

using WordHistogram = std::map<std::string, std::size_t>;

/// Truncated DFT of one window, laid out as [re_k0, im_k0, re_k0+1, ...].
inline std::vector<double> sfa_coefficients(std::span<const double> window, const SfaParams& p) {
  const std::size_t w = window.size();
  double mean = 0.0;
  if (p.mean_normalize) {
    for (double x : window) mean += x;
    mean /= static_cast<double>(w);
  }
  const std::size_t first = p.mean_normalize ? 1 : 0;
  std::vector<double> out;
  out.reserve(p.word_length);
  for (std::size_t j = 0; j < p.word_length / 2; ++j) {
    const double k = static_cast<double>(first + j);
    double re = 0.0, im = 0.0;
    for (std::size_t n = 0; n < w; ++n) {
      const double angle = 2.0 * std::numbers::pi * k * static_cast<double>(n) / static_cast<double>(w);
      const double x = window[n] - mean;
      re += x * std::cos(angle);
      im -= x * std::sin(angle);
    }
    out.push_back(re);
    out.push_back(im);
  }
  return out;
}

namespace detail {

// Linear-interpolation quantile of sorted data (R type 7).
inline double sorted_quantile(const std::vector<double>& sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

/// Learns equi-depth breakpoints from every sliding window of every series.
inline SfaBins sfa_fit(std::span<const std::vector<double>> corpus, const SfaParams& params) {
  validate(params);
  if (corpus.empty()) throw Error("sfa_fit: empty corpus");
  const std::size_t w = params.window_length;
  std::vector<std::vector<double>> values(params.word_length);
  for (const auto& series : corpus) {
    if (series.size() < w) {
      throw Error("sfa_fit: window length " + std::to_string(w) + " exceeds series length " + std::to_string(series.size()));
    }
    for (std::size_t start = 0; start + w <= series.size(); ++start) {
      auto c = sfa_coefficients(std::span(series).subspan(start, w), params);
      for (std::size_t i = 0; i < c.size(); ++i) values[i].push_back(c[i]);
    }
  }
  SfaBins bins{params, {}};
  for (auto& column : values) {
    std::sort(column.begin(), column.end());
    std::vector<double> row;
    for (std::size_t j = 1; j < params.alphabet_size; ++j) {
      row.push_back(detail::sorted_quantile(column, static_cast<double>(j) / static_cast<double>(params.alphabet_size)));
    }
    bins.breakpoints.push_back(std::move(row));
  }
  return bins;
}

/// Symbol for `value` at coefficient `position`: the number of breakpoints <= value.
inline char sfa_symbol(const SfaBins& bins, std::size_t position, double value) {
  const auto& row = bins.breakpoints.at(position);
  const auto idx = std::upper_bound(row.begin(), row.end(), value) - row.begin();
  return static_cast<char>('a' + idx);
}

inline std::string sfa_word(std::span<const double> window, const SfaBins& bins) {
  auto c = sfa_coefficients(window, bins.params);
  std::string word(c.size(), 'a');
  for (std::size_t i = 0; i < c.size(); ++i) word[i] = sfa_symbol(bins, i, c[i]);
  return word;
}

/// Bag of words over all windows (stride 1) with numerosity reduction:
/// a word repeated by consecutive windows is counted once.
inline WordHistogram sfa_transform(std::span<const double> x, const SfaBins& bins) {
  const std::size_t w = bins.params.window_length;
  if (bins.breakpoints.size() != bins.params.word_length) throw Error("sfa_transform: bins do not match parameters");
  if (x.size() < w) {
    throw Error("sfa_transform: series length " + std::to_string(x.size()) + " is shorter than window " + std::to_string(w));
  }
  WordHistogram hist;
  std::string last;
  for (std::size_t start = 0; start + w <= x.size(); ++start) {
    auto word = sfa_word(x.subspan(start, w), bins);
    if (word != last) {
      ++hist[word];
      last = std::move(word);
    }
  }
  return hist;
}

/// Symmetrised BOSS distance: mean of the two one-sided sums of squared
/// count differences over words present in the first argument.
inline double boss_distance(const WordHistogram& a, const WordHistogram& b) {
  auto one_sided = [](const WordHistogram& p, const WordHistogram& q) {
    double sum = 0.0;
    for (const auto& [word, count] : p) {
      auto it = q.find(word);
      const double diff = static_cast<double>(count) - (it == q.end() ? 0.0 : static_cast<double>(it->second));
      sum += diff * diff;
    }
    return sum;
  };
  return 0.5 * (one_sided(a, b) + one_sided(b, a));
}

}  // namespace mvtl
