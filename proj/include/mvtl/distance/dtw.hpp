#pragma once

#include <mvtl/error.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace mvtl {

struct DtwParams {
  /// Sakoe-Chiba radius on |i - j|; unconstrained when empty.
  std::optional<std::size_t> band_radius;
};

/// Minimum cumulative |x_i - y_j| over monotone, continuous warp paths
/// anchored at both ends (steps: match, insertion, deletion).
inline double dtw_distance(std::span<const double> x, std::span<const double> y, const DtwParams& params = {}) {
  const std::size_t n = x.size(), m = y.size();
  if (n == 0 || m == 0) throw Error("dtw_distance: empty series");
  const std::size_t gap = n > m ? n - m : m - n;
  if (params.band_radius && *params.band_radius < gap) {
    throw Error("dtw_distance: band radius " + std::to_string(*params.band_radius) +
                " admits no warp path for lengths " + std::to_string(n) + " and " + std::to_string(m));
  }
  const std::size_t radius = params.band_radius.value_or(std::max(n, m));
  constexpr double inf = std::numeric_limits<double>::infinity();

  // Two rows of the (n+1) x (m+1) lattice; row 0 / column 0 are the boundary.
  std::vector<double> prev(m + 1, inf), curr(m + 1, inf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    std::fill(curr.begin(), curr.end(), inf);
    const std::size_t lo = i > radius ? i - radius : 1;
    const std::size_t hi = std::min(m, i + radius);
    for (std::size_t j = lo; j <= hi; ++j) {
      const double best = std::min({prev[j - 1], prev[j], curr[j - 1]});
      curr[j] = best + std::abs(x[i - 1] - y[j - 1]);
    }
    std::swap(prev, curr);
  }
  return prev[m];
}

}  // namespace mvtl
