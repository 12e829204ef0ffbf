// Copyright 2026 The fss Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fss/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace fss {
namespace {

double sq_dist(const double* a, const double* b, int dim) {
  double s = 0.0;
  for (int i = 0; i < dim; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::vector<double> seed_plus_plus(std::span<const double> pts, std::size_t n, int dim, int k,
                                   Rng& rng) {
  std::vector<double> c;
  c.reserve(static_cast<std::size_t>(k) * dim);
  const std::size_t first = rng.uniform_index(n);
  c.insert(c.end(), pts.begin() + first * dim, pts.begin() + (first + 1) * dim);
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(&pts[i * dim], c.data(), dim);
  for (int j = 1; j < k; ++j) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = n - 1;
    if (total > 0.0) {
      const double r = rng.uniform01() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (r < acc) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.uniform_index(n);
    }
    const double* p = &pts[pick * dim];
    c.insert(c.end(), p, p + dim);
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], sq_dist(&pts[i * dim], p, dim));
  }
  return c;
}

}  // namespace

KMeansResult kmeans(std::span<const double> points, int dim, int k, Rng& rng,
                    const KMeansOptions& options) {
  KMeansResult r;
  r.dim = dim;
  if (dim < 1 || k < 1) throw std::invalid_argument("kmeans: dim and k must be positive");
  const std::size_t n = points.size() / dim;
  if (n == 0) return r;
  k = static_cast<int>(std::min<std::size_t>(k, n));
  r.k = k;
  r.centroids = seed_plus_plus(points, n, dim, k, rng);
  r.assignment.assign(n, 0);

  std::vector<double> dist(n);
  std::vector<double> sums(static_cast<std::size_t>(k) * dim);
  std::vector<std::size_t> sizes(k);
  for (int it = 0; it < options.max_iterations; ++it) {
    double obj = 0.0;
    std::fill(sizes.begin(), sizes.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int j = 0; j < k; ++j) {
        const double d = sq_dist(&points[i * dim], &r.centroids[static_cast<std::size_t>(j) * dim], dim);
        if (d < bd) {
          bd = d;
          best = j;
        }
      }
      r.assignment[i] = best;
      dist[i] = bd;
      ++sizes[best];
      obj += bd;
    }
    if (!r.objective.empty()) {
      const double prev = r.objective.back();
      if (obj > prev + 1e-9 * std::max(1.0, prev))
        throw std::logic_error("kmeans: objective increased between iterations");
    }
    r.objective.push_back(obj);

    for (int j = 0; j < k; ++j) {
      if (sizes[j] != 0) continue;
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (sizes[r.assignment[i]] > 1 && (far == n || dist[i] > dist[far])) far = i;
      }
      if (far == n) break;
      --sizes[r.assignment[far]];
      r.assignment[far] = j;
      dist[far] = 0.0;
      ++sizes[j];
    }

    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double* s = &sums[static_cast<std::size_t>(r.assignment[i]) * dim];
      for (int d = 0; d < dim; ++d) s[d] += points[i * dim + d];
    }
    double shift = 0.0;
    for (int j = 0; j < k; ++j) {
      double* c = &r.centroids[static_cast<std::size_t>(j) * dim];
      if (sizes[j] == 0) continue;
      double moved = 0.0;
      for (int d = 0; d < dim; ++d) {
        const double m = sums[static_cast<std::size_t>(j) * dim + d] / static_cast<double>(sizes[j]);
        moved += (m - c[d]) * (m - c[d]);
        c[d] = m;
      }
      shift = std::max(shift, std::sqrt(moved));
    }
    r.iterations = it + 1;
    if (shift < options.tolerance) break;
  }
  return r;
}

}  // namespace fss
