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

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fss/rng.hpp"

namespace fss {

struct KMeansOptions {
  int max_iterations = 100;
  double tolerance = 1e-6;  // stop once no centroid moves farther than this
};

struct KMeansResult {
  int k = 0;
  int dim = 0;
  std::vector<double> centroids;  // k x dim, member means (not normalized)
  std::vector<int> assignment;    // per point, index of its centroid
  std::vector<double> objective;  // sum of squared distances, one entry per iteration
  int iterations = 0;
};

/// Lloyd's k-means with k-means++ seeding, Euclidean metric.
///
/// `points` holds n rows of `dim` values. k is clamped to n. Ties in the
/// assignment step go to the lower centroid index. An empty cluster takes the
/// point farthest from its centroid among clusters with more than one member.
/// On return every centroid is the exact mean of its assigned points.
/// Throws std::logic_error if the objective ever increases.
KMeansResult kmeans(std::span<const double> points, int dim, int k, Rng& rng,
                    const KMeansOptions& options = {});

}  // namespace fss
