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

#include "fss/coco_rle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace fss::coco {

Rle rle_from_string(std::string_view s, int height, int width) {
  Rle r{height, width, {}};
  std::size_t p = 0;
  while (p < s.size()) {
    long x = 0;
    int k = 0;
    bool more = true;
    while (more) {
      if (p >= s.size()) throw DataError("truncated RLE counts string");
      const char c = static_cast<char>(s[p] - 48);
      if (c < 0 || c > 63) throw DataError("invalid character in RLE counts string");
      x |= static_cast<long>(c & 0x1f) << (5 * k);
      more = (c & 0x20) != 0;
      ++p;
      ++k;
      if (!more && (c & 0x10)) x |= -1L << (5 * k);
    }
    const std::size_t m = r.counts.size();
    if (m > 2) x += static_cast<long>(r.counts[m - 2]);
    r.counts.push_back(static_cast<std::uint32_t>(x));
  }
  return r;
}

std::string rle_to_string(const Rle& rle) {
  std::string s;
  for (std::size_t i = 0; i < rle.counts.size(); ++i) {
    long x = rle.counts[i];
    if (i > 2) x -= static_cast<long>(rle.counts[i - 2]);
    bool more = true;
    while (more) {
      char c = static_cast<char>(x & 0x1f);
      x >>= 5;
      more = (c & 0x10) ? x != -1 : x != 0;
      if (more) c |= 0x20;
      c += 48;
      s.push_back(c);
    }
  }
  return s;
}

Rle rle_from_polygon(std::span<const double> xy, int h, int w) {
  const int k = static_cast<int>(xy.size() / 2);
  if (k < 1) return Rle{h, w, {static_cast<std::uint32_t>(h * w)}};
  const double scale = 5;
  std::vector<int> x(k + 1), y(k + 1);
  for (int j = 0; j < k; ++j) x[j] = static_cast<int>(scale * xy[j * 2 + 0] + .5);
  x[k] = x[0];
  for (int j = 0; j < k; ++j) y[j] = static_cast<int>(scale * xy[j * 2 + 1] + .5);
  y[k] = y[0];

  // dense boundary points at 5x resolution
  std::vector<int> u, v;
  for (int j = 0; j < k; ++j) {
    int xs = x[j], xe = x[j + 1], ys = y[j], ye = y[j + 1];
    const int dx = std::abs(xe - xs);
    const int dy = std::abs(ys - ye);
    const bool flip = (dx >= dy && xs > xe) || (dx < dy && ys > ye);
    if (flip) {
      std::swap(xs, xe);
      std::swap(ys, ye);
    }
    const double s = dx >= dy ? static_cast<double>(ye - ys) / dx : static_cast<double>(xe - xs) / dy;
    if (dx >= dy) {
      for (int d = 0; d <= dx; ++d) {
        const int t = flip ? dx - d : d;
        u.push_back(t + xs);
        v.push_back(static_cast<int>(ys + s * t + .5));
      }
    } else {
      for (int d = 0; d <= dy; ++d) {
        const int t = flip ? dy - d : d;
        v.push_back(t + ys);
        u.push_back(static_cast<int>(xs + s * t + .5));
      }
    }
  }

  // y-boundary crossings, downsampled to pixel resolution
  std::vector<std::uint32_t> a;
  for (std::size_t j = 1; j < u.size(); ++j) {
    if (u[j] == u[j - 1]) continue;
    double xd = static_cast<double>(u[j] < u[j - 1] ? u[j] : u[j] - 1);
    xd = (xd + .5) / scale - .5;
    if (std::floor(xd) != xd || xd < 0 || xd > w - 1) continue;
    double yd = static_cast<double>(v[j] < v[j - 1] ? v[j] : v[j - 1]);
    yd = (yd + .5) / scale - .5;
    if (yd < 0)
      yd = 0;
    else if (yd > h)
      yd = h;
    yd = std::ceil(yd);
    a.push_back(static_cast<std::uint32_t>(static_cast<int>(xd) * h + static_cast<int>(yd)));
  }
  a.push_back(static_cast<std::uint32_t>(h) * static_cast<std::uint32_t>(w));
  std::sort(a.begin(), a.end());
  std::uint32_t prev = 0;
  for (auto& t : a) {
    const std::uint32_t cur = t;
    t -= prev;
    prev = cur;
  }
  std::vector<std::uint32_t> b;
  std::size_t j = 0;
  b.push_back(a[j++]);
  while (j < a.size()) {
    if (a[j] > 0) {
      b.push_back(a[j++]);
    } else {
      ++j;
      if (j < a.size()) b.back() += a[j++];
    }
  }
  return Rle{h, w, std::move(b)};
}

Rle rle_encode(const BoolMask& mask) {
  Rle r{mask.height(), mask.width(), {}};
  std::uint8_t cur = 0;
  std::uint32_t run = 0;
  for (int x = 0; x < mask.width(); ++x) {
    for (int y = 0; y < mask.height(); ++y) {
      const std::uint8_t v = mask(x, y) ? 1 : 0;
      if (v != cur) {
        r.counts.push_back(run);
        run = 0;
        cur = v;
      }
      ++run;
    }
  }
  r.counts.push_back(run);
  return r;
}

BoolMask rle_decode(const Rle& rle) {
  BoolMask m(rle.width, rle.height, 0);
  const std::uint64_t total = static_cast<std::uint64_t>(rle.width) * rle.height;
  std::uint64_t pos = 0;
  std::uint8_t v = 0;
  for (const auto c : rle.counts) {
    if (pos + c > total) throw DataError("RLE counts exceed mask size");
    for (std::uint64_t i = 0; i < c; ++i, ++pos) {
      if (v) {
        const int x = static_cast<int>(pos / rle.height);
        const int y = static_cast<int>(pos % rle.height);
        m(x, y) = 1;
      }
    }
    v = !v;
  }
  return m;
}

std::uint64_t rle_area(const Rle& rle) {
  std::uint64_t a = 0;
  for (std::size_t j = 1; j < rle.counts.size(); j += 2) a += rle.counts[j];
  return a;
}

}  // namespace fss::coco
