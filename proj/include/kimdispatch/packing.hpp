// Copyright 2026 The kimdispatch Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Online rectangle packing into a single execution-site bin.
//
// The horizontal axis is CPU cores, the vertical axis is wallclock minutes.
// Rectangles are never rotated. Each insert picks the position with the
// lowest top edge, then the smallest x, then the lowest free-rect index, and
// the placement is fixed for the rest of the bin's life.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace kimdispatch {

struct ResourceRect {
  int cores = 1;
  int minutes = 1;

  bool valid() const { return cores >= 1 && minutes >= 1; }
  std::int64_t area() const {
    return static_cast<std::int64_t>(cores) * minutes;
  }
  friend bool operator==(const ResourceRect&, const ResourceRect&) = default;
};

struct Placement {
  int x = 0;  // leftmost core index
  int y = 0;  // start minute
  ResourceRect rect;

  int left() const { return x; }
  int right() const { return x + rect.cores; }
  int bottom() const { return y; }
  int top() const { return y + rect.minutes; }
  std::int64_t area() const { return rect.area(); }
  friend bool operator==(const Placement&, const Placement&) = default;
};

struct FreeRect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;

  int right() const { return x + width; }
  int top() const { return y + height; }
  bool contains(const FreeRect& other) const {
    return other.x >= x && other.y >= y && other.right() <= right() &&
           other.top() <= top();
  }
  friend bool operator==(const FreeRect&, const FreeRect&) = default;
};

struct BoundingRequest {
  int cores = 0;
  int minutes = 0;
  friend bool operator==(const BoundingRequest&,
                         const BoundingRequest&) = default;
};

/// True when the two placements share positive area.
bool overlaps(const Placement& a, const Placement& b);
bool overlaps(const FreeRect& a, const Placement& b);

/// Smallest origin-anchored region covering every placement.
/// Throws std::logic_error when `placements` is empty.
BoundingRequest bounding(std::span<const Placement> placements);

/// 1 - (sum of placement areas) / (bounding area). Interior gaps count as
/// waste. Throws std::logic_error when `placements` is empty.
double waste_fraction(std::span<const Placement> placements);

class PackingBin {
 public:
  /// Throws std::invalid_argument unless width >= 1 and height >= 1.
  PackingBin(int width, int height);

  /// Places `rect` or returns std::nullopt (bin unchanged) when no position
  /// exists. Throws std::invalid_argument for a degenerate rect.
  std::optional<Placement> insert(const ResourceRect& rect);

  /// Whether `rect` would fit into an empty bin of this size.
  bool admits(const ResourceRect& rect) const {
    return rect.cores <= width_ && rect.minutes <= height_;
  }

  BoundingRequest bounding() const;
  double waste_fraction() const;

  std::int64_t packed_area() const { return packed_area_; }
  /// Packed area over the full bin area.
  double fill_fraction() const;

  int width() const { return width_; }
  int height() const { return height_; }
  const std::vector<Placement>& placements() const { return placements_; }
  const std::vector<FreeRect>& free_rects() const { return free_rects_; }

 private:
  void split_free_rects(const Placement& used);
  void prune_free_rects();

  int width_;
  int height_;
  std::int64_t packed_area_ = 0;
  std::vector<Placement> placements_;
  std::vector<FreeRect> free_rects_;
};

}  // namespace kimdispatch
