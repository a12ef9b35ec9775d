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

#include "kimdispatch/packing.hpp"

#include <algorithm>
#include <stdexcept>
#include <tuple>

namespace kimdispatch {

bool overlaps(const Placement& a, const Placement& b) {
  return a.left() < b.right() && b.left() < a.right() &&
         a.bottom() < b.top() && b.bottom() < a.top();
}

bool overlaps(const FreeRect& a, const Placement& b) {
  return a.x < b.right() && b.left() < a.right() && a.y < b.top() &&
         b.bottom() < a.top();
}

BoundingRequest bounding(std::span<const Placement> placements) {
  if (placements.empty()) {
    throw std::logic_error("bounding: no placements");
  }
  BoundingRequest out;
  for (const auto& p : placements) {
    out.cores = std::max(out.cores, p.right());
    out.minutes = std::max(out.minutes, p.top());
  }
  return out;
}

double waste_fraction(std::span<const Placement> placements) {
  const BoundingRequest box = bounding(placements);
  std::int64_t used = 0;
  for (const auto& p : placements) used += p.area();
  const auto total = static_cast<std::int64_t>(box.cores) * box.minutes;
  return 1.0 - static_cast<double>(used) / static_cast<double>(total);
}

PackingBin::PackingBin(int width, int height) : width_(width), height_(height) {
  if (width < 1 || height < 1) {
    throw std::invalid_argument("PackingBin: dimensions must be positive");
  }
  free_rects_.push_back(FreeRect{0, 0, width, height});
}

std::optional<Placement> PackingBin::insert(const ResourceRect& rect) {
  if (!rect.valid()) {
    throw std::invalid_argument("PackingBin::insert: degenerate rect");
  }
  // Every optimal bottom-left position is the corner of some maximal free
  // rectangle, so scanning free-rect corners is exhaustive.
  std::optional<std::tuple<int, int, std::size_t>> best;
  for (std::size_t i = 0; i < free_rects_.size(); ++i) {
    const FreeRect& fr = free_rects_[i];
    if (rect.cores > fr.width || rect.minutes > fr.height) continue;
    const auto key = std::make_tuple(fr.y + rect.minutes, fr.x, i);
    if (!best || key < *best) best = key;
  }
  if (!best) return std::nullopt;

  const FreeRect& chosen = free_rects_[std::get<2>(*best)];
  const Placement placed{chosen.x, chosen.y, rect};
  split_free_rects(placed);
  prune_free_rects();
  placements_.push_back(placed);
  packed_area_ += placed.area();
  return placed;
}

void PackingBin::split_free_rects(const Placement& used) {
  std::vector<FreeRect> next;
  next.reserve(free_rects_.size() + 4);
  std::vector<FreeRect> residuals;
  for (const FreeRect& fr : free_rects_) {
    if (!overlaps(fr, used)) {
      next.push_back(fr);
      continue;
    }
    if (used.left() > fr.x) {
      residuals.push_back({fr.x, fr.y, used.left() - fr.x, fr.height});
    }
    if (used.right() < fr.right()) {
      residuals.push_back(
          {used.right(), fr.y, fr.right() - used.right(), fr.height});
    }
    if (used.bottom() > fr.y) {
      residuals.push_back({fr.x, fr.y, fr.width, used.bottom() - fr.y});
    }
    if (used.top() < fr.top()) {
      residuals.push_back({fr.x, used.top(), fr.width, fr.top() - used.top()});
    }
  }
  next.insert(next.end(), residuals.begin(), residuals.end());
  free_rects_ = std::move(next);
}

void PackingBin::prune_free_rects() {
  const std::size_t n = free_rects_.size();
  std::vector<bool> dead(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    if (dead[i]) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || dead[j]) continue;
      if (!free_rects_[j].contains(free_rects_[i])) continue;
      // Of two identical rects keep the earlier one.
      if (free_rects_[i] == free_rects_[j] && i < j) continue;
      dead[i] = true;
      break;
    }
  }
  std::vector<FreeRect> kept;
  kept.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!dead[i]) kept.push_back(free_rects_[i]);
  }
  free_rects_ = std::move(kept);
}

BoundingRequest PackingBin::bounding() const {
  return kimdispatch::bounding(placements_);
}

double PackingBin::waste_fraction() const {
  return kimdispatch::waste_fraction(placements_);
}

double PackingBin::fill_fraction() const {
  return static_cast<double>(packed_area_) /
         (static_cast<double>(width_) * static_cast<double>(height_));
}

}  // namespace kimdispatch
