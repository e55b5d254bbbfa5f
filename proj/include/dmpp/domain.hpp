#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "dmpp/common.hpp"

namespace dmpp {

/// One timestamped, geolocated occurrence.
struct Event {
  double t = 0.0;       // minutes from the dataset epoch (or normalized time)
  Vec2 s = {0.0, 0.0};  // planar coordinates

  Vec3 point() const { return {t, s[0], s[1]}; }
};

/// Observation window: full time span [t_min, t_max], spatial rectangle,
/// and the train/test boundary train_end with horizon = t_max - train_end.
struct SpatioTemporalDomain {
  double t_min = 0.0;
  double t_max = 1.0;
  Vec2 s_min = {0.0, 0.0};
  Vec2 s_max = {1.0, 1.0};
  double train_end = 1.0;  // T; test window is (T, t_max]

  double horizon() const { return t_max - train_end; }
  double duration() const { return t_max - t_min; }
  double area() const { return (s_max[0] - s_min[0]) * (s_max[1] - s_min[1]); }
  double volume() const { return duration() * area(); }

  bool contains(const Vec3& x) const {
    return x[0] >= t_min && x[0] <= t_max && x[1] >= s_min[0] &&
           x[1] <= s_max[0] && x[2] >= s_min[1] && x[2] <= s_max[1];
  }

  /// Throws ConfigError unless t_min < train_end < t_max and the spatial
  /// extent is positive in both axes.
  void validate() const;
};

/// Per-dimension affine map of raw coordinates onto the unit cube:
/// normalized = (raw - offset) * scale.
struct NormalizationTransform {
  Vec3 offset = {0.0, 0.0, 0.0};
  Vec3 scale = {1.0, 1.0, 1.0};

  Vec3 to_unit(const Vec3& raw) const {
    return {(raw[0] - offset[0]) * scale[0], (raw[1] - offset[1]) * scale[1],
            (raw[2] - offset[2]) * scale[2]};
  }
  Vec3 to_raw(const Vec3& unit) const {
    return {unit[0] / scale[0] + offset[0], unit[1] / scale[1] + offset[1],
            unit[2] / scale[2] + offset[2]};
  }

  /// log of the raw-domain volume mapped onto the unit cube. Log-likelihoods
  /// computed in normalized coordinates are converted to raw units by
  /// subtracting this once per event.
  double log_volume() const;
};

/// The J = M * L representative points spanning the domain: M uniform time
/// points crossed with an L_per_axis x L_per_axis lattice of spatial cell
/// centers. Index layout: j = m * L + iy * L_per_axis + ix.
struct RepPointGrid {
  std::vector<double> time_points;  // M sorted times, uniform spacing
  std::vector<Vec2> space_points;   // L = L_per_axis^2 cell centers
  std::vector<Vec3> points;         // J triples (tau_j, r_j)

  // Lattice metadata used for sparse kernel-row lookups.
  double time_origin = 0.0;
  double time_step = 0.0;
  int space_per_axis = 0;
  Vec2 space_origin = {0.0, 0.0};  // center of cell (0, 0)
  Vec2 space_step = {0.0, 0.0};

  std::size_t time_count() const { return time_points.size(); }
  std::size_t space_count() const { return space_points.size(); }
  std::size_t size() const { return points.size(); }

  /// First index j whose time exceeds train_end; the test subset is
  /// [test_begin, J). Time-major layout makes the subset contiguous.
  std::size_t test_begin(double train_end) const;
};

/// Builds the representative-point grid: time_points uniform over
/// [t_min, t_max] including both endpoints, space points at the centers of a
/// regular L_per_axis x L_per_axis partition of the spatial rectangle.
RepPointGrid build_grid(const SpatioTemporalDomain& domain, int time_points,
                        int space_per_axis);

/// Maps events onto the unit cube. Throws DataError naming the first
/// offending index if any event lies outside the domain.
std::pair<std::vector<Event>, NormalizationTransform> normalize(
    const std::vector<Event>& events, const SpatioTemporalDomain& domain);

/// The image of `domain` under its own normalization: unit cube with the
/// train/test boundary rescaled accordingly.
SpatioTemporalDomain normalized_domain(const SpatioTemporalDomain& domain);

NormalizationTransform normalization_for(const SpatioTemporalDomain& domain);

}  // namespace dmpp
