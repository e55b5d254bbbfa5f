#include "dmpp/domain.hpp"

#include <cmath>
#include <string>

namespace dmpp {

void SpatioTemporalDomain::validate() const {
  if (!(finite(t_min) && finite(t_max) && finite(train_end)))
    throw ConfigError("domain: non-finite time bounds");
  if (!(t_min < train_end && train_end < t_max))
    throw ConfigError("domain: need t_min < train_end < t_max, got [" +
                      std::to_string(t_min) + ", " + std::to_string(train_end) +
                      ", " + std::to_string(t_max) + "]");
  if (!(s_min[0] < s_max[0] && s_min[1] < s_max[1]))
    throw ConfigError("domain: spatial extent must be positive in both axes");
}

double NormalizationTransform::log_volume() const {
  return -(std::log(scale[0]) + std::log(scale[1]) + std::log(scale[2]));
}

std::size_t RepPointGrid::test_begin(double train_end) const {
  std::size_t m = 0;
  while (m < time_points.size() && time_points[m] <= train_end) ++m;
  return m * space_count();
}

RepPointGrid build_grid(const SpatioTemporalDomain& domain, int time_points,
                        int space_per_axis) {
  domain.validate();
  if (time_points < 2) throw ConfigError("build_grid: need at least 2 time points");
  if (space_per_axis < 1) throw ConfigError("build_grid: need at least 1 space point per axis");

  RepPointGrid grid;
  grid.time_origin = domain.t_min;
  grid.time_step = (domain.t_max - domain.t_min) / (time_points - 1);
  grid.time_points.resize(static_cast<std::size_t>(time_points));
  for (int m = 0; m < time_points; ++m) {
    grid.time_points[static_cast<std::size_t>(m)] =
        m + 1 == time_points ? domain.t_max : domain.t_min + m * grid.time_step;
  }

  grid.space_per_axis = space_per_axis;
  grid.space_step = {(domain.s_max[0] - domain.s_min[0]) / space_per_axis,
                     (domain.s_max[1] - domain.s_min[1]) / space_per_axis};
  grid.space_origin = {domain.s_min[0] + 0.5 * grid.space_step[0],
                       domain.s_min[1] + 0.5 * grid.space_step[1]};
  grid.space_points.reserve(
      static_cast<std::size_t>(space_per_axis) * space_per_axis);
  for (int iy = 0; iy < space_per_axis; ++iy) {
    for (int ix = 0; ix < space_per_axis; ++ix) {
      grid.space_points.push_back({grid.space_origin[0] + ix * grid.space_step[0],
                                   grid.space_origin[1] + iy * grid.space_step[1]});
    }
  }

  grid.points.reserve(grid.time_count() * grid.space_count());
  for (double tau : grid.time_points) {
    for (const Vec2& r : grid.space_points) {
      grid.points.push_back({tau, r[0], r[1]});
    }
  }
  return grid;
}

NormalizationTransform normalization_for(const SpatioTemporalDomain& domain) {
  domain.validate();
  NormalizationTransform tf;
  tf.offset = {domain.t_min, domain.s_min[0], domain.s_min[1]};
  tf.scale = {1.0 / domain.duration(), 1.0 / (domain.s_max[0] - domain.s_min[0]),
              1.0 / (domain.s_max[1] - domain.s_min[1])};
  return tf;
}

std::pair<std::vector<Event>, NormalizationTransform> normalize(
    const std::vector<Event>& events, const SpatioTemporalDomain& domain) {
  const NormalizationTransform tf = normalization_for(domain);
  std::vector<Event> out;
  out.reserve(events.size());
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (!domain.contains(events[i].point()))
      throw DataError("normalize: event " + std::to_string(i) +
                      " lies outside the domain");
    const Vec3 u = tf.to_unit(events[i].point());
    out.push_back(Event{u[0], {u[1], u[2]}});
  }
  return {std::move(out), tf};
}

SpatioTemporalDomain normalized_domain(const SpatioTemporalDomain& domain) {
  domain.validate();
  SpatioTemporalDomain unit;
  unit.t_min = 0.0;
  unit.t_max = 1.0;
  unit.s_min = {0.0, 0.0};
  unit.s_max = {1.0, 1.0};
  unit.train_end = (domain.train_end - domain.t_min) / domain.duration();
  return unit;
}

}  // namespace dmpp
