#include "dmpp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dmpp/parallel.hpp"

namespace dmpp {

Box Partition::box(int cell_r, int bin_t) const {
  const int ix = cell_r % nx;
  const int iy = cell_r / nx;
  const double wx = (region.upper[1] - region.lower[1]) / nx;
  const double wy = (region.upper[2] - region.lower[2]) / ny;
  const double wt = (region.upper[0] - region.lower[0]) / nt;
  Box b;
  b.lower = {region.lower[0] + bin_t * wt, region.lower[1] + ix * wx,
             region.lower[2] + iy * wy};
  b.upper = {bin_t + 1 == nt ? region.upper[0] : region.lower[0] + (bin_t + 1) * wt,
             ix + 1 == nx ? region.upper[1] : region.lower[1] + (ix + 1) * wx,
             iy + 1 == ny ? region.upper[2] : region.lower[2] + (iy + 1) * wy};
  return b;
}

bool Partition::same_layout(const Partition& o) const {
  return nx == o.nx && ny == o.ny && nt == o.nt &&
         region.lower == o.region.lower && region.upper == o.region.upper;
}

HpModel fit_hp(std::span<const Event> events, const Box& region) {
  const double volume = region.volume();
  if (!(volume > 0.0)) throw ConfigError("fit_hp: region has zero measure");
  return {static_cast<double>(events.size()) / volume};
}

double hp_log_likelihood(const HpModel& hp, std::span<const Event> events,
                         const Box& region) {
  const double volume = region.volume();
  if (!(volume > 0.0))
    throw ConfigError("hp_log_likelihood: region has zero measure");
  const double n = static_cast<double>(events.size());
  const double log_term = events.empty() ? 0.0 : n * std::log(hp.rate);
  return log_term - hp.rate * volume;
}

TestScore test_log_likelihood(const DmppModel& model,
                              std::span<const Event> test_events,
                              const Box& test_region) {
  TestScore score;
  score.event_count = test_events.size();
  score.total = window_log_likelihood(model, test_events, test_region);
  score.per_event = test_events.empty()
                        ? score.total
                        : score.total / static_cast<double>(test_events.size());
  return score;
}

CountGrid predict_counts(const MixtureView& view, const Partition& partition) {
  CountGrid grid;
  grid.partition = partition;
  grid.values.assign(partition.box_count(), 0.0);
  const int nt = partition.nt;
  parallel_for(partition.box_count(), [&](std::size_t idx) {
    const int cell_r = static_cast<int>(idx) / nt;
    const int bin_t = static_cast<int>(idx) % nt;
    const Box b = partition.box(cell_r, bin_t);
    double expected = 0.0;
    for (std::size_t j = view.j_begin; j < view.j_end; ++j) {
      expected += view.f[j] * kernel_box_integral(view.kernel, view.grid->points[j], b);
    }
    grid.values[idx] = expected;
  });
  return grid;
}

std::vector<Event> simulate_thinning(const MixtureView& view, const Box& region,
                                     std::uint64_t seed) {
  // Dominating rate: safety factor on the sharpest value seen on a 20^3
  // lattice spanning the region, endpoints included.
  constexpr int kLatticePoints = 20;
  constexpr double kSafety = 1.2;
  double peak = 0.0;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) reduction(max : peak)
#endif
  for (int flat = 0; flat < kLatticePoints * kLatticePoints * kLatticePoints;
       ++flat) {
    const int it = flat / (kLatticePoints * kLatticePoints);
    const int i1 = (flat / kLatticePoints) % kLatticePoints;
    const int i2 = flat % kLatticePoints;
    auto coord = [&](int i, int axis) {
      return region.lower[axis] + (region.upper[axis] - region.lower[axis]) *
                                      (static_cast<double>(i) / (kLatticePoints - 1));
    };
    const Vec3 x = {coord(it, 0), coord(i1, 1), coord(i2, 2)};
    peak = std::max(peak, view_intensity(view, x));
  }
  const double bound = kSafety * peak;
  if (!(bound > 0.0)) return {};

  Rng rng(mix_seed(seed, 0x7468696e));  // "thin"
  const long candidates = rng.poisson(bound * region.volume());
  std::vector<Vec3> position(static_cast<std::size_t>(candidates));
  std::vector<double> accept_u(static_cast<std::size_t>(candidates));
  for (long c = 0; c < candidates; ++c) {
    position[static_cast<std::size_t>(c)] = {
        rng.uniform(region.lower[0], region.upper[0]),
        rng.uniform(region.lower[1], region.upper[1]),
        rng.uniform(region.lower[2], region.upper[2])};
    accept_u[static_cast<std::size_t>(c)] = rng.uniform();
  }

  std::vector<char> keep(static_cast<std::size_t>(candidates), 0);
  std::vector<char> violated(static_cast<std::size_t>(worker_count()), 0);
  parallel_for(static_cast<std::size_t>(candidates), [&](std::size_t c) {
    const double lam = view_intensity(view, position[c]);
    if (lam > bound) violated[static_cast<std::size_t>(worker_id())] = 1;
    keep[c] = accept_u[c] < lam / bound ? 1 : 0;
  });
  for (char v : violated) {
    if (v)
      throw NumericalError(
          "thinning: intensity exceeds the dominating rate; raise the safety factor");
  }

  std::vector<Event> events;
  for (long c = 0; c < candidates; ++c) {
    if (keep[static_cast<std::size_t>(c)]) {
      const Vec3& x = position[static_cast<std::size_t>(c)];
      events.push_back(Event{x[0], {x[1], x[2]}});
    }
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
  return events;
}

CountGrid count_events(std::span<const Event> events, const Partition& partition) {
  CountGrid grid;
  grid.partition = partition;
  grid.values.assign(partition.box_count(), 0.0);
  const Box& r = partition.region;
  const double wt = (r.upper[0] - r.lower[0]) / partition.nt;
  const double wx = (r.upper[1] - r.lower[1]) / partition.nx;
  const double wy = (r.upper[2] - r.lower[2]) / partition.ny;
  for (const Event& ev : events) {
    const Vec3 x = ev.point();
    if (!r.contains(x)) continue;
    auto clamp_idx = [](double v, int n) {
      return std::min(n - 1, std::max(0, static_cast<int>(v)));
    };
    const int bin_t = clamp_idx((x[0] - r.lower[0]) / wt, partition.nt);
    const int ix = clamp_idx((x[1] - r.lower[1]) / wx, partition.nx);
    const int iy = clamp_idx((x[2] - r.lower[2]) / wy, partition.ny);
    grid.at(iy * partition.nx + ix, bin_t) += 1.0;
  }
  return grid;
}

double mape(const CountGrid& actual, const CountGrid& predicted) {
  if (!actual.partition.same_layout(predicted.partition))
    throw ConfigError("mape: partitions differ");
  double total = 0.0;
  for (std::size_t i = 0; i < actual.values.size(); ++i) {
    const double n = actual.values[i];
    if (n > 0.0) total += std::fabs(n - predicted.values[i]) / n;
  }
  return total;
}

Partition build_eval_partition(const SpatioTemporalDomain& domain) {
  domain.validate();
  if (!(domain.horizon() > 0.0))
    throw ConfigError("build_eval_partition: empty test horizon");
  Box region;
  region.lower = {domain.train_end, domain.s_min[0], domain.s_min[1]};
  region.upper = {domain.t_max, domain.s_max[0], domain.s_max[1]};
  return build_partition(region, 10, 10, 14);
}

Partition build_partition(const Box& region, int nx, int ny, int nt) {
  if (nx < 1 || ny < 1 || nt < 1)
    throw ConfigError("build_partition: all partition counts must be >= 1");
  if (!(region.volume() > 0.0))
    throw ConfigError("build_partition: region has zero measure");
  return Partition{region, nx, ny, nt};
}

}  // namespace dmpp
