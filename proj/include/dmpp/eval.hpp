#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dmpp/model.hpp"

namespace dmpp {

/// Regular space-time partition of an evaluation region: nx * ny spatial
/// cells crossed with nt uniform time bins. Cell index r = iy * nx + ix runs
/// over space, bin index t over time.
struct Partition {
  Box region;
  int nx = 10;
  int ny = 10;
  int nt = 14;

  int cell_count() const { return nx * ny; }   // N_r
  int bin_count() const { return nt; }         // N_b
  std::size_t box_count() const { return static_cast<std::size_t>(nx) * ny * nt; }
  Box box(int cell_r, int bin_t) const;
  bool same_layout(const Partition& o) const;
};

/// Real-valued counts per (spatial cell, time bin).
struct CountGrid {
  Partition partition;
  std::vector<double> values;  // index cell_r * nt + bin_t

  double& at(int cell_r, int bin_t) {
    return values[static_cast<std::size_t>(cell_r) * partition.nt + bin_t];
  }
  double at(int cell_r, int bin_t) const {
    return values[static_cast<std::size_t>(cell_r) * partition.nt + bin_t];
  }
};

/// Homogeneous Poisson baseline: one constant rate per unit time-area.
struct HpModel {
  double rate = 0.0;  // lambda_0
};

/// MLE over the region: lambda_0 = n / |region|.
HpModel fit_hp(std::span<const Event> events, const Box& region);

/// n log(lambda_0) - lambda_0 * |region|; the n = 0 case contributes no log
/// term.
double hp_log_likelihood(const HpModel& hp, std::span<const Event> events,
                         const Box& region);

struct TestScore {
  double total = 0.0;          // L*
  double per_event = 0.0;      // L* / N_t (normalized coordinates)
  std::size_t event_count = 0;
};

/// Test log-likelihood: events in the test window scored against the mixture
/// restricted to the test-window representative points, with the exact
/// integral over the test region. Throws ConfigError when the window holds
/// no representative points.
TestScore test_log_likelihood(const DmppModel& model,
                              std::span<const Event> test_events,
                              const Box& test_region);

/// Expected counts per partition box: sum over active points of
/// f_j * integral of the kernel. Closed form, no sampling. Boxes must lie
/// within the view's region of validity, which the caller controls.
CountGrid predict_counts(const MixtureView& view, const Partition& partition);

/// Ogata-style thinning: a homogeneous candidate process at 1.2 times the
/// lattice maximum of the intensity, kept with probability lambda(x)/bound.
/// Aborts with NumericalError if a candidate exceeds the bound. Returns
/// events sorted by time; a zero bound yields an empty list.
std::vector<Event> simulate_thinning(const MixtureView& view, const Box& region,
                                     std::uint64_t seed);

/// Events histogrammed onto the partition.
CountGrid count_events(std::span<const Event> events, const Partition& partition);

/// sum_{r,t} |n - n_hat| / n over cells with n > 0.
double mape(const CountGrid& actual, const CountGrid& predicted);

/// The default 10 x 10 x 14 evaluation partition over the test region.
Partition build_eval_partition(const SpatioTemporalDomain& domain);

Partition build_partition(const Box& region, int nx, int ny, int nt);

}  // namespace dmpp
