#pragma once

#include <span>
#include <vector>

#include "dmpp/model.hpp"

namespace dmpp::ref {

// Straight-line serial implementations of the hot paths. The production
// versions run the same math through OpenMP and sparse kernel rows; these
// stay deliberately simple (dense scans, single loop, left-to-right sums)
// and serve as cross-checks in the tests and as baselines in the benchmark.

/// Dense scan over every active representative point.
double view_intensity(const MixtureView& view, const Vec3& x);

double view_integral(const MixtureView& view, const Box& box);

double view_log_intensity_sum(const MixtureView& view,
                              std::span<const Event> events);

/// One eval-mode forward per point, serially.
std::vector<double> f_values(const DmppModel& model);

double log_likelihood(const DmppModel& model, std::span<const Event> events,
                      const Box& region);

}  // namespace dmpp::ref
