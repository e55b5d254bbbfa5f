#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dmpp/context.hpp"
#include "dmpp/domain.hpp"
#include "dmpp/kernel.hpp"
#include "dmpp/net.hpp"

namespace dmpp {

/// Grid, kernel and network sizes for one model instance. Bandwidths start
/// at sigma_scale times the grid spacing per axis unless sigma_init pins
/// them explicitly (entries > 0, normalized units).
struct ModelConfig {
  int time_points = 24;
  int space_per_axis = 4;
  KernelFamily kernel_family = KernelFamily::CompactGaussian;
  double support_w = 2.0;
  double sigma_scale = 1.0;
  Vec3 sigma_init = {0.0, 0.0, 0.0};
  nn::NetworkConfig net;
};

/// The intensity model: representative-point grid with per-point context
/// snapshots, a kernel with learnable bandwidth, and the mixture-weight
/// network. All coordinates are normalized; `transform` remembers the raw
/// domain. Parameters (network weights plus kernel/log_sigma) live in a
/// single store so the optimizer sees one flat collection.
class DmppModel {
 public:
  SpatioTemporalDomain domain;  // unit cube, train_end rescaled
  NormalizationTransform transform;
  RepPointGrid grid;
  std::vector<ContextSnapshot> snapshots;
  KernelFamily kernel_family = KernelFamily::CompactGaussian;
  double support_w = 2.0;
  nn::NetworkConfig net;
  nn::ParameterStore params;

  KernelParams kernel() const;
  std::size_t rep_count() const { return grid.size(); }
  /// First representative-point index inside the test window.
  std::size_t test_begin() const { return grid.test_begin(domain.train_end); }

  Box training_region() const;
  Box test_region() const;

  /// Eval-mode mixture weights, cached until parameters change.
  const std::vector<double>& f_values() const;
  void invalidate_f_cache();

  int log_sigma_index() const { return log_sigma_index_; }

  friend DmppModel make_model(const SpatioTemporalDomain&, const ModelConfig&,
                              std::vector<ContextSnapshot>, std::uint64_t);

 private:
  mutable std::vector<double> f_cache_;
  mutable bool f_cache_valid_ = false;
  int log_sigma_index_ = -1;
};

/// Assembles a model over the raw domain. Pass an empty snapshot list for
/// the Naive variant (positions are filled in); other variants require one
/// snapshot per representative point.
DmppModel make_model(const SpatioTemporalDomain& raw_domain,
                     const ModelConfig& config,
                     std::vector<ContextSnapshot> snapshots,
                     std::uint64_t init_seed);

/// Kernel parameters at their configured starting point (before any
/// training): sigma_init entries where given, otherwise sigma_scale times
/// the grid spacing.
KernelParams initial_kernel(const ModelConfig& config, const RepPointGrid& grid);

/// A mixture restricted to representative points j in [j_begin, j_end), the
/// form the prediction equations use for time windows. f indexes the full
/// grid; the time-major point layout makes every window contiguous.
struct MixtureView {
  const RepPointGrid* grid = nullptr;
  KernelParams kernel;
  std::span<const double> f;
  std::size_t j_begin = 0;
  std::size_t j_end = 0;

  std::size_t active_count() const { return j_end - j_begin; }
};

MixtureView full_view(const DmppModel& model);
MixtureView test_view(const DmppModel& model);
/// Points with time in (t_lo, t_hi]. Throws ConfigError when empty.
MixtureView window_view(const DmppModel& model, double t_lo, double t_hi);

/// lambda(x) = sum_j f_j k(x, u_j) over the view's active points, evaluated
/// through the sparse kernel row.
double view_intensity(const MixtureView& view, const Vec3& x);

/// Exact integral of the view's intensity over the box: sum_j f_j I_j.
double view_integral(const MixtureView& view, const Box& box);

/// Sum over events of log lambda(x_i). Throws NumericalError naming the
/// first event where the intensity vanishes.
double view_log_intensity_sum(const MixtureView& view,
                              std::span<const Event> events);

// Spec-facing operations.

std::vector<double> f_values(const DmppModel& model);

/// Full-mixture intensity at x; throws DataError outside the domain.
double intensity_at(const DmppModel& model, const Vec3& x);

/// Eq.-(5)-style exact log-likelihood of `events` observed over `region`.
double log_likelihood(const DmppModel& model, std::span<const Event> events,
                      const Box& region);

/// Log-likelihood of events in a time window, with the mixture restricted to
/// the representative points inside that window (the restriction the test
/// and validation metrics use).
double window_log_likelihood(const DmppModel& model,
                             std::span<const Event> events, const Box& window);

struct ObjectiveOptions {
  nn::Mode mode = nn::Mode::Eval;
  std::uint64_t dropout_seed = 0;  // stream id; masks depend on (seed, j)
};

/// Mini-batch objective: (N/|I|) * sum_{i in I} log lambda(x_i) minus the
/// integral term over all J points. Gradients w.r.t. every network parameter
/// and log_sigma are accumulated into the store's gradient slots.
double minibatch_objective(DmppModel& model, std::span<const Event> events,
                           std::span<const std::size_t> batch,
                           std::size_t total_events, const Box& region,
                           const ObjectiveOptions& options = {});

/// Same value as minibatch_objective but without touching gradients.
double minibatch_value(const DmppModel& model, std::span<const Event> events,
                       std::span<const std::size_t> batch,
                       std::size_t total_events, const Box& region,
                       const ObjectiveOptions& options = {});

/// Sets the final fusion bias so that softplus(bias) equals the mean mixture
/// weight implied by `event_count` events over `region`: a flat start at the
/// empirical rate. No-op when the kernels do not reach the region.
void warm_start_output_bias(DmppModel& model, std::size_t event_count,
                            const Box& region);

}  // namespace dmpp
