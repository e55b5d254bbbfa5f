#include "dmpp/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dmpp/parallel.hpp"

namespace dmpp {

KernelParams DmppModel::kernel() const {
  KernelParams kp;
  kp.family = kernel_family;
  kp.support_w = support_w;
  const nn::Tensor& ls = params.value(log_sigma_index_);
  kp.log_sigma = {ls[0], ls[1], ls[2]};
  return kp;
}

Box DmppModel::training_region() const {
  return Box{{domain.t_min, domain.s_min[0], domain.s_min[1]},
             {domain.train_end, domain.s_max[0], domain.s_max[1]}};
}

Box DmppModel::test_region() const {
  return Box{{domain.train_end, domain.s_min[0], domain.s_min[1]},
             {domain.t_max, domain.s_max[0], domain.s_max[1]}};
}

const std::vector<double>& DmppModel::f_values() const {
  if (!f_cache_valid_) {
    const std::size_t J = rep_count();
    f_cache_.assign(J, 0.0);
    auto* self = this;
    parallel_for(J, [self](std::size_t j) {
      self->f_cache_[j] = nn::fusion_forward(self->params, self->net,
                                             self->snapshots[j], nn::Mode::Eval);
    });
    f_cache_valid_ = true;
  }
  return f_cache_;
}

void DmppModel::invalidate_f_cache() { f_cache_valid_ = false; }

DmppModel make_model(const SpatioTemporalDomain& raw_domain,
                     const ModelConfig& config,
                     std::vector<ContextSnapshot> snapshots,
                     std::uint64_t init_seed) {
  raw_domain.validate();
  config.net.validate();
  if (!(config.support_w > 0.0))
    throw ConfigError("model: support_w must be positive");

  DmppModel model;
  model.domain = normalized_domain(raw_domain);
  model.transform = normalization_for(raw_domain);
  model.grid = build_grid(model.domain, config.time_points, config.space_per_axis);
  model.kernel_family = config.kernel_family;
  model.support_w = config.support_w;
  model.net = config.net;

  if (snapshots.empty() && config.net.variant == Variant::Naive) {
    snapshots.resize(model.grid.size());
    for (std::size_t j = 0; j < model.grid.size(); ++j)
      snapshots[j].position = model.grid.points[j];
  }
  if (snapshots.size() != model.grid.size())
    throw ConfigError("model: need one snapshot per representative point (" +
                      std::to_string(model.grid.size()) + "), got " +
                      std::to_string(snapshots.size()));
  model.snapshots = std::move(snapshots);

  nn::register_network_params(model.params, model.net);
  model.log_sigma_index_ = model.params.add("kernel/log_sigma", {3}, false);
  nn::initialize_parameters(model.params, init_seed);

  const KernelParams kp = initial_kernel(config, model.grid);
  nn::Tensor& ls = model.params.value(model.log_sigma_index_);
  for (std::size_t d = 0; d < 3; ++d) ls[d] = kp.log_sigma[d];
  return model;
}

KernelParams initial_kernel(const ModelConfig& config, const RepPointGrid& grid) {
  KernelParams kp;
  kp.family = config.kernel_family;
  kp.support_w = config.support_w;
  for (int d = 0; d < 3; ++d) {
    double sigma = config.sigma_init[static_cast<std::size_t>(d)];
    if (!(sigma > 0.0)) {
      const double spacing = d == 0 ? grid.time_step : grid.space_step[d - 1];
      sigma = config.sigma_scale * spacing;
    }
    kp.log_sigma[static_cast<std::size_t>(d)] = std::log(sigma);
  }
  return kp;
}

MixtureView full_view(const DmppModel& model) {
  return {&model.grid, model.kernel(), model.f_values(), 0, model.rep_count()};
}

MixtureView test_view(const DmppModel& model) {
  return window_view(model, model.domain.train_end, model.domain.t_max);
}

MixtureView window_view(const DmppModel& model, double t_lo, double t_hi) {
  MixtureView view{&model.grid, model.kernel(), model.f_values(),
                   model.grid.test_begin(t_lo), model.grid.test_begin(t_hi)};
  if (view.j_begin >= view.j_end)
    throw ConfigError("time window (" + std::to_string(t_lo) + ", " +
                      std::to_string(t_hi) +
                      "] contains no representative points");
  return view;
}

double view_intensity(const MixtureView& view, const Vec3& x) {
  double sum = 0.0;
  for (const SparseEntry& e : kernel_row(view.kernel, x, *view.grid)) {
    if (e.index >= view.j_begin && e.index < view.j_end)
      sum += view.f[e.index] * e.value;
  }
  return sum;
}

double view_integral(const MixtureView& view, const Box& box) {
  return ordered_sum(view.active_count(), [&](std::size_t k) {
    const std::size_t j = view.j_begin + k;
    return view.f[j] * kernel_box_integral(view.kernel, view.grid->points[j], box);
  });
}

double view_log_intensity_sum(const MixtureView& view,
                              std::span<const Event> events) {
  const std::size_t n = events.size();
  std::vector<long long> bad(static_cast<std::size_t>(worker_count()), -1);
  const double total = ordered_sum(n, [&](std::size_t i) {
    const double lam = view_intensity(view, events[i].point());
    if (!(lam > 0.0)) {
      long long& slot = bad[static_cast<std::size_t>(worker_id())];
      const long long ii = static_cast<long long>(i);
      if (slot < 0 || ii < slot) slot = ii;
      return 0.0;
    }
    return std::log(lam);
  });
  long long first_bad = -1;
  for (long long b : bad)
    if (b >= 0 && (first_bad < 0 || b < first_bad)) first_bad = b;
  if (first_bad >= 0)
    throw NumericalError("degenerate likelihood: intensity is zero at event " +
                         std::to_string(first_bad));
  return total;
}

std::vector<double> f_values(const DmppModel& model) { return model.f_values(); }

double intensity_at(const DmppModel& model, const Vec3& x) {
  if (!model.domain.contains(x))
    throw DataError("intensity_at: point outside the domain");
  return view_intensity(full_view(model), x);
}

namespace {

void check_region_in_domain(const DmppModel& model, const Box& region) {
  const SpatioTemporalDomain& d = model.domain;
  if (region.lower[0] < d.t_min || region.upper[0] > d.t_max ||
      region.lower[1] < d.s_min[0] || region.upper[1] > d.s_max[0] ||
      region.lower[2] < d.s_min[1] || region.upper[2] > d.s_max[1])
    throw ConfigError("region extends outside the domain");
}

void check_events_in_region(std::span<const Event> events, const Box& region) {
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (!region.contains(events[i].point()))
      throw DataError("event " + std::to_string(i) + " lies outside the region");
  }
}

std::uint64_t per_point_seed(const ObjectiveOptions& opt, std::size_t j) {
  return mix_seed(opt.dropout_seed, j);
}

}  // namespace

double log_likelihood(const DmppModel& model, std::span<const Event> events,
                      const Box& region) {
  check_region_in_domain(model, region);
  check_events_in_region(events, region);
  const MixtureView view = full_view(model);
  return view_log_intensity_sum(view, events) - view_integral(view, region);
}

double window_log_likelihood(const DmppModel& model,
                             std::span<const Event> events, const Box& window) {
  check_region_in_domain(model, window);
  check_events_in_region(events, window);
  const MixtureView view = window_view(model, window.lower[0], window.upper[0]);
  return view_log_intensity_sum(view, events) - view_integral(view, window);
}

double minibatch_value(const DmppModel& model, std::span<const Event> events,
                       std::span<const std::size_t> batch,
                       std::size_t total_events, const Box& region,
                       const ObjectiveOptions& options) {
  if (batch.empty()) throw ConfigError("minibatch: empty batch");
  for (std::size_t i : batch)
    if (i >= events.size()) throw ConfigError("minibatch: index out of range");

  const std::size_t J = model.rep_count();
  std::vector<double> f(J, 0.0);
  parallel_for(J, [&](std::size_t j) {
    f[j] = nn::fusion_forward(model.params, model.net, model.snapshots[j],
                              options.mode, per_point_seed(options, j));
  });

  const MixtureView view{&model.grid, model.kernel(), f, 0, J};
  std::vector<Event> picked;
  picked.reserve(batch.size());
  for (std::size_t i : batch) picked.push_back(events[i]);

  const double scale =
      static_cast<double>(total_events) / static_cast<double>(batch.size());
  return scale * view_log_intensity_sum(view, picked) -
         view_integral(view, region);
}

double minibatch_objective(DmppModel& model, std::span<const Event> events,
                           std::span<const std::size_t> batch,
                           std::size_t total_events, const Box& region,
                           const ObjectiveOptions& options) {
  if (batch.empty()) throw ConfigError("minibatch: empty batch");
  for (std::size_t i : batch)
    if (i >= events.size()) throw ConfigError("minibatch: index out of range");

  const std::size_t J = model.rep_count();
  const std::size_t B = batch.size();
  const KernelParams kp = model.kernel();
  const Vec3 sigma = kp.sigma();
  const bool sigma_moves_eval = kp.family != KernelFamily::Uniform;
  const double scale = static_cast<double>(total_events) / static_cast<double>(B);
  const int workers = worker_count();

  // Forward every representative point once, recording tapes.
  std::vector<nn::Tape> tapes(J);
  std::vector<nn::Tape::Id> roots(J);
  std::vector<double> f(J);
  parallel_for(J, [&](std::size_t j) {
    roots[j] = nn::build_fusion(tapes[j], model.params, model.net,
                                model.snapshots[j], options.mode,
                                per_point_seed(options, j));
    f[j] = tapes[j].value(roots[j])[0];
  });

  // Integral term and its bandwidth gradient.
  std::vector<double> integral(J);
  std::vector<Vec3> integral_grad(J);
  parallel_for(J, [&](std::size_t j) {
    integral[j] = kernel_box_integral(kp, model.grid.points[j], region);
    integral_grad[j] = kernel_box_integral_grad(kp, model.grid.points[j], region);
  });

  // Event term: log intensities, per-point coefficients sum_i K_ij/lambda_i,
  // and the bandwidth gradient through the kernel evaluations.
  std::vector<std::vector<double>> coef_w(
      static_cast<std::size_t>(workers), std::vector<double>(J, 0.0));
  std::vector<Vec3> lsg_w(static_cast<std::size_t>(workers), Vec3{0, 0, 0});
  std::vector<long long> bad(static_cast<std::size_t>(workers), -1);
  const double logsum = ordered_sum(B, [&](std::size_t bi) {
    const std::size_t tid = static_cast<std::size_t>(worker_id());
    const Vec3 x = events[batch[bi]].point();
    const auto row = kernel_row(kp, x, model.grid);
    double lam = 0.0;
    for (const SparseEntry& e : row) lam += f[e.index] * e.value;
    if (!(lam > 0.0)) {
      const long long ii = static_cast<long long>(bi);
      if (bad[tid] < 0 || ii < bad[tid]) bad[tid] = ii;
      return 0.0;
    }
    std::vector<double>& coef = coef_w[tid];
    for (const SparseEntry& e : row) {
      coef[e.index] += e.value / lam;
      if (sigma_moves_eval && e.value > 0.0) {
        const Vec3& u = model.grid.points[e.index];
        for (int d = 0; d < 3; ++d) {
          const double z = (x[d] - u[d]) / sigma[d];
          lsg_w[tid][d] += f[e.index] * e.value * 2.0 * z * z / lam;
        }
      }
    }
    return std::log(lam);
  });
  long long first_bad = -1;
  for (long long b : bad)
    if (b >= 0 && (first_bad < 0 || b < first_bad)) first_bad = b;
  if (first_bad >= 0)
    throw NumericalError(
        "degenerate likelihood: intensity is zero at batch event " +
        std::to_string(first_bad));

  std::vector<double> coef(J, 0.0);
  Vec3 lsg_events{0, 0, 0};
  for (int w = 0; w < workers; ++w) {
    const auto& cw = coef_w[static_cast<std::size_t>(w)];
    for (std::size_t j = 0; j < J; ++j) coef[j] += cw[j];
    for (int d = 0; d < 3; ++d) lsg_events[d] += lsg_w[static_cast<std::size_t>(w)][d];
  }

  // Backward through every tape with seed d(objective)/d f_j.
  std::vector<std::vector<nn::Tensor>> grad_w(static_cast<std::size_t>(workers));
  for (auto& buf : grad_w) {
    buf.resize(model.params.count());
    for (std::size_t p = 0; p < model.params.count(); ++p)
      buf[p] = nn::Tensor(model.params.entry(p).value.shape);
  }
  parallel_for(J, [&](std::size_t j) {
    const std::size_t tid = static_cast<std::size_t>(worker_id());
    const double seed = scale * coef[j] - integral[j];
    tapes[j].backward(roots[j], seed);
    tapes[j].for_each_leaf_grad([&](int p, const nn::Tensor& g) {
      nn::Tensor& sink = grad_w[tid][static_cast<std::size_t>(p)];
      for (std::size_t i = 0; i < g.size(); ++i) sink[i] += g[i];
    });
  });
  for (int w = 0; w < workers; ++w) {
    for (std::size_t p = 0; p < model.params.count(); ++p) {
      nn::Tensor& sink = model.params.grad(static_cast<int>(p));
      const nn::Tensor& src = grad_w[static_cast<std::size_t>(w)][p];
      for (std::size_t i = 0; i < src.size(); ++i) sink[i] += src[i];
    }
  }

  // Bandwidth gradient: event part minus integral part.
  Vec3 lsg{0, 0, 0};
  for (int d = 0; d < 3; ++d) lsg[d] = scale * lsg_events[d];
  for (std::size_t j = 0; j < J; ++j)
    for (int d = 0; d < 3; ++d) lsg[d] -= f[j] * integral_grad[j][d];
  nn::Tensor& ls_grad = model.params.grad(model.log_sigma_index());
  for (int d = 0; d < 3; ++d) ls_grad[static_cast<std::size_t>(d)] += lsg[d];

  const double integral_total =
      ordered_sum(J, [&](std::size_t j) { return f[j] * integral[j]; });
  return scale * logsum - integral_total;
}

void warm_start_output_bias(DmppModel& model, std::size_t event_count,
                            const Box& region) {
  const KernelParams kp = model.kernel();
  const double total_integral = ordered_sum(model.rep_count(), [&](std::size_t j) {
    return kernel_box_integral(kp, model.grid.points[j], region);
  });
  if (!(total_integral > 0.0) || event_count == 0) return;
  const double mean_f = static_cast<double>(event_count) / total_integral;
  // softplus^{-1}, switching to the asymptote where expm1 would overflow
  const double bias = mean_f > 30.0 ? mean_f : std::log(std::expm1(mean_f));
  nn::Tensor& out_b = model.params.value(model.params.require("fus/out_b"));
  out_b[0] = bias;
  model.invalidate_f_cache();
}

}  // namespace dmpp
