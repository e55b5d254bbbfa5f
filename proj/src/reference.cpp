#include "dmpp/reference.hpp"

#include <cmath>
#include <string>

namespace dmpp::ref {

double view_intensity(const MixtureView& view, const Vec3& x) {
  double sum = 0.0;
  for (std::size_t j = view.j_begin; j < view.j_end; ++j) {
    sum += view.f[j] * kernel_eval(view.kernel, x, view.grid->points[j]);
  }
  return sum;
}

double view_integral(const MixtureView& view, const Box& box) {
  double sum = 0.0;
  for (std::size_t j = view.j_begin; j < view.j_end; ++j) {
    sum += view.f[j] * kernel_box_integral(view.kernel, view.grid->points[j], box);
  }
  return sum;
}

double view_log_intensity_sum(const MixtureView& view,
                              std::span<const Event> events) {
  double sum = 0.0;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const double lam = ref::view_intensity(view, events[i].point());
    if (!(lam > 0.0))
      throw NumericalError("degenerate likelihood: intensity is zero at event " +
                           std::to_string(i));
    sum += std::log(lam);
  }
  return sum;
}

std::vector<double> f_values(const DmppModel& model) {
  std::vector<double> f(model.rep_count());
  for (std::size_t j = 0; j < f.size(); ++j) {
    f[j] = nn::fusion_forward(model.params, model.net, model.snapshots[j],
                              nn::Mode::Eval);
  }
  return f;
}

double log_likelihood(const DmppModel& model, std::span<const Event> events,
                      const Box& region) {
  const std::vector<double> f = ref::f_values(model);
  const MixtureView view{&model.grid, model.kernel(), f, 0, f.size()};
  return ref::view_log_intensity_sum(view, events) - ref::view_integral(view, region);
}

}  // namespace dmpp::ref
