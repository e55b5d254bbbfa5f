#include "dmpp/kernel.hpp"

#include <algorithm>
#include <cmath>

namespace dmpp {

namespace {

constexpr double kSqrtPi = 1.7724538509055160273;

// One Gaussian axis factor integrated over [a, b]:
//   integral exp(-((x-u)/sigma)^2) dx = sigma*sqrt(pi)/2 * (erf(bt) - erf(at))
// with at = (a-u)/sigma, bt = (b-u)/sigma.
double gauss_axis_integral(double u, double sigma, double a, double b) {
  return sigma * kSqrtPi * 0.5 *
         (std::erf((b - u) / sigma) - std::erf((a - u) / sigma));
}

// d/dlog(sigma) of the factor above with fixed bounds:
//   I - (bt*exp(-bt^2) - at*exp(-at^2)) * ... expressed below in shifted
// coordinates; when a bound is clipped to the moving support edge u +-
// sigma*w its scaled coordinate is constant and its boundary term drops out.
double gauss_axis_integral_grad_logsigma(double u, double sigma, double a,
                                         double b, bool a_tracks_support,
                                         bool b_tracks_support) {
  const double at = (a - u) / sigma;
  const double bt = (b - u) / sigma;
  const double value = sigma * kSqrtPi * 0.5 * (std::erf(bt) - std::erf(at));
  double grad = value;
  if (!b_tracks_support) grad -= (b - u) * std::exp(-bt * bt);
  if (!a_tracks_support) grad += (a - u) * std::exp(-at * at);
  return grad;
}

struct AxisOverlap {
  double a, b;             // clipped interval, a <= b (or empty)
  bool a_clipped, b_clipped;  // true when the bound is the support edge
  bool empty;
};

AxisOverlap clip_to_support(double u, double sigma, double w, double lo,
                            double hi) {
  AxisOverlap o{};
  const double sa = u - sigma * w;
  const double sb = u + sigma * w;
  o.a = std::max(lo, sa);
  o.b = std::min(hi, sb);
  o.a_clipped = sa > lo;
  o.b_clipped = sb < hi;
  o.empty = !(o.a < o.b);
  return o;
}

}  // namespace

double kernel_eval(const KernelParams& params, const Vec3& x, const Vec3& u) {
  const Vec3 sigma = params.sigma();
  double q = 0.0;      // sum of squared scaled offsets
  double linf = 0.0;   // max scaled |offset|
  for (int d = 0; d < 3; ++d) {
    const double z = (x[d] - u[d]) / sigma[d];
    q += z * z;
    linf = std::max(linf, std::fabs(z));
  }
  switch (params.family) {
    case KernelFamily::Uniform:
      return linf < params.support_w ? 1.0 : 0.0;
    case KernelFamily::Gaussian:
      return std::exp(-q);
    case KernelFamily::CompactGaussian:
      return linf < params.support_w ? std::exp(-q) : 0.0;
  }
  return 0.0;
}

Vec3 kernel_eval_grad_log_sigma(const KernelParams& params, const Vec3& x,
                                const Vec3& u) {
  const double k = kernel_eval(params, x, u);
  if (params.family == KernelFamily::Uniform || k == 0.0)
    return {0.0, 0.0, 0.0};
  const Vec3 sigma = params.sigma();
  Vec3 grad;
  for (int d = 0; d < 3; ++d) {
    const double z = (x[d] - u[d]) / sigma[d];
    grad[d] = k * 2.0 * z * z;  // d/dlog(sigma_d) of -z^2 is +2 z^2
  }
  return grad;
}

double kernel_box_integral(const KernelParams& params, const Vec3& u,
                           const Box& box) {
  const Vec3 sigma = params.sigma();
  double result = 1.0;
  for (int d = 0; d < 3; ++d) {
    const double lo = box.lower[d];
    const double hi = box.upper[d];
    if (!(lo < hi)) return 0.0;
    switch (params.family) {
      case KernelFamily::Gaussian:
        result *= gauss_axis_integral(u[d], sigma[d], lo, hi);
        break;
      case KernelFamily::Uniform: {
        const AxisOverlap o =
            clip_to_support(u[d], sigma[d], params.support_w, lo, hi);
        if (o.empty) return 0.0;
        result *= o.b - o.a;
        break;
      }
      case KernelFamily::CompactGaussian: {
        const AxisOverlap o =
            clip_to_support(u[d], sigma[d], params.support_w, lo, hi);
        if (o.empty) return 0.0;
        result *= gauss_axis_integral(u[d], sigma[d], o.a, o.b);
        break;
      }
    }
  }
  return result;
}

Vec3 kernel_box_integral_grad(const KernelParams& params, const Vec3& u,
                              const Box& box) {
  const Vec3 sigma = params.sigma();
  double factor[3];
  double dfactor[3];  // d factor_d / d log_sigma_d
  for (int d = 0; d < 3; ++d) {
    const double lo = box.lower[d];
    const double hi = box.upper[d];
    if (!(lo < hi)) return {0.0, 0.0, 0.0};
    switch (params.family) {
      case KernelFamily::Gaussian:
        factor[d] = gauss_axis_integral(u[d], sigma[d], lo, hi);
        dfactor[d] = gauss_axis_integral_grad_logsigma(u[d], sigma[d], lo, hi,
                                                       false, false);
        break;
      case KernelFamily::Uniform: {
        const AxisOverlap o =
            clip_to_support(u[d], sigma[d], params.support_w, lo, hi);
        if (o.empty) return {0.0, 0.0, 0.0};
        factor[d] = o.b - o.a;
        double slope = 0.0;  // d overlap / d sigma
        if (o.b_clipped) slope += params.support_w;
        if (o.a_clipped) slope += params.support_w;
        dfactor[d] = sigma[d] * slope;
        break;
      }
      case KernelFamily::CompactGaussian: {
        const AxisOverlap o =
            clip_to_support(u[d], sigma[d], params.support_w, lo, hi);
        if (o.empty) return {0.0, 0.0, 0.0};
        factor[d] = gauss_axis_integral(u[d], sigma[d], o.a, o.b);
        dfactor[d] = gauss_axis_integral_grad_logsigma(
            u[d], sigma[d], o.a, o.b, o.a_clipped, o.b_clipped);
        break;
      }
    }
  }
  Vec3 grad;
  for (int d = 0; d < 3; ++d) {
    grad[d] = dfactor[d];
    for (int e = 0; e < 3; ++e) {
      if (e != d) grad[d] *= factor[e];
    }
  }
  return grad;
}

namespace {

// Inclusive lattice index range touching [center - reach, center + reach],
// widened by one cell so the exact per-point check is authoritative.
std::pair<int, int> candidate_range(double center, double reach, double origin,
                                    double step, int count) {
  int lo = static_cast<int>(std::floor((center - reach - origin) / step)) - 1;
  int hi = static_cast<int>(std::ceil((center + reach - origin) / step)) + 1;
  lo = std::max(lo, 0);
  hi = std::min(hi, count - 1);
  return {lo, hi};
}

}  // namespace

std::vector<SparseEntry> kernel_row(const KernelParams& params, const Vec3& x,
                                    const RepPointGrid& grid) {
  const std::size_t J = grid.size();
  std::vector<SparseEntry> row;

  if (!params.compact()) {
    row.resize(J);
    for (std::size_t j = 0; j < J; ++j) {
      row[j] = {j, kernel_eval(params, x, grid.points[j])};
    }
    return row;
  }

  const Vec3 sigma = params.sigma();
  const auto [m_lo, m_hi] =
      candidate_range(x[0], sigma[0] * params.support_w, grid.time_origin,
                      grid.time_step, static_cast<int>(grid.time_count()));
  const auto [ix_lo, ix_hi] =
      candidate_range(x[1], sigma[1] * params.support_w, grid.space_origin[0],
                      grid.space_step[0], grid.space_per_axis);
  const auto [iy_lo, iy_hi] =
      candidate_range(x[2], sigma[2] * params.support_w, grid.space_origin[1],
                      grid.space_step[1], grid.space_per_axis);
  if (m_lo > m_hi || ix_lo > ix_hi || iy_lo > iy_hi) return row;

  const std::size_t L = grid.space_count();
  for (int m = m_lo; m <= m_hi; ++m) {
    for (int iy = iy_lo; iy <= iy_hi; ++iy) {
      for (int ix = ix_lo; ix <= ix_hi; ++ix) {
        const std::size_t j = static_cast<std::size_t>(m) * L +
                              static_cast<std::size_t>(iy) * grid.space_per_axis +
                              static_cast<std::size_t>(ix);
        const double v = kernel_eval(params, x, grid.points[j]);
        if (v > 0.0) row.push_back({j, v});
      }
    }
  }
  return row;
}

}  // namespace dmpp
