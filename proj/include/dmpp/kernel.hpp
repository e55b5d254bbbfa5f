#pragma once

#include <cstddef>
#include <vector>

#include "dmpp/common.hpp"
#include "dmpp/domain.hpp"

namespace dmpp {

enum class KernelFamily { Uniform, Gaussian, CompactGaussian };

/// Kernel family plus learnable diagonal bandwidth and fixed support width.
/// Bandwidths are carried as log sigma so the optimizer never has to enforce
/// positivity. support_w is the half width of the compact window in sigma
/// units per axis (L-infinity), used by Uniform and CompactGaussian.
struct KernelParams {
  KernelFamily family = KernelFamily::Gaussian;
  Vec3 log_sigma = {0.0, 0.0, 0.0};
  double support_w = 2.0;

  Vec3 sigma() const {
    return {std::exp(log_sigma[0]), std::exp(log_sigma[1]),
            std::exp(log_sigma[2])};
  }
  bool compact() const { return family != KernelFamily::Gaussian; }
};

/// Axis-aligned region (time plus two spatial axes).
struct Box {
  Vec3 lower = {0.0, 0.0, 0.0};
  Vec3 upper = {1.0, 1.0, 1.0};

  double volume() const {
    return (upper[0] - lower[0]) * (upper[1] - lower[1]) *
           (upper[2] - lower[2]);
  }
  bool contains(const Vec3& x) const {
    return x[0] >= lower[0] && x[0] <= upper[0] && x[1] >= lower[1] &&
           x[1] <= upper[1] && x[2] >= lower[2] && x[2] <= upper[2];
  }
};

/// k(x, u). Gaussian: exp(-sum_d (x_d-u_d)^2 / sigma_d^2), no normalization
/// constant. Uniform: 1 iff max_d |x_d-u_d|/sigma_d < support_w.
/// CompactGaussian: product of the two. Always in [0, 1].
double kernel_eval(const KernelParams& params, const Vec3& x, const Vec3& u);

/// d k(x, u) / d log_sigma. The compact-support indicator is treated as
/// locally constant (its derivative vanishes almost everywhere).
Vec3 kernel_eval_grad_log_sigma(const KernelParams& params, const Vec3& x,
                                const Vec3& u);

/// Closed-form integral of k(x, u) over the box. Gaussian integrates to a
/// per-axis erf product; Uniform to a product of interval overlaps;
/// CompactGaussian to erf factors over intervals clipped to the support.
double kernel_box_integral(const KernelParams& params, const Vec3& u,
                           const Box& box);

/// Analytic gradient of kernel_box_integral w.r.t. log_sigma.
Vec3 kernel_box_integral_grad(const KernelParams& params, const Vec3& u,
                              const Box& box);

struct SparseEntry {
  std::size_t index;
  double value;
};

/// All (j, k(x, u_j)) pairs with positive value, indices ascending. Compact
/// families locate candidates through the lattice structure instead of
/// scanning all J points; the Gaussian family returns all J entries.
std::vector<SparseEntry> kernel_row(const KernelParams& params, const Vec3& x,
                                    const RepPointGrid& grid);

}  // namespace dmpp
