#include <cmath>
#include <doctest.h>

#include "dmpp/kernel.hpp"
#include "oracles.hpp"

using namespace dmpp;

namespace {

KernelParams make_params(KernelFamily family, const Vec3& sigma, double w = 2.0) {
  KernelParams p;
  p.family = family;
  p.log_sigma = {std::log(sigma[0]), std::log(sigma[1]), std::log(sigma[2])};
  p.support_w = w;
  return p;
}

KernelParams random_params(Rng& rng, KernelFamily family) {
  return make_params(family,
                     {rng.uniform(0.08, 0.6), rng.uniform(0.08, 0.6),
                      rng.uniform(0.08, 0.6)},
                     rng.uniform(0.6, 2.5));
}

}  // namespace

TEST_CASE("kernel_eval closed-form anchors") {
  const KernelParams gauss = make_params(KernelFamily::Gaussian, {1, 1, 1});
  CHECK(kernel_eval(gauss, {0.3, -1.0, 2.0}, {0.3, -1.0, 2.0}) == 1.0);
  CHECK(kernel_eval(gauss, {1.0, 0.0, 0.0}, {0.0, 0.0, 0.0}) ==
        doctest::Approx(std::exp(-1.0)).epsilon(1e-12));

  const KernelParams compact =
      make_params(KernelFamily::CompactGaussian, {1, 1, 1}, 0.5);
  CHECK(kernel_eval(compact, {0.6, 0.0, 0.0}, {0.0, 0.0, 0.0}) == 0.0);

  const KernelParams uniform = make_params(KernelFamily::Uniform, {1, 1, 1}, 0.5);
  CHECK(kernel_eval(uniform, {0.49, 0.0, 0.0}, {0.0, 0.0, 0.0}) == 1.0);
  CHECK(kernel_eval(uniform, {0.5, 0.0, 0.0}, {0.0, 0.0, 0.0}) == 0.0);
}

TEST_CASE("kernel_eval stays in [0,1]") {
  Rng rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    const auto family = static_cast<KernelFamily>(trial % 3);
    const KernelParams p = random_params(rng, family);
    const Vec3 x = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
    const Vec3 u = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
    const double v = kernel_eval(p, x, u);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("Gaussian box integral over a wide box") {
  const KernelParams p = make_params(KernelFamily::Gaussian, {1, 1, 1});
  const Vec3 u = {0.0, 0.0, 0.0};
  const Box box{{-8, -8, -8}, {8, 8, 8}};
  const double analytic = kernel_box_integral(p, u, box);
  const double quadrature = oracle::integrate_kernel(p, u, box);
  // pi^{3/2}: the product of three one-axis Gaussian integrals
  CHECK(analytic == doctest::Approx(5.568327996831708).epsilon(1e-12));
  CHECK(analytic == doctest::Approx(quadrature).epsilon(1e-6));
}

TEST_CASE("Uniform box integral equals the overlap volume") {
  const KernelParams p = make_params(KernelFamily::Uniform, {1, 1, 1}, 1.0);
  const Vec3 u = {0.0, 0.0, 0.0};
  CHECK(kernel_box_integral(p, u, {{-1, -1, -1}, {1, 1, 1}}) == doctest::Approx(8.0));
  // partial overlap
  CHECK(kernel_box_integral(p, u, {{0, -1, -1}, {2, 1, 1}}) == doctest::Approx(4.0));
}

TEST_CASE("CompactGaussian box integral vanishes off support") {
  const KernelParams p = make_params(KernelFamily::CompactGaussian, {1, 1, 1}, 1.0);
  CHECK(kernel_box_integral(p, {0, 0, 0}, {{2, 2, 2}, {3, 3, 3}}) == 0.0);
}

TEST_CASE("box integral matches quadrature across families") {
  Rng rng(11);
  for (int trial = 0; trial < 12; ++trial) {
    const auto family = static_cast<KernelFamily>(trial % 3);
    const KernelParams p = random_params(rng, family);
    const Vec3 u = {rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)};
    const Box box{{rng.uniform(-0.5, 0.2), rng.uniform(-0.5, 0.2), rng.uniform(-0.5, 0.2)},
                  {rng.uniform(0.4, 1.4), rng.uniform(0.4, 1.4), rng.uniform(0.4, 1.4)}};
    const double analytic = kernel_box_integral(p, u, box);
    const double quadrature = oracle::integrate_kernel(p, u, box);
    CHECK(analytic == doctest::Approx(quadrature).epsilon(1e-8));
  }
}

TEST_CASE("box additivity under an interior split") {
  Rng rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    const auto family = static_cast<KernelFamily>(trial % 3);
    const KernelParams p = random_params(rng, family);
    const Vec3 u = {rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)};
    const Box box{{-0.2, -0.2, -0.2}, {1.2, 1.2, 1.2}};
    const int axis = trial % 3;
    const double cut = rng.uniform(box.lower[axis] + 0.1, box.upper[axis] - 0.1);
    Box left = box, right = box;
    left.upper[axis] = cut;
    right.lower[axis] = cut;
    const double whole = kernel_box_integral(p, u, box);
    const double parts =
        kernel_box_integral(p, u, left) + kernel_box_integral(p, u, right);
    CHECK(std::fabs(whole - parts) <= 1e-10 * std::max(1.0, whole));
  }
}

TEST_CASE("enlarging a box never decreases the integral") {
  Rng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const auto family = static_cast<KernelFamily>(trial % 3);
    const KernelParams p = random_params(rng, family);
    const Vec3 u = {rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)};
    Box inner{{rng.uniform(0, 0.4), rng.uniform(0, 0.4), rng.uniform(0, 0.4)},
              {rng.uniform(0.5, 0.9), rng.uniform(0.5, 0.9), rng.uniform(0.5, 0.9)}};
    Box outer = inner;
    for (int d = 0; d < 3; ++d) {
      outer.lower[d] -= rng.uniform(0, 0.5);
      outer.upper[d] += rng.uniform(0, 0.5);
    }
    CHECK(kernel_box_integral(p, u, outer) >=
          kernel_box_integral(p, u, inner) - 1e-12);
  }
}

TEST_CASE("CompactGaussian converges to Gaussian as the support widens") {
  Rng rng(19);
  for (int trial = 0; trial < 20; ++trial) {
    KernelParams compact = random_params(rng, KernelFamily::CompactGaussian);
    compact.support_w = 1e3;
    KernelParams gauss = compact;
    gauss.family = KernelFamily::Gaussian;
    const Vec3 u = {rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)};
    const Vec3 x = {rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)};
    const Box box{{-0.3, -0.3, -0.3}, {1.3, 1.3, 1.3}};
    CHECK(kernel_eval(compact, x, u) ==
          doctest::Approx(kernel_eval(gauss, x, u)).epsilon(1e-9));
    CHECK(kernel_box_integral(compact, u, box) ==
          doctest::Approx(kernel_box_integral(gauss, u, box)).epsilon(1e-9));
  }
}

TEST_CASE("box integral gradient matches finite differences") {
  Rng rng(23);
  for (int trial = 0; trial < 40; ++trial) {
    const auto family = static_cast<KernelFamily>(trial % 3);
    KernelParams p = random_params(rng, family);
    const Vec3 u = {rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)};
    const Box box{{rng.uniform(-0.3, 0.1), rng.uniform(-0.3, 0.1), rng.uniform(-0.3, 0.1)},
                  {rng.uniform(0.6, 1.3), rng.uniform(0.6, 1.3), rng.uniform(0.6, 1.3)}};
    const Vec3 grad = kernel_box_integral_grad(p, u, box);
    for (int d = 0; d < 3; ++d) {
      const double fd = oracle::central_diff(
          [&] { return kernel_box_integral(p, u, box); }, p.log_sigma[d]);
      CHECK(std::fabs(grad[d] - fd) <=
            1e-5 * std::max({1e-3, std::fabs(grad[d]), std::fabs(fd)}));
    }
  }
}

TEST_CASE("Uniform gradient when the box contains the support") {
  const KernelParams p = make_params(KernelFamily::Uniform, {0.1, 0.2, 0.15}, 1.0);
  const Vec3 u = {0.5, 0.5, 0.5};
  const Box box{{0, 0, 0}, {1, 1, 1}};
  const double volume = kernel_box_integral(p, u, box);
  CHECK(volume == doctest::Approx(0.2 * 0.4 * 0.3));
  const Vec3 grad = kernel_box_integral_grad(p, u, box);
  double total = 0.0;
  for (int d = 0; d < 3; ++d) {
    // each axis contributes its own overlap factor, so the partial equals
    // the full volume
    CHECK(grad[d] == doctest::Approx(volume).epsilon(1e-12));
    KernelParams fd_params = p;
    const double fd = oracle::central_diff(
        [&] { return kernel_box_integral(fd_params, u, box); },
        fd_params.log_sigma[d]);
    CHECK(grad[d] == doctest::Approx(fd).epsilon(1e-5));
    total += grad[d];
  }
  CHECK(total == doctest::Approx(3.0 * volume).epsilon(1e-12));
}

TEST_CASE("zero-measure box has zero integral and gradient") {
  const KernelParams p = make_params(KernelFamily::Gaussian, {1, 1, 1});
  const Box degenerate{{0.5, 0, 0}, {0.5, 1, 1}};
  CHECK(kernel_box_integral(p, {0.5, 0.5, 0.5}, degenerate) == 0.0);
  CHECK(kernel_box_integral_grad(p, {0.5, 0.5, 0.5}, degenerate) == Vec3{0, 0, 0});
}

TEST_CASE("kernel_eval gradient matches finite differences") {
  Rng rng(29);
  for (int trial = 0; trial < 40; ++trial) {
    const auto family = static_cast<KernelFamily>(trial % 3);
    KernelParams p = random_params(rng, family);
    const Vec3 u = {rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)};
    const Vec3 x = {u[0] + rng.uniform(-0.1, 0.1), u[1] + rng.uniform(-0.1, 0.1),
                    u[2] + rng.uniform(-0.1, 0.1)};
    const Vec3 grad = kernel_eval_grad_log_sigma(p, x, u);
    for (int d = 0; d < 3; ++d) {
      const double fd = oracle::central_diff(
          [&] { return kernel_eval(p, x, u); }, p.log_sigma[d]);
      CHECK(std::fabs(grad[d] - fd) <=
            1e-4 * std::max({1e-3, std::fabs(grad[d]), std::fabs(fd)}));
    }
  }
}

TEST_CASE("kernel_row equals the dense scan for compact kernels") {
  SpatioTemporalDomain domain;
  domain.train_end = 0.8;
  Rng rng(31);
  for (int trial = 0; trial < 1000; ++trial) {
    const RepPointGrid grid = build_grid(domain, 2 + static_cast<int>(rng.index(5)),
                                         1 + static_cast<int>(rng.index(4)));
    const auto family =
        trial % 2 == 0 ? KernelFamily::CompactGaussian : KernelFamily::Uniform;
    const KernelParams p =
        make_params(family,
                    {rng.uniform(0.03, 0.4), rng.uniform(0.03, 0.4),
                     rng.uniform(0.03, 0.4)},
                    rng.uniform(0.5, 2.0));
    const Vec3 x = {rng.uniform(-0.2, 1.2), rng.uniform(-0.2, 1.2),
                    rng.uniform(-0.2, 1.2)};
    const auto row = kernel_row(p, x, grid);

    std::vector<SparseEntry> dense;
    for (std::size_t j = 0; j < grid.size(); ++j) {
      const double v = kernel_eval(p, x, grid.points[j]);
      if (v > 0.0) dense.push_back({j, v});
    }
    REQUIRE(row.size() == dense.size());
    for (std::size_t k = 0; k < row.size(); ++k) {
      CHECK(row[k].index == dense[k].index);
      CHECK(row[k].value == dense[k].value);
    }
  }
}

TEST_CASE("kernel_row dense family returns every point") {
  SpatioTemporalDomain domain;
  domain.train_end = 0.5;
  const RepPointGrid grid = build_grid(domain, 3, 2);
  const KernelParams p = make_params(KernelFamily::Gaussian, {0.3, 0.3, 0.3});
  const Vec3 x = {0.4, 0.6, 0.2};
  const auto row = kernel_row(p, x, grid);
  REQUIRE(row.size() == grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    CHECK(row[j].index == j);
    CHECK(row[j].value == kernel_eval(p, x, grid.points[j]));
  }
}

TEST_CASE("kernel_row far outside every support is empty") {
  SpatioTemporalDomain domain;
  domain.train_end = 0.5;
  const RepPointGrid grid = build_grid(domain, 4, 3);
  const KernelParams p =
      make_params(KernelFamily::CompactGaussian, {0.05, 0.05, 0.05}, 1.0);
  CHECK(kernel_row(p, {5.0, 5.0, 5.0}, grid).empty());
}
