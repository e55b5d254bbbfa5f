#include <doctest.h>

#include <cmath>

#include "dmpp/eval.hpp"
#include "dmpp/reference.hpp"
#include "oracles.hpp"

using namespace dmpp;

namespace {

DmppModel eval_model(std::uint64_t seed, KernelFamily family, int M = 5,
                     int L = 2, double train_end = 0.6) {
  SpatioTemporalDomain d;
  d.train_end = train_end;
  ModelConfig mc;
  mc.time_points = M;
  mc.space_per_axis = L;
  mc.kernel_family = family;
  mc.net.fusion_layers = 2;
  mc.net.fusion_units = 8;
  DmppModel model = make_model(d, mc, {}, seed);
  warm_start_output_bias(model, 60, model.training_region());
  return model;
}

// Uniform-kernel view whose intensity is a known constant over the unit
// cube: sigma 1 and half-width 10 cover everything.
struct FlatMixture {
  RepPointGrid grid;
  std::vector<double> f;
  KernelParams kernel;

  explicit FlatMixture(double constant, std::size_t points = 4) {
    SpatioTemporalDomain d;
    d.train_end = 0.5;
    grid = build_grid(d, static_cast<int>(points), 1);
    f.assign(grid.size(), constant / static_cast<double>(grid.size()));
    kernel.family = KernelFamily::Uniform;
    kernel.log_sigma = {0, 0, 0};
    kernel.support_w = 10.0;
  }
  MixtureView view() {
    return {&grid, kernel, f, 0, grid.size()};
  }
};

}  // namespace

TEST_CASE("homogeneous Poisson closed form") {
  CHECK(hp_log_likelihood({1.0}, {}, {{0, 0, 0}, {1, 1, 1}}) ==
        doctest::Approx(-1.0).epsilon(1e-15));
  const std::vector<Event> three(3);
  CHECK(hp_log_likelihood({2.0}, three, {{0, 0, 0}, {1, 1, 1}}) ==
        doctest::Approx(3.0 * std::log(2.0) - 2.0).epsilon(1e-15));

  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const double rate = rng.uniform(0.1, 30.0);
    const std::size_t n = rng.index(200);
    Box region{{0, 0, 0},
               {rng.uniform(0.5, 40), rng.uniform(0.5, 4), rng.uniform(0.5, 4)}};
    const std::vector<Event> events(n);
    const double expected =
        (n == 0 ? 0.0 : n * std::log(rate)) - rate * region.volume();
    CHECK(std::fabs(hp_log_likelihood({rate}, events, region) - expected) <=
          1e-12 * std::max(1.0, std::fabs(expected)));
  }
}

TEST_CASE("fitted HP rate zeroes the likelihood derivative") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.index(300);
    Box region{{0, 0, 0},
               {rng.uniform(0.5, 20), rng.uniform(0.5, 5), rng.uniform(0.5, 5)}};
    const std::vector<Event> events(n);
    HpModel hp = fit_hp(events, region);
    CHECK(hp.rate == doctest::Approx(static_cast<double>(n) / region.volume()));
    double rate = hp.rate;
    const double fd = oracle::central_diff(
        [&] { return hp_log_likelihood({rate}, events, region); }, rate,
        1e-6 * std::max(1.0, hp.rate));
    CHECK(std::fabs(fd) <= 1e-8 * std::max(1.0, static_cast<double>(n) / hp.rate));
  }
  CHECK_THROWS_AS(fit_hp({}, Box{{0, 0, 0}, {0, 1, 1}}), ConfigError);
}

TEST_CASE("mape anchors and the elementwise oracle") {
  const Partition part = build_partition({{0, 0, 0}, {1, 1, 1}}, 1, 1, 1);
  CountGrid actual{part, {10.0}};
  CountGrid predicted{part, {12.0}};
  CHECK(mape(actual, predicted) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(mape(actual, actual) == 0.0);

  const Partition grid_part = build_partition({{0, 0, 0}, {1, 1, 1}}, 3, 2, 4);
  CountGrid a{grid_part, std::vector<double>(grid_part.box_count())};
  CountGrid b{grid_part, std::vector<double>(grid_part.box_count())};
  Rng rng(9);
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    a.values[i] = rng.index(4) == 0 ? 0.0 : rng.uniform(0.5, 20);
    b.values[i] = rng.uniform(0.0, 20);
  }
  double expected = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    if (a.values[i] > 0.0)
      expected += std::fabs(a.values[i] - b.values[i]) / a.values[i];
  }
  CHECK(mape(a, b) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(mape(a, b) >= 0.0);

  const Partition other = build_partition({{0, 0, 0}, {1, 1, 1}}, 2, 3, 4);
  CountGrid c{other, std::vector<double>(other.box_count())};
  CHECK_THROWS_AS(mape(a, c), ConfigError);
}

TEST_CASE("default evaluation partition tiles the test region") {
  SpatioTemporalDomain d;
  d.train_end = 0.8;
  const Partition part = build_eval_partition(d);
  CHECK(part.cell_count() == 100);
  CHECK(part.bin_count() == 14);
  CHECK(part.box_count() == 1400);
  double volume = 0.0;
  for (int r = 0; r < part.cell_count(); ++r)
    for (int t = 0; t < part.bin_count(); ++t) volume += part.box(r, t).volume();
  const double region_volume = part.region.volume();
  CHECK(std::fabs(volume - region_volume) <= 1e-10 * region_volume);
}

TEST_CASE("evaluation partition with the raw paper horizon") {
  SpatioTemporalDomain d;
  d.t_min = 0.0;
  d.train_end = 120960.0;   // minutes
  d.t_max = 131040.0;       // train_end + 10080
  d.s_min = {0.0, 0.0};
  d.s_max = {30.0, 30.0};
  const Partition part = build_eval_partition(d);
  CHECK(part.box_count() == 1400);
  // each bin spans 12 hours = 720 minutes
  const Box first = part.box(0, 0);
  CHECK(first.upper[0] - first.lower[0] == doctest::Approx(720.0));
  double volume = 0.0;
  for (int r = 0; r < part.cell_count(); ++r)
    for (int t = 0; t < part.bin_count(); ++t) volume += part.box(r, t).volume();
  CHECK(volume == doctest::Approx(10080.0 * 900.0).epsilon(1e-10));
}

TEST_CASE("predict_counts equals the integral and refines additively") {
  DmppModel model = eval_model(33, KernelFamily::CompactGaussian);
  const MixtureView view = test_view(model);
  const Box region = model.test_region();

  const Partition whole = build_partition(region, 1, 1, 1);
  const CountGrid total = predict_counts(view, whole);
  CHECK(total.values[0] == doctest::Approx(view_integral(view, region)).epsilon(1e-12));

  const Partition refined = build_partition(region, 2, 2, 2);
  const CountGrid fine = predict_counts(view, refined);
  double sum = 0.0;
  for (double v : fine.values) {
    CHECK(v >= 0.0);
    sum += v;
  }
  CHECK(std::fabs(sum - total.values[0]) <= 1e-10 * std::max(1.0, sum));
}

TEST_CASE("thinning on a zero intensity returns nothing") {
  FlatMixture flat(1.0);
  std::vector<double> zeros(flat.f.size(), 0.0);
  MixtureView view = flat.view();
  view.f = zeros;
  CHECK(simulate_thinning(view, {{0, 0, 0}, {1, 1, 1}}, 3).empty());
}

TEST_CASE("thinning stays inside the region and matches Poisson counts") {
  FlatMixture flat(40.0);  // constant intensity 40 over the unit cube
  const Box region{{0.1, 0.2, 0.0}, {0.9, 1.0, 0.5}};
  const double expected = 40.0 * region.volume();

  double total = 0.0;
  const int runs = 500;
  for (int run = 0; run < runs; ++run) {
    const auto events = simulate_thinning(flat.view(), region, 1000 + run);
    total += static_cast<double>(events.size());
    for (const Event& ev : events) CHECK(region.contains(ev.point()));
    for (std::size_t i = 1; i < events.size(); ++i)
      CHECK(events[i - 1].t <= events[i].t);
  }
  const double mean = total / runs;
  const double tolerance = 3.0 * std::sqrt(expected / runs);
  CHECK(std::fabs(mean - expected) <= tolerance);
}

TEST_CASE("thinning matches the analytic spatial profile (chi-square)") {
  // strongly varying mixture over the unit cube
  SpatioTemporalDomain d;
  d.train_end = 0.5;
  const RepPointGrid grid = build_grid(d, 3, 3);
  KernelParams kernel;
  kernel.family = KernelFamily::Gaussian;
  kernel.log_sigma = {std::log(0.4), std::log(0.18), std::log(0.18)};
  std::vector<double> f(grid.size());
  Rng rng(17);
  for (double& w : f) w = rng.uniform(100.0, 2200.0);
  const MixtureView view{&grid, kernel, f, 0, grid.size()};
  const Box region{{0, 0, 0}, {1, 1, 1}};

  const Partition part = build_partition(region, 4, 4, 1);
  CountGrid observed{part, std::vector<double>(part.box_count(), 0.0)};
  int total = 0;
  double replications = 0.0;
  while (total < 10000) {
    const auto events =
        simulate_thinning(view, region, 4242 + static_cast<int>(replications));
    const CountGrid one = count_events(events, part);
    for (std::size_t i = 0; i < observed.values.size(); ++i)
      observed.values[i] += one.values[i];
    total += static_cast<int>(events.size());
    replications += 1.0;
  }

  CountGrid expected = predict_counts(view, part);
  double chi2 = 0.0;
  for (std::size_t i = 0; i < expected.values.size(); ++i) {
    const double e = replications * expected.values[i];
    REQUIRE(e > 20.0);
    const double o = observed.values[i];
    chi2 += (o - e) * (o - e) / e;
  }
  // Poisson cell counts: X^2 is approximately chi-square with 16 degrees of
  // freedom; Wilson-Hilferty quantile at alpha = 0.01
  const double df = 16.0;
  const double z99 = 2.3263478740408408;
  const double crit =
      df * std::pow(1.0 - 2.0 / (9.0 * df) + z99 * std::sqrt(2.0 / (9.0 * df)), 3.0);
  CHECK(chi2 < crit);
}

TEST_CASE("predicted counts match thinning averages (small version)") {
  DmppModel model = eval_model(35, KernelFamily::Gaussian, 4, 2, 0.5);
  const MixtureView view = test_view(model);
  const Box region = model.test_region();
  const Partition part = build_partition(region, 3, 3, 2);
  const CountGrid predicted = predict_counts(view, part);

  const int runs = 400;
  CountGrid mean{part, std::vector<double>(part.box_count(), 0.0)};
  std::vector<CountGrid> samples;
  for (int run = 0; run < runs; ++run) {
    const auto events = simulate_thinning(view, region, 9000 + run);
    const CountGrid one = count_events(events, part);
    for (std::size_t i = 0; i < mean.values.size(); ++i)
      mean.values[i] += one.values[i] / runs;
  }
  int within = 0, considered = 0;
  for (std::size_t i = 0; i < mean.values.size(); ++i) {
    const double mu = predicted.values[i];
    if (mu <= 1e-9) continue;
    ++considered;
    const double se = std::sqrt(mu / runs);  // Poisson cell variance
    if (std::fabs(mean.values[i] - mu) <= 3.0 * se) ++within;
  }
  REQUIRE(considered > 0);
  CHECK(static_cast<double>(within) >= 0.9 * considered);
}

TEST_CASE("test log-likelihood of a flat mixture matches the HP formula") {
  FlatMixture flat(25.0, 6);
  DmppModel model;  // assembled by hand around the flat mixture
  SpatioTemporalDomain d;
  d.train_end = 0.5;
  ModelConfig mc;
  mc.time_points = 6;
  mc.space_per_axis = 1;
  mc.kernel_family = KernelFamily::Uniform;
  mc.support_w = 10.0;
  mc.sigma_init = {1.0, 1.0, 1.0};
  mc.net.fusion_layers = 1;
  mc.net.fusion_units = 4;
  model = make_model(d, mc, {}, 55);

  // force every mixture weight to the same constant via the output layer
  model.params.zero_values();
  const std::size_t active =
      model.rep_count() - model.test_begin();
  const double constant = 25.0;
  nn::Tensor& out_b = model.params.value(model.params.require("fus/out_b"));
  const double per_point = constant / static_cast<double>(active);
  out_b[0] = std::log(std::expm1(per_point));
  model.invalidate_f_cache();

  Rng rng(77);
  std::vector<Event> test_events(30);
  for (Event& ev : test_events) {
    ev.t = rng.uniform(0.5, 1.0);
    ev.s = {rng.uniform(0, 1), rng.uniform(0, 1)};
  }
  const TestScore score =
      test_log_likelihood(model, test_events, model.test_region());
  const double hp_value = hp_log_likelihood({constant}, test_events,
                                            model.test_region());
  CHECK(score.total == doctest::Approx(hp_value).epsilon(1e-3));
  CHECK(score.per_event ==
        doctest::Approx(hp_value / test_events.size()).epsilon(1e-3));

  // zero test events: minus the integral over the window
  const TestScore empty = test_log_likelihood(model, {}, model.test_region());
  const MixtureView view = test_view(model);
  CHECK(empty.total ==
        doctest::Approx(-view_integral(view, model.test_region())).epsilon(1e-12));
}

TEST_CASE("test log-likelihood integral agrees with quadrature") {
  DmppModel model = eval_model(39, KernelFamily::CompactGaussian, 5, 2, 0.6);
  const MixtureView view = test_view(model);
  const Box region = model.test_region();
  const double analytic = view_integral(view, region);
  const double quadrature = oracle::integrate_view(view, region);
  CHECK(analytic == doctest::Approx(quadrature).epsilon(1e-5));
}

TEST_CASE("windowed likelihood refuses an empty representative set") {
  DmppModel model = eval_model(41, KernelFamily::Gaussian, 3, 2, 0.6);
  // a sliver of time inside the test window that contains no grid point
  const Box sliver{{0.61, 0, 0}, {0.62, 1, 1}};
  CHECK_THROWS_AS(window_log_likelihood(model, {}, sliver), ConfigError);
}
