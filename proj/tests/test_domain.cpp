#include <doctest.h>

#include "dmpp/domain.hpp"

using namespace dmpp;

namespace {

SpatioTemporalDomain unit_domain(double train_end = 0.8) {
  SpatioTemporalDomain d;
  d.train_end = train_end;
  return d;
}

}  // namespace

TEST_CASE("build_grid degenerate lattice") {
  const RepPointGrid grid = build_grid(unit_domain(), 2, 1);
  REQUIRE(grid.size() == 2);
  CHECK(grid.points[0] == Vec3{0.0, 0.5, 0.5});
  CHECK(grid.points[1] == Vec3{1.0, 0.5, 0.5});
}

TEST_CASE("build_grid paper-sized configuration") {
  const RepPointGrid grid = build_grid(unit_domain(), 24, 4);
  CHECK(grid.size() == 384);
  CHECK(grid.time_count() == 24);
  CHECK(grid.space_count() == 16);
}

TEST_CASE("build_grid containment by exhaustive scan") {
  SpatioTemporalDomain d;
  d.t_min = -5.0;
  d.t_max = 125.0;
  d.train_end = 100.0;
  d.s_min = {2.0, -1.0};
  d.s_max = {8.0, 3.0};
  const RepPointGrid grid = build_grid(d, 7, 5);
  REQUIRE(grid.size() == 7u * 25u);
  for (const Vec3& u : grid.points) {
    CHECK(d.contains(u));
  }
  // spatial points strictly interior (cell centers)
  for (const Vec2& r : grid.space_points) {
    CHECK(r[0] > d.s_min[0]);
    CHECK(r[0] < d.s_max[0]);
    CHECK(r[1] > d.s_min[1]);
    CHECK(r[1] < d.s_max[1]);
  }
}

TEST_CASE("build_grid uniform time spacing") {
  const RepPointGrid grid = build_grid(unit_domain(), 28, 3);
  const double gap0 = grid.time_points[1] - grid.time_points[0];
  for (std::size_t m = 1; m + 1 < grid.time_count(); ++m) {
    const double gap = grid.time_points[m + 1] - grid.time_points[m];
    CHECK(std::fabs(gap - gap0) <= 1e-12 * gap0);
  }
  CHECK(grid.time_points.front() == 0.0);
  CHECK(grid.time_points.back() == 1.0);
}

TEST_CASE("test subset selection matches a direct filter") {
  const RepPointGrid grid = build_grid(unit_domain(0.8), 11, 2);
  const std::size_t begin = grid.test_begin(0.8);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const bool in_test = grid.points[j][0] > 0.8;
    CHECK(in_test == (j >= begin));
  }
  CHECK(begin < grid.size());  // nonempty when the horizon is positive
}

TEST_CASE("build_grid rejects invalid inputs") {
  CHECK_THROWS_AS(build_grid(unit_domain(), 1, 1), ConfigError);
  CHECK_THROWS_AS(build_grid(unit_domain(), 4, 0), ConfigError);
  SpatioTemporalDomain flat = unit_domain();
  flat.s_max[0] = flat.s_min[0];  // zero spatial extent
  CHECK_THROWS_AS(build_grid(flat, 4, 2), ConfigError);
  SpatioTemporalDomain no_time = unit_domain();
  no_time.t_max = no_time.t_min;
  CHECK_THROWS_AS(build_grid(no_time, 4, 2), ConfigError);
}

TEST_CASE("normalize affine endpoints") {
  SpatioTemporalDomain d;
  d.t_min = 10.0;
  d.t_max = 20.0;
  d.train_end = 18.0;
  d.s_min = {-2.0, 4.0};
  d.s_max = {2.0, 8.0};
  const std::vector<Event> events = {{10.0, {-2.0, 4.0}}, {15.0, {0.0, 6.0}}};
  const auto [unit, tf] = normalize(events, d);
  CHECK(unit[0].t == doctest::Approx(0.0));
  CHECK(unit[0].s[0] == doctest::Approx(0.0));
  CHECK(unit[0].s[1] == doctest::Approx(0.0));
  CHECK(unit[1].t == doctest::Approx(0.5));
  CHECK(unit[1].s[0] == doctest::Approx(0.5));
  CHECK(unit[1].s[1] == doctest::Approx(0.5));
  CHECK(tf.log_volume() == doctest::Approx(std::log(10.0 * 4.0 * 4.0)));
}

TEST_CASE("normalize round trip and order preservation") {
  SpatioTemporalDomain d;
  d.t_min = -100.0;
  d.t_max = 5000.0;
  d.train_end = 4000.0;
  d.s_min = {3.0, -9.0};
  d.s_max = {3.5, 12.0};
  Rng rng(42);
  std::vector<Event> events;
  for (int i = 0; i < 200; ++i) {
    events.push_back({rng.uniform(d.t_min, d.t_max),
                      {rng.uniform(d.s_min[0], d.s_max[0]),
                       rng.uniform(d.s_min[1], d.s_max[1])}});
  }
  const auto [unit, tf] = normalize(events, d);
  for (std::size_t i = 0; i < events.size(); ++i) {
    CHECK(unit[i].t >= 0.0);
    CHECK(unit[i].t <= 1.0);
    const Vec3 back = tf.to_raw(unit[i].point());
    for (int dim = 0; dim < 3; ++dim) {
      const double raw = events[i].point()[dim];
      CHECK(std::fabs(back[dim] - raw) <= 1e-9 * std::max(1.0, std::fabs(raw)));
    }
    if (i > 0 && events[i - 1].t < events[i].t) CHECK(unit[i - 1].t < unit[i].t);
  }
}

TEST_CASE("normalize reports the offending event") {
  SpatioTemporalDomain d = unit_domain();
  const std::vector<Event> events = {{0.5, {0.5, 0.5}}, {2.0, {0.5, 0.5}}};
  CHECK_THROWS_WITH_AS(normalize(events, d), doctest::Contains("event 1"),
                       DataError);
}
