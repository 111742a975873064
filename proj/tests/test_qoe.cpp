#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <map>

#include "gels/qoe.hpp"
#include "gels/rng.hpp"

using namespace gels;

namespace {

// Straight-line reference evaluation of the composite score, kept
// independent of the production implementation.
double qoe_reference(const SegmentTrace& trace, const QoeConfig& cfg) {
  const std::size_t k = trace.segments.size();
  double quality = 0.0;
  for (const Segment& s : trace.segments) quality += s.quality;
  quality /= static_cast<double>(k);

  double variation = 0.0;
  for (std::size_t i = 0; i + 1 < k; ++i) {
    variation += std::abs(trace.segments[i + 1].quality - trace.segments[i].quality);
  }
  variation /= static_cast<double>(k - 1);

  int stalls = 0;
  for (const Segment& s : trace.segments) {
    if (trace.bandwidth_mbps <= 0.0 ||
        s.megabits / trace.bandwidth_mbps > trace.buffer_seconds) {
      ++stalls;
    }
  }
  return quality - cfg.lambda * variation - cfg.mu * stalls;
}

SegmentTrace make_trace(std::vector<int> qualities, std::vector<double> megabits,
                        double bandwidth, double buffer) {
  SegmentTrace trace;
  for (std::size_t i = 0; i < qualities.size(); ++i) {
    trace.segments.push_back({qualities[i], megabits[i]});
  }
  trace.bandwidth_mbps = bandwidth;
  trace.buffer_seconds = buffer;
  return trace;
}

SegmentTrace random_trace(Rng& rng) {
  const int k = 2 + static_cast<int>(rng.below(14));
  SegmentTrace trace;
  for (int i = 0; i < k; ++i) {
    trace.segments.push_back({1 + static_cast<int>(rng.below(5)),
                              rng.uniform(0.0, 40.0)});
  }
  trace.bandwidth_mbps = rng.uniform(0.05, 20.0);
  trace.buffer_seconds = rng.uniform(0.5, 10.0);
  return trace;
}

}  // namespace

TEST_CASE("count_rebuffers matches the worked example") {
  const double d[] = {2.0, 6.0, 2.0};
  // Download times 1 s, 3 s, 1 s against a 2 s buffer: one stall.
  CHECK(count_rebuffers(d, 2.0, 2.0) == 1);
  CHECK(count_rebuffers(d, 1000.0, 2.0) == 0);
  CHECK(count_rebuffers(d, 0.1, 2.0) == 3);  // every segment stalls
  CHECK(count_rebuffers(d, 0.0, 2.0) == 3);  // zero bandwidth convention
}

TEST_CASE("avg_quality") {
  CHECK(avg_quality(make_trace({2, 3, 3}, {1, 1, 1}, 1, 1)) ==
        doctest::Approx(8.0 / 3.0).epsilon(1e-12));
  CHECK(avg_quality(make_trace({4, 4, 4, 4}, {1, 1, 1, 1}, 1, 1)) == 4.0);
  CHECK(avg_quality(make_trace({1, 5}, {1, 1}, 1, 1)) == 3.0);
  CHECK_THROWS_AS(avg_quality(SegmentTrace{}), std::domain_error);
}

TEST_CASE("avg_variation") {
  CHECK(avg_variation(make_trace({2, 3, 3}, {1, 1, 1}, 1, 1)) == 0.5);
  CHECK(avg_variation(make_trace({3, 3, 3}, {1, 1, 1}, 1, 1)) == 0.0);
  CHECK(avg_variation(make_trace({1, 5, 1}, {1, 1, 1}, 1, 1)) == 4.0);
  SegmentTrace single;
  single.segments.push_back({3, 1.0});
  CHECK_THROWS_AS(avg_variation(single), std::domain_error);
}

TEST_CASE("qoe reproduces the worked example exactly") {
  const SegmentTrace trace = make_trace({2, 3, 3}, {2, 6, 2}, 2.0, 2.0);
  const QoeConfig cfg{0.2, 0.3, 5.0};
  const double expected = 8.0 / 3.0 - 0.2 * 0.5 - 0.3 * 1.0;  // 2.2667
  CHECK(qoe(trace, cfg) == doctest::Approx(expected).epsilon(1e-15));
  CHECK(qoe(trace, cfg) == doctest::Approx(2.2667).epsilon(1e-4));
}

TEST_CASE("qoe degenerate weights") {
  const SegmentTrace trace = make_trace({2, 3, 3}, {2, 6, 2}, 2.0, 2.0);
  CHECK(qoe(trace, QoeConfig{0.0, 0.0, 5.0}) ==
        doctest::Approx(avg_quality(trace)).epsilon(1e-15));
  // Constant top quality with no stalls scores q_max.
  const SegmentTrace best = make_trace({5, 5, 5}, {1, 1, 1}, 100.0, 8.0);
  CHECK(qoe(best, QoeConfig{}) == 5.0);
}

TEST_CASE("qoe matches the straight-line oracle on random traces") {
  Rng rng(20240811);
  const QoeConfig cfg{0.2, 0.3, 5.0};
  for (int i = 0; i < 1000; ++i) {
    const SegmentTrace trace = random_trace(rng);
    CHECK(std::abs(qoe(trace, cfg) - qoe_reference(trace, cfg)) < 1e-12);
  }
}

TEST_CASE("qoe never exceeds avg_quality, equality without penalties") {
  Rng rng(7);
  const QoeConfig cfg{0.2, 0.3, 5.0};
  for (int i = 0; i < 300; ++i) {
    const SegmentTrace trace = random_trace(rng);
    const double q = qoe(trace, cfg);
    CHECK(q <= avg_quality(trace) + 1e-12);
    if (avg_variation(trace) == 0.0 && count_rebuffers(trace) == 0) {
      CHECK(q == doctest::Approx(avg_quality(trace)).epsilon(1e-15));
    }
  }
}

TEST_CASE("normalize_qoe clamps into the unit interval") {
  const QoeConfig cfg{0.2, 0.3, 5.0};
  CHECK(normalize_qoe(5.0, cfg) == 1.0);
  CHECK(normalize_qoe(-2.0, cfg) == 0.0);
  CHECK(normalize_qoe(0.0, cfg) == 0.0);
  CHECK(normalize_qoe(2.2667, cfg) == doctest::Approx(0.45334).epsilon(1e-9));
  CHECK(normalize_qoe(99.0, cfg) == 1.0);
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const double v = normalize_qoe(rng.uniform(-50.0, 50.0), cfg);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("viewer_qoe averages provider edges") {
  Neighborhood neigh;
  neigh.providers = {{0, 1.0, 2.0}};
  CHECK(viewer_qoe(neigh).value() == 2.0);
  neigh.providers = {{0, 1.0, 1.0}, {1, 1.0, 3.0}};
  CHECK(viewer_qoe(neigh).value() == 2.0);
  CHECK(!viewer_qoe(Neighborhood{}).has_value());
}

TEST_CASE("label bins are left-closed") {
  CHECK(label_of(0.0) == QoeLabel::Bad);
  CHECK(label_of(0.19999) == QoeLabel::Bad);
  CHECK(label_of(0.2) == QoeLabel::Poor);
  CHECK(label_of(0.4) == QoeLabel::Fair);
  CHECK(label_of(0.5) == QoeLabel::Fair);
  CHECK(label_of(0.6) == QoeLabel::Good);
  CHECK(label_of(0.8) == QoeLabel::Excellent);
  CHECK(label_of(1.0) == QoeLabel::Excellent);
  // Out-of-range input is clamped first.
  CHECK(label_of(-3.0) == QoeLabel::Bad);
  CHECK(label_of(42.0) == QoeLabel::Excellent);
}

TEST_CASE("label_of is monotone") {
  Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    const double x = rng.uniform();
    const double y = rng.uniform();
    const double lo = std::min(x, y);
    const double hi = std::max(x, y);
    CHECK(static_cast<int>(label_of(lo)) <= static_cast<int>(label_of(hi)));
  }
}

TEST_CASE("connection levels") {
  CHECK(connection_level(3.0) == ConnectionLevel::Low);
  CHECK(connection_level(7.0) == ConnectionLevel::Medium);
  CHECK(connection_level(12.0) == ConnectionLevel::High);
  // Boundaries: 5 and 10 both belong to Medium.
  CHECK(connection_level(5.0) == ConnectionLevel::Medium);
  CHECK(connection_level(10.0) == ConnectionLevel::Medium);
  CHECK(connection_level(4.9999) == ConnectionLevel::Low);
  CHECK(connection_level(10.0001) == ConnectionLevel::High);
}

TEST_CASE("kl_divergence hand example") {
  const std::map<ViewerId, double> prev{{0, 1.0}, {1, 2.0}};
  const std::map<ViewerId, double> next{{0, 2.0}, {1, 1.0}};
  // 2 ln 2 + 1 ln(1/2) = ln 2
  const auto kl = kl_divergence(prev, next);
  CHECK(!kl.disjoint_support);
  CHECK(std::abs(kl.value - std::log(2.0)) < 1e-12);
}

TEST_CASE("kl_divergence of identical maps is zero") {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    std::map<ViewerId, double> m;
    const int k = 1 + static_cast<int>(rng.below(6));
    for (int j = 0; j < k; ++j) {
      m[static_cast<ViewerId>(rng.below(50))] = rng.uniform(-4.0, 5.0);
    }
    CHECK(kl_divergence(m, m).value == 0.0);
  }
}

TEST_CASE("kl_divergence clamps nonpositive values and flags disjoint maps") {
  const std::map<ViewerId, double> prev{{0, -3.0}};
  const std::map<ViewerId, double> next{{0, 1.0}};
  // ln(1 / 1e-6)
  CHECK(kl_divergence(prev, next).value ==
        doctest::Approx(std::log(1.0 / kKlFloor)).epsilon(1e-12));

  const auto disjoint = kl_divergence({{0, 1.0}}, {{1, 1.0}});
  CHECK(disjoint.disjoint_support);
  CHECK(disjoint.value == 0.0);

  // Only common providers contribute.
  const auto partial = kl_divergence({{0, 1.0}, {2, 9.0}}, {{0, 1.0}, {3, 7.0}});
  CHECK(!partial.disjoint_support);
  CHECK(partial.value == 0.0);
}

TEST_CASE("label centers") {
  CHECK(label_center(QoeLabel::Bad) == doctest::Approx(0.1));
  CHECK(label_center(QoeLabel::Fair) == doctest::Approx(0.5));
  CHECK(label_center(QoeLabel::Excellent) == doctest::Approx(0.9));
}

TEST_CASE("qoe is monotone nonincreasing in the penalty weights") {
  Rng rng(2718281);
  for (int i = 0; i < 200; ++i) {
    const SegmentTrace trace = random_trace(rng);
    const double l1 = rng.uniform(0.0, 1.0);
    const double l2 = l1 + rng.uniform(0.0, 1.0);
    const double m1 = rng.uniform(0.0, 1.0);
    const double m2 = m1 + rng.uniform(0.0, 1.0);
    CHECK(qoe(trace, QoeConfig{l2, m1, 5.0}) <= qoe(trace, QoeConfig{l1, m1, 5.0}) + 1e-12);
    CHECK(qoe(trace, QoeConfig{l1, m2, 5.0}) <= qoe(trace, QoeConfig{l1, m1, 5.0}) + 1e-12);
  }
}

TEST_CASE("qoe is monotone nonincreasing in the rebuffer count") {
  // Same qualities, the same sizes, a slower link: never a better score.
  Rng rng(31);
  for (int i = 0; i < 200; ++i) {
    const SegmentTrace fast = random_trace(rng);
    SegmentTrace slow = fast;
    slow.bandwidth_mbps = fast.bandwidth_mbps * rng.uniform(0.1, 1.0);
    const QoeConfig cfg{0.2, 0.3, 5.0};
    CHECK(qoe(slow, cfg) <= qoe(fast, cfg) + 1e-12);
  }
}
