#include <doctest.h>

#include "gels/sim.hpp"
#include "gels/trace.hpp"

using namespace gels;

namespace {

// Small hand-built event: 3 viewers, 2 minutes.
EventTrace tiny_trace() {
  EventTrace trace;
  trace.n = 3;
  trace.minutes = 2;
  trace.office_of = {0, 0, 1};
  trace.cdn_capacity = 50.0;
  trace.bandwidth.assign(9, 0.0);
  trace.set_bandwidth(0, 1, 8.0);
  trace.set_bandwidth(0, 2, 2.0);
  trace.set_bandwidth(1, 2, 4.0);

  const LadderConfig ladder = default_ladder();
  auto record = [&](ViewerId src, ViewerId dst, double mbps, int minute) {
    EdgeRecord rec;
    rec.edge = {src, dst, mbps, minute};
    rec.segments = simulate_segments(ladder, mbps, 8.0);
    rec.rebuffers = count_rebuffers(rec.segments);
    return rec;
  };
  trace.records.resize(2);
  trace.records[0] = {record(0, 1, 8.0, 1), record(1, 2, 4.0, 1),
                      record(2, kCdnId, 50.0, 1)};
  trace.records[1] = {record(0, 1, 8.0, 2), record(0, 2, 2.0, 2),
                      record(1, 2, 4.0, 2), record(2, kCdnId, 50.0, 2)};
  return trace;
}

}  // namespace

TEST_CASE("snapshot returns the stored minute") {
  const EventTrace trace = tiny_trace();
  CHECK(snapshot(trace, 1).size() == 3);
  CHECK(snapshot(trace, 2).size() == 4);
  CHECK(snapshot(trace, 1)[0].edge == ConnectionEdge{0, 1, 8.0, 1});
  CHECK_THROWS_AS(snapshot(trace, 0), std::out_of_range);
  CHECK_THROWS_AS(snapshot(trace, 3), std::out_of_range);
}

TEST_CASE("neighborhood filters and orders providers") {
  const EventTrace trace = tiny_trace();
  const Neighborhood none = neighborhood(trace, 2, 1);
  REQUIRE(none.providers.size() == 1);
  CHECK(none.providers[0].provider == kCdnId);

  const Neighborhood two = neighborhood(trace, 0, 2);
  REQUIRE(two.providers.size() == 2);
  CHECK(two.providers[0].provider == 1);
  CHECK(two.providers[1].provider == 2);

  // QoE annotation equals qoe() of the stored segments.
  const QoeConfig cfg;
  for (const EdgeRecord& rec : snapshot(trace, 2)) {
    if (rec.edge.src != 0) continue;
    const Neighborhood n = neighborhood(trace, 0, 2, cfg);
    for (const ProviderLink& p : n.providers) {
      if (p.provider == rec.edge.dst) {
        CHECK(p.qoe == doctest::Approx(qoe(rec.segments, cfg)).epsilon(1e-15));
      }
    }
  }
}

TEST_CASE("neighborhood round-trips the snapshot on generated traces") {
  GeneratorConfig cfg;
  cfg.n_viewers = 24;
  cfg.n_offices = 3;
  cfg.minutes = 6;
  cfg.seed = 99;
  const EventTrace trace = generate_event(cfg);
  for (int t = 1; t <= trace.minutes; ++t) {
    std::size_t via_neighborhoods = 0;
    for (ViewerId u = 0; u < trace.n; ++u) {
      const Neighborhood n = neighborhood(trace, u, t);
      via_neighborhoods += n.providers.size();
      for (std::size_t i = 0; i + 1 < n.providers.size(); ++i) {
        CHECK(n.providers[i].provider < n.providers[i + 1].provider);
      }
      for (const ProviderLink& p : n.providers) {
        const auto recs = snapshot(trace, t);
        const bool found =
            std::any_of(recs.begin(), recs.end(), [&](const EdgeRecord& rec) {
              return rec.edge.src == u && rec.edge.dst == p.provider &&
                     rec.edge.throughput_mbps == p.throughput_mbps;
            });
        CHECK(found);
      }
    }
    CHECK(via_neighborhoods == snapshot(trace, t).size());
  }
}

TEST_CASE("capacity bound holds on generated traces") {
  GeneratorConfig cfg;
  cfg.n_viewers = 30;
  cfg.minutes = 8;
  cfg.seed = 1234;
  const EventTrace trace = generate_event(cfg);
  for (int t = 1; t <= trace.minutes; ++t) {
    for (const EdgeRecord& rec : snapshot(trace, t)) {
      if (is_cdn(rec.edge.dst)) continue;
      CHECK(rec.edge.throughput_mbps <=
            trace.bandwidth_between(rec.edge.src, rec.edge.dst) + 1e-12);
    }
  }
}

TEST_CASE("validate_trace rejects broken traces") {
  EventTrace trace = tiny_trace();
  CHECK_NOTHROW(validate_trace(trace));

  EventTrace degree = trace;
  degree.records[0].insert(degree.records[0].begin() + 1,
                           degree.records[0][1]);  // duplicate src 1 record
  CHECK_THROWS_AS(validate_trace(degree), std::invalid_argument);

  EventTrace capacity = trace;
  capacity.records[0][0].edge.throughput_mbps = 100.0;
  CHECK_THROWS_AS(validate_trace(capacity), std::invalid_argument);

  EventTrace empty_minute = trace;
  empty_minute.records[1].clear();
  CHECK_THROWS_AS(validate_trace(empty_minute), std::invalid_argument);
}

TEST_CASE("trace_hash separates distinct traces and is stable") {
  const EventTrace a = tiny_trace();
  CHECK(trace_hash(a) == trace_hash(tiny_trace()));
  EventTrace b = tiny_trace();
  b.records[0][0].edge.throughput_mbps = 7.5;
  CHECK(trace_hash(a) != trace_hash(b));
}
