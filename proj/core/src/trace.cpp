#include "gels/trace.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace gels {

double EventTrace::bandwidth_between(ViewerId a, ViewerId b) const {
  if (is_cdn(a) || is_cdn(b)) return cdn_capacity;
  return bandwidth[static_cast<std::size_t>(a) * n + b];
}

void EventTrace::set_bandwidth(ViewerId a, ViewerId b, double mbps) {
  bandwidth[static_cast<std::size_t>(a) * n + b] = mbps;
  bandwidth[static_cast<std::size_t>(b) * n + a] = mbps;
}

bool operator==(const EventTrace& a, const EventTrace& b) {
  return a.n == b.n && a.minutes == b.minutes && a.office_of == b.office_of &&
         a.records == b.records;
}

std::span<const EdgeRecord> snapshot(const EventTrace& trace, int minute) {
  if (minute < 1 || minute > trace.minutes) {
    throw std::out_of_range("snapshot: minute " + std::to_string(minute) +
                            " outside [1, " + std::to_string(trace.minutes) + "]");
  }
  return trace.records[static_cast<std::size_t>(minute) - 1];
}

Neighborhood neighborhood(const EventTrace& trace, ViewerId u, int minute,
                          const QoeConfig& cfg) {
  Neighborhood out;
  out.viewer = u;
  out.minute = minute;
  for (const EdgeRecord& rec : snapshot(trace, minute)) {
    if (rec.edge.src != u) continue;
    out.providers.push_back({rec.edge.dst, rec.edge.throughput_mbps,
                             qoe(rec.segments, cfg)});
  }
  // Records are sorted by (src, dst), so providers arrive in ascending
  // provider order already; keep the sort as a guard for hand-built traces.
  std::sort(out.providers.begin(), out.providers.end(),
            [](const ProviderLink& a, const ProviderLink& b) {
              return a.provider < b.provider;
            });
  return out;
}

void validate_trace(const EventTrace& trace) {
  auto fail = [](const std::string& what) {
    throw std::invalid_argument("trace: " + what);
  };
  if (trace.office_of.size() != trace.n) fail("office_of size != n");
  if (trace.minutes < 1) fail("event must span at least one minute");
  if (trace.records.size() != static_cast<std::size_t>(trace.minutes)) {
    fail("records must cover minutes 1..T");
  }
  if (trace.bandwidth.size() != static_cast<std::size_t>(trace.n) * trace.n) {
    fail("bandwidth matrix must be n*n");
  }
  for (int t = 1; t <= trace.minutes; ++t) {
    const auto& recs = trace.records[static_cast<std::size_t>(t) - 1];
    if (recs.empty()) fail("minute " + std::to_string(t) + " has no edges");
    std::vector<int> degree(trace.n, 0);
    const EdgeRecord* prev = nullptr;
    for (const EdgeRecord& rec : recs) {
      const ConnectionEdge& e = rec.edge;
      if (e.minute != t) fail("record minute field mismatch");
      if (e.src >= trace.n) fail("edge src out of range");
      if (!is_cdn(e.dst) && e.dst >= trace.n) fail("edge dst out of range");
      if (e.src == e.dst) fail("self loop");
      if (!(e.throughput_mbps >= 0.0) || !std::isfinite(e.throughput_mbps)) {
        fail("throughput must be finite and nonnegative");
      }
      if (!is_cdn(e.dst) &&
          e.throughput_mbps > trace.bandwidth_between(e.src, e.dst) + 1e-12) {
        fail("edge throughput exceeds pair capacity");
      }
      if (++degree[e.src] > trace.max_degree) {
        fail("viewer " + std::to_string(e.src) + " exceeds max degree at minute " +
             std::to_string(t));
      }
      if (prev != nullptr &&
          !(prev->edge.src < e.src ||
            (prev->edge.src == e.src && prev->edge.dst < e.dst))) {
        fail("records not sorted by (src, dst)");
      }
      prev = &rec;
    }
  }
}

namespace {

class Fnv1a {
 public:
  void feed(const void* data, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      hash_ ^= bytes[i];
      hash_ *= 1099511628211ULL;
    }
  }
  void feed_u64(std::uint64_t v) { feed(&v, sizeof v); }
  void feed_i64(std::int64_t v) { feed(&v, sizeof v); }
  void feed_f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    feed_u64(bits);
  }
  std::uint64_t value() const { return hash_; }

 private:
  std::uint64_t hash_ = 14695981039346656037ULL;
};

}  // namespace

std::uint64_t trace_hash(const EventTrace& trace) {
  Fnv1a h;
  h.feed_u64(trace.n);
  h.feed_i64(trace.minutes);
  for (std::uint32_t office : trace.office_of) h.feed_u64(office);
  for (const auto& recs : trace.records) {
    h.feed_u64(recs.size());
    for (const EdgeRecord& rec : recs) {
      h.feed_u64(rec.edge.src);
      h.feed_u64(rec.edge.dst);
      h.feed_f64(rec.edge.throughput_mbps);
      h.feed_i64(rec.edge.minute);
      h.feed_i64(rec.rebuffers);
      h.feed_u64(rec.segments.segments.size());
      for (const Segment& s : rec.segments.segments) {
        h.feed_i64(s.quality);
        h.feed_f64(s.megabits);
      }
    }
  }
  return h.value();
}

}  // namespace gels
