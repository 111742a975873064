#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gels/qoe.hpp"
#include "gels/types.hpp"

namespace gels {

// One observed edge-minute: the connection plus the segments it delivered.
struct EdgeRecord {
  ConnectionEdge edge;
  SegmentTrace segments;
  int rebuffers = 0;

  friend bool operator==(const EdgeRecord&, const EdgeRecord&) = default;
};

// An entire streaming event: the evolving viewer graph with per-minute
// connection observations.  Immutable after construction; safe to share
// across threads read-only.
//
// `bandwidth` is the dense symmetric viewer-pair capacity matrix.  For
// generated events it is exact; for events loaded from a trace file it is
// reconstructed from the observed throughputs (see load_event_trace).  It is
// an acceleration structure derived from, not part of, the canonical trace
// content, so operator== compares the serializable content only.
struct EventTrace {
  std::uint32_t n = 0;                    // viewer count
  int minutes = 0;                        // T
  std::vector<std::uint32_t> office_of;   // size n
  int max_degree = kDefaultMaxDegree;
  double cdn_capacity = 0.0;
  std::vector<std::vector<EdgeRecord>> records;  // index t-1, sorted (src, dst)
  std::vector<double> bandwidth;                 // n*n, symmetric

  double bandwidth_between(ViewerId a, ViewerId b) const;
  void set_bandwidth(ViewerId a, ViewerId b, double mbps);
};

bool operator==(const EventTrace& a, const EventTrace& b);

// The edge set recorded at one minute.  Throws std::out_of_range for a
// minute outside [1, T].
std::span<const EdgeRecord> snapshot(const EventTrace& trace, int minute);

// The provider edges of u at the given minute, ordered by ascending provider
// id, each annotated with the QoE of its recorded segments.
Neighborhood neighborhood(const EventTrace& trace, ViewerId u, int minute,
                          const QoeConfig& cfg = {});

// Checks the structural invariants (record ordering, capacity bounds, degree
// cap, per-minute coverage).  Throws std::invalid_argument on violation.
void validate_trace(const EventTrace& trace);

// FNV-1a hash over the canonical content.  Stable across processes; used to
// give events an order- and filename-independent identity.
std::uint64_t trace_hash(const EventTrace& trace);

}  // namespace gels
