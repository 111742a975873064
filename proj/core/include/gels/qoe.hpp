#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gels/types.hpp"

namespace gels {

// Values fed to the log inside the KL divergence are clamped below at this
// floor, since edge QoE can be zero or negative.
inline constexpr double kKlFloor = 1e-6;

// One downloaded video segment: the ladder level it was encoded at and its
// size in megabits.
struct Segment {
  int quality = 1;
  double megabits = 0.0;

  friend bool operator==(const Segment&, const Segment&) = default;
};

// What one connection delivered during one minute: the per-segment qualities
// and sizes, the connection bandwidth, and the player buffer the segments
// were played against.
struct SegmentTrace {
  std::vector<Segment> segments;
  double bandwidth_mbps = 0.0;
  double buffer_seconds = 0.0;

  friend bool operator==(const SegmentTrace&, const SegmentTrace&) = default;
};

struct QoeConfig {
  double lambda = 0.2;  // weight of quality variation
  double mu = 0.3;      // weight of rebuffer count
  double q_max = 5.0;   // top ladder level, the best achievable score
};

enum class QoeLabel : int { Bad = 0, Poor = 1, Fair = 2, Good = 3, Excellent = 4 };
inline constexpr int kNumLabels = 5;

enum class ConnectionLevel : int { Low = 0, Medium = 1, High = 2 };
inline constexpr int kNumLevels = 3;

const char* to_string(QoeLabel label);
const char* to_string(ConnectionLevel level);

// Center of a label's normalized-QoE bin: 0.1, 0.3, 0.5, 0.7, 0.9.
double label_center(QoeLabel label);

// Number of segments whose download time d_k / bandwidth exceeds the player
// buffer.  A non-positive bandwidth stalls every segment.
int count_rebuffers(std::span<const double> segment_megabits,
                    double bandwidth_mbps, double buffer_seconds);
int count_rebuffers(const SegmentTrace& trace);

// Mean segment quality.  Throws std::domain_error on an empty trace.
double avg_quality(const SegmentTrace& trace);

// Mean absolute quality change between consecutive segments.  Requires at
// least two segments.
double avg_variation(const SegmentTrace& trace);

// Composite per-connection score:
//   avg_quality - lambda * avg_variation - mu * rebuffers.
// May be negative; it is clamped only at normalization and inside the KL
// divergence.
double qoe(const SegmentTrace& trace, const QoeConfig& cfg);

// Maps a raw score into [0, 1] against the best achievable score q_max.
double normalize_qoe(double value, const QoeConfig& cfg);

// Viewer-level score: the mean over the provider edges.  Empty neighborhoods
// have no defined score; callers label them Bad.
std::optional<double> viewer_qoe(const Neighborhood& neigh);

// Equal-length label bins over [0, 1], left-closed: [0,.2) Bad, [.2,.4) Poor,
// [.4,.6) Fair, [.6,.8) Good, [.8,1] Excellent.  Input outside [0,1] is
// clamped first.
QoeLabel label_of(double normalized);

// Throughput bins: < 5 Mbps low, 5-10 medium (inclusive both ends), > 10 high.
ConnectionLevel connection_level(double throughput_mbps);

struct KlDivergence {
  double value = 0.0;
  // Set when the two maps share no provider; value is then 0 by convention.
  bool disjoint_support = false;
};

// Generalized (unnormalized) divergence between a viewer's per-provider QoE
// maps at consecutive minutes, over the common providers:
//   sum_v next[v] * ln(next[v] / prev[v])
// with both operands clamped below at kKlFloor.  Can be negative.
KlDivergence kl_divergence(const std::map<ViewerId, double>& qoe_prev,
                           const std::map<ViewerId, double>& qoe_next);

}  // namespace gels
