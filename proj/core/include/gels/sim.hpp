#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

#include "gels/qoe.hpp"
#include "gels/rng.hpp"
#include "gels/trace.hpp"
#include "gels/types.hpp"

namespace gels {

struct QualityLevel {
  int level = 1;
  double bitrate_mbps = 0.0;
};

// The encodable quality levels plus segment geometry.  Bitrates must be
// strictly increasing and K * segment_seconds must fit in one minute.
struct LadderConfig {
  std::vector<QualityLevel> qualities;
  double segment_seconds = 4.0;
  int segments_per_minute = 15;  // K
};

LadderConfig default_ladder();
void validate(const LadderConfig& ladder);

// Highest ladder level whose bitrate fits the throughput; the lowest level
// is forced when even it does not fit.
int quality_for_throughput(const LadderConfig& ladder, double throughput_mbps);

// Everything the player model needs: the ladder, the player buffer, and the
// QoE weights used to score what was delivered.
struct SimParams {
  LadderConfig ladder = default_ladder();
  double buffer_seconds = 8.0;
  QoeConfig qoe;
};

// Deterministic analytic player: one minute of segments delivered over a
// connection with the given throughput.  Quality is throughput-greedy and
// constant across the minute; segment size is bitrate * segment_seconds.
SegmentTrace simulate_segments(const LadderConfig& ladder, double throughput_mbps,
                               double buffer_seconds);

struct GeneratorConfig {
  std::uint32_t n_viewers = 60;
  std::uint32_t n_offices = 3;
  int minutes = 45;  // T
  std::pair<double, double> intra_office_mbps{20.0, 100.0};
  std::pair<double, double> inter_office_mbps{0.1, 4.0};
  std::uint32_t cdn_seeds_per_office = 1;
  double cdn_capacity_mbps = 50.0;
  std::uint64_t seed = 0;
};

// Synthesizes one event: offices assigned round-robin, pairwise capacities
// drawn uniformly from the intra/inter ranges, random initial connections,
// then minute-by-minute evolution where viewers probe random peers and keep
// a probe that beats their worst provider.  Deterministic per seed.
EventTrace generate_event(const GeneratorConfig& cfg, const SimParams& sim = {});

struct InvalidActionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MaskedActionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Per-viewer outcome of one step: the reward (QoE of the edge the action
// established, realized at the next minute), the segments that edge
// delivered, and the viewer's new neighborhood.
struct StepOutcome {
  double reward = 0.0;
  SegmentTrace segments;
  Neighborhood neighborhood;
};

struct StepResult {
  std::map<ViewerId, StepOutcome> outcomes;
  bool done = false;
};

// The environment the tracker interacts with.  It starts from the recorded
// minute-1 connections of an event and maintains a live overlay of provider
// edges that the tracker's actions rewire.  Single-owner, single-threaded;
// run several environments on disjoint instances for parallel rollouts.
class Environment {
 public:
  Environment(const EventTrace& trace, SimParams params, std::uint64_t seed);

  void reset(std::uint64_t seed);

  int minute() const { return minute_; }
  bool done() const { return minute_ >= trace_->minutes; }
  std::uint32_t viewer_count() const { return trace_->n; }
  const EventTrace& trace() const { return *trace_; }

  // Seconds of buffered video per viewer; reset to B at every minute since
  // buffers do not carry across minutes in this player model.
  const std::vector<double>& player_buffers() const { return player_buffers_; }

  // Live neighborhood of u at the current minute (QoE-annotated, ordered by
  // provider id).
  Neighborhood neighborhood(ViewerId u) const;
  std::vector<Neighborhood> neighborhoods() const;

  // provider -> edge QoE map of u's current neighborhood, for KL scoring.
  std::map<ViewerId, double> provider_qoe(ViewerId u) const;

  // Applies one action per acting viewer: the chosen provider edge replaces
  // the viewer's lowest-throughput provider (or refreshes an existing edge),
  // the new edge's segments for the next minute are simulated, and the
  // reward is their QoE.  With a mask trace, each (u, v) must appear in the
  // mask at the current minute and the established edge reuses the recorded
  // throughput; otherwise the edge runs at full pair capacity.
  StepResult step(const std::map<ViewerId, ViewerId>& actions,
                  const EventTrace* mask = nullptr);

 private:
  struct LiveEdge {
    ViewerId provider = 0;
    double throughput_mbps = 0.0;
    SegmentTrace segments;
    double qoe_value = 0.0;
  };

  Neighborhood to_neighborhood(ViewerId u) const;

  const EventTrace* trace_;
  SimParams params_;
  int minute_ = 1;
  std::vector<std::vector<LiveEdge>> providers_;  // per viewer, ascending id
  std::vector<double> player_buffers_;            // seconds, reset to B each minute
  Rng rng_;
};

struct TraceParseError : std::runtime_error {
  TraceParseError(const std::string& what, int line_number)
      : std::runtime_error(what + " (line " + std::to_string(line_number) + ")"),
        line(line_number) {}
  int line = 0;
};

// Canonical trace format: JSON Lines, UTF-8, LF.  One header line
//   {"n":int,"T":int,"offices":[int,...]}
// then one record per edge-minute
//   {"minute":int,"src":int,"dst":int|"CDN","throughput_mbps":float,
//    "segments":[{"q":int,"bits_mb":float}],"rebuffers":int}
// ordered by (minute, src, dst).
void save_event_trace(const EventTrace& trace, const std::filesystem::path& path);

// Loads and validates a canonical trace.  The pair-capacity matrix is not
// part of the format; it is reconstructed as the maximum throughput observed
// on each pair (symmetrized), with unobserved pairs imputed from the median
// observed intra-office / inter-office throughput.
EventTrace load_event_trace(const std::filesystem::path& path,
                            const SimParams& sim = {},
                            int max_degree = kDefaultMaxDegree);

}  // namespace gels
