#include "gels/sim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace gels {

namespace {

// Probability per viewer per minute that the generator's background tracker
// probes a random peer and keeps it when it beats the worst provider.  Low
// enough that most viewers are still on weak connections through the first
// third of an event and keep improving afterwards.
constexpr double kProbeProbability = 0.15;

}  // namespace

LadderConfig default_ladder() {
  LadderConfig ladder;
  ladder.qualities = {{1, 0.5}, {2, 1.2}, {3, 2.5}, {4, 5.0}, {5, 8.0}};
  ladder.segment_seconds = 4.0;
  ladder.segments_per_minute = 15;
  return ladder;
}

void validate(const LadderConfig& ladder) {
  if (ladder.qualities.empty()) {
    throw std::invalid_argument("ladder: no quality levels");
  }
  for (std::size_t i = 0; i + 1 < ladder.qualities.size(); ++i) {
    if (!(ladder.qualities[i].bitrate_mbps < ladder.qualities[i + 1].bitrate_mbps)) {
      throw std::invalid_argument("ladder: bitrates must be strictly increasing");
    }
  }
  if (!(ladder.segment_seconds > 0.0)) {
    throw std::invalid_argument("ladder: segment_seconds must be positive");
  }
  if (ladder.segments_per_minute < 2) {
    throw std::invalid_argument("ladder: need at least two segments per minute");
  }
  if (ladder.segments_per_minute * ladder.segment_seconds > 60.0 + 1e-9) {
    throw std::invalid_argument("ladder: K * segment_seconds exceeds one minute");
  }
}

int quality_for_throughput(const LadderConfig& ladder, double throughput_mbps) {
  int level = ladder.qualities.front().level;
  for (const QualityLevel& q : ladder.qualities) {
    if (q.bitrate_mbps <= throughput_mbps) level = q.level;
  }
  return level;
}

SegmentTrace simulate_segments(const LadderConfig& ladder, double throughput_mbps,
                               double buffer_seconds) {
  const int level = quality_for_throughput(ladder, throughput_mbps);
  double bitrate = ladder.qualities.front().bitrate_mbps;
  for (const QualityLevel& q : ladder.qualities) {
    if (q.level == level) bitrate = q.bitrate_mbps;
  }
  SegmentTrace trace;
  trace.bandwidth_mbps = throughput_mbps;
  trace.buffer_seconds = buffer_seconds;
  trace.segments.assign(static_cast<std::size_t>(ladder.segments_per_minute),
                        Segment{level, bitrate * ladder.segment_seconds});
  return trace;
}

namespace {

struct ProviderSlot {
  ViewerId provider;
  double throughput_mbps;
};

// Lowest throughput first, smaller id breaking ties: the eviction candidate.
std::size_t worst_slot(const std::vector<ProviderSlot>& slots) {
  std::size_t worst = 0;
  for (std::size_t i = 1; i < slots.size(); ++i) {
    if (slots[i].throughput_mbps < slots[worst].throughput_mbps ||
        (slots[i].throughput_mbps == slots[worst].throughput_mbps &&
         slots[i].provider < slots[worst].provider)) {
      worst = i;
    }
  }
  return worst;
}

bool has_provider(const std::vector<ProviderSlot>& slots, ViewerId v) {
  for (const ProviderSlot& s : slots) {
    if (s.provider == v) return true;
  }
  return false;
}

}  // namespace

EventTrace generate_event(const GeneratorConfig& cfg, const SimParams& sim) {
  if (cfg.n_viewers < 2) {
    throw std::invalid_argument("generator: need at least two viewers");
  }
  if (cfg.n_offices == 0 || cfg.n_offices > cfg.n_viewers) {
    throw std::invalid_argument("generator: office count must be in [1, n]");
  }
  if (cfg.minutes < 1) throw std::invalid_argument("generator: minutes < 1");
  if (cfg.intra_office_mbps.first > cfg.intra_office_mbps.second ||
      cfg.inter_office_mbps.first > cfg.inter_office_mbps.second) {
    throw std::invalid_argument("generator: bandwidth range lo > hi");
  }
  validate(sim.ladder);

  const std::uint32_t n = cfg.n_viewers;
  EventTrace trace;
  trace.n = n;
  trace.minutes = cfg.minutes;
  trace.max_degree = kDefaultMaxDegree;
  trace.cdn_capacity = cfg.cdn_capacity_mbps;
  trace.office_of.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) trace.office_of[i] = i % cfg.n_offices;

  Rng rng(mix64(cfg.seed));

  trace.bandwidth.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (std::uint32_t u = 0; u < n; ++u) {
    for (std::uint32_t v = u + 1; v < n; ++v) {
      const bool same_office = trace.office_of[u] == trace.office_of[v];
      const auto& range = same_office ? cfg.intra_office_mbps : cfg.inter_office_mbps;
      trace.set_bandwidth(u, v, rng.uniform(range.first, range.second));
    }
  }

  // CDN seeds: the first cdn_seeds_per_office viewers of each office.
  std::vector<bool> is_seed(n, false);
  for (std::uint32_t office = 0; office < cfg.n_offices; ++office) {
    std::uint32_t assigned = 0;
    for (std::uint32_t u = office; u < n && assigned < cfg.cdn_seeds_per_office;
         u += cfg.n_offices) {
      is_seed[u] = true;
      ++assigned;
    }
  }

  // Initial connections: CDN seeds keep one CDN link; remaining slots are
  // uniform random peers.
  std::vector<std::vector<ProviderSlot>> slots(n);
  for (std::uint32_t u = 0; u < n; ++u) {
    auto& mine = slots[u];
    if (is_seed[u]) mine.push_back({kCdnId, cfg.cdn_capacity_mbps});
    while (mine.size() < static_cast<std::size_t>(trace.max_degree) &&
           mine.size() < static_cast<std::size_t>(n) - 1 + (is_seed[u] ? 1 : 0)) {
      const auto v = static_cast<ViewerId>(rng.below(n));
      if (v == u || has_provider(mine, v)) continue;
      mine.push_back({v, trace.bandwidth_between(u, v)});
    }
  }

  trace.records.resize(static_cast<std::size_t>(cfg.minutes));
  const auto record_minute = [&](int t) {
    auto& recs = trace.records[static_cast<std::size_t>(t) - 1];
    for (std::uint32_t u = 0; u < n; ++u) {
      auto ordered = slots[u];
      std::sort(ordered.begin(), ordered.end(),
                [](const ProviderSlot& a, const ProviderSlot& b) {
                  return a.provider < b.provider;
                });
      for (const ProviderSlot& s : ordered) {
        EdgeRecord rec;
        rec.edge = {u, s.provider, s.throughput_mbps, t};
        rec.segments =
            simulate_segments(sim.ladder, s.throughput_mbps, sim.buffer_seconds);
        rec.rebuffers = count_rebuffers(rec.segments);
        recs.push_back(std::move(rec));
      }
    }
  };

  record_minute(1);
  for (int t = 2; t <= cfg.minutes; ++t) {
    // Background tracker: a random probe per viewer, kept when it beats the
    // current worst provider.  This is the same replace-worst move the
    // environment applies for an action, so recorded events replay exactly.
    for (std::uint32_t u = 0; u < n; ++u) {
      if (rng.uniform() >= kProbeProbability) continue;
      const auto candidate = static_cast<ViewerId>(rng.below(n));
      if (candidate == u || has_provider(slots[u], candidate)) continue;
      const std::size_t worst = worst_slot(slots[u]);
      const double offered = trace.bandwidth_between(u, candidate);
      if (offered > slots[u][worst].throughput_mbps) {
        slots[u][worst] = {candidate, offered};
      }
    }
    record_minute(t);
  }

  validate_trace(trace);
  return trace;
}

Environment::Environment(const EventTrace& trace, SimParams params,
                         std::uint64_t seed)
    : trace_(&trace), params_(std::move(params)), rng_(mix64(seed)) {
  validate(params_.ladder);
  reset(seed);
}

void Environment::reset(std::uint64_t seed) {
  rng_ = Rng(mix64(seed));
  minute_ = 1;
  player_buffers_.assign(trace_->n, params_.buffer_seconds);
  providers_.assign(trace_->n, {});
  for (const EdgeRecord& rec : snapshot(*trace_, 1)) {
    LiveEdge live;
    live.provider = rec.edge.dst;
    live.throughput_mbps = rec.edge.throughput_mbps;
    live.segments = rec.segments;
    live.qoe_value = qoe(rec.segments, params_.qoe);
    providers_[rec.edge.src].push_back(std::move(live));
  }
  for (auto& list : providers_) {
    std::sort(list.begin(), list.end(), [](const LiveEdge& a, const LiveEdge& b) {
      return a.provider < b.provider;
    });
  }
}

Neighborhood Environment::to_neighborhood(ViewerId u) const {
  Neighborhood out;
  out.viewer = u;
  out.minute = minute_;
  for (const LiveEdge& e : providers_[u]) {
    out.providers.push_back({e.provider, e.throughput_mbps, e.qoe_value});
  }
  return out;
}

Neighborhood Environment::neighborhood(ViewerId u) const {
  if (u >= trace_->n) throw std::out_of_range("neighborhood: bad viewer id");
  return to_neighborhood(u);
}

std::vector<Neighborhood> Environment::neighborhoods() const {
  std::vector<Neighborhood> out;
  out.reserve(trace_->n);
  for (ViewerId u = 0; u < trace_->n; ++u) out.push_back(to_neighborhood(u));
  return out;
}

std::map<ViewerId, double> Environment::provider_qoe(ViewerId u) const {
  std::map<ViewerId, double> out;
  for (const LiveEdge& e : providers_[u]) out[e.provider] = e.qoe_value;
  return out;
}

StepResult Environment::step(const std::map<ViewerId, ViewerId>& actions,
                             const EventTrace* mask) {
  if (done()) throw std::logic_error("step: event already finished");

  // Validate all actions before touching any state.
  struct Pending {
    ViewerId viewer;
    ViewerId provider;
    double throughput;
  };
  std::vector<Pending> pending;
  pending.reserve(actions.size());
  for (const auto& [u, v] : actions) {
    if (u >= trace_->n) throw InvalidActionError("action: bad viewer id");
    if (v == u) throw InvalidActionError("action: self loop for viewer " +
                                         std::to_string(u));
    if (is_cdn(v) || v >= trace_->n) {
      throw InvalidActionError("action: provider id out of range");
    }
    double throughput = trace_->bandwidth_between(u, v);
    if (mask != nullptr) {
      const EdgeRecord* found = nullptr;
      for (const EdgeRecord& rec : snapshot(*mask, minute_)) {
        if (rec.edge.src == u && rec.edge.dst == v) {
          found = &rec;
          break;
        }
      }
      if (found == nullptr) {
        throw MaskedActionError("action (" + std::to_string(u) + " -> " +
                                std::to_string(v) + ") not in the training set at minute " +
                                std::to_string(minute_));
      }
      throughput = found->edge.throughput_mbps;
    }
    pending.push_back({u, v, throughput});
  }

  minute_ += 1;
  player_buffers_.assign(trace_->n, params_.buffer_seconds);

  StepResult result;
  for (const Pending& p : pending) {
    LiveEdge live;
    live.provider = p.provider;
    live.throughput_mbps = p.throughput;
    live.segments =
        simulate_segments(params_.ladder, p.throughput, params_.buffer_seconds);
    live.qoe_value = qoe(live.segments, params_.qoe);

    auto& mine = providers_[p.viewer];
    auto existing = std::find_if(mine.begin(), mine.end(), [&](const LiveEdge& e) {
      return e.provider == p.provider;
    });
    if (existing != mine.end()) {
      // Refresh: membership unchanged.
      *existing = live;
    } else if (mine.size() < static_cast<std::size_t>(trace_->max_degree)) {
      mine.push_back(live);
    } else {
      std::size_t worst = 0;
      for (std::size_t i = 1; i < mine.size(); ++i) {
        if (mine[i].throughput_mbps < mine[worst].throughput_mbps ||
            (mine[i].throughput_mbps == mine[worst].throughput_mbps &&
             mine[i].provider < mine[worst].provider)) {
          worst = i;
        }
      }
      mine[worst] = live;
    }
    std::sort(mine.begin(), mine.end(), [](const LiveEdge& a, const LiveEdge& b) {
      return a.provider < b.provider;
    });

    StepOutcome outcome;
    outcome.reward = live.qoe_value;
    outcome.segments = live.segments;
    outcome.neighborhood = to_neighborhood(p.viewer);
    result.outcomes.emplace(p.viewer, std::move(outcome));
  }

  result.done = done();
  return result;
}

}  // namespace gels
