#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "gels/agent.hpp"
#include "gels/autodiff.hpp"
#include "gels/sim.hpp"
#include "gels/trace.hpp"

namespace gels {

// Minute partition of one event: train minutes [1, cut], test minutes
// (cut, T].
struct EventSplit {
  const EventTrace* event = nullptr;
  int cut = 0;

  int first_test_minute() const { return cut + 1; }
  int last_minute() const { return event->minutes; }
};

EventSplit split_event(const EventTrace& event, int cut);

struct TrainConfig {
  double eta = 1e-3;     // boosting step applied to the global parameters
  int adapt_epochs = 1;  // passes over an event's train minutes
  int epochs = 1;        // passes over the whole event set
  int cut = 30;          // train/test minute split
  std::uint64_t seed = 0;
  AgentConfig agent;
};

struct AdaptOutcome {
  ParamStore params;
  double mean_loss = 0.0;
};

// Fine-tunes a copy of the global parameters on one event: the agent rolls
// the environment over the train minutes with actions masked to the recorded
// edges, fills the KL-prioritized buffer, and runs one TD update per minute.
// The global parameters are not touched.
AdaptOutcome adapt_on_event(const ParamStore& global, const EventSplit& split,
                            const TrainConfig& cfg, const SimParams& sim);

// One interaction reconstructed from the recorded trace, used to replay the
// held-out minutes as forced actions.
struct RecordedStep {
  ViewerId viewer = 0;
  Neighborhood before;  // minute t
  Neighborhood after;   // minute t+1
  ViewerId action = 0;  // the newly established provider, or the best kept one
  double reward = 0.0;  // recorded QoE of that edge at t+1
};

// All replayable steps whose outcome minute lies in the test split.
std::vector<RecordedStep> replay_test_steps(const EventSplit& split,
                                            const QoeConfig& qoe_cfg);

// Constant TD targets R + gamma * Q(s_{t+1}, a) for the recorded steps,
// evaluated against the given parameters.
std::vector<double> recorded_targets(std::span<const RecordedStep> steps,
                                     const ParamStore& store,
                                     const AgentConfig& cfg);

// The TD loss of the recorded steps with states encoded on-tape, so
// gradients reach the attention encoder as well as the critic.
Tape::Ref build_recorded_loss(Tape& tape, std::span<const RecordedStep> steps,
                              std::span<const double> targets,
                              const AgentConfig& cfg);

// Boosting step: evaluates the adapted model's TD loss on the event's test
// minutes and applies one step with those gradients to the global
// parameters — a plain SGD step by default, or through a persistent Adam
// stream when one is supplied (train_global does).  Returns the test loss,
// or nothing when the test split has no replayable step.
std::optional<double> boost_update(ParamStore& global, const ParamStore& adapted,
                                   const EventSplit& split, const SimParams& sim,
                                   const AgentConfig& agent_cfg, double eta,
                                   AdamOptimizer* optimizer = nullptr);

struct TrainLogRow {
  int epoch = 0;
  std::uint64_t event_id = 0;  // canonical trace hash
  double adapt_loss = 0.0;
  double test_loss = 0.0;
};

struct TrainOutcome {
  ParamStore params;
  std::vector<TrainLogRow> log;
};

// Global training: seeded parameter init, then per epoch every event (in a
// seed-determined order independent of the input order) is adapted and
// boosted back into the global parameters.
TrainOutcome train_global(std::span<const EventTrace> events,
                          const TrainConfig& cfg, const SimParams& sim);

// Ablation: a fresh model adapted to a single event, no boosting.
ParamStore train_gels_star(const EventTrace& event, const TrainConfig& cfg,
                           const SimParams& sim);

// CSV with header epoch,event_id,adapt_loss,test_loss.
void write_train_log_csv(const std::filesystem::path& path,
                         std::span<const TrainLogRow> rows);

}  // namespace gels
