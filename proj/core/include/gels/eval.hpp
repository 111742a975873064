#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "gels/agent.hpp"
#include "gels/boosting.hpp"
#include "gels/qoe.hpp"
#include "gels/sim.hpp"

namespace gels {

// One scored prediction: the true next-minute label of a viewer and the
// model's five per-label scores.
struct LabeledScore {
  QoeLabel truth = QoeLabel::Bad;
  std::array<double, kNumLabels> scores{};
  ViewerId viewer = 0;
  int minute = 0;  // the predicted minute
  std::optional<ConnectionLevel> level;  // best provider edge at that minute
};

// Probability that a random positive outscores a random negative, ties
// counted half.  Undefined (nullopt) when either class is missing.
std::optional<double> roc_auc(std::span<const double> scores,
                              std::span<const int> positives);

// Globally pooled F1 (equals accuracy for single-label multiclass).
double micro_f1(std::span<const int> preds, std::span<const int> truth);

// Unweighted mean of per-class F1 over the classes present in the truth.
double macro_f1(std::span<const int> preds, std::span<const int> truth);

// Reporting bucket for a minute: 1-5 -> 5, 6-10 -> 10, ...
int minute_bucket(int minute);

struct EvalReport {
  struct BucketRow {
    int bucket = 0;
    std::array<std::optional<double>, kNumLabels> auc;
    std::optional<double> macro_auc;  // mean over the defined label AUCs
    double micro = 0.0;
    double macro = 0.0;
    std::size_t count = 0;
  };
  struct LevelRow {
    ConnectionLevel level = ConnectionLevel::Low;
    std::optional<double> auc;  // macro-averaged over labels within the level
    std::size_t count = 0;
  };
  std::vector<BucketRow> buckets;
  std::vector<LevelRow> levels;
};

// One-vs-Rest label prediction over the test minutes: at each test minute t
// the model predicts the label a viewer will carry at t+1; the recorded
// trace supplies the truth.
std::vector<LabeledScore> collect_label_scores(const ParamStore& model,
                                               const AgentConfig& cfg,
                                               const EventSplit& split,
                                               const SimParams& sim);

EvalReport build_report(std::span<const LabeledScore> rows);

EvalReport one_vs_rest_eval(const ParamStore& model, const AgentConfig& cfg,
                            const EventSplit& split, const SimParams& sim);

// Mean over the defined per-label AUCs pooled across all buckets of the
// report source rows; the single-number summary used for model comparison.
std::optional<double> macro_auc(std::span<const LabeledScore> rows);

// CSV rows: metric,label_or_level,minute_bucket,value (value "NA" when the
// metric is undefined for the slice).
void write_eval_report_csv(const std::filesystem::path& path,
                           const EvalReport& report);

// A connection-selection policy: picks a provider for u out of `allowed`
// (never u itself), or declines to act.  Policies draw randomness only from
// the passed generator.
using PolicyFn = std::function<std::optional<ViewerId>(
    ViewerId u, const Neighborhood& neigh, std::span<const ViewerId> allowed,
    Rng& rng)>;

// Binds a policy to one event (greedy and replay policies need the trace).
using PolicyFactory = std::function<PolicyFn(const EventTrace& trace)>;

enum class BaselineKind { Random, BandwidthGreedy };

// random: uniform over allowed.  bandwidth_greedy: the allowed peer with the
// highest pair capacity (ties to the smallest id).
PolicyFn baseline_policy(BaselineKind kind, const EventTrace& trace);
PolicyFactory baseline_factory(BaselineKind kind);

// Greedy (epsilon = 0) policy of a trained model.
PolicyFn agent_policy(const ParamStore& model, const AgentConfig& cfg);
PolicyFactory agent_factory(const ParamStore& model, const AgentConfig& cfg);

// Replays the recorded connection changes of the trace itself; the fixed
// point of the improvement experiment.
PolicyFn replay_policy(const EventTrace& trace);
PolicyFactory replay_factory();

struct RolloutResult {
  // Index m-1 holds minute m.
  std::vector<std::array<long, kNumLabels>> label_counts;
  std::vector<double> mean_normalized_qoe;
};

// Rolls the policy live (actions applied, not masked) from minute 1 through
// `upto_minute`, labeling every viewer every minute.
RolloutResult rollout_policy(const PolicyFn& policy, const EventTrace& trace,
                             const SimParams& sim, int upto_minute,
                             std::uint64_t seed);

// Label counts of the recorded trace itself, minute 1..upto_minute.
RolloutResult recorded_labels(const EventTrace& trace, const SimParams& sim,
                              int upto_minute);

struct ImprovementRow {
  int minute = 0;
  QoeLabel label = QoeLabel::Bad;
  long count = 0;          // viewers under the policy, summed over events
  long initial_count = 0;  // viewers in the recorded traces
  double relative_change = 0.0;
};

struct ImprovementReport {
  std::vector<ImprovementRow> rows;
};

// Relative change of per-label viewer counts under a live policy against the
// recorded traces, aggregated over the events.
ImprovementReport improvement_experiment(const PolicyFactory& policy,
                                         std::span<const EventTrace> events,
                                         int minutes, const SimParams& sim,
                                         std::uint64_t seed);

// CSV rows: minute,label,count,relative_change.
void write_improvement_csv(const std::filesystem::path& path,
                           const ImprovementReport& report);

}  // namespace gels
