#include "gels/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>

namespace gels {

namespace {

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string format_metric(const std::optional<double>& v) {
  return v.has_value() ? format_double(*v) : "NA";
}

}  // namespace

std::optional<double> roc_auc(std::span<const double> scores,
                              std::span<const int> positives) {
  if (scores.size() != positives.size()) {
    throw std::invalid_argument("roc_auc: length mismatch");
  }
  const std::size_t n = scores.size();
  std::size_t pos_total = 0;
  for (int p : positives) pos_total += p ? 1 : 0;
  const std::size_t neg_total = n - pos_total;
  if (pos_total == 0 || neg_total == 0) return std::nullopt;

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Count concordant pairs in half-win units (2 per win, 1 per tie) so the
  // brute-force pairwise count lands on the same integer.
  double half_wins = 0.0;
  std::size_t negatives_below = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    std::size_t group_pos = 0;
    std::size_t group_neg = 0;
    while (j < n && scores[idx[j]] == scores[idx[i]]) {
      if (positives[idx[j]]) {
        ++group_pos;
      } else {
        ++group_neg;
      }
      ++j;
    }
    half_wins += 2.0 * static_cast<double>(group_pos) *
                 static_cast<double>(negatives_below);
    half_wins += static_cast<double>(group_pos) * static_cast<double>(group_neg);
    negatives_below += group_neg;
    i = j;
  }
  return half_wins / (2.0 * static_cast<double>(pos_total) *
                      static_cast<double>(neg_total));
}

namespace {

struct ClassTally {
  long tp = 0;
  long fp = 0;
  long fn = 0;
};

std::vector<ClassTally> tally_classes(std::span<const int> preds,
                                      std::span<const int> truth, int& max_class) {
  if (preds.size() != truth.size()) {
    throw std::invalid_argument("f1: length mismatch");
  }
  if (preds.empty()) throw std::invalid_argument("f1: empty input");
  max_class = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    max_class = std::max({max_class, preds[i], truth[i]});
    if (preds[i] < 0 || truth[i] < 0) {
      throw std::invalid_argument("f1: labels must be nonnegative");
    }
  }
  std::vector<ClassTally> tally(static_cast<std::size_t>(max_class) + 1);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == truth[i]) {
      ++tally[static_cast<std::size_t>(truth[i])].tp;
    } else {
      ++tally[static_cast<std::size_t>(preds[i])].fp;
      ++tally[static_cast<std::size_t>(truth[i])].fn;
    }
  }
  return tally;
}

}  // namespace

double micro_f1(std::span<const int> preds, std::span<const int> truth) {
  int max_class = 0;
  const auto tally = tally_classes(preds, truth, max_class);
  long tp = 0;
  long fp = 0;
  long fn = 0;
  for (const ClassTally& t : tally) {
    tp += t.tp;
    fp += t.fp;
    fn += t.fn;
  }
  const double denom = 2.0 * tp + fp + fn;
  return denom == 0.0 ? 0.0 : 2.0 * tp / denom;
}

double macro_f1(std::span<const int> preds, std::span<const int> truth) {
  int max_class = 0;
  const auto tally = tally_classes(preds, truth, max_class);
  std::vector<bool> in_truth(tally.size(), false);
  for (int t : truth) in_truth[static_cast<std::size_t>(t)] = true;
  double sum = 0.0;
  int classes = 0;
  for (std::size_t c = 0; c < tally.size(); ++c) {
    if (!in_truth[c]) continue;  // classes never seen in truth do not count
    ++classes;
    const double denom = 2.0 * tally[c].tp + tally[c].fp + tally[c].fn;
    sum += denom == 0.0 ? 0.0 : 2.0 * tally[c].tp / denom;
  }
  return classes == 0 ? 0.0 : sum / classes;
}

int minute_bucket(int minute) { return ((minute + 4) / 5) * 5; }

std::vector<LabeledScore> collect_label_scores(const ParamStore& model,
                                               const AgentConfig& cfg,
                                               const EventSplit& split,
                                               const SimParams& sim) {
  const EventTrace& trace = *split.event;
  std::vector<LabeledScore> rows;
  for (int t = split.cut; t < trace.minutes; ++t) {
    for (ViewerId u = 0; u < trace.n; ++u) {
      const Neighborhood at_t = neighborhood(trace, u, t, sim.qoe);
      LabeledScore row;
      row.viewer = u;
      row.minute = t + 1;
      row.scores = predict_label_scores(u, at_t, trace.n, model, cfg, sim.qoe);

      const Neighborhood at_next = neighborhood(trace, u, t + 1, sim.qoe);
      const auto vq = viewer_qoe(at_next);
      row.truth = vq.has_value() ? label_of(normalize_qoe(*vq, sim.qoe))
                                 : QoeLabel::Bad;
      if (!at_next.providers.empty()) {
        const auto best = std::max_element(
            at_next.providers.begin(), at_next.providers.end(),
            [](const ProviderLink& a, const ProviderLink& b) {
              return a.throughput_mbps < b.throughput_mbps;
            });
        row.level = connection_level(best->throughput_mbps);
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

namespace {

// Macro-averaged One-vs-Rest AUC over the five score columns of a slice.
std::optional<double> slice_macro_auc(std::span<const LabeledScore* const> rows) {
  double sum = 0.0;
  int defined = 0;
  for (int label = 0; label < kNumLabels; ++label) {
    std::vector<double> scores;
    std::vector<int> positives;
    scores.reserve(rows.size());
    positives.reserve(rows.size());
    for (const LabeledScore* row : rows) {
      scores.push_back(row->scores[static_cast<std::size_t>(label)]);
      positives.push_back(static_cast<int>(row->truth) == label ? 1 : 0);
    }
    if (const auto auc = roc_auc(scores, positives)) {
      sum += *auc;
      ++defined;
    }
  }
  if (defined == 0) return std::nullopt;
  return sum / defined;
}

int argmax_label(const std::array<double, kNumLabels>& scores) {
  int best = 0;
  for (int i = 1; i < kNumLabels; ++i) {
    if (scores[static_cast<std::size_t>(i)] > scores[static_cast<std::size_t>(best)]) {
      best = i;
    }
  }
  return best;
}

}  // namespace

EvalReport build_report(std::span<const LabeledScore> rows) {
  EvalReport report;

  std::vector<int> buckets;
  for (const LabeledScore& row : rows) buckets.push_back(minute_bucket(row.minute));
  std::sort(buckets.begin(), buckets.end());
  buckets.erase(std::unique(buckets.begin(), buckets.end()), buckets.end());

  for (int bucket : buckets) {
    EvalReport::BucketRow out;
    out.bucket = bucket;
    std::vector<const LabeledScore*> slice;
    for (const LabeledScore& row : rows) {
      if (minute_bucket(row.minute) == bucket) slice.push_back(&row);
    }
    out.count = slice.size();

    std::vector<int> preds;
    std::vector<int> truth;
    for (const LabeledScore* row : slice) {
      preds.push_back(argmax_label(row->scores));
      truth.push_back(static_cast<int>(row->truth));
    }
    out.micro = micro_f1(preds, truth);
    out.macro = macro_f1(preds, truth);

    double auc_sum = 0.0;
    int auc_defined = 0;
    for (int label = 0; label < kNumLabels; ++label) {
      std::vector<double> scores;
      std::vector<int> positives;
      for (const LabeledScore* row : slice) {
        scores.push_back(row->scores[static_cast<std::size_t>(label)]);
        positives.push_back(static_cast<int>(row->truth) == label ? 1 : 0);
      }
      out.auc[static_cast<std::size_t>(label)] = roc_auc(scores, positives);
      if (out.auc[static_cast<std::size_t>(label)].has_value()) {
        auc_sum += *out.auc[static_cast<std::size_t>(label)];
        ++auc_defined;
      }
    }
    if (auc_defined > 0) out.macro_auc = auc_sum / auc_defined;
    report.buckets.push_back(std::move(out));
  }

  for (int level = 0; level < kNumLevels; ++level) {
    EvalReport::LevelRow out;
    out.level = static_cast<ConnectionLevel>(level);
    std::vector<const LabeledScore*> slice;
    for (const LabeledScore& row : rows) {
      if (row.level.has_value() && static_cast<int>(*row.level) == level) {
        slice.push_back(&row);
      }
    }
    out.count = slice.size();
    if (!slice.empty()) out.auc = slice_macro_auc(slice);
    report.levels.push_back(std::move(out));
  }
  return report;
}

EvalReport one_vs_rest_eval(const ParamStore& model, const AgentConfig& cfg,
                            const EventSplit& split, const SimParams& sim) {
  return build_report(collect_label_scores(model, cfg, split, sim));
}

std::optional<double> macro_auc(std::span<const LabeledScore> rows) {
  std::vector<const LabeledScore*> all;
  all.reserve(rows.size());
  for (const LabeledScore& row : rows) all.push_back(&row);
  if (all.empty()) return std::nullopt;
  return slice_macro_auc(all);
}

void write_eval_report_csv(const std::filesystem::path& path,
                           const EvalReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("eval report: cannot open " + path.string());
  }
  out << "metric,label_or_level,minute_bucket,value\n";
  for (const auto& row : report.buckets) {
    for (int label = 0; label < kNumLabels; ++label) {
      out << "auc," << to_string(static_cast<QoeLabel>(label)) << ',' << row.bucket
          << ',' << format_metric(row.auc[static_cast<std::size_t>(label)]) << '\n';
    }
    out << "macro_auc,all," << row.bucket << ',' << format_metric(row.macro_auc)
        << '\n';
    out << "micro_f1,all," << row.bucket << ',' << format_double(row.micro) << '\n';
    out << "macro_f1,all," << row.bucket << ',' << format_double(row.macro) << '\n';
  }
  for (const auto& row : report.levels) {
    out << "auc," << to_string(row.level) << ",all," << format_metric(row.auc)
        << '\n';
  }
}

PolicyFn baseline_policy(BaselineKind kind, const EventTrace& trace) {
  if (kind == BaselineKind::Random) {
    return [](ViewerId, const Neighborhood&, std::span<const ViewerId> allowed,
              Rng& rng) -> std::optional<ViewerId> {
      if (allowed.empty()) return std::nullopt;
      return allowed[static_cast<std::size_t>(rng.below(allowed.size()))];
    };
  }
  const EventTrace* t = &trace;
  return [t](ViewerId u, const Neighborhood&, std::span<const ViewerId> allowed,
             Rng&) -> std::optional<ViewerId> {
    if (allowed.empty()) return std::nullopt;
    ViewerId best = allowed[0];
    double best_mbps = t->bandwidth_between(u, best);
    for (ViewerId v : allowed.subspan(1)) {
      const double mbps = t->bandwidth_between(u, v);
      if (mbps > best_mbps || (mbps == best_mbps && v < best)) {
        best = v;
        best_mbps = mbps;
      }
    }
    return best;
  };
}

PolicyFactory baseline_factory(BaselineKind kind) {
  return [kind](const EventTrace& trace) { return baseline_policy(kind, trace); };
}

PolicyFn agent_policy(const ParamStore& model, const AgentConfig& cfg) {
  const ParamStore* store = &model;
  return [store, cfg](ViewerId u, const Neighborhood& neigh,
                      std::span<const ViewerId> allowed,
                      Rng& rng) -> std::optional<ViewerId> {
    if (allowed.empty()) return std::nullopt;
    const std::vector<double> state = encode_state(u, neigh, *store, cfg);
    const std::vector<double> dist = actor_forward(state, *store, cfg);
    return select_action(dist, allowed, /*epsilon=*/0.0, rng);
  };
}

PolicyFactory agent_factory(const ParamStore& model, const AgentConfig& cfg) {
  const ParamStore* store = &model;
  return [store, cfg](const EventTrace&) { return agent_policy(*store, cfg); };
}

PolicyFn replay_policy(const EventTrace& trace) {
  const EventTrace* t = &trace;
  return [t](ViewerId u, const Neighborhood& neigh,
             std::span<const ViewerId>, Rng&) -> std::optional<ViewerId> {
    const int next = neigh.minute + 1;
    if (next > t->minutes) return std::nullopt;
    // The provider that newly appears in the recorded next minute; minutes
    // without a membership change replay as no action.
    const Neighborhood recorded_next = neighborhood(*t, u, next);
    for (const ProviderLink& p : recorded_next.providers) {
      if (is_cdn(p.provider)) continue;
      const bool existed =
          std::any_of(neigh.providers.begin(), neigh.providers.end(),
                      [&](const ProviderLink& q) { return q.provider == p.provider; });
      if (!existed) return p.provider;
    }
    return std::nullopt;
  };
}

PolicyFactory replay_factory() {
  return [](const EventTrace& trace) { return replay_policy(trace); };
}

namespace {

void append_minute_stats(RolloutResult& result,
                         const std::vector<Neighborhood>& neighborhoods,
                         const QoeConfig& qoe_cfg) {
  std::array<long, kNumLabels> counts{};
  double total = 0.0;
  for (const Neighborhood& neigh : neighborhoods) {
    const auto vq = viewer_qoe(neigh);
    const double normalized = vq.has_value() ? normalize_qoe(*vq, qoe_cfg) : 0.0;
    const QoeLabel label = vq.has_value() ? label_of(normalized) : QoeLabel::Bad;
    ++counts[static_cast<std::size_t>(label)];
    total += normalized;
  }
  result.label_counts.push_back(counts);
  result.mean_normalized_qoe.push_back(
      neighborhoods.empty() ? 0.0 : total / static_cast<double>(neighborhoods.size()));
}

}  // namespace

RolloutResult rollout_policy(const PolicyFn& policy, const EventTrace& trace,
                             const SimParams& sim, int upto_minute,
                             std::uint64_t seed) {
  if (upto_minute < 1 || upto_minute > trace.minutes) {
    throw std::out_of_range("rollout: minute outside [1, T]");
  }
  Environment env(trace, sim, seed);
  Rng rng(mix64(seed ^ 0x706f6c696379ULL));

  RolloutResult result;
  append_minute_stats(result, env.neighborhoods(), sim.qoe);
  for (int m = 1; m < upto_minute; ++m) {
    std::map<ViewerId, ViewerId> actions;
    for (ViewerId u = 0; u < trace.n; ++u) {
      const Neighborhood neigh = env.neighborhood(u);
      // Candidate peers: the tracker probes fresh connections, so current
      // providers are not on offer.
      std::vector<ViewerId> allowed;
      allowed.reserve(trace.n - 1);
      for (ViewerId v = 0; v < trace.n; ++v) {
        if (v == u) continue;
        const bool current =
            std::any_of(neigh.providers.begin(), neigh.providers.end(),
                        [&](const ProviderLink& p) { return p.provider == v; });
        if (!current) allowed.push_back(v);
      }
      if (allowed.empty()) continue;
      if (const auto action = policy(u, neigh, allowed, rng)) {
        actions[u] = *action;
      }
    }
    env.step(actions);
    append_minute_stats(result, env.neighborhoods(), sim.qoe);
  }
  return result;
}

RolloutResult recorded_labels(const EventTrace& trace, const SimParams& sim,
                              int upto_minute) {
  if (upto_minute < 1 || upto_minute > trace.minutes) {
    throw std::out_of_range("recorded_labels: minute outside [1, T]");
  }
  RolloutResult result;
  for (int m = 1; m <= upto_minute; ++m) {
    std::vector<Neighborhood> neighborhoods;
    neighborhoods.reserve(trace.n);
    for (ViewerId u = 0; u < trace.n; ++u) {
      neighborhoods.push_back(neighborhood(trace, u, m, sim.qoe));
    }
    append_minute_stats(result, neighborhoods, sim.qoe);
  }
  return result;
}

ImprovementReport improvement_experiment(const PolicyFactory& policy,
                                         std::span<const EventTrace> events,
                                         int minutes, const SimParams& sim,
                                         std::uint64_t seed) {
  if (events.empty()) {
    throw std::invalid_argument("improvement: no events");
  }
  for (const EventTrace& e : events) {
    if (minutes < 1 || minutes > e.minutes) {
      throw std::out_of_range("improvement: minutes outside every event's span");
    }
  }

  std::vector<std::array<long, kNumLabels>> policy_counts(
      static_cast<std::size_t>(minutes), std::array<long, kNumLabels>{});
  std::vector<std::array<long, kNumLabels>> initial_counts = policy_counts;

  for (const EventTrace& event : events) {
    const std::uint64_t event_seed = mix64(seed) ^ trace_hash(event);
    const RolloutResult lived =
        rollout_policy(policy(event), event, sim, minutes, event_seed);
    const RolloutResult recorded = recorded_labels(event, sim, minutes);
    for (int m = 0; m < minutes; ++m) {
      for (int label = 0; label < kNumLabels; ++label) {
        policy_counts[static_cast<std::size_t>(m)][static_cast<std::size_t>(label)] +=
            lived.label_counts[static_cast<std::size_t>(m)][static_cast<std::size_t>(label)];
        initial_counts[static_cast<std::size_t>(m)][static_cast<std::size_t>(label)] +=
            recorded.label_counts[static_cast<std::size_t>(m)][static_cast<std::size_t>(label)];
      }
    }
  }

  ImprovementReport report;
  for (int m = 1; m <= minutes; ++m) {
    for (int label = 0; label < kNumLabels; ++label) {
      ImprovementRow row;
      row.minute = m;
      row.label = static_cast<QoeLabel>(label);
      row.count = policy_counts[static_cast<std::size_t>(m - 1)][static_cast<std::size_t>(label)];
      row.initial_count =
          initial_counts[static_cast<std::size_t>(m - 1)][static_cast<std::size_t>(label)];
      row.relative_change =
          static_cast<double>(row.count - row.initial_count) /
          static_cast<double>(std::max<long>(row.initial_count, 1));
      report.rows.push_back(row);
    }
  }
  return report;
}

void write_improvement_csv(const std::filesystem::path& path,
                           const ImprovementReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("improvement report: cannot open " + path.string());
  }
  out << "minute,label,count,relative_change\n";
  for (const ImprovementRow& row : report.rows) {
    out << row.minute << ',' << to_string(row.label) << ',' << row.count << ','
        << format_double(row.relative_change) << '\n';
  }
}

}  // namespace gels
