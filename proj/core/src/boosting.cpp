#include "gels/boosting.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
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

}  // namespace

EventSplit split_event(const EventTrace& event, int cut) {
  if (cut < 1 || cut >= event.minutes) {
    throw std::out_of_range("split_event: cut must lie in [1, T)");
  }
  return EventSplit{&event, cut};
}

AdaptOutcome adapt_on_event(const ParamStore& global, const EventSplit& split,
                            const TrainConfig& cfg, const SimParams& sim) {
  validate(cfg.agent);
  AdaptOutcome out{global, 0.0};
  if (cfg.adapt_epochs <= 0) return out;

  const EventTrace& trace = *split.event;
  // Seeded per (run seed, event content): reproducible and independent of
  // the order events are visited in.
  const std::uint64_t stream = mix64(cfg.seed) ^ trace_hash(trace);
  Rng rng(mix64(stream));
  Environment env(trace, sim, stream);
  ReplayBuffer buffer(cfg.agent.buffer_k);
  TdOptimizer opt(cfg.agent.eta);

  double loss_sum = 0.0;
  std::size_t loss_count = 0;

  for (int epoch = 0; epoch < cfg.adapt_epochs; ++epoch) {
    env.reset(mix64(stream ^ static_cast<std::uint64_t>(epoch)));
    for (int t = 1; t < split.cut && !env.done(); ++t) {
      std::map<ViewerId, ViewerId> actions;
      std::map<ViewerId, std::vector<double>> states;
      std::map<ViewerId, std::map<ViewerId, double>> qoe_before;
      for (ViewerId u = 0; u < trace.n; ++u) {
        std::vector<ViewerId> allowed;
        for (const EdgeRecord& rec : snapshot(trace, t)) {
          if (rec.edge.src == u && !is_cdn(rec.edge.dst) && rec.edge.dst != u) {
            allowed.push_back(rec.edge.dst);
          }
        }
        if (allowed.empty()) continue;
        const Neighborhood neigh = env.neighborhood(u);
        std::vector<double> state = encode_state(u, neigh, out.params, cfg.agent);
        const std::vector<double> dist =
            actor_forward(state, out.params, cfg.agent);
        actions[u] = select_action(dist, allowed, cfg.agent.epsilon, rng);
        states[u] = std::move(state);
        qoe_before[u] = env.provider_qoe(u);
      }
      if (actions.empty()) continue;
      const StepResult step = env.step(actions, &trace);
      for (const auto& [u, outcome] : step.outcomes) {
        Transition tr;
        tr.viewer = u;
        tr.state = std::move(states[u]);
        tr.action = actions[u];
        tr.reward = outcome.reward;
        tr.next_state = encode_state(u, outcome.neighborhood, out.params, cfg.agent);
        tr.kl_score = kl_divergence(qoe_before[u], env.provider_qoe(u)).value;
        buffer.insert(std::move(tr));
      }
      if (const auto loss = td_update(buffer, out.params, cfg.agent, opt)) {
        loss_sum += *loss;
        ++loss_count;
      }
    }
  }
  if (loss_count > 0) out.mean_loss = loss_sum / static_cast<double>(loss_count);
  return out;
}

std::vector<RecordedStep> replay_test_steps(const EventSplit& split,
                                            const QoeConfig& qoe_cfg) {
  const EventTrace& trace = *split.event;
  std::vector<RecordedStep> steps;
  for (int t = split.cut; t < trace.minutes; ++t) {
    for (ViewerId u = 0; u < trace.n; ++u) {
      RecordedStep step;
      step.viewer = u;
      step.before = neighborhood(trace, u, t, qoe_cfg);
      step.after = neighborhood(trace, u, t + 1, qoe_cfg);
      if (step.after.providers.empty()) continue;

      // Forced action: the provider that appeared at t+1; when the
      // neighborhood kept its membership, the strongest kept provider.
      const ProviderLink* chosen = nullptr;
      for (const ProviderLink& p : step.after.providers) {
        if (is_cdn(p.provider)) continue;
        const bool existed =
            std::any_of(step.before.providers.begin(), step.before.providers.end(),
                        [&](const ProviderLink& q) { return q.provider == p.provider; });
        if (!existed) {
          chosen = &p;  // providers are id-ordered, so the first new one wins
          break;
        }
      }
      if (chosen == nullptr) {
        for (const ProviderLink& p : step.after.providers) {
          if (is_cdn(p.provider)) continue;
          if (chosen == nullptr || p.throughput_mbps > chosen->throughput_mbps) {
            chosen = &p;
          }
        }
      }
      if (chosen == nullptr) continue;  // CDN-only neighborhood
      step.action = chosen->provider;
      step.reward = chosen->qoe;
      steps.push_back(std::move(step));
    }
  }
  return steps;
}

std::vector<double> recorded_targets(std::span<const RecordedStep> steps,
                                     const ParamStore& store,
                                     const AgentConfig& cfg) {
  std::vector<double> targets;
  targets.reserve(steps.size());
  for (const RecordedStep& step : steps) {
    const std::vector<double> next_state =
        encode_state(step.viewer, step.after, store, cfg);
    const double next_q =
        critic_forward(next_state, one_hot_action(step.action, cfg), store, cfg);
    targets.push_back(step.reward + cfg.gamma * next_q);
  }
  return targets;
}

Tape::Ref build_recorded_loss(Tape& tape, std::span<const RecordedStep> steps,
                              std::span<const double> targets,
                              const AgentConfig& cfg) {
  if (steps.empty()) throw std::invalid_argument("recorded loss: no steps");
  Tape::Ref total = -1;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const RecordedStep& step = steps[i];
    const Tape::Ref s = build_state(tape, step.viewer, step.before, cfg);
    const Tape::Ref q = build_critic(
        tape, s, tape.constant(one_hot_action(step.action, cfg)), cfg);
    const Tape::Ref se = tape.squared_error(tape.scalar_constant(targets[i]), q);
    total = total < 0 ? se : tape.add(total, se);
  }
  return tape.scale(total, 1.0 / static_cast<double>(steps.size()));
}

std::optional<double> boost_update(ParamStore& global, const ParamStore& adapted,
                                   const EventSplit& split, const SimParams& sim,
                                   const AgentConfig& agent_cfg, double eta,
                                   AdamOptimizer* optimizer) {
  const std::vector<RecordedStep> steps = replay_test_steps(split, sim.qoe);
  if (steps.empty()) return std::nullopt;
  const std::vector<double> targets = recorded_targets(steps, adapted, agent_cfg);
  Tape tape(adapted);
  const Tape::Ref loss_ref = build_recorded_loss(tape, steps, targets, agent_cfg);
  const double loss = tape.scalar_value(loss_ref);
  if (optimizer != nullptr) {
    optimizer->step(global, tape.backward(loss_ref));
  } else {
    sgd_step(global, tape.backward(loss_ref), eta);
  }
  return loss;
}

TrainOutcome train_global(std::span<const EventTrace> events,
                          const TrainConfig& cfg, const SimParams& sim) {
  if (events.empty()) throw std::invalid_argument("train_global: no events");
  validate(cfg.agent);

  ParamStore params(mix64(cfg.seed ^ 0x706172616d73ULL));
  add_agent_params(params, cfg.agent);

  // Canonical order first so the visit order depends on the seed and the
  // event contents, not on the order the caller handed them over.
  std::vector<std::size_t> order(events.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::uint64_t> ids(events.size());
  for (std::size_t i = 0; i < events.size(); ++i) ids[i] = trace_hash(events[i]);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });

  TrainOutcome out{std::move(params), {}};
  AdamOptimizer boost_optimizer(cfg.eta);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> visit = order;
    Rng epoch_rng(mix64(cfg.seed) ^ mix64(static_cast<std::uint64_t>(epoch)));
    epoch_rng.shuffle(visit);
    for (std::size_t idx : visit) {
      const EventSplit split = split_event(events[idx], cfg.cut);
      AdaptOutcome adapted = adapt_on_event(out.params, split, cfg, sim);
      // Sequential boosting: the adapted parameters are adopted, then the
      // test-split gradient step lands on them.
      out.params = std::move(adapted.params);
      const auto test_loss = boost_update(out.params, out.params, split, sim,
                                          cfg.agent, cfg.eta, &boost_optimizer);
      out.log.push_back(TrainLogRow{epoch, ids[idx], adapted.mean_loss,
                                    test_loss.value_or(0.0)});
    }
  }
  return out;
}

ParamStore train_gels_star(const EventTrace& event, const TrainConfig& cfg,
                           const SimParams& sim) {
  validate(cfg.agent);
  ParamStore params(mix64(cfg.seed ^ 0x706172616d73ULL));
  add_agent_params(params, cfg.agent);
  const EventSplit split = split_event(event, cfg.cut);
  return adapt_on_event(params, split, cfg, sim).params;
}

void write_train_log_csv(const std::filesystem::path& path,
                         std::span<const TrainLogRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("train log: cannot open " + path.string());
  }
  out << "epoch,event_id,adapt_loss,test_loss\n";
  char idbuf[17];
  for (const TrainLogRow& row : rows) {
    std::snprintf(idbuf, sizeof idbuf, "%016llx",
                  static_cast<unsigned long long>(row.event_id));
    out << row.epoch << ',' << idbuf << ',' << format_double(row.adapt_loss)
        << ',' << format_double(row.test_loss) << '\n';
  }
}

}  // namespace gels
