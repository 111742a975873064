#include "gels/agent.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include <json.hpp>

namespace gels {

void validate(const AgentConfig& cfg) {
  if (cfg.embed_dim < 1 || cfg.state_dim < 1 || cfg.hidden_dim < 1) {
    throw std::invalid_argument("agent: dimensions must be positive");
  }
  if (!(cfg.gamma >= 0.0 && cfg.gamma < 1.0)) {
    throw std::invalid_argument("agent: gamma must be in [0, 1)");
  }
  if (!(cfg.epsilon >= 0.0 && cfg.epsilon <= 1.0)) {
    throw std::invalid_argument("agent: epsilon must be in [0, 1]");
  }
  if (cfg.buffer_k < 1) throw std::invalid_argument("agent: buffer_k must be >= 1");
  if (cfg.n_actions < 1) throw std::invalid_argument("agent: n_actions unset");
}

void add_agent_params(ParamStore& store, const AgentConfig& cfg) {
  validate(cfg);
  const int l = cfg.embed_dim;
  const int d = cfg.state_dim;
  const int m = cfg.hidden_dim;
  const int n = static_cast<int>(cfg.n_actions);
  store.add_matrix(names::kEmbed, n + 1, l);
  store.add_matrix(names::kAttnW, d, l);
  store.add_vector(names::kAttnA, 2 * d);
  store.add_matrix(names::kActorW1, m, d);
  store.add_matrix(names::kActorW2, n, m);
  store.add_matrix(names::kCriticW1, m, d + n);
  store.add_vector(names::kCriticB1, m, d + n);
  store.add_vector(names::kCriticW2, m);
  store.add_vector(names::kCriticB2, 1, m);
}

int embed_row(ViewerId id, const AgentConfig& cfg) {
  if (is_cdn(id)) return static_cast<int>(cfg.n_actions);
  if (id >= cfg.n_actions) {
    throw std::invalid_argument("agent: viewer id " + std::to_string(id) +
                                " exceeds the action space");
  }
  return static_cast<int>(id);
}

Tape::Ref build_attention(Tape& tape, ViewerId u, const Neighborhood& neigh,
                          const AgentConfig& cfg) {
  if (neigh.providers.empty()) {
    throw std::domain_error("attention: empty neighborhood");
  }
  const Tape::Ref wu = tape.matvec(names::kAttnW,
                                   tape.param_row(names::kEmbed, embed_row(u, cfg)));
  const Tape::Ref alpha = tape.param(names::kAttnA);
  Tape::Ref logits = -1;
  for (const ProviderLink& p : neigh.providers) {
    const Tape::Ref wv = tape.matvec(
        names::kAttnW, tape.param_row(names::kEmbed, embed_row(p.provider, cfg)));
    const Tape::Ref raw = tape.dot(alpha, tape.concat(wu, wv));
    const Tape::Ref logit = tape.relu(tape.scale(raw, p.qoe));
    logits = logits < 0 ? logit : tape.concat(logits, logit);
  }
  return tape.softmax(logits);
}

Tape::Ref build_state(Tape& tape, ViewerId u, const Neighborhood& neigh,
                      const AgentConfig& cfg) {
  if (neigh.providers.empty()) {
    return tape.constant(std::vector<double>(static_cast<std::size_t>(cfg.state_dim), 0.0));
  }
  const Tape::Ref coeffs = build_attention(tape, u, neigh, cfg);
  Tape::Ref acc = -1;
  for (std::size_t i = 0; i < neigh.providers.size(); ++i) {
    const Tape::Ref wv = tape.matvec(
        names::kAttnW,
        tape.param_row(names::kEmbed, embed_row(neigh.providers[i].provider, cfg)));
    const Tape::Ref weighted =
        tape.scale_by(wv, tape.slice(coeffs, static_cast<int>(i), 1));
    acc = acc < 0 ? weighted : tape.add(acc, weighted);
  }
  return tape.relu(acc);
}

Tape::Ref build_actor(Tape& tape, Tape::Ref state, const AgentConfig& cfg) {
  (void)cfg;
  const Tape::Ref hidden = tape.relu(tape.matvec(names::kActorW1, state));
  return tape.softmax(tape.matvec(names::kActorW2, hidden));
}

Tape::Ref build_critic(Tape& tape, Tape::Ref state, Tape::Ref action,
                       const AgentConfig& cfg) {
  (void)cfg;
  const Tape::Ref input = tape.concat(state, action);
  const Tape::Ref hidden =
      tape.relu(tape.affine(names::kCriticW1, input, names::kCriticB1));
  return tape.add(tape.dot(tape.param(names::kCriticW2), hidden),
                  tape.param(names::kCriticB2));
}

std::map<ViewerId, double> attention_coefficients(ViewerId u,
                                                  const Neighborhood& neigh,
                                                  const ParamStore& store,
                                                  const AgentConfig& cfg) {
  Tape tape(store);
  const auto& coeffs = tape.value(build_attention(tape, u, neigh, cfg));
  std::map<ViewerId, double> out;
  for (std::size_t i = 0; i < neigh.providers.size(); ++i) {
    out[neigh.providers[i].provider] = coeffs[i];
  }
  return out;
}

std::vector<double> encode_state(ViewerId u, const Neighborhood& neigh,
                                 const ParamStore& store, const AgentConfig& cfg) {
  Tape tape(store);
  return tape.value(build_state(tape, u, neigh, cfg));
}

std::vector<double> actor_forward(std::span<const double> state,
                                  const ParamStore& store, const AgentConfig& cfg) {
  Tape tape(store);
  const Tape::Ref s = tape.constant({state.begin(), state.end()});
  return tape.value(build_actor(tape, s, cfg));
}

double critic_forward(std::span<const double> state,
                      std::span<const double> action_vec, const ParamStore& store,
                      const AgentConfig& cfg) {
  Tape tape(store);
  const Tape::Ref s = tape.constant({state.begin(), state.end()});
  const Tape::Ref a = tape.constant({action_vec.begin(), action_vec.end()});
  return tape.scalar_value(build_critic(tape, s, a, cfg));
}

std::vector<double> one_hot_action(ViewerId action, const AgentConfig& cfg) {
  std::vector<double> vec(cfg.n_actions, 0.0);
  vec.at(embed_row(action, cfg)) = 1.0;
  return vec;
}

ViewerId select_action(std::span<const double> dist,
                       std::span<const ViewerId> allowed, double epsilon,
                       Rng& rng) {
  if (allowed.empty()) throw NoActionError("select_action: empty action mask");
  for (ViewerId v : allowed) {
    if (v >= dist.size()) {
      throw std::invalid_argument("select_action: allowed id outside distribution");
    }
  }
  if (rng.uniform() < epsilon) {
    return allowed[static_cast<std::size_t>(rng.below(allowed.size()))];
  }
  ViewerId best = allowed[0];
  double best_score = dist[best];
  for (ViewerId v : allowed.subspan(1)) {
    const double score = dist[v];
    if (score > best_score || (score == best_score && v < best)) {
      best = v;
      best_score = score;
    }
  }
  return best;
}

ReplayBuffer::ReplayBuffer(int capacity) : capacity_(capacity) {
  if (capacity < 1) throw std::invalid_argument("replay buffer: capacity must be >= 1");
  entries_.reserve(static_cast<std::size_t>(capacity));
}

void ReplayBuffer::insert(Transition tr) {
  tr.kl_score = std::max(0.0, tr.kl_score);
  tr.insert_order = next_order_++;
  if (entries_.size() < static_cast<std::size_t>(capacity_)) {
    entries_.push_back(std::move(tr));
    return;
  }
  std::size_t weakest = 0;
  for (std::size_t i = 1; i < entries_.size(); ++i) {
    if (entries_[i].kl_score < entries_[weakest].kl_score ||
        (entries_[i].kl_score == entries_[weakest].kl_score &&
         entries_[i].insert_order < entries_[weakest].insert_order)) {
      weakest = i;
    }
  }
  // Newer wins on a tie.
  if (tr.kl_score >= entries_[weakest].kl_score) {
    entries_[weakest] = std::move(tr);
  }
}

void ReplayBuffer::clear() {
  entries_.clear();
  next_order_ = 0;
}

void dump_buffer_jsonl(const ReplayBuffer& buffer,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("buffer dump: cannot open " + path.string());
  }
  for (const Transition& tr : buffer.entries()) {
    nlohmann::ordered_json j;
    j["viewer"] = tr.viewer;
    j["state"] = tr.state;
    j["action"] = tr.action;
    j["reward"] = tr.reward;
    j["next_state"] = tr.next_state;
    j["kl_score"] = tr.kl_score;
    j["insert_order"] = tr.insert_order;
    out << j.dump() << '\n';
  }
}

double td_loss_value(std::span<const Transition> transitions,
                     std::span<const double> targets, const ParamStore& store,
                     const AgentConfig& cfg) {
  Tape tape(store);
  Tape::Ref total = -1;
  for (std::size_t i = 0; i < transitions.size(); ++i) {
    const Transition& tr = transitions[i];
    const Tape::Ref q = build_critic(tape, tape.constant(tr.state),
                                     tape.constant(one_hot_action(tr.action, cfg)),
                                     cfg);
    const Tape::Ref se = tape.squared_error(tape.scalar_constant(targets[i]), q);
    total = total < 0 ? se : tape.add(total, se);
  }
  return tape.scalar_value(
      tape.scale(total, 1.0 / static_cast<double>(transitions.size())));
}

std::optional<double> td_update(const ReplayBuffer& buffer, ParamStore& store,
                                const AgentConfig& cfg) {
  TdOptimizer opt(cfg.eta);
  return td_update(buffer, store, cfg, opt);
}

std::optional<double> td_update(const ReplayBuffer& buffer, ParamStore& store,
                                const AgentConfig& cfg, TdOptimizer& opt) {
  if (buffer.empty()) return std::nullopt;
  const auto& transitions = buffer.entries();

  // Constant TD targets: R + gamma * Q(s', a), no gradient through them.
  std::vector<double> targets;
  targets.reserve(transitions.size());
  for (const Transition& tr : transitions) {
    const double next_q = critic_forward(tr.next_state,
                                         one_hot_action(tr.action, cfg), store, cfg);
    targets.push_back(tr.reward + cfg.gamma * next_q);
  }

  // Critic descent on the mean squared TD error.
  Tape critic_tape(store);
  Tape::Ref total = -1;
  for (std::size_t i = 0; i < transitions.size(); ++i) {
    const Transition& tr = transitions[i];
    const Tape::Ref q =
        build_critic(critic_tape, critic_tape.constant(tr.state),
                     critic_tape.constant(one_hot_action(tr.action, cfg)), cfg);
    const Tape::Ref se =
        critic_tape.squared_error(critic_tape.scalar_constant(targets[i]), q);
    total = total < 0 ? se : critic_tape.add(total, se);
  }
  const Tape::Ref loss_ref = critic_tape.scale(
      total, 1.0 / static_cast<double>(transitions.size()));
  const double loss = critic_tape.scalar_value(loss_ref);

  // TD errors under the pre-update critic: the actor's advantage estimates.
  std::vector<double> td_errors;
  td_errors.reserve(transitions.size());
  for (std::size_t i = 0; i < transitions.size(); ++i) {
    const double q = critic_forward(transitions[i].state,
                                    one_hot_action(transitions[i].action, cfg),
                                    store, cfg);
    td_errors.push_back(targets[i] - q);
  }

  opt.critic.step(store, critic_tape.backward(loss_ref));

  // Actor ascent on mean_i td_error_i * log pi(a_i | s_i) through its MLP
  // weights; the actor stream carries a negated rate.
  Tape actor_tape(store);
  Tape::Ref objective = -1;
  for (std::size_t i = 0; i < transitions.size(); ++i) {
    const Transition& tr = transitions[i];
    const Tape::Ref s = actor_tape.constant(tr.state);
    const Tape::Ref dist = build_actor(actor_tape, s, cfg);
    // Saturated losers can underflow softmax to exactly zero; the epsilon
    // keeps the log finite while the softmax backward bounds the gradient.
    const Tape::Ref prob = actor_tape.add(
        actor_tape.slice(dist, embed_row(tr.action, cfg), 1),
        actor_tape.scalar_constant(1e-12));
    const Tape::Ref log_prob = actor_tape.log(prob);
    const Tape::Ref weighted = actor_tape.scale(log_prob, td_errors[i]);
    objective = objective < 0 ? weighted : actor_tape.add(objective, weighted);
  }
  const Tape::Ref mean_obj = actor_tape.scale(
      actor_tape.sum(objective), 1.0 / static_cast<double>(transitions.size()));
  GradMap actor_grads;
  for (auto& [name, grad] : actor_tape.backward(mean_obj)) {
    if (name == names::kActorW1 || name == names::kActorW2) {
      actor_grads.emplace(name, std::move(grad));
    }
  }
  opt.actor.step(store, actor_grads);

  return loss;
}

std::array<double, kNumLabels> predict_label_scores(
    ViewerId u, const Neighborhood& neigh, std::uint32_t n_viewers,
    const ParamStore& store, const AgentConfig& cfg, const QoeConfig& qoe_cfg) {
  double p_hat = 0.0;
  if (!neigh.providers.empty()) {
    Tape tape(store);
    const Tape::Ref s = build_state(tape, u, neigh, cfg);
    const auto& dist = tape.value(build_actor(tape, s, cfg));
    ViewerId greedy = kCdnId;
    double best = -1.0;
    for (ViewerId v = 0; v < n_viewers && v < cfg.n_actions; ++v) {
      if (v == u) continue;
      if (dist[v] > best) {
        best = dist[v];
        greedy = v;
      }
    }
    if (!is_cdn(greedy)) {
      const double q = critic_forward(tape.value(s),
                                      one_hot_action(greedy, cfg), store, cfg);
      // Q estimates the discounted return, which lives on a 1/(1-gamma)
      // larger scale than a per-minute score; rescale before normalizing.
      p_hat = normalize_qoe((1.0 - cfg.gamma) * q, qoe_cfg);
    }
  }
  std::array<double, kNumLabels> scores{};
  for (int i = 0; i < kNumLabels; ++i) {
    scores[static_cast<std::size_t>(i)] =
        -std::abs(p_hat - label_center(static_cast<QoeLabel>(i)));
  }
  return scores;
}

}  // namespace gels
