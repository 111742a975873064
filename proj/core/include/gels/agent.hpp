#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "gels/autodiff.hpp"
#include "gels/qoe.hpp"
#include "gels/rng.hpp"
#include "gels/types.hpp"

namespace gels {

struct NoActionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AgentConfig {
  int embed_dim = 128;   // l: node embedding size
  int state_dim = 64;    // d: state vector size
  int hidden_dim = 64;   // m: MLP hidden width (actor and critic)
  double gamma = 0.96;   // discount factor
  double epsilon = 0.2;  // exploration probability
  int buffer_k = 64;     // replay buffer capacity
  double eta = 1e-3;     // SGD learning rate
  // Action-space size shared across events: the maximum viewer count of the
  // training set.  Entries for ids >= the current event's n stay masked.
  std::uint32_t n_actions = 0;
};

void validate(const AgentConfig& cfg);

// Parameter names inside the shared ParamStore.
namespace names {
inline constexpr const char* kEmbed = "actor.embed";      // (n_actions+1) x l
inline constexpr const char* kAttnW = "actor.attn_w";     // d x l
inline constexpr const char* kAttnA = "actor.attn_a";     // 2d
inline constexpr const char* kActorW1 = "actor.mlp_w1";   // m x d
inline constexpr const char* kActorW2 = "actor.mlp_w2";   // n_actions x m
inline constexpr const char* kCriticW1 = "critic.w1";     // m x (d + n_actions)
inline constexpr const char* kCriticB1 = "critic.b1";     // m
inline constexpr const char* kCriticW2 = "critic.w2";     // m
inline constexpr const char* kCriticB2 = "critic.b2";     // 1
}  // namespace names

// Adds every actor and critic parameter to the store, drawn from its seeded
// initializer.  The embedding table carries one extra row used for CDN
// providers, which appear in neighborhoods but are never actions.
void add_agent_params(ParamStore& store, const AgentConfig& cfg);

// Row of the embedding table for a provider id.
int embed_row(ViewerId id, const AgentConfig& cfg);

// --- tape builders (shared by rollout forwards and the training losses) ---

// QoE-weighted attention state: softmax over providers v of
// relu(qoe_uv * attn_a . [W z_u || W z_v]), then s = relu(sum_v o_v W z_v).
// An empty neighborhood encodes to the zero state.
Tape::Ref build_state(Tape& tape, ViewerId u, const Neighborhood& neigh,
                      const AgentConfig& cfg);

// Attention logits + softmax only; requires a nonempty neighborhood.
Tape::Ref build_attention(Tape& tape, ViewerId u, const Neighborhood& neigh,
                          const AgentConfig& cfg);

// Two-layer actor head: softmax(W2 relu(W1 s)) over the action space.
Tape::Ref build_actor(Tape& tape, Tape::Ref state, const AgentConfig& cfg);

// Critic MLP: scalar Q from [state || action vector].
Tape::Ref build_critic(Tape& tape, Tape::Ref state, Tape::Ref action,
                       const AgentConfig& cfg);

// --- value-level forwards ---

// Normalized attention coefficients per provider; they sum to 1.
std::map<ViewerId, double> attention_coefficients(ViewerId u,
                                                  const Neighborhood& neigh,
                                                  const ParamStore& store,
                                                  const AgentConfig& cfg);

std::vector<double> encode_state(ViewerId u, const Neighborhood& neigh,
                                 const ParamStore& store, const AgentConfig& cfg);

std::vector<double> actor_forward(std::span<const double> state,
                                  const ParamStore& store, const AgentConfig& cfg);

double critic_forward(std::span<const double> state,
                      std::span<const double> action_vec, const ParamStore& store,
                      const AgentConfig& cfg);

std::vector<double> one_hot_action(ViewerId action, const AgentConfig& cfg);

// Epsilon-greedy pick from the distribution restricted to `allowed` (which
// must exclude the viewer itself): argmax with probability 1-epsilon, ties
// to the smallest id, otherwise uniform over `allowed`.
ViewerId select_action(std::span<const double> dist,
                       std::span<const ViewerId> allowed, double epsilon,
                       Rng& rng);

// One stored interaction.
struct Transition {
  ViewerId viewer = 0;
  std::vector<double> state;
  ViewerId action = 0;
  double reward = 0.0;
  std::vector<double> next_state;
  double kl_score = 0.0;        // clamped at 0
  std::uint64_t insert_order = 0;  // assigned by the buffer
};

// Keeps the k transitions with the largest kl_score seen so far; on a score
// tie the newer transition wins.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(int capacity);

  void insert(Transition tr);

  const std::vector<Transition>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  int capacity() const { return capacity_; }
  void clear();

 private:
  int capacity_;
  std::uint64_t next_order_ = 0;
  std::vector<Transition> entries_;
};

// Optimizer state carried across TD updates within one adaptation: one Adam
// stream for the critic descent, one for the actor ascent.  The actor runs a
// timescale slower than the critic, which keeps the policy close to its
// prior while the value estimates settle.
struct TdOptimizer {
  static constexpr double kActorRateRatio = 0.1;

  AdamOptimizer critic;
  AdamOptimizer actor;

  explicit TdOptimizer(double eta)
      : critic(eta), actor(-eta * kActorRateRatio) {}
};

// Debug dump: one JSON line per buffered transition.
void dump_buffer_jsonl(const ReplayBuffer& buffer,
                       const std::filesystem::path& path);

// One temporal-difference update over the whole buffer:
//   L = 1/2 * mean_i (R_i + gamma * Q(s'_i, a_i) - Q(s_i, a_i))^2
// with the target term held constant.  The critic descends the loss; the
// actor then ascends Q(s, actor(s)) through its MLP weights.  Returns the
// pre-update loss, or nothing when the buffer is empty.
std::optional<double> td_update(const ReplayBuffer& buffer, ParamStore& store,
                                const AgentConfig& cfg, TdOptimizer& opt);

// Convenience overload with a one-shot optimizer.
std::optional<double> td_update(const ReplayBuffer& buffer, ParamStore& store,
                                const AgentConfig& cfg);

// The loss above as a plain function of the store, with precomputed constant
// targets.  Exposed for finite-difference validation.
double td_loss_value(std::span<const Transition> transitions,
                     std::span<const double> targets, const ParamStore& store,
                     const AgentConfig& cfg);

// Per-label scores for the next-minute label of u: the critic value of the
// greedy action is normalized into [0,1] and each label is scored by
// -|p - bin center|.  An empty neighborhood scores as Bad.
std::array<double, kNumLabels> predict_label_scores(
    ViewerId u, const Neighborhood& neigh, std::uint32_t n_viewers,
    const ParamStore& store, const AgentConfig& cfg, const QoeConfig& qoe_cfg);

}  // namespace gels
