#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gels/boosting.hpp"
#include "gels/eval.hpp"
#include "gels/sim.hpp"

namespace gels::cli {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Every configuration key with its default, in manifest order.
const std::vector<std::pair<std::string, ordered_json>>& known_keys() {
  static const std::vector<std::pair<std::string, ordered_json>> keys = {
      {"seed", 0},
      {"threads", 1},
      {"paths.events", ""},
      {"paths.checkpoint", ""},
      {"gen.events", 10},
      {"gen.n_viewers", 60},
      {"gen.n_offices", 3},
      {"gen.minutes", 45},
      {"gen.intra_mbps_lo", 20.0},
      {"gen.intra_mbps_hi", 100.0},
      {"gen.inter_mbps_lo", 0.1},
      {"gen.inter_mbps_hi", 4.0},
      {"gen.cdn_seeds_per_office", 1},
      {"gen.cdn_capacity_mbps", 50.0},
      {"ladder.bitrates_mbps", ordered_json::array({0.5, 1.2, 2.5, 5.0, 8.0})},
      {"ladder.segment_seconds", 4.0},
      {"ladder.segments_per_minute", 15},
      {"player.buffer_seconds", 8.0},
      {"qoe.lambda", 0.2},
      {"qoe.mu", 0.3},
      {"agent.embed_dim", 128},
      {"agent.state_dim", 64},
      {"agent.hidden_dim", 64},
      {"agent.gamma", 0.96},
      {"agent.epsilon", 0.2},
      {"agent.buffer_k", 64},
      {"agent.eta", 0.001},
      {"train.cut", 30},
      {"train.eta", 0.001},
      {"train.adapt_epochs", 1},
      {"train.epochs", 1},
      {"improve.policy", "gels"},
      {"improve.minutes", 5},
  };
  return keys;
}

class Config {
 public:
  Config() {
    for (const auto& [key, value] : known_keys()) values_[key] = value;
  }

  void load_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    ordered_json j = ordered_json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw ConfigError("config file " + path.string() + " is not a JSON object");
    }
    // A manifest written by a previous run carries the config one level down.
    if (j.contains("command") && j.contains("config") && j["config"].is_object()) {
      j = j["config"];
    }
    for (const auto& [key, value] : j.items()) {
      if (!values_.contains(key)) {
        throw ConfigError("unknown config key '" + key + "'");
      }
      values_[key] = value;
    }
  }

  void set(const std::string& key, ordered_json value) {
    values_.at(key) = std::move(value);
  }

  std::int64_t get_int(const std::string& key) const {
    const auto& v = fetch(key);
    if (!v.is_number_integer() && !v.is_number_unsigned()) {
      throw ConfigError("key '" + key + "' must be an integer");
    }
    return v.get<std::int64_t>();
  }
  std::uint64_t get_u64(const std::string& key) const {
    const auto& v = fetch(key);
    if (!v.is_number_integer() && !v.is_number_unsigned()) {
      throw ConfigError("key '" + key + "' must be an integer");
    }
    return v.get<std::uint64_t>();
  }
  double get_double(const std::string& key) const {
    const auto& v = fetch(key);
    if (!v.is_number()) throw ConfigError("key '" + key + "' must be a number");
    return v.get<double>();
  }
  std::string get_string(const std::string& key) const {
    const auto& v = fetch(key);
    if (!v.is_string()) throw ConfigError("key '" + key + "' must be a string");
    return v.get<std::string>();
  }
  std::vector<double> get_doubles(const std::string& key) const {
    const auto& v = fetch(key);
    if (!v.is_array()) throw ConfigError("key '" + key + "' must be an array");
    return v.get<std::vector<double>>();
  }

  ordered_json manifest(const std::string& command) const {
    ordered_json config;
    for (const auto& [key, unused] : known_keys()) config[key] = values_.at(key);
    ordered_json out;
    out["command"] = command;
    out["config"] = std::move(config);
    return out;
  }

 private:
  const ordered_json& fetch(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }

  std::map<std::string, ordered_json> values_;
};

LadderConfig ladder_from(const Config& cfg) {
  LadderConfig ladder;
  const auto bitrates = cfg.get_doubles("ladder.bitrates_mbps");
  int level = 1;
  for (double mbps : bitrates) ladder.qualities.push_back({level++, mbps});
  ladder.segment_seconds = cfg.get_double("ladder.segment_seconds");
  ladder.segments_per_minute =
      static_cast<int>(cfg.get_int("ladder.segments_per_minute"));
  validate(ladder);
  return ladder;
}

SimParams sim_from(const Config& cfg) {
  SimParams sim;
  sim.ladder = ladder_from(cfg);
  sim.buffer_seconds = cfg.get_double("player.buffer_seconds");
  sim.qoe.lambda = cfg.get_double("qoe.lambda");
  sim.qoe.mu = cfg.get_double("qoe.mu");
  sim.qoe.q_max = static_cast<double>(sim.ladder.qualities.back().level);
  return sim;
}

GeneratorConfig generator_from(const Config& cfg) {
  GeneratorConfig gen;
  gen.n_viewers = static_cast<std::uint32_t>(cfg.get_int("gen.n_viewers"));
  gen.n_offices = static_cast<std::uint32_t>(cfg.get_int("gen.n_offices"));
  gen.minutes = static_cast<int>(cfg.get_int("gen.minutes"));
  gen.intra_office_mbps = {cfg.get_double("gen.intra_mbps_lo"),
                           cfg.get_double("gen.intra_mbps_hi")};
  gen.inter_office_mbps = {cfg.get_double("gen.inter_mbps_lo"),
                           cfg.get_double("gen.inter_mbps_hi")};
  gen.cdn_seeds_per_office =
      static_cast<std::uint32_t>(cfg.get_int("gen.cdn_seeds_per_office"));
  gen.cdn_capacity_mbps = cfg.get_double("gen.cdn_capacity_mbps");
  gen.seed = cfg.get_u64("seed");
  return gen;
}

AgentConfig agent_from(const Config& cfg, std::uint32_t n_actions) {
  AgentConfig agent;
  agent.embed_dim = static_cast<int>(cfg.get_int("agent.embed_dim"));
  agent.state_dim = static_cast<int>(cfg.get_int("agent.state_dim"));
  agent.hidden_dim = static_cast<int>(cfg.get_int("agent.hidden_dim"));
  agent.gamma = cfg.get_double("agent.gamma");
  agent.epsilon = cfg.get_double("agent.epsilon");
  agent.buffer_k = static_cast<int>(cfg.get_int("agent.buffer_k"));
  agent.eta = cfg.get_double("agent.eta");
  agent.n_actions = n_actions;
  return agent;
}

TrainConfig train_from(const Config& cfg, std::uint32_t n_actions) {
  TrainConfig train;
  train.eta = cfg.get_double("train.eta");
  train.adapt_epochs = static_cast<int>(cfg.get_int("train.adapt_epochs"));
  train.epochs = static_cast<int>(cfg.get_int("train.epochs"));
  train.cut = static_cast<int>(cfg.get_int("train.cut"));
  train.seed = cfg.get_u64("seed");
  train.agent = agent_from(cfg, n_actions);
  return train;
}

// Agent dimensions recovered from a checkpoint's parameter shapes, so a
// model evaluates with the sizes it was trained with.
AgentConfig agent_from_checkpoint(const Config& cfg, const ParamStore& store) {
  AgentConfig agent = agent_from(cfg, 1);
  agent.embed_dim = store.shape(names::kEmbed).second;
  agent.state_dim = store.shape(names::kAttnW).first;
  agent.hidden_dim = store.shape(names::kActorW1).first;
  agent.n_actions = static_cast<std::uint32_t>(store.shape(names::kActorW2).first);
  return agent;
}

void write_manifest(const Config& cfg, const std::string& command,
                    const fs::path& out_dir) {
  std::ofstream out(out_dir / "manifest.json", std::ios::binary);
  if (!out) throw ConfigError("cannot write manifest in " + out_dir.string());
  out << cfg.manifest(command).dump(2) << '\n';
}

std::vector<fs::path> list_event_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw ConfigError("events directory not found: " + dir.string());
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    throw ConfigError("no .jsonl event files under " + dir.string());
  }
  return files;
}

// Runs fn(0..count-1), at most `threads` at a time, results land by index.
void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1 || count < 2) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::future<void>> tasks;
  for (int i = 0; i < count; ++i) {
    tasks.push_back(std::async(std::launch::async, fn, i));
    if (tasks.size() >= static_cast<std::size_t>(threads)) {
      for (auto& t : tasks) t.get();
      tasks.clear();
    }
  }
  for (auto& t : tasks) t.get();
}

std::vector<EventTrace> load_events(const fs::path& dir, const SimParams& sim,
                                    int threads) {
  const std::vector<fs::path> files = list_event_files(dir);
  std::vector<EventTrace> events(files.size());
  parallel_for(static_cast<int>(files.size()), threads, [&](int i) {
    events[static_cast<std::size_t>(i)] =
        load_event_trace(files[static_cast<std::size_t>(i)], sim);
  });
  return events;
}

std::uint32_t max_viewers(const std::vector<EventTrace>& events) {
  std::uint32_t n = 0;
  for (const EventTrace& e : events) n = std::max(n, e.n);
  return n;
}

fs::path require_out(const std::string& out) {
  if (out.empty()) throw ConfigError("--out is required");
  fs::path dir(out);
  fs::create_directories(dir);
  return dir;
}

int cmd_gen(const Config& cfg, const std::string& out) {
  const fs::path out_dir = require_out(out);
  const int count = static_cast<int>(cfg.get_int("gen.events"));
  if (count < 1) throw ConfigError("gen.events must be positive");
  const SimParams sim = sim_from(cfg);
  const GeneratorConfig gen = generator_from(cfg);
  const int threads = static_cast<int>(cfg.get_int("threads"));

  std::vector<EventTrace> events(static_cast<std::size_t>(count));
  parallel_for(count, threads, [&](int i) {
    GeneratorConfig one = gen;
    one.seed = mix64(gen.seed) ^ static_cast<std::uint64_t>(i);
    events[static_cast<std::size_t>(i)] = generate_event(one, sim);
  });
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "event_%03d.jsonl", i);
    save_event_trace(events[static_cast<std::size_t>(i)], out_dir / name);
  }
  write_manifest(cfg, "gen", out_dir);
  std::cout << "wrote " << count << " event traces to " << out_dir.string() << "\n";
  return 0;
}

int cmd_train(const Config& cfg, const std::string& out, bool star) {
  const fs::path out_dir = require_out(out);
  const std::string events_dir = cfg.get_string("paths.events");
  if (events_dir.empty()) throw ConfigError("--events is required");
  const SimParams sim = sim_from(cfg);
  const int threads = static_cast<int>(cfg.get_int("threads"));
  const std::vector<EventTrace> events = load_events(events_dir, sim, threads);
  const TrainConfig train = train_from(cfg, max_viewers(events));

  for (const EventTrace& e : events) {
    if (train.cut >= e.minutes) {
      throw ConfigError("train.cut must be below every event's minute count");
    }
  }

  if (star) {
    // Single-event ablation: the first event in the seeded canonical order.
    std::vector<std::size_t> order(events.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return trace_hash(events[a]) < trace_hash(events[b]);
    });
    Rng rng(mix64(train.seed) ^ mix64(1));
    rng.shuffle(order);
    const ParamStore params = train_gels_star(events[order[0]], train, sim);
    params.save(out_dir / "checkpoint.json");
  } else {
    const TrainOutcome outcome = train_global(events, train, sim);
    outcome.params.save(out_dir / "checkpoint.json");
    write_train_log_csv(out_dir / "training_log.csv", outcome.log);
  }
  write_manifest(cfg, star ? "train-star" : "train", out_dir);
  std::cout << "checkpoint written to " << (out_dir / "checkpoint.json").string()
            << "\n";
  return 0;
}

int cmd_eval(const Config& cfg, const std::string& out) {
  const fs::path out_dir = require_out(out);
  const std::string events_dir = cfg.get_string("paths.events");
  const std::string checkpoint = cfg.get_string("paths.checkpoint");
  if (events_dir.empty()) throw ConfigError("--events is required");
  if (checkpoint.empty()) throw ConfigError("--checkpoint is required");
  const SimParams sim = sim_from(cfg);
  const int threads = static_cast<int>(cfg.get_int("threads"));
  const std::vector<EventTrace> events = load_events(events_dir, sim, threads);
  const ParamStore model = ParamStore::load(checkpoint);
  const AgentConfig agent = agent_from_checkpoint(cfg, model);
  const int cut = static_cast<int>(cfg.get_int("train.cut"));

  std::vector<std::vector<LabeledScore>> per_event(events.size());
  parallel_for(static_cast<int>(events.size()), threads, [&](int i) {
    const EventSplit split = split_event(events[static_cast<std::size_t>(i)], cut);
    per_event[static_cast<std::size_t>(i)] =
        collect_label_scores(model, agent, split, sim);
  });
  std::vector<LabeledScore> pooled;
  for (const auto& rows : per_event) {
    pooled.insert(pooled.end(), rows.begin(), rows.end());
  }
  const EvalReport report = build_report(pooled);
  write_eval_report_csv(out_dir / "report.csv", report);
  write_manifest(cfg, "eval", out_dir);
  const auto overall = macro_auc(pooled);
  std::cout << "report written to " << (out_dir / "report.csv").string()
            << " (macro AUC "
            << (overall ? std::to_string(*overall) : std::string("NA")) << ")\n";
  return 0;
}

int cmd_improve(const Config& cfg, const std::string& out) {
  const fs::path out_dir = require_out(out);
  const std::string events_dir = cfg.get_string("paths.events");
  if (events_dir.empty()) throw ConfigError("--events is required");
  const SimParams sim = sim_from(cfg);
  const int threads = static_cast<int>(cfg.get_int("threads"));
  const std::vector<EventTrace> events = load_events(events_dir, sim, threads);

  int minutes = static_cast<int>(cfg.get_int("improve.minutes"));
  int shortest = events.front().minutes;
  for (const EventTrace& e : events) shortest = std::min(shortest, e.minutes);
  if (minutes <= 0) minutes = shortest;
  if (minutes > shortest) {
    throw ConfigError("improve.minutes exceeds the shortest event");
  }

  const std::string policy_name = cfg.get_string("improve.policy");
  std::optional<ParamStore> model;
  PolicyFactory policy;
  if (policy_name == "gels") {
    const std::string checkpoint = cfg.get_string("paths.checkpoint");
    if (checkpoint.empty()) {
      throw ConfigError("--checkpoint is required for the gels policy");
    }
    model = ParamStore::load(checkpoint);
    policy = agent_factory(*model, agent_from_checkpoint(cfg, *model));
  } else if (policy_name == "random") {
    policy = baseline_factory(BaselineKind::Random);
  } else if (policy_name == "bandwidth_greedy") {
    policy = baseline_factory(BaselineKind::BandwidthGreedy);
  } else if (policy_name == "replay") {
    policy = replay_factory();
  } else {
    throw ConfigError(
        "improve.policy must be gels, random, bandwidth_greedy or replay");
  }

  const ImprovementReport report =
      improvement_experiment(policy, events, minutes, sim, cfg.get_u64("seed"));
  write_improvement_csv(out_dir / "improvement.csv", report);
  write_manifest(cfg, "improve", out_dir);
  std::cout << "improvement report written to "
            << (out_dir / "improvement.csv").string() << "\n";
  return 0;
}

// --- selftest: compact oracle suite over the core formulas ---

bool report(const char* name, bool ok) {
  std::cout << (ok ? "ok   " : "FAIL ") << name << "\n";
  return ok;
}

bool selftest_qoe() {
  Rng rng(101);
  const QoeConfig cfg{0.2, 0.3, 5.0};
  for (int i = 0; i < 200; ++i) {
    SegmentTrace trace;
    const int k = 2 + static_cast<int>(rng.below(12));
    for (int j = 0; j < k; ++j) {
      trace.segments.push_back(
          {1 + static_cast<int>(rng.below(5)), rng.uniform(0.0, 40.0)});
    }
    trace.bandwidth_mbps = rng.uniform(0.05, 20.0);
    trace.buffer_seconds = rng.uniform(0.5, 10.0);

    double quality = 0.0;
    double variation = 0.0;
    int stalls = 0;
    for (const Segment& s : trace.segments) {
      quality += s.quality;
      if (s.megabits / trace.bandwidth_mbps > trace.buffer_seconds) ++stalls;
    }
    quality /= k;
    for (int j = 0; j + 1 < k; ++j) {
      variation +=
          std::abs(trace.segments[j + 1].quality - trace.segments[j].quality);
    }
    variation /= k - 1;
    const double expected = quality - cfg.lambda * variation - cfg.mu * stalls;
    if (std::abs(qoe(trace, cfg) - expected) >= 1e-12) return false;
  }
  return true;
}

bool selftest_anchors() {
  if (std::abs(kl_divergence({{0, 1.0}, {1, 2.0}}, {{0, 2.0}, {1, 1.0}}).value -
               std::log(2.0)) >= 1e-12) {
    return false;
  }
  if (connection_level(3.0) != ConnectionLevel::Low) return false;
  if (connection_level(7.0) != ConnectionLevel::Medium) return false;
  if (connection_level(12.0) != ConnectionLevel::High) return false;
  if (label_of(0.2) != QoeLabel::Poor) return false;
  if (label_of(0.5) != QoeLabel::Fair) return false;
  if (label_of(1.0) != QoeLabel::Excellent) return false;
  return true;
}

bool selftest_gradients() {
  AgentConfig agent;
  agent.embed_dim = 3;
  agent.state_dim = 2;
  agent.hidden_dim = 3;
  agent.n_actions = 4;
  ParamStore store(7);
  add_agent_params(store, agent);

  Rng rng(5);
  std::vector<Transition> transitions;
  std::vector<double> targets;
  for (int i = 0; i < 3; ++i) {
    Transition tr;
    tr.action = static_cast<ViewerId>(rng.below(agent.n_actions));
    tr.state = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    tr.next_state = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    tr.reward = rng.uniform(-1, 3);
    transitions.push_back(tr);
  }
  for (const Transition& tr : transitions) {
    targets.push_back(
        tr.reward + agent.gamma * critic_forward(tr.next_state,
                                                 one_hot_action(tr.action, agent),
                                                 store, agent));
  }
  Tape tape(store);
  Tape::Ref total = -1;
  for (std::size_t i = 0; i < transitions.size(); ++i) {
    const auto q = build_critic(
        tape, tape.constant(transitions[i].state),
        tape.constant(one_hot_action(transitions[i].action, agent)), agent);
    const auto se = tape.squared_error(tape.scalar_constant(targets[i]), q);
    total = total < 0 ? se : tape.add(total, se);
  }
  const auto loss = tape.scale(total, 1.0 / 3.0);
  const GradMap analytic = tape.backward(loss);
  const double h = 1e-4;
  for (const auto& [name, entry] : store.entries()) {
    if (name.rfind("critic.", 0) != 0) continue;
    auto& values = store.values(name);
    const auto& grad = analytic.at(name);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      values[i] = orig + h;
      const double up = td_loss_value(transitions, targets, store, agent);
      values[i] = orig - h;
      const double down = td_loss_value(transitions, targets, store, agent);
      values[i] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double scale = std::max({std::abs(fd), std::abs(grad[i]), 1e-6});
      if (std::abs(fd - grad[i]) / scale >= 1e-3) return false;
    }
  }
  return true;
}

bool selftest_attention() {
  AgentConfig agent;
  agent.embed_dim = 4;
  agent.state_dim = 3;
  agent.hidden_dim = 4;
  agent.n_actions = 8;
  ParamStore store(11);
  add_agent_params(store, agent);
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    Neighborhood neigh;
    neigh.viewer = 0;
    const int count = 1 + static_cast<int>(rng.below(4));
    for (int i = 0; i < count; ++i) {
      neigh.providers.push_back(
          {static_cast<ViewerId>(i + 1), rng.uniform(0, 20), rng.uniform(-4, 5)});
    }
    double total = 0.0;
    for (const auto& [v, c] : attention_coefficients(0, neigh, store, agent)) {
      total += c;
    }
    if (std::abs(total - 1.0) >= 1e-6) return false;

    std::vector<double> state(3);
    for (double& v : state) v = rng.uniform(-2, 2);
    double mass = 0.0;
    for (double p : actor_forward(state, store, agent)) mass += p;
    if (std::abs(mass - 1.0) >= 1e-9) return false;
  }
  return true;
}

bool selftest_buffer() {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 1 + static_cast<int>(rng.below(8));
    ReplayBuffer buf(k);
    std::vector<std::pair<double, std::uint64_t>> all;
    const int inserts = 1 + static_cast<int>(rng.below(100));
    for (int i = 0; i < inserts; ++i) {
      Transition tr;
      tr.kl_score = static_cast<double>(rng.below(5)) / 3.0;
      buf.insert(tr);
      all.emplace_back(tr.kl_score, static_cast<std::uint64_t>(i));
    }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second > b.second;
    });
    all.resize(std::min<std::size_t>(all.size(), static_cast<std::size_t>(k)));
    std::vector<std::pair<double, std::uint64_t>> got;
    for (const Transition& t : buf.entries()) {
      got.emplace_back(t.kl_score, t.insert_order);
    }
    std::sort(all.begin(), all.end());
    std::sort(got.begin(), got.end());
    if (all != got) return false;
  }
  return true;
}

bool selftest_metrics() {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.below(40);
    std::vector<double> scores(n);
    std::vector<int> positives(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = static_cast<double>(rng.below(6)) / 3.0;
      positives[i] = rng.below(2) ? 1 : 0;
    }
    double half_wins = 0.0;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!positives[i]) continue;
      ++pos;
      for (std::size_t j = 0; j < n; ++j) {
        if (positives[j]) continue;
        if (scores[i] > scores[j]) half_wins += 2.0;
        if (scores[i] == scores[j]) half_wins += 1.0;
      }
    }
    const std::size_t neg = n - pos;
    const auto fast = roc_auc(scores, positives);
    if (pos == 0 || neg == 0) {
      if (fast.has_value()) return false;
      continue;
    }
    if (!fast.has_value()) return false;
    if (*fast != half_wins / (2.0 * static_cast<double>(pos) *
                              static_cast<double>(neg))) {
      return false;
    }
  }
  const std::vector<int> truth{0, 0, 1, 1};
  const std::vector<int> preds{0, 1, 1, 1};
  if (std::abs(micro_f1(preds, truth) - 0.75) >= 1e-9) return false;
  if (std::abs(macro_f1(preds, truth) - (2.0 / 3.0 + 0.8) / 2.0) >= 1e-9) {
    return false;
  }
  return true;
}

int cmd_selftest() {
  bool ok = true;
  ok &= report("qoe straight-line oracle", selftest_qoe());
  ok &= report("formula anchors (kl, levels, bins)", selftest_anchors());
  ok &= report("td gradient vs finite differences", selftest_gradients());
  ok &= report("attention and actor normalization", selftest_attention());
  ok &= report("replay buffer top-k oracle", selftest_buffer());
  ok &= report("metric oracles (auc, f1)", selftest_metrics());
  std::cout << (ok ? "selftest passed" : "selftest FAILED") << "\n";
  return ok ? 0 : 1;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Peer-assisted live streaming simulator and tracker"};
  app.require_subcommand(1);

  struct Flags {
    std::string config;
    std::string out;
    std::string events;
    std::string checkpoint;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
  } flags;

  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", flags.config, "JSON config (or a manifest.json)");
    cmd->add_option("--seed", flags.seed, "Run seed (overrides the config)");
    cmd->add_option("--out", flags.out, "Output directory");
    cmd->add_option("--events", flags.events, "Directory of .jsonl event traces");
    cmd->add_option("--checkpoint", flags.checkpoint, "Parameter checkpoint file");
    cmd->add_option("--threads", flags.threads, "Worker parallelism cap");
  };

  CLI::App* gen = app.add_subcommand("gen", "Generate synthetic event traces");
  CLI::App* train = app.add_subcommand("train", "Train across events with boosting");
  CLI::App* train_star =
      app.add_subcommand("train-star", "Train the single-event ablation");
  CLI::App* eval = app.add_subcommand("eval", "One-vs-Rest label prediction report");
  CLI::App* improve =
      app.add_subcommand("improve", "Live policy rollout vs recorded labels");
  CLI::App* selftest = app.add_subcommand("selftest", "Run the built-in oracle suite");
  for (CLI::App* cmd : {gen, train, train_star, eval, improve, selftest}) {
    add_common(cmd);
  }

  try {
    std::vector<std::string> argv(args.begin() + 1, args.end());
    std::reverse(argv.begin(), argv.end());
    app.parse(argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    Config cfg;
    if (!flags.config.empty()) cfg.load_file(flags.config);
    if (flags.seed) cfg.set("seed", *flags.seed);
    if (flags.threads) cfg.set("threads", *flags.threads);
    if (!flags.events.empty()) cfg.set("paths.events", flags.events);
    if (!flags.checkpoint.empty()) cfg.set("paths.checkpoint", flags.checkpoint);

    if (gen->parsed()) return cmd_gen(cfg, flags.out);
    if (train->parsed()) return cmd_train(cfg, flags.out, false);
    if (train_star->parsed()) return cmd_train(cfg, flags.out, true);
    if (eval->parsed()) return cmd_eval(cfg, flags.out);
    if (improve->parsed()) return cmd_improve(cfg, flags.out);
    if (selftest->parsed()) return cmd_selftest();
    std::cerr << "no command\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace gels::cli
