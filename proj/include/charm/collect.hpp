#pragma once

// Feedback-collection sessions: six sampled trajectories per participant,
// a rating prompt after every full 30-step window, 5 s timeout, event-sourced
// state and export in the canonical dataset schema.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "charm/core_data.hpp"
#include "charm/error.hpp"
#include "charm/synth.hpp"

namespace charm::collect {

inline constexpr std::int64_t kPromptTimeoutMs = 5000;
inline constexpr std::int64_t kClockToleranceMs = 2000;
inline constexpr std::size_t kMinSteps = 500;
inline constexpr std::size_t kMaxSteps = 800;

struct TrajectoryManifest {
  std::string trajectory_id;
  Task task_id = Task::nut_assembly;
  AgentLevel agent_level = AgentLevel::minimal;
  std::vector<std::string> frames;
  std::vector<double> rewards;

  std::size_t steps() const { return rewards.size(); }
  std::size_t prompts() const { return steps() / kWindowSteps; }

  void validate() const {
    if (trajectory_id.empty()) throw Error(Errc::validation, "manifest without trajectory_id");
    if (steps() < kMinSteps || steps() > kMaxSteps) {
      throw Error(Errc::validation, "manifest " + trajectory_id + " has " + std::to_string(steps()) +
                                        " steps, expected 500-800");
    }
    if (frames.size() != rewards.size()) {
      throw Error(Errc::validation, "manifest " + trajectory_id + ": frame count differs from step count");
    }
    for (double r : rewards) {
      if (!std::isfinite(r)) throw Error(Errc::validation, "manifest " + trajectory_id + " has a non-finite reward");
    }
  }

  double window_reward_at(std::int64_t window_index) const {
    const auto begin = static_cast<std::size_t>(window_index) * kWindowSteps;
    return window_reward(std::span<const double>(rewards).subspan(begin, kWindowSteps));
  }
};

inline nlohmann::ordered_json to_json(const TrajectoryManifest& m) {
  nlohmann::ordered_json j;
  j["trajectory_id"] = m.trajectory_id;
  j["task_id"] = to_string(m.task_id);
  j["agent_level"] = to_string(m.agent_level);
  j["frames"] = m.frames;
  j["rewards"] = m.rewards;
  return j;
}

inline TrajectoryManifest manifest_from_json(const nlohmann::ordered_json& j) {
  TrajectoryManifest m;
  m.trajectory_id = j.at("trajectory_id").get<std::string>();
  m.task_id = parse_task(j.at("task_id").get<std::string>());
  m.agent_level = parse_agent_level(j.at("agent_level").get<std::string>());
  m.frames = j.at("frames").get<std::vector<std::string>>();
  m.rewards = j.at("rewards").get<std::vector<double>>();
  m.validate();
  return m;
}

/// One manifest per line.
inline std::vector<TrajectoryManifest> load_catalog(const std::filesystem::path& path) {
  std::vector<TrajectoryManifest> out;
  detail::for_each_json_line(path, [&](const ordered_json& j) { out.push_back(manifest_from_json(j)); });
  return out;
}

/// Synthetic catalog: `per_cell` trajectories for every task x agent level,
/// rewards drawn from the synthetic cohort's reward law.
inline std::vector<TrajectoryManifest> synthetic_catalog(std::uint64_t seed, int per_cell = 3) {
  std::vector<TrajectoryManifest> out;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> steps(kMinSteps, kMaxSteps);
  std::normal_distribution<double> noise(0.0, synth::kRewardSd / std::sqrt(static_cast<double>(kWindowSteps)));
  for (Task t : kTasks) {
    for (AgentLevel l : kAgentLevels) {
      for (int i = 0; i < per_cell; ++i) {
        TrajectoryManifest m;
        m.trajectory_id = std::string(to_string(t)) + "-" + std::string(to_string(l)) + "-" + std::to_string(i);
        m.task_id = t;
        m.agent_level = l;
        const std::size_t n = steps(rng);
        for (std::size_t s = 0; s < n; ++s) {
          char frame[64];
          std::snprintf(frame, sizeof frame, "%s/%06zu", m.trajectory_id.c_str(), s);
          m.frames.emplace_back(frame);
          m.rewards.push_back(synth::reward_mean(l) / kWindowSteps + noise(rng));
        }
        out.push_back(std::move(m));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Protocol messages

struct WindowDescriptor {
  std::size_t trajectory_index = 0;
  std::string trajectory_id;
  std::int64_t window_index = 0;  // index of the 30-step window these frames belong to
  std::size_t first_step = 0;
  std::vector<std::string> frames;
  bool prompt_follows = false;    // false for a trailing partial window
};

struct Prompt {
  std::size_t trajectory_index = 0;
  std::string trajectory_id;
  std::int64_t window_index = 0;
  std::int64_t onset_ms = 0;

  friend bool operator==(const Prompt&, const Prompt&) = default;
};

struct Done {};

using NextResult = std::variant<WindowDescriptor, Prompt, Done>;

/// Everything that defines a session; equal snapshots mean equal state.
struct SessionSnapshot {
  std::string session_id;
  ParticipantProfile profile;
  std::vector<std::string> trajectory_ids;
  std::size_t trajectory = 0;  // cursor
  std::size_t step = 0;
  bool window_open = false;    // full window streamed, prompt not issued yet
  std::optional<Prompt> pending;
  std::vector<FeedbackEvent> events;
  bool done = false;

  friend bool operator==(const SessionSnapshot&, const SessionSnapshot&) = default;
};

using Clock = std::function<std::int64_t()>;

inline std::int64_t system_clock_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

struct ServiceOptions {
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> log_dir;  // one append-only JSONL log per session
  Clock clock = system_clock_ms;
};

class CollectService {
 public:
  CollectService(std::vector<TrajectoryManifest> catalog, ServiceOptions options)
      : catalog_(std::move(catalog)), options_(std::move(options)) {
    for (const auto& m : catalog_) {
      m.validate();
      if (!by_id_.emplace(m.trajectory_id, by_id_.size()).second) {
        throw Error(Errc::duplicate_key, "duplicate trajectory_id " + m.trajectory_id);
      }
    }
    for (Task t : kTasks) {
      for (AgentLevel l : kAgentLevels) {
        if (cell(t, l).empty()) {
          throw Error(Errc::validation, "catalog has no trajectory for " + std::string(to_string(t)) + "/" +
                                            std::string(to_string(l)));
        }
      }
    }
    if (options_.log_dir) {
      std::error_code ec;
      std::filesystem::create_directories(*options_.log_dir, ec);
      if (ec) throw Error(Errc::io, "cannot create log directory " + options_.log_dir->string());
    }
    if (!options_.clock) options_.clock = system_clock_ms;
  }

  const std::vector<TrajectoryManifest>& catalog() const { return catalog_; }

  std::string create_session(const std::string& participant_id, std::span<const double> questionnaire) {
    if (participant_id.empty()) throw Error(Errc::validation, "participant_id must not be empty");
    const auto q = make_questionnaire(questionnaire);
    std::lock_guard lock(map_mutex_);
    for (const auto& [id, slot] : sessions_) {
      std::lock_guard inner(slot->mutex);
      if (slot->state.profile.participant_id == participant_id && !slot->state.done) {
        throw Error(Errc::conflict, "participant " + participant_id + " already has an active session " + id);
      }
    }
    const std::uint64_t ordinal = counter_++;
    std::mt19937_64 rng(synth::stream_seed(options_.seed, ordinal));
    char token[32];
    std::snprintf(token, sizeof token, "s%016llx", static_cast<unsigned long long>(rng()));

    auto slot = std::make_shared<Slot>();
    auto& s = slot->state;
    s.session_id = token;
    s.profile = make_profile(participant_id, q);
    for (Task t : kTasks) {
      for (AgentLevel l : kAgentLevels) {
        const auto candidates = cell(t, l);
        std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
        s.trajectory_ids.push_back(catalog_[candidates[pick(rng)]].trajectory_id);
      }
    }
    std::shuffle(s.trajectory_ids.begin(), s.trajectory_ids.end(), rng);

    nlohmann::ordered_json rec;
    rec["op"] = "create";
    rec["session_id"] = s.session_id;
    rec["participant_id"] = participant_id;
    rec["answers"] = q.answers;
    rec["trajectories"] = s.trajectory_ids;
    rec["ts"] = options_.clock();
    append(*slot, rec);
    sessions_.emplace(s.session_id, slot);
    return s.session_id;
  }

  NextResult next_window(const std::string& session_id) {
    auto slot = find(session_id);
    std::lock_guard lock(slot->mutex);
    auto& s = slot->state;
    if (s.pending) return *s.pending;
    if (s.done) return Done{};
    for (;;) {
      if (s.trajectory >= s.trajectory_ids.size()) {
        s.done = true;
        append(*slot, {{"op", "done"}});
        return Done{};
      }
      const auto& m = manifest(s.trajectory_ids[s.trajectory]);
      if (s.window_open) {
        Prompt p{s.trajectory, m.trajectory_id, static_cast<std::int64_t>(s.step / kWindowSteps) - 1, options_.clock()};
        s.pending = p;
        s.window_open = false;
        append(*slot, {{"op", "prompt"}, {"window_index", p.window_index}, {"onset_ms", p.onset_ms}});
        return p;
      }
      const std::size_t remaining = m.steps() - s.step;
      if (remaining == 0) {
        ++s.trajectory;
        s.step = 0;
        append(*slot, {{"op", "advance"}});
        continue;
      }
      const std::size_t n = std::min(kWindowSteps, remaining);
      WindowDescriptor w;
      w.trajectory_index = s.trajectory;
      w.trajectory_id = m.trajectory_id;
      w.window_index = static_cast<std::int64_t>(s.step / kWindowSteps);
      w.first_step = s.step;
      w.frames.assign(m.frames.begin() + static_cast<std::ptrdiff_t>(s.step),
                      m.frames.begin() + static_cast<std::ptrdiff_t>(s.step + n));
      w.prompt_follows = n == kWindowSteps;
      s.step += n;
      s.window_open = w.prompt_follows;
      append(*slot, {{"op", "stream"}, {"count", n}});
      return w;
    }
  }

  /// Records a rating. Latency comes from the client's render/submit
  /// timestamps; a latency above 5 s is stored as a timeout.
  FeedbackEvent submit_rating(const std::string& session_id, std::int64_t window_index, int value,
                              std::int64_t client_render_ts, std::int64_t client_submit_ts) {
    auto slot = find(session_id);
    std::lock_guard lock(slot->mutex);
    auto& s = slot->state;
    if (!s.pending) throw Error(Errc::protocol, "no prompt is pending");
    if (s.pending->window_index != window_index) {
      throw Error(Errc::protocol, "pending prompt is for window " + std::to_string(s.pending->window_index) +
                                      ", not " + std::to_string(window_index));
    }
    if (value < -2 || value > 2) throw Error(Errc::validation, "value " + std::to_string(value) + " outside {-2..2}");
    const std::int64_t now = options_.clock();
    const std::int64_t client_ms = client_submit_ts - client_render_ts;
    const std::int64_t server_ms = now - s.pending->onset_ms;
    if (std::abs(server_ms - client_ms) > kClockToleranceMs) {
      throw Error(Errc::protocol, "client latency " + std::to_string(client_ms) + " ms disagrees with server clock (" +
                                      std::to_string(server_ms) + " ms)");
    }
    FeedbackEvent e = make_event(s, now);
    if (client_ms <= kPromptTimeoutMs) {
      e.value = value;
      e.delay_s = std::clamp(static_cast<double>(client_ms) / 1000.0, 0.0, kMaxDelaySeconds);
    }
    commit(*slot, e, "rating");
    return e;
  }

  /// Records a timeout if the pending prompt is older than 5 s; otherwise no-op.
  std::optional<FeedbackEvent> expire_prompt(const std::string& session_id) {
    auto slot = find(session_id);
    std::lock_guard lock(slot->mutex);
    auto& s = slot->state;
    const std::int64_t now = options_.clock();
    if (!s.pending || now - s.pending->onset_ms <= kPromptTimeoutMs) return std::nullopt;
    FeedbackEvent e = make_event(s, now);
    commit(*slot, e, "expire");
    return e;
  }

  Dataset export_session(const std::string& session_id, bool force = false) const {
    auto slot = find(session_id);
    std::lock_guard lock(slot->mutex);
    const auto& s = slot->state;
    if (!s.done && !force) throw Error(Errc::protocol, "session " + session_id + " is not finished");
    return Dataset({s.profile}, s.events);
  }

  SessionSnapshot snapshot(const std::string& session_id) const {
    auto slot = find(session_id);
    std::lock_guard lock(slot->mutex);
    return slot->state;
  }

  std::vector<std::string> event_log(const std::string& session_id) const {
    auto slot = find(session_id);
    std::lock_guard lock(slot->mutex);
    return slot->log;
  }

  /// Rebuilds session state from its event log.
  SessionSnapshot replay(std::span<const std::string> log) const {
    SessionSnapshot s;
    bool created = false;
    for (const auto& line : log) {
      nlohmann::ordered_json rec;
      try {
        rec = nlohmann::ordered_json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::parse, std::string("event log: ") + e.what());
      }
      const auto op = rec.at("op").get<std::string>();
      if (op == "create") {
        s.session_id = rec.at("session_id").get<std::string>();
        const auto raw = rec.at("answers").get<std::vector<double>>();
        s.profile = make_profile(rec.at("participant_id").get<std::string>(), make_questionnaire(raw));
        s.trajectory_ids = rec.at("trajectories").get<std::vector<std::string>>();
        for (const auto& id : s.trajectory_ids) manifest(id);
        created = true;
        continue;
      }
      if (!created) throw Error(Errc::parse, "event log does not start with a create record");
      if (op == "stream") {
        const auto n = rec.at("count").get<std::size_t>();
        s.step += n;
        s.window_open = n == kWindowSteps;
      } else if (op == "prompt") {
        const auto& m = manifest(s.trajectory_ids.at(s.trajectory));
        s.pending = Prompt{s.trajectory, m.trajectory_id, rec.at("window_index").get<std::int64_t>(),
                           rec.at("onset_ms").get<std::int64_t>()};
        s.window_open = false;
      } else if (op == "advance") {
        ++s.trajectory;
        s.step = 0;
      } else if (op == "rating" || op == "expire") {
        s.events.push_back(event_from_json(rec.at("event")));
        s.pending.reset();
      } else if (op == "done") {
        s.done = true;
      } else {
        throw Error(Errc::parse, "unknown event-log op '" + op + "'");
      }
    }
    return s;
  }

  /// Loads every session log found in the log directory (service restart).
  void restore() {
    if (!options_.log_dir) return;
    std::lock_guard lock(map_mutex_);
    for (const auto& entry : std::filesystem::directory_iterator(*options_.log_dir)) {
      if (entry.path().extension() != ".jsonl") continue;
      std::vector<std::string> lines;
      std::ifstream in(entry.path());
      for (std::string line; std::getline(in, line);) {
        if (!line.empty()) lines.push_back(line);
      }
      auto slot = std::make_shared<Slot>();
      slot->state = replay(lines);
      slot->log = std::move(lines);
      sessions_[slot->state.session_id] = slot;
      ++counter_;
    }
  }

 private:
  struct Slot {
    mutable std::mutex mutex;
    SessionSnapshot state;
    std::vector<std::string> log;
  };

  std::vector<std::size_t> cell(Task t, AgentLevel l) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < catalog_.size(); ++i) {
      if (catalog_[i].task_id == t && catalog_[i].agent_level == l) out.push_back(i);
    }
    return out;
  }

  const TrajectoryManifest& manifest(const std::string& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw Error(Errc::not_found, "unknown trajectory " + id);
    return catalog_[it->second];
  }

  std::shared_ptr<Slot> find(const std::string& session_id) const {
    std::lock_guard lock(map_mutex_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) throw Error(Errc::not_found, "unknown session " + session_id);
    return it->second;
  }

  FeedbackEvent make_event(const SessionSnapshot& s, std::int64_t now) const {
    const auto& m = manifest(s.trajectory_ids[s.pending->trajectory_index]);
    FeedbackEvent e;
    e.participant_id = s.profile.participant_id;
    e.task_id = m.task_id;
    e.agent_level = m.agent_level;
    e.trajectory_id = m.trajectory_id;
    e.window_index = s.pending->window_index;
    e.reward_stat = m.window_reward_at(s.pending->window_index);
    e.timestamp_ms = now;
    return e;
  }

  void commit(Slot& slot, const FeedbackEvent& e, const char* op) {
    slot.state.events.push_back(e);
    slot.state.pending.reset();
    nlohmann::ordered_json rec;
    rec["op"] = op;
    rec["event"] = to_json(e);
    append(slot, rec);
  }

  void append(Slot& slot, const nlohmann::ordered_json& rec) {
    std::string line = rec.dump();
    if (options_.log_dir) {
      const auto path = *options_.log_dir / (slot.state.session_id + ".jsonl");
      std::ofstream out(path, std::ios::app | std::ios::binary);
      if (!out || !(out << line << '\n') || !out.flush()) throw Error(Errc::io, "cannot append to " + path.string());
    }
    slot.log.push_back(std::move(line));
  }

  std::vector<TrajectoryManifest> catalog_;
  std::map<std::string, std::size_t> by_id_;
  ServiceOptions options_;
  mutable std::mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Slot>> sessions_;
  std::uint64_t counter_ = 0;
};

}  // namespace charm::collect
