#pragma once

// Canonical data model: questionnaire responses, the 28-dim human
// characteristics vector, feedback events and the validated Dataset, plus
// JSON-lines persistence.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "charm/error.hpp"

namespace charm {

using ordered_json = nlohmann::ordered_json;

inline constexpr std::size_t kHcDim = 28;
inline constexpr std::size_t kWindowSteps = 30;
inline constexpr double kMaxDelaySeconds = 5.0;

enum class Task { nut_assembly, coffee_prep };
enum class AgentLevel { minimal, medium, well };

inline constexpr std::array<Task, 2> kTasks{Task::nut_assembly, Task::coffee_prep};
inline constexpr std::array<AgentLevel, 3> kAgentLevels{AgentLevel::minimal, AgentLevel::medium,
                                                        AgentLevel::well};

inline std::string_view to_string(Task t) {
  return t == Task::nut_assembly ? "nut_assembly" : "coffee_prep";
}

inline std::string_view to_string(AgentLevel l) {
  switch (l) {
    case AgentLevel::minimal: return "minimal";
    case AgentLevel::medium: return "medium";
    case AgentLevel::well: return "well";
  }
  return "?";
}

inline Task parse_task(std::string_view s) {
  if (s == "nut_assembly") return Task::nut_assembly;
  if (s == "coffee_prep") return Task::coffee_prep;
  throw Error(Errc::validation, "unknown task_id '" + std::string(s) + "'");
}

inline AgentLevel parse_agent_level(std::string_view s) {
  if (s == "minimal") return AgentLevel::minimal;
  if (s == "medium") return AgentLevel::medium;
  if (s == "well") return AgentLevel::well;
  throw Error(Errc::validation, "unknown agent_level '" + std::string(s) + "'");
}

/// Training epochs of the agent that produced a trajectory.
inline int training_epochs(AgentLevel l) {
  switch (l) {
    case AgentLevel::minimal: return 500;
    case AgentLevel::medium: return 1000;
    case AgentLevel::well: return 2000;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Questionnaire domains

enum class Domain { trust, robot_exp, education, teaching_exp, personality, teaching_style };

inline constexpr std::array<Domain, 6> kDomains{Domain::trust,        Domain::robot_exp,
                                                Domain::education,    Domain::teaching_exp,
                                                Domain::personality,  Domain::teaching_style};

struct DomainSlice {
  std::size_t begin;
  std::size_t end;
  std::size_t size() const { return end - begin; }
};

inline constexpr DomainSlice domain_slice(Domain d) {
  switch (d) {
    case Domain::trust: return {0, 3};
    case Domain::robot_exp: return {3, 5};
    case Domain::education: return {5, 8};
    case Domain::teaching_exp: return {8, 10};
    case Domain::personality: return {10, 20};
    case Domain::teaching_style: return {20, 28};
  }
  return {0, 0};
}

inline std::string_view to_string(Domain d) {
  switch (d) {
    case Domain::trust: return "trust";
    case Domain::robot_exp: return "robot_exp";
    case Domain::education: return "education";
    case Domain::teaching_exp: return "teaching_exp";
    case Domain::personality: return "personality";
    case Domain::teaching_style: return "teaching_style";
  }
  return "?";
}

inline Domain parse_domain(std::string_view s) {
  for (Domain d : kDomains) {
    if (to_string(d) == s) return d;
  }
  throw Error(Errc::validation, "unknown domain '" + std::string(s) + "'");
}

enum class ItemKind { likert, role_flag, years_taught };

/// Item 8 is the teaching-role flag, item 9 the years taught; every other
/// item is a 1-5 Likert answer.
inline constexpr ItemKind item_kind(std::size_t index) {
  if (index == 8) return ItemKind::role_flag;
  if (index == 9) return ItemKind::years_taught;
  return ItemKind::likert;
}

inline constexpr int kYearsCap = 10;

struct QuestionnaireResponse {
  std::array<int, kHcDim> answers{};

  friend bool operator==(const QuestionnaireResponse&, const QuestionnaireResponse&) = default;
};

inline void validate(const QuestionnaireResponse& resp) {
  for (std::size_t i = 0; i < kHcDim; ++i) {
    const int v = resp.answers[i];
    bool ok = true;
    switch (item_kind(i)) {
      case ItemKind::likert: ok = v >= 1 && v <= 5; break;
      case ItemKind::role_flag: ok = v == 0 || v == 1; break;
      case ItemKind::years_taught: ok = v >= 0; break;
    }
    if (!ok) {
      throw Error(Errc::validation,
                  "questionnaire item " + std::to_string(i) + " out of bounds (" + std::to_string(v) + ")");
    }
  }
}

/// Builds a response from raw numbers, rejecting wrong counts and non-integers.
inline QuestionnaireResponse make_questionnaire(std::span<const double> raw) {
  if (raw.size() != kHcDim) {
    throw Error(Errc::validation, "questionnaire must have 28 items, got " + std::to_string(raw.size()));
  }
  QuestionnaireResponse resp;
  for (std::size_t i = 0; i < kHcDim; ++i) {
    const double v = raw[i];
    if (!std::isfinite(v) || std::floor(v) != v || std::abs(v) > 1e6) {
      throw Error(Errc::validation, "questionnaire item " + std::to_string(i) + " is not an integer");
    }
    resp.answers[i] = static_cast<int>(v);
  }
  validate(resp);
  return resp;
}

class HcVector {
 public:
  HcVector() = default;

  explicit HcVector(const std::array<double, kHcDim>& values) : values_(values) {
    for (std::size_t i = 0; i < kHcDim; ++i) {
      if (!(values_[i] >= 0.0 && values_[i] <= 1.0)) {
        throw Error(Errc::validation, "hc entry " + std::to_string(i) + " outside [0,1]");
      }
    }
  }

  const std::array<double, kHcDim>& values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<const double> slice(Domain d) const {
    const auto s = domain_slice(d);
    return std::span<const double>(values_).subspan(s.begin, s.size());
  }

  friend bool operator==(const HcVector&, const HcVector&) = default;

 private:
  std::array<double, kHcDim> values_{};
};

inline HcVector vectorize_questionnaire(const QuestionnaireResponse& resp) {
  validate(resp);
  std::array<double, kHcDim> out{};
  for (std::size_t i = 0; i < kHcDim; ++i) {
    const int v = resp.answers[i];
    switch (item_kind(i)) {
      case ItemKind::likert: out[i] = (v - 1) / 4.0; break;
      case ItemKind::role_flag: out[i] = v; break;
      case ItemKind::years_taught: out[i] = std::min(v, kYearsCap) / static_cast<double>(kYearsCap); break;
    }
  }
  return HcVector(out);
}

/// Accumulated reward over one 30-step window.
inline double window_reward(std::span<const double> step_rewards) {
  if (step_rewards.size() != kWindowSteps) {
    throw Error(Errc::validation,
                "window must have 30 step rewards, got " + std::to_string(step_rewards.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < step_rewards.size(); ++i) {
    if (!std::isfinite(step_rewards[i])) {
      throw Error(Errc::validation, "non-finite step reward at index " + std::to_string(i));
    }
    sum += step_rewards[i];
  }
  return sum;
}

// ---------------------------------------------------------------------------
// Records

struct ParticipantProfile {
  std::string participant_id;
  QuestionnaireResponse questionnaire;
  HcVector hc;

  friend bool operator==(const ParticipantProfile&, const ParticipantProfile&) = default;
};

inline ParticipantProfile make_profile(std::string participant_id, const QuestionnaireResponse& q) {
  return ParticipantProfile{std::move(participant_id), q, vectorize_questionnaire(q)};
}

struct FeedbackEvent {
  std::string participant_id;
  Task task_id = Task::nut_assembly;
  AgentLevel agent_level = AgentLevel::minimal;
  std::string trajectory_id;
  std::int64_t window_index = 0;
  double reward_stat = 0.0;
  std::optional<int> value;        // nullopt = timeout
  std::optional<double> delay_s;   // nullopt = timeout
  std::int64_t timestamp_ms = 0;

  bool rated() const { return value.has_value(); }

  friend bool operator==(const FeedbackEvent&, const FeedbackEvent&) = default;
};

inline void validate(const FeedbackEvent& e) {
  if (e.participant_id.empty()) throw Error(Errc::validation, "empty participant_id");
  if (e.window_index < 0) throw Error(Errc::validation, "negative window_index");
  if (!std::isfinite(e.reward_stat)) throw Error(Errc::validation, "non-finite reward_stat");
  if (e.value.has_value() != e.delay_s.has_value()) {
    throw Error(Errc::validation, "value and delay_s must be both present or both missing");
  }
  if (e.value && (*e.value < -2 || *e.value > 2)) {
    throw Error(Errc::validation, "value " + std::to_string(*e.value) + " outside {-2..2}");
  }
  if (e.delay_s && !(*e.delay_s >= 0.0 && *e.delay_s <= kMaxDelaySeconds)) {
    throw Error(Errc::validation, "delay_s outside [0,5]");
  }
}

struct RewardRange {
  double min = 0.0;
  double max = 0.0;
  friend bool operator==(const RewardRange&, const RewardRange&) = default;
};

/// Validated, immutable collection of profiles and events.
class Dataset {
 public:
  Dataset() = default;

  Dataset(std::vector<ParticipantProfile> profiles, std::vector<FeedbackEvent> events)
      : profiles_(std::move(profiles)), events_(std::move(events)) {
    for (std::size_t i = 0; i < profiles_.size(); ++i) {
      validate(profiles_[i].questionnaire);
      if (!index_.emplace(profiles_[i].participant_id, i).second) {
        throw Error(Errc::duplicate_key, "duplicate participant '" + profiles_[i].participant_id + "'");
      }
    }
    std::map<std::tuple<std::string, std::string, std::int64_t>, std::size_t> keys;
    for (std::size_t i = 0; i < events_.size(); ++i) {
      const auto& e = events_[i];
      validate(e);
      if (!index_.contains(e.participant_id)) {
        throw Error(Errc::integrity, "event " + std::to_string(i) + " references unknown participant '" +
                                         e.participant_id + "'");
      }
      if (!keys.emplace(std::tuple(e.participant_id, e.trajectory_id, e.window_index), i).second) {
        throw Error(Errc::duplicate_key, "duplicate window key (" + e.participant_id + ", " + e.trajectory_id +
                                             ", " + std::to_string(e.window_index) + ")");
      }
      auto [it, fresh] = ranges_.try_emplace(e.task_id, RewardRange{e.reward_stat, e.reward_stat});
      if (!fresh) {
        it->second.min = std::min(it->second.min, e.reward_stat);
        it->second.max = std::max(it->second.max, e.reward_stat);
      }
    }
  }

  const std::vector<ParticipantProfile>& profiles() const { return profiles_; }
  const std::vector<FeedbackEvent>& events() const { return events_; }

  const ParticipantProfile& profile(const std::string& participant_id) const {
    auto it = index_.find(participant_id);
    if (it == index_.end()) throw Error(Errc::not_found, "no participant '" + participant_id + "'");
    return profiles_[it->second];
  }

  std::optional<RewardRange> reward_range(Task t) const {
    auto it = ranges_.find(t);
    if (it == ranges_.end()) return std::nullopt;
    return it->second;
  }

  const std::map<Task, RewardRange>& reward_range_per_task() const { return ranges_; }

  /// Same profiles, different event list (used for label adaptation).
  Dataset with_events(std::vector<FeedbackEvent> events) const { return Dataset(profiles_, std::move(events)); }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.profiles_ == b.profiles_ && a.events_ == b.events_ && a.ranges_ == b.ranges_;
  }

 private:
  std::vector<ParticipantProfile> profiles_;
  std::vector<FeedbackEvent> events_;
  std::unordered_map<std::string, std::size_t> index_;
  std::map<Task, RewardRange> ranges_;
};

// ---------------------------------------------------------------------------
// JSON-lines persistence

inline ordered_json to_json(const ParticipantProfile& p) {
  ordered_json j;
  j["participant_id"] = p.participant_id;
  j["answers"] = p.questionnaire.answers;
  j["hc"] = p.hc.values();
  return j;
}

inline ordered_json to_json(const FeedbackEvent& e) {
  ordered_json j;
  j["participant_id"] = e.participant_id;
  j["task_id"] = to_string(e.task_id);
  j["agent_level"] = to_string(e.agent_level);
  j["trajectory_id"] = e.trajectory_id;
  j["window_index"] = e.window_index;
  j["reward_stat"] = e.reward_stat;
  j["value"] = e.value ? ordered_json(*e.value) : ordered_json(nullptr);
  j["delay_s"] = e.delay_s ? ordered_json(*e.delay_s) : ordered_json(nullptr);
  j["timestamp_ms"] = e.timestamp_ms;
  return j;
}

inline ParticipantProfile profile_from_json(const ordered_json& j) {
  ParticipantProfile p;
  p.participant_id = j.at("participant_id").get<std::string>();
  const auto raw = j.at("answers").get<std::vector<double>>();
  p.questionnaire = make_questionnaire(raw);
  const auto hc = j.at("hc").get<std::vector<double>>();
  if (hc.size() != kHcDim) {
    throw Error(Errc::validation, "hc must have 28 entries, got " + std::to_string(hc.size()));
  }
  std::array<double, kHcDim> values{};
  std::copy(hc.begin(), hc.end(), values.begin());
  p.hc = HcVector(values);
  const HcVector expected = vectorize_questionnaire(p.questionnaire);
  for (std::size_t i = 0; i < kHcDim; ++i) {
    if (std::abs(expected[i] - p.hc[i]) > 1e-9) {
      throw Error(Errc::validation, "hc entry " + std::to_string(i) + " disagrees with answers");
    }
  }
  return p;
}

inline FeedbackEvent event_from_json(const ordered_json& j) {
  FeedbackEvent e;
  e.participant_id = j.at("participant_id").get<std::string>();
  e.task_id = parse_task(j.at("task_id").get<std::string>());
  e.agent_level = parse_agent_level(j.at("agent_level").get<std::string>());
  e.trajectory_id = j.at("trajectory_id").get<std::string>();
  e.window_index = j.at("window_index").get<std::int64_t>();
  e.reward_stat = j.at("reward_stat").get<double>();
  const auto& v = j.at("value");
  if (!v.is_null()) {
    if (!v.is_number_integer()) throw Error(Errc::parse, "value must be an integer or null");
    e.value = v.get<int>();
  }
  const auto& d = j.at("delay_s");
  if (!d.is_null()) e.delay_s = d.get<double>();
  e.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
  validate(e);
  return e;
}

namespace detail {

template <class F>
void for_each_json_line(const std::filesystem::path& path, F&& on_record) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& ex) {
      throw Error(Errc::parse, where + ": " + ex.what());
    }
    try {
      on_record(j);
    } catch (const nlohmann::json::exception& ex) {
      throw Error(Errc::parse, where + ": " + ex.what());
    } catch (const Error& ex) {
      throw Error(ex.code(), where + ": " + ex.message());
    }
  }
}

/// Writes to a sibling temp file then renames, so readers never see a partial file.
inline void write_atomically(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io, "cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw Error(Errc::io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(Errc::io, "cannot rename into " + path.string() + ": " + ec.message());
}

}  // namespace detail

inline constexpr std::string_view kProfilesFile = "profiles.jsonl";
inline constexpr std::string_view kEventsFile = "events.jsonl";

inline Dataset load_dataset(const std::filesystem::path& profiles_path, const std::filesystem::path& events_path) {
  std::vector<ParticipantProfile> profiles;
  std::vector<FeedbackEvent> events;
  detail::for_each_json_line(profiles_path, [&](const ordered_json& j) { profiles.push_back(profile_from_json(j)); });
  detail::for_each_json_line(events_path, [&](const ordered_json& j) { events.push_back(event_from_json(j)); });
  return Dataset(std::move(profiles), std::move(events));
}

inline std::string dump_lines(const Dataset& ds, bool profiles) {
  std::string out;
  if (profiles) {
    for (const auto& p : ds.profiles()) out += to_json(p).dump() + "\n";
  } else {
    for (const auto& e : ds.events()) out += to_json(e).dump() + "\n";
  }
  return out;
}

/// Writes `profiles.jsonl` and `events.jsonl` into `dir` (created if needed).
inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw Error(Errc::io, "cannot create directory " + dir.string());
  detail::write_atomically(dir / kProfilesFile, dump_lines(ds, true));
  detail::write_atomically(dir / kEventsFile, dump_lines(ds, false));
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  return load_dataset(dir / kProfilesFile, dir / kEventsFile);
}

}  // namespace charm
