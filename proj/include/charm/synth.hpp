#pragma once

// Synthetic cohorts with a known behavioral law. The law couples feedback
// quality to the robot-experience and education slices and a leniency shift
// to trust, so the whole pipeline can be checked against ground truth.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "charm/core_data.hpp"
#include "charm/error.hpp"
#include "charm/stats.hpp"

namespace charm::synth {

struct CohortSpec {
  int n_participants = 46;
  int windows_per_participant = 101;
  double theta = 0.8;          // informativeness of hc
  double noise_sd = 0.8;
  double bias_scale = 3.0;     // leniency = theta * bias_scale * (trust - 0.5)
  double delay_median_s = 1.0;
  double delay_log_sd = 0.35;
  double timeout_rate = 0.03;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_participants <= 0 || windows_per_participant <= 0) {
      throw Error(Errc::validation, "cohort must contain at least one participant and one window");
    }
    if (!(theta >= 0.0 && theta <= 1.0)) throw Error(Errc::validation, "theta must lie in [0,1]");
    if (!(noise_sd >= 0.0)) throw Error(Errc::validation, "noise_sd must be non-negative");
    if (!(bias_scale >= 0.0)) throw Error(Errc::validation, "bias_scale must be non-negative");
    if (!(delay_median_s > 0.0) || !(delay_log_sd >= 0.0)) throw Error(Errc::validation, "invalid delay law");
    if (!(timeout_rate >= 0.0 && timeout_rate < 1.0)) throw Error(Errc::validation, "timeout_rate must lie in [0,1)");
  }
};

// Window reward r_hat ~ Normal(mean[level], kRewardSd), built from 30 step rewards.
inline constexpr std::array<double, 3> kRewardMean{3.0, 7.5, 12.0};
inline constexpr double kRewardSd = 3.0;

inline double reward_mean(AgentLevel l) { return kRewardMean[static_cast<std::size_t>(l)]; }

struct TrajectorySlot {
  Task task;
  AgentLevel level;
  int windows;
};

/// Six trajectories per participant (one per task x agent level); windows are
/// spread as evenly as possible, earlier slots taking the remainder.
inline std::vector<TrajectorySlot> trajectory_plan(int windows_per_participant) {
  std::vector<TrajectorySlot> plan;
  int slot = 0;
  for (Task t : kTasks) {
    for (AgentLevel l : kAgentLevels) {
      const int base = windows_per_participant / 6;
      const int extra = slot < windows_per_participant % 6 ? 1 : 0;
      plan.push_back({t, l, base + extra});
      ++slot;
    }
  }
  return plan;
}

/// Mixture CDF of the pooled reward law for a given plan.
inline double reward_cdf(double r, const std::vector<TrajectorySlot>& plan) {
  double total = 0.0;
  double acc = 0.0;
  for (const auto& s : plan) {
    acc += s.windows * stats::normal_cdf((r - reward_mean(s.level)) / kRewardSd);
    total += s.windows;
  }
  return acc / total;
}

/// Quintile edges of the pooled reward law (bisection on the mixture CDF).
inline std::array<double, 4> reward_quintile_edges(const std::vector<TrajectorySlot>& plan) {
  std::array<double, 4> edges{};
  for (int q = 1; q <= 4; ++q) {
    double lo = -100.0, hi = 100.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (reward_cdf(mid, plan) < q / 5.0 ? lo : hi) = mid;
    }
    edges[static_cast<std::size_t>(q - 1)] = 0.5 * (lo + hi);
  }
  return edges;
}

inline int level_of(double r_hat, const std::array<double, 4>& edges) {
  int level = -2;
  for (double e : edges) {
    if (r_hat >= e) ++level;
  }
  return level;
}

/// Per-participant parameters of the feedback law.
struct ParticipantLaw {
  double noise_scale = 0.0;  // (1 - theta * skill) * noise_sd
  double bias = 0.0;         // theta * bias_scale * (trust - 0.5)
};

inline double slice_mean(const HcVector& hc, std::size_t begin, std::size_t end) {
  double s = 0.0;
  for (std::size_t i = begin; i < end; ++i) s += hc[i];
  return s / static_cast<double>(end - begin);
}

/// Mean of the robot-experience and education items.
inline double skill(const HcVector& hc) {
  return slice_mean(hc, domain_slice(Domain::robot_exp).begin, domain_slice(Domain::education).end);
}

inline double trust_score(const HcVector& hc) {
  const auto s = domain_slice(Domain::trust);
  return slice_mean(hc, s.begin, s.end);
}

inline ParticipantLaw participant_law(const HcVector& hc, const CohortSpec& spec) {
  return ParticipantLaw{(1.0 - spec.theta * skill(hc)) * spec.noise_sd,
                        spec.theta * spec.bias_scale * (trust_score(hc) - 0.5)};
}

inline int clamp_value(double v) { return static_cast<int>(std::clamp(std::round(v), -2.0, 2.0)); }

/// P(value = v | level, law) for v = -2..2 (index v + 2).
inline std::array<double, 5> value_distribution(int level, const ParticipantLaw& law) {
  std::array<double, 5> p{};
  const double center = level + law.bias;
  if (law.noise_scale == 0.0) {
    p[static_cast<std::size_t>(clamp_value(center) + 2)] = 1.0;
    return p;
  }
  auto cdf = [&](double x) { return stats::normal_cdf((x - center) / law.noise_scale); };
  p[0] = cdf(-1.5);
  for (int v = -1; v <= 1; ++v) p[static_cast<std::size_t>(v + 2)] = cdf(v + 0.5) - cdf(v - 0.5);
  p[4] = 1.0 - cdf(1.5);
  return p;
}

inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::string participant_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "P%03d", index + 1);
  return buf;
}

/// Draws one participant's questionnaire: each domain has a latent level in
/// [0,1] and its items scatter around it.
inline QuestionnaireResponse draw_questionnaire(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, 0.6);
  QuestionnaireResponse q;
  for (Domain d : kDomains) {
    const double latent = u01(rng);
    const auto s = domain_slice(d);
    for (std::size_t i = s.begin; i < s.end; ++i) {
      switch (item_kind(i)) {
        case ItemKind::likert:
          q.answers[i] = static_cast<int>(std::clamp(std::round(1.0 + 4.0 * latent + jitter(rng)), 1.0, 5.0));
          break;
        case ItemKind::role_flag: q.answers[i] = u01(rng) < latent ? 1 : 0; break;
        case ItemKind::years_taught:
          q.answers[i] = q.answers[i - 1] == 1 ? static_cast<int>(std::floor(15.0 * latent * u01(rng))) : 0;
          break;
      }
    }
  }
  return q;
}

inline std::vector<ParticipantProfile> draw_participants(const CohortSpec& spec) {
  std::vector<ParticipantProfile> out;
  for (int p = 0; p < spec.n_participants; ++p) {
    std::mt19937_64 rng(stream_seed(spec.seed, static_cast<std::uint64_t>(2 * p)));
    out.push_back(make_profile(participant_name(p), draw_questionnaire(rng)));
  }
  return out;
}

inline Dataset generate_cohort(const CohortSpec& spec) {
  spec.validate();
  auto profiles = draw_participants(spec);
  const auto plan = trajectory_plan(spec.windows_per_participant);
  const auto edges = reward_quintile_edges(plan);
  const double step_sd = kRewardSd / std::sqrt(static_cast<double>(kWindowSteps));

  std::vector<FeedbackEvent> events;
  events.reserve(static_cast<std::size_t>(spec.n_participants) * static_cast<std::size_t>(spec.windows_per_participant));
  for (int p = 0; p < spec.n_participants; ++p) {
    const auto& profile = profiles[static_cast<std::size_t>(p)];
    const auto law = participant_law(profile.hc, spec);
    std::mt19937_64 rng(stream_seed(spec.seed, static_cast<std::uint64_t>(2 * p + 1)));
    std::normal_distribution<double> std_normal(0.0, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::int64_t clock = 1'700'000'000'000 + static_cast<std::int64_t>(p) * 10'000'000;
    for (std::size_t t = 0; t < plan.size(); ++t) {
      const auto& slot = plan[t];
      const std::string traj = profile.participant_id + "-" + std::string(to_string(slot.task)) + "-" +
                               std::string(to_string(slot.level));
      for (int w = 0; w < slot.windows; ++w) {
        std::array<double, kWindowSteps> steps{};
        for (double& s : steps) s = reward_mean(slot.level) / kWindowSteps + step_sd * std_normal(rng);
        FeedbackEvent e;
        e.participant_id = profile.participant_id;
        e.task_id = slot.task;
        e.agent_level = slot.level;
        e.trajectory_id = traj;
        e.window_index = w;
        e.reward_stat = window_reward(steps);
        const int level = level_of(e.reward_stat, edges);
        const int value = clamp_value(level + law.noise_scale * std_normal(rng) + law.bias);
        const double delay =
            std::min(kMaxDelaySeconds, spec.delay_median_s * std::exp(spec.delay_log_sd * std_normal(rng)));
        const bool timeout = u01(rng) < spec.timeout_rate;
        clock += 3'000 + static_cast<std::int64_t>(1000.0 * delay);
        e.timestamp_ms = clock;
        if (!timeout) {
          e.value = value;
          e.delay_s = delay;
        }
        events.push_back(std::move(e));
      }
    }
  }
  return Dataset(std::move(profiles), std::move(events));
}

// ---------------------------------------------------------------------------
// Bayes-optimal accuracy bounds

struct BayesBounds {
  double with_hc = 0.0;            // Monte-Carlo estimate, predictor sees (hc, r_hat)
  double reward_only = 0.0;        // Monte-Carlo estimate, predictor sees r_hat
  double with_hc_exact = 0.0;      // closed-form expectation of the same predictors
  double reward_only_exact = 0.0;
  std::size_t draws = 0;
  double mc_std_error = 0.0;       // binomial standard error of one estimate
};

/// Accuracy of the Bayes-optimal five-point predictor for the cohort's own
/// participants. Both predictors are built from the exact law; accuracy is
/// estimated by Monte-Carlo over fresh windows and also evaluated exactly.
inline BayesBounds bayes_accuracy(const CohortSpec& spec, std::size_t draws = 1'000'000) {
  spec.validate();
  const auto profiles = draw_participants(spec);
  const auto plan = trajectory_plan(spec.windows_per_participant);
  const auto edges = reward_quintile_edges(plan);
  const std::size_t n_p = profiles.size();

  // tables[p][level + 2][v + 2]
  std::vector<std::array<std::array<double, 5>, 5>> tables(n_p);
  std::vector<ParticipantLaw> laws(n_p);
  for (std::size_t p = 0; p < n_p; ++p) {
    laws[p] = participant_law(profiles[p].hc, spec);
    for (int level = -2; level <= 2; ++level) tables[p][static_cast<std::size_t>(level + 2)] = value_distribution(level, laws[p]);
  }
  auto argmax = [](const std::array<double, 5>& xs) {
    return static_cast<int>(std::max_element(xs.begin(), xs.end()) - xs.begin());
  };

  std::array<int, 5> pooled_choice{};
  std::vector<std::array<int, 5>> hc_choice(n_p);
  std::array<std::array<double, 5>, 5> pooled{};
  for (std::size_t lv = 0; lv < 5; ++lv) {
    for (std::size_t p = 0; p < n_p; ++p) {
      hc_choice[p][lv] = argmax(tables[p][lv]);
      for (std::size_t v = 0; v < 5; ++v) pooled[lv][v] += tables[p][lv][v] / static_cast<double>(n_p);
    }
    pooled_choice[lv] = argmax(pooled[lv]);
  }

  // Level probabilities under the plan's reward mixture.
  std::array<double, 5> level_prob{};
  {
    double total = 0.0;
    for (const auto& s : plan) total += s.windows;
    for (const auto& s : plan) {
      double prev = 0.0;
      for (std::size_t lv = 0; lv < 5; ++lv) {
        const double upper = lv < 4 ? stats::normal_cdf((edges[lv] - reward_mean(s.level)) / kRewardSd) : 1.0;
        level_prob[lv] += s.windows / total * (upper - prev);
        prev = upper;
      }
    }
  }

  BayesBounds b;
  for (std::size_t lv = 0; lv < 5; ++lv) {
    for (std::size_t p = 0; p < n_p; ++p) {
      b.with_hc_exact += level_prob[lv] * tables[p][lv][static_cast<std::size_t>(hc_choice[p][lv])] / static_cast<double>(n_p);
      b.reward_only_exact +=
          level_prob[lv] * tables[p][lv][static_cast<std::size_t>(pooled_choice[lv])] / static_cast<double>(n_p);
    }
  }

  std::mt19937_64 rng(stream_seed(spec.seed, 0xba7e5ull));
  std::uniform_int_distribution<std::size_t> pick_p(0, n_p - 1);
  std::uniform_int_distribution<int> pick_w(0, spec.windows_per_participant - 1);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  std::size_t hits_hc = 0, hits_r = 0;
  for (std::size_t i = 0; i < draws; ++i) {
    const std::size_t p = pick_p(rng);
    int w = pick_w(rng);
    std::size_t slot = 0;
    while (w >= plan[slot].windows) w -= plan[slot++].windows;
    const double r_hat = reward_mean(plan[slot].level) + kRewardSd * std_normal(rng);
    const int level = level_of(r_hat, edges);
    const int value = clamp_value(level + laws[p].noise_scale * std_normal(rng) + laws[p].bias);
    const auto lv = static_cast<std::size_t>(level + 2);
    hits_hc += (hc_choice[p][lv] == value + 2);
    hits_r += (pooled_choice[lv] == value + 2);
  }
  b.draws = draws;
  b.with_hc = draws ? static_cast<double>(hits_hc) / static_cast<double>(draws) : b.with_hc_exact;
  b.reward_only = draws ? static_cast<double>(hits_r) / static_cast<double>(draws) : b.reward_only_exact;
  b.mc_std_error = draws ? std::sqrt(0.25 / static_cast<double>(draws)) : 0.0;
  return b;
}

}  // namespace charm::synth
