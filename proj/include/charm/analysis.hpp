#pragma once

// Descriptive statistics over a collected dataset: reward binning,
// per-participant accuracy and absolute difference, Pearson correlations and
// the domain-wise correlation report, plus CSV emission of figure data.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "charm/core_data.hpp"
#include "charm/error.hpp"
#include "charm/stats.hpp"

namespace charm::analysis {

inline constexpr double kRewardValueReference = 0.563;

struct PearsonResult {
  double r = 0.0;
  double p = 1.0;
  std::size_t n = 0;
};

/// Sample correlation with a two-tailed p-value from Student's t, n - 2 dof.
inline PearsonResult pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(Errc::validation, "pearson needs equal-length inputs");
  if (x.size() < 3) throw Error(Errc::validation, "pearson needs at least 3 pairs");
  auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double a) { return a == v.front(); });
  };
  if (constant(x) || constant(y)) throw Error(Errc::degenerate, "correlation undefined for zero-variance input");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) throw Error(Errc::degenerate, "correlation undefined for zero-variance input");
  PearsonResult res;
  res.n = x.size();
  res.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double dof = n - 2.0;
  if (std::abs(res.r) >= 1.0) {
    res.p = 0.0;
  } else {
    const double t = res.r * std::sqrt(dof / (1.0 - res.r * res.r));
    res.p = stats::student_t_two_tailed_p(t, dof);
  }
  return res;
}

/// Two-tailed permutation p-value: share of shuffles of y whose |r| reaches the observed |r|.
inline double pearson_permutation_p(std::span<const double> x, std::span<const double> y, int shuffles,
                                    std::uint64_t seed) {
  const double observed = std::abs(pearson(x, y).r);
  std::vector<double> perm(y.begin(), y.end());
  std::mt19937_64 rng(seed);
  int hits = 0;
  for (int s = 0; s < shuffles; ++s) {
    std::shuffle(perm.begin(), perm.end(), rng);
    if (std::abs(pearson(x, perm).r) >= observed - 1e-12) ++hits;
  }
  return static_cast<double>(hits) / shuffles;
}

// ---------------------------------------------------------------------------
// Reward binning

inline int sign_category(int v) { return (v > 0) - (v < 0); }

/// Per-task equal-frequency quintiles mapping r_hat to a level in {-2..2}.
class RewardBinner {
 public:
  RewardBinner() = default;

  static RewardBinner from_dataset(const Dataset& ds) {
    std::map<Task, std::vector<double>> by_task;
    for (const auto& e : ds.events()) by_task[e.task_id].push_back(e.reward_stat);
    RewardBinner b;
    for (auto& [task, values] : by_task) b.edges_[task] = quintile_edges(values);
    return b;
  }

  /// Edges sit halfway between neighbouring order statistics, so each level
  /// receives 20% of the sample (+-1) when values are distinct.
  static std::array<double, 4> quintile_edges(std::vector<double> values) {
    const std::size_t n = values.size();
    if (n < 5) throw Error(Errc::degenerate, "reward binning needs at least 5 windows per task");
    std::sort(values.begin(), values.end());
    std::array<double, 4> edges{};
    for (std::size_t j = 1; j <= 4; ++j) {
      const std::size_t cut = j * n / 5;
      edges[j - 1] = 0.5 * (values[cut - 1] + values[cut]);
      if (j > 1 && !(edges[j - 1] > edges[j - 2])) {
        throw Error(Errc::degenerate, "reward distribution too concentrated for quintile bins");
      }
    }
    return edges;
  }

  int level(Task task, double r_hat) const {
    auto it = edges_.find(task);
    if (it == edges_.end()) throw Error(Errc::not_found, "no reward bins for task " + std::string(to_string(task)));
    int lv = -2;
    for (double e : it->second) {
      if (r_hat >= e) ++lv;
    }
    return lv;
  }

  const std::map<Task, std::array<double, 4>>& edges() const { return edges_; }

 private:
  std::map<Task, std::array<double, 4>> edges_;
};

inline std::optional<double> participant_accuracy(std::span<const FeedbackEvent> events, const RewardBinner& binner) {
  std::size_t rated = 0, correct = 0;
  for (const auto& e : events) {
    if (!e.rated()) continue;
    ++rated;
    correct += sign_category(*e.value) == sign_category(binner.level(e.task_id, e.reward_stat));
  }
  if (rated == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(rated);
}

inline std::optional<double> absolute_difference(std::span<const FeedbackEvent> events, const RewardBinner& binner) {
  std::size_t rated = 0;
  double total = 0.0;
  for (const auto& e : events) {
    if (!e.rated()) continue;
    ++rated;
    total += std::abs(*e.value - binner.level(e.task_id, e.reward_stat));
  }
  if (rated == 0) return std::nullopt;
  return total / static_cast<double>(rated);
}

// BFI-10 reverse-keyed items (1, 3, 4, 5, 7 in questionnaire order).
inline constexpr std::array<bool, 10> kBfiReversed{true, false, true, true, true, false, true, false, false, false};

/// Mean of a domain's normalized items; personality items are reverse-keyed first.
inline double domain_score(const HcVector& hc, Domain d) {
  const auto items = hc.slice(d);
  double sum = 0.0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const bool flip = d == Domain::personality && kBfiReversed[i];
    sum += flip ? 1.0 - items[i] : items[i];
  }
  return sum / static_cast<double>(items.size());
}

// ---------------------------------------------------------------------------
// Correlation report

enum class Outcome { delay, accuracy, absdiff };
inline constexpr std::array<Outcome, 3> kOutcomes{Outcome::delay, Outcome::accuracy, Outcome::absdiff};

inline std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::delay: return "delay";
    case Outcome::accuracy: return "accuracy";
    case Outcome::absdiff: return "absdiff";
  }
  return "?";
}

inline Outcome parse_outcome(std::string_view s) {
  for (Outcome o : kOutcomes) {
    if (to_string(o) == s) return o;
  }
  throw Error(Errc::parse, "unknown outcome '" + std::string(s) + "'");
}

struct CorrelationCell {
  std::optional<double> r;  // empty when flagged
  std::optional<double> p;
  std::size_t n = 0;
  bool degenerate() const { return !r.has_value(); }
};

struct CorrelationRow {
  Domain domain = Domain::trust;
  std::array<CorrelationCell, 3> cells;  // indexed by Outcome

  const CorrelationCell& operator[](Outcome o) const { return cells[static_cast<std::size_t>(o)]; }
  CorrelationCell& operator[](Outcome o) { return cells[static_cast<std::size_t>(o)]; }
};

struct ParticipantSummary {
  std::string participant_id;
  double mean_delay = 0.0;
  double accuracy = 0.0;
  double absdiff = 0.0;
  std::array<double, 6> domain_scores{};
};

struct CorrelationReport {
  std::vector<CorrelationRow> rows;
  double reference_line = kRewardValueReference;
  std::vector<ParticipantSummary> participants;
  std::optional<PearsonResult> reward_value;  // per-event
  std::optional<PearsonResult> reward_delay;  // per-event
  double mean_accuracy = 0.0;
  double sd_accuracy = 0.0;
  double max_accuracy = 0.0;
};

inline CorrelationCell correlate_cell(std::span<const double> x, std::span<const double> y) {
  CorrelationCell c;
  c.n = x.size();
  try {
    const auto res = pearson(x, y);
    c.r = res.r;
    c.p = res.p;
  } catch (const Error& e) {
    if (e.code() != Errc::degenerate) throw;
  }
  return c;
}

inline CorrelationReport build_report(const Dataset& ds) {
  const auto binner = RewardBinner::from_dataset(ds);
  std::map<std::string, std::vector<FeedbackEvent>> by_participant;
  for (const auto& e : ds.events()) by_participant[e.participant_id].push_back(e);

  CorrelationReport report;
  for (const auto& profile : ds.profiles()) {
    auto it = by_participant.find(profile.participant_id);
    if (it == by_participant.end()) continue;
    const auto acc = participant_accuracy(it->second, binner);
    if (!acc) continue;
    ParticipantSummary s;
    s.participant_id = profile.participant_id;
    s.accuracy = *acc;
    s.absdiff = *absolute_difference(it->second, binner);
    double delay_sum = 0.0;
    std::size_t rated = 0;
    for (const auto& e : it->second) {
      if (e.rated()) {
        delay_sum += *e.delay_s;
        ++rated;
      }
    }
    s.mean_delay = delay_sum / static_cast<double>(rated);
    for (std::size_t d = 0; d < kDomains.size(); ++d) s.domain_scores[d] = domain_score(profile.hc, kDomains[d]);
    report.participants.push_back(std::move(s));
  }
  if (report.participants.size() < 3) {
    throw Error(Errc::degenerate, "correlation report needs at least 3 participants with rated events");
  }

  std::array<std::vector<double>, 3> outcome;
  for (const auto& s : report.participants) {
    outcome[0].push_back(s.mean_delay);
    outcome[1].push_back(s.accuracy);
    outcome[2].push_back(s.absdiff);
  }
  for (std::size_t d = 0; d < kDomains.size(); ++d) {
    CorrelationRow row;
    row.domain = kDomains[d];
    std::vector<double> scores;
    for (const auto& s : report.participants) scores.push_back(s.domain_scores[d]);
    for (std::size_t o = 0; o < 3; ++o) row.cells[o] = correlate_cell(scores, outcome[o]);
    report.rows.push_back(row);
  }

  report.mean_accuracy = stats::mean(outcome[1]);
  report.sd_accuracy = outcome[1].size() > 1 ? std::sqrt(stats::variance_sample(outcome[1])) : 0.0;
  report.max_accuracy = *std::max_element(outcome[1].begin(), outcome[1].end());

  std::vector<double> rewards, values, delays;
  for (const auto& e : ds.events()) {
    if (!e.rated()) continue;
    rewards.push_back(e.reward_stat);
    values.push_back(*e.value);
    delays.push_back(*e.delay_s);
  }
  auto try_pearson = [](std::span<const double> a, std::span<const double> b) -> std::optional<PearsonResult> {
    try {
      return pearson(a, b);
    } catch (const Error&) {
      return std::nullopt;
    }
  };
  report.reward_value = try_pearson(rewards, values);
  report.reward_delay = try_pearson(rewards, delays);
  return report;
}

// ---------------------------------------------------------------------------
// CSV

inline std::string format_g6(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

struct FigureRow {
  Domain domain = Domain::trust;
  Outcome outcome = Outcome::delay;
  std::optional<double> r;
  std::optional<double> p;
  std::size_t n = 0;
};

inline constexpr std::string_view kFigureHeader = "domain,outcome,r,p,n";

inline std::vector<FigureRow> figure_rows(const CorrelationReport& report) {
  std::vector<FigureRow> out;
  for (const auto& row : report.rows) {
    for (Outcome o : kOutcomes) {
      const auto& c = row[o];
      out.push_back({row.domain, o, c.r, c.p, c.n});
    }
  }
  return out;
}

inline std::string figure_csv(std::span<const FigureRow> rows) {
  std::string out(kFigureHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += std::string(to_string(r.domain)) + "," + std::string(to_string(r.outcome)) + "," +
           (r.r ? format_g6(*r.r) : "nan") + "," + (r.p ? format_g6(*r.p) : "nan") + "," + std::to_string(r.n) + "\n";
  }
  return out;
}

inline std::vector<FigureRow> parse_figure_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kFigureHeader) throw Error(Errc::parse, "missing figure-data header");
  std::vector<FigureRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    if (cols.size() != 5) throw Error(Errc::parse, "figure-data line " + std::to_string(line_no) + ": expected 5 columns");
    FigureRow r;
    try {
      r.domain = parse_domain(cols[0]);
      r.outcome = parse_outcome(cols[1]);
      if (cols[2] != "nan") r.r = std::stod(cols[2]);
      if (cols[3] != "nan") r.p = std::stod(cols[3]);
      r.n = static_cast<std::size_t>(std::stoull(cols[4]));
    } catch (const std::logic_error&) {
      throw Error(Errc::parse, "figure-data line " + std::to_string(line_no) + ": bad number");
    }
    rows.push_back(r);
  }
  return rows;
}

inline void emit_figure_data(const CorrelationReport& report, const std::filesystem::path& path) {
  const auto rows = figure_rows(report);
  charm::detail::write_atomically(path, figure_csv(rows));
}

inline std::vector<FigureRow> read_figure_data(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  return parse_figure_csv(in);
}

struct HistogramRow {
  std::string variable;
  double bin_left = 0.0;
  double bin_right = 0.0;
  std::size_t count = 0;
};

inline constexpr std::string_view kDistributionHeader = "variable,bin_left,bin_right,count";

/// Delay histogram (0.25 s bins over [0, 5]), feedback value counts and binned reward-level counts.
inline std::vector<HistogramRow> distributions(const Dataset& ds) {
  std::vector<HistogramRow> rows;
  constexpr double kDelayBin = 0.25;
  const int n_delay_bins = static_cast<int>(kMaxDelaySeconds / kDelayBin);
  std::vector<std::size_t> delay_counts(static_cast<std::size_t>(n_delay_bins), 0);
  std::array<std::size_t, 5> value_counts{}, level_counts{};
  const auto binner = ds.events().empty() ? RewardBinner{} : RewardBinner::from_dataset(ds);
  for (const auto& e : ds.events()) {
    level_counts[static_cast<std::size_t>(binner.level(e.task_id, e.reward_stat) + 2)]++;
    if (!e.rated()) continue;
    value_counts[static_cast<std::size_t>(*e.value + 2)]++;
    const int bin = std::min(n_delay_bins - 1, static_cast<int>(*e.delay_s / kDelayBin));
    delay_counts[static_cast<std::size_t>(bin)]++;
  }
  for (int b = 0; b < n_delay_bins; ++b) {
    rows.push_back({"delay", b * kDelayBin, (b + 1) * kDelayBin, delay_counts[static_cast<std::size_t>(b)]});
  }
  for (int v = -2; v <= 2; ++v) rows.push_back({"value", v - 0.5, v + 0.5, value_counts[static_cast<std::size_t>(v + 2)]});
  for (int v = -2; v <= 2; ++v) {
    rows.push_back({"reward_level", v - 0.5, v + 0.5, level_counts[static_cast<std::size_t>(v + 2)]});
  }
  return rows;
}

inline void emit_distribution_data(std::span<const HistogramRow> rows, const std::filesystem::path& path) {
  std::string out(kDistributionHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += r.variable + "," + format_g6(r.bin_left) + "," + format_g6(r.bin_right) + "," + std::to_string(r.count) + "\n";
  }
  charm::detail::write_atomically(path, out);
}

}  // namespace charm::analysis
