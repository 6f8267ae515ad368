#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <random>

#include "charm/synth.hpp"

using namespace charm;
using namespace charm::synth;

TEST(Synth, EventCountIncludesTimeouts) {
  CohortSpec spec;
  spec.seed = 3;
  const auto ds = generate_cohort(spec);
  EXPECT_EQ(ds.profiles().size(), 46u);
  EXPECT_EQ(ds.events().size(), 46u * 101u);
  const auto missing = std::count_if(ds.events().begin(), ds.events().end(), [](const auto& e) { return !e.rated(); });
  EXPECT_GT(missing, 0);
  EXPECT_LT(missing, 46 * 101 / 10);
}

TEST(Synth, NoiselessLawGivesQuintileLevel) {
  CohortSpec spec;
  spec.theta = 1.0;
  spec.noise_sd = 0.0;
  spec.bias_scale = 0.0;
  spec.n_participants = 10;
  const auto ds = generate_cohort(spec);
  const auto edges = reward_quintile_edges(trajectory_plan(spec.windows_per_participant));
  for (const auto& e : ds.events()) {
    if (e.value) EXPECT_EQ(*e.value, level_of(e.reward_stat, edges));
  }
}

TEST(Synth, ThetaZeroValuesIndependentOfSkill) {
  CohortSpec spec;
  spec.theta = 0.0;
  spec.n_participants = 99;
  spec.seed = 12;
  const auto ds = generate_cohort(spec);
  std::vector<double> skills;
  for (const auto& p : ds.profiles()) skills.push_back(skill(p.hc));
  auto sorted = skills;
  std::sort(sorted.begin(), sorted.end());
  const double t1 = sorted[sorted.size() / 3], t2 = sorted[2 * sorted.size() / 3];

  std::array<std::array<double, 5>, 3> table{};
  for (const auto& e : ds.events()) {
    if (!e.value) continue;
    const double s = skill(ds.profile(e.participant_id).hc);
    const std::size_t row = s < t1 ? 0 : (s < t2 ? 1 : 2);
    table[row][static_cast<std::size_t>(*e.value + 2)] += 1.0;
  }
  double total = 0.0;
  std::array<double, 3> rows{};
  std::array<double, 5> cols{};
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 5; ++c) {
      rows[r] += table[r][c];
      cols[c] += table[r][c];
      total += table[r][c];
    }
  }
  ASSERT_GT(total, 9000.0);
  double chi2 = 0.0;
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 5; ++c) {
      const double expected = rows[r] * cols[c] / total;
      chi2 += (table[r][c] - expected) * (table[r][c] - expected) / expected;
    }
  }
  const boost::math::chi_squared dist(8);
  EXPECT_LT(chi2, boost::math::quantile(dist, 0.99));
}

TEST(Synth, BitReproducible) {
  CohortSpec spec;
  spec.seed = 99;
  spec.n_participants = 5;
  EXPECT_EQ(generate_cohort(spec), generate_cohort(spec));
  auto other = spec;
  other.seed = 100;
  EXPECT_FALSE(generate_cohort(spec) == generate_cohort(other));
}

TEST(Synth, MedianDelayNearOneSecond) {
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    CohortSpec spec;
    spec.seed = seed;
    const auto ds = generate_cohort(spec);
    std::vector<double> d;
    for (const auto& e : ds.events()) {
      if (e.delay_s) d.push_back(*e.delay_s);
    }
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
    const double median = d[d.size() / 2];
    EXPECT_GE(median, 0.8);
    EXPECT_LE(median, 1.2);
  }
}

TEST(Synth, RewardQuintilesAreEqualFrequency) {
  CohortSpec spec;
  spec.n_participants = 200;
  const auto ds = generate_cohort(spec);
  const auto edges = reward_quintile_edges(trajectory_plan(spec.windows_per_participant));
  std::array<double, 5> counts{};
  for (const auto& e : ds.events()) counts[static_cast<std::size_t>(level_of(e.reward_stat, edges) + 2)] += 1.0;
  for (double c : counts) EXPECT_NEAR(c / static_cast<double>(ds.events().size()), 0.2, 0.01);
}

TEST(Synth, RejectsInvalidSpec) {
  CohortSpec spec;
  spec.theta = 1.5;
  EXPECT_THROW(generate_cohort(spec), Error);
  spec = CohortSpec{};
  spec.noise_sd = -1.0;
  EXPECT_THROW(generate_cohort(spec), Error);
  spec = CohortSpec{};
  spec.n_participants = 0;
  EXPECT_THROW(generate_cohort(spec), Error);
}

TEST(Synth, ValueDistributionMatchesSampling) {
  const ParticipantLaw law{0.7, 0.4};
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int level = -2; level <= 2; ++level) {
    const auto p = value_distribution(level, law);
    double s = 0.0;
    for (double v : p) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
    std::array<double, 5> counts{};
    const int draws = 200000;
    for (int i = 0; i < draws; ++i) counts[static_cast<std::size_t>(clamp_value(level + law.noise_scale * n(rng) + law.bias) + 2)]++;
    for (std::size_t v = 0; v < 5; ++v) EXPECT_NEAR(counts[v] / draws, p[v], 0.005);
  }
}

TEST(Bayes, NoiselessBoundsAreOne) {
  CohortSpec spec;
  spec.theta = 1.0;
  spec.noise_sd = 0.0;
  spec.bias_scale = 0.0;
  const auto b = bayes_accuracy(spec, 100000);
  EXPECT_DOUBLE_EQ(b.with_hc, 1.0);
  EXPECT_DOUBLE_EQ(b.reward_only, 1.0);
  EXPECT_NEAR(b.with_hc_exact, 1.0, 1e-12);
  EXPECT_NEAR(b.reward_only_exact, 1.0, 1e-12);

  spec.bias_scale = CohortSpec{}.bias_scale;
  const auto biased = bayes_accuracy(spec, 100000);
  EXPECT_DOUBLE_EQ(biased.with_hc, 1.0);
  EXPECT_LT(biased.reward_only, 1.0);
}

TEST(Bayes, ThetaZeroBoundsCoincide) {
  CohortSpec spec;
  spec.theta = 0.0;
  const auto b = bayes_accuracy(spec);
  EXPECT_NEAR(b.with_hc, b.reward_only, 0.005);
  EXPECT_NEAR(b.with_hc_exact, b.reward_only_exact, 1e-12);
}

TEST(Bayes, InformativeCohortHasMargin) {
  CohortSpec spec;
  spec.theta = 1.0;
  spec.noise_sd = 1.0;
  const auto b = bayes_accuracy(spec);
  EXPECT_GT(b.with_hc - b.reward_only, 0.05);
  ::testing::Test::RecordProperty("margin", std::to_string(b.with_hc - b.reward_only));
}

TEST(Bayes, InformationNeverHurtsAndMonteCarloAgrees) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> theta(0.0, 1.0), noise(0.0, 2.0), bias(0.0, 4.0);
  for (int i = 0; i < 12; ++i) {
    CohortSpec spec;
    spec.theta = theta(rng);
    spec.noise_sd = noise(rng);
    spec.bias_scale = bias(rng);
    spec.n_participants = 20;
    spec.seed = rng();
    const auto b = bayes_accuracy(spec, 200000);
    EXPECT_GE(b.with_hc_exact, b.reward_only_exact - 1e-12);
    EXPECT_GE(b.with_hc, b.reward_only - 3.0 * b.mc_std_error);
    EXPECT_NEAR(b.with_hc, b.with_hc_exact, 5.0 * b.mc_std_error);
    EXPECT_NEAR(b.reward_only, b.reward_only_exact, 5.0 * b.mc_std_error);
  }
}
