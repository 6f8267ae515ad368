#include <gtest/gtest.h>

#include <boost/math/tools/minima.hpp>

#include <cmath>
#include <random>
#include <set>

#include "charm/preprocess.hpp"
#include "test_util.hpp"

using namespace charm;

TEST(BoxCox, Examples) {
  EXPECT_DOUBLE_EQ(boxcox(5.0, 1.0), 4.0);
  EXPECT_NEAR(boxcox(std::exp(1.0), 0.0), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(boxcox(3.0, 2.0), 4.0);
  EXPECT_DOUBLE_EQ(boxcox_inverse(4.0, 1.0), 5.0);
  EXPECT_DOUBLE_EQ(boxcox_inverse(0.0, 0.0), 1.0);
}

TEST(BoxCox, DomainErrors) {
  EXPECT_THROW(boxcox(0.0, 1.0), Error);
  EXPECT_THROW(boxcox(-1.0, 0.5), Error);
  EXPECT_THROW(boxcox_inverse(-1.0, 1.0), Error);
}

TEST(BoxCox, RoundTripRandomDraws) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> x(1e-9, 10.0), lam(-2.0, 2.0);
  for (int i = 0; i < 1000; ++i) {
    const double xv = std::max(x(rng), 1e-6), l = lam(rng);
    EXPECT_LT(std::abs(boxcox_inverse(boxcox(xv, l), l) - xv), 1e-9) << xv << " " << l;
  }
}

TEST(BoxCox, StrictlyIncreasing) {
  for (double l = -2.0; l <= 2.0; l += 0.25) {
    double prev = -std::numeric_limits<double>::infinity();
    for (double x = 0.01; x <= 10.0; x += 0.01) {
      const double y = boxcox(x, l);
      EXPECT_GT(y, prev);
      prev = y;
    }
  }
}

namespace {

// Profile log-likelihood written from the textbook definition, maximized by Brent.
double reference_lambda(const std::vector<double>& xs) {
  auto neg_ll = [&](double l) {
    long double sum_log = 0, mean = 0;
    std::vector<long double> y;
    for (double x : xs) {
      sum_log += std::log(static_cast<long double>(x));
      const long double v = std::abs(l) < 1e-12 ? std::log(static_cast<long double>(x))
                                                : (std::pow(static_cast<long double>(x), l) - 1.0L) / l;
      y.push_back(v);
      mean += v;
    }
    mean /= y.size();
    long double ss = 0;
    for (auto v : y) ss += (v - mean) * (v - mean);
    const long double n = xs.size();
    return static_cast<double>(0.5L * n * std::log(ss / n) - (l - 1.0L) * sum_log);
  };
  return boost::math::tools::brent_find_minima(neg_ll, -2.0, 2.0, 40).first;
}

}  // namespace

TEST(BoxCox, LambdaMatchesContinuousOptimum) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> xs;
    const double power = 0.5 + trial * 0.1;
    for (int i = 0; i < 300; ++i) xs.push_back(std::exp(0.3 * n(rng)) * std::pow(1.0 + 0.1 * std::abs(n(rng)), power));
    const double ref = reference_lambda(xs);
    if (ref > -1.99 && ref < 1.99) EXPECT_NEAR(estimate_lambda(xs), ref, 0.0051);
  }
}

TEST(BoxCox, LambdaRecoversLogNormal) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> xs;
    for (int i = 0; i < 1000; ++i) xs.push_back(std::exp(n(rng)));
    EXPECT_NEAR(estimate_lambda(xs), 0.0, 0.15);
  }
}

// A spread of sd 1 around 5 keeps lambda identifiable; at sd 0.3 the
// likelihood is nearly flat and the MLE wanders over [0.6, 1.5].
TEST(BoxCox, LambdaNearOneForNormalSamples) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(5.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> xs;
    for (int i = 0; i < 2000; ++i) xs.push_back(n(rng));
    const double lambda = estimate_lambda(xs);
    EXPECT_NEAR(lambda, 1.0, 0.3);
    EXPECT_NEAR(lambda, reference_lambda(xs), 0.0051);
  }
}

TEST(BoxCox, DegenerateSamplesGiveLambdaOne) {
  std::vector<double> xs(50, 2.0);
  EXPECT_EQ(estimate_lambda(xs), 1.0);
  EXPECT_THROW(estimate_lambda(std::vector<double>(5, 1.0)), Error);
  EXPECT_THROW(estimate_lambda(std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9, 0}), Error);
}

TEST(BoxCox, ZeroDelaysShifted) {
  std::vector<double> d{0.0, 0.5, 1.0, 1.5, 0.7, 0.9, 1.1, 2.0, 0.8, 1.2};
  const auto p = fit_boxcox(d);
  EXPECT_EQ(p.shift, kZeroDelayShift);
  EXPECT_TRUE(std::isfinite(p.transform(0.0)));
  EXPECT_NEAR(p.inverse_saturating(p.transform(1.3)), 1.3, 1e-9);
  d[0] = 0.1;
  EXPECT_EQ(fit_boxcox(d).shift, 0.0);
}

TEST(ClassWeights, Examples) {
  std::vector<int> uniform;
  for (int c = 0; c < 5; ++c) uniform.insert(uniform.end(), 10, c);
  for (auto [c, w] : class_weights(uniform).weight) EXPECT_DOUBLE_EQ(w, 1.0);

  std::vector<int> skew(30, 0);
  skew.insert(skew.end(), 10, 1);
  const auto w = class_weights(skew);
  EXPECT_NEAR(w(0), 40.0 / 60.0, 1e-12);
  EXPECT_DOUBLE_EQ(w(1), 2.0);
  EXPECT_DOUBLE_EQ(class_weights(std::vector<int>(7, 3))(3), 1.0);
  EXPECT_THROW(w(4), Error);
}

TEST(ClassWeights, Normalization) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> labels(1 + rng() % 500);
    for (int& l : labels) l = static_cast<int>(rng() % (1 + trial % 5));
    const auto w = class_weights(labels);
    std::map<int, int> counts;
    for (int l : labels) ++counts[l];
    double s = 0.0;
    for (auto [c, n] : counts) s += w(c) * n / static_cast<double>(labels.size());
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

namespace {

Dataset valued(const std::vector<std::optional<int>>& values) {
  std::vector<FeedbackEvent> events;
  for (std::size_t i = 0; i < values.size(); ++i) {
    events.push_back(charm::testing::event("P1", static_cast<int>(i), 0.5 * static_cast<double>(i), values[i],
                                           values[i] ? std::optional<double>(1.0) : std::nullopt));
  }
  return Dataset({make_profile("P1", charm::testing::uniform_answers(3, 0, 1))}, events);
}

}  // namespace

TEST(ToBinary, Examples) {
  const auto b = to_binary(valued({-2, 0, 1, 2, std::nullopt}));
  EXPECT_EQ(b.labels, (std::vector<BinaryLabel>{BinaryLabel::neg, BinaryLabel::pos, BinaryLabel::pos}));
  EXPECT_EQ(b.data.events().size(), 3u);
  EXPECT_EQ(b.data.events()[0].reward_stat, 0.0);
  EXPECT_EQ(b.data.events()[1].reward_stat, 1.0);
  EXPECT_TRUE(to_binary(valued({0, 0, 0})).data.events().empty());
  EXPECT_EQ(to_binary(valued({-1, 2, 1, -2})).data.events().size(), 4u);
}

TEST(ToBinary, PreservesRewardsAndLabelSet) {
  std::mt19937_64 rng(2);
  std::vector<std::optional<int>> values;
  for (int i = 0; i < 300; ++i) {
    if (rng() % 10 == 0) values.push_back(std::nullopt);
    else values.push_back(static_cast<int>(rng() % 5) - 2);
  }
  const auto ds = valued(values);
  const auto b = to_binary(ds);
  std::size_t j = 0;
  for (const auto& e : ds.events()) {
    if (!e.value || *e.value == 0) continue;
    EXPECT_EQ(b.data.events()[j].reward_stat, e.reward_stat);
    EXPECT_EQ(b.labels[j], *e.value < 0 ? BinaryLabel::neg : BinaryLabel::pos);
    ++j;
  }
  EXPECT_EQ(j, b.labels.size());
}

TEST(KFold, Examples) {
  const auto p = kfold_split(10, 10, 0);
  for (auto s : p.fold_sizes()) EXPECT_EQ(s, 1u);

  const auto big = kfold_split(4655, 10, 3);
  const auto sizes = big.fold_sizes();
  EXPECT_EQ(std::count(sizes.begin(), sizes.end(), 466u), 5);
  EXPECT_EQ(std::count(sizes.begin(), sizes.end(), 465u), 5);

  EXPECT_EQ(kfold_split(4655, 10, 3).assignments, big.assignments);
  EXPECT_NE(kfold_split(4655, 10, 4).assignments, big.assignments);
  EXPECT_THROW(kfold_split(5, 10, 0), Error);
  EXPECT_THROW(kfold_split(5, 1, 0), Error);
}

TEST(KFold, DisjointExhaustiveBalanced) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + static_cast<int>(rng() % 15);
    const std::size_t n = static_cast<std::size_t>(k) + rng() % 3000;
    const auto plan = kfold_split(n, k, rng());
    std::vector<int> seen(n, 0);
    for (int f = 0; f < k; ++f) {
      const auto test = plan.test_indices(f);
      const auto train = plan.train_indices(f);
      EXPECT_EQ(test.size() + train.size(), n);
      std::set<std::size_t> t(test.begin(), test.end());
      for (auto i : train) EXPECT_FALSE(t.contains(i));
      for (auto i : test) ++seen[i];
    }
    for (int s : seen) EXPECT_EQ(s, 1);
    const auto sizes = plan.fold_sizes();
    EXPECT_LE(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()), 1u);
  }
}

TEST(Standardize, Examples) {
  Eigen::MatrixXd x(3, 2);
  x << 1, 7, 2, 7, 3, 7;
  const auto s = standardize(x);
  EXPECT_NEAR(s.matrix(0, 0), -1.2247, 1e-4);
  EXPECT_NEAR(s.matrix(1, 0), 0.0, 1e-15);
  EXPECT_NEAR(s.matrix(2, 0), 1.2247, 1e-4);
  for (int r = 0; r < 3; ++r) EXPECT_EQ(s.matrix(r, 1), 0.0);
  EXPECT_EQ(s.stats.apply(x), s.matrix);
}
