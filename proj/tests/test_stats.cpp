#include <gtest/gtest.h>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>

#include <random>
#include <vector>

#include "charm/stats.hpp"

using namespace charm;

TEST(Stats, MeanAndVariance) {
  const std::vector<double> xs{1.0, 2.0, 3.0, 4.0};
  EXPECT_DOUBLE_EQ(stats::mean(xs), 2.5);
  EXPECT_DOUBLE_EQ(stats::variance_pop(xs), 1.25);
  EXPECT_DOUBLE_EQ(stats::variance_sample(xs), 5.0 / 3.0);
}

TEST(Stats, NormalCdfMatchesBoost) {
  const boost::math::normal_distribution<> n;
  for (double z = -8.0; z <= 8.0; z += 0.37) EXPECT_NEAR(stats::normal_cdf(z), boost::math::cdf(n, z), 1e-14);
}

TEST(Stats, IncompleteBetaMatchesBoost) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> ab(0.05, 60.0), x(0.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    const double a = ab(rng), b = ab(rng), xv = x(rng);
    EXPECT_NEAR(stats::incomplete_beta(a, b, xv), boost::math::ibeta(a, b, xv), 1e-12) << a << " " << b << " " << xv;
  }
  EXPECT_EQ(stats::incomplete_beta(2.0, 3.0, 0.0), 0.0);
  EXPECT_EQ(stats::incomplete_beta(2.0, 3.0, 1.0), 1.0);
}

TEST(Stats, StudentTMatchesBoost) {
  for (double dof : {1.0, 2.0, 3.5, 9.0, 44.0, 300.0}) {
    const boost::math::students_t dist(dof);
    for (double t = -12.0; t <= 12.0; t += 0.41) {
      EXPECT_NEAR(stats::student_t_cdf(t, dof), boost::math::cdf(dist, t), 1e-12);
      const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
      EXPECT_NEAR(stats::student_t_two_tailed_p(t, dof), p, 1e-12);
    }
  }
}

TEST(Stats, TwoTailedEdgeCases) {
  EXPECT_DOUBLE_EQ(stats::student_t_two_tailed_p(0.0, 5.0), 1.0);
  EXPECT_EQ(stats::student_t_two_tailed_p(std::numeric_limits<double>::infinity(), 5.0), 0.0);
  EXPECT_EQ(stats::student_t_two_tailed_p(-std::numeric_limits<double>::infinity(), 5.0), 0.0);
}
