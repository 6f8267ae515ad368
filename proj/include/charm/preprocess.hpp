#pragma once

// Transformations between a raw Dataset and training tensors.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "charm/core_data.hpp"
#include "charm/error.hpp"

namespace charm {

// ---------------------------------------------------------------------------
// Box-Cox

inline double boxcox(double x, double lambda) {
  if (!(x > 0.0)) throw Error(Errc::domain, "boxcox requires x > 0");
  const double lx = std::log(x);
  if (lambda == 0.0) return lx;
  // expm1 keeps the transform continuous and accurate as lambda -> 0.
  return std::expm1(lambda * lx) / lambda;
}

inline double boxcox_inverse(double y, double lambda) {
  if (lambda == 0.0) return std::exp(y);
  const double base = lambda * y;
  if (!(base > -1.0)) throw Error(Errc::domain, "boxcox_inverse requires lambda*y + 1 > 0");
  return std::exp(std::log1p(base) / lambda);
}

struct BoxCoxParams {
  double lambda = 1.0;
  double shift = 0.0;

  double transform(double x) const { return boxcox(x + shift, lambda); }

  /// Inverse on the original scale; saturates instead of throwing when the
  /// value falls outside the transform's range.
  double inverse_saturating(double y) const {
    if (lambda != 0.0 && !(lambda * y > -1.0)) {
      return lambda > 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    }
    return boxcox_inverse(y, lambda) - shift;
  }

  friend bool operator==(const BoxCoxParams&, const BoxCoxParams&) = default;
};

inline constexpr double kLambdaMin = -2.0;
inline constexpr double kLambdaMax = 2.0;
inline constexpr double kLambdaStep = 0.01;
inline constexpr double kZeroDelayShift = 1e-3;

/// Box-Cox profile log-likelihood (up to a constant) for a given lambda.
inline double boxcox_log_likelihood(std::span<const double> xs, double lambda) {
  const double n = static_cast<double>(xs.size());
  double sum_log = 0.0;
  double mean = 0.0;
  std::vector<double> ys(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sum_log += std::log(xs[i]);
    ys[i] = boxcox(xs[i], lambda);
    mean += ys[i];
  }
  mean /= n;
  double ss = 0.0;
  for (double y : ys) ss += (y - mean) * (y - mean);
  return -0.5 * n * std::log(ss / n) + (lambda - 1.0) * sum_log;
}

/// Grid-search MLE of lambda over [-2, 2] in steps of 0.01. Samples with
/// variance below 1e-12 have no defined optimum; lambda = 1 is returned.
inline double estimate_lambda(std::span<const double> xs) {
  if (xs.size() < 10) throw Error(Errc::domain, "estimate_lambda needs at least 10 samples");
  for (double x : xs) {
    if (!(x > 0.0) || !std::isfinite(x)) throw Error(Errc::domain, "estimate_lambda needs positive finite samples");
  }
  double m = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - m) * (x - m);
  var /= static_cast<double>(xs.size());
  if (var < 1e-12) return 1.0;

  const int steps = static_cast<int>(std::lround((kLambdaMax - kLambdaMin) / kLambdaStep));
  double best_lambda = 1.0;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= steps; ++i) {
    const double lambda = kLambdaMin + kLambdaStep * i;
    const double ll = boxcox_log_likelihood(xs, lambda);
    if (ll > best_ll) {
      best_ll = ll;
      best_lambda = lambda;
    }
  }
  return best_lambda;
}

/// Fits shift and lambda for a delay sample (seconds, >= 0).
inline BoxCoxParams fit_boxcox(std::span<const double> delays) {
  BoxCoxParams p;
  const bool has_zero = std::any_of(delays.begin(), delays.end(), [](double d) { return d <= 0.0; });
  p.shift = has_zero ? kZeroDelayShift : 0.0;
  std::vector<double> shifted(delays.begin(), delays.end());
  for (double& d : shifted) d += p.shift;
  p.lambda = estimate_lambda(shifted);
  return p;
}

// ---------------------------------------------------------------------------
// Class weights

struct ClassWeights {
  std::map<int, double> weight;

  double operator()(int label) const {
    auto it = weight.find(label);
    if (it == weight.end()) throw Error(Errc::validation, "no weight for label " + std::to_string(label));
    return it->second;
  }

  static ClassWeights uniform(int num_classes) {
    ClassWeights w;
    for (int c = 0; c < num_classes; ++c) w.weight[c] = 1.0;
    return w;
  }

  friend bool operator==(const ClassWeights&, const ClassWeights&) = default;
};

/// weight_c = N / (K * n_c) over the labels actually present.
inline ClassWeights class_weights(std::span<const int> labels) {
  if (labels.empty()) throw Error(Errc::validation, "class_weights needs at least one label");
  std::map<int, std::size_t> counts;
  for (int l : labels) ++counts[l];
  const double n = static_cast<double>(labels.size());
  const double k = static_cast<double>(counts.size());
  ClassWeights w;
  for (auto [label, count] : counts) w.weight[label] = n / (k * static_cast<double>(count));
  return w;
}

// ---------------------------------------------------------------------------
// Binary adaptation

enum class BinaryLabel : int { neg = 0, pos = 1 };

struct BinaryDataset {
  Dataset data;                     // rated, non-neutral events only
  std::vector<BinaryLabel> labels;  // parallel to data.events()
};

/// {-2,-1} -> NEG, {1,2} -> POS; neutral and timed-out events are dropped.
inline BinaryDataset to_binary(const Dataset& ds) {
  std::vector<FeedbackEvent> kept;
  std::vector<BinaryLabel> labels;
  for (const auto& e : ds.events()) {
    if (!e.value || *e.value == 0) continue;
    kept.push_back(e);
    labels.push_back(*e.value < 0 ? BinaryLabel::neg : BinaryLabel::pos);
  }
  return BinaryDataset{ds.with_events(std::move(kept)), std::move(labels)};
}

// ---------------------------------------------------------------------------
// k-fold

struct FoldPlan {
  int k = 0;
  std::uint64_t seed = 0;
  std::vector<int> assignments;  // row index -> fold id

  std::vector<std::size_t> test_indices(int fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
      if (assignments[i] == fold) out.push_back(i);
    }
    return out;
  }

  std::vector<std::size_t> train_indices(int fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
      if (assignments[i] != fold) out.push_back(i);
    }
    return out;
  }

  std::vector<std::size_t> fold_sizes() const {
    std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
    for (int f : assignments) ++sizes[static_cast<std::size_t>(f)];
    return sizes;
  }

  /// FNV-1a over the assignments; two reports with equal digests used the same split.
  std::uint64_t digest() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::uint64_t v) {
      for (int b = 0; b < 8; ++b) {
        h ^= (v >> (8 * b)) & 0xffu;
        h *= 1099511628211ull;
      }
    };
    mix(static_cast<std::uint64_t>(k));
    for (int f : assignments) mix(static_cast<std::uint64_t>(f));
    return h;
  }
};

inline FoldPlan kfold_split(std::size_t n, int k, std::uint64_t seed) {
  if (k < 2) throw Error(Errc::validation, "k must be at least 2");
  if (n < static_cast<std::size_t>(k)) {
    throw Error(Errc::validation, "need at least k=" + std::to_string(k) + " rows, got " + std::to_string(n));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  FoldPlan plan{k, seed, std::vector<int>(n, 0)};
  for (std::size_t pos = 0; pos < n; ++pos) plan.assignments[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(k));
  return plan;
}

// ---------------------------------------------------------------------------
// Standardization

inline constexpr double kMinStd = 1e-12;

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> std;  // population std; columns below kMinStd are only centered

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
    if (static_cast<std::size_t>(x.cols()) != mean.size()) {
      throw Error(Errc::validation, "standardizer expects " + std::to_string(mean.size()) + " columns");
    }
    Eigen::MatrixXd out(x.rows(), x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const auto cc = static_cast<std::size_t>(c);
      const double scale = std[cc] < kMinStd ? 1.0 : std[cc];
      out.col(c) = (x.col(c).array() - mean[cc]) / scale;
    }
    return out;
  }

  friend bool operator==(const Standardizer&, const Standardizer&) = default;
};

inline Standardizer fit_standardizer(const Eigen::MatrixXd& x) {
  if (x.rows() == 0) throw Error(Errc::validation, "standardize needs at least one row");
  Standardizer s;
  const double n = static_cast<double>(x.rows());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double m = x.col(c).sum() / n;
    const double var = (x.col(c).array() - m).square().sum() / n;
    s.mean.push_back(m);
    s.std.push_back(std::sqrt(var));
  }
  return s;
}

struct Standardized {
  Eigen::MatrixXd matrix;
  Standardizer stats;
};

inline Standardized standardize(const Eigen::MatrixXd& features) {
  Standardizer s = fit_standardizer(features);
  return Standardized{s.apply(features), std::move(s)};
}

}  // namespace charm
