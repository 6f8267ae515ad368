#pragma once

// Feedback oracle lifecycle: assemble (hc, r_hat) rows, train the CHARM
// variant or its baselines, predict feedback, run k-fold evaluation and
// compare evaluations with a paired t-test.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "charm/core_data.hpp"
#include "charm/error.hpp"
#include "charm/nn.hpp"
#include "charm/preprocess.hpp"
#include "charm/stats.hpp"
#include "charm/synth.hpp"

namespace charm {

enum class Variant { charm, stats_only, random };
enum class ValueScale { five_point, binary };
enum class PredictionRule { argmax, sampled };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::charm: return "charm";
    case Variant::stats_only: return "stats_only";
    case Variant::random: return "random";
  }
  return "?";
}
inline std::string_view to_string(ValueScale s) { return s == ValueScale::five_point ? "five_point" : "binary"; }
inline std::string_view to_string(PredictionRule r) { return r == PredictionRule::argmax ? "argmax" : "sampled"; }

inline Variant parse_variant(std::string_view s) {
  if (s == "charm") return Variant::charm;
  if (s == "stats_only") return Variant::stats_only;
  if (s == "random") return Variant::random;
  throw Error(Errc::validation, "unknown mode '" + std::string(s) + "'");
}
inline ValueScale parse_scale(std::string_view s) {
  if (s == "five_point") return ValueScale::five_point;
  if (s == "binary") return ValueScale::binary;
  throw Error(Errc::validation, "unknown value scale '" + std::string(s) + "'");
}
inline PredictionRule parse_rule(std::string_view s) {
  if (s == "argmax") return PredictionRule::argmax;
  if (s == "sampled") return PredictionRule::sampled;
  throw Error(Errc::validation, "unknown prediction rule '" + std::string(s) + "'");
}

struct OracleMode {
  Variant variant = Variant::charm;
  ValueScale value_scale = ValueScale::five_point;
  PredictionRule prediction = PredictionRule::argmax;

  int input_dim() const {
    switch (variant) {
      case Variant::charm: return static_cast<int>(kHcDim) + 1;
      case Variant::stats_only: return 1;
      case Variant::random: return 0;
    }
    return 0;
  }
  int num_classes() const { return value_scale == ValueScale::five_point ? 5 : 2; }
};

/// Class index <-> feedback value. Binary labels are reported as -1 (NEG) / +1 (POS).
inline int class_to_value(int cls, ValueScale scale) {
  return scale == ValueScale::five_point ? cls - 2 : (cls == 0 ? -1 : 1);
}

// ---------------------------------------------------------------------------
// Rows

/// Rated events flattened for training: columns 0..27 hold hc, column 28 r_hat.
struct OracleRows {
  ValueScale scale = ValueScale::five_point;
  Eigen::MatrixXd hc_reward;
  std::vector<int> labels;
  std::vector<double> delays;             // seconds
  std::vector<std::size_t> event_index;   // position in the source dataset

  std::size_t size() const { return labels.size(); }
};

inline OracleRows build_rows(const Dataset& ds, ValueScale scale) {
  OracleRows rows;
  rows.scale = scale;
  std::vector<std::size_t> picked;
  for (std::size_t i = 0; i < ds.events().size(); ++i) {
    const auto& e = ds.events()[i];
    if (!e.rated()) continue;
    if (scale == ValueScale::binary && *e.value == 0) continue;
    picked.push_back(i);
  }
  rows.hc_reward.resize(static_cast<Eigen::Index>(picked.size()), static_cast<Eigen::Index>(kHcDim + 1));
  for (std::size_t r = 0; r < picked.size(); ++r) {
    const auto& e = ds.events()[picked[r]];
    const auto& hc = ds.profile(e.participant_id).hc;
    const auto row = static_cast<Eigen::Index>(r);
    for (std::size_t c = 0; c < kHcDim; ++c) rows.hc_reward(row, static_cast<Eigen::Index>(c)) = hc[c];
    rows.hc_reward(row, static_cast<Eigen::Index>(kHcDim)) = e.reward_stat;
    const int label = scale == ValueScale::five_point ? *e.value + 2 : (*e.value < 0 ? 0 : 1);
    rows.labels.push_back(label);
    rows.delays.push_back(*e.delay_s);
    rows.event_index.push_back(picked[r]);
  }
  return rows;
}

inline Eigen::MatrixXd select_features(const Eigen::MatrixXd& hc_reward, Variant v) {
  switch (v) {
    case Variant::charm: return hc_reward;
    case Variant::stats_only: return hc_reward.rightCols(1);
    case Variant::random: return Eigen::MatrixXd(hc_reward.rows(), 0);
  }
  return {};
}

// ---------------------------------------------------------------------------
// Model

struct OracleModel {
  OracleMode mode;
  std::optional<nn::MlpModel> mlp;  // absent for the random variant
  ClassWeights weights;
  BoxCoxParams delay_transform;
  double mean_delay_t = 0.0;        // random variant's delay prediction (transformed scale)
};

namespace detail {

inline BoxCoxParams fit_delay_transform(std::span<const double> delays) {
  if (delays.size() < 10) {
    // Too few samples for a likelihood fit; fall back to the identity-like lambda = 1.
    const bool has_zero = std::any_of(delays.begin(), delays.end(), [](double d) { return d <= 0.0; });
    return BoxCoxParams{1.0, has_zero ? kZeroDelayShift : 0.0};
  }
  return fit_boxcox(delays);
}

}  // namespace detail

/// Trains on the given subset of rows. All preprocessing statistics come
/// from these rows only.
inline OracleModel train_on_rows(const OracleRows& rows, std::span<const std::size_t> train, const OracleMode& mode,
                                 nn::MlpConfig config) {
  if (train.empty()) throw Error(Errc::degenerate, "no labeled rows to train on");
  OracleModel model;
  model.mode = mode;

  std::vector<int> labels;
  std::vector<double> delays;
  for (std::size_t i : train) {
    labels.push_back(rows.labels[i]);
    delays.push_back(rows.delays[i]);
  }
  model.delay_transform = detail::fit_delay_transform(delays);
  std::vector<std::optional<double>> delay_t;
  double sum_t = 0.0;
  for (double d : delays) {
    delay_t.push_back(model.delay_transform.transform(d));
    sum_t += *delay_t.back();
  }
  model.mean_delay_t = sum_t / static_cast<double>(delays.size());

  if (mode.variant == Variant::random) {
    model.weights = ClassWeights::uniform(mode.num_classes());
    return model;
  }
  if (std::set<int>(labels.begin(), labels.end()).size() < 2) {
    throw Error(Errc::degenerate, "training data contains a single class");
  }
  model.weights = class_weights(labels);

  Eigen::MatrixXd x(static_cast<Eigen::Index>(train.size()), rows.hc_reward.cols());
  for (std::size_t r = 0; r < train.size(); ++r) {
    x.row(static_cast<Eigen::Index>(r)) = rows.hc_reward.row(static_cast<Eigen::Index>(train[r]));
  }
  auto standardized = standardize(select_features(x, mode.variant));

  config.input_dim = mode.input_dim();
  config.num_classes = mode.num_classes();
  nn::TrainingData data{std::move(standardized.matrix), std::move(labels), std::move(delay_t)};
  nn::MlpModel mlp = nn::fit(config, data, model.weights);
  mlp.train_stats.features = std::move(standardized.stats);
  mlp.train_stats.delay = model.delay_transform;
  model.mlp = std::move(mlp);
  return model;
}

inline OracleModel train_oracle(const Dataset& ds, const OracleMode& mode, const nn::MlpConfig& config) {
  const auto rows = build_rows(ds, mode.value_scale);
  if (rows.size() == 0) {
    throw Error(Errc::degenerate, std::string("no usable rows for the ") + std::string(to_string(mode.value_scale)) +
                                      " scale");
  }
  std::vector<std::size_t> all(rows.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return train_on_rows(rows, all, mode, config);
}

struct Prediction {
  int value = 0;
  double delay_s = 0.0;
};

inline double delay_seconds(const OracleModel& m, double delay_t) {
  const double s = m.delay_transform.inverse_saturating(delay_t);
  return std::clamp(s, 0.0, kMaxDelaySeconds);
}

/// Class probabilities and transformed delay for a batch of raw (hc, r_hat) rows.
struct BatchOutput {
  Eigen::MatrixXd probs;       // num_classes x n
  std::vector<double> delay_t;
};

inline BatchOutput forward_rows(const OracleModel& m, const Eigen::MatrixXd& hc_reward) {
  BatchOutput out;
  const Eigen::Index n = hc_reward.rows();
  const int c = m.mode.num_classes();
  if (!m.mlp) {
    out.probs = Eigen::MatrixXd::Constant(c, n, 1.0 / c);
    out.delay_t.assign(static_cast<std::size_t>(n), m.mean_delay_t);
    return out;
  }
  const auto x = m.mlp->train_stats.features.apply(select_features(hc_reward, m.mode.variant));
  const auto cache = nn::forward_batch(m.mlp->params, m.mlp->config.activation, x);
  out.probs.resize(c, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto col = cache.logits.col(i);
    const Eigen::VectorXd e = (col.array() - col.maxCoeff()).exp().matrix();
    out.probs.col(i) = e / e.sum();
  }
  out.delay_t.assign(cache.delay.data(), cache.delay.data() + n);
  return out;
}

inline int choose_class(const Eigen::VectorXd& probs, PredictionRule rule, bool uniform, std::mt19937_64* rng) {
  if (uniform || rule == PredictionRule::sampled) {
    if (!rng) throw Error(Errc::validation, "an RNG is required for random or sampled prediction");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double draw = u(*rng);
    double acc = 0.0;
    for (Eigen::Index c = 0; c < probs.size(); ++c) {
      acc += probs(c);
      if (draw < acc) return static_cast<int>(c);
    }
    return static_cast<int>(probs.size() - 1);
  }
  Eigen::Index best = 0;
  probs.maxCoeff(&best);
  return static_cast<int>(best);
}

/// F(hc, r_hat) -> (value, delay). `hc` is required for the CHARM variant and
/// ignored otherwise; `rng` is required for the random variant and sampled rule.
inline Prediction predict(const OracleModel& m, const std::optional<HcVector>& hc, double r_hat,
                          std::mt19937_64* rng = nullptr) {
  if (m.mode.variant == Variant::charm && !hc) throw Error(Errc::validation, "CHARM prediction requires hc");
  Eigen::MatrixXd row = Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(kHcDim + 1));
  if (hc) {
    for (std::size_t i = 0; i < kHcDim; ++i) row(0, static_cast<Eigen::Index>(i)) = (*hc)[i];
  }
  row(0, static_cast<Eigen::Index>(kHcDim)) = r_hat;
  const auto out = forward_rows(m, row);
  const int cls = choose_class(out.probs.col(0), m.mode.prediction, !m.mlp, rng);
  return Prediction{class_to_value(cls, m.mode.value_scale), delay_seconds(m, out.delay_t[0])};
}

// ---------------------------------------------------------------------------
// Evaluation

struct DelayMetrics {
  double mse = 0.0;
  std::optional<double> r2;  // undefined when the targets have zero variance
};

inline DelayMetrics evaluate_delay(std::span<const double> predicted, std::span<const double> actual) {
  if (predicted.size() != actual.size() || actual.empty()) {
    throw Error(Errc::validation, "evaluate_delay needs equal-length non-empty inputs");
  }
  const double n = static_cast<double>(actual.size());
  double mean = 0.0;
  for (double a : actual) mean += a;
  mean /= n;
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    ss_res += (predicted[i] - actual[i]) * (predicted[i] - actual[i]);
    ss_tot += (actual[i] - mean) * (actual[i] - mean);
  }
  DelayMetrics m;
  m.mse = ss_res / n;
  if (ss_tot > 0.0) m.r2 = 1.0 - ss_res / ss_tot;
  return m;
}

struct FoldMetrics {
  int fold = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  double accuracy = 0.0;
  DelayMetrics delay_seconds;  // original scale
  DelayMetrics delay_boxcox;   // transformed scale used in training
};

struct EvalMetrics {
  OracleMode mode;
  int k = 0;
  std::uint64_t seed = 0;
  std::uint64_t fold_digest = 0;
  std::size_t n_rows = 0;
  std::vector<FoldMetrics> per_fold;
  double mean_accuracy = 0.0;
  double delay_mse = 0.0;
  std::optional<double> delay_r2;
  double delay_mse_boxcox = 0.0;
  std::optional<double> delay_r2_boxcox;
};

/// Held-out metrics for one trained model.
inline FoldMetrics evaluate_fold(const OracleModel& model, const OracleRows& rows, std::span<const std::size_t> test,
                                 std::mt19937_64& rng) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(test.size()), rows.hc_reward.cols());
  for (std::size_t r = 0; r < test.size(); ++r) {
    x.row(static_cast<Eigen::Index>(r)) = rows.hc_reward.row(static_cast<Eigen::Index>(test[r]));
  }
  const auto out = forward_rows(model, x);
  FoldMetrics fm;
  fm.n_test = test.size();
  std::size_t correct = 0;
  std::vector<double> pred_s, true_s, pred_t, true_t;
  for (std::size_t r = 0; r < test.size(); ++r) {
    const int cls = choose_class(out.probs.col(static_cast<Eigen::Index>(r)), model.mode.prediction, !model.mlp, &rng);
    correct += cls == rows.labels[test[r]];
    const double d = rows.delays[test[r]];
    pred_s.push_back(delay_seconds(model, out.delay_t[r]));
    true_s.push_back(d);
    pred_t.push_back(out.delay_t[r]);
    true_t.push_back(model.delay_transform.transform(d));
  }
  fm.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
  fm.delay_seconds = evaluate_delay(pred_s, true_s);
  fm.delay_boxcox = evaluate_delay(pred_t, true_t);
  return fm;
}

/// Throws unless train and test are disjoint and together cover all n rows.
inline void audit_split(std::span<const std::size_t> train, std::span<const std::size_t> test, std::size_t n,
                        int fold) {
  std::vector<char> seen(n, 0);
  for (std::size_t i : train) seen[i] |= 1;
  for (std::size_t i : test) {
    if (seen[i] & 1) throw Error(Errc::integrity, "fold " + std::to_string(fold) + ": row " + std::to_string(i) + " leaked into training");
    seen[i] |= 2;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!seen[i]) throw Error(Errc::integrity, "fold " + std::to_string(fold) + ": row " + std::to_string(i) + " unassigned");
  }
}

struct CvOptions {
  int k = 10;
  std::uint64_t seed = 0;
  int jobs = 1;
};

inline EvalMetrics cross_validate_rows(const OracleRows& rows, const OracleMode& mode, const nn::MlpConfig& config,
                                       const CvOptions& opt) {
  const FoldPlan plan = kfold_split(rows.size(), opt.k, opt.seed);
  EvalMetrics em;
  em.mode = mode;
  em.k = opt.k;
  em.seed = opt.seed;
  em.fold_digest = plan.digest();
  em.n_rows = rows.size();
  em.per_fold.resize(static_cast<std::size_t>(opt.k));

  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(opt.k));
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int f = next++; f < opt.k; f = next++) {
      const auto uf = static_cast<std::size_t>(f);
      try {
        const auto train = plan.train_indices(f);
        const auto test = plan.test_indices(f);
        audit_split(train, test, rows.size(), f);
        nn::MlpConfig fold_config = config;
        fold_config.seed = synth::stream_seed(config.seed ^ opt.seed, static_cast<std::uint64_t>(f));
        const auto model = train_on_rows(rows, train, mode, fold_config);
        std::mt19937_64 rng(synth::stream_seed(opt.seed, 1000 + static_cast<std::uint64_t>(f)));
        auto fm = evaluate_fold(model, rows, test, rng);
        fm.fold = f;
        fm.n_train = train.size();
        em.per_fold[uf] = fm;
      } catch (const Error& e) {
        errors[uf] = std::make_exception_ptr(Error(e.code(), "fold " + std::to_string(f) + ": " + e.message()));
      } catch (...) {
        errors[uf] = std::current_exception();
      }
    }
  };
  const int jobs = std::clamp(opt.jobs, 1, opt.k);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  double acc = 0.0, mse = 0.0, mse_t = 0.0, r2 = 0.0, r2_t = 0.0;
  bool r2_ok = true, r2_t_ok = true;
  for (const auto& fm : em.per_fold) {
    acc += fm.accuracy;
    mse += fm.delay_seconds.mse;
    mse_t += fm.delay_boxcox.mse;
    r2_ok = r2_ok && fm.delay_seconds.r2.has_value();
    r2_t_ok = r2_t_ok && fm.delay_boxcox.r2.has_value();
    if (fm.delay_seconds.r2) r2 += *fm.delay_seconds.r2;
    if (fm.delay_boxcox.r2) r2_t += *fm.delay_boxcox.r2;
  }
  const double k = static_cast<double>(opt.k);
  em.mean_accuracy = acc / k;
  em.delay_mse = mse / k;
  em.delay_mse_boxcox = mse_t / k;
  if (r2_ok) em.delay_r2 = r2 / k;
  if (r2_t_ok) em.delay_r2_boxcox = r2_t / k;
  return em;
}

inline EvalMetrics cross_validate(const Dataset& ds, const OracleMode& mode, const nn::MlpConfig& config,
                                  const CvOptions& opt = {}) {
  return cross_validate_rows(build_rows(ds, mode.value_scale), mode, config, opt);
}

// ---------------------------------------------------------------------------
// Paired comparison

struct PairedTTest {
  double t = 0.0;
  double p = 1.0;
  double mean_diff = 0.0;
  double sd_diff = 0.0;
  int k = 0;
  bool degenerate = false;  // zero-variance differences
};

/// Paired t-test on per-fold accuracies, a minus b.
inline PairedTTest paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(Errc::validation, "paired test needs equal fold counts");
  if (a.size() < 2) throw Error(Errc::validation, "paired test needs at least two folds");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  PairedTTest r;
  r.k = static_cast<int>(d.size());
  r.mean_diff = stats::mean(d);
  r.sd_diff = std::sqrt(stats::variance_sample(d));
  // Differences equal up to rounding count as zero variance.
  const double scale = std::max(1.0, std::abs(r.mean_diff));
  if (r.sd_diff <= 1e-12 * scale) {
    r.degenerate = true;
    if (std::abs(r.mean_diff) <= 1e-15) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = std::copysign(std::numeric_limits<double>::infinity(), r.mean_diff);
      r.p = 0.0;
    }
    return r;
  }
  r.t = r.mean_diff / (r.sd_diff / std::sqrt(static_cast<double>(r.k)));
  r.p = stats::student_t_two_tailed_p(r.t, r.k - 1);
  return r;
}

inline std::vector<double> fold_accuracies(const EvalMetrics& m) {
  std::vector<double> out;
  for (const auto& f : m.per_fold) out.push_back(f.accuracy);
  return out;
}

inline PairedTTest compare_models(const EvalMetrics& a, const EvalMetrics& b) {
  if (a.k != b.k) throw Error(Errc::validation, "reports use different k");
  if (a.fold_digest != b.fold_digest) throw Error(Errc::validation, "reports use different fold plans");
  return paired_t_test(fold_accuracies(a), fold_accuracies(b));
}

// ---------------------------------------------------------------------------
// Report and model files

namespace detail {

inline nlohmann::ordered_json opt_number(const std::optional<double>& v) {
  return v && std::isfinite(*v) ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

inline nlohmann::ordered_json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

inline std::optional<double> read_opt(const nlohmann::ordered_json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const EvalMetrics& m, const std::optional<PairedTTest>& vs_baseline = std::nullopt,
                                      std::string_view baseline_name = "") {
  nlohmann::ordered_json j;
  j["mode"] = to_string(m.mode.variant);
  j["value_scale"] = to_string(m.mode.value_scale);
  j["prediction"] = to_string(m.mode.prediction);
  j["k"] = m.k;
  j["seed"] = m.seed;
  j["fold_digest"] = std::to_string(m.fold_digest);
  j["n_rows"] = m.n_rows;
  auto folds = nlohmann::ordered_json::array();
  for (const auto& f : m.per_fold) {
    nlohmann::ordered_json fj;
    fj["fold"] = f.fold;
    fj["n_train"] = f.n_train;
    fj["n_test"] = f.n_test;
    fj["accuracy"] = f.accuracy;
    fj["delay_mse"] = f.delay_seconds.mse;
    fj["delay_r2"] = detail::opt_number(f.delay_seconds.r2);
    fj["delay_mse_boxcox"] = f.delay_boxcox.mse;
    fj["delay_r2_boxcox"] = detail::opt_number(f.delay_boxcox.r2);
    folds.push_back(fj);
  }
  j["per_fold"] = folds;
  j["mean_accuracy"] = m.mean_accuracy;
  j["delay_mse"] = m.delay_mse;
  j["delay_r2"] = detail::opt_number(m.delay_r2);
  j["delay_mse_boxcox"] = m.delay_mse_boxcox;
  j["delay_r2_boxcox"] = detail::opt_number(m.delay_r2_boxcox);
  if (vs_baseline) {
    j["baseline"] = baseline_name;
    j["t_vs_baseline"] = detail::number_or_null(vs_baseline->t);
    j["p_vs_baseline"] = vs_baseline->p;
  } else {
    j["baseline"] = nullptr;
    j["t_vs_baseline"] = nullptr;
    j["p_vs_baseline"] = nullptr;
  }
  return j;
}

inline EvalMetrics metrics_from_json(const nlohmann::ordered_json& j) {
  try {
    EvalMetrics m;
    m.mode.variant = parse_variant(j.at("mode").get<std::string>());
    m.mode.value_scale = parse_scale(j.at("value_scale").get<std::string>());
    if (j.contains("prediction")) m.mode.prediction = parse_rule(j.at("prediction").get<std::string>());
    m.k = j.at("k").get<int>();
    m.seed = j.value("seed", std::uint64_t{0});
    m.fold_digest = std::stoull(j.at("fold_digest").get<std::string>());
    m.n_rows = j.value("n_rows", std::size_t{0});
    for (const auto& fj : j.at("per_fold")) {
      FoldMetrics f;
      f.fold = fj.at("fold").get<int>();
      f.n_train = fj.value("n_train", std::size_t{0});
      f.n_test = fj.value("n_test", std::size_t{0});
      f.accuracy = fj.at("accuracy").get<double>();
      f.delay_seconds.mse = fj.value("delay_mse", 0.0);
      f.delay_seconds.r2 = detail::read_opt(fj, "delay_r2");
      f.delay_boxcox.mse = fj.value("delay_mse_boxcox", 0.0);
      f.delay_boxcox.r2 = detail::read_opt(fj, "delay_r2_boxcox");
      m.per_fold.push_back(f);
    }
    if (m.per_fold.size() != static_cast<std::size_t>(m.k)) throw Error(Errc::validation, "per_fold length differs from k");
    m.mean_accuracy = j.at("mean_accuracy").get<double>();
    m.delay_mse = j.value("delay_mse", 0.0);
    m.delay_r2 = detail::read_opt(j, "delay_r2");
    m.delay_mse_boxcox = j.value("delay_mse_boxcox", 0.0);
    m.delay_r2_boxcox = detail::read_opt(j, "delay_r2_boxcox");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, std::string("evaluation report: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw Error(Errc::parse, "evaluation report: bad fold_digest");
  }
}

inline nlohmann::ordered_json to_json(const OracleModel& m) {
  nlohmann::ordered_json j;
  j["format"] = "charm-oracle";
  j["version"] = 1;
  j["mode"] = to_string(m.mode.variant);
  j["value_scale"] = to_string(m.mode.value_scale);
  j["prediction"] = to_string(m.mode.prediction);
  auto w = nlohmann::ordered_json::object();
  for (auto [label, weight] : m.weights.weight) w[std::to_string(label)] = weight;
  j["class_weights"] = w;
  j["boxcox_lambda"] = m.delay_transform.lambda;
  j["boxcox_shift"] = m.delay_transform.shift;
  j["mean_delay_t"] = m.mean_delay_t;
  j["mlp"] = m.mlp ? nn::to_json(*m.mlp) : nlohmann::ordered_json(nullptr);
  return j;
}

inline OracleModel oracle_from_json(const nlohmann::ordered_json& j) {
  try {
    if (j.at("format").get<std::string>() != "charm-oracle") throw Error(Errc::parse, "not a charm-oracle model");
    OracleModel m;
    m.mode.variant = parse_variant(j.at("mode").get<std::string>());
    m.mode.value_scale = parse_scale(j.at("value_scale").get<std::string>());
    m.mode.prediction = parse_rule(j.at("prediction").get<std::string>());
    for (const auto& [label, weight] : j.at("class_weights").items()) m.weights.weight[std::stoi(label)] = weight.get<double>();
    m.delay_transform.lambda = j.at("boxcox_lambda").get<double>();
    m.delay_transform.shift = j.at("boxcox_shift").get<double>();
    m.mean_delay_t = j.at("mean_delay_t").get<double>();
    if (!j.at("mlp").is_null()) m.mlp = nn::mlp_from_json(j.at("mlp"));
    if ((m.mode.variant == Variant::random) == m.mlp.has_value()) {
      throw Error(Errc::parse, "network presence does not match the oracle mode");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, std::string("oracle model: ") + e.what());
  }
}

}  // namespace charm
