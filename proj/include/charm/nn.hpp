#pragma once

// Feed-forward network with a shared trunk, a classification head and a
// scalar regression head, trained jointly on L = L_cls + L_reg with manual
// backpropagation.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "charm/error.hpp"
#include "charm/preprocess.hpp"

namespace charm::nn {

enum class Activation { relu, tanh };
enum class Optimizer { sgd, adam };

inline std::string_view to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }
inline std::string_view to_string(Optimizer o) { return o == Optimizer::sgd ? "sgd" : "adam"; }

inline Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw Error(Errc::validation, "unknown activation '" + std::string(s) + "'");
}

inline Optimizer parse_optimizer(std::string_view s) {
  if (s == "sgd") return Optimizer::sgd;
  if (s == "adam") return Optimizer::adam;
  throw Error(Errc::validation, "unknown optimizer '" + std::string(s) + "'");
}

struct MlpConfig {
  int input_dim = 29;
  std::vector<int> hidden{64, 64};
  Activation activation = Activation::relu;
  int num_classes = 5;
  std::uint64_t seed = 0;
  double learning_rate = 1e-3;
  int epochs = 200;
  int batch_size = 64;
  Optimizer optimizer = Optimizer::adam;
  double validation_fraction = 0.1;  // held out for epoch selection; 0 selects on training loss
  int patience = 40;                 // epochs without improvement before stopping; 0 runs all epochs
  double weight_decay = 1.0;         // decoupled decay on weight matrices (biases exempt)

  void validate() const {
    if (input_dim <= 0) throw Error(Errc::validation, "input_dim must be positive");
    for (int w : hidden) {
      if (w <= 0) throw Error(Errc::validation, "hidden widths must be positive");
    }
    if (num_classes != 2 && num_classes != 5) throw Error(Errc::validation, "num_classes must be 2 or 5");
    if (!(learning_rate > 0.0)) throw Error(Errc::validation, "learning_rate must be positive");
    if (epochs < 0) throw Error(Errc::validation, "epochs must be non-negative");
    if (batch_size <= 0) throw Error(Errc::validation, "batch_size must be positive");
    if (!(validation_fraction >= 0.0 && validation_fraction < 0.5)) {
      throw Error(Errc::validation, "validation_fraction must be in [0, 0.5)");
    }
    if (patience < 0) throw Error(Errc::validation, "patience must be non-negative");
    if (!(weight_decay >= 0.0)) throw Error(Errc::validation, "weight_decay must be non-negative");
  }

  friend bool operator==(const MlpConfig&, const MlpConfig&) = default;
};

struct Dense {
  Eigen::MatrixXd w;  // out x in
  Eigen::MatrixXd b;  // out x 1

  friend bool operator==(const Dense& x, const Dense& y) { return x.w == y.w && x.b == y.b; }
};

/// Trunk layers followed by the classification head and the delay head.
struct Params {
  std::vector<Dense> trunk;
  Dense cls;
  Dense reg;

  template <class F>
  void for_each_tensor(F&& f) {
    for (auto& l : trunk) {
      f(l.w);
      f(l.b);
    }
    f(cls.w);
    f(cls.b);
    f(reg.w);
    f(reg.b);
  }

  template <class F>
  void for_each_tensor(F&& f) const {
    for (const auto& l : trunk) {
      f(l.w);
      f(l.b);
    }
    f(cls.w);
    f(cls.b);
    f(reg.w);
    f(reg.b);
  }

  std::size_t size() const {
    std::size_t n = 0;
    for_each_tensor([&n](const Eigen::MatrixXd& t) { n += static_cast<std::size_t>(t.size()); });
    return n;
  }

  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(size());
    for_each_tensor([&out](const Eigen::MatrixXd& t) { out.insert(out.end(), t.data(), t.data() + t.size()); });
    return out;
  }

  void assign(std::span<const double> flat) {
    if (flat.size() != size()) throw Error(Errc::validation, "parameter vector has wrong length");
    std::size_t pos = 0;
    for_each_tensor([&](Eigen::MatrixXd& t) {
      std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), t.size(), t.data());
      pos += static_cast<std::size_t>(t.size());
    });
  }

  bool all_finite() const {
    bool ok = true;
    for_each_tensor([&ok](const Eigen::MatrixXd& t) { ok = ok && t.allFinite(); });
    return ok;
  }

  friend bool operator==(const Params&, const Params&) = default;
};

inline Params zero_params(const MlpConfig& cfg) {
  Params p;
  int fan_in = cfg.input_dim;
  for (int width : cfg.hidden) {
    p.trunk.push_back({Eigen::MatrixXd::Zero(width, fan_in), Eigen::MatrixXd::Zero(width, 1)});
    fan_in = width;
  }
  p.cls = {Eigen::MatrixXd::Zero(cfg.num_classes, fan_in), Eigen::MatrixXd::Zero(cfg.num_classes, 1)};
  p.reg = {Eigen::MatrixXd::Zero(1, fan_in), Eigen::MatrixXd::Zero(1, 1)};
  return p;
}

/// Glorot-uniform weights, zero biases.
inline Params init_params(const MlpConfig& cfg) {
  Params p = zero_params(cfg);
  std::mt19937_64 rng(cfg.seed);
  auto fill = [&rng](Dense& layer) {
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.w.rows() + layer.w.cols()));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (Eigen::Index j = 0; j < layer.w.cols(); ++j) {
      for (Eigen::Index i = 0; i < layer.w.rows(); ++i) layer.w(i, j) = u(rng);
    }
  };
  for (auto& l : p.trunk) fill(l);
  fill(p.cls);
  fill(p.reg);
  return p;
}

struct TrainStats {
  Standardizer features;
  BoxCoxParams delay;

  friend bool operator==(const TrainStats&, const TrainStats&) = default;
};

struct MlpModel {
  MlpConfig config;
  Params params;
  TrainStats train_stats;
  std::vector<double> loss_history;        // fitting-set loss per epoch, entry 0 = before training
  std::vector<double> validation_history;  // held-out loss per epoch, empty without a held-out split
};

inline MlpModel make_model(const MlpConfig& cfg, bool zero = false) {
  cfg.validate();
  return MlpModel{cfg, zero ? zero_params(cfg) : init_params(cfg), {}, {}, {}};
}

// ---------------------------------------------------------------------------
// Forward

struct ForwardCache {
  std::vector<Eigen::MatrixXd> activations;  // activations[0] = input (d x n)
  std::vector<Eigen::MatrixXd> pre;          // pre-activation per trunk layer
  Eigen::MatrixXd logits;                    // C x n
  Eigen::MatrixXd delay;                     // 1 x n
};

inline Eigen::MatrixXd activate(const Eigen::MatrixXd& z, Activation a) {
  if (a == Activation::relu) return z.cwiseMax(0.0);
  return z.array().tanh().matrix();
}

/// Forward pass over `x` (rows = samples).
inline ForwardCache forward_batch(const Params& p, Activation act, const Eigen::MatrixXd& x) {
  const Eigen::Index in = p.trunk.empty() ? p.cls.w.cols() : p.trunk.front().w.cols();
  if (x.cols() != in) {
    throw Error(Errc::validation,
                "input has " + std::to_string(x.cols()) + " features, model expects " + std::to_string(in));
  }
  ForwardCache c;
  c.activations.push_back(x.transpose());
  for (const auto& layer : p.trunk) {
    Eigen::MatrixXd z = layer.w * c.activations.back();
    z.colwise() += layer.b.col(0);
    c.activations.push_back(activate(z, act));
    c.pre.push_back(std::move(z));
  }
  const auto& top = c.activations.back();
  c.logits = p.cls.w * top;
  c.logits.colwise() += p.cls.b.col(0);
  c.delay = p.reg.w * top;
  c.delay.colwise() += p.reg.b.col(0);
  return c;
}

struct Output {
  std::vector<double> logits;
  double delay_t = 0.0;  // transformed-delay head output
};

inline Output forward(const MlpModel& model, std::span<const double> x) {
  if (x.size() != static_cast<std::size_t>(model.config.input_dim)) {
    throw Error(Errc::validation, "feature vector has " + std::to_string(x.size()) + " entries, expected " +
                                      std::to_string(model.config.input_dim));
  }
  Eigen::MatrixXd row(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) row(0, static_cast<Eigen::Index>(i)) = x[i];
  const auto c = forward_batch(model.params, model.config.activation, row);
  Output out;
  out.logits.assign(c.logits.data(), c.logits.data() + c.logits.size());
  out.delay_t = c.delay(0, 0);
  return out;
}

inline std::vector<double> softmax(std::span<const double> logits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double l : logits) mx = std::max(mx, l);
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

inline double log_sum_exp(std::span<const double> logits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double l : logits) mx = std::max(mx, l);
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - mx);
  return mx + std::log(sum);
}

// ---------------------------------------------------------------------------
// Loss

/// Per-sample joint loss: class-weighted cross-entropy plus squared error on
/// the transformed delay. Rows without a delay target contribute only the
/// classification term.
inline double loss(std::span<const double> logits, double delay_t, int label, std::optional<double> delay_gt,
                   const ClassWeights& weights) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw Error(Errc::validation, "label " + std::to_string(label) + " outside the class set");
  }
  const double ce = log_sum_exp(logits) - logits[static_cast<std::size_t>(label)];
  double reg = 0.0;
  if (delay_gt) reg = (delay_t - *delay_gt) * (delay_t - *delay_gt);
  return weights(label) * ce + reg;
}

struct TrainingData {
  Eigen::MatrixXd features;                   // n x input_dim
  std::vector<int> labels;                    // class index per row
  std::vector<std::optional<double>> delays;  // transformed delay target per row

  std::size_t size() const { return labels.size(); }

  void validate(int input_dim, int num_classes) const {
    if (static_cast<std::size_t>(features.rows()) != labels.size() || labels.size() != delays.size()) {
      throw Error(Errc::validation, "features, labels and delays must have equal lengths");
    }
    if (features.cols() != input_dim) throw Error(Errc::validation, "feature width does not match input_dim");
    for (int l : labels) {
      if (l < 0 || l >= num_classes) throw Error(Errc::validation, "label outside the class set");
    }
  }

  TrainingData subset(std::span<const std::size_t> rows) const {
    TrainingData out;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(rows[i]));
      out.labels.push_back(labels[rows[i]]);
      out.delays.push_back(delays[rows[i]]);
    }
    return out;
  }
};

struct LossAndGrad {
  double loss = 0.0;
  Params grad;
};

namespace detail {

inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> output_deltas(const ForwardCache& c, const TrainingData& batch,
                                                                 const ClassWeights& weights, double* loss_out) {
  const Eigen::Index n = static_cast<Eigen::Index>(batch.size());
  const double inv_n = 1.0 / static_cast<double>(n);
  Eigen::MatrixXd d_logits(c.logits.rows(), n);
  Eigen::MatrixXd d_delay = Eigen::MatrixXd::Zero(1, n);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const int y = batch.labels[ui];
    const double w = weights(y);
    const auto col = c.logits.col(i);
    const double mx = col.maxCoeff();
    const Eigen::VectorXd e = (col.array() - mx).exp().matrix();
    const double s = e.sum();
    total += w * (mx + std::log(s) - col(y));
    d_logits.col(i) = e / s;
    d_logits(y, i) -= 1.0;
    d_logits.col(i) *= w * inv_n;
    if (const auto& gt = batch.delays[ui]) {
      const double r = c.delay(0, i) - *gt;
      total += r * r;
      d_delay(0, i) = 2.0 * r * inv_n;
    }
  }
  if (loss_out) *loss_out = total * inv_n;
  return {std::move(d_logits), std::move(d_delay)};
}

}  // namespace detail

inline double batch_loss(const Params& p, Activation act, const TrainingData& batch, const ClassWeights& weights) {
  if (batch.size() == 0) throw Error(Errc::validation, "empty batch");
  const auto c = forward_batch(p, act, batch.features);
  double l = 0.0;
  detail::output_deltas(c, batch, weights, &l);
  return l;
}

/// Exact gradients of the mean batch loss.
inline LossAndGrad gradients(const Params& p, Activation act, const TrainingData& batch,
                             const ClassWeights& weights) {
  if (batch.size() == 0) throw Error(Errc::validation, "empty batch");
  const auto c = forward_batch(p, act, batch.features);
  LossAndGrad out;
  auto [d_logits, d_delay] = detail::output_deltas(c, batch, weights, &out.loss);

  const auto& top = c.activations.back();
  out.grad.cls.w = d_logits * top.transpose();
  out.grad.cls.b = d_logits.rowwise().sum();
  out.grad.reg.w = d_delay * top.transpose();
  out.grad.reg.b = d_delay.rowwise().sum();
  out.grad.trunk.resize(p.trunk.size());

  Eigen::MatrixXd d_act = p.cls.w.transpose() * d_logits + p.reg.w.transpose() * d_delay;
  for (std::size_t l = p.trunk.size(); l-- > 0;) {
    Eigen::MatrixXd d_pre;
    if (act == Activation::relu) {
      d_pre = d_act.cwiseProduct((c.pre[l].array() > 0.0).cast<double>().matrix());
    } else {
      d_pre = d_act.cwiseProduct((1.0 - c.activations[l + 1].array().square()).matrix());
    }
    out.grad.trunk[l].w = d_pre * c.activations[l].transpose();
    out.grad.trunk[l].b = d_pre.rowwise().sum();
    if (l > 0) d_act = p.trunk[l].w.transpose() * d_pre;
  }
  return out;
}

inline LossAndGrad gradients(const MlpModel& m, const TrainingData& batch, const ClassWeights& weights) {
  return gradients(m.params, m.config.activation, batch, weights);
}

// ---------------------------------------------------------------------------
// Training

namespace detail {

class AdamState {
 public:
  explicit AdamState(const Params& shape) : m_(shape.size(), 0.0), v_(shape.size(), 0.0) {}

  void step(Params& p, const Params& g, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++t_;
    const double c1 = 1.0 - std::pow(b1, t_);
    const double c2 = 1.0 - std::pow(b2, t_);
    std::vector<const Eigen::MatrixXd*> grads;
    g.for_each_tensor([&grads](const Eigen::MatrixXd& t) { grads.push_back(&t); });
    std::size_t pos = 0;
    std::size_t k = 0;
    p.for_each_tensor([&](Eigen::MatrixXd& t) {
      const Eigen::MatrixXd& gt = *grads[k++];
      for (Eigen::Index i = 0; i < t.size(); ++i, ++pos) {
        const double gi = gt.data()[i];
        m_[pos] = b1 * m_[pos] + (1.0 - b1) * gi;
        v_[pos] = b2 * v_[pos] + (1.0 - b2) * gi * gi;
        t.data()[i] -= lr * (m_[pos] / c1) / (std::sqrt(v_[pos] / c2) + eps);
      }
    });
  }

 private:
  std::vector<double> m_;
  std::vector<double> v_;
  int t_ = 0;
};

inline void sgd_step(Params& p, const Params& g, double lr) {
  std::vector<const Eigen::MatrixXd*> grads;
  g.for_each_tensor([&grads](const Eigen::MatrixXd& t) { grads.push_back(&t); });
  std::size_t k = 0;
  p.for_each_tensor([&](Eigen::MatrixXd& t) { t -= lr * *grads[k++]; });
}

inline void decay_weights(Params& p, double factor) {
  for (auto& l : p.trunk) l.w *= factor;
  p.cls.w *= factor;
  p.reg.w *= factor;
}

}  // namespace detail

/// Mini-batch training. A seeded share of the rows is held out and the
/// parameters with the lowest held-out loss are returned; without a held-out
/// split the lowest fitting-set loss decides.
inline MlpModel fit(const MlpConfig& config, const TrainingData& data, const ClassWeights& weights) {
  config.validate();
  data.validate(config.input_dim, config.num_classes);
  if (data.size() == 0) throw Error(Errc::validation, "fit needs at least one sample");

  MlpModel model = make_model(config);
  const auto act = config.activation;
  std::mt19937_64 shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ull);
  detail::AdamState adam(model.params);

  auto check = [](double l, int epoch) {
    if (!std::isfinite(l)) {
      throw Error(Errc::training, "non-finite training loss at epoch " + std::to_string(epoch));
    }
  };

  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto n_val = static_cast<std::size_t>(std::floor(config.validation_fraction * static_cast<double>(data.size())));
  std::optional<TrainingData> held_out;
  TrainingData fitting = data;
  if (n_val > 0) {
    std::mt19937_64 split_rng(config.seed ^ 0xc2b2ae3d27d4eb4full);
    std::shuffle(all.begin(), all.end(), split_rng);
    held_out = data.subset(std::span<const std::size_t>(all).first(n_val));
    std::vector<std::size_t> rest(all.begin() + static_cast<std::ptrdiff_t>(n_val), all.end());
    std::sort(rest.begin(), rest.end());
    fitting = data.subset(rest);
  }

  auto score = [&](int epoch) {
    const double l = batch_loss(model.params, act, fitting, weights);
    check(l, epoch);
    model.loss_history.push_back(l);
    if (!held_out) return l;
    const double v = batch_loss(model.params, act, *held_out, weights);
    check(v, epoch);
    model.validation_history.push_back(v);
    return v;
  };

  double best = score(0);
  Params best_params = model.params;
  int since_best = 0;

  std::vector<std::size_t> order(fitting.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t bs = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      const auto batch = fitting.subset(std::span<const std::size_t>(order).subspan(start, end - start));
      const auto lg = gradients(model.params, act, batch, weights);
      check(lg.loss, epoch);
      if (config.optimizer == Optimizer::adam) {
        adam.step(model.params, lg.grad, config.learning_rate);
      } else {
        detail::sgd_step(model.params, lg.grad, config.learning_rate);
      }
      if (config.weight_decay > 0.0) detail::decay_weights(model.params, 1.0 - config.learning_rate * config.weight_decay);
    }
    const double l = score(epoch);
    if (l <= best) {
      best = l;
      best_params = model.params;
      since_best = 0;
    } else if (config.patience > 0 && ++since_best >= config.patience) {
      break;
    }
  }
  model.params = std::move(best_params);
  return model;
}

inline std::vector<double> predict_proba(const MlpModel& m, std::span<const double> x) {
  const auto out = forward(m, x);
  return softmax(out.logits);
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::ordered_json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::ordered_json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["data"] = std::vector<double>(m.data(), m.data() + m.size());
  return j;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::ordered_json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw Error(Errc::parse, "matrix data size mismatch");
  Eigen::MatrixXd m(rows, cols);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

inline nlohmann::ordered_json to_json(const MlpConfig& c) {
  nlohmann::ordered_json j;
  j["input_dim"] = c.input_dim;
  j["hidden"] = c.hidden;
  j["activation"] = to_string(c.activation);
  j["num_classes"] = c.num_classes;
  j["seed"] = c.seed;
  j["learning_rate"] = c.learning_rate;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["optimizer"] = to_string(c.optimizer);
  j["validation_fraction"] = c.validation_fraction;
  j["patience"] = c.patience;
  j["weight_decay"] = c.weight_decay;
  return j;
}

inline MlpConfig config_from_json(const nlohmann::ordered_json& j) {
  MlpConfig c;
  c.input_dim = j.at("input_dim").get<int>();
  c.hidden = j.at("hidden").get<std::vector<int>>();
  c.activation = parse_activation(j.at("activation").get<std::string>());
  c.num_classes = j.at("num_classes").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  c.validation_fraction = j.value("validation_fraction", 0.0);
  c.patience = j.value("patience", 0);
  c.weight_decay = j.value("weight_decay", 0.0);
  c.validate();
  return c;
}

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::ordered_json to_json(const MlpModel& m) {
  nlohmann::ordered_json j;
  j["format"] = "charm-mlp";
  j["version"] = kModelFormatVersion;
  j["config"] = to_json(m.config);
  j["feature_mean"] = m.train_stats.features.mean;
  j["feature_std"] = m.train_stats.features.std;
  j["boxcox_lambda"] = m.train_stats.delay.lambda;
  j["boxcox_shift"] = m.train_stats.delay.shift;
  auto layers = nlohmann::ordered_json::array();
  for (const auto& l : m.params.trunk) layers.push_back({{"w", matrix_to_json(l.w)}, {"b", matrix_to_json(l.b)}});
  j["trunk"] = layers;
  j["cls"] = {{"w", matrix_to_json(m.params.cls.w)}, {"b", matrix_to_json(m.params.cls.b)}};
  j["reg"] = {{"w", matrix_to_json(m.params.reg.w)}, {"b", matrix_to_json(m.params.reg.b)}};
  j["loss_history"] = m.loss_history;
  j["validation_history"] = m.validation_history;
  return j;
}

inline MlpModel mlp_from_json(const nlohmann::ordered_json& j) {
  if (j.at("format").get<std::string>() != "charm-mlp") throw Error(Errc::parse, "not a charm-mlp model");
  if (j.at("version").get<int>() != kModelFormatVersion) throw Error(Errc::parse, "unsupported model version");
  MlpModel m;
  m.config = config_from_json(j.at("config"));
  m.train_stats.features.mean = j.at("feature_mean").get<std::vector<double>>();
  m.train_stats.features.std = j.at("feature_std").get<std::vector<double>>();
  m.train_stats.delay.lambda = j.at("boxcox_lambda").get<double>();
  m.train_stats.delay.shift = j.at("boxcox_shift").get<double>();
  auto dense = [](const nlohmann::ordered_json& d) { return Dense{matrix_from_json(d.at("w")), matrix_from_json(d.at("b"))}; };
  for (const auto& l : j.at("trunk")) m.params.trunk.push_back(dense(l));
  m.params.cls = dense(j.at("cls"));
  m.params.reg = dense(j.at("reg"));
  m.loss_history = j.at("loss_history").get<std::vector<double>>();
  m.validation_history = j.value("validation_history", std::vector<double>{});
  const Params shape = zero_params(m.config);
  bool shapes_ok = shape.trunk.size() == m.params.trunk.size();
  for (std::size_t i = 0; shapes_ok && i < shape.trunk.size(); ++i) {
    shapes_ok = shape.trunk[i].w.rows() == m.params.trunk[i].w.rows() &&
                shape.trunk[i].w.cols() == m.params.trunk[i].w.cols() &&
                shape.trunk[i].b.rows() == m.params.trunk[i].b.rows();
  }
  shapes_ok = shapes_ok && shape.cls.w.rows() == m.params.cls.w.rows() && shape.cls.w.cols() == m.params.cls.w.cols() &&
              shape.reg.w.cols() == m.params.reg.w.cols();
  if (!shapes_ok) throw Error(Errc::parse, "model parameters do not match config");
  if (!m.params.all_finite()) throw Error(Errc::parse, "model contains non-finite parameters");
  return m;
}

}  // namespace charm::nn
