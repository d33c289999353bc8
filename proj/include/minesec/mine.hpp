#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "minesec/net.hpp"
#include "minesec/optimizer.hpp"
#include "minesec/rng.hpp"

namespace minesec {

enum class Link { main, eve };

inline const char* to_string(Link l) { return l == Link::main ? "main" : "eve"; }

// Joint pairs (x_i, y_i) and marginal pairs (x_i, y_{perm(i)}) where perm is
// a derangement, so no marginal pair accidentally reproduces a joint one.
struct PairBatch {
  Matrix joint;                           // [k x 2d]
  Matrix marginal;                        // [k x 2d]
  std::vector<std::size_t> derangement;   // marginal row i carries y from joint row derangement[i]
  std::size_t feature_width = 0;          // d
};

// Fisher-Yates shuffle, then fixed points are swapped away.
inline std::vector<std::size_t> random_derangement(std::size_t k, Rng& rng) {
  if (k < 2) throw std::invalid_argument("random_derangement: need k >= 2");
  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = k - 1; i > 0; --i)
    std::swap(perm[i], perm[rng.below(i + 1)]);
  for (std::size_t i = 0; i < k; ++i) {
    if (perm[i] == i) std::swap(perm[i], perm[(i + 1) % k]);
  }
  return perm;
}

inline PairBatch make_pair_batch(const Matrix& x, const Matrix& y,
                                 const std::vector<std::size_t>& derangement) {
  if (x.rows != y.rows || x.cols != y.cols)
    throw std::invalid_argument("make_pair_batch: x and y must have equal shape");
  if (x.rows < 2) throw std::invalid_argument("make_pair_batch: need k >= 2");
  if (derangement.size() != x.rows)
    throw std::invalid_argument("make_pair_batch: derangement size mismatch");
  PairBatch pb;
  pb.feature_width = x.cols;
  pb.derangement = derangement;
  pb.joint = concat_cols(x, y);
  pb.marginal = Matrix(x.rows, 2 * x.cols);
  for (std::size_t r = 0; r < x.rows; ++r) {
    double* dst = pb.marginal.row(r);
    const double* xr = x.row(r);
    const double* yr = y.row(derangement[r]);
    for (std::size_t c = 0; c < x.cols; ++c) dst[c] = xr[c];
    for (std::size_t c = 0; c < x.cols; ++c) dst[x.cols + c] = yr[c];
  }
  return pb;
}

inline PairBatch make_pair_batch(const Matrix& x, const Matrix& y, Rng& rng) {
  return make_pair_batch(x, y, random_derangement(x.rows, rng));
}

// Donsker-Varadhan lower-bound estimator for one link: a statistics network
// T mapping a concatenated (x, y) feature pair to a scalar, plus its
// optimizer state.
struct DvEstimator {
  DenseNet stats_net;
  Nadam optimizer;
  Link link = Link::main;

  // optional moving-average denominator for the marginal gradient term
  bool ema_denominator = false;
  double ema_rate = 0.01;
  double log_denominator_ema = 0.0;
  bool ema_ready = false;

  static DvEstimator create(std::size_t feature_width, std::size_t hidden_width, Link link,
                            Rng& init, NadamConfig opt = {}) {
    if (feature_width == 0 || hidden_width == 0)
      throw std::invalid_argument("DvEstimator: widths must be positive");
    DvEstimator est;
    est.stats_net = DenseNet(2 * feature_width,
                             {{hidden_width, Activation::relu}, {1, Activation::linear}}, init);
    est.optimizer = Nadam(est.stats_net, opt);
    est.link = link;
    return est;
  }
};

namespace detail {

struct DvForward {
  DenseNet::Cache joint;
  DenseNet::Cache marginal;
  double mean_joint = 0.0;
  double logmeanexp_marginal = 0.0;
  double estimate = 0.0;
  std::vector<double> marginal_weights;  // softmax of T over the marginal batch
};

inline DvForward dv_forward(const DvEstimator& est, const PairBatch& pairs) {
  if (pairs.joint.rows < 2) throw std::invalid_argument("dv_forward: need k >= 2");
  if (pairs.joint.cols != est.stats_net.input_width())
    throw std::invalid_argument("dv_forward: pair width " + std::to_string(pairs.joint.cols) +
                                " does not match statistics net input " +
                                std::to_string(est.stats_net.input_width()));
  DvForward f;
  f.joint = est.stats_net.forward_cached(pairs.joint);
  f.marginal = est.stats_net.forward_cached(pairs.marginal);
  const Matrix& tj = f.joint.output();
  const Matrix& tm = f.marginal.output();
  if (!all_finite(tj) || !all_finite(tm))
    throw std::runtime_error("dv_forward: non-finite statistics output");

  const std::size_t k = tj.rows;
  for (std::size_t r = 0; r < k; ++r) f.mean_joint += tj(r, 0);
  f.mean_joint /= double(k);

  double mx = tm(0, 0);
  for (std::size_t r = 1; r < k; ++r) mx = std::max(mx, tm(r, 0));
  f.marginal_weights.resize(k);
  double sum = 0.0;
  for (std::size_t r = 0; r < k; ++r) {
    f.marginal_weights[r] = std::exp(tm(r, 0) - mx);
    sum += f.marginal_weights[r];
  }
  for (double& w : f.marginal_weights) w /= sum;
  f.logmeanexp_marginal = mx + std::log(sum / double(k));
  f.estimate = f.mean_joint - f.logmeanexp_marginal;
  return f;
}

}  // namespace detail

// Batch estimate in nats: mean T over joint pairs minus log-mean-exp of T
// over marginal pairs.
inline double dv_estimate(const DvEstimator& est, const PairBatch& pairs) {
  return detail::dv_forward(est, pairs).estimate;
}

// One Nadam ascent step on the batch objective; returns the post-step estimate.
inline double estimator_step(DvEstimator& est, const PairBatch& pairs) {
  detail::DvForward f = detail::dv_forward(est, pairs);
  const std::size_t k = pairs.joint.rows;

  // descent gradient = -d(estimate)/d(theta)
  Matrix up_joint(k, 1, -1.0 / double(k));
  Matrix up_marg(k, 1);
  if (est.ema_denominator) {
    // gradient denominator replaced by a running average of mean(exp T)
    if (!est.ema_ready) {
      est.log_denominator_ema = f.logmeanexp_marginal;
      est.ema_ready = true;
    } else {
      const double a = est.log_denominator_ema + std::log1p(-est.ema_rate);
      const double b = f.logmeanexp_marginal + std::log(est.ema_rate);
      const double m = std::max(a, b);
      est.log_denominator_ema = m + std::log(std::exp(a - m) + std::exp(b - m));
    }
    const double ratio = std::exp(f.logmeanexp_marginal - est.log_denominator_ema);
    for (std::size_t r = 0; r < k; ++r) up_marg(r, 0) = f.marginal_weights[r] * ratio;
  } else {
    for (std::size_t r = 0; r < k; ++r) up_marg(r, 0) = f.marginal_weights[r];
  }

  DenseNet::Gradients g = est.stats_net.backward(f.joint, up_joint);
  g.add_scaled(est.stats_net.backward(f.marginal, up_marg), 1.0);
  est.optimizer.step(est.stats_net, g);
  return dv_estimate(est, pairs);
}

struct DvInputGradients {
  Matrix joint;     // d(estimate)/d(joint inputs)
  Matrix marginal;  // d(estimate)/d(marginal inputs)
  double estimate = 0.0;
};

// Gradients of the batch estimate w.r.t. the pair inputs, with the
// statistics network parameters held fixed.
inline DvInputGradients dv_input_gradients(const DvEstimator& est, const PairBatch& pairs) {
  detail::DvForward f = detail::dv_forward(est, pairs);
  const std::size_t k = pairs.joint.rows;
  Matrix up_joint(k, 1, 1.0 / double(k));
  Matrix up_marg(k, 1);
  for (std::size_t r = 0; r < k; ++r) up_marg(r, 0) = -f.marginal_weights[r];
  DvInputGradients out;
  est.stats_net.backward(f.joint, up_joint, &out.joint);
  est.stats_net.backward(f.marginal, up_marg, &out.marginal);
  out.estimate = f.estimate;
  return out;
}

// Exponential moving average used for reported (smoothed) estimates.
class EmaTracker {
 public:
  explicit EmaTracker(std::size_t window) : rate_(2.0 / (double(window) + 1.0)) {
    if (window == 0) throw std::invalid_argument("EmaTracker: window must be positive");
  }
  double update(double x) {
    value_ = ready_ ? value_ + rate_ * (x - value_) : x;
    ready_ = true;
    return value_;
  }
  double value() const { return value_; }
  bool ready() const { return ready_; }

 private:
  double rate_;
  double value_ = 0.0;
  bool ready_ = false;
};

struct MineBenchResult {
  double rho = 0.0;
  double analytic_nats = 0.0;
  double final_smoothed = 0.0;
  double max_smoothed = 0.0;
  std::vector<std::pair<double, double>> trace;  // (raw, smoothed) per step
};

// Oracle benchmark: train a DV estimator on 1-D jointly Gaussian pairs with
// correlation rho and compare against -0.5*ln(1-rho^2).
inline MineBenchResult mine_gaussian_benchmark(double rho, std::size_t steps, std::size_t k,
                                               std::size_t hidden, std::uint64_t seed,
                                               double learning_rate = 1e-3,
                                               std::size_t ema_window = 50) {
  if (!(rho > -1.0 && rho < 1.0))
    throw std::invalid_argument("mine_gaussian_benchmark: need |rho| < 1");
  Rng init(derive_stream(seed, "bench-init"));
  Rng sample(derive_stream(seed, "bench-sample"));
  Rng shuffle(derive_stream(seed, "bench-shuffle"));
  NadamConfig opt;
  opt.learning_rate = learning_rate;
  DvEstimator est = DvEstimator::create(1, hidden, Link::main, init, opt);
  EmaTracker ema(ema_window);

  MineBenchResult res;
  res.rho = rho;
  res.analytic_nats = -0.5 * std::log1p(-rho * rho);
  res.trace.reserve(steps);
  const double ortho = std::sqrt(1.0 - rho * rho);
  for (std::size_t s = 0; s < steps; ++s) {
    Matrix x(k, 1), y(k, 1);
    for (std::size_t r = 0; r < k; ++r) {
      const double a = sample.normal();
      const double b = sample.normal();
      x(r, 0) = a;
      y(r, 0) = rho * a + ortho * b;
    }
    const double raw = estimator_step(est, make_pair_batch(x, y, shuffle));
    const double smooth = ema.update(raw);
    res.max_smoothed = res.trace.empty() ? smooth : std::max(res.max_smoothed, smooth);
    res.trace.emplace_back(raw, smooth);
  }
  res.final_smoothed = ema.value();
  return res;
}

}  // namespace minesec
