#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "minesec/channel.hpp"
#include "minesec/codec.hpp"
#include "minesec/mine.hpp"

namespace minesec {

enum class Objective { mimi, mice, aece };

inline std::string to_string(Objective o) {
  switch (o) {
    case Objective::mimi: return "mimi";
    case Objective::mice: return "mice";
    case Objective::aece: return "aece";
  }
  return "?";
}

inline Objective objective_from_string(const std::string& s) {
  if (s == "mimi") return Objective::mimi;
  if (s == "mice") return Objective::mice;
  if (s == "aece") return Objective::aece;
  throw std::invalid_argument("unknown objective '" + s + "' (expected mimi, mice or aece)");
}

struct RunConfig {
  double alpha = 0.7;
  std::size_t message_count = 16;
  std::size_t block_len = 1;
  std::size_t k_mine = 64;
  std::size_t k_decoder = 500;
  double learning_rate = 1e-3;
  double train_snr_db_main = 7.0;
  double train_snr_db_eve = 7.0;
  std::size_t phase1_epochs = 5;
  std::size_t phase1_iterations = 500;
  std::size_t phase2_rounds = 2000;
  std::size_t phase2_estimator_steps = 10;
  std::size_t phase3_epochs = 6;
  std::size_t phase3_iterations = 500;
  std::size_t embed_dim = 16;
  std::size_t encoder_hidden = 128;
  std::size_t decoder_hidden = 128;
  std::size_t mine_hidden = 100;
  std::size_t mine_ema_window = 50;
  bool mine_ema_denominator = false;
  double mine_ema_rate = 0.01;
  std::uint64_t seed = 1;
  Objective objective = Objective::mimi;
  double sweep_snr_start_db = 0.0;
  double sweep_snr_stop_db = 21.0;
  double sweep_snr_step_db = 3.0;
  std::size_t sweep_samples = 100000;

  // Phase counts may be zero (a zero-length phase is a no-op); sizes and
  // widths must be positive.
  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0))
      throw std::invalid_argument("config: alpha must be in [0, 1]");
    if (message_count < 2) throw std::invalid_argument("config: message_count must be >= 2");
    if (block_len == 0) throw std::invalid_argument("config: block_len must be >= 1");
    if (k_mine < 2) throw std::invalid_argument("config: k_mine must be >= 2");
    if (k_decoder < 1) throw std::invalid_argument("config: k_decoder must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("config: learning_rate must be > 0");
    if (embed_dim == 0 || encoder_hidden == 0 || decoder_hidden == 0 || mine_hidden == 0)
      throw std::invalid_argument("config: widths must be >= 1");
    if (mine_ema_window == 0) throw std::invalid_argument("config: mine_ema_window must be >= 1");
    if (!(mine_ema_rate > 0.0 && mine_ema_rate <= 1.0))
      throw std::invalid_argument("config: mine_ema_rate must be in (0, 1]");
    if (!(sweep_snr_step_db > 0.0) || sweep_snr_stop_db < sweep_snr_start_db)
      throw std::invalid_argument("config: bad sweep grid");
    if (sweep_samples == 0) throw std::invalid_argument("config: sweep_samples must be >= 1");
  }

  ChannelParams channel_params() const {
    ChannelParams p;
    p.sigma2_main = snr_db_to_sigma2(train_snr_db_main);
    p.sigma2_eve = snr_db_to_sigma2(train_snr_db_eve);
    return p;
  }

  double rate_bits_per_symbol() const {
    return std::log2(double(message_count)) / double(block_len);
  }
};

struct SecrecyObjectiveValue {
  double i_legal = 0.0;
  double i_eve = 0.0;
  double combined = 0.0;
  double alpha = 0.0;
};

// alpha * I(X;Y) - (1 - alpha) * I(X;Z), maximized.
inline double objective_mi_mi(double alpha, double i_legal, double i_eve) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("objective_mi_mi: alpha must be in [0, 1]");
  return alpha * i_legal - (1.0 - alpha) * i_eve;
}

// alpha * I(X;Y) - (1 - alpha) * H_eve, maximized. The eavesdropper term is
// the cross-entropy of Eve's decoder output against the equalized (uniform)
// target, so driving it down pushes Eve toward an uninformative posterior.
inline double objective_mi_ce(double alpha, double i_legal, const Matrix& eve_probs) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("objective_mi_ce: alpha must be in [0, 1]");
  if (eve_probs.rows == 0) throw std::invalid_argument("objective_mi_ce: missing Eve decoder output");
  return alpha * i_legal - (1.0 - alpha) * cross_entropy_uniform(eve_probs);
}

// alpha * CE(bob, labels) + (1 - alpha) * CE(eve, uniform), minimized.
inline double objective_ae_ce(double alpha, const Matrix& bob_probs, const Matrix& eve_probs,
                              std::span<const int> labels) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("objective_ae_ce: alpha must be in [0, 1]");
  if (bob_probs.rows == 0 || eve_probs.rows == 0)
    throw std::invalid_argument("objective_ae_ce: missing decoder output");
  return alpha * cross_entropy(bob_probs, labels) + (1.0 - alpha) * cross_entropy_uniform(eve_probs);
}

// Named per-run randomness streams derived from one master seed.
struct StreamSet {
  std::uint64_t master = 0;
  Rng encoder_init;
  Rng mine0_init;
  Rng mine1_init;
  Rng mine0_shuffle;
  Rng mine1_shuffle;
  Rng messages;
  Rng aux_bob_init;
  Rng aux_eve_init;
  Rng bob_init;
  Rng eve_init;
  GaussianStream channel_main;
  GaussianStream channel_eve;

  static StreamSet from_master(std::uint64_t seed) {
    return StreamSet{
        seed,
        Rng(derive_stream(seed, "encoder-init")),
        Rng(derive_stream(seed, "mine0-init")),
        Rng(derive_stream(seed, "mine1-init")),
        Rng(derive_stream(seed, "mine0-shuffle")),
        Rng(derive_stream(seed, "mine1-shuffle")),
        Rng(derive_stream(seed, "messages")),
        Rng(derive_stream(seed, "aux-bob-init")),
        Rng(derive_stream(seed, "aux-eve-init")),
        Rng(derive_stream(seed, "decoder-bob-init")),
        Rng(derive_stream(seed, "decoder-eve-init")),
        GaussianStream(derive_stream(seed, "channel-B")),
        GaussianStream(derive_stream(seed, "channel-E")),
    };
  }
};

constexpr double kNoValue = std::numeric_limits<double>::quiet_NaN();

struct MineLogRow {
  std::uint64_t step = 0;
  Link link = Link::main;
  double raw = 0.0;
  double smoothed = 0.0;
};

struct TrainLogRow {
  int phase = 0;
  std::uint64_t round = 0;
  std::uint64_t step = 0;
  double i_legal = kNoValue;
  double i_eve = kNoValue;
  double objective = kNoValue;
  double bob_loss = kNoValue;
  double eve_loss = kNoValue;
};

struct Telemetry {
  std::vector<MineLogRow> mine;
  std::vector<TrainLogRow> train;
};

struct EstimatorPair {
  DvEstimator mi0;  // legal link, I(X;Y)
  DvEstimator mi1;  // eavesdropper link, I(X;Z)
  EmaTracker ema0;
  EmaTracker ema1;
  std::uint64_t steps_done = 0;
  bool phase1_complete = false;
};

inline EstimatorPair make_estimators(const RunConfig& cfg, StreamSet& streams) {
  NadamConfig opt;
  opt.learning_rate = cfg.learning_rate;
  const std::size_t feat = 2 * cfg.block_len;
  EstimatorPair est{
      DvEstimator::create(feat, cfg.mine_hidden, Link::main, streams.mine0_init, opt),
      DvEstimator::create(feat, cfg.mine_hidden, Link::eve, streams.mine1_init, opt),
      EmaTracker(cfg.mine_ema_window),
      EmaTracker(cfg.mine_ema_window),
  };
  est.mi0.ema_denominator = cfg.mine_ema_denominator;
  est.mi0.ema_rate = cfg.mine_ema_rate;
  est.mi1.ema_denominator = cfg.mine_ema_denominator;
  est.mi1.ema_rate = cfg.mine_ema_rate;
  return est;
}

namespace detail {

inline std::vector<int> sample_messages(std::size_t k, std::size_t message_count, Rng& rng) {
  std::vector<int> msgs(k);
  for (std::size_t i = 0; i < k; ++i) msgs[i] = int(rng.below(message_count));
  return msgs;
}

struct ChainBatch {
  std::vector<int> messages;
  Matrix x;  // normalized codewords
  Matrix y;  // Bob's observation
  Matrix z;  // Eve's observation
};

inline ChainBatch sample_chain(const RunConfig& cfg, const EncoderModel& enc, std::size_t k,
                               StreamSet& streams) {
  const ChannelParams ch = cfg.channel_params();
  ChainBatch b;
  b.messages = sample_messages(k, cfg.message_count, streams.messages);
  b.x = encode(enc, b.messages);
  b.y = main_channel(b.x, ch, streams.channel_main);
  b.z = eve_channel(b.y, ch, streams.channel_eve);
  return b;
}

// One estimator update on each link from a fresh batch through the frozen
// encoder.
inline void estimator_refresh_step(const RunConfig& cfg, const EncoderModel& enc,
                                   EstimatorPair& est, StreamSet& streams, Telemetry& tel) {
  ChainBatch b = sample_chain(cfg, enc, cfg.k_mine, streams);
  const double i0 = estimator_step(est.mi0, make_pair_batch(b.x, b.y, streams.mine0_shuffle));
  const double i1 = estimator_step(est.mi1, make_pair_batch(b.x, b.z, streams.mine1_shuffle));
  ++est.steps_done;
  tel.mine.push_back({est.steps_done, Link::main, i0, est.ema0.update(i0)});
  tel.mine.push_back({est.steps_done, Link::eve, i1, est.ema1.update(i1)});
}

}  // namespace detail

// Everything one encoder update needs, drawn once so the objective is a pure
// function of the encoder parameters (the sampled noise is held fixed within
// the step).
struct EncoderStepSample {
  std::vector<int> messages;
  Matrix noise_main;                      // additive noise forming Y
  Matrix noise_eve;                       // additional noise forming Z
  std::vector<std::size_t> perm_main;     // derangement for the legal-link pairs
  std::vector<std::size_t> perm_eve;      // derangement for the eavesdropper pairs
};

inline EncoderStepSample draw_encoder_step_sample(const RunConfig& cfg, std::size_t k,
                                                  StreamSet& streams) {
  const ChannelParams ch = cfg.channel_params();
  EncoderStepSample s;
  s.messages = detail::sample_messages(k, cfg.message_count, streams.messages);
  const Matrix zeros(k, 2 * cfg.block_len);
  s.noise_main = streams.channel_main.add_complex_noise(zeros, ch.sigma2_main);
  s.noise_eve = streams.channel_eve.add_complex_noise(zeros, ch.sigma2_eve);
  s.perm_main = random_derangement(k, streams.mine0_shuffle);
  s.perm_eve = random_derangement(k, streams.mine1_shuffle);
  return s;
}

struct EncoderObjectiveEval {
  double combined = kNoValue;  // value of the configured objective/loss
  double i_legal = kNoValue;
  double i_eve = kNoValue;
  double bob_ce = kNoValue;
  double eve_ce = kNoValue;
  DenseNet::Gradients encoder_grads;  // d(combined)/d(encoder parameters)
};

namespace detail {

inline Matrix add_matrices(const Matrix& a, const Matrix& b) {
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data[i] += b.data[i];
  return c;
}

// Route DV input gradients back onto the codeword batch. Joint pair i reads
// (x_i, x_i + noise_i); marginal pair i reads (x_i, x_{perm(i)} + noise_{perm(i)}).
inline void accumulate_dv_codeword_grads(const DvInputGradients& g,
                                         const std::vector<std::size_t>& perm, double weight,
                                         Matrix& dx) {
  const std::size_t d = dx.cols;
  for (std::size_t r = 0; r < dx.rows; ++r) {
    const double* j = g.joint.row(r);
    const double* m = g.marginal.row(r);
    double* xr = dx.row(r);
    for (std::size_t c = 0; c < d; ++c) xr[c] += weight * (j[c] + j[d + c] + m[c]);
    double* xp = dx.row(perm[r]);
    for (std::size_t c = 0; c < d; ++c) xp[c] += weight * m[d + c];
  }
}

}  // namespace detail

// Evaluates the configured secrecy objective and its encoder gradients for a
// fixed sample. Estimator and decoder parameters are frozen; gradients flow
// through them into the codewords and back through the power normalization.
inline EncoderObjectiveEval eval_encoder_objective(
    const RunConfig& cfg, const EncoderModel& enc, const EstimatorPair* est,
    const DecoderModel* aux_bob, const DecoderModel* aux_eve, const EncoderStepSample& sample) {
  const EncodeTrace trace = encode_traced(enc, sample.messages);
  const Matrix& x = trace.codewords();
  const Matrix y = detail::add_matrices(x, sample.noise_main);

  EncoderObjectiveEval out;
  Matrix dx(x.rows, x.cols);

  switch (cfg.objective) {
    case Objective::mimi: {
      if (!est) throw std::invalid_argument("eval_encoder_objective: estimators required");
      const Matrix z = detail::add_matrices(y, sample.noise_eve);
      const DvInputGradients g0 =
          dv_input_gradients(est->mi0, make_pair_batch(x, y, sample.perm_main));
      const DvInputGradients g1 =
          dv_input_gradients(est->mi1, make_pair_batch(x, z, sample.perm_eve));
      out.i_legal = g0.estimate;
      out.i_eve = g1.estimate;
      out.combined = objective_mi_mi(cfg.alpha, g0.estimate, g1.estimate);
      detail::accumulate_dv_codeword_grads(g0, sample.perm_main, cfg.alpha, dx);
      detail::accumulate_dv_codeword_grads(g1, sample.perm_eve, -(1.0 - cfg.alpha), dx);
      break;
    }
    case Objective::mice: {
      if (!est) throw std::invalid_argument("eval_encoder_objective: estimators required");
      if (!aux_eve) throw std::invalid_argument("eval_encoder_objective: missing Eve decoder");
      const Matrix z = detail::add_matrices(y, sample.noise_eve);
      const DvInputGradients g0 =
          dv_input_gradients(est->mi0, make_pair_batch(x, y, sample.perm_main));
      out.i_legal = g0.estimate;
      detail::accumulate_dv_codeword_grads(g0, sample.perm_main, cfg.alpha, dx);

      decoder_eval_count().fetch_add(1, std::memory_order_relaxed);
      const DenseNet::Cache cache = aux_eve->net.forward_cached(z);
      out.eve_ce = cross_entropy_uniform(cache.output());
      out.combined = cfg.alpha * g0.estimate - (1.0 - cfg.alpha) * out.eve_ce;
      Matrix dz;
      aux_eve->net.backward_from_logits(
          cache, cross_entropy_uniform_logit_gradient(cache.output()), &dz);
      for (std::size_t i = 0; i < dx.size(); ++i)
        dx.data[i] += -(1.0 - cfg.alpha) * dz.data[i];
      break;
    }
    case Objective::aece: {
      if (!aux_bob || !aux_eve)
        throw std::invalid_argument("eval_encoder_objective: missing decoder");
      const Matrix z = detail::add_matrices(y, sample.noise_eve);
      decoder_eval_count().fetch_add(2, std::memory_order_relaxed);
      const DenseNet::Cache cache_b = aux_bob->net.forward_cached(y);
      const DenseNet::Cache cache_e = aux_eve->net.forward_cached(z);
      out.bob_ce = cross_entropy(cache_b.output(), sample.messages);
      out.eve_ce = cross_entropy_uniform(cache_e.output());
      out.combined = cfg.alpha * out.bob_ce + (1.0 - cfg.alpha) * out.eve_ce;
      Matrix dy, dz;
      aux_bob->net.backward_from_logits(
          cache_b, cross_entropy_logit_gradient(cache_b.output(), sample.messages), &dy);
      aux_eve->net.backward_from_logits(
          cache_e, cross_entropy_uniform_logit_gradient(cache_e.output()), &dz);
      for (std::size_t i = 0; i < dx.size(); ++i)
        dx.data[i] += cfg.alpha * dy.data[i] + (1.0 - cfg.alpha) * dz.data[i];
      break;
    }
  }

  if (!std::isfinite(out.combined))
    throw std::runtime_error("eval_encoder_objective: non-finite objective");
  out.encoder_grads = encode_backward(enc, trace, dx);
  return out;
}

// Phase 1: train both estimators against the frozen, randomly initialized
// encoder for phase1_epochs * phase1_iterations fresh batches.
inline void phase1_pretrain(const RunConfig& cfg, const EncoderModel& encoder,
                            EstimatorPair& est, StreamSet& streams, Telemetry& tel) {
  cfg.validate();
  if (cfg.objective != Objective::aece) {
    for (std::size_t e = 0; e < cfg.phase1_epochs; ++e) {
      for (std::size_t it = 0; it < cfg.phase1_iterations; ++it)
        detail::estimator_refresh_step(cfg, encoder, est, streams, tel);
      if (est.steps_done > 0)
        tel.train.push_back({1, e + 1, est.steps_done, est.ema0.value(), est.ema1.value(),
                             kNoValue, kNoValue, kNoValue});
    }
  }
  est.phase1_complete = true;
}

struct Phase2Result {
  bool complete = false;
  std::uint64_t encoder_steps = 0;
  double final_objective = kNoValue;
};

// Phase 2: alternate estimator refresh steps with single encoder updates.
// The comparison objectives (mice, aece) interleave one adversarial decoder
// step per encoder step.
inline Phase2Result phase2_alternate(const RunConfig& cfg, EncoderModel& encoder,
                                     EstimatorPair& est, StreamSet& streams, Telemetry& tel) {
  cfg.validate();
  if (!est.phase1_complete)
    throw std::logic_error("phase2_alternate: phase-1 estimator state required");

  NadamConfig opt;
  opt.learning_rate = cfg.learning_rate;
  Nadam encoder_opt(encoder.net, opt);

  std::optional<DecoderModel> aux_bob;
  std::optional<DecoderModel> aux_eve;
  std::optional<Nadam> aux_bob_opt;
  std::optional<Nadam> aux_eve_opt;
  if (cfg.objective == Objective::mice || cfg.objective == Objective::aece) {
    aux_eve = DecoderModel::create(cfg.message_count, cfg.block_len, cfg.decoder_hidden,
                                   Link::eve, streams.aux_eve_init);
    aux_eve_opt = Nadam(aux_eve->net, opt);
  }
  if (cfg.objective == Objective::aece) {
    aux_bob = DecoderModel::create(cfg.message_count, cfg.block_len, cfg.decoder_hidden,
                                   Link::main, streams.aux_bob_init);
    aux_bob_opt = Nadam(aux_bob->net, opt);
  }

  Phase2Result res;
  EmaTracker objective_ema(cfg.mine_ema_window);
  const bool maximize = cfg.objective != Objective::aece;
  const std::size_t enc_batch = cfg.objective == Objective::aece ? cfg.k_decoder : cfg.k_mine;

  for (std::uint64_t round = 1; round <= cfg.phase2_rounds; ++round) {
    if (cfg.objective != Objective::aece)
      for (std::size_t s = 0; s < cfg.phase2_estimator_steps; ++s)
        detail::estimator_refresh_step(cfg, encoder, est, streams, tel);

    double aux_bob_ce = kNoValue;
    double aux_eve_ce = kNoValue;
    if (aux_eve) {
      detail::ChainBatch b = detail::sample_chain(cfg, encoder, cfg.k_decoder, streams);
      if (aux_bob) aux_bob_ce = decoder_train_step(*aux_bob, *aux_bob_opt, b.y, b.messages);
      aux_eve_ce = decoder_train_step(*aux_eve, *aux_eve_opt, b.z, b.messages);
    }

    const EncoderStepSample sample = draw_encoder_step_sample(cfg, enc_batch, streams);
    EncoderObjectiveEval eval = eval_encoder_objective(
        cfg, encoder, &est, aux_bob ? &*aux_bob : nullptr, aux_eve ? &*aux_eve : nullptr, sample);
    if (maximize) eval.encoder_grads.scale(-1.0);
    encoder_opt.step(encoder.net, eval.encoder_grads);

    ++res.encoder_steps;
    res.final_objective = objective_ema.update(eval.combined);
    tel.train.push_back({2, round, est.steps_done,
                         est.ema0.ready() ? est.ema0.value() : eval.i_legal,
                         est.ema1.ready() ? est.ema1.value() : eval.i_eve, res.final_objective,
                         std::isnan(aux_bob_ce) ? eval.bob_ce : aux_bob_ce,
                         std::isnan(aux_eve_ce) ? eval.eve_ce : aux_eve_ce});
  }
  res.complete = true;
  return res;
}

struct DecoderPair {
  DecoderModel bob;
  DecoderModel eve;
  double final_bob_ce = kNoValue;
  double final_eve_ce = kNoValue;
};

// Phase 3: train fresh decoders against the frozen encoder — Bob for
// reliability, Eve to verify security.
inline DecoderPair phase3_train_decoders(const RunConfig& cfg, const EncoderModel& encoder,
                                         const Phase2Result& phase2, StreamSet& streams,
                                         Telemetry& tel) {
  cfg.validate();
  if (!phase2.complete)
    throw std::logic_error("phase3_train_decoders: phase-2 encoder required");

  NadamConfig opt;
  opt.learning_rate = cfg.learning_rate;
  DecoderPair dec{
      DecoderModel::create(cfg.message_count, cfg.block_len, cfg.decoder_hidden, Link::main,
                           streams.bob_init),
      DecoderModel::create(cfg.message_count, cfg.block_len, cfg.decoder_hidden, Link::eve,
                           streams.eve_init),
  };
  Nadam bob_opt(dec.bob.net, opt);
  Nadam eve_opt(dec.eve.net, opt);
  EmaTracker bob_ema(cfg.mine_ema_window);
  EmaTracker eve_ema(cfg.mine_ema_window);

  std::uint64_t step = 0;
  for (std::size_t e = 1; e <= cfg.phase3_epochs; ++e) {
    for (std::size_t it = 0; it < cfg.phase3_iterations; ++it) {
      detail::ChainBatch b = detail::sample_chain(cfg, encoder, cfg.k_decoder, streams);
      const double ce_b = decoder_train_step(dec.bob, bob_opt, b.y, b.messages);
      const double ce_e = decoder_train_step(dec.eve, eve_opt, b.z, b.messages);
      dec.final_bob_ce = bob_ema.update(ce_b);
      dec.final_eve_ce = eve_ema.update(ce_e);
      ++step;
      if (step % 10 == 0 || (e == cfg.phase3_epochs && it + 1 == cfg.phase3_iterations))
        tel.train.push_back({3, e, step, kNoValue, kNoValue, kNoValue, ce_b, ce_e});
    }
  }
  return dec;
}

struct TrainedSystem {
  RunConfig config;
  EncoderModel encoder;
  EstimatorPair estimators;
  DecoderPair decoders;
  Telemetry telemetry;
  double phase1_i_legal = kNoValue;  // smoothed estimates at the end of phase 1
  double phase1_i_eve = kNoValue;
};

inline TrainedSystem run_training(const RunConfig& cfg) {
  cfg.validate();
  StreamSet streams = StreamSet::from_master(cfg.seed);
  EncoderModel encoder = EncoderModel::create(cfg.message_count, cfg.block_len, cfg.embed_dim,
                                              cfg.encoder_hidden, streams.encoder_init);
  EstimatorPair est = make_estimators(cfg, streams);
  Telemetry tel;
  phase1_pretrain(cfg, encoder, est, streams, tel);
  const double p1_legal = est.ema0.ready() ? est.ema0.value() : kNoValue;
  const double p1_eve = est.ema1.ready() ? est.ema1.value() : kNoValue;
  const Phase2Result p2 = phase2_alternate(cfg, encoder, est, streams, tel);
  DecoderPair dec = phase3_train_decoders(cfg, encoder, p2, streams, tel);
  return TrainedSystem{cfg,          std::move(encoder), std::move(est),
                       std::move(dec), std::move(tel),    p1_legal,
                       p1_eve};
}

}  // namespace minesec
