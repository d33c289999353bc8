#pragma once

#include <atomic>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "minesec/channel.hpp"
#include "minesec/mine.hpp"
#include "minesec/net.hpp"
#include "minesec/optimizer.hpp"

namespace minesec {

// Counts every decoder evaluation in the process. Lets tests prove that a
// training path never touched a decoder.
inline std::atomic<std::uint64_t>& decoder_eval_count() {
  static std::atomic<std::uint64_t> count{0};
  return count;
}

// f(M) -> X^n: embedding, elu hidden layer, linear 2n output, then batch
// power normalization.
struct EncoderModel {
  DenseNet net;
  std::size_t message_count = 0;
  std::size_t block_len = 0;

  static EncoderModel create(std::size_t message_count, std::size_t block_len,
                             std::size_t embed_dim, std::size_t hidden_width, Rng& init) {
    if (message_count < 2) throw std::invalid_argument("EncoderModel: need at least 2 messages");
    if (block_len == 0) throw std::invalid_argument("EncoderModel: block length must be positive");
    EncoderModel enc;
    enc.net = DenseNet(message_count, embed_dim,
                       {{hidden_width, Activation::elu}, {2 * block_len, Activation::linear}},
                       init);
    enc.message_count = message_count;
    enc.block_len = block_len;
    return enc;
  }
};

struct EncodeTrace {
  DenseNet::Cache cache;
  PowerNormTrace norm;
  const Matrix& codewords() const { return norm.output; }
};

inline void check_messages(std::span<const int> messages, std::size_t message_count) {
  if (messages.empty()) throw std::invalid_argument("encode: empty message batch");
  for (int m : messages)
    if (m < 0 || std::size_t(m) >= message_count)
      throw std::invalid_argument("encode: message " + std::to_string(m) + " out of range [0, " +
                                  std::to_string(message_count) + ")");
}

inline EncodeTrace encode_traced(const EncoderModel& enc, std::span<const int> messages) {
  check_messages(messages, enc.message_count);
  EncodeTrace t;
  t.cache = enc.net.forward_cached(messages);
  t.norm = normalize_power_traced(t.cache.output());
  return t;
}

inline Matrix encode(const EncoderModel& enc, std::span<const int> messages) {
  check_messages(messages, enc.message_count);
  return normalize_power(enc.net.forward(messages));
}

// Parameter gradients given dL/d(normalized codewords).
inline DenseNet::Gradients encode_backward(const EncoderModel& enc, const EncodeTrace& trace,
                                           const Matrix& upstream_on_codewords) {
  const Matrix g_raw = power_norm_backward(trace.norm, trace.cache.output(), upstream_on_codewords);
  return enc.net.backward(trace.cache, g_raw);
}

// Every message encoded once; normalization is computed over the full
// message set, so the exported points satisfy the power constraint exactly.
inline Matrix constellation(const EncoderModel& enc) {
  std::vector<int> all(enc.message_count);
  std::iota(all.begin(), all.end(), 0);
  return encode(enc, all);
}

// g(Y^n) / h(Z^n): dense relu hidden layer and a softmax output over the
// message set.
struct DecoderModel {
  DenseNet net;
  Link role = Link::main;

  static DecoderModel create(std::size_t message_count, std::size_t block_len,
                             std::size_t hidden_width, Link role, Rng& init) {
    DecoderModel dec;
    dec.net = DenseNet(2 * block_len,
                       {{hidden_width, Activation::relu}, {message_count, Activation::softmax}},
                       init);
    dec.role = role;
    return dec;
  }
};

// Argmax with ties broken toward the lowest index.
inline std::vector<int> argmax_rows(const Matrix& probs) {
  std::vector<int> out(probs.rows);
  for (std::size_t r = 0; r < probs.rows; ++r) {
    const double* row = probs.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < probs.cols; ++c)
      if (row[c] > row[best]) best = c;
    out[r] = int(best);
  }
  return out;
}

struct DecodeResult {
  Matrix probs;
  std::vector<int> decisions;
};

inline DecodeResult decode(const DecoderModel& dec, const Matrix& observations) {
  decoder_eval_count().fetch_add(1, std::memory_order_relaxed);
  DecodeResult res;
  res.probs = dec.net.forward(observations);
  res.decisions = argmax_rows(res.probs);
  return res;
}

inline double symbol_error_rate(std::span<const int> truth, std::span<const int> decisions) {
  if (truth.empty() || truth.size() != decisions.size())
    throw std::invalid_argument("symbol_error_rate: need equal non-empty sequences");
  std::size_t errors = 0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (truth[i] != decisions[i]) ++errors;
  return double(errors) / double(truth.size());
}

// One cross-entropy training step; returns the pre-step batch loss.
inline double decoder_train_step(DecoderModel& dec, Nadam& opt, const Matrix& observations,
                                 std::span<const int> labels) {
  decoder_eval_count().fetch_add(1, std::memory_order_relaxed);
  DenseNet::Cache cache = dec.net.forward_cached(observations);
  const double ce = cross_entropy(cache.output(), labels);
  const Matrix logit_grad = cross_entropy_logit_gradient(cache.output(), labels);
  DenseNet::Gradients g = dec.net.backward_from_logits(cache, logit_grad);
  opt.step(dec.net, g);
  return ce;
}

}  // namespace minesec
