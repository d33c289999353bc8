#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <utility>

#include "minesec/matrix.hpp"
#include "minesec/rng.hpp"

namespace minesec {

// Codeword batches are real matrices [k x 2n] holding n complex symbols per
// row interleaved as (re_1, im_1, ..., re_n, im_n).

struct ChannelParams {
  double sigma2_main = 0.0;  // total complex noise variance per symbol, Bob link
  double sigma2_eve = 0.0;   // additional variance on the Eve cascade
  double power = 1.0;

  void validate() const {
    if (sigma2_main < 0.0 || sigma2_eve < 0.0)
      throw std::invalid_argument("ChannelParams: noise variances must be >= 0");
    if (!(power > 0.0)) throw std::invalid_argument("ChannelParams: power must be positive");
  }
};

inline double snr_db_to_sigma2(double snr_db, double power = 1.0) {
  if (!(power > 0.0)) throw std::invalid_argument("snr_db_to_sigma2: power must be positive");
  return power * std::pow(10.0, -snr_db / 10.0);
}

inline double sigma2_to_snr_db(double sigma2, double power = 1.0) {
  if (!(sigma2 > 0.0) || !(power > 0.0))
    throw std::invalid_argument("sigma2_to_snr_db: arguments must be positive");
  return 10.0 * std::log10(power / sigma2);
}

// Mean per-symbol power: sum of squared reals over (rows * n) symbols.
inline double mean_symbol_power(const Matrix& x) {
  if (x.rows == 0 || x.cols == 0 || x.cols % 2 != 0)
    throw std::invalid_argument("mean_symbol_power: batch must be [k x 2n]");
  double sum = 0.0;
  for (double v : x.data) sum += v * v;
  return sum / (double(x.rows) * double(x.cols) / 2.0);
}

struct PowerNormTrace {
  Matrix output;
  double scale = 1.0;
  double mean_power = 0.0;
};

// Scale the whole batch by one scalar so the batch-average per-symbol power
// is exactly 1.
inline PowerNormTrace normalize_power_traced(const Matrix& x) {
  const double p = mean_symbol_power(x);
  if (p == 0.0) throw std::invalid_argument("normalize_power: all-zero batch, scale undefined");
  PowerNormTrace t;
  t.mean_power = p;
  t.scale = 1.0 / std::sqrt(p);
  t.output = x;
  for (double& v : t.output.data) v *= t.scale;
  return t;
}

inline Matrix normalize_power(const Matrix& x) { return normalize_power_traced(x).output; }

// dL/d(input) of the normalization given dL/d(output). The scale direction
// is projected out, so the gradient of the batch power itself is zero.
inline Matrix power_norm_backward(const PowerNormTrace& t, const Matrix& input,
                                  const Matrix& upstream) {
  if (!input.same_shape(upstream))
    throw std::invalid_argument("power_norm_backward: shape mismatch");
  const double kn = double(input.rows) * double(input.cols) / 2.0;
  double dot = 0.0;
  for (std::size_t i = 0; i < input.size(); ++i) dot += upstream.data[i] * input.data[i];
  const double s = t.scale;
  const double coef = s * s * s / kn * dot;
  Matrix g(input.rows, input.cols);
  for (std::size_t i = 0; i < input.size(); ++i)
    g.data[i] = s * upstream.data[i] - coef * input.data[i];
  return g;
}

// Counter-based Gaussian noise: the draw for symbol `index` is a pure
// function of (seed, index), so streams are position-addressable and
// per-symbol independence is directly testable.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : seed_(seed) {}

  static std::pair<double, double> standard_pair(std::uint64_t seed, std::uint64_t index) {
    const std::uint64_t a = mix64(seed + (2 * index + 1) * kStreamIncrement);
    const std::uint64_t b = mix64(seed + (2 * index + 2) * kStreamIncrement);
    const double u1 = double((a >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = double(b >> 11) * 0x1.0p-53;        // [0, 1)
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(ang), r * std::sin(ang)};
  }

  // y = x + CN(0, sigma2) per symbol; sigma2/2 per real component.
  Matrix add_complex_noise(const Matrix& x, double sigma2) {
    if (x.cols % 2 != 0) throw std::invalid_argument("add_complex_noise: batch must be [k x 2n]");
    if (sigma2 < 0.0) throw std::invalid_argument("add_complex_noise: sigma2 must be >= 0");
    Matrix y = x;
    const std::size_t symbols_per_row = x.cols / 2;
    if (sigma2 == 0.0) {
      next_symbol_ += x.rows * symbols_per_row;
      return y;
    }
    const double comp = std::sqrt(sigma2 / 2.0);
    for (std::size_t r = 0; r < x.rows; ++r) {
      double* row = y.row(r);
      for (std::size_t s = 0; s < symbols_per_row; ++s) {
        const auto [g1, g2] = standard_pair(seed_, next_symbol_++);
        row[2 * s] += comp * g1;
        row[2 * s + 1] += comp * g2;
      }
    }
    return y;
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return next_symbol_; }
  void seek(std::uint64_t symbol_index) { next_symbol_ = symbol_index; }

 private:
  std::uint64_t seed_;
  std::uint64_t next_symbol_ = 0;
};

// Y = X + N_B
inline Matrix main_channel(const Matrix& x, const ChannelParams& params, GaussianStream& noise) {
  params.validate();
  return noise.add_complex_noise(x, params.sigma2_main);
}

// Z = Y + N_E, independent of N_B; Z given X sees sigma2_main + sigma2_eve.
inline Matrix eve_channel(const Matrix& y, const ChannelParams& params, GaussianStream& noise) {
  params.validate();
  return noise.add_complex_noise(y, params.sigma2_eve);
}

}  // namespace minesec
