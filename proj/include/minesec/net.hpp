#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "minesec/matrix.hpp"
#include "minesec/rng.hpp"

namespace minesec {

enum class Activation { relu, elu, linear, softmax };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::elu: return "elu";
    case Activation::linear: return "linear";
    case Activation::softmax: return "softmax";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "elu") return Activation::elu;
  if (s == "linear") return Activation::linear;
  if (s == "softmax") return Activation::softmax;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

struct LayerSpec {
  std::size_t width = 0;
  Activation act = Activation::linear;
};

namespace detail {

inline void apply_activation(Matrix& m, Activation act) {
  switch (act) {
    case Activation::linear:
      return;
    case Activation::relu:
      for (double& v : m.data) v = v > 0.0 ? v : 0.0;
      return;
    case Activation::elu:
      for (double& v : m.data) v = v >= 0.0 ? v : std::expm1(v);
      return;
    case Activation::softmax:
      for (std::size_t r = 0; r < m.rows; ++r) {
        double* row = m.row(r);
        double mx = row[0];
        for (std::size_t c = 1; c < m.cols; ++c) mx = std::max(mx, row[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < m.cols; ++c) {
          row[c] = std::exp(row[c] - mx);
          sum += row[c];
        }
        for (std::size_t c = 0; c < m.cols; ++c) row[c] /= sum;
      }
      return;
  }
}

// dL/d(pre-activation) from dL/d(post-activation)
inline Matrix activation_backward(const Matrix& grad, const Matrix& pre, const Matrix& post,
                                  Activation act) {
  Matrix dz = grad;
  switch (act) {
    case Activation::linear:
      return dz;
    case Activation::relu:
      for (std::size_t i = 0; i < dz.size(); ++i)
        if (pre.data[i] <= 0.0) dz.data[i] = 0.0;
      return dz;
    case Activation::elu:
      for (std::size_t i = 0; i < dz.size(); ++i)
        if (pre.data[i] < 0.0) dz.data[i] *= post.data[i] + 1.0;
      return dz;
    case Activation::softmax:
      for (std::size_t r = 0; r < dz.rows; ++r) {
        const double* g = grad.row(r);
        const double* p = post.row(r);
        double dot = 0.0;
        for (std::size_t c = 0; c < dz.cols; ++c) dot += g[c] * p[c];
        double* out = dz.row(r);
        for (std::size_t c = 0; c < dz.cols; ++c) out[c] = p[c] * (g[c] - dot);
      }
      return dz;
  }
  return dz;
}

}  // namespace detail

// Feed-forward chain: optional embedding lookup followed by dense layers.
// This is the only network topology used anywhere in the project.
class DenseNet {
 public:
  struct Layer {
    Matrix weight;  // [out x in]
    std::vector<double> bias;
    Activation act = Activation::linear;
  };

  struct Gradients {
    Matrix embedding;  // zero-size when the net has no embedding
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;

    void scale(double s) {
      for (double& v : embedding.data) v *= s;
      for (Matrix& w : weights)
        for (double& v : w.data) v *= s;
      for (auto& b : biases)
        for (double& v : b) v *= s;
    }

    void add_scaled(const Gradients& o, double s) {
      for (std::size_t i = 0; i < embedding.size(); ++i) embedding.data[i] += s * o.embedding.data[i];
      for (std::size_t l = 0; l < weights.size(); ++l) {
        for (std::size_t i = 0; i < weights[l].size(); ++i)
          weights[l].data[i] += s * o.weights[l].data[i];
        for (std::size_t i = 0; i < biases[l].size(); ++i) biases[l][i] += s * o.biases[l][i];
      }
    }

    bool finite() const {
      if (!all_finite(embedding)) return false;
      for (const Matrix& w : weights)
        if (!all_finite(w)) return false;
      for (const auto& b : biases)
        for (double v : b)
          if (!std::isfinite(v)) return false;
      return true;
    }
  };

  struct Cache {
    std::vector<int> ids;      // set when the net is embedding-fronted
    Matrix input;              // real input fed to the first dense layer
    std::vector<Matrix> pre;   // pre-activations per layer
    std::vector<Matrix> post;  // post-activations per layer
    const Matrix& output() const { return post.back(); }
  };

  DenseNet() = default;

  DenseNet(std::size_t input_width, const std::vector<LayerSpec>& specs, Rng& init) {
    build(input_width, specs, &init);
  }

  DenseNet(std::size_t vocab, std::size_t embed_dim, const std::vector<LayerSpec>& specs,
           Rng& init) {
    init_embedding(vocab, embed_dim, &init);
    build(embed_dim, specs, &init);
  }

  // zero-initialized nets, used by the weight loader
  static DenseNet with_shape(std::size_t input_width, const std::vector<LayerSpec>& specs) {
    DenseNet n;
    n.build(input_width, specs, nullptr);
    return n;
  }
  static DenseNet with_embedded_shape(std::size_t vocab, std::size_t embed_dim,
                                      const std::vector<LayerSpec>& specs) {
    DenseNet n;
    n.init_embedding(vocab, embed_dim, nullptr);
    n.build(embed_dim, specs, nullptr);
    return n;
  }

  bool has_embedding() const { return embedding_.rows > 0; }
  std::size_t vocab_size() const { return embedding_.rows; }
  std::size_t embed_dim() const { return embedding_.cols; }
  std::size_t input_width() const { return layers_.front().weight.cols; }
  std::size_t output_width() const { return layers_.back().weight.rows; }

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  const Matrix& embedding() const { return embedding_; }
  Matrix& embedding() { return embedding_; }

  Matrix forward(const Matrix& input) const {
    check_real_input(input);
    Matrix cur = input;
    for (const Layer& l : layers_) cur = layer_forward(cur, l);
    return cur;
  }

  Matrix forward(std::span<const int> ids) const { return forward_ids_impl(ids); }

  Cache forward_cached(const Matrix& input) const {
    check_real_input(input);
    Cache c;
    c.input = input;
    run_layers(c);
    return c;
  }

  Cache forward_cached(std::span<const int> ids) const {
    Cache c;
    c.ids.assign(ids.begin(), ids.end());
    c.input = embed(ids);
    run_layers(c);
    return c;
  }

  // Parameter gradients for upstream = dL/d(output). When input_grad is
  // non-null it receives dL/d(input of the first dense layer).
  Gradients backward(const Cache& cache, const Matrix& upstream,
                     Matrix* input_grad = nullptr) const {
    return backward_impl(cache, upstream, false, input_grad);
  }

  // Same, but upstream is dL/d(final pre-activation). This skips the final
  // activation derivative and is the stable path for fused softmax losses.
  Gradients backward_from_logits(const Cache& cache, const Matrix& upstream,
                                 Matrix* input_grad = nullptr) const {
    return backward_impl(cache, upstream, true, input_grad);
  }

  Gradients zero_gradients() const {
    Gradients g;
    if (has_embedding()) g.embedding = Matrix(embedding_.rows, embedding_.cols);
    for (const Layer& l : layers_) {
      g.weights.emplace_back(l.weight.rows, l.weight.cols);
      g.biases.emplace_back(l.bias.size(), 0.0);
    }
    return g;
  }

  std::size_t parameter_count() const {
    std::size_t n = embedding_.size();
    for (const Layer& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
  }

  // embedding first, then per layer weight (row-major) and bias
  std::vector<double> flat_parameters() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    out.insert(out.end(), embedding_.data.begin(), embedding_.data.end());
    for (const Layer& l : layers_) {
      out.insert(out.end(), l.weight.data.begin(), l.weight.data.end());
      out.insert(out.end(), l.bias.begin(), l.bias.end());
    }
    return out;
  }

  void set_flat_parameters(std::span<const double> flat) {
    if (flat.size() != parameter_count())
      throw std::invalid_argument("set_flat_parameters: expected " +
                                  std::to_string(parameter_count()) + " values, got " +
                                  std::to_string(flat.size()));
    std::size_t i = 0;
    for (double& v : embedding_.data) v = flat[i++];
    for (Layer& l : layers_) {
      for (double& v : l.weight.data) v = flat[i++];
      for (double& v : l.bias) v = flat[i++];
    }
  }

 private:
  Matrix embedding_;
  std::vector<Layer> layers_;

  void init_embedding(std::size_t vocab, std::size_t embed_dim, Rng* init) {
    if (vocab == 0 || embed_dim == 0)
      throw std::invalid_argument("DenseNet: embedding dimensions must be positive");
    embedding_ = Matrix(vocab, embed_dim);
    if (init) {
      const double lim = std::sqrt(6.0 / double(vocab + embed_dim));
      for (double& v : embedding_.data) v = init->uniform(-lim, lim);
    }
  }

  void build(std::size_t input_width, const std::vector<LayerSpec>& specs, Rng* init) {
    if (specs.empty()) throw std::invalid_argument("DenseNet: at least one layer required");
    if (input_width == 0) throw std::invalid_argument("DenseNet: input width must be positive");
    std::size_t in = input_width;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      if (specs[i].width == 0)
        throw std::invalid_argument("DenseNet: layer width must be positive");
      if (specs[i].act == Activation::softmax && i + 1 != specs.size())
        throw std::invalid_argument("DenseNet: softmax is allowed only on the final layer");
      Layer l;
      l.weight = Matrix(specs[i].width, in);
      l.bias.assign(specs[i].width, 0.0);
      l.act = specs[i].act;
      if (init) {
        const double lim = std::sqrt(6.0 / double(in + specs[i].width));
        for (double& v : l.weight.data) v = init->uniform(-lim, lim);
      }
      layers_.push_back(std::move(l));
      in = specs[i].width;
    }
  }

  void check_real_input(const Matrix& input) const {
    if (has_embedding())
      throw std::invalid_argument("DenseNet: this net takes message ids, not a real batch");
    if (input.rows == 0)
      throw std::invalid_argument("DenseNet: empty input batch");
    if (input.cols != input_width())
      throw std::invalid_argument("DenseNet: input width " + std::to_string(input.cols) +
                                  " does not match net input width " +
                                  std::to_string(input_width()));
  }

  Matrix embed(std::span<const int> ids) const {
    if (!has_embedding())
      throw std::invalid_argument("DenseNet: this net has no embedding, pass a real batch");
    if (ids.empty()) throw std::invalid_argument("DenseNet: empty id batch");
    Matrix x(ids.size(), embedding_.cols);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      if (ids[r] < 0 || std::size_t(ids[r]) >= embedding_.rows)
        throw std::invalid_argument("DenseNet: id " + std::to_string(ids[r]) +
                                    " out of range [0, " + std::to_string(embedding_.rows) + ")");
      const double* src = embedding_.row(std::size_t(ids[r]));
      double* dst = x.row(r);
      for (std::size_t c = 0; c < x.cols; ++c) dst[c] = src[c];
    }
    return x;
  }

  Matrix forward_ids_impl(std::span<const int> ids) const {
    Matrix cur = embed(ids);
    for (const Layer& l : layers_) cur = layer_forward(cur, l);
    return cur;
  }

  static Matrix layer_forward(const Matrix& input, const Layer& l) {
    Matrix z = matmul_nt(input, l.weight);
    for (std::size_t r = 0; r < z.rows; ++r) {
      double* row = z.row(r);
      for (std::size_t c = 0; c < z.cols; ++c) row[c] += l.bias[c];
    }
    detail::apply_activation(z, l.act);
    return z;
  }

  void run_layers(Cache& c) const {
    const Matrix* cur = &c.input;
    for (const Layer& l : layers_) {
      Matrix z = matmul_nt(*cur, l.weight);
      for (std::size_t r = 0; r < z.rows; ++r) {
        double* row = z.row(r);
        for (std::size_t col = 0; col < z.cols; ++col) row[col] += l.bias[col];
      }
      c.pre.push_back(z);
      detail::apply_activation(z, l.act);
      c.post.push_back(std::move(z));
      cur = &c.post.back();
    }
  }

  Gradients backward_impl(const Cache& cache, const Matrix& upstream, bool from_logits,
                          Matrix* input_grad) const {
    if (cache.post.size() != layers_.size() || cache.input.rows == 0)
      throw std::invalid_argument("DenseNet::backward: missing or mismatched forward cache");
    if (!upstream.same_shape(cache.post.back()))
      throw std::invalid_argument("DenseNet::backward: upstream shape " + shape_string(upstream) +
                                  " does not match output " + shape_string(cache.post.back()));
    if (!all_finite(upstream))
      throw std::invalid_argument("DenseNet::backward: non-finite upstream gradient");

    Gradients g = zero_gradients();
    Matrix grad = upstream;
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const Layer& layer = layers_[li];
      Matrix dz;
      if (from_logits && li + 1 == layers_.size())
        dz = std::move(grad);
      else
        dz = detail::activation_backward(grad, cache.pre[li], cache.post[li], layer.act);
      const Matrix& below = (li == 0) ? cache.input : cache.post[li - 1];
      g.weights[li] = matmul_tn(dz, below);
      g.biases[li] = column_sums(dz);
      grad = matmul(dz, layer.weight);
    }
    if (has_embedding()) {
      for (std::size_t r = 0; r < cache.ids.size(); ++r) {
        double* dst = g.embedding.row(std::size_t(cache.ids[r]));
        const double* src = grad.row(r);
        for (std::size_t c = 0; c < g.embedding.cols; ++c) dst[c] += src[c];
      }
    }
    if (input_grad) *input_grad = std::move(grad);
    return g;
  }
};

inline constexpr double kLogClamp = 1e-12;

// Mean negative log-likelihood in nats, probabilities clamped below at 1e-12.
inline double cross_entropy(const Matrix& probs, std::span<const int> labels) {
  if (probs.rows == 0 || probs.rows != labels.size())
    throw std::invalid_argument("cross_entropy: probs rows " + std::to_string(probs.rows) +
                                " vs labels " + std::to_string(labels.size()));
  double total = 0.0;
  for (std::size_t r = 0; r < probs.rows; ++r) {
    const double* p = probs.row(r);
    double sum = 0.0;
    for (std::size_t c = 0; c < probs.cols; ++c) sum += p[c];
    if (std::abs(sum - 1.0) > 1e-6)
      throw std::invalid_argument("cross_entropy: row " + std::to_string(r) +
                                  " sums to " + std::to_string(sum) + ", not 1");
    const int lab = labels[r];
    if (lab < 0 || std::size_t(lab) >= probs.cols)
      throw std::invalid_argument("cross_entropy: label " + std::to_string(lab) +
                                  " out of range [0, " + std::to_string(probs.cols) + ")");
    total -= std::log(std::max(p[lab], kLogClamp));
  }
  return total / double(probs.rows);
}

// Cross-entropy against the uniform distribution over all classes.
inline double cross_entropy_uniform(const Matrix& probs) {
  if (probs.rows == 0 || probs.cols == 0)
    throw std::invalid_argument("cross_entropy_uniform: empty batch");
  const double u = 1.0 / double(probs.cols);
  double total = 0.0;
  for (std::size_t r = 0; r < probs.rows; ++r) {
    const double* p = probs.row(r);
    for (std::size_t c = 0; c < probs.cols; ++c)
      total -= u * std::log(std::max(p[c], kLogClamp));
  }
  return total / double(probs.rows);
}

// d(mean CE)/d(logits) = (p - onehot)/k, valid when probs came from a final softmax.
inline Matrix cross_entropy_logit_gradient(const Matrix& probs, std::span<const int> labels) {
  if (probs.rows != labels.size())
    throw std::invalid_argument("cross_entropy_logit_gradient: size mismatch");
  Matrix g = probs;
  const double inv_k = 1.0 / double(probs.rows);
  for (std::size_t r = 0; r < g.rows; ++r) {
    const int lab = labels[r];
    if (lab < 0 || std::size_t(lab) >= g.cols)
      throw std::invalid_argument("cross_entropy_logit_gradient: label out of range");
    double* row = g.row(r);
    row[std::size_t(lab)] -= 1.0;
    for (std::size_t c = 0; c < g.cols; ++c) row[c] *= inv_k;
  }
  return g;
}

// d(mean uniform-target CE)/d(logits) = (p - 1/M)/k
inline Matrix cross_entropy_uniform_logit_gradient(const Matrix& probs) {
  Matrix g = probs;
  const double u = 1.0 / double(probs.cols);
  const double inv_k = 1.0 / double(probs.rows);
  for (double& v : g.data) v = (v - u) * inv_k;
  return g;
}

}  // namespace minesec
