#pragma once

#include <cmath>
#include <span>

#include <Eigen/Dense>

#include "artifact/errors.hpp"
#include "artifact/rng.hpp"

namespace artifact {

struct DenoiserTopology {
  int state_dim = 15;
  int time_dim = 16;
  int hidden = 128;
  int classes = 2;

  friend bool operator==(const DenoiserTopology&, const DenoiserTopology&) = default;
};

/// Period of the slowest sinusoid in the timestep embedding.
inline constexpr double kTimeEmbeddingPeriod = 100.0;

/// Sinusoidal embedding of integer timestep t: [sin(t w_k)..., cos(t w_k)...].
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> time_embedding(int t, int dim) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> e(dim);
  const int half = dim / 2;
  for (int k = 0; k < half; ++k) {
    const Scalar w = std::pow(Scalar(kTimeEmbeddingPeriod), -Scalar(k) / Scalar(half));
    e[k] = std::sin(Scalar(t) * w);
    e[half + k] = std::cos(Scalar(t) * w);
  }
  if (dim % 2) e[dim - 1] = Scalar(0);
  return e;
}

/// Noise-prediction MLP: [x ; time embedding] -> SiLU -> SiLU -> linear,
/// with a learned per-class vector added to the first pre-activation.
///
/// All weights live in one flat vector so optimizers, gradient checks and
/// checkpoints treat them uniformly. Column-major layout, in order:
/// W1 (H x (S+E)), b1 (H), class table (H x C), W2 (H x H), b2 (H),
/// W3 (S x H), b3 (S).
template <typename Scalar>
class BasicDenoiser {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;

  /// Activations kept for the backward pass.
  struct Cache {
    Matrix input, pre1, h1, pre2, h2;
    std::vector<int> conditions;
  };

  explicit BasicDenoiser(const DenoiserTopology& topology) : topo_(topology) {
    if (topo_.state_dim <= 0 || topo_.time_dim <= 0 || topo_.hidden <= 0 || topo_.classes <= 0) {
      throw DomainError("denoiser topology sizes must be positive");
    }
    params_ = Vector::Zero(parameter_count(topo_));
  }

  /// Scaled-normal weights (variance 1/fan_in), zero biases, small class vectors.
  BasicDenoiser(const DenoiserTopology& topology, Rng& rng) : BasicDenoiser(topology) {
    const auto fill = [&rng](MatrixMap m, Scalar stddev) {
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = stddev * Scalar(standard_normal(rng));
    };
    fill(w1(), 1 / std::sqrt(Scalar(input_dim())));
    fill(class_table(), Scalar(0.1));
    fill(w2(), 1 / std::sqrt(Scalar(topo_.hidden)));
    fill(w3(), 1 / std::sqrt(Scalar(topo_.hidden)));
  }

  static Eigen::Index parameter_count(const DenoiserTopology& t) {
    const Eigen::Index s = t.state_dim, e = t.time_dim, h = t.hidden, c = t.classes;
    return h * (s + e) + h + h * c + h * h + h + s * h + s;
  }

  const DenoiserTopology& topology() const { return topo_; }
  Eigen::Index parameter_count() const { return params_.size(); }
  int input_dim() const { return topo_.state_dim + topo_.time_dim; }

  Vector& parameters() { return params_; }
  const Vector& parameters() const { return params_; }
  void set_parameters(const Vector& p) {
    if (p.size() != params_.size()) throw DomainError("parameter vector size mismatch");
    params_ = p;
  }

  MatrixMap w1() { return block(offset_w1(), topo_.hidden, input_dim()); }
  MatrixMap class_table() { return block(offset_cls(), topo_.hidden, topo_.classes); }
  MatrixMap w2() { return block(offset_w2(), topo_.hidden, topo_.hidden); }
  MatrixMap w3() { return block(offset_w3(), topo_.state_dim, topo_.hidden); }
  MatrixMap b3() { return block(offset_b3(), topo_.state_dim, 1); }

  /// Noise estimate for each column of `x` at timesteps `t` under classes `c`.
  Matrix forward(const Matrix& x, std::span<const int> t, std::span<const int> c, Cache* cache = nullptr) const {
    const Eigen::Index batch = x.cols();
    if (x.rows() != topo_.state_dim) throw DomainError("state dimension mismatch");
    if (static_cast<Eigen::Index>(t.size()) != batch || static_cast<Eigen::Index>(c.size()) != batch) {
      throw DomainError("timestep/condition count must match the batch");
    }
    Matrix input(input_dim(), batch);
    input.topRows(topo_.state_dim) = x;
    for (Eigen::Index j = 0; j < batch; ++j) {
      if (c[j] < 0 || c[j] >= topo_.classes) throw DomainError("condition out of range");
      input.col(j).bottomRows(topo_.time_dim) = time_embedding<Scalar>(t[j], topo_.time_dim);
    }
    const auto w1m = cblock(offset_w1(), topo_.hidden, input_dim());
    const auto cls = cblock(offset_cls(), topo_.hidden, topo_.classes);
    Matrix pre1 = w1m * input;
    pre1.colwise() += cblock(offset_b1(), topo_.hidden, 1).col(0);
    for (Eigen::Index j = 0; j < batch; ++j) pre1.col(j) += cls.col(c[j]);
    Matrix h1 = silu(pre1);
    Matrix pre2 = cblock(offset_w2(), topo_.hidden, topo_.hidden) * h1;
    pre2.colwise() += cblock(offset_b2(), topo_.hidden, 1).col(0);
    Matrix h2 = silu(pre2);
    Matrix out = cblock(offset_w3(), topo_.state_dim, topo_.hidden) * h2;
    out.colwise() += cblock(offset_b3(), topo_.state_dim, 1).col(0);
    if (cache) {
      cache->input = std::move(input);
      cache->pre1 = std::move(pre1);
      cache->h1 = std::move(h1);
      cache->pre2 = std::move(pre2);
      cache->h2 = std::move(h2);
      cache->conditions.assign(c.begin(), c.end());
    }
    return out;
  }

  /// Adds dL/dθ to `grad` given dL/d(output) for the cached forward pass.
  void backward(const Cache& cache, const Matrix& grad_out, Vector& grad) const {
    if (grad.size() != params_.size()) throw DomainError("gradient vector size mismatch");
    const int s = topo_.state_dim, h = topo_.hidden;
    MatrixMap g_w1(grad.data() + offset_w1(), h, input_dim());
    MatrixMap g_b1(grad.data() + offset_b1(), h, 1);
    MatrixMap g_cls(grad.data() + offset_cls(), h, topo_.classes);
    MatrixMap g_w2(grad.data() + offset_w2(), h, h);
    MatrixMap g_b2(grad.data() + offset_b2(), h, 1);
    MatrixMap g_w3(grad.data() + offset_w3(), s, h);
    MatrixMap g_b3(grad.data() + offset_b3(), s, 1);

    g_w3.noalias() += grad_out * cache.h2.transpose();
    g_b3 += grad_out.rowwise().sum();
    const Matrix d_pre2 =
        ((cblock(offset_w3(), s, h).transpose() * grad_out).array() * silu_grad(cache.pre2).array()).matrix();
    g_w2.noalias() += d_pre2 * cache.h1.transpose();
    g_b2 += d_pre2.rowwise().sum();
    const Matrix d_pre1 =
        ((cblock(offset_w2(), h, h).transpose() * d_pre2).array() * silu_grad(cache.pre1).array()).matrix();
    g_w1.noalias() += d_pre1 * cache.input.transpose();
    g_b1 += d_pre1.rowwise().sum();
    for (std::size_t j = 0; j < cache.conditions.size(); ++j) {
      g_cls.col(cache.conditions[j]) += d_pre1.col(static_cast<Eigen::Index>(j));
    }
  }

 private:
  static Matrix silu(const Matrix& z) { return (z.array() / (1 + (-z.array()).exp())).matrix(); }

  static Matrix silu_grad(const Matrix& z) {
    const auto sig = 1 / (1 + (-z.array()).exp());
    return (sig * (1 + z.array() * (1 - sig))).matrix();
  }

  Eigen::Index offset_w1() const { return 0; }
  Eigen::Index offset_b1() const { return offset_w1() + Eigen::Index(topo_.hidden) * input_dim(); }
  Eigen::Index offset_cls() const { return offset_b1() + topo_.hidden; }
  Eigen::Index offset_w2() const { return offset_cls() + Eigen::Index(topo_.hidden) * topo_.classes; }
  Eigen::Index offset_b2() const { return offset_w2() + Eigen::Index(topo_.hidden) * topo_.hidden; }
  Eigen::Index offset_w3() const { return offset_b2() + topo_.hidden; }
  Eigen::Index offset_b3() const { return offset_w3() + Eigen::Index(topo_.state_dim) * topo_.hidden; }

  MatrixMap block(Eigen::Index offset, Eigen::Index rows, Eigen::Index cols) {
    return MatrixMap(params_.data() + offset, rows, cols);
  }
  ConstMatrixMap cblock(Eigen::Index offset, Eigen::Index rows, Eigen::Index cols) const {
    return ConstMatrixMap(params_.data() + offset, rows, cols);
  }

  DenoiserTopology topo_;
  Vector params_;
};

using Denoiser = BasicDenoiser<double>;

}  // namespace artifact
