#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

namespace bridgestain {
class RngStream;
}

namespace bridgestain::nn {

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// Activations are (channels x batch*H*W) column-major matrices; column
// n = (b*H + i)*W + j holds every channel of pixel (i, j) of sample b, which
// is the same interleaving as ImageTensor.
struct Geometry {
  int batch = 1;
  int height = 1;
  int width = 1;

  int pixels() const noexcept { return height * width; }
  int columns() const noexcept { return batch * height * width; }
  bool operator==(const Geometry&) const = default;
};

template <typename S>
struct Parameter {
  std::string name;
  Matrix<S> value;
  Matrix<S> grad;
};

/// Named parameter collection. Addresses are stable for the lifetime of the
/// set so layers can hold raw pointers into it.
template <typename S>
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;

  Parameter<S>& add(const std::string& name, int rows, int cols);
  Parameter<S>* find(const std::string& name);
  const Parameter<S>* find(const std::string& name) const;

  std::deque<Parameter<S>>& items() noexcept { return params_; }
  const std::deque<Parameter<S>>& items() const noexcept { return params_; }

  void zero_grad();
  std::size_t count() const;

 private:
  std::deque<Parameter<S>> params_;
};

/// Zero-mean normal init with standard deviation scale / sqrt(fan_in).
template <typename S>
void init_normal(Parameter<S>& p, int fan_in, double scale, RngStream& rng);

template <typename S>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterSet<S>& ps, const std::string& name, int cin, int cout, int kernel);

  void init(RngStream& rng, double scale = 1.0);
  Matrix<S> forward(const Matrix<S>& x, const Geometry& g, bool keep);
  Matrix<S> backward(const Matrix<S>& dy);

  int in_channels() const noexcept { return cin_; }
  int out_channels() const noexcept { return cout_; }

 private:
  Parameter<S>* w_ = nullptr;  // cout x (k*k*cin), tap-major
  Parameter<S>* b_ = nullptr;  // cout x 1
  int cin_ = 0;
  int cout_ = 0;
  int k_ = 1;
  Matrix<S> cols_;
  Geometry g_;
};

template <typename S>
class GroupNorm {
 public:
  GroupNorm() = default;
  GroupNorm(ParameterSet<S>& ps, const std::string& name, int channels, int groups);

  Matrix<S> forward(const Matrix<S>& x, const Geometry& g, bool keep);
  Matrix<S> backward(const Matrix<S>& dy);

 private:
  Parameter<S>* gamma_ = nullptr;
  Parameter<S>* beta_ = nullptr;
  int channels_ = 0;
  int groups_ = 1;
  Matrix<S> xhat_;
  std::vector<S> inv_std_;
  Geometry g_;
};

template <typename S>
class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet<S>& ps, const std::string& name, int in, int out);

  void init(RngStream& rng, double scale = 1.0);
  Matrix<S> forward(const Matrix<S>& x, bool keep);
  /// Accumulates parameter gradients; the input gradient is not needed by
  /// any caller and is not formed.
  void backward(const Matrix<S>& dy);

 private:
  Parameter<S>* w_ = nullptr;
  Parameter<S>* b_ = nullptr;
  Matrix<S> x_;
};

template <typename S>
Matrix<S> silu(const Matrix<S>& x);
template <typename S>
Matrix<S> silu_backward(const Matrix<S>& x, const Matrix<S>& dy);

template <typename S>
Matrix<S> avg_pool2(const Matrix<S>& x, const Geometry& g);
template <typename S>
Matrix<S> avg_pool2_backward(const Matrix<S>& dy, const Geometry& g);
template <typename S>
Matrix<S> upsample2(const Matrix<S>& x, const Geometry& g);
template <typename S>
Matrix<S> upsample2_backward(const Matrix<S>& dy, const Geometry& g);

/// Sub-pixel rearrangement; see pixel_shuffle in image.hpp for the indexing.
template <typename S>
Matrix<S> pixel_shuffle(const Matrix<S>& x, const Geometry& g, int factor);
template <typename S>
Matrix<S> pixel_shuffle_backward(const Matrix<S>& dy, const Geometry& g, int factor);

/// Adds column b of `per_sample` to every pixel column of sample b.
template <typename S>
void add_per_sample(Matrix<S>& x, const Matrix<S>& per_sample, const Geometry& g);
template <typename S>
Matrix<S> sum_per_sample(const Matrix<S>& dx, const Geometry& g);

/// Pre-activation residual block with additive time conditioning:
///   u = x + W_t silu(code_t);  h = conv2(silu(gn2(conv1(silu(gn1(u))))));  out = skip(u) + h
template <typename S>
class ResBlock {
 public:
  ResBlock() = default;
  ResBlock(ParameterSet<S>& ps, const std::string& name, int cin, int cout, int embed_dim,
           int groups);

  void init(RngStream& rng);
  /// `embed` is (embed_dim x batch): silu of the sinusoidal code per sample.
  Matrix<S> forward(const Matrix<S>& x, const Matrix<S>& embed, const Geometry& g, bool keep);
  Matrix<S> backward(const Matrix<S>& dy);

 private:
  Linear<S> time_;
  GroupNorm<S> norm1_, norm2_;
  Conv2d<S> conv1_, conv2_;
  Conv2d<S> skip_;
  bool has_skip_ = false;
  Matrix<S> a1_, a2_;  // pre-silu inputs
  Geometry g_;
};

/// Multi-head self-attention over the pixels of each sample, with a
/// group-normalised input and a residual connection.
template <typename S>
class AttentionBlock {
 public:
  AttentionBlock() = default;
  AttentionBlock(ParameterSet<S>& ps, const std::string& name, int channels, int heads,
                 int groups);

  void init(RngStream& rng);
  Matrix<S> forward(const Matrix<S>& x, const Geometry& g, bool keep);
  Matrix<S> backward(const Matrix<S>& dy);

 private:
  GroupNorm<S> norm_;
  Conv2d<S> qkv_;
  Conv2d<S> proj_;
  int channels_ = 0;
  int heads_ = 1;
  Matrix<S> qkv_out_;
  std::vector<Matrix<S>> probs_;  // per (sample, head): keys x queries
  Geometry g_;
};

}  // namespace bridgestain::nn
