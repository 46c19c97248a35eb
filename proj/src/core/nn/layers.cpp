#include "bridgestain/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "bridgestain/error.hpp"
#include "bridgestain/rng.hpp"

namespace bridgestain::nn {

template <typename S>
Parameter<S>& ParameterSet<S>::add(const std::string& name, int rows, int cols) {
  require(find(name) == nullptr, ErrorCode::invalid_config, "duplicate parameter " + name);
  Parameter<S>& p = params_.emplace_back();
  p.name = name;
  p.value = Matrix<S>::Zero(rows, cols);
  p.grad = Matrix<S>::Zero(rows, cols);
  return p;
}

template <typename S>
Parameter<S>* ParameterSet<S>::find(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

template <typename S>
const Parameter<S>* ParameterSet<S>::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

template <typename S>
void ParameterSet<S>::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

template <typename S>
std::size_t ParameterSet<S>::count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

template <typename S>
void init_normal(Parameter<S>& p, int fan_in, double scale, RngStream& rng) {
  const double sd = scale / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
  for (Eigen::Index k = 0; k < p.value.size(); ++k) {
    p.value.data()[k] = static_cast<S>(sd * rng.normal());
  }
}

// ---------------------------------------------------------------------------
// Conv2d

template <typename S>
Conv2d<S>::Conv2d(ParameterSet<S>& ps, const std::string& name, int cin, int cout, int kernel)
    : cin_(cin), cout_(cout), k_(kernel) {
  require(kernel == 1 || kernel == 3, ErrorCode::invalid_config, "conv kernel must be 1 or 3");
  w_ = &ps.add(name + ".weight", cout, kernel * kernel * cin);
  b_ = &ps.add(name + ".bias", cout, 1);
}

template <typename S>
void Conv2d<S>::init(RngStream& rng, double scale) {
  init_normal(*w_, k_ * k_ * cin_, scale, rng);
  b_->value.setZero();
}

namespace {

template <typename S>
void im2col3(const Matrix<S>& x, const Geometry& g, Matrix<S>& cols) {
  const int c = static_cast<int>(x.rows());
  cols.resize(9 * c, g.columns());
  const S* src = x.data();
  S* dst = cols.data();
  const std::size_t stride = static_cast<std::size_t>(9) * c;
  for (int b = 0; b < g.batch; ++b) {
    for (int i = 0; i < g.height; ++i) {
      for (int j = 0; j < g.width; ++j) {
        const std::size_t n = (static_cast<std::size_t>(b) * g.height + i) * g.width + j;
        S* col = dst + n * stride;
        for (int di = -1; di <= 1; ++di) {
          const int ii = i + di;
          for (int dj = -1; dj <= 1; ++dj, col += c) {
            const int jj = j + dj;
            if (ii < 0 || ii >= g.height || jj < 0 || jj >= g.width) {
              std::fill_n(col, c, S(0));
            } else {
              const std::size_t nb = (static_cast<std::size_t>(b) * g.height + ii) * g.width + jj;
              std::memcpy(col, src + nb * c, sizeof(S) * c);
            }
          }
        }
      }
    }
  }
}

template <typename S>
void col2im3(const Matrix<S>& dcols, const Geometry& g, int c, Matrix<S>& dx) {
  dx.setZero(c, g.columns());
  const S* src = dcols.data();
  S* dst = dx.data();
  const std::size_t stride = static_cast<std::size_t>(9) * c;
  for (int b = 0; b < g.batch; ++b) {
    for (int i = 0; i < g.height; ++i) {
      for (int j = 0; j < g.width; ++j) {
        const std::size_t n = (static_cast<std::size_t>(b) * g.height + i) * g.width + j;
        const S* col = src + n * stride;
        for (int di = -1; di <= 1; ++di) {
          const int ii = i + di;
          for (int dj = -1; dj <= 1; ++dj, col += c) {
            const int jj = j + dj;
            if (ii < 0 || ii >= g.height || jj < 0 || jj >= g.width) continue;
            const std::size_t nb = (static_cast<std::size_t>(b) * g.height + ii) * g.width + jj;
            S* out = dst + nb * c;
            for (int ch = 0; ch < c; ++ch) out[ch] += col[ch];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename S>
Matrix<S> Conv2d<S>::forward(const Matrix<S>& x, const Geometry& g, bool keep) {
  require(x.rows() == cin_ && x.cols() == g.columns(), ErrorCode::invalid_input,
          "conv input shape mismatch");
  Matrix<S> y(cout_, g.columns());
  if (k_ == 1) {
    y.noalias() = w_->value * x;
    if (keep) cols_ = x;
  } else {
    Matrix<S> cols;
    im2col3(x, g, cols);
    y.noalias() = w_->value * cols;
    if (keep) cols_ = std::move(cols);
  }
  y.colwise() += b_->value.col(0);
  if (keep) g_ = g;
  return y;
}

template <typename S>
Matrix<S> Conv2d<S>::backward(const Matrix<S>& dy) {
  w_->grad.noalias() += dy * cols_.transpose();
  b_->grad.col(0) += dy.rowwise().sum();
  Matrix<S> dcols(w_->value.cols(), dy.cols());
  dcols.noalias() = w_->value.transpose() * dy;
  if (k_ == 1) return dcols;
  Matrix<S> dx;
  col2im3(dcols, g_, cin_, dx);
  return dx;
}

// ---------------------------------------------------------------------------
// GroupNorm

template <typename S>
GroupNorm<S>::GroupNorm(ParameterSet<S>& ps, const std::string& name, int channels, int groups)
    : channels_(channels), groups_(std::gcd(channels, std::max(groups, 1))) {
  gamma_ = &ps.add(name + ".gamma", channels, 1);
  beta_ = &ps.add(name + ".beta", channels, 1);
  gamma_->value.setOnes();
}

namespace {
constexpr double kNormEps = 1e-5;
}

template <typename S>
Matrix<S> GroupNorm<S>::forward(const Matrix<S>& x, const Geometry& g, bool keep) {
  using Col = Eigen::Array<S, Eigen::Dynamic, 1>;
  const int C = channels_;
  const int cg = C / groups_;
  const int p = g.pixels();
  const double n = static_cast<double>(cg) * p;
  Matrix<S> y(x.rows(), x.cols());
  Matrix<S> xhat;
  if (keep) xhat.resize(x.rows(), x.cols());
  std::vector<S> inv_std(static_cast<std::size_t>(g.batch) * groups_);
  Col mean(C), istd(C);
  const auto gamma = gamma_->value.col(0).array();
  const auto beta = beta_->value.col(0).array();
  for (int b = 0; b < g.batch; ++b) {
    const Eigen::Index off = static_cast<Eigen::Index>(b) * p;
    const auto X = x.middleCols(off, p).array();
    const Col sums = X.rowwise().sum();
    for (int gr = 0; gr < groups_; ++gr) {
      mean.segment(gr * cg, cg).setConstant(static_cast<S>(sums.segment(gr * cg, cg).template cast<double>().sum() / n));
    }
    const Col sq = (X.colwise() - mean).square().rowwise().sum();
    for (int gr = 0; gr < groups_; ++gr) {
      const S is = static_cast<S>(1.0 / std::sqrt(sq.segment(gr * cg, cg).template cast<double>().sum() / n + kNormEps));
      inv_std[static_cast<std::size_t>(b) * groups_ + gr] = is;
      istd.segment(gr * cg, cg).setConstant(is);
    }
    const Col scale = istd * gamma;
    const Col shift = beta - mean * scale;
    y.middleCols(off, p).array() = (X.colwise() * scale).colwise() + shift;
    if (keep) xhat.middleCols(off, p).array() = (X.colwise() - mean).colwise() * istd;
  }
  if (keep) {
    xhat_ = std::move(xhat);
    inv_std_ = std::move(inv_std);
    g_ = g;
  }
  return y;
}

template <typename S>
Matrix<S> GroupNorm<S>::backward(const Matrix<S>& dy) {
  gamma_->grad.col(0) += (dy.array() * xhat_.array()).rowwise().sum().matrix();
  beta_->grad.col(0) += dy.rowwise().sum();
  const int C = channels_;
  const int cg = C / groups_;
  const int p = g_.pixels();
  const double n = static_cast<double>(cg) * p;
  const S* gamma = gamma_->value.data();
  Matrix<S> dx(dy.rows(), dy.cols());
  std::vector<S> s_dh(C), s_dhx(C), a(C), bcoef(C), istd(C);
  for (int b = 0; b < g_.batch; ++b) {
    const std::size_t off = static_cast<std::size_t>(b) * p * C;
    const S* d = dy.data() + off;
    const S* xh = xhat_.data() + off;
    std::fill(s_dh.begin(), s_dh.end(), S(0));
    std::fill(s_dhx.begin(), s_dhx.end(), S(0));
    for (int col = 0; col < p; ++col) {
      const std::size_t k = static_cast<std::size_t>(col) * C;
      for (int c = 0; c < C; ++c) {
        s_dh[c] += d[k + c];
        s_dhx[c] += d[k + c] * xh[k + c];
      }
    }
    for (int gr = 0; gr < groups_; ++gr) {
      double t = 0, tx = 0;
      for (int c = gr * cg; c < (gr + 1) * cg; ++c) {
        t += static_cast<double>(s_dh[c]) * gamma[c];
        tx += static_cast<double>(s_dhx[c]) * gamma[c];
      }
      const S is = inv_std_[static_cast<std::size_t>(b) * groups_ + gr];
      for (int c = gr * cg; c < (gr + 1) * cg; ++c) {
        istd[c] = is;
        a[c] = static_cast<S>(t / n);
        bcoef[c] = static_cast<S>(tx / n);
      }
    }
    S* o = dx.data() + off;
    for (int col = 0; col < p; ++col) {
      const std::size_t k = static_cast<std::size_t>(col) * C;
      for (int c = 0; c < C; ++c) {
        o[k + c] = istd[c] * (d[k + c] * gamma[c] - a[c] - xh[k + c] * bcoef[c]);
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Linear

template <typename S>
Linear<S>::Linear(ParameterSet<S>& ps, const std::string& name, int in, int out) {
  w_ = &ps.add(name + ".weight", out, in);
  b_ = &ps.add(name + ".bias", out, 1);
}

template <typename S>
void Linear<S>::init(RngStream& rng, double scale) {
  init_normal(*w_, static_cast<int>(w_->value.cols()), scale, rng);
  b_->value.setZero();
}

template <typename S>
Matrix<S> Linear<S>::forward(const Matrix<S>& x, bool keep) {
  Matrix<S> y = w_->value * x;
  y.colwise() += b_->value.col(0);
  if (keep) x_ = x;
  return y;
}

template <typename S>
void Linear<S>::backward(const Matrix<S>& dy) {
  w_->grad.noalias() += dy * x_.transpose();
  b_->grad.col(0) += dy.rowwise().sum();
}

// ---------------------------------------------------------------------------
// Pointwise and resampling helpers

template <typename S>
Matrix<S> silu(const Matrix<S>& x) {
  return (x.array() / (S(1) + (-x.array()).exp())).matrix();
}

template <typename S>
Matrix<S> silu_backward(const Matrix<S>& x, const Matrix<S>& dy) {
  auto sig = (S(1) / (S(1) + (-x.array()).exp()));
  return (dy.array() * sig * (S(1) + x.array() * (S(1) - sig))).matrix();
}

template <typename S>
Matrix<S> avg_pool2(const Matrix<S>& x, const Geometry& g) {
  const int h = g.height / 2, w = g.width / 2;
  Matrix<S> y(x.rows(), static_cast<Eigen::Index>(g.batch) * h * w);
  for (int b = 0; b < g.batch; ++b) {
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        const Eigen::Index base = (static_cast<Eigen::Index>(b) * g.height + 2 * i) * g.width + 2 * j;
        y.col((static_cast<Eigen::Index>(b) * h + i) * w + j) =
            S(0.25) * (x.col(base) + x.col(base + 1) + x.col(base + g.width) +
                       x.col(base + g.width + 1));
      }
    }
  }
  return y;
}

template <typename S>
Matrix<S> avg_pool2_backward(const Matrix<S>& dy, const Geometry& g) {
  const int h = g.height / 2, w = g.width / 2;
  Matrix<S> dx(dy.rows(), g.columns());
  for (int b = 0; b < g.batch; ++b) {
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        const Eigen::Index base = (static_cast<Eigen::Index>(b) * g.height + 2 * i) * g.width + 2 * j;
        const auto d = (S(0.25) * dy.col((static_cast<Eigen::Index>(b) * h + i) * w + j)).eval();
        dx.col(base) = d;
        dx.col(base + 1) = d;
        dx.col(base + g.width) = d;
        dx.col(base + g.width + 1) = d;
      }
    }
  }
  return dx;
}

// g is the geometry of the coarse input.
template <typename S>
Matrix<S> upsample2(const Matrix<S>& x, const Geometry& g) {
  const int H = g.height * 2, W = g.width * 2;
  Matrix<S> y(x.rows(), static_cast<Eigen::Index>(g.batch) * H * W);
  for (int b = 0; b < g.batch; ++b) {
    for (int i = 0; i < H; ++i) {
      for (int j = 0; j < W; ++j) {
        y.col((static_cast<Eigen::Index>(b) * H + i) * W + j) =
            x.col((static_cast<Eigen::Index>(b) * g.height + i / 2) * g.width + j / 2);
      }
    }
  }
  return y;
}

template <typename S>
Matrix<S> upsample2_backward(const Matrix<S>& dy, const Geometry& g) {
  const int H = g.height * 2, W = g.width * 2;
  Matrix<S> dx = Matrix<S>::Zero(dy.rows(), g.columns());
  for (int b = 0; b < g.batch; ++b) {
    for (int i = 0; i < H; ++i) {
      for (int j = 0; j < W; ++j) {
        dx.col((static_cast<Eigen::Index>(b) * g.height + i / 2) * g.width + j / 2) +=
            dy.col((static_cast<Eigen::Index>(b) * H + i) * W + j);
      }
    }
  }
  return dx;
}

template <typename S>
Matrix<S> pixel_shuffle(const Matrix<S>& x, const Geometry& g, int factor) {
  const int n2 = factor * factor;
  require(x.rows() % n2 == 0, ErrorCode::invalid_config,
          "pixel_shuffle: channels not divisible by factor^2");
  const int c_out = static_cast<int>(x.rows()) / n2;
  const int H = g.height * factor, W = g.width * factor;
  Matrix<S> y(c_out, static_cast<Eigen::Index>(g.batch) * H * W);
  for (int b = 0; b < g.batch; ++b) {
    for (int i = 0; i < g.height; ++i) {
      for (int j = 0; j < g.width; ++j) {
        const Eigen::Index src = (static_cast<Eigen::Index>(b) * g.height + i) * g.width + j;
        for (int a = 0; a < factor; ++a) {
          for (int q = 0; q < factor; ++q) {
            const Eigen::Index dst =
                (static_cast<Eigen::Index>(b) * H + i * factor + a) * W + j * factor + q;
            for (int c = 0; c < c_out; ++c) y(c, dst) = x(c * n2 + a * factor + q, src);
          }
        }
      }
    }
  }
  return y;
}

template <typename S>
Matrix<S> pixel_shuffle_backward(const Matrix<S>& dy, const Geometry& g, int factor) {
  const int n2 = factor * factor;
  const int c_out = static_cast<int>(dy.rows());
  const int H = g.height * factor, W = g.width * factor;
  Matrix<S> dx(static_cast<Eigen::Index>(c_out) * n2, g.columns());
  for (int b = 0; b < g.batch; ++b) {
    for (int i = 0; i < g.height; ++i) {
      for (int j = 0; j < g.width; ++j) {
        const Eigen::Index src = (static_cast<Eigen::Index>(b) * g.height + i) * g.width + j;
        for (int a = 0; a < factor; ++a) {
          for (int q = 0; q < factor; ++q) {
            const Eigen::Index dst =
                (static_cast<Eigen::Index>(b) * H + i * factor + a) * W + j * factor + q;
            for (int c = 0; c < c_out; ++c) dx(c * n2 + a * factor + q, src) = dy(c, dst);
          }
        }
      }
    }
  }
  return dx;
}

template <typename S>
void add_per_sample(Matrix<S>& x, const Matrix<S>& per_sample, const Geometry& g) {
  const int p = g.pixels();
  for (int b = 0; b < g.batch; ++b) {
    x.middleCols(static_cast<Eigen::Index>(b) * p, p).colwise() += per_sample.col(b);
  }
}

template <typename S>
Matrix<S> sum_per_sample(const Matrix<S>& dx, const Geometry& g) {
  const int p = g.pixels();
  Matrix<S> out(dx.rows(), g.batch);
  for (int b = 0; b < g.batch; ++b) {
    out.col(b) = dx.middleCols(static_cast<Eigen::Index>(b) * p, p).rowwise().sum();
  }
  return out;
}

// ---------------------------------------------------------------------------
// ResBlock

template <typename S>
ResBlock<S>::ResBlock(ParameterSet<S>& ps, const std::string& name, int cin, int cout,
                      int embed_dim, int groups)
    : time_(ps, name + ".time", embed_dim, cin),
      norm1_(ps, name + ".norm1", cin, groups),
      norm2_(ps, name + ".norm2", cout, groups),
      conv1_(ps, name + ".conv1", cin, cout, 3),
      conv2_(ps, name + ".conv2", cout, cout, 3),
      has_skip_(cin != cout) {
  if (has_skip_) skip_ = Conv2d<S>(ps, name + ".skip", cin, cout, 1);
}

template <typename S>
void ResBlock<S>::init(RngStream& rng) {
  time_.init(rng);
  conv1_.init(rng);
  conv2_.init(rng);
  if (has_skip_) skip_.init(rng);
}

template <typename S>
Matrix<S> ResBlock<S>::forward(const Matrix<S>& x, const Matrix<S>& embed, const Geometry& g,
                               bool keep) {
  Matrix<S> u = x;
  add_per_sample(u, time_.forward(embed, keep), g);
  Matrix<S> a1 = norm1_.forward(u, g, keep);
  Matrix<S> h = conv1_.forward(silu(a1), g, keep);
  Matrix<S> a2 = norm2_.forward(h, g, keep);
  h = conv2_.forward(silu(a2), g, keep);
  if (has_skip_) {
    h += skip_.forward(u, g, keep);
  } else {
    h += u;
  }
  if (keep) {
    a1_ = std::move(a1);
    a2_ = std::move(a2);
    g_ = g;
  }
  return h;
}

template <typename S>
Matrix<S> ResBlock<S>::backward(const Matrix<S>& dy) {
  Matrix<S> du = has_skip_ ? skip_.backward(dy) : dy;
  Matrix<S> dh = conv2_.backward(dy);
  dh = norm2_.backward(silu_backward(a2_, dh));
  dh = conv1_.backward(dh);
  du += norm1_.backward(silu_backward(a1_, dh));
  time_.backward(sum_per_sample(du, g_));
  return du;
}

// ---------------------------------------------------------------------------
// AttentionBlock

template <typename S>
AttentionBlock<S>::AttentionBlock(ParameterSet<S>& ps, const std::string& name, int channels,
                                  int heads, int groups)
    : norm_(ps, name + ".norm", channels, groups),
      qkv_(ps, name + ".qkv", channels, 3 * channels, 1),
      proj_(ps, name + ".proj", channels, channels, 1),
      channels_(channels),
      heads_(heads) {
  require(heads >= 1 && channels % heads == 0, ErrorCode::invalid_config,
          "attention channels must be divisible by head count");
}

template <typename S>
void AttentionBlock<S>::init(RngStream& rng) {
  qkv_.init(rng);
  proj_.init(rng);
}

template <typename S>
Matrix<S> AttentionBlock<S>::forward(const Matrix<S>& x, const Geometry& g, bool keep) {
  const int d = channels_ / heads_;
  const int p = g.pixels();
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(d)));
  Matrix<S> qkv = qkv_.forward(norm_.forward(x, g, keep), g, keep);
  Matrix<S> attn(channels_, g.columns());
  if (keep) probs_.assign(static_cast<std::size_t>(g.batch) * heads_, Matrix<S>());
  Matrix<S> scores(p, p);
  for (int b = 0; b < g.batch; ++b) {
    const Eigen::Index c0 = static_cast<Eigen::Index>(b) * p;
    for (int hd = 0; hd < heads_; ++hd) {
      auto q = qkv.block(hd * d, c0, d, p);
      auto k = qkv.block(channels_ + hd * d, c0, d, p);
      auto v = qkv.block(2 * channels_ + hd * d, c0, d, p);
      scores.noalias() = scale * (k.transpose() * q);
      // Column-wise softmax over keys.
      for (int col = 0; col < p; ++col) {
        auto sc = scores.col(col);
        const S mx = sc.maxCoeff();
        sc = (sc.array() - mx).exp();
        sc /= sc.sum();
      }
      attn.block(hd * d, c0, d, p).noalias() = v * scores;
      if (keep) probs_[static_cast<std::size_t>(b) * heads_ + hd] = scores;
    }
  }
  Matrix<S> y = x + proj_.forward(attn, g, keep);
  if (keep) {
    qkv_out_ = std::move(qkv);
    g_ = g;
  }
  return y;
}

template <typename S>
Matrix<S> AttentionBlock<S>::backward(const Matrix<S>& dy) {
  const int d = channels_ / heads_;
  const int p = g_.pixels();
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(d)));
  Matrix<S> dattn = proj_.backward(dy);
  Matrix<S> dqkv(3 * channels_, g_.columns());
  Matrix<S> dp(p, p);
  for (int b = 0; b < g_.batch; ++b) {
    const Eigen::Index c0 = static_cast<Eigen::Index>(b) * p;
    for (int hd = 0; hd < heads_; ++hd) {
      const Matrix<S>& probs = probs_[static_cast<std::size_t>(b) * heads_ + hd];
      auto q = qkv_out_.block(hd * d, c0, d, p);
      auto k = qkv_out_.block(channels_ + hd * d, c0, d, p);
      auto v = qkv_out_.block(2 * channels_ + hd * d, c0, d, p);
      auto dout = dattn.block(hd * d, c0, d, p);
      dqkv.block(2 * channels_ + hd * d, c0, d, p).noalias() = dout * probs.transpose();
      dp.noalias() = v.transpose() * dout;
      // Softmax Jacobian, column by column.
      for (int col = 0; col < p; ++col) {
        const S dot = probs.col(col).dot(dp.col(col));
        dp.col(col) = (probs.col(col).array() * (dp.col(col).array() - dot)).matrix();
      }
      dqkv.block(hd * d, c0, d, p).noalias() = scale * (k * dp);
      dqkv.block(channels_ + hd * d, c0, d, p).noalias() = scale * (q * dp.transpose());
    }
  }
  Matrix<S> dx = dy;
  dx += norm_.backward(qkv_.backward(dqkv));
  return dx;
}

#define BRIDGESTAIN_INSTANTIATE(S)                                                       \
  template class ParameterSet<S>;                                                      \
  template void init_normal<S>(Parameter<S>&, int, double, RngStream&);                \
  template class Conv2d<S>;                                                            \
  template class GroupNorm<S>;                                                         \
  template class Linear<S>;                                                            \
  template Matrix<S> silu<S>(const Matrix<S>&);                                        \
  template Matrix<S> silu_backward<S>(const Matrix<S>&, const Matrix<S>&);             \
  template Matrix<S> avg_pool2<S>(const Matrix<S>&, const Geometry&);                  \
  template Matrix<S> avg_pool2_backward<S>(const Matrix<S>&, const Geometry&);         \
  template Matrix<S> upsample2<S>(const Matrix<S>&, const Geometry&);                  \
  template Matrix<S> upsample2_backward<S>(const Matrix<S>&, const Geometry&);         \
  template Matrix<S> pixel_shuffle<S>(const Matrix<S>&, const Geometry&, int);         \
  template Matrix<S> pixel_shuffle_backward<S>(const Matrix<S>&, const Geometry&, int); \
  template void add_per_sample<S>(Matrix<S>&, const Matrix<S>&, const Geometry&);      \
  template Matrix<S> sum_per_sample<S>(const Matrix<S>&, const Geometry&);             \
  template class ResBlock<S>;                                                          \
  template class AttentionBlock<S>;

BRIDGESTAIN_INSTANTIATE(float)
BRIDGESTAIN_INSTANTIATE(double)

#undef BRIDGESTAIN_INSTANTIATE

}  // namespace bridgestain::nn
