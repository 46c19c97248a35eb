#include "bridgestain/nn/unet.hpp"

#include <cmath>
#include <string>

#include "bridgestain/error.hpp"
#include "bridgestain/rng.hpp"

namespace bridgestain::nn {

void validate(const UNetConfig& cfg) {
  require(cfg.levels >= 1, ErrorCode::invalid_config, "unet levels must be >= 1");
  require(cfg.base_width >= 1 && cfg.attention_heads >= 1 && cfg.time_embed_dim >= 2 &&
              cfg.in_channels >= 1 && cfg.out_channels >= 1 && cfg.norm_groups >= 1,
          ErrorCode::invalid_config, "unet widths and dims must be positive");
  require(cfg.time_embed_dim % 2 == 0, ErrorCode::invalid_config,
          "time embedding dimension must be even");
  require(cfg.base_width % cfg.attention_heads == 0, ErrorCode::invalid_config,
          "base width must be divisible by the attention head count");
  require(cfg.attention_min_level >= 0, ErrorCode::invalid_config,
          "attention_min_level must be >= 0");
}

void validate(const ConditionerConfig& cfg) {
  require(cfg.in_channels >= 1 && cfg.hidden >= 1 && cfg.out_channels >= 1,
          ErrorCode::invalid_config, "conditioner channel counts must be positive");
  require(cfg.factor >= 1, ErrorCode::invalid_config, "conditioner factor must be >= 1");
}

std::vector<double> sinusoidal_code(int t, int dim) {
  require(dim >= 2 && dim % 2 == 0, ErrorCode::invalid_config,
          "sinusoidal code dimension must be even, got " + std::to_string(dim));
  const int k = dim / 2;
  std::vector<double> code(dim);
  for (int i = 0; i < k; ++i) {
    const double freq = k == 1 ? 1.0 : std::pow(10000.0, -static_cast<double>(i) / (k - 1));
    code[i] = std::sin(t * freq);
    code[k + i] = std::cos(t * freq);
  }
  return code;
}

template <typename S>
UNet<S>::UNet(const UNetConfig& cfg) : cfg_(cfg) {
  validate(cfg);
  const int L = cfg.levels;
  const int D = cfg.time_embed_dim;
  const int G = cfg.norm_groups;
  stem_ = Conv2d<S>(params_, "unet.stem", cfg.in_channels, cfg.width(0), 3);
  int ch = cfg.width(0);
  for (int l = 0; l < L; ++l) {
    const std::string p = "unet.down" + std::to_string(l);
    down_res_.emplace_back(params_, p + ".res", ch, cfg.width(l), D, G);
    ch = cfg.width(l);
    if (has_attention(l)) {
      down_attn_.emplace_back(params_, p + ".attn", ch, cfg.attention_heads, G);
    } else {
      down_attn_.emplace_back();
    }
    skip_rows_.push_back(ch);
  }
  mid_res_a_ = ResBlock<S>(params_, "unet.mid.res_a", ch, ch, D, G);
  mid_attn_ = AttentionBlock<S>(params_, "unet.mid.attn", ch, cfg.attention_heads, G);
  mid_res_b_ = ResBlock<S>(params_, "unet.mid.res_b", ch, ch, D, G);
  up_res_.resize(L);
  up_attn_.resize(L);
  for (int l = L - 1; l >= 0; --l) {
    const std::string p = "unet.up" + std::to_string(l);
    up_res_[l] = ResBlock<S>(params_, p + ".res", ch + skip_rows_[l], cfg.width(l), D, G);
    ch = cfg.width(l);
    if (has_attention(l)) {
      up_attn_[l] = AttentionBlock<S>(params_, p + ".attn", ch, cfg.attention_heads, G);
    }
  }
  out_norm_ = GroupNorm<S>(params_, "unet.out.norm", ch, G);
  out_conv_ = Conv2d<S>(params_, "unet.out.conv", ch, cfg.out_channels, 3);
}

template <typename S>
void UNet<S>::init(RngStream& rng) {
  stem_.init(rng);
  for (int l = 0; l < cfg_.levels; ++l) {
    down_res_[l].init(rng);
    if (has_attention(l)) down_attn_[l].init(rng);
  }
  mid_res_a_.init(rng);
  mid_attn_.init(rng);
  mid_res_b_.init(rng);
  for (int l = cfg_.levels - 1; l >= 0; --l) {
    up_res_[l].init(rng);
    if (has_attention(l)) up_attn_[l].init(rng);
  }
  out_conv_.init(rng, 0.1);
}

template <typename S>
Matrix<S> UNet<S>::forward(const Matrix<S>& x, std::span<const int> ts, const Geometry& g,
                           bool keep) {
  const int L = cfg_.levels;
  const int div = 1 << (L - 1);
  require(g.height % div == 0 && g.width % div == 0, ErrorCode::invalid_input,
          "spatial size must be divisible by 2^(levels-1) = " + std::to_string(div));
  require(x.rows() == cfg_.in_channels && x.cols() == g.columns(), ErrorCode::invalid_input,
          "unet input shape mismatch");
  require(static_cast<int>(ts.size()) == g.batch, ErrorCode::invalid_input,
          "one timestep per sample required");

  Matrix<S> embed(cfg_.time_embed_dim, g.batch);
  for (int b = 0; b < g.batch; ++b) {
    const auto code = sinusoidal_code(ts[b], cfg_.time_embed_dim);
    for (int k = 0; k < cfg_.time_embed_dim; ++k) {
      const double c = code[k];
      embed(k, b) = static_cast<S>(c / (1.0 + std::exp(-c)));
    }
  }

  std::vector<Geometry> geoms(L, g);
  for (int l = 1; l < L; ++l) {
    geoms[l] = Geometry{g.batch, geoms[l - 1].height / 2, geoms[l - 1].width / 2};
  }

  std::vector<Matrix<S>> skips(L);
  Matrix<S> h = stem_.forward(x, g, keep);
  for (int l = 0; l < L; ++l) {
    h = down_res_[l].forward(h, embed, geoms[l], keep);
    if (has_attention(l)) h = down_attn_[l].forward(h, geoms[l], keep);
    skips[l] = h;
    if (l + 1 < L) h = avg_pool2(h, geoms[l]);
  }
  h = mid_res_a_.forward(h, embed, geoms[L - 1], keep);
  h = mid_attn_.forward(h, geoms[L - 1], keep);
  h = mid_res_b_.forward(h, embed, geoms[L - 1], keep);
  for (int l = L - 1; l >= 0; --l) {
    Matrix<S> cat(h.rows() + skips[l].rows(), h.cols());
    cat.topRows(h.rows()) = h;
    cat.bottomRows(skips[l].rows()) = skips[l];
    h = up_res_[l].forward(cat, embed, geoms[l], keep);
    if (has_attention(l)) h = up_attn_[l].forward(h, geoms[l], keep);
    if (l > 0) h = upsample2(h, geoms[l]);
  }
  Matrix<S> pre = out_norm_.forward(h, g, keep);
  Matrix<S> out = out_conv_.forward(silu(pre), g, keep);
  if (keep) {
    out_pre_ = std::move(pre);
    geoms_ = std::move(geoms);
  }
  return out;
}

template <typename S>
Matrix<S> UNet<S>::backward(const Matrix<S>& dy) {
  const int L = cfg_.levels;
  Matrix<S> dh = out_norm_.backward(silu_backward(out_pre_, out_conv_.backward(dy)));
  std::vector<Matrix<S>> dskips(L);
  for (int l = 0; l < L; ++l) {
    if (l > 0) dh = upsample2_backward(dh, geoms_[l]);
    if (has_attention(l)) dh = up_attn_[l].backward(dh);
    Matrix<S> dcat = up_res_[l].backward(dh);
    const Eigen::Index skip_rows = skip_rows_[l];
    dskips[l] = dcat.bottomRows(skip_rows);
    dh = dcat.topRows(dcat.rows() - skip_rows);
  }
  dh = mid_res_b_.backward(dh);
  dh = mid_attn_.backward(dh);
  dh = mid_res_a_.backward(dh);
  for (int l = L - 1; l >= 0; --l) {
    if (l + 1 < L) dh = avg_pool2_backward(dh, geoms_[l]);
    dh += dskips[l];
    if (has_attention(l)) dh = down_attn_[l].backward(dh);
    dh = down_res_[l].backward(dh);
  }
  return stem_.backward(dh);
}

template <typename S>
Conditioner<S>::Conditioner(const ConditionerConfig& cfg) : cfg_(cfg) {
  validate(cfg);
  conv1_ = Conv2d<S>(params_, "cond.conv1", cfg.in_channels, cfg.hidden, 3);
  conv2_ = Conv2d<S>(params_, "cond.conv2", cfg.hidden,
                     cfg.out_channels * cfg.factor * cfg.factor, 3);
}

template <typename S>
void Conditioner<S>::init(RngStream& rng) {
  conv1_.init(rng);
  conv2_.init(rng);
}

template <typename S>
Matrix<S> Conditioner<S>::forward(const Matrix<S>& x, const Geometry& g, bool keep) {
  require(x.rows() == cfg_.in_channels, ErrorCode::invalid_input,
          "conditioner input has " + std::to_string(x.rows()) + " channels, expected " +
              std::to_string(cfg_.in_channels));
  const int n2 = cfg_.factor * cfg_.factor;
  require(conv2_.out_channels() == cfg_.out_channels * n2, ErrorCode::invalid_config,
          "conditioner conv2 output channels inconsistent with shuffle factor");
  Matrix<S> a1 = conv1_.forward(x, g, keep);
  Matrix<S> h = conv2_.forward(silu(a1), g, keep);
  if (keep) {
    a1_ = std::move(a1);
    g_ = g;
  }
  return pixel_shuffle(h, g, cfg_.factor);
}

template <typename S>
void Conditioner<S>::backward(const Matrix<S>& dy) {
  Matrix<S> dh = pixel_shuffle_backward(dy, g_, cfg_.factor);
  dh = conv2_.backward(dh);
  conv1_.backward(silu_backward(a1_, dh));
}

template <typename S>
void DiffusionModel<S>::init(std::uint64_t seed) {
  RngStream cond_rng(stream_key(seed, stream_tag::init, 1));
  conditioner->init(cond_rng);
  RngStream unet_rng(stream_key(seed, stream_tag::init, 2));
  unet->init(unet_rng);
}

template <typename S>
std::vector<Parameter<S>*> DiffusionModel<S>::all_params() {
  std::vector<Parameter<S>*> out;
  for (auto& p : conditioner->params().items()) out.push_back(&p);
  for (auto& p : unet->params().items()) out.push_back(&p);
  return out;
}

template <typename S>
std::size_t DiffusionModel<S>::parameter_count() const {
  return conditioner->params().count() + unet->params().count();
}

template class UNet<float>;
template class UNet<double>;
template class Conditioner<float>;
template class Conditioner<double>;
template struct DiffusionModel<float>;
template struct DiffusionModel<double>;

}  // namespace bridgestain::nn
