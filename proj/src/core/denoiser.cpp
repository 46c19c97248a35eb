#include "bridgestain/denoiser.hpp"

#include <cstring>
#include <limits>

#include "bridgestain/error.hpp"
#include "bridgestain/rng.hpp"

namespace bridgestain {

const char* to_string(DenoiserKind k) noexcept {
  switch (k) {
    case DenoiserKind::unet: return "unet";
    case DenoiserKind::oracle_exact: return "oracle-exact";
    case DenoiserKind::oracle_plus_noise: return "oracle-plus-noise";
    case DenoiserKind::zero: return "zero";
  }
  return "unknown";
}

namespace {

constexpr ValueRange kUnbounded{-std::numeric_limits<double>::infinity(),
                                std::numeric_limits<double>::infinity()};

void check_query(const DenoiseQuery& q) {
  require(q.x_t != nullptr && q.y != nullptr, ErrorCode::invalid_input, "null denoiser input");
  require_same_shape(*q.x_t, *q.y, "denoiser x_t/y");
}

}  // namespace

ImageTensor Denoiser::evaluate(const ImageTensor& x_t, const ImageTensor& y, int t,
                               int tile) const {
  const DenoiseQuery q{&x_t, &y, t, tile};
  return std::move(evaluate_batch({&q, 1}).front());
}

OracleDenoiser::OracleDenoiser(std::vector<ImageTensor> x0) : x0_(std::move(x0)) {
  require(!x0_.empty(), ErrorCode::invalid_input, "oracle needs at least one ground truth");
}

const ImageTensor& OracleDenoiser::truth(int tile) const {
  require(tile >= 0 && static_cast<std::size_t>(tile) < x0_.size(), ErrorCode::invalid_input,
          "oracle has no ground truth for tile " + std::to_string(tile));
  return x0_[static_cast<std::size_t>(tile)];
}

std::vector<ImageTensor> OracleDenoiser::evaluate_batch(
    std::span<const DenoiseQuery> queries) const {
  std::vector<ImageTensor> out;
  out.reserve(queries.size());
  for (const auto& q : queries) {
    check_query(q);
    const ImageTensor& x0 = truth(q.tile);
    require_same_shape(*q.x_t, x0, "oracle x_t/x0");
    ImageTensor e = *q.x_t - x0;
    e.set_semantics(Semantics::normalized_latent);
    e.set_range(kUnbounded);
    out.push_back(std::move(e));
  }
  return out;
}

NoisyOracleDenoiser::NoisyOracleDenoiser(std::vector<ImageTensor> x0, double sigma,
                                         std::uint64_t seed)
    : OracleDenoiser(std::move(x0)), sigma_(sigma), seed_(seed) {
  require(sigma >= 0.0, ErrorCode::invalid_config, "oracle noise sigma must be >= 0");
}

std::vector<ImageTensor> NoisyOracleDenoiser::evaluate_batch(
    std::span<const DenoiseQuery> queries) const {
  std::vector<ImageTensor> out = OracleDenoiser::evaluate_batch(queries);
  if (sigma_ == 0.0) return out;
  for (std::size_t k = 0; k < queries.size(); ++k) {
    std::uint64_t h = stream_key(seed_, stream_tag::oracle_noise,
                                 (static_cast<std::uint64_t>(queries[k].t) << 32) ^
                                     static_cast<std::uint32_t>(queries[k].tile));
    for (double v : queries[k].x_t->data()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      h = mix64(h ^ bits);
    }
    RngStream rng(h);
    for (double& v : out[k].data()) v += sigma_ * rng.normal();
  }
  return out;
}

std::vector<ImageTensor> ZeroDenoiser::evaluate_batch(
    std::span<const DenoiseQuery> queries) const {
  std::vector<ImageTensor> out;
  out.reserve(queries.size());
  for (const auto& q : queries) {
    check_query(q);
    out.emplace_back(q.x_t->height(), q.x_t->width(), q.x_t->channels(),
                     Semantics::normalized_latent, kUnbounded);
  }
  return out;
}

ImageTensor IdentityConditioner::apply(const ImageTensor& y0) const {
  ImageTensor y = y0;
  y.set_semantics(Semantics::normalized_latent);
  y.set_range(kUnbounded);
  return y;
}

template <typename S>
nn::Matrix<S> pack_images(std::span<const ImageTensor* const> images) {
  require(!images.empty(), ErrorCode::invalid_input, "nothing to pack");
  const ImageTensor& first = *images.front();
  nn::Matrix<S> m(first.channels(), static_cast<Eigen::Index>(images.size() * first.pixels()));
  S* dst = m.data();
  for (const ImageTensor* img : images) {
    require(img->same_shape(first), ErrorCode::invalid_input, "batch images differ in shape");
    for (double v : img->data()) *dst++ = static_cast<S>(v);
  }
  return m;
}

template <typename S>
std::vector<ImageTensor> unpack_images(const nn::Matrix<S>& m, int batch, int height, int width,
                                       Semantics semantics, ValueRange range) {
  const int c = static_cast<int>(m.rows());
  std::vector<ImageTensor> out;
  out.reserve(static_cast<std::size_t>(batch));
  const S* src = m.data();
  for (int b = 0; b < batch; ++b) {
    ImageTensor img(height, width, c, semantics, range);
    for (double& v : img.data()) v = static_cast<double>(*src++);
    out.push_back(std::move(img));
  }
  return out;
}

template <typename S>
NetworkModel<S>::NetworkModel(const ModelSpec& spec, const NormalizationStats& input_stats,
                              const NormalizationStats& target_stats)
    : spec_(spec),
      input_stats_(input_stats),
      target_stats_(target_stats),
      model_(spec.unet, spec.conditioner) {
  require(spec.unet.in_channels == 2 * spec.conditioner.out_channels &&
              spec.unet.out_channels == spec.conditioner.out_channels,
          ErrorCode::invalid_config,
          "U-Net channels must match concat(x_t, y) of the conditioner output");
  require(input_stats.channels() == spec.conditioner.in_channels, ErrorCode::invalid_config,
          "input statistics do not match the conditioner input channels");
  require(target_stats.channels() == spec.conditioner.out_channels, ErrorCode::invalid_config,
          "target statistics do not match the output channels");
}

template <typename S>
std::unique_ptr<NetworkModel<S>> NetworkModel<S>::from_checkpoint(const Checkpoint& ckpt) {
  auto net = std::make_unique<NetworkModel<S>>(ckpt.spec, ckpt.input_stats, ckpt.target_stats);
  import_parameters(ckpt, net->model_);
  return net;
}

template <typename S>
ImageTensor NetworkModel<S>::condition(const ImageTensor& y0) const {
  require(y0.channels() == spec_.conditioner.in_channels, ErrorCode::invalid_input,
          "input has " + std::to_string(y0.channels()) + " channels, model expects " +
              std::to_string(spec_.conditioner.in_channels));
  const ImageTensor norm = normalize(y0, input_stats_);
  const ImageTensor* ptr = &norm;
  const nn::Matrix<S> x = pack_images<S>({&ptr, 1});
  const nn::Geometry g{1, y0.height(), y0.width()};
  const nn::Matrix<S> y = model_.conditioner->forward(x, g, false);
  const int f = spec_.conditioner.factor;
  return std::move(unpack_images<S>(y, 1, y0.height() * f, y0.width() * f,
                                    Semantics::normalized_latent, kUnbounded)
                       .front());
}

template <typename S>
std::vector<ImageTensor> NetworkModel<S>::predict(std::span<const DenoiseQuery> queries) const {
  if (queries.empty()) return {};
  const ImageTensor& first = *queries.front().x_t;
  const int C = first.channels();
  require(2 * C == spec_.unet.in_channels, ErrorCode::invalid_input,
          "x_t has " + std::to_string(C) + " channels, model expects " +
              std::to_string(spec_.unet.in_channels / 2));
  const int B = static_cast<int>(queries.size());
  const std::size_t P = first.pixels();
  nn::Matrix<S> x(2 * C, static_cast<Eigen::Index>(B * P));
  std::vector<int> ts(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) {
    const DenoiseQuery& q = queries[static_cast<std::size_t>(b)];
    check_query(q);
    require(q.x_t->same_shape(first), ErrorCode::invalid_input, "batch images differ in shape");
    const double* xs = q.x_t->data().data();
    const double* ys = q.y->data().data();
    for (std::size_t p = 0; p < P; ++p) {
      S* col = x.data() + (static_cast<std::size_t>(b) * P + p) * 2 * C;
      for (int c = 0; c < C; ++c) {
        col[c] = static_cast<S>(xs[p * C + c]);
        col[C + c] = static_cast<S>(ys[p * C + c]);
      }
    }
    ts[static_cast<std::size_t>(b)] = q.t;
  }
  const nn::Geometry g{B, first.height(), first.width()};
  const nn::Matrix<S> out = model_.unet->forward(x, ts, g, false);
  return unpack_images<S>(out, B, first.height(), first.width(), Semantics::normalized_latent,
                          kUnbounded);
}

template nn::Matrix<float> pack_images<float>(std::span<const ImageTensor* const>);
template nn::Matrix<double> pack_images<double>(std::span<const ImageTensor* const>);
template std::vector<ImageTensor> unpack_images<float>(const nn::Matrix<float>&, int, int, int,
                                                       Semantics, ValueRange);
template std::vector<ImageTensor> unpack_images<double>(const nn::Matrix<double>&, int, int, int,
                                                        Semantics, ValueRange);
template class NetworkModel<float>;
template class NetworkModel<double>;

}  // namespace bridgestain
