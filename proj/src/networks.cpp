#include "unigan/networks.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "unigan/errors.hpp"

namespace unigan {
namespace {

constexpr Scalar kInitStd = 0.02;
constexpr Scalar kLeakySlope = 0.2;
constexpr int kMaxChannelMultiplier = 8;

ag::Var init_tensor(Shape shape, NormalSampler& init, Scalar std) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = round_to_float(std * init());
  return ag::Var::leaf(std::move(t));
}

}  // namespace

Scalar NormalSampler::operator()() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // u1 in (0, 1], u2 in [0, 1)
  const Scalar u1 = (static_cast<Scalar>(rng_() >> 11) + 1.0) * 0x1.0p-53;
  const Scalar u2 = static_cast<Scalar>(rng_() >> 11) * 0x1.0p-53;
  const Scalar r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
  has_spare_ = true;
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

// ---------------------------------------------------------------------------
// Generator

void GeneratorConfig::validate() const {
  if (num_res_blocks < 1) throw ConfigError("num_res_blocks must be >= 1");
  if (base_channels < 8) throw ConfigError("base_channels must be >= 8");
  if (image_channels < 1 || (use_structure && structure_channels < 1)) throw ConfigError("bad channel counts");
}

Generator::Conv Generator::make_conv(const std::string& name, std::int64_t out, std::int64_t in, std::int64_t k,
                                     NormalSampler& init, bool transposed) {
  Conv c;
  c.weight = transposed ? init_tensor({in, out, k, k}, init, kInitStd) : init_tensor({out, in, k, k}, init, kInitStd);
  c.bias = ag::Var::leaf(Tensor({out}, 0.0));
  params_.push_back({name + ".weight", c.weight});
  params_.push_back({name + ".bias", c.bias});
  return c;
}

Generator::Generator(const GeneratorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  NormalSampler init(seed);
  const std::int64_t b = cfg_.base_channels;
  stem_ = make_conv("stem", b, cfg_.input_channels(), 7, init);
  down_.push_back(make_conv("down0", 2 * b, b, 3, init));
  down_.push_back(make_conv("down1", 4 * b, 2 * b, 3, init));
  for (int i = 0; i < cfg_.num_res_blocks; ++i) {
    const auto name = "res" + std::to_string(i);
    auto c1 = make_conv(name + ".conv1", 4 * b, 4 * b, 3, init);
    auto c2 = make_conv(name + ".conv2", 4 * b, 4 * b, 3, init);
    res_.emplace_back(c1, c2);
  }
  up_.push_back(make_conv("up0", 2 * b, 4 * b, 3, init, true));
  up_.push_back(make_conv("up1", b, 2 * b, 3, init, true));
  head_ = make_conv("head", cfg_.image_channels, b, 7, init);
}

ag::Var Generator::forward(const ag::Var& image, const ag::Var& structure) const {
  const auto& shape = image.shape();
  if (shape.size() != 4 || shape[1] != cfg_.image_channels) {
    throw ShapeError("generator image input must be N x " + std::to_string(cfg_.image_channels) + " x H x W, got " +
                     shape_to_string(shape));
  }
  if (shape[2] % 4 != 0 || shape[3] % 4 != 0) {
    throw ShapeError("generator input spatial dims must be multiples of 4, got " + shape_to_string(shape));
  }
  ag::Var x = image;
  if (cfg_.use_structure) {
    if (!structure.defined()) throw ShapeError("generator requires a structure map");
    const auto& s = structure.shape();
    if (s.size() != 4 || s[0] != shape[0] || s[2] != shape[2] || s[3] != shape[3] || s[1] != cfg_.structure_channels) {
      throw ShapeError("structure " + shape_to_string(s) + " misaligned with image " + shape_to_string(shape));
    }
    x = ag::concat_channels({image, structure});
  }

  using namespace ag;
  x = relu(instance_norm(conv2d(reflection_pad(x, 3), stem_.weight, stem_.bias, 1, 0)));
  for (const auto& d : down_) x = relu(instance_norm(conv2d(x, d.weight, d.bias, 2, 1)));
  for (const auto& [c1, c2] : res_) {
    Var h = relu(instance_norm(conv2d(reflection_pad(x, 1), c1.weight, c1.bias, 1, 0)));
    h = instance_norm(conv2d(reflection_pad(h, 1), c2.weight, c2.bias, 1, 0));
    x = x + h;
  }
  for (const auto& u : up_) {
    const auto h = x.shape()[2] * 2, w = x.shape()[3] * 2;
    x = relu(instance_norm(conv_transpose2d(x, u.weight, u.bias, 2, 1, h, w)));
  }
  return ag::tanh(conv2d(reflection_pad(x, 3), head_.weight, head_.bias, 1, 0));
}

// ---------------------------------------------------------------------------
// Patch discriminator

void DiscriminatorConfig::validate() const {
  if (input_channels < 1) throw ConfigError("discriminator input_channels must be >= 1");
  if (base_channels < 1) throw ConfigError("discriminator base_channels must be >= 1");
  if (num_downsamples < 1) throw ConfigError("discriminator num_downsamples must be >= 1");
}

std::int64_t DiscriminatorConfig::receptive_field() const {
  // Walk back from one output cell: r_in = (r_out - 1) * stride + kernel.
  std::int64_t r = 1;
  r = (r - 1) * 1 + 4;  // output conv
  r = (r - 1) * 1 + 4;  // stride-1 conv
  for (int i = 0; i < num_downsamples; ++i) r = (r - 1) * 2 + 4;
  return r;
}

std::int64_t DiscriminatorConfig::patch_grid(std::int64_t side) const {
  for (int i = 0; i < num_downsamples; ++i) side = (side + 2 - 4) / 2 + 1;
  side = (side + 2 - 4) + 1;
  side = (side + 2 - 4) + 1;
  return side;
}

Scalar mean_score(const Tensor& probs) {
  if (probs.empty()) throw ShapeError("mean_score of empty response");
  Scalar s = 0;
  for (auto v : probs.values()) s += v;
  return s / static_cast<Scalar>(probs.size());
}

PatchDiscriminator::PatchDiscriminator(const DiscriminatorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  NormalSampler init(seed);
  auto add = [&](std::int64_t out, std::int64_t in, std::int64_t stride, bool norm) {
    const auto name = "layer" + std::to_string(layers_.size());
    Layer l{init_tensor({out, in, 4, 4}, init, kInitStd), ag::Var::leaf(Tensor({out}, 0.0)), stride, norm};
    params_.push_back({name + ".weight", l.weight});
    params_.push_back({name + ".bias", l.bias});
    layers_.push_back(std::move(l));
  };
  const std::int64_t b = cfg_.base_channels;
  std::int64_t mult = 1;
  add(b, cfg_.input_channels, 2, false);
  for (int i = 1; i < cfg_.num_downsamples; ++i) {
    const auto prev = mult;
    mult = std::min<std::int64_t>(mult * 2, kMaxChannelMultiplier);
    add(b * mult, b * prev, 2, true);
  }
  const auto prev = mult;
  mult = std::min<std::int64_t>(mult * 2, kMaxChannelMultiplier);
  add(b * mult, b * prev, 1, true);
  add(1, b * mult, 1, false);
}

PatchResponse PatchDiscriminator::forward(const ag::Var& stacked) const {
  const auto& s = stacked.shape();
  if (s.size() != 4 || s[1] != cfg_.input_channels) {
    throw ShapeError("discriminator expects " + std::to_string(cfg_.input_channels) + " input channels, got " +
                     shape_to_string(s));
  }
  ag::Var x = stacked;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    x = ag::conv2d(x, l.weight, l.bias, l.stride, 1);
    if (i + 1 == layers_.size()) break;
    if (l.norm) x = ag::instance_norm(x);
    x = ag::leaky_relu(x, kLeakySlope);
  }
  PatchResponse r;
  r.probs = ag::sigmoid(x);
  r.mean_score = mean_score(r.probs.value());
  return r;
}

// ---------------------------------------------------------------------------
// Parameter (de)serialisation

void append_parameters(Container& container, const std::string& prefix, const ParameterList& params) {
  for (const auto& p : params) container.tensors.emplace_back(prefix + p.name, p.var.value());
}

void restore_parameters(const Container& container, const std::string& prefix, const ParameterList& params) {
  for (const auto& p : params) {
    const Tensor& t = container.tensor(prefix + p.name);
    if (t.shape() != p.var.shape()) {
      throw ValidationError("parameter " + prefix + p.name + " has shape " + shape_to_string(t.shape()) +
                            " in checkpoint but " + shape_to_string(p.var.shape()) + " in model");
    }
    p.var.mutable_value() = t;
  }
}

}  // namespace unigan
