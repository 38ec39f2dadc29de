#include <cmath>
#include <fstream>

#include <json.hpp>

#include "unigan/errors.hpp"
#include "unigan/networks.hpp"

namespace unigan {

bool FeatureExtractor::has_layer(const std::string& layer) const {
  for (const auto& id : layer_ids()) {
    if (id == layer) return true;
  }
  return false;
}

Tensor extract_features(const FeatureExtractor& extractor, const Tensor& image, const std::string& layer) {
  ag::NoGradGuard guard;
  return extractor.extract(ag::Var::constant(image), layer).value();
}

std::vector<std::vector<Scalar>> embed(const FeatureExtractor& extractor, const Tensor& image,
                                       const std::string& layer, std::int64_t pool_grid) {
  ag::NoGradGuard guard;
  ag::Var f = extractor.extract(ag::Var::constant(image), layer);
  if (pool_grid > 0 && f.shape()[2] > pool_grid && f.shape()[2] % pool_grid == 0 &&
      f.shape()[3] == f.shape()[2]) {
    f = ag::avg_pool2d(f, f.shape()[2] / pool_grid);
  }
  const Tensor& t = f.value();
  const auto n = t.dim(0);
  const auto d = static_cast<std::size_t>(t.size() / static_cast<std::size_t>(n));
  std::vector<std::vector<Scalar>> rows(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    rows[static_cast<std::size_t>(i)].assign(t.data() + i * static_cast<std::int64_t>(d),
                                             t.data() + (i + 1) * static_cast<std::int64_t>(d));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// ToyExtractor

ToyExtractor::ToyExtractor(std::uint64_t seed, std::vector<int> channels, int in_channels)
    : channels_(std::move(channels)) {
  if (channels_.size() != 3) throw ConfigError("toy extractor needs exactly three stages");
  NormalSampler init(seed);
  std::int64_t in = in_channels;
  for (int out : channels_) {
    // Unit-variance projections keep tanh out of saturation.
    const Scalar std = 1.0 / std::sqrt(static_cast<Scalar>(in * 9));
    Tensor w({out, in, 3, 3});
    for (auto& v : w.values()) v = std * init();
    Tensor b({out});
    for (auto& v : b.values()) v = 0.1 * init();
    weights_.push_back(ag::Var::constant(std::move(w)));
    biases_.push_back(ag::Var::constant(std::move(b)));
    in = out;
  }
}

int ToyExtractor::stage_index(const std::string& layer) const {
  if (layer == "conv1") return 0;
  if (layer == "conv2") return 1;
  if (layer == "conv3") return 2;
  throw ConfigError("unknown feature layer '" + layer + "' (toy extractor has conv1, conv2, conv3)");
}

LayerDims ToyExtractor::layer_dims(const std::string& layer, std::int64_t in_h, std::int64_t in_w) const {
  const int k = stage_index(layer);
  LayerDims d{in_w, in_h, channels_[static_cast<std::size_t>(k)]};
  for (int i = 1; i <= k; ++i) {
    d.width = (d.width - 1) / 2 + 1;
    d.height = (d.height - 1) / 2 + 1;
  }
  return d;
}

ag::Var ToyExtractor::extract(const ag::Var& image, const std::string& layer) const {
  const int k = stage_index(layer);
  ag::Var x = image;
  for (int i = 0; i <= k; ++i) {
    const std::int64_t stride = i == 0 ? 1 : 2;
    x = ag::tanh(ag::conv2d(x, weights_[static_cast<std::size_t>(i)], biases_[static_cast<std::size_t>(i)], stride, 1));
  }
  return x;
}

// ---------------------------------------------------------------------------
// IdentityExtractor

LayerDims IdentityExtractor::layer_dims(const std::string& layer, std::int64_t in_h, std::int64_t in_w) const {
  if (layer != "identity") throw ConfigError("unknown feature layer '" + layer + "' (identity extractor)");
  return {in_w, in_h, 3};
}

ag::Var IdentityExtractor::extract(const ag::Var& image, const std::string& layer) const {
  if (layer != "identity") throw ConfigError("unknown feature layer '" + layer + "' (identity extractor)");
  return image;
}

// ---------------------------------------------------------------------------
// SequentialExtractor

std::unique_ptr<SequentialExtractor> SequentialExtractor::load(const std::filesystem::path& weights) {
  return std::make_unique<SequentialExtractor>(load_container(weights));
}

SequentialExtractor::SequentialExtractor(const Container& container) {
  nlohmann::json net;
  try {
    net = nlohmann::json::parse(container.record("network"));
    mean_ = net.at("mean").get<std::vector<Scalar>>();
    std_ = net.at("std").get<std::vector<Scalar>>();
    for (const auto& spec : net.at("layers")) {
      Layer l;
      l.id = spec.at("id").get<std::string>();
      l.type = spec.at("type").get<std::string>();
      l.stride = spec.value("stride", 1);
      l.pad = spec.value("pad", 0);
      l.kernel = spec.value("kernel", 1);
      if (l.type == "conv" || l.type == "linear") {
        Tensor w = container.tensor(l.id + ".weight");
        if (l.type == "linear") {
          if (w.rank() != 2) throw LoadError("linear layer " + l.id + " weight must be rank 2");
          w = w.reshaped({w.dim(0), w.dim(1), 1, 1});
        } else if (w.rank() != 4 || w.dim(2) != w.dim(3)) {
          throw LoadError("conv layer " + l.id + " weight must be [out, in, k, k]");
        }
        l.kernel = w.dim(2);
        l.weight = ag::Var::constant(std::move(w));
        if (container.has_tensor(l.id + ".bias")) l.bias = ag::Var::constant(container.tensor(l.id + ".bias"));
      } else if (l.type != "relu" && l.type != "tanh" && l.type != "avg_pool" && l.type != "global_avg_pool") {
        throw LoadError("unsupported layer type '" + l.type + "'");
      }
      layers_.push_back(std::move(l));
    }
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("malformed extractor description: ") + e.what());
  }
  if (layers_.empty()) throw LoadError("extractor has no layers");
  if (mean_.size() != std_.size()) throw LoadError("extractor mean/std length mismatch");
}

std::vector<std::string> SequentialExtractor::layer_ids() const {
  std::vector<std::string> ids;
  for (const auto& l : layers_) ids.push_back(l.id);
  return ids;
}

std::string SequentialExtractor::default_layer() const { return layers_.back().id; }

std::size_t SequentialExtractor::index_of(const std::string& layer) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].id == layer) return i;
  }
  throw ConfigError("unknown feature layer '" + layer + "'");
}

LayerDims SequentialExtractor::layer_dims(const std::string& layer, std::int64_t in_h, std::int64_t in_w) const {
  const auto last = index_of(layer);
  LayerDims d{in_w, in_h, static_cast<std::int64_t>(mean_.size())};
  for (std::size_t i = 0; i <= last; ++i) {
    const auto& l = layers_[i];
    if (l.type == "conv" || l.type == "linear") {
      d.channels = l.weight.shape()[0];
      d.width = (d.width + 2 * l.pad - l.kernel) / l.stride + 1;
      d.height = (d.height + 2 * l.pad - l.kernel) / l.stride + 1;
    } else if (l.type == "avg_pool") {
      d.width /= l.kernel;
      d.height /= l.kernel;
    } else if (l.type == "global_avg_pool") {
      d.width = d.height = 1;
    }
  }
  return d;
}

ag::Var SequentialExtractor::extract(const ag::Var& image, const std::string& layer) const {
  const auto last = index_of(layer);
  const auto& s = image.shape();
  if (s.size() != 4 || s[1] != static_cast<std::int64_t>(mean_.size())) {
    throw ShapeError("extractor expects " + std::to_string(mean_.size()) + " channels, got " + shape_to_string(s));
  }
  // [-1, 1] -> [0, 1] -> (v - mean) / std, folded into one affine map per channel.
  std::vector<ag::Var> planes;
  for (std::size_t c = 0; c < mean_.size(); ++c) {
    auto p = ag::slice_channels(image, static_cast<std::int64_t>(c), 1);
    p = ag::add_scalar(ag::scale(p, 0.5 / std_[c]), (0.5 - mean_[c]) / std_[c]);
    planes.push_back(p);
  }
  ag::Var x = ag::concat_channels(planes);
  for (std::size_t i = 0; i <= last; ++i) {
    const auto& l = layers_[i];
    if (l.type == "conv" || l.type == "linear") {
      x = ag::conv2d(x, l.weight, l.bias, l.stride, l.pad);
    } else if (l.type == "relu") {
      x = ag::relu(x);
    } else if (l.type == "tanh") {
      x = ag::tanh(x);
    } else if (l.type == "avg_pool") {
      x = ag::avg_pool2d(x, l.kernel);
    } else {
      x = ag::global_avg_pool(x);
    }
  }
  return x;
}

}  // namespace unigan
