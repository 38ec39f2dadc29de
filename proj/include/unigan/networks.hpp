#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "unigan/autograd.hpp"
#include "unigan/checkpoint.hpp"

namespace unigan {

struct NamedParameter {
  std::string name;
  ag::Var var;
};

using ParameterList = std::vector<NamedParameter>;

// Rounds to the nearest binary32 value; persisted state is kept float-representable.
inline Scalar round_to_float(Scalar v) { return static_cast<Scalar>(static_cast<float>(v)); }

// Deterministic normal sampler (Box-Muller over mt19937_64), portable across standard libraries.
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : rng_(seed) {}
  Scalar operator()();

 private:
  std::mt19937_64 rng_;
  bool has_spare_ = false;
  Scalar spare_ = 0;
};

// ---------------------------------------------------------------------------
// Generator

struct GeneratorConfig {
  int num_res_blocks = 9;
  int base_channels = 64;
  int image_channels = 3;
  int structure_channels = 3;
  // When false the generator sees only the image (ablation row B).
  bool use_structure = true;

  int input_channels() const { return image_channels + (use_structure ? structure_channels : 0); }
  void validate() const;
};

// Conv encoder, residual trunk, transposed-conv decoder, Tanh output.
// Input is concat(image, structure) in that channel order.
class Generator {
 public:
  Generator(const GeneratorConfig& cfg, std::uint64_t seed);

  const GeneratorConfig& config() const { return cfg_; }
  // `structure` is ignored (may be undefined) when use_structure is false.
  ag::Var forward(const ag::Var& image, const ag::Var& structure) const;
  ag::Var operator()(const ag::Var& image, const ag::Var& structure) const { return forward(image, structure); }

  const ParameterList& parameters() const { return params_; }

 private:
  struct Conv {
    ag::Var weight, bias;
  };
  Conv make_conv(const std::string& name, std::int64_t out, std::int64_t in, std::int64_t k, NormalSampler& init,
                 bool transposed = false);

  GeneratorConfig cfg_;
  Conv stem_;
  std::vector<Conv> down_;
  std::vector<std::pair<Conv, Conv>> res_;
  std::vector<Conv> up_;
  Conv head_;
  ParameterList params_;
};

// ---------------------------------------------------------------------------
// Patch discriminator

struct DiscriminatorConfig {
  int input_channels = 6;
  int base_channels = 64;
  int num_downsamples = 3;

  void validate() const;
  // Side of the square input region seen by one output cell (70 at defaults).
  std::int64_t receptive_field() const;
  // Output grid side for a square input of the given side.
  std::int64_t patch_grid(std::int64_t input_side) const;
};

struct PatchResponse {
  ag::Var probs;  // N x 1 x h' x w', each in (0, 1)
  Scalar mean_score = 0;
};

Scalar mean_score(const Tensor& probs);

class PatchDiscriminator {
 public:
  PatchDiscriminator(const DiscriminatorConfig& cfg, std::uint64_t seed);

  const DiscriminatorConfig& config() const { return cfg_; }
  PatchResponse forward(const ag::Var& stacked_input) const;
  const ParameterList& parameters() const { return params_; }

 private:
  struct Layer {
    ag::Var weight, bias;
    std::int64_t stride;
    bool norm;
  };
  DiscriminatorConfig cfg_;
  std::vector<Layer> layers_;
  ParameterList params_;
};

// ---------------------------------------------------------------------------
// Feature extractors

struct LayerDims {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::int64_t channels = 0;
};

// Deterministic, differentiable feature map F^k at named tap points.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<std::string> layer_ids() const = 0;
  virtual std::string default_layer() const = 0;
  // Throws ConfigError for unknown layers.
  virtual LayerDims layer_dims(const std::string& layer, std::int64_t in_h, std::int64_t in_w) const = 0;
  virtual ag::Var extract(const ag::Var& image, const std::string& layer) const = 0;

  bool has_layer(const std::string& layer) const;
};

// Forward without graph recording.
Tensor extract_features(const FeatureExtractor& extractor, const Tensor& image, const std::string& layer);
// One flattened feature vector per sample. With pool_grid > 0 square maps are
// average-pooled down to pool_grid x pool_grid first.
std::vector<std::vector<Scalar>> embed(const FeatureExtractor& extractor, const Tensor& image,
                                       const std::string& layer, std::int64_t pool_grid = 0);

// Three fixed-seed conv stages with tanh; no learned weights.
// conv1: stride 1, conv2/conv3: stride 2.
class ToyExtractor final : public FeatureExtractor {
 public:
  explicit ToyExtractor(std::uint64_t seed = 1234, std::vector<int> channels = {8, 16, 32}, int in_channels = 3);

  std::vector<std::string> layer_ids() const override { return {"conv1", "conv2", "conv3"}; }
  std::string default_layer() const override { return "conv2"; }
  LayerDims layer_dims(const std::string& layer, std::int64_t in_h, std::int64_t in_w) const override;
  ag::Var extract(const ag::Var& image, const std::string& layer) const override;

 private:
  int stage_index(const std::string& layer) const;
  std::vector<ag::Var> weights_, biases_;
  std::vector<int> channels_;
};

// F(x) = x; reduces the perceptual loss to a scaled pixel L1.
class IdentityExtractor final : public FeatureExtractor {
 public:
  std::vector<std::string> layer_ids() const override { return {"identity"}; }
  std::string default_layer() const override { return "identity"; }
  LayerDims layer_dims(const std::string& layer, std::int64_t in_h, std::int64_t in_w) const override;
  ag::Var extract(const ag::Var& image, const std::string& layer) const override;
};

// Adapter for externally trained sequential conv nets exported into the
// container format: a JSON record "network" lists the layers, tensors hold
// "<layer>.weight"/"<layer>.bias". Supported layer types: conv, relu, tanh,
// avg_pool, global_avg_pool, linear. Inputs in [-1, 1] are mapped to [0, 1]
// and standardised with the record's per-channel mean/std.
class SequentialExtractor final : public FeatureExtractor {
 public:
  static std::unique_ptr<SequentialExtractor> load(const std::filesystem::path& weights);
  explicit SequentialExtractor(const Container& container);

  std::vector<std::string> layer_ids() const override;
  std::string default_layer() const override;
  LayerDims layer_dims(const std::string& layer, std::int64_t in_h, std::int64_t in_w) const override;
  ag::Var extract(const ag::Var& image, const std::string& layer) const override;

 private:
  struct Layer {
    std::string id;
    std::string type;
    std::int64_t stride = 1, pad = 0, kernel = 1;
    ag::Var weight, bias;
  };
  std::size_t index_of(const std::string& layer) const;
  std::vector<Layer> layers_;
  std::vector<Scalar> mean_, std_;
};

// ---------------------------------------------------------------------------
// Parameter (de)serialisation

void append_parameters(Container& container, const std::string& prefix, const ParameterList& params);
// Copies values from the container; shapes must match exactly.
void restore_parameters(const Container& container, const std::string& prefix, const ParameterList& params);

}  // namespace unigan
