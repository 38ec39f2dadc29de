#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "unigan/data.hpp"
#include "unigan/errors.hpp"
#include "unigan/losses.hpp"
#include "unigan/networks.hpp"

namespace unigan {

// ---------------------------------------------------------------------------
// Ablation ladder

enum class AblationRow { B, C, D, E11, E12, E13, E14, E15, E16, E21, E22, E3, E41, E42, F, F14 };

std::string to_string(AblationRow row);
// Throws ConfigError for unknown rows and for row A (unpaired training is not supported).
AblationRow ablation_row_from_string(const std::string& name);
const std::vector<AblationRow>& all_ablation_rows();

// Which parts of the objective and which discriminators a run uses.
struct ModelToggles {
  bool use_structure = true;  // generator sees C_y
  bool struct_disc = true;    // D([x, C_y], .)
  bool plain_disc = false;    // D(x, .)
  bool cycle = false;
  bool color_on_y = false;
  bool color_on_x = false;
  Norm color_norm = Norm::L1;
  bool plain_l1 = false;
  bool plain_l2 = false;
  bool self_content = false;
  bool perceptual = false;
  bool tv = false;

  bool operator==(const ModelToggles&) const = default;
};

ModelToggles configure_ablation(AblationRow row);

// ---------------------------------------------------------------------------
// Configuration

enum class Preset { gesture, crossview, custom };
std::string to_string(Preset preset);
Preset preset_from_string(const std::string& name);

// Lambda values pinned by a preset; custom returns all zeros.
LossWeights preset_weights(Preset preset);

struct TrainConfig {
  LossWeights weights = preset_weights(Preset::gesture);
  Scalar lr = 0.0002;
  Scalar beta1 = 0.5;
  Scalar beta2 = 0.999;
  Scalar adam_eps = 1e-8;
  int batch_size = 4;
  int epochs = 20;
  // When > 0, training stops after this many steps regardless of epochs.
  std::int64_t max_steps = 0;
  std::uint64_t seed = 0;
  Preset preset = Preset::gesture;
  AblationRow ablation = AblationRow::F;

  int num_res_blocks = 9;
  int gen_base_channels = 64;
  int disc_base_channels = 64;
  int disc_num_downsamples = 3;
  int structure_channels = 3;

  // "toy" or a path to an exported sequential extractor.
  std::string extractor = "toy";
  std::string perceptual_layer;  // empty: the extractor's default tap

  std::int64_t checkpoint_interval = 0;  // 0: only the final checkpoint
  AugmentOptions augment;

  // Loss toggles derived from `ablation`.
  ModelToggles toggles() const { return configure_ablation(ablation); }
  // Copies preset lambdas into `weights` (no-op for custom).
  void apply_preset();
  void validate() const;
  GeneratorConfig generator_config() const;
  DiscriminatorConfig struct_disc_config() const;
  DiscriminatorConfig plain_disc_config() const;
};

std::unique_ptr<FeatureExtractor> make_extractor(const std::string& spec);

// ---------------------------------------------------------------------------
// Optimiser

// Adam whose parameters and moments are rounded to binary32 after every
// update, so the persisted state is exact.
class Adam {
 public:
  Adam() = default;
  Adam(const ParameterList& params, Scalar lr, Scalar beta1, Scalar beta2, Scalar eps);

  // Applies one update using the parameters' current gradients; `step` is 1-based.
  void step(std::int64_t step);

  void save(Container& out, const std::string& prefix) const;
  void load(const Container& in, const std::string& prefix);

  const std::vector<Tensor>& first_moments() const { return m_; }

 private:
  ParameterList params_;
  std::vector<Tensor> m_, v_;
  Scalar lr_ = 0, beta1_ = 0, beta2_ = 0, eps_ = 0;
};

// ---------------------------------------------------------------------------
// State

class TrainState {
 public:
  explicit TrainState(const TrainConfig& cfg);

  const TrainConfig& config() const { return cfg_; }
  const Generator& generator() const { return *generator_; }
  const PatchDiscriminator* struct_disc() const { return struct_disc_.get(); }
  const PatchDiscriminator* plain_disc() const { return plain_disc_.get(); }
  const FeatureExtractor& extractor() const { return *extractor_; }
  const std::string& perceptual_layer() const { return layer_; }

  std::int64_t step() const { return step_; }
  std::mt19937_64& rng() { return rng_; }

  // Counts generator forward passes; instrumentation for tests.
  std::int64_t generator_calls() const { return generator_calls_; }

  void save(const std::filesystem::path& path) const;
  static TrainState load(const std::filesystem::path& path);
  static TrainState from_container(const Container& c);
  Container to_container() const;

 private:
  friend LossReport train_step(TrainState& state, const Batch& batch);

  TrainConfig cfg_;
  std::unique_ptr<Generator> generator_;
  std::unique_ptr<PatchDiscriminator> struct_disc_, plain_disc_;
  std::shared_ptr<FeatureExtractor> extractor_;
  std::string layer_;
  Adam adam_g_, adam_ds_, adam_dp_;
  std::int64_t step_ = 0;
  std::mt19937_64 rng_;
  std::int64_t generator_calls_ = 0;
};

// Raised when a loss turns non-finite; carries the partial report.
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, LossReport report) : NumericError(what), report_(report) {}
  const LossReport& report() const { return report_; }

 private:
  LossReport report_;
};

// Generator update with discriminators frozen, then one discriminator update on
// the detached fakes. Increments the step counter.
LossReport train_step(TrainState& state, const Batch& batch);

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: no files written
  bool write_log = true;
  std::function<void(std::int64_t step, const LossReport&)> on_step;
};

struct TrainResult {
  std::int64_t steps = 0;
  LossReport last;
  std::filesystem::path final_checkpoint;
};

std::int64_t total_steps(const TrainConfig& cfg, std::size_t num_samples);

// Runs from state.step() up to total_steps; the batch for step s comes from
// epoch s / batches_per_epoch, so interrupted runs resume identically.
TrainResult train(const std::vector<PairedSample>& data, TrainState& state, const TrainOptions& options = {});

// One output per structure, in order.
std::vector<Tensor> translate(const TrainState& state, const Tensor& image, const std::vector<Tensor>& structures);
std::vector<Tensor> translate(const std::filesystem::path& checkpoint, const Tensor& image,
                              const std::vector<Tensor>& structures);

}  // namespace unigan
