#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "unigan/image_io.hpp"
#include "unigan/tensor.hpp"

namespace unigan {

// Batched 3-channel image with values in [-1, 1] and spatial dims divisible by 4.
class ImageTensor {
 public:
  ImageTensor() = default;
  // Validates shape and range; throws ValidationError/ShapeError.
  explicit ImageTensor(Tensor values);

  const Tensor& tensor() const { return values_; }
  std::int64_t batch() const { return values_.n(); }
  std::int64_t height() const { return values_.h(); }
  std::int64_t width() const { return values_.w(); }

 private:
  Tensor values_;
};

enum class StructureKind { keypoint, skeleton, semantic_map, class_label_broadcast };

std::string to_string(StructureKind kind);
StructureKind structure_kind_from_string(const std::string& name);

// Controllable structure raster, same spatial dims as its image.
class StructureMap {
 public:
  StructureMap() = default;
  StructureMap(Tensor values, StructureKind kind);

  const Tensor& tensor() const { return values_; }
  StructureKind kind() const { return kind_; }
  std::int64_t channels() const { return values_.c(); }

 private:
  Tensor values_;
  StructureKind kind_ = StructureKind::skeleton;
};

// x and y show the same identity under structures c_x and c_y.
struct PairedSample {
  ImageTensor x;
  StructureMap c_x;
  ImageTensor y;
  StructureMap c_y;
  std::string identity_tag;
};

enum class Split { train, test };
std::string to_string(Split split);

// Reads `<root>/<split>/pairs.csv` (header `image_a,struct_a,image_b,struct_b,identity`).
// Paths in the manifest are relative to the split directory.
std::vector<PairedSample> load_paired_dataset(const std::filesystem::path& root, Split split,
                                              int structure_channels = 3,
                                              StructureKind kind = StructureKind::skeleton);

// Splits a 3-channel tensor into its r, g, b planes (each N x 1 x H x W).
std::array<Tensor, 3> split_channels(const Tensor& img);
Tensor concat_channels(const std::array<Tensor, 3>& planes);

// ---------------------------------------------------------------------------
// Synthetic data

enum class ToyShape { disc, square, diamond };
std::string to_string(ToyShape shape);
ToyShape toy_shape_from_string(const std::string& name);

struct PaletteEntry {
  ToyShape shape = ToyShape::disc;
  std::array<std::uint8_t, 3> color{255, 255, 255};
};

std::vector<PaletteEntry> default_palette();

struct ToyDatasetSpec {
  int num_pairs = 16;
  int num_test_pairs = 8;
  int image_size = 64;
  std::vector<PaletteEntry> shape_palette = default_palette();
  std::uint64_t rng_seed = 0;

  void validate() const;
};

// Geometry of one rendered pose; centres sit on integer pixel corners so that
// the rasterised shape and marker are point-symmetric about the centre.
struct ToyPose {
  int cx = 0;
  int cy = 0;
  int radius = 8;
  double angle = 0.0;
};

Raster render_toy_image(int size, const PaletteEntry& entry, const ToyPose& pose);
// White two-stroke skeleton of width 4 marking the pose's centre, extent and orientation.
Raster render_toy_structure(int size, const ToyPose& pose);

struct ToyDataset {
  std::vector<PairedSample> train;
  std::vector<PairedSample> test;
};

// Renders the dataset, writes `<out>/{train,test}/pairs.csv` + PNGs and
// `<out>/spec.json`, and returns the in-memory samples. Pure in `spec`.
ToyDataset generate_toy_dataset(const ToyDatasetSpec& spec, const std::filesystem::path& out);
// Same samples without touching the filesystem.
ToyDataset render_toy_dataset(const ToyDatasetSpec& spec);

// ---------------------------------------------------------------------------
// Batching

struct Batch {
  Tensor x, c_x, y, c_y;
  std::int64_t size() const { return x.empty() ? 0 : x.n(); }
};

struct AugmentOptions {
  bool flip = false;    // random left-right flip, applied jointly to the four tensors
  int crop_jitter = 0;  // reflect-pad by this many pixels then random-crop back
};

Batch make_batch(const std::vector<PairedSample>& samples, std::span<const std::size_t> indices);

// Deterministic epoch iterator: order and augmentation depend only on (seed, epoch).
class BatchIterator {
 public:
  BatchIterator(const std::vector<PairedSample>& samples, std::size_t batch_size, std::uint64_t seed,
                AugmentOptions augment = {}, bool shuffle = true);

  std::size_t batches_per_epoch() const;
  // All batches of the given epoch; the last one may be smaller.
  std::vector<Batch> epoch(std::uint64_t epoch_index) const;
  std::vector<std::size_t> order(std::uint64_t epoch_index) const;

 private:
  const std::vector<PairedSample>* samples_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  AugmentOptions augment_;
  bool shuffle_;
};

}  // namespace unigan
