#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "unigan/data.hpp"
#include "unigan/errors.hpp"

namespace unigan {
namespace {

constexpr Scalar kRangeSlack = 1e-9;

void check_range(const Tensor& t, const char* what) {
  for (auto v : t.values()) {
    if (!(v >= -1.0 - kRangeSlack && v <= 1.0 + kRangeSlack)) {
      throw ValidationError(std::string(what) + " value " + std::to_string(v) + " outside [-1, 1]");
    }
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    while (!field.empty() && field.front() == ' ') field.erase(field.begin());
    fields.push_back(field);
  }
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

// Fisher-Yates on raw engine output; independent of the standard library's distributions.
void deterministic_shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

Tensor flip_lr(const Tensor& t) {
  Tensor out(t.shape());
  for (std::int64_t n = 0; n < t.n(); ++n)
    for (std::int64_t c = 0; c < t.c(); ++c)
      for (std::int64_t y = 0; y < t.h(); ++y)
        for (std::int64_t x = 0; x < t.w(); ++x) out.at(n, c, y, x) = t.at(n, c, y, t.w() - 1 - x);
  return out;
}

// Reflect-pad by `pad`, then crop the original size at offset (oy, ox) in [0, 2*pad].
Tensor jitter_crop(const Tensor& t, int pad, int oy, int ox) {
  auto reflect = [](std::int64_t i, std::int64_t n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
  };
  Tensor out(t.shape());
  for (std::int64_t n = 0; n < t.n(); ++n)
    for (std::int64_t c = 0; c < t.c(); ++c)
      for (std::int64_t y = 0; y < t.h(); ++y)
        for (std::int64_t x = 0; x < t.w(); ++x) {
          out.at(n, c, y, x) = t.at(n, c, reflect(y + oy - pad, t.h()), reflect(x + ox - pad, t.w()));
        }
  return out;
}

}  // namespace

ImageTensor::ImageTensor(Tensor values) : values_(std::move(values)) {
  if (values_.rank() != 4 || values_.c() != 3) {
    throw ShapeError("image tensor must be N x 3 x H x W, got " + shape_to_string(values_.shape()));
  }
  if (values_.h() % 4 != 0 || values_.w() % 4 != 0) {
    throw ShapeError("image height and width must be multiples of 4, got " + shape_to_string(values_.shape()));
  }
  check_range(values_, "image");
}

std::string to_string(StructureKind kind) {
  switch (kind) {
    case StructureKind::keypoint: return "keypoint";
    case StructureKind::skeleton: return "skeleton";
    case StructureKind::semantic_map: return "semantic_map";
    case StructureKind::class_label_broadcast: return "class_label_broadcast";
  }
  return "skeleton";
}

StructureKind structure_kind_from_string(const std::string& name) {
  for (auto k : {StructureKind::keypoint, StructureKind::skeleton, StructureKind::semantic_map,
                 StructureKind::class_label_broadcast}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown structure kind '" + name + "'");
}

StructureMap::StructureMap(Tensor values, StructureKind kind) : values_(std::move(values)), kind_(kind) {
  if (values_.rank() != 4 || values_.c() < 1) {
    throw ShapeError("structure map must be N x C x H x W, got " + shape_to_string(values_.shape()));
  }
  check_range(values_, "structure");
  if (kind_ == StructureKind::class_label_broadcast) {
    const auto hw = static_cast<std::size_t>(values_.h() * values_.w());
    for (std::size_t plane = 0; plane < values_.size() / hw; ++plane) {
      const Scalar first = values_[plane * hw];
      for (std::size_t i = 1; i < hw; ++i) {
        if (values_[plane * hw + i] != first) {
          throw ValidationError("class_label_broadcast structure must be spatially constant per channel");
        }
      }
    }
  }
}

std::string to_string(Split split) { return split == Split::train ? "train" : "test"; }

std::vector<PairedSample> load_paired_dataset(const std::filesystem::path& root, Split split, int structure_channels,
                                              StructureKind kind) {
  const auto dir = root / to_string(split);
  const auto manifest = dir / "pairs.csv";
  std::ifstream in(manifest);
  if (!in) throw LoadError("missing manifest " + manifest.string());

  std::string line;
  if (!std::getline(in, line)) throw LoadError("empty manifest " + manifest.string());
  const std::vector<std::string> expected{"image_a", "struct_a", "image_b", "struct_b", "identity"};
  if (split_csv_line(line) != expected) {
    throw LoadError("manifest header must be 'image_a,struct_a,image_b,struct_b,identity' in " + manifest.string());
  }

  std::vector<PairedSample> samples;
  int row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    const auto fields = split_csv_line(line);
    if (fields.size() != 5) {
      throw LoadError("row " + std::to_string(row) + " of " + manifest.string() + " has " +
                      std::to_string(fields.size()) + " fields, expected 5");
    }
    std::array<Raster, 4> rasters;
    for (std::size_t i = 0; i < 4; ++i) {
      const auto path = dir / fields[i];
      if (!std::filesystem::exists(path)) {
        throw LoadError("row " + std::to_string(row) + ": missing file " + fields[i]);
      }
      try {
        rasters[i] = read_png(path);
      } catch (const LoadError& e) {
        throw LoadError("row " + std::to_string(row) + ": " + e.what());
      }
    }
    for (std::size_t i = 1; i < 4; ++i) {
      if (rasters[i].width != rasters[0].width || rasters[i].height != rasters[0].height) {
        throw ValidationError("row " + std::to_string(row) + ": " + fields[i] + " is " +
                              std::to_string(rasters[i].width) + "x" + std::to_string(rasters[i].height) +
                              " but " + fields[0] + " is " + std::to_string(rasters[0].width) + "x" +
                              std::to_string(rasters[0].height));
      }
    }
    try {
      samples.push_back(PairedSample{ImageTensor(raster_to_tensor(rasters[0])),
                                     StructureMap(raster_to_tensor(rasters[1], structure_channels), kind),
                                     ImageTensor(raster_to_tensor(rasters[2])),
                                     StructureMap(raster_to_tensor(rasters[3], structure_channels), kind), fields[4]});
    } catch (const ValidationError& e) {
      throw ValidationError("row " + std::to_string(row) + ": " + e.what());
    }
  }
  return samples;
}

std::array<Tensor, 3> split_channels(const Tensor& img) {
  if (img.rank() != 4 || img.c() != 3) {
    throw ValidationError("split_channels expects 3 channels, got " + shape_to_string(img.shape()));
  }
  const auto hw = img.h() * img.w();
  std::array<Tensor, 3> planes;
  for (std::int64_t c = 0; c < 3; ++c) {
    planes[static_cast<std::size_t>(c)] = Tensor({img.n(), 1, img.h(), img.w()});
    for (std::int64_t n = 0; n < img.n(); ++n) {
      std::copy_n(img.data() + (n * 3 + c) * hw, hw, planes[static_cast<std::size_t>(c)].data() + n * hw);
    }
  }
  return planes;
}

Tensor concat_channels(const std::array<Tensor, 3>& planes) {
  const auto& r = planes[0];
  for (const auto& p : planes) {
    if (p.shape() != r.shape() || p.rank() != 4 || p.c() != 1) throw ShapeError("concat_channels: plane mismatch");
  }
  const auto hw = r.h() * r.w();
  Tensor out({r.n(), 3, r.h(), r.w()});
  for (std::int64_t n = 0; n < r.n(); ++n) {
    for (std::int64_t c = 0; c < 3; ++c) {
      std::copy_n(planes[static_cast<std::size_t>(c)].data() + n * hw, hw, out.data() + (n * 3 + c) * hw);
    }
  }
  return out;
}

Batch make_batch(const std::vector<PairedSample>& samples, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ValidationError("empty batch");
  std::vector<Tensor> x, cx, y, cy;
  for (auto i : indices) {
    const auto& s = samples.at(i);
    x.push_back(s.x.tensor());
    cx.push_back(s.c_x.tensor());
    y.push_back(s.y.tensor());
    cy.push_back(s.c_y.tensor());
  }
  return Batch{stack_batch(x), stack_batch(cx), stack_batch(y), stack_batch(cy)};
}

BatchIterator::BatchIterator(const std::vector<PairedSample>& samples, std::size_t batch_size, std::uint64_t seed,
                             AugmentOptions augment, bool shuffle)
    : samples_(&samples), batch_size_(batch_size), seed_(seed), augment_(augment), shuffle_(shuffle) {
  if (batch_size_ == 0) throw ValidationError("batch size must be positive");
  if (samples.empty()) throw ValidationError("dataset is empty");
}

std::size_t BatchIterator::batches_per_epoch() const {
  return (samples_->size() + batch_size_ - 1) / batch_size_;
}

std::vector<std::size_t> BatchIterator::order(std::uint64_t epoch_index) const {
  std::vector<std::size_t> idx(samples_->size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  if (shuffle_) {
    std::mt19937_64 rng(seed_ * 0x9E3779B97F4A7C15ULL + epoch_index + 1);
    deterministic_shuffle(idx, rng);
  }
  return idx;
}

std::vector<Batch> BatchIterator::epoch(std::uint64_t epoch_index) const {
  const auto idx = order(epoch_index);
  std::mt19937_64 aug_rng(seed_ ^ (0xA5A5A5A5ULL + 7919ULL * epoch_index));
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < idx.size(); start += batch_size_) {
    const auto end = std::min(idx.size(), start + batch_size_);
    std::vector<PairedSample> picked;
    for (std::size_t i = start; i < end; ++i) {
      PairedSample s = (*samples_)[idx[i]];
      if (augment_.flip || augment_.crop_jitter > 0) {
        Tensor x = s.x.tensor(), cx = s.c_x.tensor(), y = s.y.tensor(), cy = s.c_y.tensor();
        if (augment_.flip && (aug_rng() & 1ULL)) {
          x = flip_lr(x), cx = flip_lr(cx), y = flip_lr(y), cy = flip_lr(cy);
        }
        if (augment_.crop_jitter > 0) {
          const auto span = static_cast<std::uint64_t>(2 * augment_.crop_jitter + 1);
          const int oy = static_cast<int>(aug_rng() % span), ox = static_cast<int>(aug_rng() % span);
          x = jitter_crop(x, augment_.crop_jitter, oy, ox);
          cx = jitter_crop(cx, augment_.crop_jitter, oy, ox);
          y = jitter_crop(y, augment_.crop_jitter, oy, ox);
          cy = jitter_crop(cy, augment_.crop_jitter, oy, ox);
        }
        s = PairedSample{ImageTensor(std::move(x)), StructureMap(std::move(cx), s.c_x.kind()),
                         ImageTensor(std::move(y)), StructureMap(std::move(cy), s.c_y.kind()), s.identity_tag};
      }
      picked.push_back(std::move(s));
    }
    std::vector<std::size_t> all(picked.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    batches.push_back(make_batch(picked, all));
  }
  return batches;
}

}  // namespace unigan
