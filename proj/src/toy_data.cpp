#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <random>

#include "unigan/data.hpp"
#include "unigan/errors.hpp"

namespace unigan {
namespace {

constexpr double kMarkerHalfWidth = 2.0;  // stroke width 4
constexpr double kSquareHalfSide = 0.8;   // relative to radius

double unit_real(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

struct Local {
  double u, v;
};

// Pixel centre (x + 0.5, y + 0.5) in the pose's rotated frame.
Local to_local(const ToyPose& pose, int x, int y) {
  const double dx = x + 0.5 - pose.cx, dy = y + 0.5 - pose.cy;
  const double c = std::cos(pose.angle), s = std::sin(pose.angle);
  return {dx * c + dy * s, -dx * s + dy * c};
}

bool inside_shape(ToyShape shape, const Local& p, double r) {
  switch (shape) {
    case ToyShape::disc: return p.u * p.u + p.v * p.v <= r * r;
    case ToyShape::square: return std::abs(p.u) <= kSquareHalfSide * r && std::abs(p.v) <= kSquareHalfSide * r;
    case ToyShape::diamond: return std::abs(p.u) + std::abs(p.v) <= r;
  }
  return false;
}

double segment_distance(double along, double across, double half_length) {
  const double a = std::abs(along);
  if (a <= half_length) return std::abs(across);
  return std::hypot(a - half_length, across);
}

ToyPose random_pose(std::mt19937_64& rng, int size) {
  ToyPose p;
  p.radius = uniform_int(rng, std::max(3, size / 10), std::max(4, size / 6));
  const int margin = p.radius + 2;
  p.cx = uniform_int(rng, margin, size - margin);
  p.cy = uniform_int(rng, margin, size - margin);
  p.angle = unit_real(rng) * std::numbers::pi / 2.0;
  return p;
}

// Second pose of the same identity: same radius, shifted by at most size/4 per axis.
ToyPose moved_pose(std::mt19937_64& rng, int size, const ToyPose& from) {
  const int margin = from.radius + 2, reach = std::max(4, size / 4);
  // Tiny canvases may not allow a 4 px move; settle for the farthest reachable one.
  const auto span = [&](int c) {
    return std::max(std::min(c + reach, size - margin) - c, c - std::max(c - reach, margin));
  };
  const int min_shift2 = std::min(16, span(from.cx) * span(from.cx) + span(from.cy) * span(from.cy));
  for (;;) {
    ToyPose p = from;
    p.cx = std::clamp(from.cx + uniform_int(rng, -reach, reach), margin, size - margin);
    p.cy = std::clamp(from.cy + uniform_int(rng, -reach, reach), margin, size - margin);
    p.angle = unit_real(rng) * std::numbers::pi / 2.0;
    const int dx = p.cx - from.cx, dy = p.cy - from.cy;
    if (dx * dx + dy * dy >= min_shift2) return p;
  }
}

std::string hex_color(const std::array<std::uint8_t, 3>& c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%02x%02x%02x", c[0], c[1], c[2]);
  return buf;
}

struct RenderedPair {
  Raster image_a, struct_a, image_b, struct_b;
  std::string identity;
};

std::vector<RenderedPair> render_split(std::mt19937_64& rng, const ToyDatasetSpec& spec, int count,
                                       const std::string& prefix) {
  std::vector<RenderedPair> out;
  for (int i = 0; i < count; ++i) {
    const auto& entry =
        spec.shape_palette[static_cast<std::size_t>(rng() % static_cast<std::uint64_t>(spec.shape_palette.size()))];
    const ToyPose a = random_pose(rng, spec.image_size);
    const ToyPose b = moved_pose(rng, spec.image_size, a);
    char tag[64];
    std::snprintf(tag, sizeof tag, "%s%03d-%s-%s", prefix.c_str(), i, to_string(entry.shape).c_str(),
                  hex_color(entry.color).c_str());
    out.push_back(RenderedPair{render_toy_image(spec.image_size, entry, a), render_toy_structure(spec.image_size, a),
                               render_toy_image(spec.image_size, entry, b), render_toy_structure(spec.image_size, b),
                               tag});
  }
  return out;
}

std::vector<PairedSample> to_samples(const std::vector<RenderedPair>& pairs) {
  std::vector<PairedSample> samples;
  for (const auto& p : pairs) {
    samples.push_back(PairedSample{ImageTensor(raster_to_tensor(p.image_a)),
                                   StructureMap(raster_to_tensor(p.struct_a), StructureKind::skeleton),
                                   ImageTensor(raster_to_tensor(p.image_b)),
                                   StructureMap(raster_to_tensor(p.struct_b), StructureKind::skeleton), p.identity});
  }
  return samples;
}

void write_split(const std::filesystem::path& dir, const std::vector<RenderedPair>& pairs) {
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / "pairs.csv", std::ios::binary | std::ios::trunc);
  if (!csv) throw IoError("cannot write " + (dir / "pairs.csv").string());
  csv << "image_a,struct_a,image_b,struct_b,identity\n";
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "%03zu", i);
    const std::string ia = std::string("img_") + stem + "_a.png", sa = std::string("struct_") + stem + "_a.png";
    const std::string ib = std::string("img_") + stem + "_b.png", sb = std::string("struct_") + stem + "_b.png";
    write_png(dir / ia, pairs[i].image_a);
    write_png(dir / sa, pairs[i].struct_a);
    write_png(dir / ib, pairs[i].image_b);
    write_png(dir / sb, pairs[i].struct_b);
    csv << ia << ',' << sa << ',' << ib << ',' << sb << ',' << pairs[i].identity << '\n';
  }
  if (!csv.flush()) throw IoError("failed writing " + (dir / "pairs.csv").string());
}

}  // namespace

std::string to_string(ToyShape shape) {
  switch (shape) {
    case ToyShape::disc: return "disc";
    case ToyShape::square: return "square";
    case ToyShape::diamond: return "diamond";
  }
  return "disc";
}

ToyShape toy_shape_from_string(const std::string& name) {
  for (auto s : {ToyShape::disc, ToyShape::square, ToyShape::diamond}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown toy shape '" + name + "'");
}

std::vector<PaletteEntry> default_palette() {
  return {
      {ToyShape::disc, {230, 40, 40}},    {ToyShape::square, {40, 200, 60}},  {ToyShape::diamond, {50, 90, 230}},
      {ToyShape::disc, {240, 220, 40}},   {ToyShape::square, {220, 60, 220}}, {ToyShape::diamond, {40, 210, 210}},
  };
}

void ToyDatasetSpec::validate() const {
  if (num_pairs < 1) throw ValidationError("num_pairs must be >= 1");
  if (num_test_pairs < 0) throw ValidationError("num_test_pairs must be >= 0");
  if (image_size < 16) throw ValidationError("image_size must be at least 16");
  if (image_size % 4 != 0) {
    throw ValidationError("image_size " + std::to_string(image_size) + " must be a multiple of 4");
  }
  if (shape_palette.empty()) throw ValidationError("shape_palette must not be empty");
}

Raster render_toy_image(int size, const PaletteEntry& entry, const ToyPose& pose) {
  Raster r{size, size, std::vector<std::uint8_t>(static_cast<std::size_t>(size * size * 3), 0)};
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      if (!inside_shape(entry.shape, to_local(pose, x, y), pose.radius)) continue;
      for (int c = 0; c < 3; ++c) r.at(y, x, c) = entry.color[static_cast<std::size_t>(c)];
    }
  }
  return r;
}

Raster render_toy_structure(int size, const ToyPose& pose) {
  Raster r{size, size, std::vector<std::uint8_t>(static_cast<std::size_t>(size * size * 3), 0)};
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const auto p = to_local(pose, x, y);
      const double d = std::min(segment_distance(p.u, p.v, pose.radius), segment_distance(p.v, p.u, pose.radius));
      if (d > kMarkerHalfWidth) continue;
      for (int c = 0; c < 3; ++c) r.at(y, x, c) = 255;
    }
  }
  return r;
}

namespace {

std::pair<std::vector<RenderedPair>, std::vector<RenderedPair>> render_all(const ToyDatasetSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.rng_seed);
  auto train = render_split(rng, spec, spec.num_pairs, "train");
  auto test = render_split(rng, spec, spec.num_test_pairs, "test");
  return {std::move(train), std::move(test)};
}

}  // namespace

ToyDataset render_toy_dataset(const ToyDatasetSpec& spec) {
  auto [train, test] = render_all(spec);
  return ToyDataset{to_samples(train), to_samples(test)};
}

ToyDataset generate_toy_dataset(const ToyDatasetSpec& spec, const std::filesystem::path& out) {
  auto [train, test] = render_all(spec);
  write_split(out / "train", train);
  write_split(out / "test", test);

  nlohmann::json sidecar;
  sidecar["num_pairs"] = spec.num_pairs;
  sidecar["num_test_pairs"] = spec.num_test_pairs;
  sidecar["image_size"] = spec.image_size;
  sidecar["rng_seed"] = spec.rng_seed;
  sidecar["structure_kind"] = "skeleton";
  auto& palette = sidecar["shape_palette"] = nlohmann::json::array();
  for (const auto& e : spec.shape_palette) {
    palette.push_back({{"shape", to_string(e.shape)}, {"color", {e.color[0], e.color[1], e.color[2]}}});
  }
  std::ofstream js(out / "spec.json", std::ios::binary | std::ios::trunc);
  if (!js) throw IoError("cannot write " + (out / "spec.json").string());
  js << sidecar.dump(2) << '\n';
  if (!js.flush()) throw IoError("failed writing spec.json");

  return ToyDataset{to_samples(train), to_samples(test)};
}

}  // namespace unigan
