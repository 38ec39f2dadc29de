#include "unigan/evaluate.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "unigan/errors.hpp"

namespace unigan {
namespace {

bool wanted(const EvalOptions& o, const std::string& name) {
  return std::find(o.metrics.begin(), o.metrics.end(), name) != o.metrics.end();
}

std::string fmt(Scalar v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

Scalar mean_of(const std::vector<Scalar>& v) {
  Scalar s = 0;
  for (auto x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<Scalar>(v.size());
}

// Display raster for a structure map with any channel count.
Raster structure_raster(const Tensor& s) {
  if (s.c() == 3 || s.c() == 1) return tensor_to_raster(s, 0);
  Tensor first({1, 1, s.h(), s.w()});
  for (std::int64_t y = 0; y < s.h(); ++y) {
    for (std::int64_t x = 0; x < s.w(); ++x) first.at(0, 0, y, x) = s.at(0, 0, y, x);
  }
  return tensor_to_raster(first, 0);
}

}  // namespace

const std::vector<std::string>& known_metrics() {
  static const std::vector<std::string> names = {"psnr", "ssim", "sd", "fid", "frd"};
  return names;
}

std::vector<std::string> parse_metric_list(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (std::find(known_metrics().begin(), known_metrics().end(), item) == known_metrics().end()) {
      throw ConfigError("unknown metric '" + item + "' (known: psnr, ssim, sd, fid, frd)");
    }
    if (std::find(out.begin(), out.end(), item) == out.end()) out.push_back(item);
  }
  if (out.empty()) throw ConfigError("no metrics selected");
  return out;
}

Scalar MetricReport::value(const std::string& metric) const {
  for (const auto& [name, v] : rows) {
    if (name == metric) return v;
  }
  throw ValidationError("metric '" + metric + "' not in report");
}

std::string MetricReport::to_csv() const {
  std::string out = "metric,value\n";
  for (const auto& [name, v] : rows) out += name + "," + fmt(v) + "\n";
  return out;
}

std::string MetricReport::pairs_to_csv() const {
  std::string out = "index";
  for (const auto& c : pair_columns) out += "," + c;
  out += "\n";
  const std::size_t n = pair_values.empty() ? 0 : pair_values.front().size();
  for (std::size_t i = 0; i < n; ++i) {
    out += std::to_string(i);
    for (const auto& col : pair_values) out += "," + fmt(col[i]);
    out += "\n";
  }
  return out;
}

MetricReport evaluate_images(const std::vector<Tensor>& real, const std::vector<Tensor>& generated,
                             const FeatureExtractor* extractor, const EvalOptions& o) {
  if (real.size() != generated.size()) {
    throw ValidationError("evaluation needs equal counts of real and generated images");
  }
  if (real.empty()) throw ValidationError("evaluation set is empty");
  MetricReport report;
  std::vector<Scalar> p_psnr, p_ssim, p_sd;
  for (std::size_t i = 0; i < real.size(); ++i) {
    const Tensor a = to_data_range(real[i], o.data_range);
    const Tensor b = to_data_range(generated[i], o.data_range);
    if (wanted(o, "psnr")) p_psnr.push_back(psnr(a, b, o.data_range));
    if (wanted(o, "ssim")) p_ssim.push_back(ssim(a, b, o.data_range));
    if (wanted(o, "sd")) p_sd.push_back(sharpness_difference(a, b, o.data_range));
  }

  FeatureMatrix f_real, f_gen;
  if (wanted(o, "fid") || wanted(o, "frd")) {
    if (extractor == nullptr) throw ConfigError("fid/frd need a feature extractor");
    const std::string layer = o.layer.empty() ? extractor->default_layer() : o.layer;
    for (std::size_t i = 0; i < real.size(); ++i) {
      for (auto& row : embed(*extractor, real[i], layer, o.pool_grid)) f_real.push_back(std::move(row));
      for (auto& row : embed(*extractor, generated[i], layer, o.pool_grid)) f_gen.push_back(std::move(row));
    }
  }
  std::vector<Scalar> p_frd;
  if (wanted(o, "frd")) p_frd = frd_per_pair(f_real, f_gen);

  // Rows follow the canonical metric order.
  for (const auto& name : known_metrics()) {
    if (!wanted(o, name)) continue;
    if (name == "psnr") report.rows.emplace_back(name, mean_of(p_psnr));
    if (name == "ssim") report.rows.emplace_back(name, mean_of(p_ssim));
    if (name == "sd") report.rows.emplace_back(name, mean_of(p_sd));
    if (name == "frd") report.rows.emplace_back(name, mean_of(p_frd));
    if (name == "fid") {
      if (f_real.size() < f_real.front().size()) {
        report.warnings.push_back("fid: " + std::to_string(f_real.size()) + " samples for " +
                                  std::to_string(f_real.front().size()) +
                                  "-dimensional features; covariance is rank deficient");
      }
      report.rows.emplace_back(name, fid(GaussianStats::from_features(f_real), GaussianStats::from_features(f_gen)));
    }
  }
  auto add_col = [&](const char* name, std::vector<Scalar>& v) {
    if (v.empty()) return;
    report.pair_columns.emplace_back(name);
    report.pair_values.push_back(std::move(v));
  };
  add_col("psnr", p_psnr);
  add_col("ssim", p_ssim);
  add_col("sd", p_sd);
  add_col("frd", p_frd);
  return report;
}

std::vector<Tensor> generate_targets(const TrainState& state, const std::vector<PairedSample>& samples) {
  std::vector<Tensor> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    out.push_back(std::move(translate(state, s.x.tensor(), {s.c_y.tensor()}).front()));
  }
  return out;
}

MetricReport evaluate(const std::vector<PairedSample>& samples, const TrainState& state,
                      const FeatureExtractor& extractor, const EvalOptions& options) {
  std::vector<Tensor> real;
  for (const auto& s : samples) real.push_back(s.y.tensor());
  return evaluate_images(real, generate_targets(state, samples), &extractor, options);
}

Raster make_grid(const std::vector<PairedSample>& samples, const std::vector<Tensor>& outputs) {
  if (samples.size() != outputs.size() || samples.empty()) throw ValidationError("grid needs one output per sample");
  const int w = static_cast<int>(samples.front().x.width());
  const int h = static_cast<int>(samples.front().x.height());
  Raster grid;
  grid.width = 4 * w;
  grid.height = h * static_cast<int>(samples.size());
  grid.rgb.assign(static_cast<std::size_t>(grid.width) * grid.height * 3, 0);
  for (std::size_t r = 0; r < samples.size(); ++r) {
    const auto& s = samples[r];
    if (s.x.width() != w || s.x.height() != h) throw ValidationError("grid needs equally sized samples");
    const Raster panels[4] = {tensor_to_raster(s.x.tensor()), structure_raster(s.c_y.tensor()),
                              tensor_to_raster(outputs[r]), tensor_to_raster(s.y.tensor())};
    for (int p = 0; p < 4; ++p) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          for (int c = 0; c < 3; ++c) grid.at(static_cast<int>(r) * h + y, p * w + x, c) = panels[p].at(y, x, c);
        }
      }
    }
  }
  return grid;
}

}  // namespace unigan
