#pragma once

#include <string>
#include <utility>
#include <vector>

#include "unigan/data.hpp"
#include "unigan/metrics.hpp"
#include "unigan/networks.hpp"
#include "unigan/training.hpp"

namespace unigan {

const std::vector<std::string>& known_metrics();
// Comma-separated list; throws ConfigError naming any unknown metric.
std::vector<std::string> parse_metric_list(const std::string& csv);

struct EvalOptions {
  std::vector<std::string> metrics = known_metrics();
  Scalar data_range = 255.0;
  std::string layer;            // feature tap for fid/frd; empty: extractor default
  std::int64_t pool_grid = 4;   // spatial pooling of the tap before flattening
};

struct MetricReport {
  std::vector<std::pair<std::string, Scalar>> rows;
  std::vector<std::string> warnings;
  // Per-pair values for psnr/ssim/sd/frd, one vector per column.
  std::vector<std::string> pair_columns;
  std::vector<std::vector<Scalar>> pair_values;

  Scalar value(const std::string& metric) const;
  // "metric,value" header plus one row per metric.
  std::string to_csv() const;
  std::string pairs_to_csv() const;
};

// Images are normalised [-1, 1] tensors, index-aligned.
MetricReport evaluate_images(const std::vector<Tensor>& real, const std::vector<Tensor>& generated,
                             const FeatureExtractor* extractor, const EvalOptions& options = {});

// y' = G(x, C_y) for every sample, compared against y.
std::vector<Tensor> generate_targets(const TrainState& state, const std::vector<PairedSample>& samples);
MetricReport evaluate(const std::vector<PairedSample>& samples, const TrainState& state,
                      const FeatureExtractor& extractor, const EvalOptions& options = {});

// One row per sample: input x, structure C_y, output, ground truth y.
Raster make_grid(const std::vector<PairedSample>& samples, const std::vector<Tensor>& outputs);

}  // namespace unigan
