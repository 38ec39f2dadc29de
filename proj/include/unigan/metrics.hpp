#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "unigan/tensor.hpp"

namespace unigan {

class FeatureExtractor;

// One feature vector per image; all rows share the same dimension.
using FeatureMatrix = std::vector<std::vector<Scalar>>;

void validate_features(const FeatureMatrix& f);

struct GaussianStats {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;

  // Mean and unbiased covariance (zero covariance for a single row).
  static GaussianStats from_features(const FeatureMatrix& f);
  // Symmetric to 1e-8 and eigenvalues >= -1e-8; throws NumericError otherwise.
  void validate() const;
};

using PointMetric = std::function<Scalar(Scalar, Scalar)>;

// Eiter-Mannila coupling distance between two scalar sequences.
Scalar discrete_frechet(std::span<const Scalar> a, std::span<const Scalar> b, const PointMetric& d = {});

// Mean per-pair discrete Frechet distance between index-aligned feature vectors,
// each read as a scalar sequence in coordinate order with d = |a - b|.
Scalar frd(const FeatureMatrix& real, const FeatureMatrix& gen);
std::vector<Scalar> frd_per_pair(const FeatureMatrix& real, const FeatureMatrix& gen);

// ||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2)).
Scalar fid(const GaussianStats& real, const GaussianStats& gen);

inline constexpr Scalar kMetricCapDb = 100.0;

// Inputs are on the [0, data_range] scale; see to_data_range.
Scalar psnr(const Tensor& a, const Tensor& b, Scalar data_range = 255.0);
// 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, valid windows only,
// averaged over windows, channels and batch.
Scalar ssim(const Tensor& a, const Tensor& b, Scalar data_range = 255.0);
// PSNR between the |dx| + |dy| forward-gradient maps.
Scalar sharpness_difference(const Tensor& a, const Tensor& b, Scalar data_range = 255.0);

// Maps [-1, 1] onto [0, data_range].
Tensor to_data_range(const Tensor& normalized, Scalar data_range);

// Feature file: "UGFT", u32 version, u64 rows, u64 dim, f32 LE row-major payload.
void write_features(const std::filesystem::path& path, const FeatureMatrix& f);
FeatureMatrix read_features(const std::filesystem::path& path);

}  // namespace unigan
