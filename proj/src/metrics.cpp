#include "unigan/metrics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

#include "unigan/errors.hpp"

namespace unigan {
namespace {

constexpr std::uint32_t kFeatureVersion = 1;
constexpr Scalar kSymmetryTol = 1e-8;
constexpr Scalar kEigenTol = 1e-8;
constexpr Scalar kRoundingFloor = 1e-15;
constexpr Scalar kClipTol = 1e-10;
constexpr Scalar kMseFloor = 1e-12;

void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
  if (a.shape() != b.shape()) {
    throw ValidationError(std::string(who) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                          shape_to_string(b.shape()));
  }
  if (a.rank() != 4) throw ValidationError(std::string(who) + ": expected NCHW tensors");
}

Scalar db(Scalar data_range, Scalar mse) {
  if (mse < kMseFloor) return kMetricCapDb;
  return std::min(kMetricCapDb, 10.0 * std::log10(data_range * data_range / mse));
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

std::vector<Scalar> gaussian_window(int size, Scalar sigma) {
  std::vector<Scalar> w(static_cast<std::size_t>(size));
  const Scalar c = (size - 1) / 2.0;
  Scalar total = 0;
  for (int i = 0; i < size; ++i) {
    w[static_cast<std::size_t>(i)] = std::exp(-(i - c) * (i - c) / (2 * sigma * sigma));
    total += w[static_cast<std::size_t>(i)];
  }
  for (auto& v : w) v /= total;
  return w;
}

// Valid separable filtering of one H x W plane.
std::vector<Scalar> filter_valid(const Scalar* src, std::int64_t h, std::int64_t w, const std::vector<Scalar>& k) {
  const auto ks = static_cast<std::int64_t>(k.size());
  const std::int64_t oh = h - ks + 1, ow = w - ks + 1;
  std::vector<Scalar> tmp(static_cast<std::size_t>(h * ow));
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < ow; ++x) {
      Scalar s = 0;
      for (std::int64_t i = 0; i < ks; ++i) s += k[static_cast<std::size_t>(i)] * src[y * w + x + i];
      tmp[static_cast<std::size_t>(y * ow + x)] = s;
    }
  }
  std::vector<Scalar> out(static_cast<std::size_t>(oh * ow));
  for (std::int64_t y = 0; y < oh; ++y) {
    for (std::int64_t x = 0; x < ow; ++x) {
      Scalar s = 0;
      for (std::int64_t i = 0; i < ks; ++i) s += k[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>((y + i) * ow + x)];
      out[static_cast<std::size_t>(y * ow + x)] = s;
    }
  }
  return out;
}

// |dx| + |dy| over the (H-1) x (W-1) region where both differences exist.
std::vector<Scalar> gradient_map(const Tensor& t) {
  const auto n = t.n(), c = t.c(), h = t.h(), w = t.w();
  std::vector<Scalar> out;
  out.reserve(static_cast<std::size_t>(n * c * (h - 1) * (w - 1)));
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      for (std::int64_t y = 0; y + 1 < h; ++y) {
        for (std::int64_t x = 0; x + 1 < w; ++x) {
          const Scalar v = t.at(i, ch, y, x);
          out.push_back(std::abs(t.at(i, ch, y, x + 1) - v) + std::abs(t.at(i, ch, y + 1, x) - v));
        }
      }
    }
  }
  return out;
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
std::uint64_t get_uint(const std::string& s, std::size_t pos, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
  return v;
}

}  // namespace

void validate_features(const FeatureMatrix& f) {
  if (f.empty()) throw ValidationError("feature matrix has no rows");
  const auto d = f.front().size();
  if (d == 0) throw ValidationError("feature vectors are empty");
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f[i].size() != d) throw ValidationError("feature row " + std::to_string(i) + " has a different dimension");
    for (auto v : f[i]) {
      if (!std::isfinite(v)) throw NumericError("feature row " + std::to_string(i) + " is not finite");
    }
  }
}

GaussianStats GaussianStats::from_features(const FeatureMatrix& f) {
  validate_features(f);
  const auto n = static_cast<Eigen::Index>(f.size());
  const auto d = static_cast<Eigen::Index>(f.front().size());
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = f[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  GaussianStats s;
  s.mu = x.colwise().mean().transpose();
  if (n > 1) {
    const Eigen::MatrixXd centered = x.rowwise() - s.mu.transpose();
    s.sigma = (centered.transpose() * centered) / static_cast<Scalar>(n - 1);
    s.sigma = 0.5 * (s.sigma + s.sigma.transpose());
  } else {
    s.sigma = Eigen::MatrixXd::Zero(d, d);
  }
  return s;
}

void GaussianStats::validate() const {
  if (sigma.rows() != mu.size() || sigma.cols() != mu.size()) throw ValidationError("covariance shape mismatch");
  if (!mu.allFinite() || !sigma.allFinite()) throw NumericError("gaussian statistics are not finite");
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > kSymmetryTol) {
    throw NumericError("covariance is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -kEigenTol) throw NumericError("covariance is not positive semidefinite");
}

Scalar discrete_frechet(std::span<const Scalar> a, std::span<const Scalar> b, const PointMetric& d) {
  if (a.empty() || b.empty()) throw ValidationError("discrete_frechet needs nonempty sequences");
  auto dist = [&](Scalar u, Scalar v) { return d ? d(u, v) : std::abs(u - v); };
  const std::size_t m = b.size();
  std::vector<Scalar> prev(m), cur(m);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const Scalar c = dist(a[i], b[j]);
      Scalar best;
      if (i == 0 && j == 0) {
        best = c;
      } else if (i == 0) {
        best = std::max(c, cur[j - 1]);
      } else if (j == 0) {
        best = std::max(c, prev[0]);
      } else {
        best = std::max(c, std::min({prev[j], cur[j - 1], prev[j - 1]}));
      }
      cur[j] = best;
    }
    std::swap(prev, cur);
  }
  return prev[m - 1];
}

std::vector<Scalar> frd_per_pair(const FeatureMatrix& real, const FeatureMatrix& gen) {
  if (real.size() != gen.size()) {
    throw ValidationError("frd needs equal counts, got " + std::to_string(real.size()) + " real and " +
                          std::to_string(gen.size()) + " generated");
  }
  validate_features(real);
  validate_features(gen);
  std::vector<Scalar> out(real.size());
  for (std::size_t i = 0; i < real.size(); ++i) out[i] = discrete_frechet(real[i], gen[i]);
  return out;
}

Scalar frd(const FeatureMatrix& real, const FeatureMatrix& gen) {
  const auto per = frd_per_pair(real, gen);
  Scalar s = 0;
  for (auto v : per) s += v;
  return s / static_cast<Scalar>(per.size());
}

Scalar fid(const GaussianStats& a, const GaussianStats& b) {
  a.validate();
  b.validate();
  if (a.mu.size() != b.mu.size()) throw ValidationError("fid: feature dimensions differ");
  // Tr((S1 S2)^(1/2)) = Tr((S1^(1/2) S2 S1^(1/2))^(1/2)), the latter symmetric PSD.
  const Eigen::MatrixXd r = psd_sqrt(a.sigma);
  Eigen::MatrixXd m = r * b.sigma * r;
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd& ev = es.eigenvalues();
  const Scalar scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  Scalar tr_sqrt = 0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -kClipTol * scale * static_cast<Scalar>(ev.size())) {
      throw NumericError("fid: covariance product has a significantly negative eigenvalue");
    }
    // Eigenvalues at rounding level are zeros of a rank-deficient product; their
    // square roots would otherwise add O(sqrt(eps)) each.
    if (ev(i) > kRoundingFloor * scale * static_cast<Scalar>(ev.size())) tr_sqrt += std::sqrt(ev(i));
  }
  const Scalar mean_term = (a.mu - b.mu).squaredNorm();
  return mean_term + a.sigma.trace() + b.sigma.trace() - 2.0 * tr_sqrt;
}

Scalar psnr(const Tensor& a, const Tensor& b, Scalar data_range) {
  require_same_shape(a, b, "psnr");
  Scalar mse = 0;
  for (std::size_t i = 0; i < a.size(); ++i) mse += (a[i] - b[i]) * (a[i] - b[i]);
  return db(data_range, mse / static_cast<Scalar>(a.size()));
}

Scalar ssim(const Tensor& a, const Tensor& b, Scalar data_range) {
  require_same_shape(a, b, "ssim");
  const auto h = a.h(), w = a.w();
  int size = 11;
  while (size > h || size > w) size -= 2;
  if (size < 1) throw ValidationError("ssim: image too small");
  const auto win = gaussian_window(size, 1.5);
  const Scalar c1 = (0.01 * data_range) * (0.01 * data_range);
  const Scalar c2 = (0.03 * data_range) * (0.03 * data_range);
  const std::size_t plane = static_cast<std::size_t>(h * w);
  Scalar total = 0;
  std::size_t count = 0;
  std::vector<Scalar> aa(plane), bb(plane), ab(plane);
  for (std::int64_t p = 0; p < a.n() * a.c(); ++p) {
    const Scalar* pa = a.data() + p * static_cast<std::int64_t>(plane);
    const Scalar* pb = b.data() + p * static_cast<std::int64_t>(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      aa[i] = pa[i] * pa[i];
      bb[i] = pb[i] * pb[i];
      ab[i] = pa[i] * pb[i];
    }
    const auto mu_a = filter_valid(pa, h, w, win), mu_b = filter_valid(pb, h, w, win);
    const auto s_aa = filter_valid(aa.data(), h, w, win), s_bb = filter_valid(bb.data(), h, w, win);
    const auto s_ab = filter_valid(ab.data(), h, w, win);
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const Scalar va = s_aa[i] - mu_a[i] * mu_a[i];
      const Scalar vb = s_bb[i] - mu_b[i] * mu_b[i];
      const Scalar cov = s_ab[i] - mu_a[i] * mu_b[i];
      total += ((2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2)) /
               ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
      ++count;
    }
  }
  return total / static_cast<Scalar>(count);
}

Scalar sharpness_difference(const Tensor& a, const Tensor& b, Scalar data_range) {
  require_same_shape(a, b, "sharpness_difference");
  if (a.h() < 2 || a.w() < 2) throw ValidationError("sharpness_difference: image too small");
  const auto ga = gradient_map(a), gb = gradient_map(b);
  Scalar mse = 0;
  for (std::size_t i = 0; i < ga.size(); ++i) mse += (ga[i] - gb[i]) * (ga[i] - gb[i]);
  return db(data_range, mse / static_cast<Scalar>(ga.size()));
}

Tensor to_data_range(const Tensor& normalized, Scalar data_range) {
  Tensor out(normalized.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (normalized[i] + 1.0) * 0.5 * data_range;
  return out;
}

void write_features(const std::filesystem::path& path, const FeatureMatrix& f) {
  validate_features(f);
  std::string out = "UGFT";
  put_u32(out, kFeatureVersion);
  put_u64(out, f.size());
  put_u64(out, f.front().size());
  for (const auto& row : f) {
    for (auto v : row) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot open " + path.string() + " for writing");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("failed writing " + path.string());
}

FeatureMatrix read_features(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw LoadError("cannot open " + path.string());
  const std::string s((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  if (s.size() < 24 || s.compare(0, 4, "UGFT") != 0) throw LoadError("not a feature file: " + path.string());
  if (get_uint(s, 4, 4) != kFeatureVersion) throw LoadError("unsupported feature file version in " + path.string());
  const auto n = get_uint(s, 8, 8), d = get_uint(s, 16, 8);
  if (n == 0 || d == 0 || (s.size() - 24) / 4 / d != n || (s.size() - 24) != n * d * 4) {
    throw LoadError("feature file size does not match its header: " + path.string());
  }
  FeatureMatrix f(n, std::vector<Scalar>(d));
  std::size_t pos = 24;
  for (auto& row : f) {
    for (auto& v : row) {
      v = std::bit_cast<float>(static_cast<std::uint32_t>(get_uint(s, pos, 4)));
      pos += 4;
    }
  }
  return f;
}

}  // namespace unigan
