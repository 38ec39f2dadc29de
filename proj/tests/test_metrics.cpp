#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include <Eigen/QR>

#include "support/oracles.hpp"
#include "support/temp_dir.hpp"
#include "unigan/errors.hpp"
#include "unigan/metrics.hpp"

using namespace unigan;
using unigan::testing::brute_force_frechet;
using unigan::testing::random_tensor;

namespace {

FeatureMatrix gaussian_rows(std::mt19937_64& rng, int n, int d, double shift) {
  std::normal_distribution<double> n01;
  FeatureMatrix f(static_cast<std::size_t>(n), std::vector<Scalar>(static_cast<std::size_t>(d)));
  for (auto& r : f) {
    for (std::size_t j = 0; j < r.size(); ++j) r[j] = shift + n01(rng) * (1.0 + 0.5 * static_cast<double>(j));
  }
  return f;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("discrete Frechet matches brute force on random short sequences") {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> len(1, 5), small(-2, 2);
    std::uniform_real_distribution<Scalar> u(-1, 1);
    for (int i = 0; i < 200; ++i) {
      std::vector<Scalar> a(static_cast<std::size_t>(len(rng))), b(static_cast<std::size_t>(len(rng)));
      for (auto& v : a) v = i % 2 ? u(rng) : small(rng);
      for (auto& v : b) v = i % 2 ? u(rng) : small(rng);
      const double d = discrete_frechet(a, b);
      CHECK(d == brute_force_frechet(a, b));
      CHECK(d == discrete_frechet(b, a));
      CHECK(d >= std::max(std::abs(a.front() - b.front()), std::abs(a.back() - b.back())));
    }
  }

  TEST_CASE("discrete Frechet on hand cases") {
    const std::vector<Scalar> a{0, 1, 2}, b{0, 2};
    CHECK(discrete_frechet(a, b) == 1.0);
    const std::vector<Scalar> one{3};
    CHECK(discrete_frechet(one, a) == 3.0);
    CHECK(discrete_frechet(a, b, [](Scalar x, Scalar y) { return (x - y) * (x - y); }) == 1.0);
    CHECK_THROWS_AS(discrete_frechet(std::vector<Scalar>{}, a), ValidationError);
  }

  TEST_CASE("frd averages the per-pair distances") {
    const FeatureMatrix real{{0, 1, 2, 3}, {1, 1, 1, 1}};
    const FeatureMatrix gen{{0, 2, 2, 3}, {1, 1, 1, 4}};
    const double d0 = brute_force_frechet(real[0], gen[0]), d1 = brute_force_frechet(real[1], gen[1]);
    CHECK(frd(real, gen) == doctest::Approx((d0 + d1) / 2));
    CHECK(frd(real, gen) == frd(gen, real));
    CHECK(frd(real, real) == 0.0);
    CHECK(frd_per_pair(real, gen) == std::vector<Scalar>{d0, d1});
    CHECK_THROWS_AS(frd(real, FeatureMatrix{{0, 1, 2, 3}}), ValidationError);
  }

  TEST_CASE("fid closed forms") {
    GaussianStats a{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 1.0)};
    GaussianStats b{Eigen::VectorXd::Constant(1, 1.0), Eigen::MatrixXd::Constant(1, 1, 4.0)};
    CHECK(std::abs(fid(a, b) - 2.0) <= 1e-8);

    // Diagonal covariances: sum of per-coordinate (s1 - s2)^2 plus the mean gap.
    Eigen::VectorXd v1(3), v2(3), m1(3), m2(3);
    v1 << 1, 4, 9;
    v2 << 4, 1, 0.25;
    m1 << 0, 1, 2;
    m2 << 1, 1, 0;
    GaussianStats c{m1, v1.asDiagonal()}, d{m2, v2.asDiagonal()};
    double expected = (m1 - m2).squaredNorm();
    for (int i = 0; i < 3; ++i) expected += std::pow(std::sqrt(v1(i)) - std::sqrt(v2(i)), 2);
    CHECK(fid(c, d) == doctest::Approx(expected).epsilon(1e-10));
  }

  TEST_CASE("fid is zero on identical stats and invariant under rotation") {
    std::mt19937_64 rng(2);
    const auto s1 = GaussianStats::from_features(gaussian_rows(rng, 40, 5, 0.0));
    const auto s2 = GaussianStats::from_features(gaussian_rows(rng, 40, 5, 0.3));
    CHECK(std::abs(fid(s1, s1)) <= 1e-6);
    std::normal_distribution<double> n01;
    Eigen::MatrixXd m(5, 5);
    for (int i = 0; i < 25; ++i) m(i / 5, i % 5) = n01(rng);
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(m).householderQ();
    const GaussianStats r1{q * s1.mu, q * s1.sigma * q.transpose()}, r2{q * s2.mu, q * s2.sigma * q.transpose()};
    CHECK(std::abs(fid(s1, s2) - fid(r1, r2)) <= 1e-6);
    CHECK(fid(s1, s2) > 0);
  }

  TEST_CASE("gaussian stats use the unbiased covariance") {
    const FeatureMatrix f{{0, 0}, {2, 0}, {1, 3}};
    const auto s = GaussianStats::from_features(f);
    CHECK(s.mu(0) == doctest::Approx(1));
    CHECK(s.mu(1) == doctest::Approx(1));
    CHECK(s.sigma(0, 0) == doctest::Approx(1));
    CHECK(s.sigma(1, 1) == doctest::Approx(3));
    CHECK(GaussianStats::from_features({{1, 2}}).sigma.norm() == 0.0);
  }

  TEST_CASE("non-PSD covariance is a numeric error") {
    GaussianStats a{Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2)};
    GaussianStats b = a;
    b.sigma(1, 1) = -1;
    CHECK_THROWS_AS(fid(a, b), NumericError);
    b = a;
    b.sigma(0, 1) = 0.5;
    CHECK_THROWS_AS(b.validate(), NumericError);
    GaussianStats c{Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3)};
    CHECK_THROWS_AS(fid(a, c), ValidationError);
  }

  TEST_CASE("psnr closed form, cap and monotonicity") {
    std::mt19937_64 rng(3);
    const Tensor a = random_tensor(rng, {1, 3, 16, 16}, 0, 245);
    Tensor b = a;
    for (std::size_t i = 0; i < b.size(); ++i) b[i] += 10;
    CHECK(psnr(a, b) == doctest::Approx(10 * std::log10(255.0 * 255.0 / 100.0)).epsilon(1e-12));
    CHECK(std::abs(psnr(a, b) - 28.13) < 0.01);
    CHECK(psnr(a, a) == kMetricCapDb);
    double previous = kMetricCapDb;
    for (double amp : {1.0, 2.0, 5.0, 10.0, 30.0}) {
      std::mt19937_64 noise_rng(4);
      std::uniform_real_distribution<double> u(-1, 1);
      Tensor n = a;
      for (std::size_t i = 0; i < n.size(); ++i) n[i] += amp * u(noise_rng);
      const double p = psnr(a, n);
      CHECK(p < previous);
      previous = p;
    }
    CHECK(psnr(to_data_range(Tensor({1, 1, 4, 4}, 0.0), 2.0), to_data_range(Tensor({1, 1, 4, 4}, 0.1), 2.0), 2.0) ==
          doctest::Approx(10 * std::log10(4.0 / 0.01)));
    CHECK_THROWS_AS(psnr(a, Tensor({1, 3, 16, 8})), ValidationError);
  }

  TEST_CASE("ssim identities") {
    std::mt19937_64 rng(5);
    const Tensor a = random_tensor(rng, {2, 3, 24, 24}, 0, 255);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    Tensor neg = a;
    for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = 255 - a[i];
    const double s = ssim(a, neg);
    CHECK(s < 0);
    CHECK(s >= -1);
    const Tensor small = random_tensor(rng, {1, 1, 6, 6}, 0, 255);
    CHECK(ssim(small, small) == doctest::Approx(1.0));
  }

  TEST_CASE("sharpness difference ignores constant offsets") {
    std::mt19937_64 rng(6);
    const Tensor a = random_tensor(rng, {1, 3, 16, 16}, 0, 200);
    Tensor b = a;
    for (std::size_t i = 0; i < b.size(); ++i) b[i] += 10;
    CHECK(sharpness_difference(a, b) == kMetricCapDb);
    Tensor c = a;
    c.at(0, 0, 5, 5) += 50;
    CHECK(sharpness_difference(a, c) < kMetricCapDb);
  }

  TEST_CASE("feature files round-trip and reject bad headers") {
    unigan::testing::TempDir dir("features");
    const FeatureMatrix f{{0.5, -1.25, 3}, {2, 0, 1e-3f}};
    write_features(dir.path() / "f.ugft", f);
    const FeatureMatrix g = read_features(dir.path() / "f.ugft");
    REQUIRE(g.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t j = 0; j < 3; ++j) CHECK(g[i][j] == static_cast<double>(static_cast<float>(f[i][j])));
    }
    std::ofstream(dir.path() / "bad.ugft", std::ios::binary) << "NOPE1234";
    CHECK_THROWS_AS(read_features(dir.path() / "bad.ugft"), LoadError);
    CHECK_THROWS_AS(read_features(dir.path() / "none.ugft"), LoadError);
    CHECK_THROWS_AS(validate_features({{1, 2}, {1}}), ValidationError);
  }
}
