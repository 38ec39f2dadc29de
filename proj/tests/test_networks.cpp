#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "support/oracles.hpp"
#include "unigan/checkpoint.hpp"
#include "unigan/errors.hpp"
#include "unigan/networks.hpp"

using namespace unigan;
using unigan::testing::random_tensor;

namespace {

GeneratorConfig small_generator() {
  GeneratorConfig g;
  g.num_res_blocks = 2;
  g.base_channels = 8;
  return g;
}

ag::Var image(std::mt19937_64& rng, std::int64_t side, std::int64_t channels = 3) {
  return ag::Var::constant(random_tensor(rng, {1, channels, side, side}));
}

}  // namespace

TEST_SUITE("networks") {
  TEST_CASE("generator preserves spatial size and stays in (-1, 1)") {
    std::mt19937_64 rng(1);
    const Generator g(small_generator(), 5);
    for (std::int64_t side : {16, 32}) {
      const Tensor out = g(image(rng, side), image(rng, side)).value();
      CHECK(out.shape() == Shape{1, 3, side, side});
      for (std::size_t i = 0; i < out.size(); ++i) CHECK(std::abs(out[i]) < 1.0);
    }
  }

  TEST_CASE("generator parameters are named uniquely and seeded deterministically") {
    const Generator a(small_generator(), 5), b(small_generator(), 5), c(small_generator(), 6);
    std::set<std::string> names;
    for (const auto& p : a.parameters()) names.insert(p.name);
    CHECK(names.size() == a.parameters().size());
    CHECK(names.count("stem.weight") == 1);
    CHECK(names.count("res1.conv2.bias") == 1);
    CHECK(names.count("head.weight") == 1);
    // Two stride-2 downsamples, two upsamples, 2 convs per residual block, stem and head.
    CHECK(a.parameters().size() == 2 * (1 + 2 + 2 * 2 + 2 + 1));
    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
      CHECK(max_abs_diff(a.parameters()[i].var.value(), b.parameters()[i].var.value()) == 0.0);
    }
    CHECK(max_abs_diff(a.parameters()[0].var.value(), c.parameters()[0].var.value()) > 0.0);
  }

  TEST_CASE("initial weights follow N(0, 0.02) and biases start at zero") {
    GeneratorConfig cfg;
    cfg.num_res_blocks = 1;
    cfg.base_channels = 16;
    const Generator g(cfg, 3);
    double sum = 0, sq = 0, n = 0;
    for (const auto& p : g.parameters()) {
      const Tensor& v = p.var.value();
      if (p.name.ends_with(".bias")) {
        CHECK(max_abs_diff(v, Tensor(v.shape())) == 0.0);
        continue;
      }
      for (std::size_t i = 0; i < v.size(); ++i) {
        sum += v[i];
        sq += v[i] * v[i];
        n += 1;
        CHECK(v[i] == round_to_float(v[i]));
      }
    }
    CHECK(std::abs(sum / n) < 1e-3);
    CHECK(std::sqrt(sq / n) == doctest::Approx(0.02).epsilon(0.03));
  }

  TEST_CASE("generator without structure ignores the structure input") {
    std::mt19937_64 rng(2);
    GeneratorConfig cfg = small_generator();
    cfg.use_structure = false;
    const Generator g(cfg, 1);
    const auto x = image(rng, 16);
    CHECK(max_abs_diff(g(x, image(rng, 16)).value(), g(x, {}).value()) == 0.0);
    CHECK(cfg.input_channels() == 3);
  }

  TEST_CASE("generator validation") {
    GeneratorConfig cfg;
    cfg.base_channels = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    const Generator g(small_generator(), 1);
    std::mt19937_64 rng(3);
    CHECK_THROWS_AS(g(image(rng, 18), image(rng, 18)), ShapeError);
    CHECK_THROWS_AS(g(image(rng, 16), image(rng, 16, 1)), ShapeError);
  }

  TEST_CASE("patch discriminator geometry") {
    const DiscriminatorConfig cfg;
    CHECK(cfg.receptive_field() == 70);
    CHECK(cfg.patch_grid(256) == 30);
    CHECK(cfg.patch_grid(64) == 6);
    DiscriminatorConfig small;
    small.base_channels = 4;
    const PatchDiscriminator d(small, 2);
    std::mt19937_64 rng(4);
    const PatchResponse r = d.forward(image(rng, 64, 6));
    CHECK(r.probs.shape() == Shape{1, 1, 6, 6});
    const Tensor& p = r.probs.value();
    double mean = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      CHECK(p[i] > 0.0);
      CHECK(p[i] < 1.0);
      mean += p[i];
    }
    CHECK(r.mean_score == doctest::Approx(mean / 36.0));
    CHECK(d.parameters().size() == 10);
  }

  TEST_CASE("toy extractor layer dims agree with extract") {
    const ToyExtractor e;
    std::mt19937_64 rng(5);
    const auto x = image(rng, 32);
    for (const auto& id : e.layer_ids()) {
      const LayerDims d = e.layer_dims(id, 32, 32);
      const auto s = e.extract(x, id).shape();
      CHECK(s[1] == d.channels);
      CHECK(s[2] == d.height);
      CHECK(s[3] == d.width);
    }
    CHECK(e.layer_dims("conv2", 32, 32).width == 16);
    CHECK_THROWS_AS(e.extract(x, "conv9"), ConfigError);
    CHECK_FALSE(e.has_layer("conv9"));
  }

  TEST_CASE("embed pools and flattens per sample") {
    const ToyExtractor e;
    std::mt19937_64 rng(6);
    const Tensor batch = random_tensor(rng, {3, 3, 32, 32});
    const auto rows = embed(e, batch, "conv2", 4);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].size() == 16 * 4 * 4);
    CHECK(embed(e, batch, "conv2").front().size() == 16 * 16 * 16);
    CHECK(embed(IdentityExtractor(), batch, "identity", 0).front().size() == 3 * 32 * 32);
  }

  TEST_CASE("sequential extractor reproduces the torch reference activations") {
    const auto extractor = SequentialExtractor::load(UNIGAN_TEST_DATA "/torch_extractor.ugck");
    const Container probe = load_container(UNIGAN_TEST_DATA "/torch_probe.ugck");
    const Tensor& input = probe.tensor("input");
    for (const auto& id : extractor->layer_ids()) {
      CAPTURE(id);
      const Tensor ours = extract_features(*extractor, input, id);
      const Tensor& ref = probe.tensor(id);
      REQUIRE(ours.shape() == ref.shape());
      double scale = 0;
      for (std::size_t i = 0; i < ref.size(); ++i) scale = std::max(scale, std::abs(ref[i]));
      CHECK(max_abs_diff(ours, ref) <= 1e-5 * std::max(scale, 1.0));
      const LayerDims d = extractor->layer_dims(id, input.h(), input.w());
      CHECK(d.channels == ref.c());
      CHECK(d.height == ref.h());
    }
    CHECK(extractor->default_layer() == extractor->layer_ids().back());
  }

  TEST_CASE("sequential extractor rejects malformed descriptions") {
    Container c;
    c.records["network"] = R"({"mean":[0,0,0],"std":[1,1,1],"layers":[{"id":"a","type":"softmax"}]})";
    CHECK_THROWS_AS(SequentialExtractor{c}, LoadError);
    c.records["network"] = "{";
    CHECK_THROWS_AS(SequentialExtractor{c}, LoadError);
  }

  TEST_CASE("parameters round-trip through a container") {
    const Generator a(small_generator(), 1), b(small_generator(), 2);
    Container c;
    append_parameters(c, "G.", a.parameters());
    restore_parameters(c, "G.", b.parameters());
    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
      CHECK(max_abs_diff(a.parameters()[i].var.value(), b.parameters()[i].var.value()) == 0.0);
    }
    GeneratorConfig wider = small_generator();
    wider.base_channels = 16;
    const Generator w(wider, 1);
    CHECK_THROWS_AS(restore_parameters(c, "G.", w.parameters()), ValidationError);
  }
}
