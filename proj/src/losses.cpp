#include "unigan/losses.hpp"

#include <cmath>

#include "unigan/errors.hpp"

namespace unigan {
namespace {

ag::Var accumulate(const ag::Var& total, const ag::Var& term) {
  if (!term.defined()) return total;
  return total.defined() ? total + term : term;
}

ag::Var zero() { return ag::Var::constant(Tensor::scalar(0.0)); }

void check_finite(const ag::Var& probs, const char* who) {
  if (!probs.value().all_finite()) throw NumericError(std::string(who) + " produced non-finite probabilities");
}

// The log-likelihood of one direction for one discriminator:
// log D(real) + log(1 - D(fake)), patch-averaged.
struct Direction {
  ag::Var source, structure, real, fake;
};

ag::Var stacked(const ag::Var& source, const ag::Var& structure, const ag::Var& candidate, bool with_structure) {
  return with_structure ? ag::concat_channels({source, structure, candidate}) : ag::concat_channels({source, candidate});
}

std::vector<Direction> directions(const AdversarialInputs& in) {
  std::vector<Direction> out;
  out.push_back({in.x, in.c_y, in.y, in.y_prime});
  if (in.x_prime.defined()) out.push_back({in.y, in.c_x, in.x, in.x_prime});
  return out;
}

}  // namespace

std::string to_string(Norm norm) { return norm == Norm::L1 ? "L1" : "L2"; }

Norm norm_from_string(const std::string& name) {
  if (name == "L1" || name == "l1") return Norm::L1;
  if (name == "L2" || name == "l2") return Norm::L2;
  throw ConfigError("unknown norm '" + name + "' (expected L1 or L2)");
}

std::string to_string(CycleCount cycles) { return cycles == CycleCount::one ? "one" : "two"; }

CycleCount cycle_count_from_string(const std::string& name) {
  if (name == "one" || name == "1") return CycleCount::one;
  if (name == "two" || name == "2") return CycleCount::two;
  throw ConfigError("unknown cycle count '" + name + "' (expected one or two)");
}

void LossWeights::validate() const {
  const std::pair<const char*, Scalar> all[] = {{"lambda_color", lambda_color},
                                                {"lambda_cyc", lambda_cyc},
                                                {"lambda_con", lambda_con},
                                                {"lambda_vgg", lambda_vgg},
                                                {"lambda_tv", lambda_tv}};
  for (const auto& [name, v] : all) {
    if (!(v >= 0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be finite and >= 0");
  }
}

const std::vector<std::string>& LossReport::field_names() {
  static const std::vector<std::string> names = {"adv_g", "adv_d", "color", "pixel", "cyc",
                                                  "con",   "vgg",   "tv",    "total_g", "total_d"};
  return names;
}

std::vector<Scalar> LossReport::values() const {
  return {adv_g, adv_d, color, pixel, cyc, con, vgg, tv, total_g, total_d};
}

// ---------------------------------------------------------------------------
// Adversarial

ag::Var mean_log_prob(const ag::Var& probs) { return ag::mean(ag::log(ag::clamp(probs, kProbEps, 1.0 - kProbEps))); }

ag::Var mean_log_one_minus(const ag::Var& probs) {
  auto q = ag::add_scalar(ag::scale(ag::clamp(probs, kProbEps, 1.0 - kProbEps), -1.0), 1.0);
  return ag::mean(ag::log(q));
}

ag::Var generator_adversarial(const DiscriminatorFn* d_struct, const DiscriminatorFn* d_plain,
                              const AdversarialInputs& in) {
  ag::Var total;
  for (const auto& dir : directions(in)) {
    for (const auto* d : {d_struct, d_plain}) {
      if (d == nullptr) continue;
      auto p = (*d)(stacked(dir.source, dir.structure, dir.fake, d == d_struct));
      check_finite(p, "discriminator");
      total = accumulate(total, -mean_log_prob(p));
    }
  }
  return total.defined() ? total : zero();
}

ag::Var discriminator_adversarial(const DiscriminatorFn* d_struct, const DiscriminatorFn* d_plain,
                                  const AdversarialInputs& in, Scalar* log_likelihood) {
  ag::Var ll;
  for (const auto& dir : directions(in)) {
    for (const auto* d : {d_struct, d_plain}) {
      if (d == nullptr) continue;
      const bool with_structure = d == d_struct;
      auto real = (*d)(stacked(dir.source, dir.structure, dir.real, with_structure));
      auto fake = (*d)(stacked(dir.source, dir.structure, dir.fake, with_structure));
      check_finite(real, "discriminator");
      check_finite(fake, "discriminator");
      ll = accumulate(ll, mean_log_prob(real) + mean_log_one_minus(fake));
    }
  }
  if (!ll.defined()) ll = zero();
  if (log_likelihood != nullptr) *log_likelihood = ll.value().item();
  return ag::scale(ll, -0.5);
}

AdversarialTerms adversarial_terms(const DiscriminatorFn* d_struct, const DiscriminatorFn* d_plain,
                                   const AdversarialInputs& in) {
  AdversarialTerms t;
  t.adv_g = generator_adversarial(d_struct, d_plain, in);
  t.adv_d = discriminator_adversarial(d_struct, d_plain, in, &t.log_likelihood);
  return t;
}

// ---------------------------------------------------------------------------
// Pixel and feature terms

ag::Var l1_loss(const ag::Var& a, const ag::Var& b) { return ag::mean(ag::abs(a - b)); }

ag::Var l2_loss(const ag::Var& a, const ag::Var& b) { return ag::mean(ag::square(a - b)); }

ag::Var pixel_loss(const ag::Var& a, const ag::Var& b, Norm norm) {
  return norm == Norm::L1 ? l1_loss(a, b) : l2_loss(a, b);
}

ag::Var color_loss(const ag::Var& y_prime, const ag::Var& y, const ag::Var& x_prime, const ag::Var& x, Norm norm) {
  ag::Var total;
  auto direction = [&](const ag::Var& fake, const ag::Var& real) {
    if (!fake.defined()) return;
    if (fake.shape().size() != 4 || fake.shape()[1] != 3) {
      throw ShapeError("color_loss expects 3-channel images, got " + shape_to_string(fake.shape()));
    }
    for (std::int64_t c = 0; c < 3; ++c) {
      total = accumulate(total, pixel_loss(ag::slice_channels(fake, c, 1), ag::slice_channels(real, c, 1), norm));
    }
  };
  direction(y_prime, y);
  direction(x_prime, x);
  return total.defined() ? total : zero();
}

ag::Var cycle_loss_from(const GeneratorFn& g, const ag::Var& x, const ag::Var& c_x, const ag::Var& y,
                        const ag::Var& c_y, const ag::Var& y_prime, const ag::Var& x_prime) {
  ag::Var total = l1_loss(x, g(y_prime, c_x));
  if (x_prime.defined()) total = total + l1_loss(y, g(x_prime, c_y));
  return total;
}

ag::Var cycle_loss(const GeneratorFn& g, const ag::Var& x, const ag::Var& c_x, const ag::Var& y, const ag::Var& c_y,
                   CycleCount cycles) {
  const ag::Var y_prime = g(x, c_y);
  const ag::Var x_prime = cycles == CycleCount::two ? g(y, c_x) : ag::Var();
  return cycle_loss_from(g, x, c_x, y, c_y, y_prime, x_prime);
}

ag::Var self_content_loss(const GeneratorFn& g, const ag::Var& x, const ag::Var& c_x, const ag::Var& y,
                          const ag::Var& c_y) {
  return l1_loss(x, g(x, c_x)) + l1_loss(y, g(y, c_y));
}

ag::Var perceptual_loss(const FeatureExtractor& extractor, const std::string& layer, const ag::Var& y,
                        const ag::Var& y_prime, const ag::Var& x, const ag::Var& x_prime) {
  if (!extractor.has_layer(layer)) throw ConfigError("unknown feature layer '" + layer + "'");
  ag::Var total;
  auto direction = [&](const ag::Var& real, const ag::Var& fake) {
    if (!fake.defined()) return;
    const auto f_real = extractor.extract(real, layer);
    const auto f_fake = extractor.extract(fake, layer);
    const auto& s = f_fake.shape();
    // W_ij * H_ij of the tapped layer, times the batch for the expectation.
    const Scalar norm = static_cast<Scalar>(s[0] * s[2] * s[3]);
    total = accumulate(total, ag::scale(ag::sum(ag::abs(f_real - f_fake)), 1.0 / norm));
  };
  direction(y, y_prime);
  direction(x, x_prime);
  return total.defined() ? total : zero();
}

ag::Var tv_loss(const ag::Var& img) {
  if (img.shape().size() != 4) throw ShapeError("tv_loss expects an NCHW tensor");
  const Scalar n = static_cast<Scalar>(img.shape()[0]);
  ag::Var total = zero();
  if (img.shape()[3] > 1) total = total + ag::sum(ag::abs(ag::diff_w(img)));
  if (img.shape()[2] > 1) total = total + ag::sum(ag::abs(ag::diff_h(img)));
  return ag::scale(total, 1.0 / n);
}

// ---------------------------------------------------------------------------
// Composition

ag::Var weighted_generator_total(const LossWeights& w, const LossTerms& t) {
  ag::Var total = t.adv_g.defined() ? t.adv_g : zero();
  auto add = [&](const ag::Var& term, Scalar lambda) {
    if (term.defined() && lambda != 0) total = total + ag::scale(term, lambda);
  };
  add(t.color, w.lambda_color);
  add(t.pixel, w.lambda_color);
  add(t.cyc, w.lambda_cyc);
  add(t.con, w.lambda_con);
  add(t.vgg, w.lambda_vgg);
  add(t.tv, w.lambda_tv);
  return total;
}

LossReport total_objective(const LossWeights& w, const LossReport& parts) {
  const auto& names = LossReport::field_names();
  const auto vals = parts.values();
  for (std::size_t i = 0; i + 2 < vals.size(); ++i) {
    if (!std::isfinite(vals[i])) throw NumericError("loss term '" + names[i] + "' is not finite");
  }
  LossReport r = parts;
  r.total_g = parts.adv_g + w.lambda_color * (parts.color + parts.pixel) + w.lambda_cyc * parts.cyc +
              w.lambda_con * parts.con + w.lambda_vgg * parts.vgg + w.lambda_tv * parts.tv;
  r.total_d = parts.adv_d;
  return r;
}

}  // namespace unigan
