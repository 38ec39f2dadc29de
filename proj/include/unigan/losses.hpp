#pragma once

// Objective terms of the structure-guided translation model.
//
// Reduction: pixel losses are means over batch and spatial positions; the
// colour loss sums its three per-channel means. Generated images that a run
// does not produce are passed as undefined Vars and contribute nothing.

#include <functional>
#include <string>
#include <vector>

#include "unigan/autograd.hpp"
#include "unigan/networks.hpp"

namespace unigan {

using GeneratorFn = std::function<ag::Var(const ag::Var& image, const ag::Var& structure)>;
// Returns per-patch probabilities in (0, 1).
using DiscriminatorFn = std::function<ag::Var(const ag::Var& stacked)>;

inline constexpr Scalar kProbEps = 1e-7;

enum class Norm { L1, L2 };
enum class CycleCount { one, two };

std::string to_string(Norm norm);
Norm norm_from_string(const std::string& name);
std::string to_string(CycleCount cycles);
CycleCount cycle_count_from_string(const std::string& name);

struct LossWeights {
  Scalar lambda_color = 0;
  Scalar lambda_cyc = 0;
  Scalar lambda_con = 0;
  Scalar lambda_vgg = 0;
  Scalar lambda_tv = 0;
  Norm color_norm = Norm::L1;
  // Extra plain pixel term on y', weighted by lambda_color.
  bool plus_plain_l1 = false;
  bool plus_plain_l2 = false;
  CycleCount num_cycles = CycleCount::two;

  void validate() const;
};

struct LossReport {
  Scalar adv_g = 0;
  Scalar adv_d = 0;
  Scalar color = 0;
  Scalar pixel = 0;
  Scalar cyc = 0;
  Scalar con = 0;
  Scalar vgg = 0;
  Scalar tv = 0;
  Scalar total_g = 0;
  Scalar total_d = 0;

  static const std::vector<std::string>& field_names();
  std::vector<Scalar> values() const;
};

// ---------------------------------------------------------------------------
// Adversarial terms

// mean over patches of log(clamp(p, eps, 1 - eps)).
ag::Var mean_log_prob(const ag::Var& probs);
// mean over patches of log(1 - clamp(p, eps, 1 - eps)).
ag::Var mean_log_one_minus(const ag::Var& probs);

struct AdversarialInputs {
  ag::Var x, c_x, y, c_y;
  ag::Var y_prime;  // G(x, C_y)
  ag::Var x_prime;  // G(y, C_x); undefined when only one direction is trained
};

struct AdversarialTerms {
  ag::Var adv_g;  // non-saturating generator objective (minimised)
  ag::Var adv_d;  // -(sum of log-likelihood terms) / 2 (minimised by the discriminators)
  Scalar log_likelihood = 0;  // sum of the per-direction log-likelihood terms over discriminators
};

// Structure-guided discriminator sees concat(source, target structure, candidate);
// the plain one sees concat(source, candidate). Either may be null.
AdversarialTerms adversarial_terms(const DiscriminatorFn* d_struct, const DiscriminatorFn* d_plain,
                                   const AdversarialInputs& in);
ag::Var generator_adversarial(const DiscriminatorFn* d_struct, const DiscriminatorFn* d_plain,
                              const AdversarialInputs& in);
// Fakes should be detached by the caller when only discriminators are trained.
ag::Var discriminator_adversarial(const DiscriminatorFn* d_struct, const DiscriminatorFn* d_plain,
                                  const AdversarialInputs& in, Scalar* log_likelihood = nullptr);

// ---------------------------------------------------------------------------
// Pixel and feature terms

ag::Var l1_loss(const ag::Var& a, const ag::Var& b);
ag::Var l2_loss(const ag::Var& a, const ag::Var& b);
ag::Var pixel_loss(const ag::Var& a, const ag::Var& b, Norm norm);

// Sum over r, g, b of the per-channel mean norm, for y' vs y plus x' vs x.
ag::Var color_loss(const ag::Var& y_prime, const ag::Var& y, const ag::Var& x_prime, const ag::Var& x, Norm norm);

// L1(x, G(G(x, C_y), C_x)) [+ L1(y, G(G(y, C_x), C_y)) with two cycles].
ag::Var cycle_loss(const GeneratorFn& g, const ag::Var& x, const ag::Var& c_x, const ag::Var& y, const ag::Var& c_y,
                   CycleCount cycles = CycleCount::two);
// Same, reusing already generated y' and (for two cycles) x'.
ag::Var cycle_loss_from(const GeneratorFn& g, const ag::Var& x, const ag::Var& c_x, const ag::Var& y,
                        const ag::Var& c_y, const ag::Var& y_prime, const ag::Var& x_prime);

// L1(x, G(x, C_x)) + L1(y, G(y, C_y)).
ag::Var self_content_loss(const GeneratorFn& g, const ag::Var& x, const ag::Var& c_x, const ag::Var& y,
                          const ag::Var& c_y);

// Feature-space L1, each direction scaled by 1 / (W * H) of the tapped layer
// and averaged over the batch.
ag::Var perceptual_loss(const FeatureExtractor& extractor, const std::string& layer, const ag::Var& y,
                        const ag::Var& y_prime, const ag::Var& x, const ag::Var& x_prime);

// Sum of absolute forward differences along W and H over channels, averaged over the batch.
ag::Var tv_loss(const ag::Var& img);

// ---------------------------------------------------------------------------
// Composition

// Undefined members count as zero.
struct LossTerms {
  ag::Var adv_g, adv_d, color, pixel, cyc, con, vgg, tv;
};

// total_g = adv_g + l_color (color + pixel) + l_cyc cyc + l_con con + l_vgg vgg + l_tv tv.
ag::Var weighted_generator_total(const LossWeights& weights, const LossTerms& terms);

// Fills total_g/total_d from the parts; throws NumericError naming the first non-finite term.
LossReport total_objective(const LossWeights& weights, const LossReport& parts);

}  // namespace unigan
