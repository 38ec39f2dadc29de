#include "unigan/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "unigan/config.hpp"

namespace unigan {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

void set_trainable(const ParameterList& params, bool on) {
  for (const auto& p : params) p.var.node()->requires_grad = on;
}

void zero_grads(const ParameterList& params) {
  for (const auto& p : params) p.var.zero_grad();
}

std::string format_row(std::int64_t step, std::int64_t epoch, const LossReport& r) {
  std::string row = std::to_string(step) + "," + std::to_string(epoch);
  char buf[32];
  for (auto v : r.values()) {
    std::snprintf(buf, sizeof buf, ",%.9g", v);
    row += buf;
  }
  return row;
}

std::string checkpoint_name(std::int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_%06lld.ugck", static_cast<long long>(step));
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// TrainConfig

void TrainConfig::apply_preset() {
  if (preset == Preset::custom) return;
  const LossWeights p = preset_weights(preset);
  weights.lambda_color = p.lambda_color;
  weights.lambda_cyc = p.lambda_cyc;
  weights.lambda_con = p.lambda_con;
  weights.lambda_vgg = p.lambda_vgg;
  weights.lambda_tv = p.lambda_tv;
}

void TrainConfig::validate() const {
  weights.validate();
  if (!(lr > 0) || !std::isfinite(lr)) throw ConfigError("lr must be > 0");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("betas must lie in [0, 1)");
  if (!(adam_eps > 0)) throw ConfigError("adam_eps must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1 && max_steps <= 0) throw ConfigError("epochs must be >= 1");
  if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
  if (checkpoint_interval < 0) throw ConfigError("checkpoint_interval must be >= 0");
  if (structure_channels < 1) throw ConfigError("structure_channels must be >= 1");
  if (augment.crop_jitter < 0) throw ConfigError("augment_crop_jitter must be >= 0");
  generator_config().validate();
  struct_disc_config().validate();
}

GeneratorConfig TrainConfig::generator_config() const {
  GeneratorConfig g;
  g.num_res_blocks = num_res_blocks;
  g.base_channels = gen_base_channels;
  g.structure_channels = structure_channels;
  g.use_structure = toggles().use_structure;
  return g;
}

DiscriminatorConfig TrainConfig::struct_disc_config() const {
  return {3 + structure_channels + 3, disc_base_channels, disc_num_downsamples};
}

DiscriminatorConfig TrainConfig::plain_disc_config() const { return {6, disc_base_channels, disc_num_downsamples}; }

std::unique_ptr<FeatureExtractor> make_extractor(const std::string& spec) {
  if (spec == "toy") return std::make_unique<ToyExtractor>();
  if (spec == "identity") return std::make_unique<IdentityExtractor>();
  return SequentialExtractor::load(spec);
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(const ParameterList& params, Scalar lr, Scalar beta1, Scalar beta2, Scalar eps)
    : params_(params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.var.shape(), 0.0);
    v_.emplace_back(p.var.shape(), 0.0);
  }
}

void Adam::step(std::int64_t t) {
  const Scalar c1 = 1.0 - std::pow(beta1_, static_cast<Scalar>(t));
  const Scalar c2 = 1.0 - std::pow(beta2_, static_cast<Scalar>(t));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& var = params_[i].var;
    if (!var.has_grad()) continue;
    Tensor& p = var.mutable_value();
    const Tensor& g = var.grad();
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = round_to_float(beta1_ * m[k] + (1.0 - beta1_) * g[k]);
      v[k] = round_to_float(beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k]);
      p[k] = round_to_float(p[k] - lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_));
    }
  }
}

void Adam::save(Container& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.tensors.emplace_back(prefix + "m." + params_[i].name, m_[i]);
    out.tensors.emplace_back(prefix + "v." + params_[i].name, v_[i]);
  }
}

void Adam::load(const Container& in, const std::string& prefix) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Tensor& m = in.tensor(prefix + "m." + params_[i].name);
    const Tensor& v = in.tensor(prefix + "v." + params_[i].name);
    if (m.shape() != m_[i].shape() || v.shape() != v_[i].shape()) {
      throw ValidationError("optimizer state shape mismatch for " + params_[i].name);
    }
    m_[i] = m;
    v_[i] = v;
  }
}

// ---------------------------------------------------------------------------
// TrainState

TrainState::TrainState(const TrainConfig& cfg) : cfg_(cfg), rng_(splitmix64(cfg.seed ^ 0x5EED)) {
  cfg_.validate();
  const ModelToggles t = cfg_.toggles();
  generator_ = std::make_unique<Generator>(cfg_.generator_config(), splitmix64(cfg_.seed * 4 + 1));
  adam_g_ = Adam(generator_->parameters(), cfg_.lr, cfg_.beta1, cfg_.beta2, cfg_.adam_eps);
  if (t.struct_disc) {
    struct_disc_ = std::make_unique<PatchDiscriminator>(cfg_.struct_disc_config(), splitmix64(cfg_.seed * 4 + 2));
    adam_ds_ = Adam(struct_disc_->parameters(), cfg_.lr, cfg_.beta1, cfg_.beta2, cfg_.adam_eps);
  }
  if (t.plain_disc) {
    plain_disc_ = std::make_unique<PatchDiscriminator>(cfg_.plain_disc_config(), splitmix64(cfg_.seed * 4 + 3));
    adam_dp_ = Adam(plain_disc_->parameters(), cfg_.lr, cfg_.beta1, cfg_.beta2, cfg_.adam_eps);
  }
  extractor_ = make_extractor(cfg_.extractor);
  layer_ = cfg_.perceptual_layer.empty() ? extractor_->default_layer() : cfg_.perceptual_layer;
  if (!extractor_->has_layer(layer_)) throw ConfigError("unknown perceptual layer '" + layer_ + "'");
}

Container TrainState::to_container() const {
  Container c;
  c.records["config"] = to_json(cfg_).dump();
  std::ostringstream rng_text;
  rng_text << rng_;
  c.records["state"] = nlohmann::json{{"step", step_}, {"rng", rng_text.str()}}.dump();
  append_parameters(c, "G.", generator_->parameters());
  adam_g_.save(c, "adam.G.");
  if (struct_disc_) {
    append_parameters(c, "DS.", struct_disc_->parameters());
    adam_ds_.save(c, "adam.DS.");
  }
  if (plain_disc_) {
    append_parameters(c, "DP.", plain_disc_->parameters());
    adam_dp_.save(c, "adam.DP.");
  }
  return c;
}

TrainState TrainState::from_container(const Container& c) {
  nlohmann::json cfg_json, state_json;
  try {
    cfg_json = nlohmann::json::parse(c.record("config"));
    state_json = nlohmann::json::parse(c.record("state"));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("corrupt checkpoint records: ") + e.what());
  }
  TrainState s(train_config_from_json(cfg_json));
  restore_parameters(c, "G.", s.generator_->parameters());
  s.adam_g_.load(c, "adam.G.");
  if (s.struct_disc_) {
    restore_parameters(c, "DS.", s.struct_disc_->parameters());
    s.adam_ds_.load(c, "adam.DS.");
  }
  if (s.plain_disc_) {
    restore_parameters(c, "DP.", s.plain_disc_->parameters());
    s.adam_dp_.load(c, "adam.DP.");
  }
  try {
    s.step_ = state_json.at("step").get<std::int64_t>();
    std::istringstream rng_text(state_json.at("rng").get<std::string>());
    rng_text >> s.rng_;
    if (!rng_text) throw LoadError("corrupt rng state in checkpoint");
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("corrupt checkpoint state: ") + e.what());
  }
  return s;
}

void TrainState::save(const std::filesystem::path& path) const { save_container(path, to_container()); }

TrainState TrainState::load(const std::filesystem::path& path) { return from_container(load_container(path)); }

// ---------------------------------------------------------------------------
// Step

LossReport train_step(TrainState& state, const Batch& batch) {
  if (batch.size() == 0) throw ValidationError("train_step needs a nonempty batch");
  const TrainConfig& cfg = state.cfg_;
  const ModelToggles t = cfg.toggles();
  const LossWeights& w = cfg.weights;
  const bool reverse = t.cycle && w.num_cycles == CycleCount::two;
  const bool plain_l1 = t.plain_l1 || w.plus_plain_l1;
  const bool plain_l2 = t.plain_l2 || w.plus_plain_l2;
  const Norm color_norm = t.color_norm == Norm::L2 ? Norm::L2 : w.color_norm;

  const Generator& gen = *state.generator_;
  GeneratorFn g = [&](const ag::Var& img, const ag::Var& s) {
    ++state.generator_calls_;
    return gen.forward(img, s);
  };
  DiscriminatorFn ds_fn, dp_fn;
  if (state.struct_disc_) ds_fn = [&](const ag::Var& v) { return state.struct_disc_->forward(v).probs; };
  if (state.plain_disc_) dp_fn = [&](const ag::Var& v) { return state.plain_disc_->forward(v).probs; };
  const DiscriminatorFn* ds = state.struct_disc_ ? &ds_fn : nullptr;
  const DiscriminatorFn* dp = state.plain_disc_ ? &dp_fn : nullptr;

  const auto x = ag::Var::constant(batch.x), c_x = ag::Var::constant(batch.c_x);
  const auto y = ag::Var::constant(batch.y), c_y = ag::Var::constant(batch.c_y);

  // Generator phase, discriminators frozen.
  ParameterList disc_params;
  if (state.struct_disc_) disc_params = state.struct_disc_->parameters();
  if (state.plain_disc_) {
    const auto& p = state.plain_disc_->parameters();
    disc_params.insert(disc_params.end(), p.begin(), p.end());
  }
  set_trainable(disc_params, false);

  LossReport report;
  ag::Var y_prime, x_prime;
  try {
    y_prime = g(x, c_y);
    if (reverse) x_prime = g(y, c_x);

    LossTerms terms;
    AdversarialInputs in{x, c_x, y, c_y, y_prime, x_prime};
    terms.adv_g = generator_adversarial(ds, dp, in);
    if (t.color_on_y || t.color_on_x) {
      terms.color = color_loss(t.color_on_y ? y_prime : ag::Var(), y, t.color_on_x ? x_prime : ag::Var(), x,
                               color_norm);
    }
    if (plain_l1) terms.pixel = l1_loss(y_prime, y);
    if (plain_l2) terms.pixel = terms.pixel.defined() ? terms.pixel + l2_loss(y_prime, y) : l2_loss(y_prime, y);
    if (t.cycle) terms.cyc = cycle_loss_from(g, x, c_x, y, c_y, y_prime, x_prime);
    if (t.self_content) terms.con = self_content_loss(g, x, c_x, y, c_y);
    if (t.perceptual) terms.vgg = perceptual_loss(*state.extractor_, state.layer_, y, y_prime, x, x_prime);
    if (t.tv) terms.tv = x_prime.defined() ? tv_loss(y_prime) + tv_loss(x_prime) : tv_loss(y_prime);

    auto val = [](const ag::Var& v) { return v.defined() ? v.value().item() : 0.0; };
    report.adv_g = val(terms.adv_g);
    report.color = val(terms.color);
    report.pixel = val(terms.pixel);
    report.cyc = val(terms.cyc);
    report.con = val(terms.con);
    report.vgg = val(terms.vgg);
    report.tv = val(terms.tv);
    report = total_objective(w, report);

    const ag::Var total = weighted_generator_total(w, terms);
    zero_grads(gen.parameters());
    ag::backward(total);
    state.adam_g_.step(state.step_ + 1);
  } catch (const TrainingDiverged&) {
    set_trainable(disc_params, true);
    throw;
  } catch (const NumericError& e) {
    set_trainable(disc_params, true);
    throw TrainingDiverged(e.what(), report);
  }
  set_trainable(disc_params, true);

  // Discriminator phase on the pre-update fakes; the generator is not in this graph.
  if (ds != nullptr || dp != nullptr) {
    AdversarialInputs in{x, c_x, y, c_y, y_prime.detach(), x_prime.defined() ? x_prime.detach() : ag::Var()};
    try {
      const ag::Var adv_d = discriminator_adversarial(ds, dp, in);
      report.adv_d = adv_d.value().item();
      report = total_objective(w, report);
      zero_grads(disc_params);
      ag::backward(adv_d);
    } catch (const NumericError& e) {
      throw TrainingDiverged(e.what(), report);
    }
    if (state.struct_disc_) state.adam_ds_.step(state.step_ + 1);
    if (state.plain_disc_) state.adam_dp_.step(state.step_ + 1);
  }
  ++state.step_;
  return report;
}

// ---------------------------------------------------------------------------
// Loop

std::int64_t total_steps(const TrainConfig& cfg, std::size_t num_samples) {
  if (cfg.max_steps > 0) return cfg.max_steps;
  const auto b = static_cast<std::size_t>(cfg.batch_size);
  return static_cast<std::int64_t>(cfg.epochs) * static_cast<std::int64_t>((num_samples + b - 1) / b);
}

TrainResult train(const std::vector<PairedSample>& data, TrainState& state, const TrainOptions& options) {
  if (data.empty()) throw ValidationError("training set is empty");
  const TrainConfig& cfg = state.config();
  BatchIterator it(data, static_cast<std::size_t>(cfg.batch_size), cfg.seed, cfg.augment, true);
  const auto per_epoch = static_cast<std::int64_t>(it.batches_per_epoch());
  const std::int64_t total = total_steps(cfg, data.size());

  const bool files = !options.out_dir.empty();
  std::ofstream log;
  if (files) {
    std::filesystem::create_directories(options.out_dir);
    if (options.write_log) {
      const auto path = options.out_dir / "train_log.csv";
      const bool append = state.step() > 0 && std::filesystem::exists(path);
      log.open(path, append ? std::ios::app : std::ios::trunc);
      if (!log) throw IoError("cannot open " + path.string());
      if (!append) {
        log << "step,epoch";
        for (const auto& name : LossReport::field_names()) log << ',' << name;
        log << '\n';
      }
    }
  }

  TrainResult result;
  std::int64_t cached_epoch = -1;
  std::vector<Batch> batches;
  while (state.step() < total) {
    const std::int64_t s = state.step();
    const std::int64_t epoch = s / per_epoch;
    if (epoch != cached_epoch) {
      batches = it.epoch(static_cast<std::uint64_t>(epoch));
      cached_epoch = epoch;
    }
    try {
      result.last = train_step(state, batches[static_cast<std::size_t>(s % per_epoch)]);
    } catch (const TrainingDiverged& e) {
      if (log.is_open()) log << format_row(s + 1, epoch, e.report()) << '\n' << std::flush;
      throw;
    }
    if (log.is_open()) {
      log << format_row(state.step(), epoch, result.last) << '\n';
      if (!log) throw IoError("failed writing training log");
    }
    if (options.on_step) options.on_step(state.step(), result.last);
    if (files && cfg.checkpoint_interval > 0 && state.step() % cfg.checkpoint_interval == 0 &&
        state.step() < total) {
      state.save(options.out_dir / checkpoint_name(state.step()));
    }
  }
  result.steps = state.step();
  if (files) {
    result.final_checkpoint = options.out_dir / "final.ugck";
    state.save(result.final_checkpoint);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Inference

std::vector<Tensor> translate(const TrainState& state, const Tensor& image, const std::vector<Tensor>& structures) {
  ImageTensor checked(image);
  const Generator& g = state.generator();
  const auto want_c = g.config().structure_channels;
  ag::NoGradGuard guard;
  const auto img = ag::Var::constant(image);
  std::vector<Tensor> out;
  out.reserve(structures.size());
  for (std::size_t i = 0; i < structures.size(); ++i) {
    const Tensor& s = structures[i];
    if (s.rank() != 4 || s.n() != image.n() || s.h() != image.h() || s.w() != image.w() || s.c() != want_c) {
      throw ValidationError("structure " + std::to_string(i) + " has shape " + shape_to_string(s.shape()) +
                            ", expected " + std::to_string(image.n()) + "x" + std::to_string(want_c) + "x" +
                            std::to_string(image.h()) + "x" + std::to_string(image.w()));
    }
    out.push_back(g.forward(img, ag::Var::constant(s)).value());
  }
  return out;
}

std::vector<Tensor> translate(const std::filesystem::path& checkpoint, const Tensor& image,
                              const std::vector<Tensor>& structures) {
  const TrainState state = TrainState::load(checkpoint);
  return translate(state, image, structures);
}

}  // namespace unigan
